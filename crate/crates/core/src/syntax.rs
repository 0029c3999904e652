//! Terms and formulae of the finite fragment, with the `□_p` and `p̌`
//! connectives.
//!
//! Formula children are reference counted so that large sentences can share
//! subformulae. Every traversal here memoizes on child pointers, which keeps
//! DAG-shaped formulae cheap even when their tree unfolding is huge.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use hashbrown::HashMap;

use crate::heyting::{Elem, Heyting};
use crate::presheaf::{ConstId, FunId, RelId, Signature};

pub type Var = u32;

#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum Term {
    Var(Var),
    Const(ConstId),
    App(FunId, Vec<Term>),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Formula {
    Eq(Term, Term),
    Rel(RelId, Vec<Term>),
    Not(Arc<Formula>),
    Implies(Arc<Formula>, Arc<Formula>),
    And(Vec<Arc<Formula>>),
    Or(Vec<Arc<Formula>>),
    Forall(Vec<Var>, Arc<Formula>),
    Exists(Vec<Var>, Arc<Formula>),
    Box(Elem, Arc<Formula>),
    Check(Elem),
}

pub fn var(i: Var) -> Term {
    Term::Var(i)
}

impl Term {
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Var(v) => {
                out.insert(*v);
            }
            Term::Const(_) => {}
            Term::App(_, args) => args.iter().for_each(|a| a.vars(out)),
        }
    }

    pub fn consts(&self, out: &mut BTreeSet<ConstId>) {
        match self {
            Term::Var(_) => {}
            Term::Const(c) => {
                out.insert(*c);
            }
            Term::App(_, args) => args.iter().for_each(|a| a.consts(out)),
        }
    }

    /// Modified rank: variables 0, constants 1, applications one more than
    /// the sum of their arguments.
    pub fn mrank(&self) -> usize {
        match self {
            Term::Var(_) => 0,
            Term::Const(_) => 1,
            Term::App(_, args) => 1 + args.iter().map(Term::mrank).sum::<usize>(),
        }
    }

    pub fn rename(&self, f: &impl Fn(Var) -> Var) -> Term {
        match self {
            Term::Var(v) => Term::Var(f(*v)),
            Term::Const(c) => Term::Const(*c),
            Term::App(g, args) => Term::App(*g, args.iter().map(|a| a.rename(f)).collect()),
        }
    }
}

/// Quantifier degree and modified rank.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct RankPair {
    pub d: usize,
    pub r: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct Classification {
    pub unnested: bool,
    pub ceu: bool,
    pub pp: bool,
}

impl Formula {
    pub fn eq(a: Term, b: Term) -> Formula {
        Formula::Eq(a, b)
    }
    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Arc::new(f))
    }
    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Arc::new(a), Arc::new(b))
    }
    pub fn and(fs: Vec<Formula>) -> Formula {
        Formula::And(fs.into_iter().map(Arc::new).collect())
    }
    pub fn or(fs: Vec<Formula>) -> Formula {
        Formula::Or(fs.into_iter().map(Arc::new).collect())
    }
    pub fn forall(vs: Vec<Var>, f: Formula) -> Formula {
        Formula::Forall(vs, Arc::new(f))
    }
    pub fn exists(vs: Vec<Var>, f: Formula) -> Formula {
        Formula::Exists(vs, Arc::new(f))
    }
    pub fn boxed(p: Elem, f: Formula) -> Formula {
        Formula::Box(p, Arc::new(f))
    }
    /// `a <-> b`, sugar for the conjunction of both implications.
    pub fn iff(a: Formula, b: Formula) -> Formula {
        let (a, b) = (Arc::new(a), Arc::new(b));
        Formula::And(alloc::vec![
            Arc::new(Formula::Implies(a.clone(), b.clone())),
            Arc::new(Formula::Implies(b, a)),
        ])
    }
    pub fn top() -> Formula {
        Formula::And(Vec::new())
    }
    pub fn bottom() -> Formula {
        Formula::Or(Vec::new())
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Formula::Eq(..) | Formula::Rel(..))
    }

    /// Whether an atomic formula has one of the forms `v=v'`, `v=c`,
    /// `R(v̄)`, `v=f(v̄)`.
    pub fn is_unnested_atomic(&self) -> bool {
        match self {
            Formula::Eq(Term::Var(_), Term::Var(_)) | Formula::Eq(Term::Var(_), Term::Const(_)) => {
                true
            }
            Formula::Eq(Term::Var(_), Term::App(_, args)) => args.iter().all(Term::is_var),
            Formula::Rel(_, args) => args.iter().all(Term::is_var),
            _ => false,
        }
    }

    /// Calls `f` on each direct child, in order.
    pub fn each_child(&self, mut f: impl FnMut(&Arc<Formula>)) {
        match self {
            Formula::Not(g)
            | Formula::Forall(_, g)
            | Formula::Exists(_, g)
            | Formula::Box(_, g) => f(g),
            Formula::Implies(a, b) => {
                f(a);
                f(b);
            }
            Formula::And(gs) | Formula::Or(gs) => gs.iter().for_each(f),
            _ => {}
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        free_vars_memo(self, &mut HashMap::new())
    }

    pub fn consts(&self) -> BTreeSet<ConstId> {
        let mut out = BTreeSet::new();
        let mut seen = hashbrown::HashSet::new();
        consts_rec(self, &mut out, &mut seen);
        out
    }

    /// Largest variable index occurring anywhere, bound or free.
    pub fn max_var(&self) -> Option<Var> {
        let mut memo = HashMap::new();
        max_var_memo(self, &mut memo)
    }

    pub fn qdegree(&self) -> usize {
        rank_memo(self, &mut HashMap::new()).d
    }

    pub fn mrank(&self) -> usize {
        rank_memo(self, &mut HashMap::new()).r
    }

    pub fn ranks(&self) -> RankPair {
        rank_memo(self, &mut HashMap::new())
    }

    pub fn classify(&self) -> Classification {
        classify_memo(self, &mut HashMap::new())
    }

    /// Number of distinct nodes reachable through shared children.
    pub fn dag_size(&self) -> usize {
        let mut seen = hashbrown::HashSet::new();
        fn go(f: &Formula, seen: &mut hashbrown::HashSet<usize>) -> usize {
            let mut n = 1;
            f.each_child(|c| {
                if seen.insert(Arc::as_ptr(c) as usize) {
                    n += go(c, seen);
                }
            });
            n
        }
        go(self, &mut seen)
    }

    /// Renames every variable occurrence, bound ones included.
    pub fn rename(&self, f: &impl Fn(Var) -> Var) -> Formula {
        match self {
            Formula::Eq(a, b) => Formula::Eq(a.rename(f), b.rename(f)),
            Formula::Rel(r, args) => Formula::Rel(*r, args.iter().map(|a| a.rename(f)).collect()),
            Formula::Not(g) => Formula::Not(Arc::new(g.rename(f))),
            Formula::Implies(a, b) => {
                Formula::Implies(Arc::new(a.rename(f)), Arc::new(b.rename(f)))
            }
            Formula::And(gs) => Formula::And(gs.iter().map(|g| Arc::new(g.rename(f))).collect()),
            Formula::Or(gs) => Formula::Or(gs.iter().map(|g| Arc::new(g.rename(f))).collect()),
            Formula::Forall(vs, g) => {
                Formula::Forall(vs.iter().map(|&v| f(v)).collect(), Arc::new(g.rename(f)))
            }
            Formula::Exists(vs, g) => {
                Formula::Exists(vs.iter().map(|&v| f(v)).collect(), Arc::new(g.rename(f)))
            }
            Formula::Box(p, g) => Formula::Box(*p, Arc::new(g.rename(f))),
            Formula::Check(p) => Formula::Check(*p),
        }
    }

    /// Checks arities, algebra elements and quantifier lists.
    pub fn well_formed(&self, sig: &Signature, alg: &Heyting) -> Result<(), String> {
        fn term(t: &Term, sig: &Signature) -> Result<(), String> {
            match t {
                Term::Var(_) => Ok(()),
                Term::Const(c) => {
                    if sig.consts().any(|x| x == *c) {
                        Ok(())
                    } else {
                        Err(format!("unknown constant #{}", c.0))
                    }
                }
                Term::App(f, args) => {
                    if !sig.funs().any(|x| x == *f) {
                        return Err(format!("unknown function #{}", f.0));
                    }
                    if sig.fun_arity(*f) != args.len() {
                        return Err(format!(
                            "{} expects {} arguments, got {}",
                            sig.fun_name(*f),
                            sig.fun_arity(*f),
                            args.len()
                        ));
                    }
                    args.iter().try_for_each(|a| term(a, sig))
                }
            }
        }
        match self {
            Formula::Eq(a, b) => term(a, sig).and_then(|_| term(b, sig)),
            Formula::Rel(r, args) => {
                if !sig.rels().any(|x| x == *r) {
                    return Err(format!("unknown relation #{}", r.0));
                }
                if sig.rel_arity(*r) != args.len() {
                    return Err(format!(
                        "{} expects {} arguments, got {}",
                        sig.rel_name(*r),
                        sig.rel_arity(*r),
                        args.len()
                    ));
                }
                args.iter().try_for_each(|a| term(a, sig))
            }
            Formula::Forall(vs, g) | Formula::Exists(vs, g) => {
                let set: BTreeSet<&Var> = vs.iter().collect();
                if vs.is_empty() || set.len() != vs.len() {
                    return Err("quantifier needs a nonempty set of distinct variables".to_string());
                }
                g.well_formed(sig, alg)
            }
            Formula::Box(p, g) => {
                if !alg.contains(*p) {
                    return Err(format!("unknown algebra element #{}", p.0));
                }
                g.well_formed(sig, alg)
            }
            Formula::Check(p) => {
                if alg.contains(*p) {
                    Ok(())
                } else {
                    Err(format!("unknown algebra element #{}", p.0))
                }
            }
            _ => {
                let mut res = Ok(());
                self.each_child(|c| {
                    if res.is_ok() {
                        res = c.well_formed(sig, alg);
                    }
                });
                res
            }
        }
    }

    pub fn display<'a>(&'a self, sig: &'a Signature, alg: &'a Heyting) -> Printer<'a> {
        Printer { f: self, sig, alg }
    }
}

fn free_vars_memo(f: &Formula, memo: &mut HashMap<usize, BTreeSet<Var>>) -> BTreeSet<Var> {
    let child = |c: &Arc<Formula>, memo: &mut HashMap<usize, BTreeSet<Var>>| {
        let key = Arc::as_ptr(c) as usize;
        if let Some(s) = memo.get(&key) {
            return s.clone();
        }
        let s = free_vars_memo(c, memo);
        memo.insert(key, s.clone());
        s
    };
    let mut out = BTreeSet::new();
    match f {
        Formula::Eq(a, b) => {
            a.vars(&mut out);
            b.vars(&mut out);
        }
        Formula::Rel(_, args) => args.iter().for_each(|a| a.vars(&mut out)),
        Formula::Forall(vs, g) | Formula::Exists(vs, g) => {
            out = child(g, memo);
            for v in vs {
                out.remove(v);
            }
        }
        _ => {
            let mut kids = Vec::new();
            f.each_child(|c| kids.push(c.clone()));
            for c in &kids {
                out.extend(child(c, memo));
            }
        }
    }
    out
}

fn consts_rec(f: &Formula, out: &mut BTreeSet<ConstId>, seen: &mut hashbrown::HashSet<usize>) {
    match f {
        Formula::Eq(a, b) => {
            a.consts(out);
            b.consts(out);
        }
        Formula::Rel(_, args) => args.iter().for_each(|a| a.consts(out)),
        _ => f.each_child(|c| {
            if seen.insert(Arc::as_ptr(c) as usize) {
                consts_rec(c, out, seen);
            }
        }),
    }
}

fn max_var_memo(f: &Formula, memo: &mut HashMap<usize, Option<Var>>) -> Option<Var> {
    let mut out: Option<Var> = None;
    let mut bump = |v: Option<Var>| {
        if let Some(v) = v {
            out = Some(out.map_or(v, |o| o.max(v)));
        }
    };
    match f {
        Formula::Eq(..) | Formula::Rel(..) => {
            let mut s = BTreeSet::new();
            if let Formula::Eq(a, b) = f {
                a.vars(&mut s);
                b.vars(&mut s);
            }
            if let Formula::Rel(_, args) = f {
                args.iter().for_each(|a| a.vars(&mut s));
            }
            bump(s.last().copied());
        }
        _ => {
            if let Formula::Forall(vs, _) | Formula::Exists(vs, _) = f {
                bump(vs.iter().max().copied());
            }
            let mut kids = Vec::new();
            f.each_child(|c| kids.push(c.clone()));
            for c in kids {
                let key = Arc::as_ptr(&c) as usize;
                let v = match memo.get(&key) {
                    Some(v) => *v,
                    None => {
                        let v = max_var_memo(&c, memo);
                        memo.insert(key, v);
                        v
                    }
                };
                bump(v);
            }
        }
    }
    out
}

fn rank_memo(f: &Formula, memo: &mut HashMap<usize, RankPair>) -> RankPair {
    let mut child = |c: &Arc<Formula>| {
        let key = Arc::as_ptr(c) as usize;
        if let Some(r) = memo.get(&key) {
            return *r;
        }
        let r = rank_memo(c, memo);
        memo.insert(key, r);
        r
    };
    let max = |xs: &mut dyn Iterator<Item = RankPair>| {
        xs.fold(RankPair { d: 0, r: 0 }, |a, b| RankPair {
            d: a.d.max(b.d),
            r: a.r.max(b.r),
        })
    };
    match f {
        Formula::Eq(a, b) => RankPair {
            d: 0,
            r: (a.mrank() + b.mrank()).saturating_sub(1),
        },
        Formula::Rel(_, args) => RankPair {
            d: 0,
            r: args.iter().map(Term::mrank).sum(),
        },
        Formula::Check(_) => RankPair { d: 0, r: 0 },
        Formula::Not(g) | Formula::Box(_, g) => child(g),
        Formula::Implies(a, b) => {
            let (x, y) = (child(a), child(b));
            RankPair {
                d: x.d.max(y.d),
                r: x.r.max(y.r),
            }
        }
        Formula::And(gs) | Formula::Or(gs) => {
            let v: Vec<RankPair> = gs.iter().map(&mut child).collect();
            max(&mut v.into_iter())
        }
        Formula::Forall(_, g) | Formula::Exists(_, g) => {
            let x = child(g);
            RankPair {
                d: x.d + 1,
                r: x.r + 1,
            }
        }
    }
}

fn classify_memo(f: &Formula, memo: &mut HashMap<usize, Classification>) -> Classification {
    let mut child = |c: &Arc<Formula>| {
        let key = Arc::as_ptr(c) as usize;
        if let Some(r) = memo.get(&key) {
            return *r;
        }
        let r = classify_memo(c, memo);
        memo.insert(key, r);
        r
    };
    let all = |xs: Vec<Classification>| Classification {
        unnested: xs.iter().all(|c| c.unnested),
        ceu: xs.iter().all(|c| c.ceu),
        pp: xs.iter().all(|c| c.pp),
    };
    match f {
        Formula::Eq(..) | Formula::Rel(..) => {
            let u = f.is_unnested_atomic();
            Classification {
                unnested: u,
                ceu: u,
                pp: u,
            }
        }
        Formula::Check(_) => Classification {
            unnested: true,
            ceu: false,
            pp: false,
        },
        Formula::And(gs) => all(gs.iter().map(&mut child).collect()),
        Formula::Exists(_, g) => child(g),
        Formula::Box(_, g) => {
            let c = child(g);
            Classification {
                unnested: c.unnested,
                ceu: c.ceu,
                pp: false,
            }
        }
        Formula::Not(g) | Formula::Forall(_, g) => Classification {
            unnested: child(g).unnested,
            ceu: false,
            pp: false,
        },
        Formula::Implies(a, b) => {
            let (x, y) = (child(a), child(b));
            Classification {
                unnested: x.unnested && y.unnested,
                ceu: false,
                pp: false,
            }
        }
        Formula::Or(gs) => {
            let c = all(gs.iter().map(&mut child).collect());
            Classification {
                unnested: c.unnested,
                ceu: false,
                pp: false,
            }
        }
    }
}

/// The shape of a canonical unnested atomic formula.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum AtomKind {
    /// `v0 = v1`
    Eq,
    /// `v0 = c`
    Const(ConstId),
    /// `R(v0, …, v_{n-1})`
    Rel(RelId),
    /// `v_n = f(v0, …, v_{n-1})`
    Fun(FunId),
}

impl AtomKind {
    pub fn vars(self, sig: &Signature) -> usize {
        match self {
            AtomKind::Eq => 2,
            AtomKind::Const(_) => 1,
            AtomKind::Rel(r) => sig.rel_arity(r),
            AtomKind::Fun(f) => sig.fun_arity(f) + 1,
        }
    }

    /// The formula with variable `i` replaced by `v_{map[i]}`.
    pub fn instance(self, sig: &Signature, map: &[usize]) -> Formula {
        let v = |i: usize| Term::Var(map[i] as Var);
        match self {
            AtomKind::Eq => Formula::Eq(v(0), v(1)),
            AtomKind::Const(c) => Formula::Eq(v(0), Term::Const(c)),
            AtomKind::Rel(r) => Formula::Rel(r, (0..sig.rel_arity(r)).map(v).collect()),
            AtomKind::Fun(f) => {
                let n = sig.fun_arity(f);
                Formula::Eq(v(n), Term::App(f, (0..n).map(v).collect()))
            }
        }
    }
}

/// One per symbol, in a fixed order: equality, constants, relations,
/// functions.
pub fn canonical_atomics(sig: &Signature) -> Vec<AtomKind> {
    let mut out = alloc::vec![AtomKind::Eq];
    out.extend(sig.consts().map(AtomKind::Const));
    out.extend(sig.rels().map(AtomKind::Rel));
    out.extend(sig.funs().map(AtomKind::Fun));
    out
}

/// All index maps `k → n` in lexicographic order.
pub fn index_maps(k: usize, n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return if k == 0 {
            alloc::vec![Vec::new()]
        } else {
            Vec::new()
        };
    }
    let mut out = Vec::new();
    let mut cur = alloc::vec![0usize; k];
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < n {
                break;
            }
            cur[i] = 0;
        }
    }
}

/// Canonical unnested atomics paired with every index map into a tuple of
/// length `tuple_len`.
pub fn enumerate_unnested_atomics(
    sig: &Signature,
    tuple_len: usize,
) -> Vec<(AtomKind, Vec<usize>)> {
    let mut out = Vec::new();
    for a in canonical_atomics(sig) {
        for m in index_maps(a.vars(sig), tuple_len) {
            out.push((a, m));
        }
    }
    out
}

pub struct Printer<'a> {
    f: &'a Formula,
    sig: &'a Signature,
    alg: &'a Heyting,
}

impl Printer<'_> {
    fn term(&self, t: &Term, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match t {
            Term::Var(v) => write!(out, "v{v}"),
            Term::Const(c) => out.write_str(self.sig.const_name(*c)),
            Term::App(f, args) => {
                write!(out, "{}(", self.sig.fun_name(*f))?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.write_str(", ")?;
                    }
                    self.term(a, out)?;
                }
                out.write_char(')')
            }
        }
    }

    fn vars(vs: &[Var], out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.write_char('{')?;
        for (i, v) in vs.iter().enumerate() {
            if i > 0 {
                out.write_char(' ')?;
            }
            write!(out, "v{v}")?;
        }
        out.write_char('}')
    }

    fn formula(&self, f: &Formula, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match f {
            Formula::Eq(a, b) => {
                self.term(a, out)?;
                out.write_str(" = ")?;
                self.term(b, out)
            }
            Formula::Rel(r, args) => {
                write!(out, "{}(", self.sig.rel_name(*r))?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.write_str(", ")?;
                    }
                    self.term(a, out)?;
                }
                out.write_char(')')
            }
            Formula::Not(g) => {
                out.write_char('~')?;
                self.formula(g, out)
            }
            Formula::Implies(a, b) => {
                out.write_char('(')?;
                self.formula(a, out)?;
                out.write_str(" -> ")?;
                self.formula(b, out)?;
                out.write_char(')')
            }
            Formula::And(gs) | Formula::Or(gs) => {
                out.write_str(if matches!(f, Formula::And(_)) {
                    "/\\{"
                } else {
                    "\\/{"
                })?;
                for (i, g) in gs.iter().enumerate() {
                    if i > 0 {
                        out.write_str("; ")?;
                    }
                    self.formula(g, out)?;
                }
                out.write_char('}')
            }
            Formula::Forall(vs, g) | Formula::Exists(vs, g) => {
                out.write_str(if matches!(f, Formula::Forall(..)) {
                    "forall "
                } else {
                    "exists "
                })?;
                Self::vars(vs, out)?;
                out.write_char(' ')?;
                self.formula(g, out)
            }
            Formula::Box(p, g) => {
                write!(out, "[{}] ", self.alg.name(*p))?;
                self.formula(g, out)
            }
            Formula::Check(p) => write!(out, "<{}>", self.alg.name(*p)),
        }
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.formula(self.f, out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

/// Parses the formula grammar. Variables `vN` keep index `N`; any other
/// variable name gets the next index above every `vN` in the text.
pub fn parse_formula(text: &str, sig: &Signature, alg: &Heyting) -> Result<Formula, ParseError> {
    let mut p = Parser {
        s: text,
        pos: 0,
        sig,
        alg,
        names: Vec::new(),
        next: 0,
    };
    p.next = p.prescan();
    let f = p.formula()?;
    p.ws();
    if p.pos < p.s.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(f)
}

/// Parses a term with the same variable conventions as [`parse_formula`].
pub fn parse_term(text: &str, sig: &Signature) -> Result<Term, ParseError> {
    let alg = Heyting::omega2();
    let mut p = Parser {
        s: text,
        pos: 0,
        sig,
        alg: &alg,
        names: Vec::new(),
        next: 0,
    };
    p.next = p.prescan();
    let t = p.term()?;
    p.ws();
    if p.pos < p.s.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(t)
}

struct Parser<'a> {
    s: &'a str,
    pos: usize,
    sig: &'a Signature,
    alg: &'a Heyting,
    names: Vec<(String, Var)>,
    next: Var,
}

fn ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

fn numbered_var(name: &str) -> Option<Var> {
    let digits = name.strip_prefix('v')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

impl<'a> Parser<'a> {
    fn prescan(&self) -> Var {
        let mut max: Option<Var> = None;
        for word in self.s.split(|c: char| !ident_char(c)) {
            if let Some(n) = numbered_var(word) {
                max = Some(max.map_or(n, |m| m.max(n)));
            }
        }
        max.map_or(0, |m| m + 1)
    }

    fn err(&self, msg: &str) -> ParseError {
        ParseError {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn ws(&mut self) {
        let r = self.rest();
        self.pos += r.len() - r.trim_start().len();
    }

    fn peek(&mut self, tok: &str) -> bool {
        self.ws();
        self.rest().starts_with(tok)
    }

    fn eat(&mut self, tok: &str) -> bool {
        if self.peek(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{tok}`")))
        }
    }

    fn ident(&mut self) -> Result<&'a str, ParseError> {
        self.ws();
        let r = self.rest();
        let len = r.find(|c: char| !ident_char(c)).unwrap_or(r.len());
        if len == 0 {
            return Err(self.err("expected an identifier"));
        }
        self.pos += len;
        Ok(&r[..len])
    }

    fn until(&mut self, close: char) -> Result<&'a str, ParseError> {
        let r = self.rest();
        let end = r
            .find(close)
            .ok_or_else(|| self.err(&format!("missing `{close}`")))?;
        self.pos += end + close.len_utf8();
        Ok(r[..end].trim())
    }

    fn elem(&self, name: &str) -> Result<Elem, ParseError> {
        self.alg
            .elem(name)
            .ok_or_else(|| self.err(&format!("unknown algebra element `{name}`")))
    }

    fn variable(&mut self, name: &str) -> Var {
        if let Some(n) = numbered_var(name) {
            return n;
        }
        if let Some((_, v)) = self.names.iter().find(|(n, _)| n == name) {
            return *v;
        }
        let v = self.next;
        self.next += 1;
        self.names.push((name.to_string(), v));
        v
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let a = self.implication()?;
        if self.eat("<->") {
            let b = self.implication()?;
            return Ok(Formula::iff(a, b));
        }
        Ok(a)
    }

    fn implication(&mut self) -> Result<Formula, ParseError> {
        let a = self.disjunction()?;
        if self.eat("->") {
            let b = self.implication()?;
            return Ok(Formula::implies(a, b));
        }
        Ok(a)
    }

    fn disjunction(&mut self) -> Result<Formula, ParseError> {
        let mut parts = alloc::vec![self.conjunction()?];
        while self.peek("\\/") && !self.rest()[2..].trim_start().starts_with('{') {
            self.pos += 2;
            parts.push(self.conjunction()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::or(parts)
        })
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut parts = alloc::vec![self.unary()?];
        while self.peek("/\\") && !self.rest()[2..].trim_start().starts_with('{') {
            self.pos += 2;
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::and(parts)
        })
    }

    fn var_set(&mut self) -> Result<Vec<Var>, ParseError> {
        self.expect("{")?;
        let mut vs = Vec::new();
        while !self.eat("}") {
            let name = self.ident()?;
            vs.push(self.variable(name));
        }
        if vs.is_empty() {
            return Err(self.err("empty quantifier block"));
        }
        Ok(vs)
    }

    fn keyword(&mut self, kw: &str) -> bool {
        self.ws();
        let r = self.rest();
        if r.starts_with(kw) && !r[kw.len()..].starts_with(ident_char) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if self.eat("~") {
            return Ok(Formula::not(self.unary()?));
        }
        if self.keyword("forall") {
            let vs = self.var_set()?;
            return Ok(Formula::forall(vs, self.unary()?));
        }
        if self.keyword("exists") {
            let vs = self.var_set()?;
            return Ok(Formula::exists(vs, self.unary()?));
        }
        if self.eat("[") {
            let name = self.until(']')?;
            let p = self.elem(name)?;
            return Ok(Formula::boxed(p, self.unary()?));
        }
        self.primary()
    }

    fn list(&mut self) -> Result<Vec<Formula>, ParseError> {
        self.expect("{")?;
        let mut out = Vec::new();
        if self.eat("}") {
            return Ok(out);
        }
        loop {
            out.push(self.formula()?);
            if self.eat("}") {
                return Ok(out);
            }
            self.expect(";")?;
        }
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        if self.eat("(") {
            let f = self.formula()?;
            self.expect(")")?;
            return Ok(f);
        }
        if self.eat("/\\") {
            return Ok(Formula::and(self.list()?));
        }
        if self.eat("\\/") {
            return Ok(Formula::or(self.list()?));
        }
        if self.eat("<") {
            let name = self.until('>')?;
            return Ok(Formula::Check(self.elem(name)?));
        }
        let save = self.pos;
        let name = self.ident()?;
        if let Some(r) = self.sig.rel(name) {
            if self.eat("(") {
                let args = self.args()?;
                let k = self.sig.rel_arity(r);
                if args.len() != k {
                    return Err(
                        self.err(&format!("{name} expects {k} arguments, got {}", args.len()))
                    );
                }
                return Ok(Formula::Rel(r, args));
            }
        }
        self.pos = save;
        let a = self.term()?;
        self.expect("=")?;
        let b = self.term()?;
        Ok(Formula::Eq(a, b))
    }

    fn args(&mut self) -> Result<Vec<Term>, ParseError> {
        let mut out = Vec::new();
        if self.eat(")") {
            return Ok(out);
        }
        loop {
            out.push(self.term()?);
            if self.eat(")") {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let name = self.ident()?;
        if let Some(f) = self.sig.fun(name) {
            self.expect("(")?;
            let args = self.args()?;
            let k = self.sig.fun_arity(f);
            if args.len() != k {
                return Err(self.err(&format!("{name} expects {k} arguments, got {}", args.len())));
            }
            return Ok(Term::App(f, args));
        }
        if let Some(c) = self.sig.constant(name) {
            return Ok(Term::Const(c));
        }
        if self.sig.rel(name).is_some() || name == "forall" || name == "exists" {
            return Err(self.err(&format!("`{name}` cannot be used as a term")));
        }
        Ok(Term::Var(self.variable(name)))
    }
}

impl fmt::Display for RankPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d={} r={}", self.d, self.r)
    }
}

/// Renders a formula with every shared subformula bound once as `#n`.
pub fn print_shared(f: &Formula, sig: &Signature, alg: &Heyting) -> String {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    fn count(f: &Formula, counts: &mut HashMap<usize, usize>) {
        f.each_child(|c| {
            let e = counts.entry(Arc::as_ptr(c) as usize).or_insert(0);
            *e += 1;
            if *e == 1 {
                count(c, counts);
            }
        });
    }
    count(f, &mut counts);
    let mut names: HashMap<usize, usize> = HashMap::new();
    let mut defs: Vec<String> = Vec::new();
    let root = shared_rec(f, sig, alg, &counts, &mut names, &mut defs);
    let mut out = String::new();
    for (i, d) in defs.iter().enumerate() {
        let _ = writeln!(out, "#{i} := {d}");
    }
    out.push_str(&root);
    out
}

fn shared_rec(
    f: &Formula,
    sig: &Signature,
    alg: &Heyting,
    counts: &HashMap<usize, usize>,
    names: &mut HashMap<usize, usize>,
    defs: &mut Vec<String>,
) -> String {
    let child = |c: &Arc<Formula>, names: &mut HashMap<usize, usize>, defs: &mut Vec<String>| {
        let key = Arc::as_ptr(c) as usize;
        if counts.get(&key).copied().unwrap_or(0) > 1 && !c.is_atomic() {
            if let Some(i) = names.get(&key) {
                return format!("#{i}");
            }
            let body = shared_rec(c, sig, alg, counts, names, defs);
            defs.push(body);
            names.insert(key, defs.len() - 1);
            return format!("#{}", defs.len() - 1);
        }
        shared_rec(c, sig, alg, counts, names, defs)
    };
    let vars = |vs: &[Var]| {
        let parts: Vec<String> = vs.iter().map(|v| format!("v{v}")).collect();
        format!("{{{}}}", parts.join(" "))
    };
    match f {
        Formula::Eq(..) | Formula::Rel(..) | Formula::Check(_) => f.display(sig, alg).to_string(),
        Formula::Not(g) => format!("~{}", child(g, names, defs)),
        Formula::Implies(a, b) => {
            let x = child(a, names, defs);
            format!("({} -> {})", x, child(b, names, defs))
        }
        Formula::And(gs) | Formula::Or(gs) => {
            let parts: Vec<String> = gs.iter().map(|g| child(g, names, defs)).collect();
            let op = if matches!(f, Formula::And(_)) {
                "/\\"
            } else {
                "\\/"
            };
            format!("{}{{{}}}", op, parts.join("; "))
        }
        Formula::Forall(vs, g) => format!("forall {} {}", vars(vs), child(g, names, defs)),
        Formula::Exists(vs, g) => format!("exists {} {}", vars(vs), child(g, names, defs)),
        Formula::Box(p, g) => format!("[{}] {}", alg.name(*p), child(g, names, defs)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig() -> Signature {
        let mut s = Signature::new();
        s.add_rel("R", 1).unwrap();
        s.add_fun("f", 1).unwrap();
        s.add_const("c").unwrap();
        s.add_const("d").unwrap();
        s
    }

    #[test]
    fn degree_counts_blocks() {
        let s = sig();
        let a = Heyting::omega2();
        let f = parse_formula("exists {x y} x = y", &s, &a).unwrap();
        assert_eq!(f.qdegree(), 1);
        let g = parse_formula("exists {x} exists {y} x = y", &s, &a).unwrap();
        assert_eq!(g.qdegree(), 2);
    }

    #[test]
    fn modified_rank_charges_terms() {
        let s = sig();
        let a = Heyting::omega2();
        assert_eq!(parse_formula("f(c) = v0", &s, &a).unwrap().mrank(), 1);
        assert_eq!(parse_formula("c = d", &s, &a).unwrap().mrank(), 1);
        assert_eq!(parse_formula("v0 = v1", &s, &a).unwrap().mrank(), 0);
    }

    #[test]
    fn box_parses() {
        let s = sig();
        let a = Heyting::chain3();
        let f = parse_formula("[m](v0 = c)", &s, &a).unwrap();
        let m = a.elem("m").unwrap();
        let c = s.constant("c").unwrap();
        assert_eq!(
            f,
            Formula::boxed(m, Formula::Eq(Term::Var(0), Term::Const(c)))
        );
    }

    #[test]
    fn check_is_not_ceu() {
        let s = sig();
        let a = Heyting::chain3();
        let f = parse_formula("[m] /\\{v0 = v1}", &s, &a).unwrap();
        let c = f.classify();
        assert!(c.unnested && c.ceu && !c.pp);
        assert_eq!(
            parse_formula("<m>", &s, &a).unwrap().ranks(),
            RankPair { d: 0, r: 0 }
        );
    }

    #[test]
    fn unnested_atomics_listing() {
        let mut s = Signature::new();
        s.add_rel("R", 1).unwrap();
        let l = enumerate_unnested_atomics(&s, 1);
        assert_eq!(l.len(), 2);
        let e = enumerate_unnested_atomics(&Signature::new(), 2);
        assert_eq!(e.len(), 4);
    }

    #[test]
    fn named_variables_avoid_numbered_ones() {
        let s = sig();
        let a = Heyting::omega2();
        let f = parse_formula("exists {x} x = v3", &s, &a).unwrap();
        assert_eq!(
            f,
            Formula::exists(alloc::vec![4], Formula::Eq(Term::Var(4), Term::Var(3)))
        );
    }
}
