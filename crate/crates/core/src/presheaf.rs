//! Presheaves over a finite Heyting algebra and L-structures on them.
//!
//! A [`Structure`] stores its closed carrier densely: every section has an
//! extent, a restriction row, an equality row, and every relation and
//! function is tabulated on all tuples of the carrier.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::heyting::{Elem, Heyting};

/// A section of one structure's closed carrier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Sec(pub u16);

impl Sec {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct RelId(pub u16);
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct FunId(pub u16);
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ConstId(pub u16);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SignatureError {
    #[error("symbol `{0}` is declared twice")]
    Duplicate(String),
    #[error("function `{0}` must have positive arity")]
    NullaryFunction(String),
}

/// Relation, function and constant symbols with arities.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Signature {
    rels: Vec<(String, usize)>,
    funs: Vec<(String, usize)>,
    consts: Vec<String>,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    fn taken(&self, name: &str) -> bool {
        self.rels.iter().any(|r| r.0 == name)
            || self.funs.iter().any(|f| f.0 == name)
            || self.consts.iter().any(|c| c == name)
    }

    pub fn add_rel(&mut self, name: &str, arity: usize) -> Result<RelId, SignatureError> {
        if self.taken(name) {
            return Err(SignatureError::Duplicate(name.to_string()));
        }
        self.rels.push((name.to_string(), arity));
        Ok(RelId(self.rels.len() as u16 - 1))
    }

    pub fn add_fun(&mut self, name: &str, arity: usize) -> Result<FunId, SignatureError> {
        if self.taken(name) {
            return Err(SignatureError::Duplicate(name.to_string()));
        }
        if arity == 0 {
            return Err(SignatureError::NullaryFunction(name.to_string()));
        }
        self.funs.push((name.to_string(), arity));
        Ok(FunId(self.funs.len() as u16 - 1))
    }

    pub fn add_const(&mut self, name: &str) -> Result<ConstId, SignatureError> {
        if self.taken(name) {
            return Err(SignatureError::Duplicate(name.to_string()));
        }
        self.consts.push(name.to_string());
        Ok(ConstId(self.consts.len() as u16 - 1))
    }

    pub fn rel(&self, name: &str) -> Option<RelId> {
        self.rels
            .iter()
            .position(|r| r.0 == name)
            .map(|i| RelId(i as u16))
    }
    pub fn fun(&self, name: &str) -> Option<FunId> {
        self.funs
            .iter()
            .position(|r| r.0 == name)
            .map(|i| FunId(i as u16))
    }
    pub fn constant(&self, name: &str) -> Option<ConstId> {
        self.consts
            .iter()
            .position(|r| r == name)
            .map(|i| ConstId(i as u16))
    }

    pub fn rel_name(&self, r: RelId) -> &str {
        &self.rels[r.0 as usize].0
    }
    pub fn rel_arity(&self, r: RelId) -> usize {
        self.rels[r.0 as usize].1
    }
    pub fn fun_name(&self, f: FunId) -> &str {
        &self.funs[f.0 as usize].0
    }
    pub fn fun_arity(&self, f: FunId) -> usize {
        self.funs[f.0 as usize].1
    }
    pub fn const_name(&self, c: ConstId) -> &str {
        &self.consts[c.0 as usize]
    }

    pub fn rels(&self) -> impl Iterator<Item = RelId> + '_ {
        (0..self.rels.len() as u16).map(RelId)
    }
    pub fn funs(&self) -> impl Iterator<Item = FunId> + '_ {
        (0..self.funs.len() as u16).map(FunId)
    }
    pub fn consts(&self) -> impl Iterator<Item = ConstId> + '_ {
        (0..self.consts.len() as u16).map(ConstId)
    }

    pub fn is_relational(&self) -> bool {
        self.funs.is_empty() && self.consts.is_empty()
    }

    /// Largest number of variables in an unnested atomic formula.
    pub fn max_atomic_vars(&self) -> usize {
        let r = self.rels.iter().map(|r| r.1).max().unwrap_or(0);
        let f = self.funs.iter().map(|f| f.1 + 1).max().unwrap_or(0);
        r.max(f).max(2)
    }
}

/// The law a structure fails, phrased in the usual terminology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Law {
    ExtentOfRestriction,
    RestrictionToExtent,
    RestrictionComposes,
    EqualityValue,
    Separation,
    RelationBounded,
    RelationRestriction,
    RelationExtensional,
    FunctionExtent,
    FunctionRestriction,
    FunctionExtensional,
    FunctionTotal,
    ConstantGlobal,
}

impl Law {
    pub fn describe(self) -> &'static str {
        match self {
            Law::ExtentOfRestriction => "presheaf law E(a↾p)=Ea∧p",
            Law::RestrictionToExtent => "presheaf law a↾Ea=a",
            Law::RestrictionComposes => "presheaf law (a↾p)↾q=a↾(p∧q)",
            Law::EqualityValue => "equality law [a=b]=⋁{p : a↾p=b↾p}",
            Law::Separation => "separation law [a=b]=Ea=Eb implies a=b",
            Law::RelationBounded => "characteristic function law R(ā)≤Eā",
            Law::RelationRestriction => "characteristic function law R(ā↾p)=R(ā)∧p",
            Law::RelationExtensional => "characteristic function law [ā=b̄]∧R(ā)≤R(b̄)",
            Law::FunctionExtent => "function law Ef(ā)=Eā",
            Law::FunctionRestriction => "function law f(ā↾p)=f(ā)↾p",
            Law::FunctionExtensional => "function law [ā=b̄]≤[f(ā)=f(b̄)]",
            Law::FunctionTotal => "function law: f defined on every tuple",
            Law::ConstantGlobal => "strict constant law E𝔠=⊤",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LawViolation {
    pub law: Law,
    pub witness: String,
}

impl fmt::Display for LawViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} fails at {}", self.law.describe(), self.witness)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StructureError {
    #[error("{0}")]
    Law(LawViolation),
    #[error("unknown section `{0}`")]
    UnknownSection(String),
    #[error("unknown algebra element `{0}`")]
    UnknownElement(String),
    #[error("duplicate section `{0}`")]
    DuplicateSection(String),
    #[error("`{0}` expects {1} arguments, got {2}")]
    Arity(String, usize, usize),
    #[error("constant `{0}` has no interpretation")]
    MissingConstant(String),
    #[error("carrier too large ({0} sections)")]
    TooLarge(usize),
    #[error("structures live over different algebras or signatures")]
    Mismatch,
}

impl From<LawViolation> for StructureError {
    fn from(v: LawViolation) -> Self {
        StructureError::Law(v)
    }
}

/// `gen` or `gen↾at`, by generator position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SecRef {
    pub gen: usize,
    pub at: Option<Elem>,
}

impl SecRef {
    pub fn gen(gen: usize) -> Self {
        SecRef { gen, at: None }
    }
    pub fn at(gen: usize, p: Elem) -> Self {
        SecRef { gen, at: Some(p) }
    }
}

/// How relation values given on a few tuples are extended to the carrier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RelationFill {
    /// Propagate along restrictions only; anything else is ⊥ and must pass
    /// validation.
    #[default]
    Strict,
    /// Take the least characteristic function above the given values.
    Close,
}

#[derive(Clone, Debug)]
pub struct StructureBuilder {
    name: String,
    alg: Arc<Heyting>,
    sig: Arc<Signature>,
    gens: Vec<(String, Elem)>,
    idents: Vec<(SecRef, SecRef)>,
    rels: Vec<(RelId, Vec<SecRef>, Elem)>,
    funs: Vec<(FunId, Vec<SecRef>, SecRef)>,
    consts: Vec<(ConstId, SecRef)>,
    lax_constants: bool,
    fill: RelationFill,
}

impl StructureBuilder {
    pub fn new(name: &str, alg: Arc<Heyting>, sig: Arc<Signature>) -> Self {
        StructureBuilder {
            name: name.to_string(),
            alg,
            sig,
            gens: Vec::new(),
            idents: Vec::new(),
            rels: Vec::new(),
            funs: Vec::new(),
            consts: Vec::new(),
            lax_constants: false,
            fill: RelationFill::Strict,
        }
    }

    pub fn lax_constants(mut self, lax: bool) -> Self {
        self.lax_constants = lax;
        self
    }

    pub fn relation_fill(mut self, fill: RelationFill) -> Self {
        self.fill = fill;
        self
    }

    pub fn section(&mut self, name: &str, extent: Elem) -> Result<usize, StructureError> {
        if self.gens.iter().any(|g| g.0 == name) {
            return Err(StructureError::DuplicateSection(name.to_string()));
        }
        self.gens.push((name.to_string(), extent));
        Ok(self.gens.len() - 1)
    }

    pub fn generator(&self, name: &str) -> Option<usize> {
        self.gens.iter().position(|g| g.0 == name)
    }

    pub fn identify(&mut self, a: SecRef, b: SecRef) {
        self.idents.push((a, b));
    }

    pub fn rel(&mut self, r: RelId, args: Vec<SecRef>, value: Elem) -> Result<(), StructureError> {
        let k = self.sig.rel_arity(r);
        if args.len() != k {
            return Err(StructureError::Arity(
                self.sig.rel_name(r).to_string(),
                k,
                args.len(),
            ));
        }
        self.rels.push((r, args, value));
        Ok(())
    }

    pub fn fun(
        &mut self,
        f: FunId,
        args: Vec<SecRef>,
        value: SecRef,
    ) -> Result<(), StructureError> {
        let k = self.sig.fun_arity(f);
        if args.len() != k {
            return Err(StructureError::Arity(
                self.sig.fun_name(f).to_string(),
                k,
                args.len(),
            ));
        }
        self.funs.push((f, args, value));
        Ok(())
    }

    pub fn constant(&mut self, c: ConstId, value: SecRef) {
        self.consts.push((c, value));
    }

    pub fn build(&self) -> Result<Structure, StructureError> {
        let mut s =
            close_under_restriction(&self.name, &self.alg, &self.sig, &self.gens, &self.idents)?;
        let resolve = |r: &SecRef| s.resolve(*r);
        let rels: Vec<(RelId, Vec<Sec>, Elem)> = self
            .rels
            .iter()
            .map(|(r, a, v)| (*r, a.iter().map(resolve).collect(), *v))
            .collect();
        let funs: Vec<(FunId, Vec<Sec>, Sec)> = self
            .funs
            .iter()
            .map(|(f, a, v)| (*f, a.iter().map(resolve).collect(), resolve(v)))
            .collect();
        let mut consts = vec![None; self.sig.consts.len()];
        for (c, v) in &self.consts {
            consts[c.0 as usize] = Some(resolve(v));
        }
        for r in self.sig.rels() {
            let given: Vec<(Vec<Sec>, Elem)> = rels
                .iter()
                .filter(|x| x.0 == r)
                .map(|x| (x.1.clone(), x.2))
                .collect();
            let table = match self.fill {
                RelationFill::Strict => s.propagate_relation(r, &given)?,
                RelationFill::Close => s.close_relation(r, &given),
            };
            s.rels.push(table);
        }
        for f in self.sig.funs() {
            let given: Vec<(Vec<Sec>, Sec)> = funs
                .iter()
                .filter(|x| x.0 == f)
                .map(|x| (x.1.clone(), x.2))
                .collect();
            let table = s.propagate_function(f, &given)?;
            s.funs.push(table);
        }
        for c in self.sig.consts() {
            match consts[c.0 as usize] {
                Some(v) => s.consts.push(v),
                None => {
                    return Err(StructureError::MissingConstant(
                        self.sig.const_name(c).to_string(),
                    ))
                }
            }
        }
        s.lax = self.lax_constants;
        if let Some(v) = s.validate().into_iter().next() {
            return Err(v.into());
        }
        Ok(s)
    }
}

/// A finite L-structure in presheaves over a finite Heyting algebra.
#[derive(Clone)]
pub struct Structure {
    name: String,
    alg: Arc<Heyting>,
    sig: Arc<Signature>,
    owner: u32,
    lax: bool,
    labels: Vec<String>,
    gen_names: Vec<String>,
    gen_secs: Vec<Sec>,
    extent: Vec<Elem>,
    restrict: Vec<Sec>,
    eq: Vec<Elem>,
    rels: Vec<Vec<Elem>>,
    funs: Vec<Vec<Sec>>,
    consts: Vec<Sec>,
}

impl fmt::Debug for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Structure")
            .field("name", &self.name)
            .field("sections", &self.labels)
            .finish()
    }
}

/// Raw restricted generators, merged under declared identifications,
/// downward congruence and separation.
fn close_under_restriction(
    name: &str,
    alg: &Arc<Heyting>,
    sig: &Arc<Signature>,
    gens: &[(String, Elem)],
    idents: &[(SecRef, SecRef)],
) -> Result<Structure, StructureError> {
    let m = alg.size();
    let mut node_of = vec![usize::MAX; gens.len() * m];
    let mut nodes: Vec<(usize, Elem)> = Vec::new();
    for (g, (_, e)) in gens.iter().enumerate() {
        nodes.push((g, *e));
        node_of[g * m + e.index()] = nodes.len() - 1;
        for q in alg.elements().rev() {
            if q != *e && alg.leq(q, *e) {
                nodes.push((g, q));
                node_of[g * m + q.index()] = nodes.len() - 1;
            }
        }
    }
    let node = |g: usize, q: Elem| node_of[g * m + q.index()];
    let mut uf = UnionFind::new(nodes.len());
    let raw_extent = |r: &SecRef| match r.at {
        Some(p) => alg.meet(gens[r.gen].1, p),
        None => gens[r.gen].1,
    };
    for (a, b) in idents {
        let (ea, eb) = (raw_extent(a), raw_extent(b));
        if ea != eb {
            return Err(LawViolation {
                law: Law::ExtentOfRestriction,
                witness: format!(
                    "identification {} = {} (extents {} and {})",
                    raw_label(alg, gens, a),
                    raw_label(alg, gens, b),
                    alg.name(ea),
                    alg.name(eb)
                ),
            }
            .into());
        }
        uf.union(node(a.gen, ea), node(b.gen, eb));
    }
    let mut by_extent: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, (_, q)) in nodes.iter().enumerate() {
        by_extent[q.index()].push(i);
    }
    loop {
        let mut changed = false;
        for group in &by_extent {
            for (i, &x) in group.iter().enumerate() {
                for &y in &group[i + 1..] {
                    let (g, q) = nodes[x];
                    let h = nodes[y].0;
                    if uf.find(x) == uf.find(y) {
                        for r in alg.down(q) {
                            changed |= uf.union(node(g, r), node(h, r));
                        }
                    } else {
                        let agree = alg.big_join(
                            alg.down(q)
                                .filter(|&r| uf.find(node(g, r)) == uf.find(node(h, r))),
                        );
                        if agree == q {
                            changed |= uf.union(x, y);
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut class_sec = vec![usize::MAX; nodes.len()];
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..nodes.len() {
        let root = uf.find(i);
        if class_sec[root] == usize::MAX {
            class_sec[root] = reps.len();
            reps.push(i);
        }
    }
    let n = reps.len();
    if n > u16::MAX as usize {
        return Err(StructureError::TooLarge(n));
    }
    let sec_of = |uf: &mut UnionFind, i: usize| Sec(class_sec[uf.find(i)] as u16);
    let mut extent = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut restrict = vec![Sec(0); n * m];
    for (s, &i) in reps.iter().enumerate() {
        let (g, q) = nodes[i];
        extent.push(q);
        labels.push(raw_label(
            alg,
            gens,
            &SecRef {
                gen: g,
                at: (q != gens[g].1).then_some(q),
            },
        ));
        for p in alg.elements() {
            restrict[s * m + p.index()] = sec_of(&mut uf, node(g, alg.meet(q, p)));
        }
    }
    let gen_secs = (0..gens.len())
        .map(|g| sec_of(&mut uf, node(g, gens[g].1)))
        .collect();
    let mut s = Structure {
        name: name.to_string(),
        alg: alg.clone(),
        sig: sig.clone(),
        owner: 0,
        lax: false,
        labels,
        gen_names: gens.iter().map(|g| g.0.clone()).collect(),
        gen_secs,
        extent,
        restrict,
        eq: Vec::new(),
        rels: Vec::new(),
        funs: Vec::new(),
        consts: Vec::new(),
    };
    s.eq = s.compute_eq();
    Ok(s)
}

fn raw_label(alg: &Heyting, gens: &[(String, Elem)], r: &SecRef) -> String {
    match r.at {
        Some(p) if p != gens[r.gen].1 => format!("{}|{}", gens[r.gen].0, alg.name(p)),
        _ => gens[r.gen].0.clone(),
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // Keep the smaller root so the first raw node names the class.
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.0[hi] = lo;
        true
    }
}

/// Odometer over all `k`-tuples of `0..n`.
#[derive(Clone, Debug)]
pub struct Tuples {
    n: u16,
    cur: Vec<Sec>,
    done: bool,
}

impl Tuples {
    pub fn new(n: usize, k: usize) -> Self {
        Tuples {
            n: n as u16,
            cur: vec![Sec(0); k],
            done: n == 0 && k > 0,
        }
    }
}

impl Iterator for Tuples {
    type Item = Vec<Sec>;
    fn next(&mut self) -> Option<Vec<Sec>> {
        if self.done {
            return None;
        }
        let out = self.cur.clone();
        let mut i = self.cur.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.cur[i].0 += 1;
            if self.cur[i].0 < self.n {
                break;
            }
            self.cur[i].0 = 0;
        }
        Some(out)
    }
}

impl Structure {
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn set_name(&mut self, name: &str) {
        self.name = name.to_string();
    }
    pub fn algebra(&self) -> &Arc<Heyting> {
        &self.alg
    }
    pub fn signature(&self) -> &Arc<Signature> {
        &self.sig
    }
    pub fn owner(&self) -> u32 {
        self.owner
    }
    pub fn lax_constants(&self) -> bool {
        self.lax
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.extent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.extent.is_empty()
    }

    pub fn sections(&self) -> impl DoubleEndedIterator<Item = Sec> + Clone {
        (0..self.extent.len() as u16).map(Sec)
    }

    pub fn label(&self, s: Sec) -> &str {
        &self.labels[s.index()]
    }

    pub fn generators(&self) -> &[Sec] {
        &self.gen_secs
    }

    /// Looks up `g` or `g|p` by generator and element name.
    pub fn section(&self, text: &str) -> Result<Sec, StructureError> {
        let (g, p) = match text.split_once('|') {
            Some((g, p)) => (g.trim(), Some(p.trim())),
            None => (text.trim(), None),
        };
        let gi = self
            .gen_names
            .iter()
            .position(|x| x == g)
            .ok_or_else(|| StructureError::UnknownSection(g.to_string()))?;
        let base = self.gen_secs[gi];
        match p {
            None => Ok(base),
            Some(p) => {
                let e = self
                    .alg
                    .elem(p)
                    .ok_or_else(|| StructureError::UnknownElement(p.to_string()))?;
                Ok(self.restrict(base, e))
            }
        }
    }

    pub fn resolve(&self, r: SecRef) -> Sec {
        let base = self.gen_secs[r.gen];
        match r.at {
            Some(p) => self.restrict(base, p),
            None => base,
        }
    }

    #[inline]
    pub fn extent(&self, s: Sec) -> Elem {
        self.extent[s.index()]
    }

    #[inline]
    pub fn restrict(&self, s: Sec, p: Elem) -> Sec {
        self.restrict[s.index() * self.alg.size() + p.index()]
    }

    /// Ω-valued equality `[a=b]`.
    #[inline]
    pub fn eq(&self, a: Sec, b: Sec) -> Elem {
        self.eq[a.index() * self.len() + b.index()]
    }

    pub fn tuple_extent(&self, t: &[Sec]) -> Elem {
        self.alg.big_meet(t.iter().map(|&s| self.extent(s)))
    }

    pub fn restrict_tuple(&self, t: &[Sec], p: Elem) -> Vec<Sec> {
        t.iter().map(|&s| self.restrict(s, p)).collect()
    }

    /// `[ā=b̄]` as the meet of componentwise equalities (⊤ on empty tuples).
    pub fn tuple_eq(&self, a: &[Sec], b: &[Sec]) -> Elem {
        self.alg
            .big_meet(a.iter().zip(b).map(|(&x, &y)| self.eq(x, y)))
    }

    /// Sections with extent exactly `p`.
    pub fn sections_at(&self, p: Elem) -> impl Iterator<Item = Sec> + '_ {
        self.sections().filter(move |&s| self.extent(s) == p)
    }

    /// Sections with extent below `p`.
    pub fn sections_below(&self, p: Elem) -> impl Iterator<Item = Sec> + '_ {
        self.sections()
            .filter(move |&s| self.alg.leq(self.extent(s), p))
    }

    fn tuple_index(&self, t: &[Sec]) -> usize {
        let n = self.len();
        t.iter().fold(0, |acc, s| acc * n + s.index())
    }

    #[inline]
    pub fn rel(&self, r: RelId, t: &[Sec]) -> Elem {
        self.rels[r.0 as usize][self.tuple_index(t)]
    }

    #[inline]
    pub fn fun(&self, f: FunId, t: &[Sec]) -> Sec {
        self.funs[f.0 as usize][self.tuple_index(t)]
    }

    #[inline]
    pub fn constant(&self, c: ConstId) -> Sec {
        self.consts[c.0 as usize]
    }

    /// Whether some section has extent ⊤.
    pub fn has_global_section(&self) -> bool {
        self.sections().any(|s| self.extent(s) == self.alg.top())
    }

    /// Whether every constant is global, which makes every formula extent ⊤.
    pub fn constants_global(&self) -> bool {
        self.consts
            .iter()
            .all(|&c| self.extent(c) == self.alg.top())
    }

    pub fn same_language(&self, other: &Structure) -> bool {
        (Arc::ptr_eq(&self.alg, &other.alg) || *self.alg == *other.alg)
            && (Arc::ptr_eq(&self.sig, &other.sig) || *self.sig == *other.sig)
    }

    pub fn tuple_label(&self, t: &[Sec]) -> String {
        let parts: Vec<&str> = t.iter().map(|&s| self.label(s)).collect();
        format!("({})", parts.join(", "))
    }

    fn compute_eq(&self) -> Vec<Elem> {
        let n = self.len();
        let mut eq = vec![self.alg.bot(); n * n];
        for a in self.sections() {
            for b in self.sections() {
                let common = self.alg.meet(self.extent(a), self.extent(b));
                eq[a.index() * n + b.index()] = self.alg.big_join(
                    self.alg
                        .down(common)
                        .filter(|&p| self.restrict(a, p) == self.restrict(b, p)),
                );
            }
        }
        eq
    }

    fn propagate_relation(
        &self,
        r: RelId,
        given: &[(Vec<Sec>, Elem)],
    ) -> Result<Vec<Elem>, LawViolation> {
        let k = self.sig.rel_arity(r);
        let mut table: Vec<Option<Elem>> = vec![None; self.len().pow(k as u32)];
        for (t, v) in given {
            let e = self.tuple_extent(t);
            if !self.alg.leq(*v, e) {
                return Err(LawViolation {
                    law: Law::RelationBounded,
                    witness: format!(
                        "{}{} = {} with extent {}",
                        self.sig.rel_name(r),
                        self.tuple_label(t),
                        self.alg.name(*v),
                        self.alg.name(e)
                    ),
                });
            }
            for p in self.alg.down(e) {
                let u = self.restrict_tuple(t, p);
                let val = self.alg.meet(*v, p);
                let slot = &mut table[self.tuple_index(&u)];
                match slot {
                    Some(w) if *w != val => {
                        return Err(LawViolation {
                            law: Law::RelationRestriction,
                            witness: format!(
                                "{}{} gets both {} and {}",
                                self.sig.rel_name(r),
                                self.tuple_label(&u),
                                self.alg.name(*w),
                                self.alg.name(val)
                            ),
                        })
                    }
                    _ => *slot = Some(val),
                }
            }
        }
        Ok(Tuples::new(self.len(), k)
            .map(|t| {
                let u = self.restrict_tuple(&t, self.tuple_extent(&t));
                table[self.tuple_index(&u)].unwrap_or(self.alg.bot())
            })
            .collect())
    }

    fn close_relation(&self, r: RelId, given: &[(Vec<Sec>, Elem)]) -> Vec<Elem> {
        let k = self.sig.rel_arity(r);
        Tuples::new(self.len(), k)
            .map(|t| {
                self.alg.big_join(
                    given
                        .iter()
                        .map(|(u, v)| self.alg.meet(self.tuple_eq(&t, u), *v)),
                )
            })
            .collect()
    }

    fn propagate_function(
        &self,
        f: FunId,
        given: &[(Vec<Sec>, Sec)],
    ) -> Result<Vec<Sec>, LawViolation> {
        let k = self.sig.fun_arity(f);
        let mut table: Vec<Option<Sec>> = vec![None; self.len().pow(k as u32)];
        for (t, y) in given {
            let e = self.tuple_extent(t);
            if self.extent(*y) != e {
                return Err(LawViolation {
                    law: Law::FunctionExtent,
                    witness: format!(
                        "{}{} = {} (extents {} and {})",
                        self.sig.fun_name(f),
                        self.tuple_label(t),
                        self.label(*y),
                        self.alg.name(e),
                        self.alg.name(self.extent(*y))
                    ),
                });
            }
            for p in self.alg.down(e) {
                let u = self.restrict_tuple(t, p);
                let val = self.restrict(*y, p);
                let slot = &mut table[self.tuple_index(&u)];
                match slot {
                    Some(w) if *w != val => {
                        return Err(LawViolation {
                            law: Law::FunctionRestriction,
                            witness: format!(
                                "{}{} gets both {} and {}",
                                self.sig.fun_name(f),
                                self.tuple_label(&u),
                                self.label(*w),
                                self.label(val)
                            ),
                        })
                    }
                    _ => *slot = Some(val),
                }
            }
        }
        let mut out = Vec::with_capacity(table.len());
        for t in Tuples::new(self.len(), k) {
            let u = self.restrict_tuple(&t, self.tuple_extent(&t));
            match table[self.tuple_index(&u)] {
                Some(v) => out.push(v),
                None => {
                    return Err(LawViolation {
                        law: Law::FunctionTotal,
                        witness: format!("{}{}", self.sig.fun_name(f), self.tuple_label(&u)),
                    })
                }
            }
        }
        Ok(out)
    }

    /// Every law failure found by exhaustive checking; empty when valid.
    pub fn validate(&self) -> Vec<LawViolation> {
        let mut out = Vec::new();
        let alg = &*self.alg;
        let bad = |law: Law, witness: String| LawViolation { law, witness };
        for a in self.sections() {
            let ea = self.extent(a);
            if self.restrict(a, ea) != a {
                out.push(bad(Law::RestrictionToExtent, self.label(a).to_string()));
            }
            for p in alg.elements() {
                let ap = self.restrict(a, p);
                if self.extent(ap) != alg.meet(ea, p) {
                    out.push(bad(
                        Law::ExtentOfRestriction,
                        format!("{}↾{}", self.label(a), alg.name(p)),
                    ));
                }
                for q in alg.elements() {
                    if self.restrict(ap, q) != self.restrict(a, alg.meet(p, q)) {
                        out.push(bad(
                            Law::RestrictionComposes,
                            format!("{}↾{}↾{}", self.label(a), alg.name(p), alg.name(q)),
                        ));
                    }
                }
            }
        }
        if !out.is_empty() {
            return out;
        }
        let eq = self.compute_eq();
        for a in self.sections() {
            for b in self.sections() {
                let v = eq[a.index() * self.len() + b.index()];
                if v != self.eq(a, b) {
                    out.push(bad(
                        Law::EqualityValue,
                        format!("{}, {}", self.label(a), self.label(b)),
                    ));
                }
                if a != b && v == self.extent(a) && v == self.extent(b) {
                    out.push(bad(
                        Law::Separation,
                        format!("{}, {}", self.label(a), self.label(b)),
                    ));
                }
            }
        }
        for r in self.sig.rels() {
            let k = self.sig.rel_arity(r);
            if self.rels.len() <= r.0 as usize {
                break;
            }
            let name = self.sig.rel_name(r);
            for t in Tuples::new(self.len(), k) {
                let v = self.rel(r, &t);
                let e = self.tuple_extent(&t);
                if !alg.leq(v, e) {
                    out.push(bad(
                        Law::RelationBounded,
                        format!("{}{}", name, self.tuple_label(&t)),
                    ));
                }
                for p in alg.elements() {
                    if self.rel(r, &self.restrict_tuple(&t, p)) != alg.meet(v, p) {
                        out.push(bad(
                            Law::RelationRestriction,
                            format!("{}{}↾{}", name, self.tuple_label(&t), alg.name(p)),
                        ));
                    }
                }
                for u in Tuples::new(self.len(), k) {
                    if !alg.leq(alg.meet(self.tuple_eq(&t, &u), v), self.rel(r, &u)) {
                        out.push(bad(
                            Law::RelationExtensional,
                            format!(
                                "{}{} vs {}",
                                name,
                                self.tuple_label(&t),
                                self.tuple_label(&u)
                            ),
                        ));
                    }
                }
            }
        }
        for f in self.sig.funs() {
            let k = self.sig.fun_arity(f);
            if self.funs.len() <= f.0 as usize {
                break;
            }
            let name = self.sig.fun_name(f);
            for t in Tuples::new(self.len(), k) {
                let y = self.fun(f, &t);
                if self.extent(y) != self.tuple_extent(&t) {
                    out.push(bad(
                        Law::FunctionExtent,
                        format!("{}{}", name, self.tuple_label(&t)),
                    ));
                }
                for p in alg.elements() {
                    if self.fun(f, &self.restrict_tuple(&t, p)) != self.restrict(y, p) {
                        out.push(bad(
                            Law::FunctionRestriction,
                            format!("{}{}↾{}", name, self.tuple_label(&t), alg.name(p)),
                        ));
                    }
                }
                for u in Tuples::new(self.len(), k) {
                    if !alg.leq(self.tuple_eq(&t, &u), self.eq(y, self.fun(f, &u))) {
                        out.push(bad(
                            Law::FunctionExtensional,
                            format!(
                                "{}{} vs {}",
                                name,
                                self.tuple_label(&t),
                                self.tuple_label(&u)
                            ),
                        ));
                    }
                }
            }
        }
        if !self.lax {
            for c in self.sig.consts() {
                if self.consts.len() > c.0 as usize && self.extent(self.constant(c)) != alg.top() {
                    out.push(bad(Law::ConstantGlobal, self.sig.const_name(c).to_string()));
                }
            }
        }
        out
    }

    /// Returns copies tagged with distinct owners; `m` and `n` may be the same
    /// structure.
    pub fn disjointify(
        m: &Structure,
        n: &Structure,
    ) -> Result<(Structure, Structure), StructureError> {
        if !m.same_language(n) {
            return Err(StructureError::Mismatch);
        }
        let (mut a, mut b) = (m.clone(), n.clone());
        a.owner = 0;
        b.owner = 1;
        if a.name == b.name {
            b.name.push('\'');
        }
        Ok((a, b))
    }
}
