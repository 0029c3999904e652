//! Heyting-valued interpretation of terms and formulae.
//!
//! Assignments are partial maps from variables to sections, stored as
//! `Vec<Option<Sec>>` indexed by variable. `Eā` is the meet of the extents of
//! the assigned entries. Values of shared subformulae are memoized per
//! evaluator, keyed on the child pointer, `Eā` and the assignment prefix that
//! can matter to the child.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::heyting::{Elem, Heyting};
use crate::presheaf::{Sec, Structure, Tuples};
use crate::syntax::{AtomKind, Formula, Term, Var};

pub type Env = Vec<Option<Sec>>;

/// Assignment `v_i ↦ t_i`.
pub fn env_of(tuple: &[Sec]) -> Env {
    tuple.iter().map(|&s| Some(s)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("variable v{0} is free but unassigned")]
    UnassignedVariable(Var),
}

/// Deliberate semantic faults, used to check that the cross-checks notice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// `∃` only ranges over global sections.
    ExistsGlobalOnly,
    /// `∀` drops the `Et̄ →` guard.
    ForallUnguarded,
}

type Key = (usize, Elem, Vec<Option<Sec>>);

pub struct Evaluator<'m> {
    m: &'m Structure,
    alg: &'m Heyting,
    memo: HashMap<Key, Elem>,
    free: HashMap<usize, Arc<[Var]>>,
    extents: HashMap<usize, Elem>,
    keep: HashMap<usize, Arc<Formula>>,
    mutation: Option<Mutation>,
    global_consts: bool,
}

impl<'m> Evaluator<'m> {
    pub fn new(m: &'m Structure) -> Self {
        Evaluator {
            m,
            alg: m.algebra(),
            memo: HashMap::new(),
            free: HashMap::new(),
            extents: HashMap::new(),
            keep: HashMap::new(),
            mutation: None,
            global_consts: m.constants_global(),
        }
    }

    pub fn with_mutation(m: &'m Structure, mutation: Option<Mutation>) -> Self {
        let mut e = Self::new(m);
        e.mutation = mutation;
        e
    }

    pub fn structure(&self) -> &'m Structure {
        self.m
    }

    /// `Eφ`: the meet of the extents of the constants occurring in `φ`.
    pub fn formula_extent(&mut self, f: &Formula) -> Elem {
        if self.global_consts {
            return self.alg.top();
        }
        self.alg.big_meet(
            f.consts()
                .into_iter()
                .map(|c| self.m.extent(self.m.constant(c))),
        )
    }

    fn child_extent(&mut self, f: &Arc<Formula>) -> Elem {
        if self.global_consts {
            return self.alg.top();
        }
        let key = Arc::as_ptr(f) as usize;
        if let Some(e) = self.extents.get(&key) {
            return *e;
        }
        let e = self.formula_extent(f);
        self.extents.insert(key, e);
        self.keep.entry(key).or_insert_with(|| f.clone());
        e
    }

    fn env_extent(&self, env: &[Option<Sec>]) -> Elem {
        self.alg
            .big_meet(env.iter().flatten().map(|&s| self.m.extent(s)))
    }

    pub fn eval_term(&self, t: &Term, env: &[Option<Sec>], r: Elem) -> Result<Sec, EvalError> {
        Ok(match t {
            Term::Var(v) => {
                let s = env
                    .get(*v as usize)
                    .copied()
                    .flatten()
                    .ok_or(EvalError::UnassignedVariable(*v))?;
                self.m.restrict(s, r)
            }
            Term::Const(c) => self.m.restrict(self.m.constant(*c), r),
            Term::App(f, args) => {
                let vals = args
                    .iter()
                    .map(|a| self.eval_term(a, env, r))
                    .collect::<Result<Vec<_>, _>>()?;
                self.m.fun(*f, &vals)
            }
        })
    }

    /// `[φ(ā)]` for the assignment `env`.
    pub fn eval(&mut self, f: &Formula, env: &[Option<Sec>]) -> Result<Elem, EvalError> {
        for v in f.free_vars() {
            if env.get(v as usize).copied().flatten().is_none() {
                return Err(EvalError::UnassignedVariable(v));
            }
        }
        let mut env = env.to_vec();
        let e = self.env_extent(&env);
        Ok(self.go(f, &mut env, e))
    }

    pub fn eval_tuple(&mut self, f: &Formula, tuple: &[Sec]) -> Result<Elem, EvalError> {
        self.eval(f, &env_of(tuple))
    }

    /// `M ⊩ φ(ā)`: the value is the largest possible, `Eā ∧ Eφ`.
    pub fn forces(&mut self, f: &Formula, env: &[Option<Sec>]) -> Result<bool, EvalError> {
        let v = self.eval(f, env)?;
        let bound = self.alg.meet(self.env_extent(env), self.formula_extent(f));
        Ok(v == bound)
    }

    /// Free variables of a shared node, built from those of its children.
    fn free_of(&mut self, f: &Arc<Formula>) -> Arc<[Var]> {
        let ptr = Arc::as_ptr(f) as usize;
        if let Some(v) = self.free.get(&ptr) {
            return v.clone();
        }
        let mut vars: Vec<Var> = match &**f {
            Formula::Eq(..) | Formula::Rel(..) | Formula::Check(_) => {
                f.free_vars().into_iter().collect()
            }
            _ => {
                let mut kids = Vec::new();
                f.each_child(|c| kids.push(c.clone()));
                let mut all = Vec::new();
                for c in &kids {
                    all.extend_from_slice(&self.free_of(c));
                }
                if let Formula::Exists(vs, _) | Formula::Forall(vs, _) = &**f {
                    all.retain(|v| !vs.contains(v));
                }
                all
            }
        };
        vars.sort_unstable();
        vars.dedup();
        let vars: Arc<[Var]> = vars.into();
        self.free.insert(ptr, vars.clone());
        self.keep.entry(ptr).or_insert_with(|| f.clone());
        vars
    }

    /// Like [`Evaluator::eval`] for a shared node, reusing the memo across
    /// calls.
    pub fn eval_shared(
        &mut self,
        f: &Arc<Formula>,
        env: &[Option<Sec>],
    ) -> Result<Elem, EvalError> {
        for &v in self.free_of(f).iter() {
            if env.get(v as usize).copied().flatten().is_none() {
                return Err(EvalError::UnassignedVariable(v));
            }
        }
        let mut env = env.to_vec();
        let e = self.env_extent(&env);
        Ok(self.child(f, &mut env, e))
    }

    fn child(&mut self, f: &Arc<Formula>, env: &mut Env, e: Elem) -> Elem {
        let bound = self.free_of(f).last().map_or(0, |v| *v as usize + 1);
        let prefix = env[..bound.min(env.len())].to_vec();
        let key = (Arc::as_ptr(f) as usize, e, prefix);
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        let v = self.go(f, env, e);
        self.memo.insert(key, v);
        v
    }

    fn go(&mut self, f: &Formula, env: &mut Env, e: Elem) -> Elem {
        let alg = self.alg;
        match f {
            Formula::Eq(a, b) => {
                let r = alg.meet(e, self.formula_extent(f));
                let x = self.eval_term(a, env, r).expect("checked free variables");
                let y = self.eval_term(b, env, r).expect("checked free variables");
                self.m.eq(x, y)
            }
            Formula::Rel(rel, args) => {
                let r = alg.meet(e, self.formula_extent(f));
                let vals: Vec<Sec> = args
                    .iter()
                    .map(|a| self.eval_term(a, env, r).expect("checked free variables"))
                    .collect();
                alg.meet(self.m.rel(*rel, &vals), r)
            }
            Formula::Check(p) => alg.meet(e, *p),
            Formula::Not(g) => {
                let eg = self.child_extent(g);
                let v = self.child(g, env, e);
                alg.meet(alg.meet(e, eg), alg.neg(v))
            }
            Formula::Box(p, g) => {
                let eg = self.child_extent(g);
                let v = self.child(g, env, e);
                alg.meet(alg.meet(e, eg), alg.iff(*p, v))
            }
            Formula::Implies(a, b) => {
                let ea = self.child_extent(a);
                let eb = self.child_extent(b);
                let x = self.child(a, env, e);
                let y = self.child(b, env, e);
                alg.meet(alg.meet(e, alg.meet(ea, eb)), alg.implies(x, y))
            }
            Formula::And(gs) | Formula::Or(gs) => {
                let q = alg.big_meet(gs.iter().map(|g| self.child_extent(g)).collect::<Vec<_>>());
                let conj = matches!(f, Formula::And(_));
                let eq = alg.meet(e, q);
                let (vals, restored) = if q == alg.top() {
                    (
                        gs.iter().map(|g| self.child(g, env, e)).collect::<Vec<_>>(),
                        None,
                    )
                } else {
                    let saved = env.clone();
                    for s in env.iter_mut().flatten() {
                        *s = self.m.restrict(*s, q);
                    }
                    let vals = gs
                        .iter()
                        .map(|g| self.child(g, env, eq))
                        .collect::<Vec<_>>();
                    (vals, Some(saved))
                };
                if let Some(saved) = restored {
                    *env = saved;
                }
                let inner = if conj {
                    alg.big_meet(vals)
                } else {
                    alg.big_join(vals)
                };
                alg.meet(eq, inner)
            }
            Formula::Exists(vs, g) | Formula::Forall(vs, g) => {
                let exists = matches!(f, Formula::Exists(..));
                let eg = self.child_extent(g);
                let need = vs.iter().map(|&v| v as usize + 1).max().unwrap_or(0);
                if env.len() < need {
                    env.resize(need, None);
                }
                let saved: Vec<Option<Sec>> = vs.iter().map(|&v| env[v as usize]).collect();
                // Extent of the assignment without the bound variables.
                for &v in vs {
                    env[v as usize] = None;
                }
                let base = self.env_extent(env);
                let mut acc = if exists { alg.bot() } else { alg.top() };
                for t in Tuples::new(self.m.len(), vs.len()) {
                    let et = self.m.tuple_extent(&t);
                    if exists
                        && self.mutation == Some(Mutation::ExistsGlobalOnly)
                        && et != alg.top()
                    {
                        continue;
                    }
                    for (&v, &s) in vs.iter().zip(&t) {
                        env[v as usize] = Some(s);
                    }
                    let val = self.child(g, env, alg.meet(base, et));
                    if exists {
                        acc = alg.join(acc, val);
                    } else if self.mutation == Some(Mutation::ForallUnguarded) {
                        acc = alg.meet(acc, val);
                    } else {
                        acc = alg.meet(acc, alg.implies(et, val));
                    }
                }
                for (&v, s) in vs.iter().zip(saved) {
                    env[v as usize] = s;
                }
                // Shadowed entries still count towards the extent of the
                // assignment the whole formula is read at.
                if exists {
                    alg.meet(e, acc)
                } else {
                    alg.meet(alg.meet(eg, e), acc)
                }
            }
        }
    }
}

/// `[φ(ā)]_M` with `v_i ↦ a_i`.
pub fn eval(m: &Structure, f: &Formula, tuple: &[Sec]) -> Result<Elem, EvalError> {
    Evaluator::new(m).eval_tuple(f, tuple)
}

pub fn forces(m: &Structure, f: &Formula, tuple: &[Sec]) -> Result<bool, EvalError> {
    Evaluator::new(m).forces(f, &env_of(tuple))
}

/// Value of a canonical unnested atomic at `args`, taken at the extent of
/// `args` itself.
#[inline]
pub fn atomic_value(m: &Structure, atom: AtomKind, args: &[Sec]) -> Elem {
    match atom {
        AtomKind::Eq => m.eq(args[0], args[1]),
        AtomKind::Const(c) => m.eq(args[0], m.constant(c)),
        AtomKind::Rel(r) => m.rel(r, args),
        AtomKind::Fun(f) => {
            let n = args.len() - 1;
            m.eq(args[n], m.fun(f, &args[..n]))
        }
    }
}

/// Atomic value at `(t_{map[0]}, …)` inside a tuple of extent `e`.
pub fn atomic_instance_value(
    m: &Structure,
    atom: AtomKind,
    map: &[usize],
    tuple: &[Sec],
    e: Elem,
) -> Elem {
    let args: Vec<Sec> = map.iter().map(|&i| tuple[i]).collect();
    m.algebra().meet(atomic_value(m, atom, &args), e)
}

/// Unassigned environment of length `n`.
pub fn empty_env(n: usize) -> Env {
    vec![None; n]
}
