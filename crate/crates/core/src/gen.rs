//! Seeded random algebras, structures and formulae for property tests.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::heyting::{Elem, Heyting};
use crate::presheaf::{RelationFill, SecRef, Signature, Structure, StructureBuilder};
use crate::syntax::{canonical_atomics, Formula, Term, Var};

/// Downsets of a random poset on `1..=max_points` points.
pub fn algebra<R: Rng>(rng: &mut R, max_points: usize) -> Heyting {
    let k = rng.random_range(1..=max_points.max(1));
    let names: Vec<String> = (0..k).map(|i| format!("p{i}")).collect();
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            if rng.random_bool(0.4) {
                pairs.push((names[i].as_str(), names[j].as_str()));
            }
        }
    }
    let points: Vec<&str> = names.iter().map(String::as_str).collect();
    Heyting::from_poset_downsets(&points, &pairs).expect("a DAG on indices is a partial order")
}

/// A random downset algebra with at most `max_elems` elements.
pub fn small_algebra<R: Rng>(rng: &mut R, max_elems: usize) -> Heyting {
    loop {
        let a = algebra(rng, 3);
        if a.size() <= max_elems {
            return a;
        }
    }
}

/// One of `Ω₂`, the three-element chain and the diamond.
pub fn builtin_algebra<R: Rng>(rng: &mut R) -> Heyting {
    match rng.random_range(0..3) {
        0 => Heyting::omega2(),
        1 => Heyting::chain3(),
        _ => Heyting::diamond(),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SignatureShape {
    pub max_rels: usize,
    pub max_rel_arity: usize,
    pub max_funs: usize,
    pub max_fun_arity: usize,
    pub max_consts: usize,
}

impl Default for SignatureShape {
    fn default() -> Self {
        SignatureShape {
            max_rels: 2,
            max_rel_arity: 2,
            max_funs: 1,
            max_fun_arity: 2,
            max_consts: 1,
        }
    }
}

impl SignatureShape {
    pub fn relational() -> Self {
        SignatureShape {
            max_funs: 0,
            max_consts: 0,
            ..Self::default()
        }
    }
}

pub fn signature<R: Rng>(rng: &mut R, shape: SignatureShape) -> Signature {
    let mut s = Signature::new();
    for i in 0..rng.random_range(0..=shape.max_rels) {
        s.add_rel(&format!("R{i}"), rng.random_range(0..=shape.max_rel_arity))
            .unwrap();
    }
    for i in 0..rng.random_range(0..=shape.max_funs) {
        s.add_fun(
            &format!("f{i}"),
            rng.random_range(1..=shape.max_fun_arity.max(1)),
        )
        .unwrap();
    }
    for i in 0..rng.random_range(0..=shape.max_consts) {
        s.add_const(&format!("c{i}")).unwrap();
    }
    s
}

#[derive(Clone, Copy, Debug)]
pub struct StructureShape {
    pub max_generators: usize,
    /// Chance that two generators are identified below some level.
    pub identify: f64,
    /// Force the first generator to be global.
    pub global: bool,
}

impl Default for StructureShape {
    fn default() -> Self {
        StructureShape {
            max_generators: 3,
            identify: 0.3,
            global: true,
        }
    }
}

fn pick<R: Rng, T: Copy>(rng: &mut R, xs: &[T]) -> T {
    xs[rng.random_range(0..xs.len())]
}

/// A random valid structure. Relations are closed from a few random values;
/// functions are read off generator tuples and fall back to projections
/// when a random choice breaks a law.
pub fn structure<R: Rng>(
    rng: &mut R,
    name: &str,
    alg: &Arc<Heyting>,
    sig: &Arc<Signature>,
    shape: StructureShape,
) -> Structure {
    let elems: Vec<Elem> = alg.elements().collect();
    let k = rng.random_range(1..=shape.max_generators.max(1));
    let mut b =
        StructureBuilder::new(name, alg.clone(), sig.clone()).relation_fill(RelationFill::Close);
    let mut extents = Vec::new();
    for i in 0..k {
        let e = if i == 0 && (shape.global || sig.consts().next().is_some()) {
            alg.top()
        } else {
            pick(rng, &elems)
        };
        b.section(&format!("g{i}"), e).unwrap();
        extents.push(e);
    }
    for i in 0..k {
        for j in (i + 1)..k {
            if rng.random_bool(shape.identify) {
                let p = pick(
                    rng,
                    &alg.down(alg.meet(extents[i], extents[j]))
                        .collect::<Vec<_>>(),
                );
                b.identify(SecRef::at(i, p), SecRef::at(j, p));
            }
        }
    }
    for r in sig.rels() {
        let n = sig.rel_arity(r);
        for _ in 0..rng.random_range(0..=3) {
            let args: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let e = alg.big_meet(args.iter().map(|&i| extents[i]));
            let at = pick(rng, &alg.down(e).collect::<Vec<_>>());
            let v = pick(rng, &alg.down(at).collect::<Vec<_>>());
            b.rel(r, args.iter().map(|&i| SecRef::at(i, at)).collect(), v)
                .unwrap();
        }
    }
    let globals: Vec<usize> = (0..k).filter(|&i| extents[i] == alg.top()).collect();
    for c in sig.consts() {
        b.constant(c, SecRef::gen(pick(rng, &globals)));
    }
    for attempt in 0..6 {
        let mut fb = b.clone();
        for f in sig.funs() {
            let n = sig.fun_arity(f);
            let proj = rng.random_range(0..n);
            let constant = rng.random_range(0..k);
            let mode = if attempt == 5 {
                0
            } else {
                rng.random_range(0..3)
            };
            for args in crate::presheaf::Tuples::new(k, n) {
                let args: Vec<usize> = args.iter().map(|s| s.index()).collect();
                let e = alg.big_meet(args.iter().map(|&i| extents[i]));
                let target = match mode {
                    0 => args[proj],
                    1 if alg.leq(e, extents[constant]) => constant,
                    _ => {
                        let ok: Vec<usize> = (0..k).filter(|&j| alg.leq(e, extents[j])).collect();
                        pick(rng, &ok)
                    }
                };
                fb.fun(
                    f,
                    args.iter().map(|&i| SecRef::gen(i)).collect(),
                    SecRef::at(target, e),
                )
                .unwrap();
            }
        }
        if let Ok(s) = fb.build() {
            return s;
        }
    }
    // Identifications can clash with projections onto different generators;
    // retry without them.
    structure(
        rng,
        name,
        alg,
        sig,
        StructureShape {
            identify: 0.0,
            ..shape
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectives {
    /// Every connective of the language, including `□_p` and `p̌` when
    /// `boxes` is set.
    Full,
    /// `∧`, `∃`, `□_p` only.
    Ceu,
}

#[derive(Clone, Copy, Debug)]
pub struct FormulaShape {
    /// Free variables are drawn from `v0..v_{free-1}`.
    pub free: usize,
    pub depth: usize,
    pub max_mrank: usize,
    pub boxes: bool,
    pub nested_terms: bool,
    pub connectives: Connectives,
    /// Size of quantifier blocks.
    pub block: usize,
}

impl Default for FormulaShape {
    fn default() -> Self {
        FormulaShape {
            free: 2,
            depth: 3,
            max_mrank: 3,
            boxes: false,
            nested_terms: true,
            connectives: Connectives::Full,
            block: 1,
        }
    }
}

/// A random formula with `mrank ≤ shape.max_mrank` whose free variables lie
/// in `v0..v_{free-1}`.
pub fn formula<R: Rng>(
    rng: &mut R,
    sig: &Signature,
    alg: &Heyting,
    shape: FormulaShape,
) -> Formula {
    loop {
        let scope: Vec<Var> = (0..shape.free as Var).collect();
        let f = gen_formula(rng, sig, alg, &shape, shape.depth, &scope);
        if f.mrank() <= shape.max_mrank {
            return f;
        }
    }
}

/// A random unnested formula with `qdegree ≤ max_degree`.
pub fn unnested_formula<R: Rng>(
    rng: &mut R,
    sig: &Signature,
    alg: &Heyting,
    free: usize,
    max_degree: usize,
    block: usize,
) -> Formula {
    let shape = FormulaShape {
        free,
        depth: max_degree + 2,
        max_mrank: usize::MAX,
        boxes: true,
        nested_terms: false,
        connectives: Connectives::Full,
        block,
    };
    loop {
        let scope: Vec<Var> = (0..free as Var).collect();
        let f = gen_formula(rng, sig, alg, &shape, shape.depth, &scope);
        if f.qdegree() <= max_degree {
            return f;
        }
    }
}

fn gen_term<R: Rng>(
    rng: &mut R,
    sig: &Signature,
    scope: &[Var],
    depth: usize,
    nested: bool,
) -> Term {
    let consts: Vec<_> = sig.consts().collect();
    let funs: Vec<_> = sig.funs().collect();
    let roll = rng.random_range(0..10);
    if nested && depth > 0 && !funs.is_empty() && roll < 3 {
        let f = pick(rng, &funs);
        let args = (0..sig.fun_arity(f))
            .map(|_| gen_term(rng, sig, scope, depth - 1, nested))
            .collect();
        return Term::App(f, args);
    }
    if (scope.is_empty() || roll == 9) && !consts.is_empty() && nested {
        return Term::Const(pick(rng, &consts));
    }
    if scope.is_empty() {
        return match consts.first() {
            Some(&c) => Term::Const(c),
            None => Term::Var(0),
        };
    }
    Term::Var(pick(rng, scope))
}

fn gen_atom<R: Rng>(rng: &mut R, sig: &Signature, shape: &FormulaShape, scope: &[Var]) -> Formula {
    if !shape.nested_terms {
        let atoms = canonical_atomics(sig);
        let atom = pick(rng, &atoms);
        let k = atom.vars(sig);
        if scope.is_empty() && k > 0 {
            return Formula::and(Vec::new());
        }
        let map: Vec<usize> = (0..k).map(|_| pick(rng, scope) as usize).collect();
        return atom.instance(sig, &map);
    }
    let rels: Vec<_> = sig.rels().collect();
    if !rels.is_empty() && rng.random_bool(0.5) {
        let r = pick(rng, &rels);
        let args = (0..sig.rel_arity(r))
            .map(|_| gen_term(rng, sig, scope, 2, true))
            .collect();
        return Formula::Rel(r, args);
    }
    let a = gen_term(rng, sig, scope, 2, true);
    let b = gen_term(rng, sig, scope, 2, true);
    if matches!(a, Term::Var(u) if scope.is_empty() && u == 0) {
        return Formula::and(Vec::new());
    }
    Formula::Eq(a, b)
}

fn gen_formula<R: Rng>(
    rng: &mut R,
    sig: &Signature,
    alg: &Heyting,
    shape: &FormulaShape,
    depth: usize,
    scope: &[Var],
) -> Formula {
    if depth == 0 || rng.random_range(0..4) == 0 {
        if shape.boxes && shape.connectives == Connectives::Full && rng.random_range(0..8) == 0 {
            let elems: Vec<Elem> = alg.elements().collect();
            return Formula::Check(pick(rng, &elems));
        }
        return gen_atom(rng, sig, shape, scope);
    }
    let sub =
        |rng: &mut R, scope: &[Var]| Arc::new(gen_formula(rng, sig, alg, shape, depth - 1, scope));
    let quantify = |rng: &mut R, exists: bool| {
        let base = scope.iter().max().map_or(0, |v| v + 1);
        let k = rng.random_range(1..=shape.block.max(1));
        // Sometimes rebind a variable already in scope.
        let vars: Vec<Var> = (0..k as Var)
            .map(|i| {
                if !scope.is_empty() && rng.random_range(0..4) == 0 {
                    scope[0]
                } else {
                    base + i
                }
            })
            .collect::<alloc::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut inner: Vec<Var> = scope.to_vec();
        inner.extend(vars.iter().copied().filter(|v| !scope.contains(v)));
        let body = sub(rng, &inner);
        if exists {
            Formula::Exists(vars, body)
        } else {
            Formula::Forall(vars, body)
        }
    };
    let choices = match shape.connectives {
        Connectives::Ceu => 3,
        Connectives::Full => 8,
    };
    match rng.random_range(0..choices) {
        0 => Formula::And(
            (0..rng.random_range(0..=3))
                .map(|_| sub(rng, scope))
                .collect(),
        ),
        1 => quantify(rng, true),
        2 if shape.boxes => {
            let elems: Vec<Elem> = alg.elements().collect();
            let p = pick(rng, &elems);
            Formula::Box(p, sub(rng, scope))
        }
        2 if shape.connectives == Connectives::Ceu => {
            Formula::And((0..2).map(|_| sub(rng, scope)).collect())
        }
        2 | 3 => Formula::Or(
            (0..rng.random_range(0..=3))
                .map(|_| sub(rng, scope))
                .collect(),
        ),
        4 => Formula::Not(sub(rng, scope)),
        5 => {
            let a = sub(rng, scope);
            Formula::Implies(a, sub(rng, scope))
        }
        6 => quantify(rng, false),
        _ => gen_atom(rng, sig, shape, scope),
    }
}
