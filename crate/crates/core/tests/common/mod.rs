//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use omega_core::heyting::{Elem, Heyting};
use omega_core::presheaf::{RelationFill, Sec, SecRef, Signature, Structure, StructureBuilder};
use omega_core::syntax::{Formula, Term};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pure_set(name: &str, k: usize) -> Structure {
    let alg = Arc::new(Heyting::omega2());
    let mut b = StructureBuilder::new(name, alg.clone(), Arc::new(Signature::new()));
    for i in 0..k {
        b.section(&format!("x{i}"), alg.top()).unwrap();
    }
    b.build().unwrap()
}

/// Two global points over the chain `⊥ < m < ⊤` that agree below `m`, with
/// a unary predicate true of one of them only up to `m`.
pub fn chain_fixture() -> Structure {
    let alg = Arc::new(Heyting::chain3());
    let m = alg.elem("m").unwrap();
    let mut sig = Signature::new();
    let r = sig.add_rel("P", 1).unwrap();
    let mut b = StructureBuilder::new("Chain", alg.clone(), Arc::new(sig))
        .relation_fill(RelationFill::Close);
    let a = b.section("a", alg.top()).unwrap();
    let c = b.section("b", alg.top()).unwrap();
    let d = b.section("d", m).unwrap();
    b.identify(SecRef::at(a, m), SecRef::at(c, m));
    b.rel(r, vec![SecRef::gen(a)], alg.top()).unwrap();
    b.rel(r, vec![SecRef::gen(d)], m).unwrap();
    b.build().unwrap()
}

/// Over the diamond: a global point, two partial points and a binary
/// relation.
pub fn diamond_fixture() -> Structure {
    let alg = Arc::new(Heyting::diamond());
    let (p, q) = (alg.elem("p").unwrap(), alg.elem("q").unwrap());
    let mut sig = Signature::new();
    let e = sig.add_rel("E", 2).unwrap();
    let mut b = StructureBuilder::new("Diamond", alg.clone(), Arc::new(sig))
        .relation_fill(RelationFill::Close);
    let a = b.section("a", alg.top()).unwrap();
    let x = b.section("x", p).unwrap();
    let y = b.section("y", q).unwrap();
    b.rel(e, vec![SecRef::gen(a), SecRef::gen(x)], p).unwrap();
    b.rel(e, vec![SecRef::gen(y), SecRef::gen(a)], q).unwrap();
    b.build().unwrap()
}

/// A three-cycle `f` over `Ω₂` with a named point.
pub fn cycle_fixture() -> Structure {
    let alg = Arc::new(Heyting::omega2());
    let mut sig = Signature::new();
    let f = sig.add_fun("f", 1).unwrap();
    let c = sig.add_const("c").unwrap();
    let mut b = StructureBuilder::new("Cycle", alg.clone(), Arc::new(sig));
    for i in 0..3 {
        b.section(&format!("z{i}"), alg.top()).unwrap();
    }
    for i in 0..3 {
        b.fun(f, vec![SecRef::gen(i)], SecRef::gen((i + 1) % 3))
            .unwrap();
    }
    b.constant(c, SecRef::gen(0));
    b.build().unwrap()
}

/// A unary function and a constant over the chain.
pub fn chain_function_fixture() -> Structure {
    let alg = Arc::new(Heyting::chain3());
    let m = alg.elem("m").unwrap();
    let mut sig = Signature::new();
    let f = sig.add_fun("s", 1).unwrap();
    let c = sig.add_const("o").unwrap();
    let mut b = StructureBuilder::new("ChainFun", alg.clone(), Arc::new(sig));
    let a = b.section("a", alg.top()).unwrap();
    let u = b.section("u", alg.top()).unwrap();
    let w = b.section("w", m).unwrap();
    b.fun(f, vec![SecRef::gen(a)], SecRef::gen(u)).unwrap();
    b.fun(f, vec![SecRef::gen(u)], SecRef::gen(a)).unwrap();
    b.fun(f, vec![SecRef::gen(w)], SecRef::gen(w)).unwrap();
    b.constant(c, SecRef::gen(a));
    b.build().unwrap()
}

pub fn fixtures() -> Vec<Structure> {
    vec![
        pure_set("Two", 2),
        pure_set("Three", 3),
        chain_fixture(),
        diamond_fixture(),
        cycle_fixture(),
        chain_function_fixture(),
    ]
}

/// Pairs of fixtures in a common language.
pub fn fixture_pairs() -> Vec<(Structure, Structure)> {
    let mut out = vec![
        (pure_set("Two", 2), pure_set("Three", 3)),
        (pure_set("One", 1), pure_set("Two", 2)),
    ];
    for f in fixtures() {
        out.push((f.clone(), f));
    }
    out
}

pub fn global_sections(m: &Structure) -> Vec<Sec> {
    let top = m.algebra().top();
    m.sections().filter(|&s| m.extent(s) == top).collect()
}

/// Textbook truth in the classical structure of global sections. Only
/// meaningful over `Ω₂` with global constants.
pub fn tarski(m: &Structure, f: &Formula, env: &mut Vec<Option<Sec>>) -> bool {
    let top = m.algebra().top();
    match f {
        Formula::Eq(a, b) => term(m, a, env) == term(m, b, env),
        Formula::Rel(r, args) => {
            let vals: Vec<Sec> = args.iter().map(|t| term(m, t, env)).collect();
            m.rel(*r, &vals) == top
        }
        Formula::Not(g) => !tarski(m, g, env),
        Formula::Implies(a, b) => !tarski(m, a, env) || tarski(m, b, env),
        Formula::And(gs) => gs.iter().all(|g| tarski(m, g, env)),
        Formula::Or(gs) => gs.iter().any(|g| tarski(m, g, env)),
        Formula::Exists(vs, g) | Formula::Forall(vs, g) => {
            let exists = matches!(f, Formula::Exists(..));
            let globals = global_sections(m);
            let saved: Vec<Option<Sec>> = vs
                .iter()
                .map(|&v| env.get(v as usize).copied().flatten())
                .collect();
            let need = vs.iter().map(|&v| v as usize + 1).max().unwrap_or(0);
            if env.len() < need {
                env.resize(need, None);
            }
            let mut result = !exists;
            let mut idx = vec![0usize; vs.len()];
            'all: loop {
                if globals.is_empty() && !vs.is_empty() {
                    break;
                }
                for (&v, &i) in vs.iter().zip(&idx) {
                    env[v as usize] = Some(globals[i]);
                }
                let v = tarski(m, g, env);
                if exists && v {
                    result = true;
                    break;
                }
                if !exists && !v {
                    result = false;
                    break;
                }
                let mut k = vs.len();
                loop {
                    if k == 0 {
                        break 'all;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < globals.len() {
                        break;
                    }
                    idx[k] = 0;
                }
            }
            for (&v, s) in vs.iter().zip(saved) {
                env[v as usize] = s;
            }
            result
        }
        Formula::Box(p, g) => (*p == top) == tarski(m, g, env),
        Formula::Check(p) => *p == top,
    }
}

fn term(m: &Structure, t: &Term, env: &[Option<Sec>]) -> Sec {
    match t {
        Term::Var(v) => env[*v as usize].expect("assigned"),
        Term::Const(c) => m.constant(*c),
        Term::App(f, args) => {
            let vals: Vec<Sec> = args.iter().map(|a| term(m, a, env)).collect();
            m.fun(*f, &vals)
        }
    }
}

/// Classical atomic type agreement of two tuples of global sections.
fn same_atomic_type(m: &Structure, a: &[Sec], n: &Structure, b: &[Sec]) -> bool {
    let sig = m.signature();
    let top = m.algebra().top();
    let k = a.len();
    for i in 0..k {
        for j in 0..k {
            if (a[i] == a[j]) != (b[i] == b[j]) {
                return false;
            }
        }
        for c in sig.consts() {
            if (a[i] == m.constant(c)) != (b[i] == n.constant(c)) {
                return false;
            }
        }
    }
    for r in sig.rels() {
        for idx in all_maps(sig.rel_arity(r), k) {
            let x: Vec<Sec> = idx.iter().map(|&i| a[i]).collect();
            let y: Vec<Sec> = idx.iter().map(|&i| b[i]).collect();
            if (m.rel(r, &x) == top) != (n.rel(r, &y) == top) {
                return false;
            }
        }
    }
    for f in sig.funs() {
        for idx in all_maps(sig.fun_arity(f) + 1, k) {
            let (last, args) = idx.split_last().unwrap();
            let x: Vec<Sec> = args.iter().map(|&i| a[i]).collect();
            let y: Vec<Sec> = args.iter().map(|&i| b[i]).collect();
            if (m.fun(f, &x) == a[*last]) != (n.fun(f, &y) == b[*last]) {
                return false;
            }
        }
    }
    true
}

fn all_maps(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}

/// Ehrenfeucht–Fraïssé: Duplicator survives `rounds` single-element rounds
/// on the classical structures of global sections.
pub fn classical_ef(m: &Structure, a: &[Sec], n: &Structure, b: &[Sec], rounds: usize) -> bool {
    if !same_atomic_type(m, a, n, b) {
        return false;
    }
    if rounds == 0 {
        return true;
    }
    let (gm, gn) = (global_sections(m), global_sections(n));
    let ext = |t: &[Sec], x: Sec| {
        let mut v = t.to_vec();
        v.push(x);
        v
    };
    gm.iter().all(|&c| {
        gn.iter()
            .any(|&d| classical_ef(m, &ext(a, c), n, &ext(b, d), rounds - 1))
    }) && gn.iter().all(|&d| {
        gm.iter()
            .any(|&c| classical_ef(m, &ext(a, c), n, &ext(b, d), rounds - 1))
    })
}

/// Least `α` at which classical EF-inequivalence of pairs of global tuples
/// of length at most `max_len` stops growing.
pub fn classical_scott_rank(m: &Structure, max_len: usize) -> usize {
    let g = global_sections(m);
    let mut tuples: Vec<Vec<Sec>> = vec![vec![]];
    let mut all = tuples.clone();
    for _ in 0..max_len {
        tuples = tuples
            .iter()
            .flat_map(|t| {
                g.iter().map(move |&x| {
                    let mut u = t.clone();
                    u.push(x);
                    u
                })
            })
            .collect();
        all.extend(tuples.iter().cloned());
    }
    let gamma = |alpha: usize| -> Vec<bool> {
        let mut out = Vec::new();
        for x in &all {
            for y in &all {
                if x.len() == y.len() {
                    out.push(!classical_ef(m, x, m, y, alpha));
                }
            }
        }
        out
    };
    let mut alpha = 0;
    let mut prev = gamma(0);
    loop {
        let next = gamma(alpha + 1);
        if next == prev {
            return alpha;
        }
        prev = next;
        alpha += 1;
    }
}

/// Every element of an algebra, for exhaustive loops.
pub fn elems(a: &Heyting) -> Vec<Elem> {
    a.elements().collect()
}
