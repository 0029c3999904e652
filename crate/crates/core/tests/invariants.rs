mod common;

use std::collections::HashMap;
use std::sync::Arc;

use omega_core::backforth::{sim_alpha, Config};
use omega_core::games::{solve, GameConfig, Player};
use omega_core::heyting::Elem;
use omega_core::invariants::{Caps, Comparison, Divergence, Engine, InvariantError};
use omega_core::presheaf::{Sec, Signature, Structure, StructureBuilder, Tuples};
use omega_core::semantics::Evaluator;
use omega_core::syntax::{enumerate_unnested_atomics, Formula, Var};

/// Invariant values built without interning, straight from the recursion.
#[derive(Clone, PartialEq, Eq, Debug)]
enum Value {
    Base(usize, Elem, Vec<Elem>),
    Succ(Box<Value>, Vec<Elem>),
}

struct Oracle<'a> {
    structs: Vec<&'a Structure>,
    memo: HashMap<(usize, usize, Vec<Sec>), Value>,
}

impl<'a> Oracle<'a> {
    fn new(structs: Vec<&'a Structure>) -> Self {
        Oracle {
            structs,
            memo: HashMap::new(),
        }
    }

    fn value(&mut self, level: usize, x: usize, t: &[Sec]) -> Value {
        let key = (level, x, t.to_vec());
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let m = self.structs[x];
        let alg = m.algebra().clone();
        let e = m.tuple_extent(t);
        let v = if level == 0 {
            let sig = m.signature();
            let values = enumerate_unnested_atomics(sig, t.len())
                .into_iter()
                .map(|(atom, map)| {
                    omega_core::semantics::eval(m, &atom.instance(sig, &map), t).unwrap()
                })
                .collect();
            Value::Base(t.len(), e, values)
        } else {
            let lower = self.value(level - 1, x, t);
            let mut values = Vec::new();
            for k in 0..self.structs.len() {
                let probe = self.structs[k];
                for s in Tuples::new(probe.len(), t.len()) {
                    let es = probe.tuple_extent(&s);
                    for u in Tuples::new(probe.len(), 1) {
                        let eu = probe.tuple_extent(&u);
                        if !alg.leq(eu, alg.meet(e, es)) {
                            continue;
                        }
                        let mut su = s.clone();
                        su.extend_from_slice(&u);
                        let mut acc = alg.bot();
                        for c in Tuples::new(m.len(), 1) {
                            let q = m.tuple_extent(&c);
                            if !alg.leq(q, eu) {
                                continue;
                            }
                            let mut tc = t.to_vec();
                            tc.extend_from_slice(&c);
                            let target = probe.restrict_tuple(&su, q);
                            if self.value(level - 1, x, &tc) == self.value(level - 1, k, &target) {
                                acc = alg.join(acc, q);
                            }
                        }
                        values.push(acc);
                    }
                }
            }
            Value::Succ(Box::new(lower), values)
        };
        self.memo.insert(key, v.clone());
        v
    }
}

fn pairs() -> Vec<(Structure, Structure)> {
    common::fixture_pairs()
        .into_iter()
        .map(|(m, n)| Structure::disjointify(&m, &n).unwrap())
        .collect()
}

/// Anchors of length at most one in either structure, by structure index.
fn anchors(m: &Structure, n: &Structure) -> Vec<(usize, Vec<Sec>)> {
    let mut out = vec![(0, vec![]), (1, vec![])];
    for (x, s) in [m, n].into_iter().enumerate() {
        out.extend(Tuples::new(s.len(), 1).map(|t| (x, t)));
    }
    out
}

#[test]
fn invariant_equality_matches_the_oracle() {
    for (m, n) in pairs() {
        let mut engine = Engine::pair(&m, &n, Caps::default()).unwrap();
        let mut oracle = Oracle::new(vec![&m, &n]);
        let all = anchors(&m, &n);
        for alpha in 0..=2 {
            for (x, a) in &all {
                for (y, b) in &all {
                    let s = [&m, &n];
                    if a.len() != b.len() || s[*x].tuple_extent(a) != s[*y].tuple_extent(b) {
                        continue;
                    }
                    let i = engine.invariant(*x, a, alpha).unwrap();
                    let j = engine.invariant(*y, b, alpha).unwrap();
                    let ours = engine.compare(&i, &j).unwrap() == Comparison::Equal;
                    let theirs = oracle.value(alpha, *x, a) == oracle.value(alpha, *y, b);
                    assert_eq!(
                        ours,
                        theirs,
                        "{} {:?} / {} {:?} at {alpha}",
                        s[*x].name(),
                        a,
                        s[*y].name(),
                        b
                    );
                }
            }
        }
    }
}

#[test]
fn table_values_match_the_oracle() {
    for (m, n) in pairs() {
        let mut engine = Engine::pair(&m, &n, Caps::default()).unwrap();
        let mut oracle = Oracle::new(vec![&m, &n]);
        for (x, a) in anchors(&m, &n) {
            let s = [&m, &n][x];
            if s.restrict_tuple(&a, s.tuple_extent(&a)) != a {
                continue;
            }
            for level in 1..=2 {
                let inv = engine.invariant(x, &a, level).unwrap();
                let table: Vec<Elem> = engine
                    .table(&inv, level)
                    .into_iter()
                    .map(|(_, v)| v)
                    .collect();
                match oracle.value(level, x, &a) {
                    Value::Succ(_, values) => assert_eq!(table, values),
                    Value::Base(..) => unreachable!(),
                }
            }
        }
    }
}

#[test]
fn self_application_and_range_bound() {
    for (m, n) in pairs() {
        let mut engine = Engine::pair(&m, &n, Caps::default()).unwrap();
        for (x, a) in anchors(&m, &n) {
            let s = [&m, &n][x];
            let alg = s.algebra().clone();
            for level in 1..=2 {
                let inv = engine.invariant(x, &a, level).unwrap();
                for (k, v) in engine.table(&inv, level) {
                    assert!(alg.leq(v, inv.extent));
                    assert!(alg.leq(v, k.et));
                }
                for c in Tuples::new(s.len(), 1) {
                    let ec = s.tuple_extent(&c);
                    if alg.leq(ec, inv.extent) {
                        let v = engine.value(&inv, level, x, &inv.anchor, &c).unwrap();
                        assert_eq!(v, ec);
                    }
                }
            }
        }
    }
}

#[test]
fn equal_invariants_stay_equal_under_restriction() {
    for (m, n) in pairs() {
        let mut engine = Engine::pair(&m, &n, Caps::default()).unwrap();
        let s = [&m, &n];
        let all = anchors(&m, &n);
        let alg = m.algebra().clone();
        for alpha in 0..=2 {
            for (x, a) in &all {
                for (y, b) in &all {
                    if a.len() != b.len() || s[*x].tuple_extent(a) != s[*y].tuple_extent(b) {
                        continue;
                    }
                    let i = engine.invariant(*x, a, alpha).unwrap();
                    let j = engine.invariant(*y, b, alpha).unwrap();
                    if engine.compare(&i, &j).unwrap() != Comparison::Equal {
                        continue;
                    }
                    for p in alg.elements() {
                        let ra = s[*x].restrict_tuple(a, p);
                        let rb = s[*y].restrict_tuple(b, p);
                        let i = engine.invariant(*x, &ra, alpha).unwrap();
                        let j = engine.invariant(*y, &rb, alpha).unwrap();
                        assert_eq!(engine.compare(&i, &j).unwrap(), Comparison::Equal);
                    }
                }
            }
        }
    }
}

#[test]
fn divergence_persists_at_higher_levels() {
    let (m, n) =
        Structure::disjointify(&common::pure_set("M", 2), &common::pure_set("N", 3)).unwrap();
    let mut engine = Engine::pair(&m, &n, Caps::default()).unwrap();
    for alpha in 3..=5 {
        let i = engine.invariant(0, &[], alpha).unwrap();
        let j = engine.invariant(1, &[], alpha).unwrap();
        match engine.compare(&i, &j).unwrap() {
            Comparison::Differ(Divergence::Key { level, .. }) => assert_eq!(level, 3),
            other => panic!("{other:?}"),
        }
    }
    for (m, n) in pairs() {
        let mut engine = Engine::pair(&m, &n, Caps::default()).unwrap();
        for alpha in 0..3 {
            let i = engine.invariant(0, &[], alpha).unwrap();
            let j = engine.invariant(1, &[], alpha).unwrap();
            if engine.compare(&i, &j).unwrap() != Comparison::Equal {
                let i = engine.invariant(0, &[], alpha + 1).unwrap();
                let j = engine.invariant(1, &[], alpha + 1).unwrap();
                assert_ne!(engine.compare(&i, &j).unwrap(), Comparison::Equal);
            }
        }
    }
}

#[test]
fn sentences_force_themselves_and_have_the_right_rank() {
    for (m, n) in pairs() {
        let mut engine = Engine::pair(&m, &n, Caps::default()).unwrap();
        for (x, a) in anchors(&m, &n) {
            let s = [&m, &n][x];
            for alpha in 0..=2 {
                let phi = engine.scott_sentence(x, &a, alpha).unwrap();
                assert_eq!(engine.eval(x, &phi, &a).unwrap(), s.tuple_extent(&a));
                assert_eq!(phi.qdegree(), alpha);
                assert!(phi.free_vars().iter().all(|&v| (v as usize) < a.len()));
            }
        }
    }
}

/// `[∃ū φ^α_{K,s̄t̄}(ā,ū)]_M` against the level-`α+1` table, evaluated with a
/// fresh evaluator.
#[test]
fn existential_sentences_compute_table_values() {
    for (m, n) in pairs() {
        let mut engine = Engine::pair(&m, &n, Caps::default()).unwrap();
        for (x, a) in anchors(&m, &n).into_iter().filter(|(_, a)| a.len() <= 1) {
            let s = [&m, &n][x];
            let mut ev = Evaluator::new(s);
            for alpha in 0..=1 {
                let inv = engine.invariant(x, &a, alpha + 1).unwrap();
                for (k, v) in engine.table(&inv, alpha + 1) {
                    let mut st = k.s.clone();
                    st.extend_from_slice(&k.t);
                    let phi = engine.scott_sentence(k.probe, &st, alpha).unwrap();
                    let vars: Vec<Var> = (a.len()..a.len() + k.t.len()).map(|v| v as Var).collect();
                    let f = Formula::Exists(vars, phi);
                    assert_eq!(
                        ev.eval_tuple(&f, &inv.anchor).unwrap(),
                        v,
                        "{}",
                        engine.describe_key(&k)
                    );
                }
            }
        }
    }
}

#[test]
fn four_characterizations_agree_on_fixtures() {
    for (m, n) in pairs() {
        let mut engine = Engine::pair(&m, &n, Caps::default()).unwrap();
        let mut anchors = vec![(vec![], vec![])];
        for a in Tuples::new(m.len(), 1) {
            for b in Tuples::new(n.len(), 1) {
                if m.tuple_extent(&a) == n.tuple_extent(&b) {
                    anchors.push((a.clone(), b));
                }
            }
        }
        for (a, b) in anchors {
            for alpha in 0..=2 {
                let i = engine.invariant(0, &a, alpha).unwrap();
                let j = engine.invariant(1, &b, alpha).unwrap();
                let inv = engine.compare(&i, &j).unwrap() == Comparison::Equal;
                let q = sim_alpha(&m, &a, &n, &b, alpha, Config::default())
                    .unwrap()
                    .is_some();
                let game = solve(
                    &GameConfig::positional(&m, &a, &n, &b, alpha, 1).unwrap(),
                    None,
                )
                .unwrap()
                .winner;
                let phi_m = engine.scott_sentence(0, &a, alpha).unwrap();
                let phi_n = engine.scott_sentence(1, &b, alpha).unwrap();
                let forcing =
                    engine.forces(1, &phi_m, &b).unwrap() && engine.forces(0, &phi_n, &a).unwrap();
                let label = format!("{} {:?} / {} {:?} at {alpha}", m.name(), a, n.name(), b);
                assert_eq!(inv, q, "{label}");
                assert_eq!(q, game == Player::II, "{label}");
                assert_eq!(q, forcing, "{label}");
            }
        }
    }
}

#[test]
fn engine_rejects_bad_inputs() {
    let m = common::pure_set("M", 2);
    let mut engine = Engine::pair(&m, &m, Caps::default()).unwrap();
    let x = m.section("x0").unwrap();
    assert!(matches!(
        engine.invariant(0, &[x, x, x], 4),
        Err(InvariantError::CapExceeded {
            len: 3,
            alpha: 4,
            cap: 1,
            max: 6
        })
    ));
    assert!(matches!(
        Engine::new(&[&m], &[], Caps::default()),
        Err(InvariantError::NoProbes)
    ));

    let mid = Arc::new(omega_core::heyting::Heyting::chain3());
    let mut sig = Signature::new();
    let c = sig.add_const("c").unwrap();
    let mut b = StructureBuilder::new("Lax", mid.clone(), Arc::new(sig)).lax_constants(true);
    let p = b.section("p", mid.elem("m").unwrap()).unwrap();
    b.constant(c, omega_core::presheaf::SecRef::gen(p));
    let lax = b.build().unwrap();
    assert!(matches!(
        Engine::pair(&lax, &lax, Caps::default()),
        Err(InvariantError::LaxConstants)
    ));
}
