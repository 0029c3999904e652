mod common;

use std::sync::Arc;

use omega_core::gen::{self, SignatureShape, StructureShape};
use omega_core::heyting::Heyting;
use omega_core::presheaf::{
    Law, Sec, SecRef, Signature, Structure, StructureBuilder, StructureError, Tuples,
};

fn random_structures(seed: u64, count: usize) -> Vec<Structure> {
    let mut rng = common::rng(seed);
    (0..count)
        .map(|i| {
            let alg = Arc::new(gen::algebra(&mut rng, 3));
            let sig = Arc::new(gen::signature(&mut rng, SignatureShape::default()));
            gen::structure(
                &mut rng,
                &format!("S{i}"),
                &alg,
                &sig,
                StructureShape::default(),
            )
        })
        .collect()
}

/// Checks every law directly from the tables, without `validate`.
fn check_laws(m: &Structure) {
    let alg = m.algebra();
    let es = common::elems(alg);
    for a in m.sections() {
        assert_eq!(m.restrict(a, m.extent(a)), a);
        for &p in &es {
            let r = m.restrict(a, p);
            assert_eq!(m.extent(r), alg.meet(m.extent(a), p));
            for &q in &es {
                assert_eq!(m.restrict(r, q), m.restrict(a, alg.meet(p, q)));
            }
        }
        for b in m.sections() {
            let both = alg.meet(m.extent(a), m.extent(b));
            let agree = alg.big_join(
                alg.down(both)
                    .filter(|&p| m.restrict(a, p) == m.restrict(b, p)),
            );
            assert_eq!(m.eq(a, b), agree);
            for &p in &es {
                assert_eq!(
                    m.eq(m.restrict(a, p), m.restrict(b, p)),
                    alg.meet(m.eq(a, b), p)
                );
            }
        }
    }
    let sig = m.signature();
    for r in sig.rels() {
        let k = sig.rel_arity(r);
        for t in Tuples::new(m.len(), k) {
            let v = m.rel(r, &t);
            assert!(alg.leq(v, m.tuple_extent(&t)));
            for &p in &es {
                assert_eq!(m.rel(r, &m.restrict_tuple(&t, p)), alg.meet(v, p));
            }
            for u in Tuples::new(m.len(), k) {
                assert!(alg.leq(alg.meet(m.tuple_eq(&t, &u), v), m.rel(r, &u)));
            }
        }
    }
    for f in sig.funs() {
        let k = sig.fun_arity(f);
        for t in Tuples::new(m.len(), k) {
            let y = m.fun(f, &t);
            assert_eq!(m.extent(y), m.tuple_extent(&t));
            for &p in &es {
                assert_eq!(m.fun(f, &m.restrict_tuple(&t, p)), m.restrict(y, p));
            }
            for u in Tuples::new(m.len(), k) {
                let lhs = alg.meet(m.tuple_eq(&t, &u), m.extent(y));
                assert!(alg.leq(lhs, m.eq(y, m.fun(f, &u))));
            }
        }
    }
    for c in sig.consts() {
        assert_eq!(m.extent(m.constant(c)), alg.top());
    }
}

#[test]
fn fixtures_obey_every_law() {
    for m in common::fixtures() {
        assert!(m.validate().is_empty(), "{}", m.name());
        check_laws(&m);
    }
}

#[test]
fn random_structures_obey_every_law() {
    for m in random_structures(3, 40) {
        assert!(m.validate().is_empty(), "{}", m.name());
        check_laws(&m);
    }
}

#[test]
fn relation_value_above_extent_is_a_violation() {
    let alg = Arc::new(Heyting::chain3());
    let m = alg.elem("m").unwrap();
    let mut sig = Signature::new();
    let r = sig.add_rel("R", 1).unwrap();
    let mut b = StructureBuilder::new("Bad", alg.clone(), Arc::new(sig));
    let a = b.section("a", m).unwrap();
    b.rel(r, vec![SecRef::gen(a)], alg.top()).unwrap();
    match b.build() {
        Err(StructureError::Law(v)) => {
            assert_eq!(v.law, Law::RelationBounded);
            assert!(v.to_string().contains("R(ā)≤Eā"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn conflicting_restricted_relation_values_are_a_violation() {
    let alg = Arc::new(Heyting::chain3());
    let m = alg.elem("m").unwrap();
    let mut sig = Signature::new();
    let r = sig.add_rel("R", 1).unwrap();
    let mut b = StructureBuilder::new("Bad", alg.clone(), Arc::new(sig));
    let a = b.section("a", alg.top()).unwrap();
    b.rel(r, vec![SecRef::gen(a)], alg.top()).unwrap();
    b.rel(r, vec![SecRef::at(a, m)], alg.bot()).unwrap();
    match b.build() {
        Err(StructureError::Law(v)) => assert_eq!(v.law, Law::RelationRestriction),
        other => panic!("{other:?}"),
    }
}

#[test]
fn partial_constant_needs_lax_mode() {
    let alg = Arc::new(Heyting::chain3());
    let m = alg.elem("m").unwrap();
    let mut sig = Signature::new();
    let c = sig.add_const("c").unwrap();
    let sig = Arc::new(sig);
    let mut b = StructureBuilder::new("C", alg.clone(), sig.clone());
    let a = b.section("a", m).unwrap();
    b.constant(c, SecRef::gen(a));
    assert!(matches!(b.build(), Err(StructureError::Law(v)) if v.law == Law::ConstantGlobal));
    let s = b.lax_constants(true).build().unwrap();
    assert!(!s.constants_global());
}

#[test]
fn disjointify_separates_owners_and_names() {
    let m = common::pure_set("M", 2);
    let (a, b) = Structure::disjointify(&m, &m).unwrap();
    assert_ne!(a.owner(), b.owner());
    assert_ne!(a.name(), b.name());
    assert_eq!(a.len(), b.len());
}

#[test]
fn section_lookup_by_label() {
    let m = common::chain_fixture();
    let a = m.section("a").unwrap();
    let am = m.section("a|m").unwrap();
    assert_eq!(m.restrict(a, m.algebra().elem("m").unwrap()), am);
    assert_eq!(m.section("b|m").unwrap(), am);
    assert!(m.section("nope").is_err());
    let t: Vec<Sec> = vec![a, am];
    assert_eq!(m.tuple_extent(&t), m.algebra().elem("m").unwrap());
}
