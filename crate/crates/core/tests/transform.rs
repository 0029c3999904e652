mod common;

use std::sync::Arc;

use omega_core::gen::{self, FormulaShape, SignatureShape, StructureShape};
use omega_core::heyting::Heyting;
use omega_core::presheaf::{Signature, Structure, Tuples};
use omega_core::semantics::Evaluator;
use omega_core::syntax::{parse_formula, Formula};
use omega_core::transform::{
    box_to_check, check_to_box, pp_normal_form, unnest, unnest_atomic, TransformError,
};
use rand_chacha::ChaCha8Rng;

fn has_nested_atom(f: &Formula) -> bool {
    if f.is_atomic() {
        return !f.is_unnested_atomic();
    }
    let mut found = false;
    f.each_child(|g| found |= has_nested_atom(g));
    found
}

fn contains(f: &Formula, pred: &dyn Fn(&Formula) -> bool) -> bool {
    let mut found = pred(f);
    f.each_child(|g| found |= contains(g, pred));
    found
}

fn every_atom_unnested(f: &Formula) -> bool {
    if f.is_atomic() {
        return f.is_unnested_atomic();
    }
    let mut ok = true;
    f.each_child(|g| ok &= every_atom_unnested(g));
    ok
}

/// Structures over each built-in algebra in a signature rich enough for
/// nested terms.
fn term_structures(rng: &mut ChaCha8Rng, count: usize) -> Vec<Structure> {
    let algs = [Heyting::omega2(), Heyting::chain3(), Heyting::diamond()];
    let shape = SignatureShape {
        max_funs: 2,
        ..SignatureShape::default()
    };
    let mut out = Vec::new();
    while out.len() < count {
        let alg = Arc::new(algs[out.len() % 3].clone());
        let sig = gen::signature(rng, shape);
        if sig.funs().next().is_none() && sig.consts().next().is_none() {
            continue;
        }
        let sig = Arc::new(sig);
        out.push(gen::structure(
            rng,
            &format!("T{}", out.len()),
            &alg,
            &sig,
            StructureShape::default(),
        ));
    }
    out
}

fn nested_formula(rng: &mut ChaCha8Rng, m: &Structure, shape: FormulaShape) -> Formula {
    loop {
        let f = gen::formula(rng, m.signature(), m.algebra(), shape);
        if has_nested_atom(&f) {
            return f;
        }
    }
}

#[test]
fn unnesting_preserves_values_and_matches_rank() {
    let mut rng = common::rng(30);
    let structs = term_structures(&mut rng, 20);
    let shape = FormulaShape {
        boxes: true,
        ..FormulaShape::default()
    };
    for m in &structs {
        let mut ev = Evaluator::new(m);
        for _ in 0..10 {
            let f = nested_formula(&mut rng, m, shape);
            let u = unnest(&f);
            let shown = f.display(m.signature(), m.algebra()).to_string();
            assert!(every_atom_unnested(&u), "{shown}");
            assert_eq!(u.mrank(), u.qdegree(), "{shown}");
            assert_eq!(f.mrank(), u.qdegree(), "{shown}");
            assert!(u.free_vars().is_subset(&f.free_vars()));
            for t in Tuples::new(m.len(), 2) {
                assert_eq!(
                    ev.eval_tuple(&f, &t).unwrap(),
                    ev.eval_tuple(&u, &t).unwrap(),
                    "{shown}"
                );
            }
        }
    }
}

#[test]
fn unnesting_is_idempotent_on_unnested_formulas() {
    let mut rng = common::rng(31);
    for m in term_structures(&mut rng, 6) {
        for _ in 0..20 {
            let f = gen::unnested_formula(&mut rng, m.signature(), m.algebra(), 2, 3, 2);
            assert_eq!(unnest(&f), f);
            let g = unnest(&nested_formula(&mut rng, &m, FormulaShape::default()));
            assert_eq!(unnest(&g), g);
        }
    }
}

fn sig() -> Signature {
    let mut s = Signature::new();
    s.add_rel("R", 2).unwrap();
    s.add_fun("f", 1).unwrap();
    s.add_fun("g", 1).unwrap();
    s.add_const("c").unwrap();
    s.add_const("d").unwrap();
    s
}

#[test]
fn rank_law_fails_beyond_rank_three() {
    let (s, a) = (sig(), Heyting::omega2());
    let f = parse_formula("f(g(c)) = g(d)", &s, &a).unwrap();
    assert_eq!(f.mrank(), 4);
    assert_eq!(unnest(&f).qdegree(), 3);
    for text in ["f(g(c)) = v0", "R(f(v0), g(v1))", "c = d", "f(v0) = g(v1)"] {
        let f = parse_formula(text, &s, &a).unwrap();
        assert!(f.mrank() <= 3);
        assert_eq!(unnest_atomic(&f).unwrap().qdegree(), f.mrank(), "{text}");
    }
    let not_atomic = parse_formula("~c = d", &s, &a).unwrap();
    assert_eq!(unnest_atomic(&not_atomic), Err(TransformError::NotAtomic));
}

fn pp_formula(rng: &mut ChaCha8Rng, m: &Structure) -> Formula {
    let shape = FormulaShape {
        connectives: gen::Connectives::Ceu,
        boxes: false,
        depth: 3,
        ..FormulaShape::default()
    };
    loop {
        let f = gen::formula(rng, m.signature(), m.algebra(), shape);
        if f.classify().pp {
            return f;
        }
    }
}

#[test]
fn pp_normal_form_keeps_values() {
    let mut rng = common::rng(32);
    let mut structs = common::fixtures();
    structs.extend(term_structures(&mut rng, 6));
    for m in &structs {
        let mut ev = Evaluator::new(m);
        for _ in 0..15 {
            let f = pp_formula(&mut rng, m);
            let n = pp_normal_form(&f).unwrap();
            match &n {
                Formula::Exists(_, body) => assert!(matches!(**body, Formula::And(_))),
                other => assert!(matches!(other, Formula::And(_))),
            }
            assert!(n.classify().pp);
            for t in Tuples::new(m.len(), 2) {
                assert_eq!(
                    ev.eval_tuple(&f, &t).unwrap(),
                    ev.eval_tuple(&n, &t).unwrap()
                );
            }
        }
    }
}

#[test]
fn box_and_check_translations_keep_values() {
    let mut rng = common::rng(33);
    let mut structs = common::fixtures();
    structs.extend(term_structures(&mut rng, 6));
    let shape = FormulaShape {
        boxes: true,
        ..FormulaShape::default()
    };
    for m in &structs {
        assert!(!common::global_sections(m).is_empty());
        let mut ev = Evaluator::new(m);
        for _ in 0..15 {
            let f = gen::formula(&mut rng, m.signature(), m.algebra(), shape);
            let checks = box_to_check(&f);
            let boxes = check_to_box(&f);
            assert!(!contains(&checks, &|g| matches!(g, Formula::Box(..))));
            assert!(!contains(&boxes, &|g| matches!(g, Formula::Check(_))));
            for t in Tuples::new(m.len(), 2) {
                let v = ev.eval_tuple(&f, &t).unwrap();
                assert_eq!(ev.eval_tuple(&checks, &t).unwrap(), v);
                assert_eq!(ev.eval_tuple(&boxes, &t).unwrap(), v);
            }
        }
    }
}

#[test]
fn check_to_box_needs_a_global_section() {
    // Two incomparable points below a third: `¬a ∨ ¬¬a` misses the top
    // when the only point lives at `a`.
    let alg = Arc::new(
        Heyting::from_poset_downsets(&["a", "b", "c"], &[("a", "c"), ("b", "c")]).unwrap(),
    );
    let a = alg.elem("{a}").unwrap();
    let mut b =
        omega_core::presheaf::StructureBuilder::new("P", alg.clone(), Arc::new(Signature::new()));
    b.section("x", a).unwrap();
    let s = b.build().unwrap();
    let f = Formula::Check(alg.top());
    let mut ev = Evaluator::new(&s);
    assert_eq!(ev.eval(&f, &[]).unwrap(), alg.top());
    assert_ne!(ev.eval(&check_to_box(&f), &[]).unwrap(), alg.top());
}
