//! Seeded property fuzzing over random algebras, structures and formulae.
//!
//! Instance `i` of a run with seed `s` draws everything from its own seed
//! `instance_seed(s, i)`, so any finding can be replayed alone with
//! `fuzz --replay <instance seed>`.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use omega_core::backforth::{enumerate_partial_isos, BackForth, Config, QTable};
use omega_core::gen::{self, FormulaShape, SignatureShape, StructureShape};
use omega_core::heyting::Heyting;
use omega_core::invariants::{Caps, Comparison, Engine};
use omega_core::presheaf::{Sec, Structure, Tuples};
use omega_core::semantics::{Evaluator, Mutation};
use omega_core::syntax::Formula;
use omega_core::transform::unnest;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::verdicts::Portmanteau;
use crate::Error;

pub const PROPERTIES: [&str; 7] = [
    "unnesting",
    "rank-law",
    "bookkeeping",
    "box-identities",
    "invariance",
    "portmanteau",
    "restriction",
];

#[derive(Clone, Copy, Debug)]
pub struct FuzzConfig {
    pub seed: u64,
    pub count: usize,
    pub mutation: Option<Mutation>,
    pub budget: Option<u64>,
    pub max_alpha: usize,
    pub threads: usize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            seed: 0,
            count: 100,
            mutation: None,
            budget: None,
            max_alpha: 3,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub instance: usize,
    pub instance_seed: u64,
    pub property: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub pass: u64,
    pub fail: u64,
    /// Checks abandoned because a search budget ran out.
    pub skipped: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FuzzReport {
    pub seed: u64,
    pub count: usize,
    pub mutation: Option<String>,
    pub properties: BTreeMap<String, Tally>,
    pub instances_failed: Vec<usize>,
    pub first_counterexample: Option<Finding>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.first_counterexample.is_none()
    }
}

/// SplitMix64 step, used to derive independent per-instance seeds.
pub fn instance_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((i as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn mutation_name(m: Mutation) -> &'static str {
    match m {
        Mutation::ExistsGlobalOnly => "exists-global-only",
        Mutation::ForallUnguarded => "forall-unguarded",
    }
}

struct Instance {
    id: usize,
    seed: u64,
    tallies: BTreeMap<&'static str, Tally>,
    findings: Vec<Finding>,
    mutation: Option<Mutation>,
    budget: Option<u64>,
    max_alpha: usize,
}

impl Instance {
    fn record(&mut self, property: &'static str, result: Result<Option<String>, Error>) {
        let t = self.tallies.entry(property).or_default();
        match result {
            Ok(None) => t.pass += 1,
            Ok(Some(detail)) => {
                t.fail += 1;
                self.findings.push(Finding {
                    instance: self.id,
                    instance_seed: self.seed,
                    property: property.into(),
                    detail,
                });
            }
            Err(_) => t.skipped += 1,
        }
    }
}

fn pick(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// Downsets of a random poset on at most five points, kept to eight
/// elements so that exhaustive checks stay fast.
fn fuzz_algebra(rng: &mut ChaCha8Rng) -> Heyting {
    loop {
        let a = gen::algebra(rng, 5);
        if a.size() <= 8 {
            return a;
        }
    }
}

fn tuples(m: &Structure) -> Tuples {
    Tuples::new(m.len(), if m.len() <= 10 { 2 } else { 1 })
}

fn show(m: &Structure, f: &Formula) -> String {
    f.display(m.signature(), m.algebra()).to_string()
}

/// Value checks on one structure: unnesting, the rank law, `□⊤`/`□⊥` and
/// the `p̌` bookkeeping identities.
fn value_checks(inst: &mut Instance, rng: &mut ChaCha8Rng) {
    let alg = Arc::new(fuzz_algebra(rng));
    let sig = Arc::new(gen::signature(
        rng,
        SignatureShape {
            max_funs: 2,
            ..SignatureShape::default()
        },
    ));
    let m = gen::structure(rng, "M", &alg, &sig, StructureShape::default());
    let mut ev = Evaluator::with_mutation(&m, inst.mutation);
    let shape = FormulaShape {
        boxes: true,
        ..FormulaShape::default()
    };
    for _ in 0..3 {
        let f = gen::formula(rng, &sig, &alg, shape);
        let u = unnest(&f);
        let rank = if f.mrank() == u.qdegree() {
            None
        } else {
            Some(format!(
                "{}: mrank {} but unnested degree {}",
                show(&m, &f),
                f.mrank(),
                u.qdegree()
            ))
        };
        inst.record("rank-law", Ok(rank));
        let mut bad = None;
        for t in tuples(&m) {
            let (x, y) = (ev.eval_tuple(&f, &t), ev.eval_tuple(&u, &t));
            if x != y {
                bad = Some(format!(
                    "{} at {} in {}: {:?} but unnested gives {:?}",
                    show(&m, &f),
                    m.tuple_label(&t),
                    m.name(),
                    x.map(|e| alg.name(e).to_string()),
                    y.map(|e| alg.name(e).to_string())
                ));
                break;
            }
        }
        inst.record("unnesting", Ok(bad));
        let f = Arc::new(f);
        let top = Formula::Box(alg.top(), f.clone());
        let bot = Formula::Box(alg.bot(), f.clone());
        let neg = Formula::Not(f.clone());
        let mut bad = None;
        for t in tuples(&m) {
            if ev.eval_tuple(&top, &t) != ev.eval_tuple(&f, &t) {
                bad = Some(format!("□⊤ is not the identity on {}", show(&m, &f)));
            } else if ev.eval_tuple(&bot, &t) != ev.eval_tuple(&neg, &t) {
                bad = Some(format!("□⊥ is not negation on {}", show(&m, &f)));
            }
            if bad.is_some() {
                break;
            }
        }
        inst.record("box-identities", Ok(bad));
    }
    let mut bad = None;
    for p in alg.elements() {
        for q in alg.elements() {
            let (cp, cq) = (Arc::new(Formula::Check(p)), Arc::new(Formula::Check(q)));
            let checks = [
                (
                    Formula::Implies(cp.clone(), cq.clone()),
                    alg.implies(p, q),
                    "→",
                ),
                (
                    Formula::And(vec![cp.clone(), cq.clone()]),
                    alg.meet(p, q),
                    "∧",
                ),
                (
                    Formula::Or(vec![cp.clone(), cq.clone()]),
                    alg.join(p, q),
                    "∨",
                ),
            ];
            for (f, want, op) in checks {
                if ev.eval(&f, &[]).ok() != Some(want) {
                    bad = Some(format!(
                        "bookkeeping law [{}̌ {op} {}̌] = {} {op} {} fails",
                        alg.name(p),
                        alg.name(q),
                        alg.name(p),
                        alg.name(q)
                    ));
                }
            }
        }
    }
    inst.record("bookkeeping", Ok(bad));
}

/// Checks on a random pair: portmanteau agreement, invariance under `Q_α`
/// members, and the restriction lemmas for `Q_α` and invariants.
fn pair_checks(inst: &mut Instance, rng: &mut ChaCha8Rng) {
    let alg = Arc::new(gen::small_algebra(rng, 5));
    let sig = Arc::new(gen::signature(rng, SignatureShape::relational()));
    let shape = StructureShape::default();
    let m = gen::structure(rng, "M", &alg, &sig, shape);
    let n = gen::structure(rng, "N", &alg, &sig, shape);
    let (m, n) = Structure::disjointify(&m, &n).expect("same language");
    let caps = Caps::default();

    let mut anchors: Vec<(Vec<Sec>, Vec<Sec>)> = vec![(vec![], vec![])];
    let mut ones = Vec::new();
    for a in m.sections() {
        for b in n.sections() {
            if m.extent(a) == n.extent(b) {
                ones.push((vec![a], vec![b]));
            }
        }
    }
    for _ in 0..ones.len().min(3) {
        let i = pick(rng, ones.len());
        anchors.push(ones.swap_remove(i));
    }

    match Portmanteau::new(&m, &n, caps, inst.budget, inst.mutation) {
        Ok(mut pm) => {
            for (a, b) in &anchors {
                let top = if a.is_empty() {
                    inst.max_alpha
                } else {
                    inst.max_alpha.min(2)
                };
                for alpha in 0..=top {
                    let r = pm.verdicts(a, b, alpha).map(|v| {
                        (!v.agree).then(|| {
                            format!(
                                "{} {} vs {} {} at alpha {alpha}: invariants equal {}, \
                                 Q witness {}, game winner {}, mutual forcing {}",
                                m.name(),
                                m.tuple_label(a),
                                n.name(),
                                n.tuple_label(b),
                                v.invariants_equal,
                                v.q_witness.is_some(),
                                v.game_winner,
                                v.mutual_forcing
                            )
                        })
                    });
                    inst.record("portmanteau", r);
                }
            }
        }
        Err(e) => inst.record("portmanteau", Err(e)),
    }

    let cfg = Config {
        budget: inst.budget,
        ..Config::default()
    };
    let r = q_checks(inst, rng, &m, &n, cfg);
    if let Err(e) = r {
        inst.record("invariance", Err(e));
    }

    let r = invariant_restriction(&m, &n, &anchors, caps);
    inst.record("restriction", r);
}

fn q_checks(
    inst: &mut Instance,
    rng: &mut ChaCha8Rng,
    m: &Structure,
    n: &Structure,
    cfg: Config,
) -> Result<(), Error> {
    let alg = m.algebra().clone();
    let mut engine = BackForth::new(m, n, cfg)?;
    let mut t = QTable::new(&mut engine, enumerate_partial_isos(m, n, Some(400)))?;
    while t.levels.len() <= 2 {
        t.refine_step(&mut engine)?;
    }
    let (mut em, mut en) = (
        Evaluator::with_mutation(m, inst.mutation),
        Evaluator::with_mutation(n, inst.mutation),
    );
    for alpha in 0..=2 {
        let formulas: Vec<Formula> = (0..3)
            .map(|_| gen::unnested_formula(rng, m.signature(), &alg, 2, alpha, 1))
            .collect();
        let mut invariance = None;
        let mut restriction = None;
        for p in alg.elements() {
            for &i in &t.levels[alpha][p.index()] {
                let h = t.isos[i].restrict(m, n, p);
                for q in alg.elements().filter(|&q| alg.leq(q, p)) {
                    if restriction.is_none() && !engine.member(alpha, q, &h)? {
                        restriction = Some(format!(
                            "{} lies in Q_{alpha}({}) but its restriction is not in Q_{alpha}({})",
                            t.isos[i].describe(m, n),
                            alg.name(p),
                            alg.name(q)
                        ));
                    }
                }
                for f in &formulas {
                    for idx in Tuples::new(h.len(), 2) {
                        let x: Vec<Sec> = idx.iter().map(|s| h.pairs[s.index()].0).collect();
                        let y: Vec<Sec> = idx.iter().map(|s| h.pairs[s.index()].1).collect();
                        if invariance.is_none() && em.eval_tuple(f, &x)? != en.eval_tuple(f, &y)? {
                            invariance = Some(format!(
                                "{} in Q_{alpha}({}) changes the value of {} at {}",
                                h.describe(m, n),
                                alg.name(p),
                                show(m, f),
                                m.tuple_label(&x)
                            ));
                        }
                    }
                }
            }
        }
        inst.record("invariance", Ok(invariance));
        inst.record("restriction", Ok(restriction));
    }
    Ok(())
}

/// Equal invariants stay equal after restricting both anchors.
fn invariant_restriction(
    m: &Structure,
    n: &Structure,
    anchors: &[(Vec<Sec>, Vec<Sec>)],
    caps: Caps,
) -> Result<Option<String>, Error> {
    let mut engine = Engine::pair(m, n, caps)?;
    let alg = m.algebra().clone();
    for (a, b) in anchors.iter().filter(|(a, _)| !a.is_empty()) {
        for alpha in 0..=2 {
            let i = engine.invariant(0, a, alpha)?;
            let j = engine.invariant(1, b, alpha)?;
            if engine.compare(&i, &j)? != Comparison::Equal {
                continue;
            }
            for p in alg.elements() {
                let (ra, rb) = (m.restrict_tuple(a, p), n.restrict_tuple(b, p));
                let i = engine.invariant(0, &ra, alpha)?;
                let j = engine.invariant(1, &rb, alpha)?;
                if engine.compare(&i, &j)? != Comparison::Equal {
                    return Ok(Some(format!(
                        "invariants of {} and {} agree at level {alpha} but not after \
                         restricting to {}",
                        m.tuple_label(a),
                        n.tuple_label(b),
                        alg.name(p)
                    )));
                }
            }
        }
    }
    Ok(None)
}

fn run_instance(id: usize, seed: u64, cfg: &FuzzConfig) -> Instance {
    let mut inst = Instance {
        id,
        seed,
        tallies: BTreeMap::new(),
        findings: Vec::new(),
        mutation: cfg.mutation,
        budget: cfg.budget,
        max_alpha: cfg.max_alpha,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    value_checks(&mut inst, &mut rng);
    pair_checks(&mut inst, &mut rng);
    inst
}

fn assemble(cfg: &FuzzConfig, mut done: Vec<Instance>) -> FuzzReport {
    done.sort_by_key(|i| i.id);
    let mut properties: BTreeMap<String, Tally> = PROPERTIES
        .iter()
        .map(|p| (p.to_string(), Tally::default()))
        .collect();
    let mut instances_failed = Vec::new();
    let mut first = None;
    for inst in &done {
        for (p, t) in &inst.tallies {
            let e = properties.entry(p.to_string()).or_default();
            e.pass += t.pass;
            e.fail += t.fail;
            e.skipped += t.skipped;
        }
        if !inst.findings.is_empty() {
            instances_failed.push(inst.id);
            if first.is_none() {
                first = Some(inst.findings[0].clone());
            }
        }
    }
    FuzzReport {
        seed: cfg.seed,
        count: cfg.count,
        mutation: cfg.mutation.map(|m| mutation_name(m).to_string()),
        properties,
        instances_failed,
        first_counterexample: first,
    }
}

/// Runs `cfg.count` instances, spread over `cfg.threads` workers. The
/// report does not depend on the thread count.
pub fn run(cfg: &FuzzConfig) -> FuzzReport {
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(cfg.count));
    std::thread::scope(|s| {
        for _ in 0..cfg.threads.max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cfg.count {
                    break;
                }
                let inst = run_instance(i, instance_seed(cfg.seed, i), cfg);
                done.lock().expect("no worker panicked").push(inst);
            });
        }
    });
    assemble(cfg, done.into_inner().expect("no worker panicked"))
}

/// Runs the single instance drawn from `instance_seed`.
pub fn replay(instance_seed: u64, cfg: &FuzzConfig) -> FuzzReport {
    let cfg = FuzzConfig {
        seed: instance_seed,
        count: 1,
        ..*cfg
    };
    let inst = run_instance(0, instance_seed, &cfg);
    assemble(&cfg, vec![inst])
}
