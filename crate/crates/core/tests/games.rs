mod common;

use std::sync::Arc;

use omega_core::backforth::{
    enumerate_partial_isos, sim_alpha, BackForth, Config, PartialIso, Side,
};
use omega_core::games::{
    apply_ii, auto_play, candidate_entries, is_legal_i, is_legal_ii, legal_moves_i, legal_moves_ii,
    solve, GameConfig, GameError, GameState, MoveII, Player, SearchOracle, Strategy, StrategyI,
    StrategyII,
};
use omega_core::gen::{self, SignatureShape, StructureShape};
use omega_core::presheaf::{Sec, Structure, Tuples};

fn pairs() -> Vec<(Structure, Structure)> {
    let mut out: Vec<(Structure, Structure)> = common::fixture_pairs()
        .into_iter()
        .map(|(m, n)| Structure::disjointify(&m, &n).unwrap())
        .collect();
    let mut rng = common::rng(50);
    for i in 0..12 {
        let alg = Arc::new(gen::small_algebra(&mut rng, 5));
        let sig = Arc::new(gen::signature(&mut rng, SignatureShape::relational()));
        let shape = StructureShape {
            max_generators: 2,
            ..StructureShape::default()
        };
        let m = gen::structure(&mut rng, &format!("G{i}"), &alg, &sig, shape);
        let n = gen::structure(&mut rng, &format!("H{i}"), &alg, &sig, shape);
        out.push(Structure::disjointify(&m, &n).unwrap());
    }
    out
}

/// Same-extent anchor pairs of length at most one.
fn anchors(m: &Structure, n: &Structure) -> Vec<(Vec<Sec>, Vec<Sec>)> {
    let mut out = vec![(vec![], vec![])];
    for a in Tuples::new(m.len(), 1) {
        for b in Tuples::new(n.len(), 1) {
            if m.tuple_extent(&a) == n.tuple_extent(&b) {
                out.push((a.clone(), b));
            }
        }
    }
    out
}

#[test]
fn solver_search_and_refinement_agree() {
    let mut games = 0;
    for (m, n) in pairs() {
        for (a, b) in anchors(&m, &n) {
            for alpha in 0..=2 {
                let cfg = GameConfig::positional(&m, &a, &n, &b, alpha, 1).unwrap();
                let solved = solve(&cfg, None).unwrap().winner;
                let searched = SearchOracle::new(&cfg, None).winner().unwrap();
                let sim = sim_alpha(&m, &a, &n, &b, alpha, Config::default())
                    .unwrap()
                    .is_some();
                assert_eq!(
                    solved,
                    searched,
                    "{} {:?} / {} {:?} at {alpha}",
                    m.name(),
                    a,
                    n.name(),
                    b
                );
                assert_eq!(solved == Player::II, sim);
                games += 1;
            }
        }
    }
    assert!(games > 100);
}

#[test]
fn pure_sets_two_and_three() {
    let (m, n) =
        Structure::disjointify(&common::pure_set("M", 2), &common::pure_set("N", 3)).unwrap();
    for (alpha, winner) in [(2, Player::II), (3, Player::I)] {
        let cfg = GameConfig::positional(&m, &[], &n, &[], alpha, 1).unwrap();
        assert_eq!(solve(&cfg, None).unwrap().winner, winner);
        assert_eq!(SearchOracle::new(&cfg, None).winner().unwrap(), winner);
    }
}

/// II's strategy answers every line of play I can choose.
fn replay_ii(cfg: &GameConfig<'_>, strategy: &mut StrategyII<'_>, state: &GameState, depth: usize) {
    assert!(depth <= cfg.alpha, "game outlived its budget");
    let moves: Vec<_> = legal_moves_i(cfg, state).collect();
    for mv in moves {
        assert!(is_legal_i(cfg, state, &mv));
        let resp = strategy.respond(state, &mv).unwrap();
        assert!(
            is_legal_ii(cfg, state, &mv, &resp),
            "II's answer is illegal"
        );
        let next = apply_ii(state, &mv, resp);
        replay_ii(cfg, strategy, &next, depth + 1);
    }
}

/// I's strategy beats every legal answer II can give, including ones using
/// non-minimal extensions from `pool`: the legal entries that stay in `Q`
/// never cover the move, so every answer contains a losing entry, and I
/// continues from each of those.
fn replay_i(
    cfg: &GameConfig<'_>,
    strategy: &mut StrategyI<'_>,
    engine: &mut BackForth<'_>,
    state: &GameState,
    pool: &[PartialIso],
    depth: usize,
) {
    assert!(depth <= cfg.alpha, "game outlived its budget");
    if depth == 0 && !engine.is_partial_iso(&state.h) {
        // II has lost before the first move.
        return;
    }
    let mv = strategy
        .next_move(state)
        .unwrap()
        .expect("I has a winning move");
    assert!(is_legal_i(cfg, state, &mv));
    let alg = cfg.m.algebra();
    let src = if mv.side == Side::M { cfg.m } else { cfg.n };
    let mut covered = alg.bot();
    let mut losing = Vec::new();
    for e in candidate_entries(cfg, state, &mv, pool) {
        if engine.member(mv.alpha, e.q, &e.h).unwrap() {
            covered = alg.join(covered, e.q);
        } else {
            losing.push(e);
        }
    }
    assert_ne!(
        covered,
        src.tuple_extent(&mv.tuple),
        "II can answer with winning entries only"
    );
    for e in losing {
        let next = apply_ii(state, &mv, MoveII { entries: vec![e] });
        replay_i(cfg, strategy, engine, &next, pool, depth + 1);
    }
}

#[test]
fn strategies_win_every_line() {
    let mut seen = [0, 0];
    for (m, n) in pairs()
        .into_iter()
        .filter(|(m, n)| m.len() <= 5 && n.len() <= 5)
    {
        let pool = enumerate_partial_isos(&m, &n, Some(300));
        for (a, b) in anchors(&m, &n) {
            for alpha in 0..=2 {
                let cfg = GameConfig::positional(&m, &a, &n, &b, alpha, 1).unwrap();
                let sol = solve(&cfg, None).unwrap();
                let state = GameState::initial(&cfg);
                match sol.strategy {
                    Strategy::II(mut s) => {
                        seen[1] += 1;
                        replay_ii(&cfg, &mut s, &state, 0);
                    }
                    Strategy::I(mut s) => {
                        seen[0] += 1;
                        let mut engine = BackForth::new(&m, &n, Config::default()).unwrap();
                        replay_i(&cfg, &mut s, &mut engine, &state, &pool, 0);
                    }
                }
            }
        }
    }
    assert!(seen[0] > 5 && seen[1] > 5, "{seen:?}");
}

#[test]
fn budget_zero_only_checks_the_map() {
    let (m, n) =
        Structure::disjointify(&common::diamond_fixture(), &common::diamond_fixture()).unwrap();
    let isos = enumerate_partial_isos(&m, &n, None);
    let a = m.section("a").unwrap();
    for b in n.sections().filter(|&b| n.extent(b) == n.algebra().top()) {
        let cfg = GameConfig::positional(&m, &[a], &n, &[b], 0, 1).unwrap();
        let state = GameState::initial(&cfg);
        assert_eq!(legal_moves_i(&cfg, &state).count(), 0);
        let expected = if isos.contains(&cfg.h) {
            Player::II
        } else {
            Player::I
        };
        assert_eq!(solve(&cfg, None).unwrap().winner, expected);
    }
}

#[test]
fn auto_play_reports_the_winner() {
    for (m, n) in pairs().into_iter().take(8) {
        for alpha in 0..=3 {
            let cfg = GameConfig::positional(&m, &[], &n, &[], alpha, 1).unwrap();
            let winner = solve(&cfg, None).unwrap().winner;
            let (played, lines) = auto_play(&cfg, None).unwrap();
            assert_eq!(played, winner);
            assert!(lines[0].starts_with("start:"));
            assert!(lines.len() <= 2 + 2 * alpha);
        }
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let m = common::chain_fixture();
    let (a, b) = Structure::disjointify(&m, &m).unwrap();
    let x = a.section("a").unwrap();
    let d = a.section("d").unwrap();
    let bad = |r: Result<GameConfig<'_>, GameError>, needle: &str| match r {
        Err(GameError::ConfigInvalid(msg)) => assert!(msg.contains(needle), "{msg}"),
        other => panic!("expected rejection, got {:?}", other.map(|c| c.alpha)),
    };
    bad(GameConfig::positional(&m, &[x], &m, &[x], 1, 1), "disjoint");
    bad(GameConfig::positional(&a, &[x], &b, &[], 1, 1), "lengths");
    bad(GameConfig::positional(&a, &[x], &b, &[d], 1, 1), "extents");
    bad(GameConfig::positional(&a, &[x], &b, &[x], 1, 0), "move cap");
}

#[test]
fn search_budget_is_reported() {
    let (m, n) =
        Structure::disjointify(&common::pure_set("M", 3), &common::pure_set("N", 4)).unwrap();
    let cfg = GameConfig::positional(&m, &[], &n, &[], 3, 1).unwrap();
    assert!(matches!(
        SearchOracle::new(&cfg, Some(3)).winner(),
        Err(GameError::Search(_))
    ));
    assert!(matches!(solve(&cfg, Some(3)), Err(GameError::Search(_))));
}

#[test]
fn enumerated_answers_are_legal() {
    let (m, n) =
        Structure::disjointify(&common::chain_fixture(), &common::chain_fixture()).unwrap();
    let pool = enumerate_partial_isos(&m, &n, None);
    let a = m.section("a").unwrap();
    let b = n.section("b").unwrap();
    let cfg = GameConfig::positional(&m, &[a], &n, &[b], 2, 1).unwrap();
    let state = GameState::initial(&cfg);
    let mut answered = 0;
    for mv in legal_moves_i(&cfg, &state) {
        for resp in legal_moves_ii(&cfg, &state, &mv, &pool).take(50) {
            assert!(is_legal_ii(&cfg, &state, &mv, &resp));
            answered += 1;
        }
    }
    assert!(answered > 0);
}
