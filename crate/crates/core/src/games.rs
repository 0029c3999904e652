//! The game `G_α(M,ā,N,b̄,h)`: legality, solving with strategies, and an
//! independent exhaustive search used as an oracle.
//!
//! Player I picks a smaller ordinal budget and a tuple `s̄` from either side
//! below the current extent `q*`. Player II answers with a family of tuples
//! from the other side whose extents join to `Es̄`, each with a partial
//! isomorphism. I then picks one member of the family to continue from. The
//! player who cannot move loses.

use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::backforth::{BackForth, BackForthError, Config, CoverEntry, PartialIso, Side};
use crate::heyting::Elem;
use crate::presheaf::{Sec, Structure};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Player {
    I,
    II,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GameError {
    #[error("invalid game configuration: {0}")]
    ConfigInvalid(String),
    #[error("{0}")]
    Search(#[from] BackForthError),
}

#[derive(Clone, Debug)]
pub struct GameConfig<'a> {
    pub m: &'a Structure,
    pub n: &'a Structure,
    pub a: Vec<Sec>,
    pub b: Vec<Sec>,
    pub h: PartialIso,
    pub alpha: usize,
    pub move_cap: usize,
}

impl<'a> GameConfig<'a> {
    /// Game started from the positional map `ā↾Eā ↦ b̄↾Eā`.
    pub fn positional(
        m: &'a Structure,
        a: &[Sec],
        n: &'a Structure,
        b: &[Sec],
        alpha: usize,
        move_cap: usize,
    ) -> Result<Self, GameError> {
        if a.len() != b.len() {
            return Err(GameError::ConfigInvalid(alloc::format!(
                "tuples have lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        let p = m.tuple_extent(a);
        let h = PartialIso::positional(m, a, n, b, p);
        let cfg = GameConfig {
            m,
            n,
            a: a.to_vec(),
            b: b.to_vec(),
            h,
            alpha,
            move_cap,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |s: &str| Err(GameError::ConfigInvalid(s.into()));
        if !self.m.same_language(self.n) {
            return bad("structures differ in algebra or signature");
        }
        if self.m.owner() == self.n.owner() {
            return bad("carriers are not disjoint");
        }
        if self.a.len() != self.b.len() {
            return bad("tuples differ in length");
        }
        let p = self.m.tuple_extent(&self.a);
        if p != self.n.tuple_extent(&self.b) {
            return bad("tuple extents differ");
        }
        if self.move_cap == 0 {
            return bad("move cap must be positive");
        }
        for (x, y) in self.a.iter().zip(&self.b) {
            if self.h.apply(self.m, self.n, self.m.restrict(*x, p)) != Some(self.n.restrict(*y, p))
            {
                return bad("h does not map the tuples positionally");
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> Elem {
        self.m.tuple_extent(&self.a)
    }

    fn backforth(&self, budget: Option<u64>) -> Result<BackForth<'a>, GameError> {
        Ok(BackForth::new(
            self.m,
            self.n,
            Config {
                move_cap: self.move_cap,
                q0_variant: false,
                budget,
            },
        )?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MoveI {
    /// Index into II's last answer; `None` on the first move.
    pub choice: Option<usize>,
    pub alpha: usize,
    pub side: Side,
    pub tuple: Vec<Sec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MoveII {
    pub entries: Vec<CoverEntry>,
}

#[derive(Clone, Debug)]
pub struct GameState {
    pub move_index: usize,
    pub h: PartialIso,
    pub q: Elem,
    pub budget: usize,
    /// II's last answer, from which I's next move chooses.
    pub pending: Option<MoveII>,
    pub history: Vec<(MoveI, MoveII)>,
}

impl GameState {
    pub fn initial(cfg: &GameConfig<'_>) -> Self {
        GameState {
            move_index: 0,
            h: cfg.h.clone(),
            q: cfg.extent(),
            budget: cfg.alpha,
            pending: None,
            history: Vec::new(),
        }
    }

    /// Current `(h*, q*)` after I selects `choice`.
    fn focus(&self, choice: Option<usize>) -> Option<(PartialIso, Elem)> {
        match (&self.pending, choice) {
            (None, None) => Some((self.h.clone(), self.q)),
            (Some(r), Some(j)) => r.entries.get(j).map(|e| (e.h.clone(), e.q)),
            _ => None,
        }
    }
}

/// Legal first components for I: the choices and the extents below them.
pub fn legal_moves_i<'s>(
    cfg: &'s GameConfig<'_>,
    state: &'s GameState,
) -> impl Iterator<Item = MoveI> + 's {
    let choices: Vec<Option<usize>> = match &state.pending {
        None => alloc::vec![None],
        Some(r) => (0..r.entries.len()).map(Some).collect(),
    };
    let alg = cfg.m.algebra();
    choices.into_iter().flat_map(move |choice| {
        let q = state.focus(choice).map(|f| f.1).unwrap_or(alg.bot());
        (0..state.budget).rev().flat_map(move |alpha| {
            [Side::M, Side::N].into_iter().flat_map(move |side| {
                let s = match side {
                    Side::M => cfg.m,
                    Side::N => cfg.n,
                };
                (1..=cfg.move_cap).flat_map(move |k| {
                    crate::presheaf::Tuples::new(s.len(), k)
                        .filter(move |t| alg.leq(s.tuple_extent(t), q))
                        .map(move |tuple| MoveI {
                            choice,
                            alpha,
                            side,
                            tuple,
                        })
                })
            })
        })
    })
}

pub fn is_legal_i(cfg: &GameConfig<'_>, state: &GameState, mv: &MoveI) -> bool {
    let Some((_, q)) = state.focus(mv.choice) else {
        return false;
    };
    let s = match mv.side {
        Side::M => cfg.m,
        Side::N => cfg.n,
    };
    mv.alpha < state.budget
        && (1..=cfg.move_cap).contains(&mv.tuple.len())
        && mv.tuple.iter().all(|x| x.index() < s.len())
        && cfg.m.algebra().leq(s.tuple_extent(&mv.tuple), q)
}

/// All conditions on one answer entry except the covering condition.
pub fn entry_legal(cfg: &GameConfig<'_>, state: &GameState, mv: &MoveI, e: &CoverEntry) -> bool {
    let Some((h, _)) = state.focus(mv.choice) else {
        return false;
    };
    let (m, n, alg) = (cfg.m, cfg.n, cfg.m.algebra());
    let (src, dst) = match mv.side {
        Side::M => (m, n),
        Side::N => (n, m),
    };
    if e.t.len() != mv.tuple.len() || e.t.iter().any(|x| x.index() >= dst.len()) {
        return false;
    }
    if dst.tuple_extent(&e.t) != e.q || !alg.leq(e.q, src.tuple_extent(&mv.tuple)) {
        return false;
    }
    let atoms = crate::syntax::canonical_atomics(m.signature());
    if !crate::backforth::is_partial_iso(m, n, &atoms, &e.h.pairs) {
        return false;
    }
    if !e.h.extends(m, n, &h.restrict(m, n, e.q)) {
        return false;
    }
    mv.tuple.iter().zip(&e.t).all(|(&s, &t)| {
        let s = src.restrict(s, e.q);
        match mv.side {
            Side::M => e.h.apply(m, n, s) == Some(t),
            Side::N => e.h.apply_inverse(m, n, s) == Some(t),
        }
    })
}

/// Whether `resp` is a legal answer to `mv` in `state`.
pub fn is_legal_ii(cfg: &GameConfig<'_>, state: &GameState, mv: &MoveI, resp: &MoveII) -> bool {
    let src = match mv.side {
        Side::M => cfg.m,
        Side::N => cfg.n,
    };
    resp.entries.iter().all(|e| entry_legal(cfg, state, mv, e))
        && cfg.m.algebra().big_join(resp.entries.iter().map(|e| e.q)) == src.tuple_extent(&mv.tuple)
}

/// Candidate entries for II: every answer tuple of a suitable extent paired
/// with its least extension and with each legal pool map.
pub fn candidate_entries(
    cfg: &GameConfig<'_>,
    state: &GameState,
    mv: &MoveI,
    pool: &[PartialIso],
) -> Vec<CoverEntry> {
    let Some((h, _)) = state.focus(mv.choice) else {
        return Vec::new();
    };
    let (src, dst) = match mv.side {
        Side::M => (cfg.m, cfg.n),
        Side::N => (cfg.n, cfg.m),
    };
    let alg = cfg.m.algebra();
    let es = src.tuple_extent(&mv.tuple);
    let mut out = Vec::new();
    for t in crate::presheaf::Tuples::new(dst.len(), mv.tuple.len()) {
        let q = dst.tuple_extent(&t);
        if !alg.leq(q, es) {
            continue;
        }
        let mut pairs = h.restrict(cfg.m, cfg.n, q).pairs;
        for (&s, &y) in mv.tuple.iter().zip(&t) {
            let s = src.restrict(s, q);
            pairs.push(match mv.side {
                Side::M => (s, y),
                Side::N => (y, s),
            });
        }
        let least = PartialIso::new(pairs);
        let mut maps = alloc::vec![least.clone()];
        maps.extend(
            pool.iter()
                .filter(|p| **p != least && p.extends(cfg.m, cfg.n, &least))
                .cloned(),
        );
        for hm in maps {
            let entry = CoverEntry {
                q,
                t: t.clone(),
                h: hm,
            };
            if entry_legal(cfg, state, mv, &entry) {
                out.push(entry);
            }
        }
    }
    out
}

/// Lazily enumerates legal answers: subsets of the candidate entries whose
/// extents join to `Es̄`. Pool maps supply non-minimal extensions.
pub fn legal_moves_ii(
    cfg: &GameConfig<'_>,
    state: &GameState,
    mv: &MoveI,
    pool: &[PartialIso],
) -> Covers {
    let cands = candidate_entries(cfg, state, mv, pool);
    let src = match mv.side {
        Side::M => cfg.m,
        Side::N => cfg.n,
    };
    let alg = cfg.m.algebra().clone();
    let mut suffix = alloc::vec![alg.bot(); cands.len() + 1];
    for i in (0..cands.len()).rev() {
        suffix[i] = alg.join(suffix[i + 1], cands[i].q);
    }
    Covers {
        es: src.tuple_extent(&mv.tuple),
        stack: alloc::vec![(0, alg.bot(), Vec::new())],
        cands,
        suffix,
        alg,
    }
}

/// Depth-first walk over subsets of candidates, pruning branches that can
/// no longer reach the required join.
pub struct Covers {
    cands: Vec<CoverEntry>,
    suffix: Vec<Elem>,
    es: Elem,
    alg: alloc::sync::Arc<crate::heyting::Heyting>,
    stack: Vec<(usize, Elem, Vec<usize>)>,
}

impl Iterator for Covers {
    type Item = MoveII;

    fn next(&mut self) -> Option<MoveII> {
        while let Some((i, acc, chosen)) = self.stack.pop() {
            if self.alg.join(acc, self.suffix[i]) != self.es {
                continue;
            }
            if i == self.cands.len() {
                return Some(MoveII {
                    entries: chosen.iter().map(|&j| self.cands[j].clone()).collect(),
                });
            }
            self.stack.push((i + 1, acc, chosen.clone()));
            let mut with = chosen;
            with.push(i);
            self.stack
                .push((i + 1, self.alg.join(acc, self.cands[i].q), with));
        }
        None
    }
}

/// Applies I's move: focus on the chosen entry and lower the budget.
pub fn apply_i(state: &GameState, mv: &MoveI) -> GameState {
    let (h, q) = state.focus(mv.choice).expect("legal move");
    GameState {
        move_index: state.move_index,
        h,
        q,
        budget: mv.alpha,
        pending: None,
        history: state.history.clone(),
    }
}

pub fn apply_ii(state: &GameState, mv: &MoveI, resp: MoveII) -> GameState {
    let mut next = apply_i(state, mv);
    next.move_index += 1;
    next.history.push((mv.clone(), resp.clone()));
    next.pending = Some(resp);
    next
}

/// Winning strategy for the player the solver found.
pub enum Strategy<'a> {
    II(StrategyII<'a>),
    I(StrategyI<'a>),
}

pub struct Solution<'a> {
    pub winner: Player,
    pub strategy: Strategy<'a>,
}

/// Decides the game from `Q_α(Eā)`: II wins exactly when `h` is a member.
pub fn solve<'a>(cfg: &GameConfig<'a>, budget: Option<u64>) -> Result<Solution<'a>, GameError> {
    cfg.validate()?;
    let mut engine = cfg.backforth(budget)?;
    let ii = engine.member(cfg.alpha, cfg.extent(), &cfg.h)?;
    Ok(if ii {
        Solution {
            winner: Player::II,
            strategy: Strategy::II(StrategyII { engine }),
        }
    } else {
        Solution {
            winner: Player::I,
            strategy: Strategy::I(StrategyI { engine }),
        }
    })
}

/// II's strategy: answer `s̄` with forth (or back) witnesses at the new budget.
pub struct StrategyII<'a> {
    engine: BackForth<'a>,
}

impl StrategyII<'_> {
    /// A cover of `Es̄` by answers whose least extensions lie in
    /// `Q_{α'}(q_j)`, trimmed greedily to the entries that enlarge the join.
    pub fn respond(&mut self, state: &GameState, mv: &MoveI) -> Result<MoveII, GameError> {
        let (h, _) = state
            .focus(mv.choice)
            .ok_or_else(|| GameError::ConfigInvalid("bad choice".into()))?;
        let all = self.engine.answers(mv.alpha, &h, mv.side, &mv.tuple)?;
        let alg = self.engine.structures().0.algebra().clone();
        let mut acc = alg.bot();
        let mut entries = Vec::new();
        for e in all {
            if !alg.leq(e.q, acc) {
                acc = alg.join(acc, e.q);
                entries.push(e);
            }
        }
        Ok(MoveII { entries })
    }
}

/// I's strategy: keep playing a tuple whose forth or back clause fails.
pub struct StrategyI<'a> {
    engine: BackForth<'a>,
}

impl StrategyI<'_> {
    /// Picks an entry of II's answer that lies outside `Q` at the budget,
    /// then a budget and tuple that II cannot cover. `None` when no winning
    /// move exists from this state.
    pub fn next_move(&mut self, state: &GameState) -> Result<Option<MoveI>, GameError> {
        let choices: Vec<Option<usize>> = match &state.pending {
            None => alloc::vec![None],
            Some(r) => (0..r.entries.len()).map(Some).collect(),
        };
        for choice in choices {
            let (h, q) = state.focus(choice).expect("choice in range");
            if self.engine.member(state.budget, q, &h)? {
                continue;
            }
            let g = h.restrict(self.engine.structures().0, self.engine.structures().1, q);
            // Least failing level; level 0 cannot fail for II's legal maps.
            let mut beta = 0;
            while self.engine.uniform(beta, q, &g) {
                beta += 1;
            }
            if beta == 0 || beta > state.budget {
                continue;
            }
            let alpha = beta - 1;
            let alg = self.engine.structures().0.algebra().clone();
            for side in [Side::M, Side::N] {
                let moves: Vec<(Vec<Sec>, Elem)> = self.engine.moves(side).to_vec();
                for (s, e) in moves {
                    if !alg.leq(e, q) {
                        continue;
                    }
                    let ans = self.engine.answers(alpha, &h, side, &s)?;
                    if alg.big_join(ans.iter().map(|a| a.q)) != e {
                        return Ok(Some(MoveI {
                            choice,
                            alpha,
                            side,
                            tuple: s,
                        }));
                    }
                }
            }
        }
        Ok(None)
    }
}

type PairList = Vec<(Sec, Sec)>;

/// Exhaustive minimax over game positions, sharing only the partial-iso
/// test with the `Q` engine. II answers with least extensions, which
/// suffices because sub-maps of winning maps stay winning.
pub struct SearchOracle<'a> {
    cfg: GameConfig<'a>,
    atoms: Vec<crate::syntax::AtomKind>,
    memo: HashMap<(PairList, Elem, usize), bool>,
    pub nodes: u64,
    pub budget: Option<u64>,
}

impl<'a> SearchOracle<'a> {
    pub fn new(cfg: &GameConfig<'a>, budget: Option<u64>) -> Self {
        SearchOracle {
            atoms: crate::syntax::canonical_atomics(cfg.m.signature()),
            cfg: cfg.clone(),
            memo: HashMap::new(),
            nodes: 0,
            budget,
        }
    }

    pub fn winner(&mut self) -> Result<Player, GameError> {
        let state = GameState::initial(&self.cfg);
        let v = self.ii_wins(&state.h, state.q, state.budget)?;
        Ok(if v { Player::II } else { Player::I })
    }

    fn ii_wins(&mut self, h: &PartialIso, q: Elem, budget: usize) -> Result<bool, GameError> {
        if !crate::backforth::is_partial_iso(self.cfg.m, self.cfg.n, &self.atoms, &h.pairs) {
            return Ok(false);
        }
        let key = (h.pairs.clone(), q, budget);
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        self.nodes += 1;
        if let Some(b) = self.budget {
            if self.nodes > b {
                return Err(BackForthError::BudgetExhausted(b).into());
            }
        }
        let state = GameState {
            move_index: 0,
            h: h.clone(),
            q,
            budget,
            pending: None,
            history: Vec::new(),
        };
        let cfg = self.cfg.clone();
        let moves: Vec<MoveI> = legal_moves_i(&cfg, &state).collect();
        let alg = cfg.m.algebra().clone();
        let mut result = true;
        'outer: for mv in moves {
            let src = match mv.side {
                Side::M => cfg.m,
                Side::N => cfg.n,
            };
            let es = src.tuple_extent(&mv.tuple);
            let mut covered = alg.bot();
            for e in candidate_entries(&cfg, &state, &mv, &[]) {
                if alg.leq(e.q, covered) {
                    continue;
                }
                if self.ii_wins(&e.h, e.q, mv.alpha)? {
                    covered = alg.join(covered, e.q);
                }
            }
            if covered != es {
                result = false;
                break 'outer;
            }
        }
        self.memo.insert(key, result);
        Ok(result)
    }
}

/// One line per move of a machine-versus-machine run.
pub fn auto_play(
    cfg: &GameConfig<'_>,
    budget: Option<u64>,
) -> Result<(Player, Vec<String>), GameError> {
    let sol = solve(cfg, budget)?;
    let (m, n) = (cfg.m, cfg.n);
    let alg = m.algebra().clone();
    let mut lines = Vec::new();
    let mut state = GameState::initial(cfg);
    lines.push(alloc::format!(
        "start: h = {}, q* = {}, alpha = {}",
        state.h.describe(m, n),
        alg.name(state.q),
        state.budget
    ));
    let mut strategy = sol.strategy;
    loop {
        // Player I's move.
        let mv = match &mut strategy {
            Strategy::I(s) => s.next_move(&state)?,
            Strategy::II(_) => legal_moves_i(cfg, &state).next(),
        };
        let Some(mv) = mv else {
            lines.push("I cannot move; II wins".into());
            return Ok((Player::II, lines));
        };
        lines.push(describe_i(cfg, &mv));
        let resp = match &mut strategy {
            Strategy::II(s) => s.respond(&state, &mv)?,
            Strategy::I(_) => {
                let cands = candidate_entries(cfg, &state, &mv, &[]);
                MoveII { entries: cands }
            }
        };
        if !is_legal_ii(cfg, &state, &mv, &resp) {
            lines.push("II has no legal answer; I wins".into());
            return Ok((Player::I, lines));
        }
        lines.push(describe_ii(cfg, mv.side, &resp));
        state = apply_ii(&state, &mv, resp);
    }
}

pub fn describe_i(cfg: &GameConfig<'_>, mv: &MoveI) -> String {
    let s = match mv.side {
        Side::M => cfg.m,
        Side::N => cfg.n,
    };
    let choice = mv
        .choice
        .map(|j| alloc::format!("j = {j}, "))
        .unwrap_or_default();
    alloc::format!(
        "I: {choice}alpha = {}, s = {} in {}",
        mv.alpha,
        s.tuple_label(&mv.tuple),
        s.name()
    )
}

pub fn describe_ii(cfg: &GameConfig<'_>, side: Side, resp: &MoveII) -> String {
    let t = match side {
        Side::M => cfg.n,
        Side::N => cfg.m,
    };
    let alg = cfg.m.algebra();
    let parts: Vec<String> = resp
        .entries
        .iter()
        .enumerate()
        .map(|(j, e)| {
            alloc::format!(
                "[{j}] q = {}, t = {}, h = {}",
                alg.name(e.q),
                t.tuple_label(&e.t),
                e.h.describe(cfg.m, cfg.n)
            )
        })
        .collect();
    alloc::format!(
        "II: {}",
        if parts.is_empty() {
            "{}".into()
        } else {
            parts.join("; ")
        }
    )
}
