//! The four equivalence verdicts on a pair of anchored structures.

use omega_core::backforth::{BackForth, Config};
use omega_core::games::{solve, GameConfig, Player};
use omega_core::invariants::{Caps, Comparison, Engine};
use omega_core::presheaf::{Sec, Structure};
use omega_core::semantics::{env_of, Evaluator, Mutation};
use serde::Serialize;

use crate::Error;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdicts {
    pub alpha: usize,
    pub invariants_equal: bool,
    /// The positional map, when it lies in `Q_α(Eā)`.
    pub q_witness: Option<String>,
    pub game_winner: String,
    pub mutual_forcing: bool,
    pub agree: bool,
}

impl Verdicts {
    pub fn equivalent(&self) -> bool {
        self.q_witness.is_some()
    }
}

/// Computes the verdicts for one pair, sharing engines across levels.
pub struct Portmanteau<'a> {
    m: &'a Structure,
    n: &'a Structure,
    engine: Engine<'a>,
    bf: BackForth<'a>,
    budget: Option<u64>,
    /// Forcing is checked with these evaluators, which may be mutated.
    evals: [Evaluator<'a>; 2],
}

impl<'a> Portmanteau<'a> {
    /// `m` and `n` must already be disjoint copies.
    pub fn new(
        m: &'a Structure,
        n: &'a Structure,
        caps: Caps,
        budget: Option<u64>,
        mutation: Option<Mutation>,
    ) -> Result<Self, Error> {
        let cfg = Config {
            move_cap: caps.move_cap,
            budget,
            ..Config::default()
        };
        Ok(Portmanteau {
            m,
            n,
            engine: Engine::pair(m, n, caps)?,
            bf: BackForth::new(m, n, cfg)?,
            budget,
            evals: [
                Evaluator::with_mutation(m, mutation),
                Evaluator::with_mutation(n, mutation),
            ],
        })
    }

    pub fn verdicts(&mut self, a: &[Sec], b: &[Sec], alpha: usize) -> Result<Verdicts, Error> {
        let (m, n) = (self.m, self.n);
        let w = self.bf.sim(a, b, alpha)?;
        let i = self.engine.invariant(0, a, alpha)?;
        let j = self.engine.invariant(1, b, alpha)?;
        let inv = self.engine.compare(&i, &j)? == Comparison::Equal;
        let cfg = GameConfig::positional(m, a, n, b, alpha, self.bf.config().move_cap)?;
        let winner = solve(&cfg, self.budget)?.winner;
        let phi_m = self.engine.scott_sentence(0, a, alpha)?;
        let phi_n = self.engine.scott_sentence(1, b, alpha)?;
        let fm = self.evals[1].eval_shared(&phi_m, &env_of(b))? == n.tuple_extent(b);
        let fn_ = self.evals[0].eval_shared(&phi_n, &env_of(a))? == m.tuple_extent(a);
        let forcing = fm && fn_;
        let q = w.is_some();
        Ok(Verdicts {
            alpha,
            invariants_equal: inv,
            q_witness: w.map(|w| w.iso.describe(m, n)),
            game_winner: match winner {
                Player::I => "I".into(),
                Player::II => "II".into(),
            },
            mutual_forcing: forcing,
            agree: inv == q && q == (winner == Player::II) && q == forcing,
        })
    }
}
