//! Partial isomorphisms, the refinements `Q_α(p)`, `∼^p_α`, and Scott rank.
//!
//! A partial isomorphism is kept as a sorted list of section pairs. Sub-maps
//! of members of `Q_α(q)` are again members, so a forth or back step only
//! needs to test the least candidate extension
//! `h↾q ∪ {c̄↾q ↦ d̄}` for each answering tuple `d̄` with `Ed̄ = q`.
//! `Q_α(p)` only looks at `h↾p`, which is what [`BackForth::uniform`]
//! takes as input.

use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::heyting::{Elem, Heyting};
use crate::presheaf::{Sec, Structure, StructureError, Tuples};
use crate::semantics::atomic_value;
use crate::syntax::{canonical_atomics, AtomKind};

/// A finite partial map between carriers, as sorted `(M-section, N-section)`
/// pairs. Whether it is a bijection preserving atomics is checked separately.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Default)]
pub struct PartialIso {
    pub pairs: Vec<(Sec, Sec)>,
}

impl PartialIso {
    pub fn new(mut pairs: Vec<(Sec, Sec)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        PartialIso { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `ā↾p ↦ b̄↾p` positionally.
    pub fn positional(m: &Structure, a: &[Sec], n: &Structure, b: &[Sec], p: Elem) -> Self {
        PartialIso::new(
            a.iter()
                .zip(b)
                .map(|(&x, &y)| (m.restrict(x, p), n.restrict(y, p)))
                .collect(),
        )
    }

    /// `h↾q`: restrictions to `q` of the pairs whose extent lies above `q`.
    pub fn restrict(&self, m: &Structure, n: &Structure, q: Elem) -> Self {
        let alg = m.algebra();
        PartialIso::new(
            self.pairs
                .iter()
                .filter(|(a, _)| alg.leq(q, m.extent(*a)))
                .map(|&(a, b)| (m.restrict(a, q), n.restrict(b, q)))
                .collect(),
        )
    }

    /// Image of `a` under the extension `h(x↾p) = h(x)↾p`, if defined.
    pub fn apply(&self, m: &Structure, n: &Structure, a: Sec) -> Option<Sec> {
        let e = m.extent(a);
        self.pairs
            .iter()
            .find(|(x, _)| m.algebra().leq(e, m.extent(*x)) && m.restrict(*x, e) == a)
            .map(|&(_, y)| n.restrict(y, e))
    }

    /// Preimage of `b` under the extension.
    pub fn apply_inverse(&self, m: &Structure, n: &Structure, b: Sec) -> Option<Sec> {
        let e = n.extent(b);
        self.pairs
            .iter()
            .find(|(_, y)| n.algebra().leq(e, n.extent(*y)) && n.restrict(*y, e) == b)
            .map(|&(x, _)| m.restrict(x, e))
    }

    /// Whether every pair of `other` lies in the extension of `self`.
    pub fn extends(&self, m: &Structure, n: &Structure, other: &PartialIso) -> bool {
        other
            .pairs
            .iter()
            .all(|&(a, b)| self.apply(m, n, a) == Some(b))
    }

    pub fn describe(&self, m: &Structure, n: &Structure) -> alloc::string::String {
        let parts: Vec<alloc::string::String> = self
            .pairs
            .iter()
            .map(|&(a, b)| alloc::format!("{}↦{}", m.label(a), n.label(b)))
            .collect();
        alloc::format!("{{{}}}", parts.join(", "))
    }
}

/// All unnested atomics agree on every tuple drawn from the pairs.
///
/// Tuples from the generated subpresheaf reduce to tuples of pairs by the
/// restriction laws, so this is the full invariance condition. Equality
/// atoms force the map to be well defined, injective and extent-preserving.
pub fn is_partial_iso(
    m: &Structure,
    n: &Structure,
    atoms: &[AtomKind],
    pairs: &[(Sec, Sec)],
) -> bool {
    let sig = m.signature();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &atom in atoms {
        let k = atom.vars(sig);
        for idx in Tuples::new(pairs.len(), k) {
            xs.clear();
            ys.clear();
            for s in &idx {
                let (a, b) = pairs[s.index()];
                xs.push(a);
                ys.push(b);
            }
            if atomic_value(m, atom, &xs) != atomic_value(n, atom, &ys) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackForthError {
    #[error("tuple extents differ: {0} vs {1}")]
    ExtentMismatch(alloc::string::String, alloc::string::String),
    #[error("tuples have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{0}")]
    Structure(#[from] StructureError),
    #[error("search budget of {0} nodes exhausted")]
    BudgetExhausted(u64),
}

/// Which structure a move tuple comes from.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum Side {
    M,
    N,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::M => Side::N,
            Side::N => Side::M,
        }
    }
}

/// One member of a cover: answer `t̄` of extent `q` and the extension `h`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CoverEntry {
    pub q: Elem,
    pub t: Vec<Sec>,
    pub h: PartialIso,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Config {
    /// Longest move tuple; tuples of length `1..=move_cap` are played.
    pub move_cap: usize,
    /// Use `Q_0(p) = {h : ⋀ E(dom h) = p}` instead of all partial isos.
    pub q0_variant: bool,
    /// Abort after this many memo misses.
    pub budget: Option<u64>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            move_cap: 1,
            q0_variant: false,
            budget: None,
        }
    }
}

type PairList = Vec<(Sec, Sec)>;

/// Memoized membership engine for `Q_α(p)` between two structures.
pub struct BackForth<'a> {
    m: &'a Structure,
    n: &'a Structure,
    alg: &'a Heyting,
    atoms: Vec<AtomKind>,
    cfg: Config,
    moves_m: Vec<(Vec<Sec>, Elem)>,
    moves_n: Vec<(Vec<Sec>, Elem)>,
    iso_memo: HashMap<Vec<(Sec, Sec)>, bool>,
    memo: HashMap<(usize, Elem, PairList), bool>,
    nodes: u64,
    exhausted: bool,
}

fn moves(s: &Structure, cap: usize) -> Vec<(Vec<Sec>, Elem)> {
    let mut out = Vec::new();
    for k in 1..=cap {
        for t in Tuples::new(s.len(), k) {
            let e = s.tuple_extent(&t);
            out.push((t, e));
        }
    }
    out
}

impl<'a> BackForth<'a> {
    pub fn new(m: &'a Structure, n: &'a Structure, cfg: Config) -> Result<Self, BackForthError> {
        if !m.same_language(n) {
            return Err(StructureError::Mismatch.into());
        }
        Ok(BackForth {
            m,
            n,
            alg: m.algebra(),
            atoms: canonical_atomics(m.signature()),
            moves_m: moves(m, cfg.move_cap),
            moves_n: moves(n, cfg.move_cap),
            cfg,
            iso_memo: HashMap::new(),
            memo: HashMap::new(),
            nodes: 0,
            exhausted: false,
        })
    }

    pub fn structures(&self) -> (&'a Structure, &'a Structure) {
        (self.m, self.n)
    }

    pub fn config(&self) -> Config {
        self.cfg
    }

    pub fn atoms(&self) -> &[AtomKind] {
        &self.atoms
    }

    fn check_budget(&self) -> Result<(), BackForthError> {
        match (self.exhausted, self.cfg.budget) {
            (true, Some(b)) => Err(BackForthError::BudgetExhausted(b)),
            _ => Ok(()),
        }
    }

    pub fn is_partial_iso(&mut self, h: &PartialIso) -> bool {
        if let Some(v) = self.iso_memo.get(&h.pairs) {
            return *v;
        }
        let v = is_partial_iso(self.m, self.n, &self.atoms, &h.pairs);
        self.iso_memo.insert(h.pairs.clone(), v);
        v
    }

    /// `h ∈ Q_α(p)`.
    pub fn member(
        &mut self,
        alpha: usize,
        p: Elem,
        h: &PartialIso,
    ) -> Result<bool, BackForthError> {
        if !self.is_partial_iso(h) {
            return Ok(false);
        }
        if self.cfg.q0_variant
            && self
                .alg
                .big_meet(h.pairs.iter().map(|x| self.m.extent(x.0)))
                != p
        {
            return Ok(false);
        }
        let g = h.restrict(self.m, self.n, p);
        let v = self.uniform(alpha, p, &g);
        self.check_budget()?;
        Ok(v)
    }

    /// `g ∈ Q_β(q)` for a map whose sections all have extent `q`.
    pub fn uniform(&mut self, beta: usize, q: Elem, g: &PartialIso) -> bool {
        if self.exhausted {
            return false;
        }
        let key = (beta, q, g.pairs.clone());
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        self.nodes += 1;
        if let Some(b) = self.cfg.budget {
            if self.nodes > b {
                self.exhausted = true;
                return false;
            }
        }
        let v = self.uniform_uncached(beta, q, g);
        self.memo.insert(key, v);
        v
    }

    fn uniform_uncached(&mut self, beta: usize, q: Elem, g: &PartialIso) -> bool {
        if !self.is_partial_iso(g) {
            return false;
        }
        if self.cfg.q0_variant {
            let meet = self
                .alg
                .big_meet(g.pairs.iter().map(|x| self.m.extent(x.0)));
            if meet != q {
                return false;
            }
        }
        if beta == 0 {
            return true;
        }
        if !self.uniform(beta - 1, q, g) {
            return false;
        }
        for side in [Side::M, Side::N] {
            let count = match side {
                Side::M => self.moves_m.len(),
                Side::N => self.moves_n.len(),
            };
            for i in 0..count {
                let (s, e) = match side {
                    Side::M => self.moves_m[i].clone(),
                    Side::N => self.moves_n[i].clone(),
                };
                if !self.alg.leq(e, q) {
                    continue;
                }
                if self.cover_join(beta - 1, g, side, &s, e, None) != e {
                    return false;
                }
            }
        }
        true
    }

    /// `h↾r ∪ {s̄↾r ↦ t̄}` (or the mirror image for moves from `N`).
    pub fn extend(&self, h: &PartialIso, side: Side, s: &[Sec], t: &[Sec], r: Elem) -> PartialIso {
        let mut g = h.restrict(self.m, self.n, r);
        for (&x, &y) in s.iter().zip(t) {
            match side {
                Side::M => g.pairs.push((self.m.restrict(x, r), y)),
                Side::N => g.pairs.push((y, self.n.restrict(x, r))),
            }
        }
        PartialIso::new(g.pairs)
    }

    /// Join of the extents of answers `t̄` to `s̄` whose least extension of
    /// `h` lies in `Q_β(Et̄)`; collects the entries when asked.
    fn cover_join(
        &mut self,
        beta: usize,
        h: &PartialIso,
        side: Side,
        s: &[Sec],
        e: Elem,
        mut out: Option<&mut Vec<CoverEntry>>,
    ) -> Elem {
        let mut acc = self.alg.bot();
        let count = match side {
            Side::M => self.moves_n.len(),
            Side::N => self.moves_m.len(),
        };
        for i in 0..count {
            let (t, r) = match side {
                Side::M => (&self.moves_n[i].0, self.moves_n[i].1),
                Side::N => (&self.moves_m[i].0, self.moves_m[i].1),
            };
            if t.len() != s.len() || !self.alg.leq(r, e) {
                continue;
            }
            if out.is_none() && self.alg.leq(r, acc) {
                continue;
            }
            let t = t.clone();
            let g = self.extend(h, side, s, &t, r);
            if self.uniform(beta, r, &g) {
                acc = self.alg.join(acc, r);
                if let Some(o) = out.as_deref_mut() {
                    o.push(CoverEntry { q: r, t, h: g });
                }
                if out.is_none() && acc == e {
                    break;
                }
            }
        }
        acc
    }

    /// Every answer to `s̄` whose least extension of `h` lies in
    /// `Q_β(Et̄)`. They cover `Es̄` exactly when the forth (or back) clause
    /// holds for `s̄`.
    pub fn answers(
        &mut self,
        beta: usize,
        h: &PartialIso,
        side: Side,
        s: &[Sec],
    ) -> Result<Vec<CoverEntry>, BackForthError> {
        let e = match side {
            Side::M => self.m.tuple_extent(s),
            Side::N => self.n.tuple_extent(s),
        };
        let mut out = Vec::new();
        self.cover_join(beta, h, side, s, e, Some(&mut out));
        self.check_budget()?;
        Ok(out)
    }

    /// Move tuples of one side, with their extents.
    pub fn moves(&self, side: Side) -> &[(Vec<Sec>, Elem)] {
        match side {
            Side::M => &self.moves_m,
            Side::N => &self.moves_n,
        }
    }

    /// The positional map `ā↾Eā ↦ b̄↾Eā` if it lies in `Q_α(Eā)`.
    pub fn sim(
        &mut self,
        a: &[Sec],
        b: &[Sec],
        alpha: usize,
    ) -> Result<Option<SimWitness>, BackForthError> {
        if a.len() != b.len() {
            return Err(BackForthError::LengthMismatch(a.len(), b.len()));
        }
        let (ea, eb) = (self.m.tuple_extent(a), self.n.tuple_extent(b));
        if ea != eb {
            return Err(BackForthError::ExtentMismatch(
                self.alg.name(ea).into(),
                self.alg.name(eb).into(),
            ));
        }
        let h = PartialIso::positional(self.m, a, self.n, b, ea);
        Ok(if self.member(alpha, ea, &h)? {
            Some(SimWitness {
                alpha,
                p: ea,
                iso: h,
            })
        } else {
            None
        })
    }

    pub fn nodes(&self) -> u64 {
        self.nodes
    }
}

/// `(M,ā) ∼^p_α (N,b̄)` witnessed by `iso ∈ Q_α(p)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimWitness {
    pub alpha: usize,
    pub p: Elem,
    pub iso: PartialIso,
}

pub fn sim_alpha(
    m: &Structure,
    a: &[Sec],
    n: &Structure,
    b: &[Sec],
    alpha: usize,
    cfg: Config,
) -> Result<Option<SimWitness>, BackForthError> {
    BackForth::new(m, n, cfg)?.sim(a, b, alpha)
}

/// Every partial isomorphism, ordered by size and then lexicographically.
/// Stops after `limit` maps when given.
pub fn enumerate_partial_isos(
    m: &Structure,
    n: &Structure,
    limit: Option<usize>,
) -> Vec<PartialIso> {
    let atoms = canonical_atomics(m.signature());
    let mut out = Vec::new();
    if !is_partial_iso(m, n, &atoms, &[]) {
        return out;
    }
    let max = m.len().min(n.len());
    for size in 0..=max {
        let mut cur = Vec::new();
        let mut used = alloc::vec![false; n.len()];
        if !grow(m, n, &atoms, size, 0, &mut cur, &mut used, &mut out, limit) {
            break;
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn grow(
    m: &Structure,
    n: &Structure,
    atoms: &[AtomKind],
    size: usize,
    from: usize,
    cur: &mut Vec<(Sec, Sec)>,
    used: &mut Vec<bool>,
    out: &mut Vec<PartialIso>,
    limit: Option<usize>,
) -> bool {
    if cur.len() == size {
        out.push(PartialIso { pairs: cur.clone() });
        return limit.is_none_or(|l| out.len() < l);
    }
    for a in from..m.len() {
        for b in 0..n.len() {
            if used[b] {
                continue;
            }
            cur.push((Sec(a as u16), Sec(b as u16)));
            if is_partial_iso(m, n, atoms, cur) {
                used[b] = true;
                let go_on = grow(m, n, atoms, size, a + 1, cur, used, out, limit);
                used[b] = false;
                if !go_on {
                    cur.pop();
                    return false;
                }
            }
            cur.pop();
        }
    }
    true
}

/// Explicit table of `Q_α(p)` over an enumerated list of partial isos.
#[derive(Clone, Debug)]
pub struct QTable {
    pub isos: Vec<PartialIso>,
    /// `levels[α][p]` lists indices into `isos`.
    pub levels: Vec<Vec<Vec<usize>>>,
    pub config: Config,
}

impl QTable {
    /// Level 0 over the given isos (all of them, for every `p`, unless the
    /// variant base is configured).
    pub fn new(engine: &mut BackForth<'_>, isos: Vec<PartialIso>) -> Result<Self, BackForthError> {
        let alg = engine.alg;
        let mut level = Vec::new();
        for p in alg.elements() {
            let mut row = Vec::new();
            for (i, h) in isos.iter().enumerate() {
                if engine.member(0, p, h)? {
                    row.push(i);
                }
            }
            level.push(row);
        }
        Ok(QTable {
            isos,
            levels: alloc::vec![level],
            config: engine.cfg,
        })
    }

    /// Adds level `α+1` from level `α`.
    pub fn refine_step(&mut self, engine: &mut BackForth<'_>) -> Result<(), BackForthError> {
        let alpha = self.levels.len() - 1;
        let mut next = Vec::new();
        for (pi, row) in self.levels[alpha].iter().enumerate() {
            let p = Elem(pi as u16);
            let mut keep = Vec::new();
            for &i in row {
                if engine.member(alpha + 1, p, &self.isos[i])? {
                    keep.push(i);
                }
            }
            next.push(keep);
        }
        self.levels.push(next);
        Ok(())
    }

    /// Whether the last two levels coincide.
    pub fn stable(&self) -> bool {
        let k = self.levels.len();
        k >= 2 && self.levels[k - 1] == self.levels[k - 2]
    }
}

/// Result of [`scott_rank`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScottRank {
    pub rank: usize,
    /// `|Γ_α|` for each computed level, including a few past stabilization.
    pub gamma_sizes: Vec<usize>,
    /// `Γ_α` as indices into `pairs`.
    pub gammas: Vec<Vec<usize>>,
    pub pairs: Vec<(Vec<Sec>, Vec<Sec>)>,
}

/// Least `α` with `Γ_α = Γ_{α+1}`, where `Γ_α` collects same-extent tuple
/// pairs of `M` (length at most `max_len`) that are not `∼_α`-equivalent.
/// `extra` further levels are computed to witness stabilization.
pub fn scott_rank(
    m: &Structure,
    max_len: usize,
    extra: usize,
    cfg: Config,
) -> Result<ScottRank, BackForthError> {
    let (a, b) = Structure::disjointify(m, m)?;
    let mut engine = BackForth::new(&a, &b, cfg)?;
    let mut pairs = Vec::new();
    for len in 0..=max_len {
        let tuples: Vec<Vec<Sec>> = Tuples::new(m.len(), len).collect();
        for x in &tuples {
            for y in &tuples {
                if m.tuple_extent(x) == m.tuple_extent(y) {
                    pairs.push((x.clone(), y.clone()));
                }
            }
        }
    }
    let mut gammas: Vec<Vec<usize>> = Vec::new();
    let mut rank = None;
    let mut alpha = 0;
    loop {
        let mut gamma = Vec::new();
        for (i, (x, y)) in pairs.iter().enumerate() {
            if engine.sim(x, y, alpha)?.is_none() {
                gamma.push(i);
            }
        }
        if rank.is_none() && gammas.last() == Some(&gamma) {
            rank = Some(alpha - 1);
        }
        gammas.push(gamma);
        if let Some(r) = rank {
            if alpha >= r + 1 + extra {
                break;
            }
        }
        alpha += 1;
    }
    Ok(ScottRank {
        rank: rank.expect("loop exits after stabilization"),
        gamma_sizes: gammas.iter().map(Vec::len).collect(),
        gammas,
        pairs,
    })
}
