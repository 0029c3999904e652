//! Finite Heyting algebras with precomputed operation tables.
//!
//! Elements are small indices into one algebra. Every binary operation is a
//! table lookup, which keeps the evaluators and refinement engines cheap.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

/// Largest number of elements accepted by the constructors.
pub const MAX_ELEMENTS: usize = 1024;

/// An element of a particular [`Heyting`] algebra.
///
/// The index is only meaningful relative to the algebra that produced it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Elem(pub u16);

impl Elem {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlgebraError {
    #[error("an algebra needs at least one element")]
    Empty,
    #[error("too many elements ({0}); at most {MAX_ELEMENTS} are supported")]
    TooLarge(usize),
    #[error("duplicate element name `{0}`")]
    Duplicate(String),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("order is not antisymmetric: {0} <= {1} and {1} <= {0}")]
    NotAPartialOrder(String, String),
    #[error("not a lattice: {0} and {1} have no {2}")]
    NotALattice(String, String, &'static str),
    #[error(
        "not distributive: {0} /\\ ({1} \\/ {2}) differs from ({0} /\\ {1}) \\/ ({0} /\\ {2})"
    )]
    NotDistributive(String, String, String),
}

/// A finite distributive lattice, hence a complete Heyting algebra.
#[derive(Clone, PartialEq, Eq)]
pub struct Heyting {
    names: Vec<String>,
    leq: Vec<bool>,
    meet: Vec<Elem>,
    join: Vec<Elem>,
    imp: Vec<Elem>,
    bot: Elem,
    top: Elem,
}

impl fmt::Debug for Heyting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Heyting")
            .field("elements", &self.names)
            .finish()
    }
}

impl Heyting {
    /// Builds an algebra from element names and pairs `(a, b)` meaning `a <= b`.
    ///
    /// The pairs may be covering pairs or any generating set; the reflexive
    /// transitive closure is taken.
    pub fn from_order(names: &[&str], pairs: &[(&str, &str)]) -> Result<Self, AlgebraError> {
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let mut idx = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            let find = |x: &str| {
                names
                    .iter()
                    .position(|n| n == x)
                    .ok_or_else(|| AlgebraError::UnknownElement(x.to_string()))
            };
            idx.push((find(a)?, find(b)?));
        }
        Self::from_indexed_order(names, &idx)
    }

    pub fn from_indexed_order(
        names: Vec<String>,
        pairs: &[(usize, usize)],
    ) -> Result<Self, AlgebraError> {
        let n = names.len();
        if n == 0 {
            return Err(AlgebraError::Empty);
        }
        if n > MAX_ELEMENTS {
            return Err(AlgebraError::TooLarge(n));
        }
        for i in 0..n {
            if names[..i].contains(&names[i]) {
                return Err(AlgebraError::Duplicate(names[i].clone()));
            }
        }
        let mut leq = alloc::vec![false; n * n];
        for i in 0..n {
            leq[i * n + i] = true;
        }
        for &(a, b) in pairs {
            leq[a * n + b] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if leq[i * n + k] {
                    for j in 0..n {
                        if leq[k * n + j] {
                            leq[i * n + j] = true;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if leq[i * n + j] && leq[j * n + i] {
                    return Err(AlgebraError::NotAPartialOrder(
                        names[i].clone(),
                        names[j].clone(),
                    ));
                }
            }
        }
        let le = |a: usize, b: usize| leq[a * n + b];
        let mut meet = alloc::vec![Elem(0); n * n];
        let mut join = alloc::vec![Elem(0); n * n];
        for a in 0..n {
            for b in 0..n {
                let lower = (0..n).filter(|&x| le(x, a) && le(x, b));
                let glb = greatest(lower.clone().collect(), &le).ok_or_else(|| {
                    AlgebraError::NotALattice(names[a].clone(), names[b].clone(), "meet")
                })?;
                let upper: Vec<usize> = (0..n).filter(|&x| le(a, x) && le(b, x)).collect();
                let lub = least(upper, &le).ok_or_else(|| {
                    AlgebraError::NotALattice(names[a].clone(), names[b].clone(), "join")
                })?;
                meet[a * n + b] = Elem(glb as u16);
                join[a * n + b] = Elem(lub as u16);
            }
        }
        let bot = (0..n)
            .find(|&x| (0..n).all(|y| le(x, y)))
            .expect("finite lattice has a bottom");
        let top = (0..n)
            .find(|&x| (0..n).all(|y| le(y, x)))
            .expect("finite lattice has a top");
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let lhs = meet[a * n + join[b * n + c].index()];
                    let rhs = join[meet[a * n + b].index() * n + meet[a * n + c].index()];
                    if lhs != rhs {
                        return Err(AlgebraError::NotDistributive(
                            names[a].clone(),
                            names[b].clone(),
                            names[c].clone(),
                        ));
                    }
                }
            }
        }
        // q -> r is the join of everything whose meet with q lies below r.
        let mut imp = alloc::vec![Elem(0); n * n];
        for q in 0..n {
            for r in 0..n {
                let mut acc = bot;
                for s in 0..n {
                    if le(meet[s * n + q].index(), r) {
                        acc = join[acc * n + s].index();
                    }
                }
                imp[q * n + r] = Elem(acc as u16);
            }
        }
        Ok(Heyting {
            names,
            leq,
            meet,
            join,
            imp,
            bot: Elem(bot as u16),
            top: Elem(top as u16),
        })
    }

    /// The algebra of downsets of a finite poset, ordered by inclusion.
    ///
    /// `points` names the poset and `pairs` lists `(x, y)` with `x <= y`.
    /// Downsets are named `{x,y}` in point order; the empty one is `{}`.
    pub fn from_poset_downsets(
        points: &[&str],
        pairs: &[(&str, &str)],
    ) -> Result<Self, AlgebraError> {
        let n = points.len();
        if n > 10 {
            return Err(AlgebraError::TooLarge(1 << n));
        }
        let find = |x: &str| {
            points
                .iter()
                .position(|p| *p == x)
                .ok_or_else(|| AlgebraError::UnknownElement(x.to_string()))
        };
        let mut below = alloc::vec![false; n * n];
        for i in 0..n {
            below[i * n + i] = true;
        }
        for (x, y) in pairs {
            below[find(x)? * n + find(y)?] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if below[i * n + k] && below[k * n + j] {
                        below[i * n + j] = true;
                    }
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if below[i * n + j] && below[j * n + i] {
                    return Err(AlgebraError::NotAPartialOrder(
                        points[i].to_string(),
                        points[j].to_string(),
                    ));
                }
            }
        }
        let mut downsets: Vec<u32> = Vec::new();
        for mask in 0u32..(1u32 << n) {
            let closed = (0..n).all(|y| {
                mask & (1 << y) == 0 || (0..n).all(|x| !below[x * n + y] || mask & (1 << x) != 0)
            });
            if closed {
                downsets.push(mask);
            }
        }
        let names: Vec<String> = downsets
            .iter()
            .map(|&m| {
                let inner: Vec<&str> = (0..n)
                    .filter(|&i| m & (1 << i) != 0)
                    .map(|i| points[i])
                    .collect();
                format!("{{{}}}", inner.join(","))
            })
            .collect();
        let mut order = Vec::new();
        for (i, &a) in downsets.iter().enumerate() {
            for (j, &b) in downsets.iter().enumerate() {
                if i != j && a & !b == 0 {
                    order.push((i, j));
                }
            }
        }
        Self::from_indexed_order(names, &order)
    }

    /// The two-element Boolean algebra `bot < top`.
    pub fn omega2() -> Self {
        Self::from_order(&["bot", "top"], &[("bot", "top")]).expect("valid")
    }

    /// The three-element chain `bot < m < top`.
    pub fn chain3() -> Self {
        Self::from_order(&["bot", "m", "top"], &[("bot", "m"), ("m", "top")]).expect("valid")
    }

    /// The four-element Boolean algebra `bot < p, q < top`.
    pub fn diamond() -> Self {
        Self::from_order(
            &["bot", "p", "q", "top"],
            &[("bot", "p"), ("bot", "q"), ("p", "top"), ("q", "top")],
        )
        .expect("valid")
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn elements(&self) -> impl DoubleEndedIterator<Item = Elem> + Clone + '_ {
        (0..self.names.len() as u16).map(Elem)
    }

    pub fn name(&self, e: Elem) -> &str {
        &self.names[e.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn elem(&self, name: &str) -> Option<Elem> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| Elem(i as u16))
    }

    pub fn contains(&self, e: Elem) -> bool {
        e.index() < self.names.len()
    }

    #[inline]
    pub fn bot(&self) -> Elem {
        self.bot
    }

    #[inline]
    pub fn top(&self) -> Elem {
        self.top
    }

    #[inline]
    pub fn leq(&self, a: Elem, b: Elem) -> bool {
        self.leq[a.index() * self.size() + b.index()]
    }

    #[inline]
    pub fn meet(&self, a: Elem, b: Elem) -> Elem {
        self.meet[a.index() * self.size() + b.index()]
    }

    #[inline]
    pub fn join(&self, a: Elem, b: Elem) -> Elem {
        self.join[a.index() * self.size() + b.index()]
    }

    /// Relative pseudo-complement `q -> r`.
    #[inline]
    pub fn implies(&self, q: Elem, r: Elem) -> Elem {
        self.imp[q.index() * self.size() + r.index()]
    }

    #[inline]
    pub fn neg(&self, p: Elem) -> Elem {
        self.implies(p, self.bot)
    }

    /// `(a -> b) /\ (b -> a)`.
    #[inline]
    pub fn iff(&self, a: Elem, b: Elem) -> Elem {
        self.meet(self.implies(a, b), self.implies(b, a))
    }

    pub fn big_meet<I: IntoIterator<Item = Elem>>(&self, it: I) -> Elem {
        it.into_iter().fold(self.top, |a, b| self.meet(a, b))
    }

    pub fn big_join<I: IntoIterator<Item = Elem>>(&self, it: I) -> Elem {
        it.into_iter().fold(self.bot, |a, b| self.join(a, b))
    }

    /// Elements below `p`, in index order.
    pub fn down(&self, p: Elem) -> impl Iterator<Item = Elem> + '_ {
        self.elements().filter(move |&x| self.leq(x, p))
    }

    /// Exhaustive check of the Heyting adjunction. Returns a failing triple.
    pub fn check_adjunction(&self) -> Option<(Elem, Elem, Elem)> {
        for p in self.elements() {
            for q in self.elements() {
                for r in self.elements() {
                    if self.leq(self.meet(p, q), r) != self.leq(p, self.implies(q, r)) {
                        return Some((p, q, r));
                    }
                }
            }
        }
        None
    }
}

fn greatest(cands: Vec<usize>, le: &impl Fn(usize, usize) -> bool) -> Option<usize> {
    cands
        .iter()
        .copied()
        .find(|&x| cands.iter().all(|&y| le(y, x)))
}

fn least(cands: Vec<usize>, le: &impl Fn(usize, usize) -> bool) -> Option<usize> {
    cands
        .iter()
        .copied()
        .find(|&x| cands.iter().all(|&y| le(x, y)))
}
