//! Invariant functions `I`, `G^α`, `H^α` and Scott sentences `φ^α`.
//!
//! Invariants are hash-consed into numeric ids: two anchors get the same
//! level-`β` id exactly when their level-`β` tables coincide. A level-0
//! table lists `I_{X,x̄}(ψ,f)`. A level-`β+1` table stores the level-`β` id
//! of the anchor and, for each key `(K, s̄, t̄)` with `K` a probe and
//! `Et̄ ≤ Ex̄ ∧ Es̄`, the join of the `Ec̄ ≤ Et̄` for which the level-`β`
//! invariant of `x̄c̄` equals that of `(s̄t̄)↾Ec̄`.
//!
//! Anchors are canonicalized to `x̄↾Ex̄`, which leaves every table unchanged.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use hashbrown::{HashMap, HashSet};

use crate::heyting::{Elem, Heyting};
use crate::presheaf::{Sec, Structure, StructureError, Tuples};
use crate::semantics::{atomic_value, env_of, EvalError, Evaluator};
use crate::syntax::{enumerate_unnested_atomics, AtomKind, Formula, Var};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvariantError {
    #[error(
        "anchor length {len} with {alpha} levels of moves up to {cap} exceeds the tuple cap {max}"
    )]
    CapExceeded {
        len: usize,
        alpha: usize,
        cap: usize,
        max: usize,
    },
    #[error("probe class is empty")]
    NoProbes,
    #[error("constants must be global for invariants and sentences")]
    LaxConstants,
    #[error("invariants have different lengths or extents")]
    Incomparable,
    #[error("{0}")]
    Structure(#[from] StructureError),
    #[error("{0}")]
    Eval(#[from] EvalError),
}

/// `I_{M,ā}` as a list over unnested atomics and index maps.
pub fn base_invariant(m: &Structure, a: &[Sec]) -> Vec<((AtomKind, Vec<usize>), Elem)> {
    let e = m.tuple_extent(a);
    let alg = m.algebra();
    enumerate_unnested_atomics(m.signature(), a.len())
        .into_iter()
        .map(|(atom, map)| {
            let args: Vec<Sec> = map.iter().map(|&i| a[i]).collect();
            let v = alg.meet(atomic_value(m, atom, &args), e);
            ((atom, map), v)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Node {
    Base {
        n: u16,
        e: Elem,
        values: Vec<Elem>,
    },
    Succ {
        n: u16,
        e: Elem,
        lower: u32,
        values: Vec<Elem>,
    },
}

/// One key `(K, s̄, t̄)` of a successor table.
#[derive(Clone, Debug)]
pub struct Key {
    pub probe: usize,
    pub s: Vec<Sec>,
    pub t: Vec<Sec>,
    pub es: Elem,
    pub et: Elem,
    /// `(q, level-β id of (s̄t̄)↾q)` for every `q ≤ Et̄`.
    lookups: Vec<(Elem, u32)>,
}

/// A computed invariant: structure index, canonical anchor and level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Invariant {
    pub structure: usize,
    pub anchor: Vec<Sec>,
    pub alpha: usize,
    pub id: u32,
    pub extent: Elem,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Divergence {
    /// Level-0 tables differ at this atomic and index map.
    Base {
        atom: AtomKind,
        map: Vec<usize>,
        left: Elem,
        right: Elem,
    },
    /// Level `level` tables differ at this key.
    Key {
        level: usize,
        probe: usize,
        s: Vec<Sec>,
        t: Vec<Sec>,
        left: Elem,
        right: Elem,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Comparison {
    Equal,
    Differ(Divergence),
}

#[derive(Clone, Copy, Debug)]
pub struct Caps {
    pub move_cap: usize,
    /// Longest tuple the recursion may reach.
    pub max_tuple_len: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            move_cap: 1,
            max_tuple_len: 6,
        }
    }
}

type GroupKey = (usize, u16, Elem, u32, Vec<(u8, Elem, u32)>);

#[derive(Clone, PartialEq, Eq, Hash)]
enum Shape {
    Atom(AtomKind, Vec<usize>),
    Box(Elem, usize),
    Exists(Vec<Var>, usize),
    And(Vec<usize>),
}

type UnnestedAtoms = Vec<(AtomKind, Vec<usize>)>;

/// Shared state for invariants and sentences over a fixed list of
/// structures, with a designated probe class among them.
pub struct Engine<'a> {
    structs: Vec<&'a Structure>,
    probes: Vec<usize>,
    alg: Arc<Heyting>,
    caps: Caps,
    nodes: HashMap<Node, u32>,
    node_list: Vec<Node>,
    ids: HashMap<(usize, usize, Vec<Sec>), u32>,
    keys: HashMap<(usize, usize), Arc<Vec<Key>>>,
    groups: HashMap<GroupKey, u32>,
    ua: HashMap<usize, Arc<UnnestedAtoms>>,
    shapes: HashMap<Shape, Arc<Formula>>,
    sentences: HashMap<(usize, usize, Vec<Sec>), Arc<Formula>>,
    evaluators: Vec<Evaluator<'a>>,
}

impl<'a> Engine<'a> {
    /// `probes` index into `structs`.
    pub fn new(
        structs: &[&'a Structure],
        probes: &[usize],
        caps: Caps,
    ) -> Result<Self, InvariantError> {
        if probes.is_empty() {
            return Err(InvariantError::NoProbes);
        }
        let first = structs[0];
        for s in structs {
            if !s.same_language(first) {
                return Err(StructureError::Mismatch.into());
            }
            if !s.constants_global() {
                return Err(InvariantError::LaxConstants);
            }
        }
        Ok(Engine {
            structs: structs.to_vec(),
            probes: probes.to_vec(),
            alg: first.algebra().clone(),
            caps,
            nodes: HashMap::new(),
            node_list: Vec::new(),
            ids: HashMap::new(),
            keys: HashMap::new(),
            groups: HashMap::new(),
            ua: HashMap::new(),
            shapes: HashMap::new(),
            sentences: HashMap::new(),
            evaluators: structs.iter().map(|s| Evaluator::new(s)).collect(),
        })
    }

    /// Engine for `G^α` on a pair: both structures are probes.
    pub fn pair(m: &'a Structure, n: &'a Structure, caps: Caps) -> Result<Self, InvariantError> {
        Self::new(&[m, n], &[0, 1], caps)
    }

    pub fn structure(&self, i: usize) -> &'a Structure {
        self.structs[i]
    }

    pub fn probes(&self) -> &[usize] {
        &self.probes
    }

    fn check_caps(&self, len: usize, alpha: usize) -> Result<(), InvariantError> {
        let need = len + alpha * self.caps.move_cap;
        if need > self.caps.max_tuple_len {
            return Err(InvariantError::CapExceeded {
                len,
                alpha,
                cap: self.caps.move_cap,
                max: self.caps.max_tuple_len,
            });
        }
        Ok(())
    }

    fn intern(&mut self, node: Node) -> u32 {
        if let Some(id) = self.nodes.get(&node) {
            return *id;
        }
        let id = self.node_list.len() as u32;
        self.node_list.push(node.clone());
        self.nodes.insert(node, id);
        id
    }

    fn unnested(&mut self, n: usize) -> Arc<Vec<(AtomKind, Vec<usize>)>> {
        let sig = self.structs[0].signature().clone();
        self.ua
            .entry(n)
            .or_insert_with(|| Arc::new(enumerate_unnested_atomics(&sig, n)))
            .clone()
    }

    fn canonical(&self, x: usize, t: &[Sec]) -> (Vec<Sec>, Elem) {
        let s = self.structs[x];
        let e = s.tuple_extent(t);
        (s.restrict_tuple(t, e), e)
    }

    /// `G^α`/`H^α` of `(structs[x], t)` over the probe class.
    pub fn invariant(
        &mut self,
        x: usize,
        t: &[Sec],
        alpha: usize,
    ) -> Result<Invariant, InvariantError> {
        self.check_caps(t.len(), alpha)?;
        let (anchor, e) = self.canonical(x, t);
        let id = self.id(alpha, x, &anchor);
        Ok(Invariant {
            structure: x,
            anchor,
            alpha,
            id,
            extent: e,
        })
    }

    fn id(&mut self, level: usize, x: usize, t: &[Sec]) -> u32 {
        let (t, e) = self.canonical(x, t);
        let key = (level, x, t);
        if let Some(id) = self.ids.get(&key) {
            return *id;
        }
        let t = &key.2;
        let id = if level == 0 {
            let ua = self.unnested(t.len());
            let m = self.structs[x];
            let values = ua
                .iter()
                .map(|(atom, map)| {
                    let args: Vec<Sec> = map.iter().map(|&i| t[i]).collect();
                    self.alg.meet(atomic_value(m, *atom, &args), e)
                })
                .collect();
            self.intern(Node::Base {
                n: t.len() as u16,
                e,
                values,
            })
        } else {
            let lower = self.id(level - 1, x, t);
            let mut a = Vec::new();
            let size = self.structs[x].len();
            let mut ext = t.clone();
            for len in 1..=self.caps.move_cap {
                for c in Tuples::new(size, len) {
                    ext.truncate(t.len());
                    ext.extend_from_slice(&c);
                    let ec = self.structs[x].tuple_extent(&c);
                    let id = self.id(level - 1, x, &ext);
                    a.push((len as u8, ec, id));
                }
            }
            a.sort_unstable();
            a.dedup();
            let group = (level, t.len() as u16, e, lower, a);
            if let Some(id) = self.groups.get(&group) {
                *id
            } else {
                let keys = self.keys(level - 1, t.len());
                let set: HashSet<(u8, Elem, u32)> = group.4.iter().copied().collect();
                let values = keys
                    .iter()
                    .filter(|k| self.alg.leq(k.et, self.alg.meet(e, k.es)))
                    .map(|k| {
                        let len = k.t.len() as u8;
                        self.alg.big_join(
                            k.lookups
                                .iter()
                                .filter(|l| set.contains(&(len, l.0, l.1)))
                                .map(|l| l.0),
                        )
                    })
                    .collect();
                let id = self.intern(Node::Succ {
                    n: t.len() as u16,
                    e,
                    lower,
                    values,
                });
                self.groups.insert(group, id);
                id
            }
        };
        self.ids.insert(key, id);
        id
    }

    /// All keys for anchors of length `n`, with level-`β` lookups.
    fn keys(&mut self, beta: usize, n: usize) -> Arc<Vec<Key>> {
        if let Some(k) = self.keys.get(&(beta, n)) {
            return k.clone();
        }
        let mut out = Vec::new();
        for pi in 0..self.probes.len() {
            let k = self.probes[pi];
            let size = self.structs[k].len();
            for s in Tuples::new(size, n) {
                let es = self.structs[k].tuple_extent(&s);
                for len in 1..=self.caps.move_cap {
                    for t in Tuples::new(size, len) {
                        let et = self.structs[k].tuple_extent(&t);
                        if !self.alg.leq(et, es) {
                            continue;
                        }
                        let mut st = s.clone();
                        st.extend_from_slice(&t);
                        let mut lookups = Vec::new();
                        for q in self.alg.down(et).collect::<Vec<_>>() {
                            let r = self.structs[k].restrict_tuple(&st, q);
                            lookups.push((q, self.id(beta, k, &r)));
                        }
                        out.push(Key {
                            probe: k,
                            s: s.clone(),
                            t,
                            es,
                            et,
                            lookups,
                        });
                    }
                }
            }
        }
        let out = Arc::new(out);
        self.keys.insert((beta, n), out.clone());
        out
    }

    fn domain(&mut self, beta: usize, n: usize, e: Elem) -> Vec<Key> {
        let alg = self.alg.clone();
        self.keys(beta, n)
            .iter()
            .filter(|k| alg.leq(k.et, alg.meet(e, k.es)))
            .cloned()
            .collect()
    }

    /// The level-`level` table of an invariant: keys and values.
    pub fn table(&mut self, inv: &Invariant, level: usize) -> Vec<(Key, Elem)> {
        let id = self.id(level, inv.structure, &inv.anchor);
        match self.node_list[id as usize].clone() {
            Node::Base { .. } => Vec::new(),
            Node::Succ { values, .. } => {
                let keys = self.domain(level - 1, inv.anchor.len(), inv.extent);
                keys.into_iter().zip(values).collect()
            }
        }
    }

    /// Level-0 entries.
    pub fn base(&mut self, inv: &Invariant) -> Vec<((AtomKind, Vec<usize>), Elem)> {
        base_invariant(self.structs[inv.structure], &inv.anchor)
    }

    /// Value at a single key `(K, s̄t̄)` of the level-`level` table.
    pub fn value(
        &mut self,
        inv: &Invariant,
        level: usize,
        probe: usize,
        s: &[Sec],
        t: &[Sec],
    ) -> Option<Elem> {
        self.table(inv, level)
            .into_iter()
            .find(|(k, _)| k.probe == probe && k.s == s && k.t == t)
            .map(|x| x.1)
    }

    /// Equality, or the least level and first key where the tables differ.
    pub fn compare(&mut self, x: &Invariant, y: &Invariant) -> Result<Comparison, InvariantError> {
        if x.anchor.len() != y.anchor.len() || x.extent != y.extent || x.alpha != y.alpha {
            return Err(InvariantError::Incomparable);
        }
        if x.id == y.id {
            return Ok(Comparison::Equal);
        }
        for level in 0..=x.alpha {
            let a = self.id(level, x.structure, &x.anchor);
            let b = self.id(level, y.structure, &y.anchor);
            if a == b {
                continue;
            }
            let (na, nb) = (
                self.node_list[a as usize].clone(),
                self.node_list[b as usize].clone(),
            );
            let d = match (na, nb) {
                (Node::Base { values: va, .. }, Node::Base { values: vb, .. }) => {
                    let ua = self.unnested(x.anchor.len());
                    let i = va
                        .iter()
                        .zip(&vb)
                        .position(|(p, q)| p != q)
                        .expect("different nodes");
                    Divergence::Base {
                        atom: ua[i].0,
                        map: ua[i].1.clone(),
                        left: va[i],
                        right: vb[i],
                    }
                }
                (Node::Succ { values: va, .. }, Node::Succ { values: vb, .. }) => {
                    let keys = self.domain(level - 1, x.anchor.len(), x.extent);
                    let i = va
                        .iter()
                        .zip(&vb)
                        .position(|(p, q)| p != q)
                        .expect("lower levels agree");
                    let k = &keys[i];
                    Divergence::Key {
                        level,
                        probe: k.probe,
                        s: k.s.clone(),
                        t: k.t.clone(),
                        left: va[i],
                        right: vb[i],
                    }
                }
                _ => unreachable!("levels match"),
            };
            return Ok(Comparison::Differ(d));
        }
        unreachable!("ids differ at the top level")
    }

    fn shape(&mut self, shape: Shape, build: impl FnOnce() -> Formula) -> Arc<Formula> {
        if let Some(f) = self.shapes.get(&shape) {
            return f.clone();
        }
        let f = Arc::new(build());
        self.shapes.insert(shape, f.clone());
        f
    }

    fn and(&mut self, parts: Vec<Arc<Formula>>) -> Arc<Formula> {
        let ptrs = parts.iter().map(|p| Arc::as_ptr(p) as usize).collect();
        self.shape(Shape::And(ptrs), || Formula::And(parts))
    }

    fn boxed(&mut self, p: Elem, g: Arc<Formula>) -> Arc<Formula> {
        self.shape(Shape::Box(p, Arc::as_ptr(&g) as usize), || {
            Formula::Box(p, g)
        })
    }

    /// `φ^α_{X,x̄}` with the conjunction over keys restricted to the probes.
    pub fn scott_sentence(
        &mut self,
        x: usize,
        t: &[Sec],
        alpha: usize,
    ) -> Result<Arc<Formula>, InvariantError> {
        self.check_caps(t.len(), alpha)?;
        let (t, _) = self.canonical(x, t);
        self.sentence(alpha, x, &t)
    }

    fn sentence(
        &mut self,
        level: usize,
        x: usize,
        t: &[Sec],
    ) -> Result<Arc<Formula>, InvariantError> {
        let (t, e) = self.canonical(x, t);
        let key = (level, x, t);
        if let Some(f) = self.sentences.get(&key) {
            return Ok(f.clone());
        }
        let t = key.2.clone();
        let n = t.len();
        let f = if level == 0 {
            let sig = self.structs[0].signature().clone();
            let mut parts = Vec::new();
            for ((atom, map), v) in base_invariant(self.structs[x], &t) {
                let m2 = map.clone();
                let a = self.shape(Shape::Atom(atom, map), || atom.instance(&sig, &m2));
                parts.push(self.boxed(v, a));
            }
            self.and(parts)
        } else {
            let lower = self.sentence(level - 1, x, &t)?;
            let mut parts = alloc::vec![lower];
            let mut seen = HashSet::new();
            let mut nodes: Vec<Arc<Formula>> = Vec::new();
            for k in self.domain(level - 1, n, e) {
                let mut st = k.s.clone();
                st.extend_from_slice(&k.t);
                let inner = self.sentence(level - 1, k.probe, &st)?;
                let vars: Vec<Var> = (n..n + k.t.len()).map(|v| v as Var).collect();
                let ptr = Arc::as_ptr(&inner) as usize;
                let ex = self.shape(Shape::Exists(vars.clone(), ptr), || {
                    Formula::Exists(vars, inner)
                });
                if seen.insert(Arc::as_ptr(&ex) as usize) {
                    nodes.push(ex);
                }
            }
            let env = env_of(&t);
            let mut boxes = HashSet::new();
            for ex in nodes {
                let v = self.evaluators[x].eval_shared(&ex, &env)?;
                if boxes.insert((v, Arc::as_ptr(&ex) as usize)) {
                    parts.push(self.boxed(v, ex));
                }
            }
            self.and(parts)
        };
        self.sentences.insert(key, f.clone());
        Ok(f)
    }

    /// `[φ(t̄)]` in `structs[x]`, sharing memo tables across calls.
    pub fn eval(&mut self, x: usize, f: &Arc<Formula>, t: &[Sec]) -> Result<Elem, InvariantError> {
        Ok(self.evaluators[x].eval_shared(f, &env_of(t))?)
    }

    pub fn forces(
        &mut self,
        x: usize,
        f: &Arc<Formula>,
        t: &[Sec],
    ) -> Result<bool, InvariantError> {
        Ok(self.eval(x, f, t)? == self.structs[x].tuple_extent(t))
    }

    /// Printable key `K: s̄ | t̄`.
    pub fn describe_key(&self, k: &Key) -> String {
        let s = self.structs[k.probe];
        alloc::format!(
            "{}: {} | {}",
            s.name(),
            s.tuple_label(&k.s),
            s.tuple_label(&k.t)
        )
    }

    pub fn algebra(&self) -> &Heyting {
        &self.alg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presheaf::{Signature, StructureBuilder};

    fn pure_set(name: &str, k: usize) -> Structure {
        let alg = Arc::new(Heyting::omega2());
        let mut b = StructureBuilder::new(name, alg.clone(), Arc::new(Signature::new()));
        for i in 0..k {
            b.section(&alloc::format!("x{i}"), alg.top()).unwrap();
        }
        b.build().unwrap()
    }

    #[test]
    fn sets_of_two_and_three() {
        let (m, n) = Structure::disjointify(&pure_set("M", 2), &pure_set("N", 3)).unwrap();
        let mut e = Engine::pair(&m, &n, Caps::default()).unwrap();
        for alpha in 0..=3 {
            let x = e.invariant(0, &[], alpha).unwrap();
            let y = e.invariant(1, &[], alpha).unwrap();
            let equal = e.compare(&x, &y).unwrap() == Comparison::Equal;
            let phi_m = e.scott_sentence(0, &[], alpha).unwrap();
            let phi_n = e.scott_sentence(1, &[], alpha).unwrap();
            assert!(e.forces(0, &phi_m, &[]).unwrap());
            let mutual = e.forces(1, &phi_m, &[]).unwrap() && e.forces(0, &phi_n, &[]).unwrap();
            assert_eq!(equal, alpha <= 2, "alpha {alpha}");
            assert_eq!(mutual, alpha <= 2, "alpha {alpha}");
            assert_eq!(phi_m.mrank(), alpha);
        }
    }
}
