//! Source-to-source rewrites: unnesting, pp normal form, and the
//! translations between `□_p` and `p̌`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::syntax::{Formula, Term, Var};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("formula is not positive primitive")]
    NotPP,
    #[error("expected an atomic formula")]
    NotAtomic,
}

struct Fresh(Var);

impl Fresh {
    fn next(&mut self) -> Var {
        let v = self.0;
        self.0 += 1;
        v
    }
}

fn fresh_for(f: &Formula) -> Fresh {
    Fresh(f.max_var().map_or(0, |v| v + 1))
}

/// `φ^∃` for one atomic formula.
pub fn unnest_atomic(f: &Formula) -> Result<Formula, TransformError> {
    if !f.is_atomic() {
        return Err(TransformError::NotAtomic);
    }
    Ok(unnest_atom(f, &mut fresh_for(f)))
}

fn unnest_atom(f: &Formula, fresh: &mut Fresh) -> Formula {
    match f {
        Formula::Eq(Term::Const(c), Term::Const(d)) => {
            let x = fresh.next();
            Formula::exists(
                vec![x],
                Formula::and(vec![
                    Formula::Eq(Term::Var(x), Term::Const(*c)),
                    Formula::Eq(Term::Var(x), Term::Const(*d)),
                ]),
            )
        }
        Formula::Eq(Term::Var(_), Term::Var(_)) | Formula::Eq(Term::Var(_), Term::Const(_)) => {
            f.clone()
        }
        Formula::Eq(Term::Const(c), Term::Var(v)) => Formula::Eq(Term::Var(*v), Term::Const(*c)),
        Formula::Eq(lhs, Term::App(g, args)) if !matches!(lhs, Term::App(..)) => {
            unnest_application(*g, args, lhs, fresh)
        }
        Formula::Eq(Term::App(g, args), rhs) => unnest_application(*g, args, rhs, fresh),
        Formula::Rel(r, args) => {
            let (vars, mut parts, plain) = name_arguments(args, fresh);
            parts.push(Formula::Rel(*r, plain));
            wrap(vars, parts)
        }
        _ => f.clone(),
    }
}

/// `t = g(args)` in either orientation, normalised to `v = g(v̄)` at the core.
fn unnest_application(
    g: crate::presheaf::FunId,
    args: &[Term],
    other: &Term,
    fresh: &mut Fresh,
) -> Formula {
    let mut all: Vec<Term> = args.to_vec();
    all.push(other.clone());
    let (vars, mut parts, plain) = name_arguments(&all, fresh);
    let (last, inner) = plain.split_last().expect("nonempty");
    parts.push(Formula::Eq(last.clone(), Term::App(g, inner.to_vec())));
    wrap(vars, parts)
}

/// Replaces each non-variable argument with a fresh variable and returns the
/// defining conjuncts `(x = t)^∃`.
fn name_arguments(args: &[Term], fresh: &mut Fresh) -> (Vec<Var>, Vec<Formula>, Vec<Term>) {
    let mut vars = Vec::new();
    let mut parts = Vec::new();
    let mut plain = Vec::new();
    for t in args {
        if t.is_var() {
            plain.push(t.clone());
            continue;
        }
        let x = fresh.next();
        vars.push(x);
        plain.push(Term::Var(x));
        let def = Formula::Eq(Term::Var(x), t.clone());
        parts.push(unnest_atom(&def, fresh));
    }
    (vars, parts, plain)
}

/// One `∃` per fresh variable, outermost first.
fn wrap(vars: Vec<Var>, parts: Vec<Formula>) -> Formula {
    let mut body = if vars.is_empty() && parts.len() == 1 {
        parts.into_iter().next().unwrap()
    } else {
        Formula::and(parts)
    };
    for x in vars.into_iter().rev() {
        body = Formula::exists(vec![x], body);
    }
    body
}

/// `φ^∃`: every atomic subformula replaced by its unnesting.
pub fn unnest(f: &Formula) -> Formula {
    let mut fresh = fresh_for(f);
    let mut memo = HashMap::new();
    map_dag(f, &mut memo, &mut |g| {
        if g.is_atomic() {
            Some(unnest_atom(g, &mut fresh))
        } else {
            None
        }
    })
}

/// Rebuilds one node with its children mapped by `child`.
pub fn rebuild(f: &Formula, child: &mut dyn FnMut(&Arc<Formula>) -> Arc<Formula>) -> Formula {
    match f {
        Formula::Not(g) => Formula::Not(child(g)),
        Formula::Implies(a, b) => {
            let a = child(a);
            Formula::Implies(a, child(b))
        }
        Formula::And(gs) => Formula::And(gs.iter().map(&mut *child).collect()),
        Formula::Or(gs) => Formula::Or(gs.iter().map(&mut *child).collect()),
        Formula::Forall(vs, g) => Formula::Forall(vs.clone(), child(g)),
        Formula::Exists(vs, g) => Formula::Exists(vs.clone(), child(g)),
        Formula::Box(p, g) => Formula::Box(*p, child(g)),
        _ => f.clone(),
    }
}

type Memo = HashMap<usize, Arc<Formula>>;

/// Bottom-up rewrite in which `leaf` may replace any node outright. Shared
/// children are rewritten once.
fn map_dag(
    f: &Formula,
    memo: &mut Memo,
    leaf: &mut dyn FnMut(&Formula) -> Option<Formula>,
) -> Formula {
    if let Some(g) = leaf(f) {
        return g;
    }
    rebuild(f, &mut |c| {
        let key = Arc::as_ptr(c) as usize;
        if let Some(g) = memo.get(&key) {
            return g.clone();
        }
        let g = Arc::new(map_dag(c, memo, leaf));
        memo.insert(key, g.clone());
        g
    })
}

/// Prenex form `∃V ⋀ atoms` of a pp formula, renaming bound variables apart.
pub fn pp_normal_form(f: &Formula) -> Result<Formula, TransformError> {
    if !f.classify().pp {
        return Err(TransformError::NotPP);
    }
    let mut fresh = fresh_for(f);
    let mut bound = Vec::new();
    let mut atoms = Vec::new();
    collect_pp(f, &mut Vec::new(), &mut fresh, &mut bound, &mut atoms);
    let body = Formula::And(atoms.into_iter().map(Arc::new).collect());
    Ok(if bound.is_empty() {
        body
    } else {
        Formula::Exists(bound, Arc::new(body))
    })
}

fn collect_pp(
    f: &Formula,
    renaming: &mut Vec<(Var, Var)>,
    fresh: &mut Fresh,
    bound: &mut Vec<Var>,
    atoms: &mut Vec<Formula>,
) {
    match f {
        Formula::And(gs) => gs
            .iter()
            .for_each(|g| collect_pp(g, renaming, fresh, bound, atoms)),
        Formula::Exists(vs, g) => {
            let depth = renaming.len();
            for &v in vs {
                let x = fresh.next();
                bound.push(x);
                renaming.push((v, x));
            }
            collect_pp(g, renaming, fresh, bound, atoms);
            renaming.truncate(depth);
        }
        _ => {
            let map = |v: Var| {
                renaming
                    .iter()
                    .rev()
                    .find(|(from, _)| *from == v)
                    .map_or(v, |(_, to)| *to)
            };
            atoms.push(f.rename(&map));
        }
    }
}

/// `φ^∘`: each `□_p ψ` becomes `ψ^∘ ↔ p̌`.
pub fn box_to_check(f: &Formula) -> Formula {
    fn go(f: &Formula, memo: &mut Memo) -> Formula {
        let mut child = |c: &Arc<Formula>| {
            let key = Arc::as_ptr(c) as usize;
            if let Some(g) = memo.get(&key) {
                return g.clone();
            }
            let g = Arc::new(go(c, memo));
            memo.insert(key, g.clone());
            g
        };
        match f {
            Formula::Box(p, g) => {
                let inner = child(g);
                let check = Arc::new(Formula::Check(*p));
                Formula::And(vec![
                    Arc::new(Formula::Implies(inner.clone(), check.clone())),
                    Arc::new(Formula::Implies(check, inner)),
                ])
            }
            _ => rebuild(f, &mut child),
        }
    }
    go(f, &mut HashMap::new())
}

/// The fixed tautology `¬∃v(v=v) ∨ ¬¬∃v(v=v)`.
pub fn tautology(v: Var) -> Formula {
    let inhabited = Arc::new(Formula::exists(
        vec![v],
        Formula::Eq(Term::Var(v), Term::Var(v)),
    ));
    let not = Arc::new(Formula::Not(inhabited));
    Formula::Or(vec![not.clone(), Arc::new(Formula::Not(not))])
}

/// `ψ^□`: each `p̌` becomes `□_p τ`.
pub fn check_to_box(f: &Formula) -> Formula {
    let v = f.max_var().map_or(0, |v| v + 1);
    let tau = Arc::new(tautology(v));
    let mut memo = HashMap::new();
    map_dag(f, &mut memo, &mut |g| match g {
        Formula::Check(p) => Some(Formula::Box(*p, tau.clone())),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heyting::Heyting;
    use crate::presheaf::Signature;
    use crate::syntax::parse_formula;

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
    fn constants_equal() {
        let s = sig();
        let a = Heyting::omega2();
        let f = parse_formula("c = d", &s, &a).unwrap();
        let u = unnest_atomic(&f).unwrap();
        assert_eq!(
            u.display(&s, &a).to_string(),
            "exists {v0} /\\{v0 = c; v0 = d}"
        );
        assert_eq!(u.qdegree(), 1);
    }

    #[test]
    fn nested_function_argument() {
        let s = sig();
        let a = Heyting::omega2();
        let f = parse_formula("f(c) = v0", &s, &a).unwrap();
        let u = unnest(&f);
        assert_eq!(
            u.display(&s, &a).to_string(),
            "exists {v1} /\\{v1 = c; v0 = f(v1)}"
        );
        assert!(u.classify().pp);
        assert_eq!(u.qdegree(), f.mrank());
    }

    #[test]
    fn degree_is_below_rank_for_two_deep_arguments() {
        let s = sig();
        let a = Heyting::omega2();
        let f = parse_formula("f(g(c)) = g(d)", &s, &a).unwrap();
        let u = unnest(&f);
        assert_eq!(f.mrank(), 4);
        assert_eq!(u.qdegree(), 3);
    }

    #[test]
    fn pp_prenex_renames_apart() {
        let s = sig();
        let a = Heyting::omega2();
        let f = parse_formula("/\\{exists {v1} v0 = v1; exists {v1} R(v1, v0)}", &s, &a).unwrap();
        let n = pp_normal_form(&f).unwrap();
        assert_eq!(
            n.display(&s, &a).to_string(),
            "exists {v2 v3} /\\{v0 = v2; R(v3, v0)}"
        );
        let bad = parse_formula("~v0 = v1", &s, &a).unwrap();
        assert_eq!(pp_normal_form(&bad), Err(TransformError::NotPP));
    }
}
