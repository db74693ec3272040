//! Feature removal that preserves projected configuration semantics.
//!
//! The model is encoded to CNF, removed and auxiliary variables are
//! eliminated by Davis–Putnam resolution, and the tree is rebuilt with the
//! removed features spliced out. Eliminated clauses that the rebuilt model
//! does not already entail become derived constraints.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::cnf::{encode, normalize_clause, CnfProblem};
use crate::formula::Formula;
use crate::model::{FeatureId, FeatureModel, GroupKind};
use crate::sat::Lit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SliceResult {
    /// Includes the derived constraints, appended after the kept ones.
    pub model: FeatureModel,
    pub derived_constraints: Vec<Formula>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SliceError {
    #[error("nothing to remove")]
    EmptyRemoval,
    #[error("the root feature {0:?} cannot be removed")]
    RemovesRoot(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
}

/// Clause store with literal occurrence lists; clauses are normalized.
struct ClauseDb {
    clauses: Vec<Option<Vec<i32>>>,
    occ: HashMap<i32, HashSet<usize>>,
    seen: HashSet<Vec<i32>>,
    has_empty: bool,
}

fn subset(small: &[i32], big: &[i32]) -> bool {
    small.len() <= big.len() && small.iter().all(|l| big.contains(l))
}

impl ClauseDb {
    fn new() -> Self {
        ClauseDb {
            clauses: Vec::new(),
            occ: HashMap::new(),
            seen: HashSet::new(),
            has_empty: false,
        }
    }

    fn occurrences(&self, lit: i32) -> usize {
        self.occ.get(&lit).map_or(0, HashSet::len)
    }

    /// Adds `c` unless an existing clause subsumes it; drops clauses it subsumes.
    fn insert(&mut self, c: Vec<i32>) {
        if c.is_empty() {
            self.has_empty = true;
            return;
        }
        if self.seen.contains(&c) {
            return;
        }
        let mut candidates: HashSet<usize> = HashSet::new();
        for l in &c {
            if let Some(s) = self.occ.get(l) {
                candidates.extend(s.iter().copied());
            }
        }
        for &i in &candidates {
            if let Some(d) = &self.clauses[i] {
                if subset(d, &c) {
                    return;
                }
            }
        }
        for i in candidates {
            let subsumed = matches!(&self.clauses[i], Some(d) if subset(&c, d));
            if subsumed {
                self.remove(i);
            }
        }
        let idx = self.clauses.len();
        for &l in &c {
            self.occ.entry(l).or_default().insert(idx);
        }
        self.seen.insert(c.clone());
        self.clauses.push(Some(c));
    }

    fn remove(&mut self, i: usize) -> Vec<i32> {
        let c = self.clauses[i].take().expect("live clause");
        for l in &c {
            if let Some(s) = self.occ.get_mut(l) {
                s.remove(&i);
            }
        }
        self.seen.remove(&c);
        c
    }

    fn take_with(&mut self, lit: i32) -> Vec<Vec<i32>> {
        let idx: Vec<usize> = self
            .occ
            .get(&lit)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        let mut out: Vec<Vec<i32>> = idx.into_iter().map(|i| self.remove(i)).collect();
        out.sort();
        out
    }

    /// Resolves away `v`; tautological resolvents are dropped.
    fn eliminate(&mut self, v: i32) {
        let pos = self.take_with(v);
        let neg = self.take_with(-v);
        for p in &pos {
            for n in &neg {
                let merged = p
                    .iter()
                    .chain(n.iter())
                    .copied()
                    .filter(|&l| l != v && l != -v);
                if let Some(r) = normalize_clause(merged) {
                    self.insert(r);
                }
            }
        }
    }

    fn live(&self) -> impl Iterator<Item = &Vec<i32>> {
        self.clauses.iter().flatten()
    }
}

/// Eliminates `vars` from `problem` greedily by smallest resolvent growth.
/// Returns the remaining clauses, or `None` if the empty clause was derived.
pub fn eliminate_variables(problem: &CnfProblem, vars: &BTreeSet<i32>) -> Option<Vec<Vec<i32>>> {
    let mut db = ClauseDb::new();
    for c in problem.clauses() {
        db.insert(c.clone());
    }
    let mut pending: BTreeSet<i32> = vars.clone();
    while !pending.is_empty() && !db.has_empty {
        let &v = pending
            .iter()
            .min_by_key(|&&v| {
                let (p, n) = (db.occurrences(v) as i64, db.occurrences(-v) as i64);
                (p * n - p - n, v)
            })
            .expect("non-empty");
        pending.remove(&v);
        db.eliminate(v);
    }
    if db.has_empty {
        return None;
    }
    let mut out: Vec<Vec<i32>> = db.live().cloned().collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Some(out)
}

fn clause_formula(problem: &CnfProblem, clause: &[i32]) -> Formula {
    Formula::or(
        clause
            .iter()
            .map(|&l| Formula::literal(problem.name_of(l.abs()).expect("feature variable"), l > 0))
            .collect::<Vec<_>>(),
    )
}

/// Splices removed features out of the tree; their kept children move up.
fn rebuild_tree(model: &FeatureModel, removed: &HashSet<FeatureId>) -> FeatureModel {
    let mut out = model.clone();
    let mut touched: HashSet<FeatureId> = HashSet::new();
    for id in model.preorder() {
        if !removed.contains(&id) {
            continue;
        }
        let (parent, pos) = out.detach(id).expect("removed feature is not the root");
        touched.insert(parent);
        let children = std::mem::take(&mut out.feature_mut(id).expect("live").children);
        for (k, c) in children.into_iter().enumerate() {
            out.attach(c, parent, pos + k).expect("live parent");
            if !removed.contains(&c) {
                out.set_mandatory(c, false).expect("live");
            }
        }
        out.drop_slot(id);
    }
    for p in touched {
        if removed.contains(&p) {
            continue;
        }
        let f = out.feature(p).expect("kept");
        if f.group != GroupKind::And || f.children.is_empty() {
            let kids = f.children.clone();
            out.set_group(p, GroupKind::And).expect("live");
            for c in kids {
                out.set_mandatory(c, false).expect("live");
            }
        }
    }
    let gone: HashSet<&str> = removed
        .iter()
        .map(|&id| model.name(id).expect("live"))
        .collect();
    out.retain_constraints(|c| c.formula.vars().iter().all(|v| !gone.contains(v)));
    out
}

pub fn slice<S: AsRef<str>>(model: &FeatureModel, remove: &[S]) -> Result<SliceResult, SliceError> {
    if remove.is_empty() {
        return Err(SliceError::EmptyRemoval);
    }
    let mut removed: HashSet<FeatureId> = HashSet::new();
    for name in remove {
        let name = name.as_ref();
        let id = model
            .find(name)
            .ok_or_else(|| SliceError::UnknownFeature(name.to_string()))?;
        if id == model.root() {
            return Err(SliceError::RemovesRoot(name.to_string()));
        }
        removed.insert(id);
    }

    let original = encode(model);
    let mut elim: BTreeSet<i32> = original.aux_vars();
    for &id in &removed {
        elim.insert(
            original
                .var_of(model.name(id).expect("live"))
                .expect("encoded"),
        );
    }
    let projected = eliminate_variables(&original, &elim);

    let mut sliced = rebuild_tree(model, &removed);
    let root_name = sliced.root_feature().name.clone();
    let derived: Vec<Formula> = match projected {
        None => vec![Formula::not(Formula::var(root_name))],
        Some(clauses) => {
            let base = encode(&sliced);
            let mut solver = base.solver();
            let mut derived = Vec::new();
            for clause in clauses {
                let mapped: Vec<i32> = clause
                    .iter()
                    .map(|&l| {
                        let name = original
                            .name_of(l.abs())
                            .expect("only feature variables remain");
                        base.var_of(name).expect("kept feature") * l.signum()
                    })
                    .collect();
                let negated: Vec<Lit> = mapped.iter().map(|&l| Lit::from_dimacs(-l)).collect();
                if solver.solve_under(&negated) {
                    let lits: Vec<Lit> = mapped.iter().map(|&l| Lit::from_dimacs(l)).collect();
                    solver.add_clause(&lits);
                    derived.push(clause_formula(&original, &clause));
                }
            }
            derived
        }
    };
    for f in &derived {
        sliced.add_constraint(f.clone());
    }
    Ok(SliceResult {
        model: sliced,
        derived_constraints: derived,
    })
}
