//! Anomaly detection, decision propagation and solution counting.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{encode, CnfProblem};
use crate::model::FeatureModel;
use crate::sat::{Lit, Solver};
use crate::CancelToken;

/// Feature-count limit for exact counting by enumeration.
pub const DEFAULT_ENUMERATION_BOUND: usize = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("model has {features} features, more than the enumeration bound of {bound}")]
    BoundExceeded { features: usize, bound: usize },
    #[error("canceled")]
    Canceled,
}

/// Outcome of [`solve`]. `Sat` carries a total assignment, `assignment[v - 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Solution {
    Sat(Vec<bool>),
    Unsat,
}

impl Solution {
    pub fn is_sat(&self) -> bool {
        matches!(self, Solution::Sat(_))
    }
}

/// One-shot satisfiability check under DIMACS-style assumption literals.
pub fn solve(problem: &CnfProblem, assumptions: &[i32]) -> Solution {
    let mut s = problem.solver();
    s.ensure_vars(problem.variable_count());
    let lits: Vec<Lit> = assumptions.iter().map(|&l| Lit::from_dimacs(l)).collect();
    if s.solve_under(&lits) {
        Solution::Sat(s.model()[..problem.variable_count()].to_vec())
    } else {
        Solution::Unsat
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnomalyReport {
    #[serde(rename = "void")]
    pub is_void: bool,
    pub core: Vec<String>,
    pub dead: Vec<String>,
    pub false_optional: Vec<String>,
}

/// Core, dead and false-optional features, in pre-order. A void model
/// reports only the void flag.
pub fn analyze(model: &FeatureModel) -> AnomalyReport {
    let cnf = encode(model);
    let mut solver = cnf.solver();
    if !solver.solve() {
        return AnomalyReport {
            is_void: true,
            ..Default::default()
        };
    }
    let vars: Vec<(i32, String)> = cnf
        .feature_vars()
        .map(|(v, n)| (v, n.to_string()))
        .collect();
    let n = cnf.variable_count();
    // seen[v] = (observed true, observed false) across models found so far
    let mut seen = vec![(false, false); n + 1];
    let record = |s: &Solver, seen: &mut Vec<(bool, bool)>| {
        for (v, slot) in seen.iter_mut().enumerate().skip(1) {
            if s.model()[v - 1] {
                slot.0 = true;
            } else {
                slot.1 = true;
            }
        }
    };
    record(&solver, &mut seen);

    let mut is_dead = vec![false; n + 1];
    let mut report = AnomalyReport::default();
    for (v, name) in &vars {
        let v = *v;
        if !seen[v as usize].1 {
            if solver.solve_under(&[Lit::from_dimacs(-v)]) {
                record(&solver, &mut seen);
            } else {
                report.core.push(name.clone());
                continue;
            }
        }
        if !seen[v as usize].0 {
            if solver.solve_under(&[Lit::from_dimacs(v)]) {
                record(&solver, &mut seen);
            } else {
                report.dead.push(name.clone());
                is_dead[v as usize] = true;
            }
        }
    }

    for id in model.preorder() {
        if !model.is_optional(id) {
            continue;
        }
        let f = model.feature(id).expect("live");
        let parent = model
            .parent(id)
            .and_then(|p| model.name(p))
            .expect("optional has parent");
        let fv = cnf.var_of(&f.name).expect("feature var");
        let pv = cnf.var_of(parent).expect("feature var");
        if is_dead[fv as usize] {
            continue;
        }
        if !solver.solve_under(&[Lit::from_dimacs(pv), Lit::from_dimacs(-fv)]) {
            report.false_optional.push(f.name.clone());
        }
    }
    report
}

// ---- configurations ----

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Selection {
    Selected,
    Deselected,
    #[default]
    Undecided,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Provenance {
    #[default]
    Explicit,
    Implied,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureState {
    pub selection: Selection,
    pub provenance: Provenance,
}

/// One user decision. `Undecided` frees a previously decided feature.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub feature: String,
    pub selection: Selection,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verb = match self.selection {
            Selection::Selected => "select",
            Selection::Deselected => "deselect",
            Selection::Undecided => "free",
        };
        write!(f, "{verb} {}", self.feature)
    }
}

/// Partial configuration with its decision history. Features without an
/// entry are undecided.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    states: BTreeMap<String, FeatureState>,
    history: Vec<Decision>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies a decision, dropping implied states from an earlier propagation.
    pub fn decide(&mut self, feature: impl Into<String>, selection: Selection) {
        let feature = feature.into();
        self.history.push(Decision {
            feature: feature.clone(),
            selection,
        });
        self.clear_implied();
        self.set_explicit(feature, selection);
    }

    pub fn select(&mut self, feature: impl Into<String>) {
        self.decide(feature, Selection::Selected);
    }

    pub fn deselect(&mut self, feature: impl Into<String>) {
        self.decide(feature, Selection::Deselected);
    }

    pub fn free(&mut self, feature: impl Into<String>) {
        self.decide(feature, Selection::Undecided);
    }

    fn set_explicit(&mut self, feature: String, selection: Selection) {
        if selection == Selection::Undecided {
            self.states.remove(&feature);
        } else {
            self.states.insert(
                feature,
                FeatureState {
                    selection,
                    provenance: Provenance::Explicit,
                },
            );
        }
    }

    /// Keeps only the first `steps` decisions.
    pub fn rollback(&mut self, steps: usize) {
        self.history.truncate(steps);
        self.states.clear();
        let history = self.history.clone();
        for d in history {
            self.set_explicit(d.feature, d.selection);
        }
    }

    pub fn history(&self) -> &[Decision] {
        &self.history
    }

    pub fn state(&self, feature: &str) -> FeatureState {
        self.states.get(feature).copied().unwrap_or(FeatureState {
            selection: Selection::Undecided,
            provenance: Provenance::Implied,
        })
    }

    pub fn states(&self) -> &BTreeMap<String, FeatureState> {
        &self.states
    }

    pub fn explicit(&self) -> impl Iterator<Item = (&str, Selection)> {
        self.states
            .iter()
            .filter(|(_, s)| s.provenance == Provenance::Explicit)
            .map(|(n, s)| (n.as_str(), s.selection))
    }

    pub fn implied(&self) -> impl Iterator<Item = (&str, Selection)> {
        self.states
            .iter()
            .filter(|(_, s)| s.provenance == Provenance::Implied)
            .map(|(n, s)| (n.as_str(), s.selection))
    }

    fn clear_implied(&mut self) {
        self.states
            .retain(|_, s| s.provenance == Provenance::Explicit);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PropagationResult {
    pub configuration: Configuration,
    pub open: Vec<String>,
    pub valid: bool,
    /// Explicit decisions that jointly contradict the model when `valid` is false.
    pub conflict: Vec<Decision>,
}

/// Fills in every selection and deselection forced by the explicit
/// decisions, and marks undecided features still involved in an
/// unsatisfied clause as open.
pub fn propagate(
    model: &FeatureModel,
    config: &Configuration,
) -> Result<PropagationResult, AnalysisError> {
    let cnf = encode(model);
    let mut solver = cnf.solver();
    let mut base = config.clone();
    base.clear_implied();

    let mut assumptions = Vec::new();
    let mut origin: BTreeMap<Lit, String> = BTreeMap::new();
    for (name, sel) in base.explicit() {
        let v = cnf
            .var_of(name)
            .ok_or_else(|| AnalysisError::UnknownFeature(name.to_string()))?;
        let lit = Lit::from_dimacs(if sel == Selection::Selected { v } else { -v });
        assumptions.push(lit);
        origin.insert(lit, name.to_string());
    }

    if !solver.solve_under(&assumptions) {
        // a void model contradicts itself; no decision is to blame
        let void = !solver.solve();
        let mut conflict: Vec<Decision> = if void {
            Vec::new()
        } else {
            solver.solve_under(&assumptions);
            solver
                .failed_assumptions()
                .iter()
                .filter_map(|l| origin.get(l))
                .map(|name| Decision {
                    feature: name.clone(),
                    selection: base.state(name).selection,
                })
                .collect()
        };
        conflict.sort_by(|a, b| a.feature.cmp(&b.feature));
        return Ok(PropagationResult {
            configuration: base,
            open: Vec::new(),
            valid: false,
            conflict,
        });
    }

    let n = cnf.variable_count();
    let mut seen = vec![(false, false); n + 1];
    let record = |s: &Solver, seen: &mut Vec<(bool, bool)>| {
        for (v, slot) in seen.iter_mut().enumerate().skip(1) {
            if s.model()[v - 1] {
                slot.0 = true;
            } else {
                slot.1 = true;
            }
        }
    };
    record(&solver, &mut seen);

    let mut result = base.clone();
    let mut query = assumptions.clone();
    for (v, name) in cnf.feature_vars() {
        if base.states.contains_key(name) {
            continue;
        }
        let mut implied = None;
        for (positive, observed) in [(true, seen[v as usize].1), (false, seen[v as usize].0)] {
            if observed {
                continue;
            }
            // can the feature take the opposite value?
            query.push(Lit::from_dimacs(if positive { -v } else { v }));
            let sat = solver.solve_under(&query);
            query.pop();
            if sat {
                record(&solver, &mut seen);
            } else {
                implied = Some(if positive {
                    Selection::Selected
                } else {
                    Selection::Deselected
                });
                break;
            }
        }
        if let Some(selection) = implied {
            result.states.insert(
                name.to_string(),
                FeatureState {
                    selection,
                    provenance: Provenance::Implied,
                },
            );
        }
    }

    let decided = |v: i32| -> Option<bool> {
        let name = cnf.name_of(v)?;
        match result.states.get(name)?.selection {
            Selection::Selected => Some(true),
            Selection::Deselected => Some(false),
            Selection::Undecided => None,
        }
    };
    let mut open_vars = vec![false; n + 1];
    for clause in cnf.clauses() {
        let satisfied = clause.iter().any(|&l| decided(l.abs()) == Some(l > 0));
        if satisfied {
            continue;
        }
        for &l in clause {
            if decided(l.abs()).is_none() && !cnf.is_aux(l.abs()) {
                open_vars[l.unsigned_abs() as usize] = true;
            }
        }
    }
    let open = cnf
        .feature_vars()
        .filter(|(v, _)| open_vars[*v as usize])
        .map(|(_, n)| n.to_string())
        .collect();
    Ok(PropagationResult {
        configuration: result,
        open,
        valid: true,
        conflict: Vec::new(),
    })
}

// ---- counting ----

pub fn count_solutions(model: &FeatureModel) -> Result<u64, AnalysisError> {
    count_solutions_bounded(model, DEFAULT_ENUMERATION_BOUND, &CancelToken::new())
}

/// Exact number of valid configurations; refuses models with more than
/// `bound` features.
pub fn count_solutions_bounded(
    model: &FeatureModel,
    bound: usize,
    cancel: &CancelToken,
) -> Result<u64, AnalysisError> {
    let features = model.feature_count();
    if features > bound {
        return Err(AnalysisError::BoundExceeded { features, bound });
    }
    let cnf = encode(model);
    let mut counter = Counter {
        clauses: cnf.clauses(),
        assign: vec![None; cnf.variable_count() + 1],
        cancel,
    };
    counter.count()
}

/// Model counter by exhaustive splitting with unit propagation. Auxiliary
/// variables are functionally defined, so counting all variables equals
/// counting feature assignments.
struct Counter<'a> {
    clauses: &'a [Vec<i32>],
    assign: Vec<Option<bool>>,
    cancel: &'a CancelToken,
}

impl Counter<'_> {
    fn value(&self, l: i32) -> Option<bool> {
        self.assign[l.unsigned_abs() as usize].map(|b| b == (l > 0))
    }

    fn count(&mut self) -> Result<u64, AnalysisError> {
        if self.cancel.is_canceled() {
            return Err(AnalysisError::Canceled);
        }
        let mut trail = Vec::new();
        let result = self.count_inner(&mut trail);
        for v in trail {
            self.assign[v] = None;
        }
        result
    }

    fn count_inner(&mut self, trail: &mut Vec<usize>) -> Result<u64, AnalysisError> {
        // unit propagation to fixpoint
        loop {
            let mut changed = false;
            for c in self.clauses {
                let mut unassigned = None;
                let mut free = 0;
                let mut sat = false;
                for &l in c {
                    match self.value(l) {
                        Some(true) => {
                            sat = true;
                            break;
                        }
                        Some(false) => {}
                        None => {
                            free += 1;
                            unassigned = Some(l);
                        }
                    }
                }
                if sat {
                    continue;
                }
                match (free, unassigned) {
                    (0, _) => return Ok(0),
                    (1, Some(l)) => {
                        self.assign[l.unsigned_abs() as usize] = Some(l > 0);
                        trail.push(l.unsigned_abs() as usize);
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }
        let branch = self
            .clauses
            .iter()
            .find(|c| !c.iter().any(|&l| self.value(l) == Some(true)))
            .and_then(|c| c.iter().find(|&&l| self.value(l).is_none()).copied());
        let Some(lit) = branch else {
            let free = self.assign.iter().skip(1).filter(|a| a.is_none()).count();
            return Ok(1u64 << free);
        };
        let v = lit.unsigned_abs() as usize;
        let mut total = 0;
        for val in [true, false] {
            self.assign[v] = Some(val);
            total += self.count()?;
        }
        self.assign[v] = None;
        Ok(total)
    }
}
