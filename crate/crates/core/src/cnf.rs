//! Clause form of feature models.
//!
//! Feature variables are numbered `1..=n` in pre-order; auxiliary variables
//! introduced for large constraints follow them. Auxiliary variables are
//! defined by full equivalences, so each one is a function of the feature
//! variables and model counts are unaffected.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::formula::Formula;
use crate::model::{FeatureModel, GroupKind};
use crate::sat::{Lit, Solver};

/// Constraints whose distributed clause form stays within this many
/// literals are emitted as-is; larger ones go through Tseitin encoding.
pub const DISTRIBUTION_LITERAL_LIMIT: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CnfProblem {
    variable_count: usize,
    clauses: Vec<Vec<i32>>,
    /// `names[i]` belongs to variable `i + 1`; `None` for auxiliary variables.
    names: Vec<Option<String>>,
    #[serde(skip)]
    var_of_feature: HashMap<String, i32>,
}

impl CnfProblem {
    pub fn new() -> Self {
        CnfProblem {
            variable_count: 0,
            clauses: Vec::new(),
            names: Vec::new(),
            var_of_feature: HashMap::new(),
        }
    }

    /// Allocates the next variable for a named feature.
    pub fn add_feature_var(&mut self, name: &str) -> i32 {
        self.variable_count += 1;
        let v = self.variable_count as i32;
        self.names.push(Some(name.to_string()));
        self.var_of_feature.insert(name.to_string(), v);
        v
    }

    pub fn add_aux_var(&mut self) -> i32 {
        self.variable_count += 1;
        self.names.push(None);
        self.variable_count as i32
    }

    /// Adds a clause after sorting and removing duplicate literals.
    /// Tautologies are dropped. Panics on out-of-range literals.
    pub fn add_clause(&mut self, lits: impl IntoIterator<Item = i32>) {
        if let Some(c) = normalize_clause(lits) {
            assert!(
                c.iter()
                    .all(|&l| l != 0 && l.unsigned_abs() as usize <= self.variable_count),
                "literal out of range"
            );
            self.clauses.push(c);
        }
    }

    pub fn variable_count(&self) -> usize {
        self.variable_count
    }

    pub fn clauses(&self) -> &[Vec<i32>] {
        &self.clauses
    }

    pub fn var_of(&self, feature: &str) -> Option<i32> {
        self.var_of_feature.get(feature).copied()
    }

    /// Feature name of a variable, `None` for auxiliary variables.
    pub fn name_of(&self, var: i32) -> Option<&str> {
        self.names
            .get(var.unsigned_abs() as usize - 1)
            .and_then(|n| n.as_deref())
    }

    pub fn is_aux(&self, var: i32) -> bool {
        self.name_of(var).is_none()
    }

    pub fn aux_vars(&self) -> BTreeSet<i32> {
        (1..=self.variable_count as i32)
            .filter(|&v| self.is_aux(v))
            .collect()
    }

    /// Feature variables in allocation order.
    pub fn feature_vars(&self) -> impl Iterator<Item = (i32, &str)> {
        self.names
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.as_deref().map(|n| (i as i32 + 1, n)))
    }

    pub fn feature_var_count(&self) -> usize {
        self.var_of_feature.len()
    }

    /// A fresh solver loaded with every clause.
    pub fn solver(&self) -> Solver {
        let mut s = Solver::with_vars(self.variable_count);
        for c in &self.clauses {
            let lits: Vec<Lit> = c.iter().map(|&l| Lit::from_dimacs(l)).collect();
            s.add_clause(&lits);
        }
        s
    }

    /// Whether `assignment` (indexed by variable - 1) satisfies every clause.
    pub fn is_satisfied_by(&self, assignment: &[bool]) -> bool {
        self.clauses.iter().all(|c| {
            c.iter()
                .any(|&l| assignment[l.unsigned_abs() as usize - 1] == (l > 0))
        })
    }
}

impl Default for CnfProblem {
    fn default() -> Self {
        Self::new()
    }
}

/// Sorted, deduplicated clause; `None` for tautologies.
pub(crate) fn normalize_clause(lits: impl IntoIterator<Item = i32>) -> Option<Vec<i32>> {
    let mut c: Vec<i32> = lits.into_iter().collect();
    c.sort_unstable_by_key(|&l| (l.unsigned_abs(), l < 0));
    c.dedup();
    if c.windows(2).any(|w| w[0] == -w[1]) {
        None
    } else {
        Some(c)
    }
}

/// Encodes a model under diagram semantics plus its cross-tree constraints.
pub fn encode(model: &FeatureModel) -> CnfProblem {
    let mut cnf = encode_tree(model);
    for c in model.constraints() {
        encode_formula(&mut cnf, &c.formula);
    }
    cnf
}

/// Diagram clauses only: root, child implies parent, mandatory children,
/// or-groups and alternative groups.
pub fn encode_tree(model: &FeatureModel) -> CnfProblem {
    let mut cnf = CnfProblem::new();
    let order = model.preorder();
    for &id in &order {
        cnf.add_feature_var(&model.feature(id).expect("live").name);
    }
    let var = |cnf: &CnfProblem, id| {
        cnf.var_of(&model.feature(id).expect("live").name)
            .expect("allocated")
    };
    let root = var(&cnf, model.root());
    cnf.add_clause([root]);
    for &id in &order {
        let f = model.feature(id).expect("live");
        let p = var(&cnf, id);
        let kids: Vec<i32> = f.children.iter().map(|&c| var(&cnf, c)).collect();
        for (&c, &cid) in kids.iter().zip(&f.children) {
            cnf.add_clause([-c, p]);
            if f.group == GroupKind::And && model.feature(cid).expect("live").mandatory {
                cnf.add_clause([-p, c]);
            }
        }
        match f.group {
            GroupKind::And => {}
            GroupKind::Or => cnf.add_clause(std::iter::once(-p).chain(kids.iter().copied())),
            GroupKind::Alternative => {
                cnf.add_clause(std::iter::once(-p).chain(kids.iter().copied()));
                for i in 0..kids.len() {
                    for j in i + 1..kids.len() {
                        cnf.add_clause([-kids[i], -kids[j]]);
                    }
                }
            }
        }
    }
    cnf
}

/// Negation normal form over variable indices.
#[derive(Clone, Debug)]
enum Nnf {
    Lit(i32),
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
}

fn to_nnf(cnf: &CnfProblem, f: &Formula, positive: bool) -> Nnf {
    match f {
        Formula::Var(n) => {
            let v = cnf
                .var_of(n)
                .unwrap_or_else(|| panic!("constraint references unknown feature {n:?}"));
            Nnf::Lit(if positive { v } else { -v })
        }
        Formula::Not(g) => to_nnf(cnf, g, !positive),
        Formula::And(gs) | Formula::Or(gs) => {
            let parts = gs.iter().map(|g| to_nnf(cnf, g, positive)).collect();
            if matches!(f, Formula::And(_)) == positive {
                Nnf::And(parts)
            } else {
                Nnf::Or(parts)
            }
        }
        Formula::Implies(a, b) => {
            if positive {
                Nnf::Or(vec![to_nnf(cnf, a, false), to_nnf(cnf, b, true)])
            } else {
                Nnf::And(vec![to_nnf(cnf, a, true), to_nnf(cnf, b, false)])
            }
        }
        Formula::Iff(a, b) => {
            // a <=> b  ==  (!a | b) & (a | !b);  !(a <=> b)  ==  (a | b) & (!a | !b)
            let (sa, sb) = if positive {
                (false, true)
            } else {
                (true, true)
            };
            Nnf::And(vec![
                Nnf::Or(vec![to_nnf(cnf, a, sa), to_nnf(cnf, b, sb)]),
                Nnf::Or(vec![to_nnf(cnf, a, !sa), to_nnf(cnf, b, !sb)]),
            ])
        }
    }
}

/// Clause form by distribution, abandoned once the literal count exceeds `cap`.
fn distribute(n: &Nnf, cap: usize) -> Option<Vec<Vec<i32>>> {
    let size = |cs: &Vec<Vec<i32>>| cs.iter().map(Vec::len).sum::<usize>();
    let out = match n {
        Nnf::Lit(l) => vec![vec![*l]],
        Nnf::And(parts) => {
            let mut all = Vec::new();
            for p in parts {
                all.extend(distribute(p, cap)?);
                if size(&all) > cap {
                    return None;
                }
            }
            all
        }
        Nnf::Or(parts) => {
            let mut acc: Vec<Vec<i32>> = vec![Vec::new()];
            for p in parts {
                let cs = distribute(p, cap)?;
                let mut next = Vec::new();
                for a in &acc {
                    for c in &cs {
                        if let Some(merged) = normalize_clause(a.iter().chain(c).copied()) {
                            next.push(merged);
                        }
                    }
                }
                if size(&next) > cap {
                    return None;
                }
                acc = next;
            }
            acc
        }
    };
    (size(&out) <= cap).then_some(out)
}

fn encode_formula(cnf: &mut CnfProblem, f: &Formula) {
    let nnf = to_nnf(cnf, f, true);
    encode_nnf(cnf, &nnf);
}

fn encode_nnf(cnf: &mut CnfProblem, nnf: &Nnf) {
    if let Some(clauses) = distribute(nnf, DISTRIBUTION_LITERAL_LIMIT) {
        for c in clauses {
            cnf.add_clause(c);
        }
        return;
    }
    match nnf {
        Nnf::And(parts) => parts.iter().for_each(|p| encode_nnf(cnf, p)),
        Nnf::Or(parts) => {
            let lits: Vec<i32> = parts.iter().map(|p| tseitin(cnf, p)).collect();
            cnf.add_clause(lits);
        }
        Nnf::Lit(l) => cnf.add_clause([*l]),
    }
}

/// Literal equivalent to `n`, defining auxiliary variables as needed.
fn tseitin(cnf: &mut CnfProblem, n: &Nnf) -> i32 {
    match n {
        Nnf::Lit(l) => *l,
        Nnf::And(parts) => {
            let lits: Vec<i32> = parts.iter().map(|p| tseitin(cnf, p)).collect();
            let x = cnf.add_aux_var();
            for &l in &lits {
                cnf.add_clause([-x, l]);
            }
            cnf.add_clause(std::iter::once(x).chain(lits.iter().map(|&l| -l)));
            x
        }
        Nnf::Or(parts) => {
            let lits: Vec<i32> = parts.iter().map(|p| tseitin(cnf, p)).collect();
            let x = cnf.add_aux_var();
            cnf.add_clause(std::iter::once(-x).chain(lits.iter().copied()));
            for &l in &lits {
                cnf.add_clause([x, -l]);
            }
            x
        }
    }
}
