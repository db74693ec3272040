//! Greedy t-wise sampling and coverage measurement.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cnf::{encode, CnfProblem};
use crate::model::FeatureModel;
use crate::sat::{Lit, Solver};
use crate::CancelToken;

pub type Assignment = BTreeMap<String, bool>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub configurations: Vec<Assignment>,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("interaction strength must be 1, 2 or 3, got {0}")]
    InvalidStrength(usize),
    #[error("the model has no valid configuration")]
    VoidModel,
    #[error("sampling canceled")]
    Canceled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Coverage {
    pub covered: usize,
    pub valid_total: usize,
    /// 1 when there is nothing to cover.
    pub ratio: f64,
    /// Indices of configurations that are incomplete or violate the model.
    pub invalid_configurations: Vec<usize>,
}

/// Dimacs literals over feature variables, sorted by variable.
type Tuple = Vec<i32>;

/// Recently found solutions, used to skip SAT calls for tuples they already witness.
struct Witnesses {
    models: Vec<Vec<bool>>,
}

impl Witnesses {
    const CAP: usize = 256;

    fn covers(&self, tuple: &[i32]) -> bool {
        self.models.iter().any(|m| satisfies(m, tuple))
    }

    fn push(&mut self, model: &[bool]) {
        if self.models.len() == Self::CAP {
            self.models.remove(0);
        }
        self.models.push(model.to_vec());
    }
}

fn satisfies(model: &[bool], tuple: &[i32]) -> bool {
    tuple
        .iter()
        .all(|&l| model[l.unsigned_abs() as usize - 1] == (l > 0))
}

fn lits(tuple: &[i32]) -> Vec<Lit> {
    tuple.iter().map(|&l| Lit::from_dimacs(l)).collect()
}

fn check_strength(t: usize) -> Result<(), SampleError> {
    if (1..=3).contains(&t) {
        Ok(())
    } else {
        Err(SampleError::InvalidStrength(t))
    }
}

/// Every satisfiable t-literal tuple over distinct feature variables, in
/// lexicographic variable order with negative polarity first.
fn valid_tuples(
    cnf: &CnfProblem,
    solver: &mut Solver,
    t: usize,
    cancel: &CancelToken,
) -> Result<Vec<Tuple>, SampleError> {
    let vars: Vec<i32> = cnf.feature_vars().map(|(v, _)| v).collect();
    let mut witnesses = Witnesses { models: Vec::new() };
    let mut literal_ok = BTreeMap::new();
    for &v in &vars {
        for l in [-v, v] {
            let ok = witnesses.covers(&[l]) || {
                let sat = solver.solve_under(&lits(&[l]));
                if sat {
                    witnesses.push(solver.model());
                }
                sat
            };
            literal_ok.insert(l, ok);
        }
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..t).collect();
    if vars.len() < t {
        return Ok(out);
    }
    loop {
        if cancel.is_canceled() {
            return Err(SampleError::Canceled);
        }
        for signs in 0..(1u32 << t) {
            let tuple: Tuple = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    if signs >> (t - 1 - k) & 1 == 1 {
                        vars[i]
                    } else {
                        -vars[i]
                    }
                })
                .collect();
            if !tuple.iter().all(|l| literal_ok[l]) {
                continue;
            }
            let valid = t == 1 || witnesses.covers(&tuple) || {
                let sat = solver.solve_under(&lits(&tuple));
                if sat {
                    witnesses.push(solver.model());
                }
                sat
            };
            if valid {
                out.push(tuple);
            }
        }
        // next combination
        let mut k = t;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            if idx[k] != k + vars.len() - t {
                break;
            }
        }
        idx[k] += 1;
        for j in k + 1..t {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn to_assignment(cnf: &CnfProblem, model: &[bool]) -> Assignment {
    cnf.feature_vars()
        .map(|(v, n)| (n.to_string(), model[v as usize - 1]))
        .collect()
}

/// Upper bound on SAT calls spent absorbing tuples into one configuration.
const ABSORB_ATTEMPTS: usize = 2000;

pub fn sample_twise(model: &FeatureModel, t: usize, seed: u64) -> Result<Sample, SampleError> {
    sample_twise_cancelable(model, t, seed, &CancelToken::new())
}

pub fn sample_twise_cancelable(
    model: &FeatureModel,
    t: usize,
    seed: u64,
    cancel: &CancelToken,
) -> Result<Sample, SampleError> {
    check_strength(t)?;
    let cnf = encode(model);
    let mut solver = cnf.solver();
    if !solver.solve() {
        return Err(SampleError::VoidModel);
    }
    let mut tuples = valid_tuples(&cnf, &mut solver, t, cancel)?;
    tuples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut covered = vec![false; tuples.len()];
    let mut configs: Vec<Vec<bool>> = Vec::new();
    for start in 0..tuples.len() {
        if covered[start] {
            continue;
        }
        if cancel.is_canceled() {
            return Err(SampleError::Canceled);
        }
        let mut assumed: Vec<i32> = tuples[start].clone();
        let sat = solver.solve_under(&lits(&assumed));
        debug_assert!(sat, "tuples are pre-filtered for validity");
        let mut current = solver.model().to_vec();
        let mut attempts = 0;
        for next in start + 1..tuples.len() {
            if covered[next] {
                continue;
            }
            let cand = &tuples[next];
            if satisfies(&current, cand) {
                for &l in cand {
                    if !assumed.contains(&l) {
                        assumed.push(l);
                    }
                }
                continue;
            }
            if attempts == ABSORB_ATTEMPTS || cand.iter().any(|l| assumed.contains(&-l)) {
                continue;
            }
            attempts += 1;
            let mut trial = assumed.clone();
            trial.extend(cand.iter().filter(|l| !assumed.contains(l)));
            if solver.solve_under(&lits(&trial)) {
                assumed = trial;
                current = solver.model().to_vec();
            }
        }
        for (i, tup) in tuples.iter().enumerate() {
            if !covered[i] && satisfies(&current, tup) {
                covered[i] = true;
            }
        }
        configs.push(current);
    }

    // Drop configurations whose tuples are all covered elsewhere, latest first.
    let mut multiplicity = vec![0usize; tuples.len()];
    let covers: Vec<Vec<usize>> = configs
        .iter()
        .map(|c| {
            (0..tuples.len())
                .filter(|&i| satisfies(c, &tuples[i]))
                .collect()
        })
        .collect();
    for list in &covers {
        for &i in list {
            multiplicity[i] += 1;
        }
    }
    let mut keep = vec![true; configs.len()];
    for c in (0..configs.len()).rev() {
        if covers[c].iter().all(|&i| multiplicity[i] > 1) {
            keep[c] = false;
            for &i in &covers[c] {
                multiplicity[i] -= 1;
            }
        }
    }
    let configurations = configs
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(c, _)| to_assignment(&cnf, c))
        .collect();
    Ok(Sample { configurations, t })
}

/// Counts valid t-tuples realized by the valid configurations of `sample`.
pub fn coverage(model: &FeatureModel, sample: &Sample, t: usize) -> Result<Coverage, SampleError> {
    check_strength(t)?;
    let cnf = encode(model);
    let mut solver = cnf.solver();
    let mut invalid = Vec::new();
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (i, config) in sample.configurations.iter().enumerate() {
        let mut assumptions = Vec::new();
        let mut row = vec![false; cnf.variable_count()];
        let mut complete = config.len() == cnf.feature_var_count();
        for (v, name) in cnf.feature_vars() {
            match config.get(name) {
                Some(&b) => {
                    row[v as usize - 1] = b;
                    assumptions.push(if b { v } else { -v });
                }
                None => complete = false,
            }
        }
        if complete && solver.solve_under(&lits(&assumptions)) {
            rows.push(row);
        } else {
            invalid.push(i);
        }
    }
    if !solver.solve() {
        return Ok(Coverage {
            covered: 0,
            valid_total: 0,
            ratio: 1.0,
            invalid_configurations: invalid,
        });
    }
    let tuples = valid_tuples(&cnf, &mut solver, t, &CancelToken::new())?;
    let covered = tuples
        .iter()
        .filter(|tup| rows.iter().any(|r| satisfies(r, tup)))
        .count();
    let ratio = if tuples.is_empty() {
        1.0
    } else {
        covered as f64 / tuples.len() as f64
    };
    Ok(Coverage {
        covered,
        valid_total: tuples.len(),
        ratio,
        invalid_configurations: invalid,
    })
}
