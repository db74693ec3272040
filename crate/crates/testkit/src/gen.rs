//! Seeded random models, formulas, configurations and edit ops.

use std::collections::BTreeMap;

use fmkit_core::editing::EditOp;
use fmkit_core::formula::Formula;
use fmkit_core::model::{FeatureId, FeatureModel, GroupKind};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct ModelShape {
    pub min_features: usize,
    pub max_features: usize,
    pub max_constraints: usize,
    /// Mix in names that need quoting or escaping in text formats.
    pub exotic_names: bool,
}

impl ModelShape {
    pub fn small(max_features: usize, max_constraints: usize) -> Self {
        ModelShape {
            min_features: 1,
            max_features,
            max_constraints,
            exotic_names: false,
        }
    }
}

const EXOTIC: &[&str] = &[
    "with space",
    "optional",
    "a\"quote",
    "back\\slash",
    "ünï",
    "x-y",
    "1st",
    "or",
    "features",
];

fn name(rng: &mut ChaCha8Rng, k: usize, exotic: bool) -> String {
    if exotic && rng.random_bool(0.3) {
        format!("{} {k}", EXOTIC.choose(rng).expect("non-empty"))
    } else {
        format!("F{k}")
    }
}

/// A valid model: random tree, groups only on inner features, random flags
/// and constraints whose operators always have at least two operands.
pub fn random_model(rng: &mut ChaCha8Rng, shape: ModelShape) -> FeatureModel {
    let n = rng.random_range(shape.min_features.max(1)..=shape.max_features.max(1));
    build(rng, n, None, shape)
}

/// Exactly `features` features and `constraints` cross-tree constraints,
/// plain names. Constraints are requires/excludes pairs, the dominant shape
/// in real models; nested random formulas make large models void.
pub fn sized_model(rng: &mut ChaCha8Rng, features: usize, constraints: usize) -> FeatureModel {
    let mut m = build(
        rng,
        features.max(1),
        Some(0),
        ModelShape::small(features, 0),
    );
    let names: Vec<String> = m.features().map(|f| f.name.clone()).collect();
    for _ in 0..constraints {
        let a = Formula::var(names.choose(rng).expect("non-empty").clone());
        let b = Formula::var(names.choose(rng).expect("non-empty").clone());
        let b = if rng.random_bool(0.5) {
            b
        } else {
            Formula::not(b)
        };
        m.add_constraint(Formula::implies(a, b));
    }
    m
}

/// `constraints: None` draws the count after the tree, from `shape`.
fn build(
    rng: &mut ChaCha8Rng,
    n: usize,
    constraints: Option<usize>,
    shape: ModelShape,
) -> FeatureModel {
    let mut m = FeatureModel::new(name(rng, 0, shape.exotic_names));
    let mut ids = vec![m.root()];
    for k in 1..n {
        let parent = *ids.choose(rng).expect("non-empty");
        let id = m.add_child(parent, name(rng, k, shape.exotic_names));
        m.set_mandatory(id, rng.random_bool(0.3)).expect("live");
        m.set_abstract(id, rng.random_bool(0.15)).expect("live");
        ids.push(id);
    }
    for &id in &ids {
        if !m.feature(id).expect("live").children.is_empty() {
            let g = match rng.random_range(0..4) {
                0 => GroupKind::Or,
                1 => GroupKind::Alternative,
                _ => GroupKind::And,
            };
            m.set_group(id, g).expect("live");
        }
    }
    m.set_abstract(m.root(), rng.random_bool(0.2))
        .expect("live");
    let names: Vec<String> = m.features().map(|f| f.name.clone()).collect();
    let count = constraints.unwrap_or_else(|| rng.random_range(0..=shape.max_constraints));
    for _ in 0..count {
        m.add_constraint(random_formula(rng, &names, 3));
    }
    m
}

pub fn random_formula(rng: &mut ChaCha8Rng, names: &[String], depth: u32) -> Formula {
    let leaf = |rng: &mut ChaCha8Rng| Formula::var(names.choose(rng).expect("non-empty").clone());
    if depth == 0 || rng.random_bool(0.3) {
        return leaf(rng);
    }
    let sub = |rng: &mut ChaCha8Rng| random_formula(rng, names, depth - 1);
    match rng.random_range(0..6) {
        0 => Formula::not(sub(rng)),
        1 => {
            let k = rng.random_range(2..=3);
            Formula::and((0..k).map(|_| sub(rng)).collect::<Vec<_>>())
        }
        2 => {
            let k = rng.random_range(2..=3);
            Formula::or((0..k).map(|_| sub(rng)).collect::<Vec<_>>())
        }
        3 | 4 => {
            let a = sub(rng);
            Formula::implies(a, sub(rng))
        }
        _ => {
            let a = sub(rng);
            Formula::iff(a, sub(rng))
        }
    }
}

/// Up to `max` explicit decisions on distinct random features.
pub fn random_decisions(
    rng: &mut ChaCha8Rng,
    model: &FeatureModel,
    max: usize,
) -> BTreeMap<String, bool> {
    let names: Vec<String> = model.features().map(|f| f.name.clone()).collect();
    let k = rng.random_range(0..=max.min(names.len()));
    names
        .choose_multiple(rng, k)
        .map(|n| (n.clone(), rng.random_bool(0.5)))
        .collect()
}

/// A non-empty set of non-root features, or empty if the model is a lone root.
pub fn random_removal(rng: &mut ChaCha8Rng, model: &FeatureModel) -> Vec<String> {
    let names: Vec<String> = model
        .features()
        .filter(|f| f.id != model.root())
        .map(|f| f.name.clone())
        .collect();
    if names.is_empty() {
        return Vec::new();
    }
    let k = rng.random_range(1..=names.len().min(4));
    names.choose_multiple(rng, k).cloned().collect()
}

fn pick(rng: &mut ChaCha8Rng, model: &FeatureModel, include_root: bool) -> Option<String> {
    let ids: Vec<FeatureId> = model
        .preorder()
        .into_iter()
        .filter(|&i| include_root || i != model.root())
        .collect();
    ids.choose(rng)
        .map(|&i| model.name(i).expect("live").to_string())
}

/// A random edit; it may be rejected by `apply` (collisions, cycles, ...).
pub fn random_op(rng: &mut ChaCha8Rng, model: &FeatureModel, fresh: &mut usize) -> EditOp {
    let any = |rng: &mut ChaCha8Rng| pick(rng, model, true).expect("root exists");
    match rng.random_range(0..10) {
        0 | 1 => {
            *fresh += 1;
            let parent = any(rng);
            let max = model
                .feature(model.find(&parent).expect("picked"))
                .expect("live")
                .children
                .len();
            EditOp::CreateFeature {
                name: format!("N{fresh}"),
                parent,
                index: rng.random_range(0..=max),
            }
        }
        2 => {
            *fresh += 1;
            EditOp::Rename {
                feature: any(rng),
                new_name: format!("R{fresh}"),
            }
        }
        3 => EditOp::SetAbstract {
            feature: any(rng),
            value: rng.random_bool(0.5),
        },
        4 => EditOp::SetMandatory {
            feature: any(rng),
            value: rng.random_bool(0.5),
        },
        5 => {
            let group =
                [GroupKind::And, GroupKind::Or, GroupKind::Alternative][rng.random_range(0..3)];
            EditOp::SetGroup {
                parent: any(rng),
                group,
            }
        }
        6 => match pick(rng, model, false) {
            Some(feature) => EditOp::MoveFeature {
                feature,
                new_parent: any(rng),
                index: rng.random_range(0..2),
            },
            None => EditOp::SetAbstract {
                feature: any(rng),
                value: true,
            },
        },
        7 => match pick(rng, model, false) {
            Some(feature) => EditOp::DeleteFeature { feature },
            None => EditOp::SetAbstract {
                feature: any(rng),
                value: false,
            },
        },
        8 => {
            let names: Vec<String> = model.features().map(|f| f.name.clone()).collect();
            EditOp::AddConstraint {
                formula: random_formula(rng, &names, 2),
            }
        }
        _ => match model.constraints().choose(rng) {
            Some(c) if rng.random_bool(0.5) => EditOp::DeleteConstraint { id: c.id },
            Some(c) => {
                let names: Vec<String> = model.features().map(|f| f.name.clone()).collect();
                EditOp::EditConstraint {
                    id: c.id,
                    formula: random_formula(rng, &names, 2),
                }
            }
            None => EditOp::SetAbstract {
                feature: any(rng),
                value: true,
            },
        },
    }
}

/// A UVL document with `n` features in a wide, shallow tree.
pub fn large_uvl(n: usize) -> String {
    let mut out = String::from("features\n\tRoot\n\t\toptional\n");
    let groups = n.saturating_sub(1).div_ceil(50);
    let mut made = 1;
    for g in 0..groups {
        if made >= n {
            break;
        }
        out.push_str(&format!("\t\t\tG{g}\n\t\t\t\tor\n"));
        made += 1;
        for k in 0..49 {
            if made >= n {
                break;
            }
            out.push_str(&format!("\t\t\t\t\tG{g}_{k}\n"));
            made += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use fmkit_core::model::validate;

    #[test]
    fn generated_models_are_valid_and_deterministic() {
        for seed in 0..200 {
            let shape = ModelShape {
                min_features: 1,
                max_features: 30,
                max_constraints: 8,
                exotic_names: true,
            };
            let m = random_model(&mut rng(seed), shape);
            assert!(validate(&m).is_empty(), "seed {seed}: {:?}", validate(&m));
            assert_eq!(m, random_model(&mut rng(seed), shape));
        }
    }

    #[test]
    fn large_uvl_has_requested_size() {
        let m = fmkit_core::formats::parse_uvl(&large_uvl(1234)).unwrap();
        assert_eq!(m.feature_count(), 1234);
    }
}
