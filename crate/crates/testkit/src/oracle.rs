//! Brute-force semantics over all 2^n assignments. Independent of the CNF
//! encoder and the solver: validity is checked on the tree itself.

use std::collections::{BTreeMap, BTreeSet};

use fmkit_core::model::{FeatureId, FeatureModel, GroupKind};

/// Above this, enumeration is refused.
pub const MAX_FEATURES: usize = 22;

/// Selected feature names.
pub type Config = BTreeSet<String>;

fn diagram_ok(model: &FeatureModel, on: &dyn Fn(FeatureId) -> bool) -> bool {
    if !on(model.root()) {
        return false;
    }
    for f in model.features() {
        if let Some(p) = f.parent {
            if on(f.id) && !on(p) {
                return false;
            }
        }
        if !on(f.id) || f.children.is_empty() {
            continue;
        }
        let chosen = f.children.iter().filter(|&&c| on(c)).count();
        let ok = match f.group {
            GroupKind::And => f
                .children
                .iter()
                .all(|&c| !model.feature(c).expect("live").mandatory || on(c)),
            GroupKind::Or => chosen >= 1,
            GroupKind::Alternative => chosen == 1,
        };
        if !ok {
            return false;
        }
    }
    true
}

/// Whether the selection `selected` is a valid configuration.
pub fn is_valid(model: &FeatureModel, selected: &Config) -> bool {
    let on = |id: FeatureId| selected.contains(model.name(id).expect("live"));
    diagram_ok(model, &on)
        && model
            .constraints()
            .iter()
            .all(|c| c.formula.eval(&|n: &str| selected.contains(n)))
}

/// Every valid configuration, each as its set of selected names.
pub fn valid_configurations(model: &FeatureModel) -> Vec<Config> {
    let ids = model.preorder();
    assert!(
        ids.len() <= MAX_FEATURES,
        "oracle refuses {} features",
        ids.len()
    );
    let names: Vec<&str> = ids.iter().map(|&i| model.name(i).expect("live")).collect();
    let slot: BTreeMap<FeatureId, usize> = ids.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut out = Vec::new();
    for bits in 0u64..(1 << ids.len()) {
        let on = |id: FeatureId| bits >> slot[&id] & 1 == 1;
        if !diagram_ok(model, &on) {
            continue;
        }
        let holds = |n: &str| {
            names
                .iter()
                .position(|&m| m == n)
                .is_some_and(|k| bits >> k & 1 == 1)
        };
        if model.constraints().iter().all(|c| c.formula.eval(&holds)) {
            out.push(
                names
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| bits >> k & 1 == 1)
                    .map(|(_, n)| n.to_string())
                    .collect(),
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Anomalies {
    pub void: bool,
    pub core: BTreeSet<String>,
    pub dead: BTreeSet<String>,
    pub false_optional: BTreeSet<String>,
}

pub fn anomalies(model: &FeatureModel) -> Anomalies {
    let configs = valid_configurations(model);
    if configs.is_empty() {
        return Anomalies {
            void: true,
            ..Anomalies::default()
        };
    }
    let mut a = Anomalies::default();
    for f in model.features() {
        let n = &f.name;
        let count = configs.iter().filter(|c| c.contains(n)).count();
        if count == configs.len() {
            a.core.insert(n.clone());
        }
        if count == 0 {
            a.dead.insert(n.clone());
            continue;
        }
        let Some(p) = f.parent else { continue };
        let parent = model.feature(p).expect("live");
        if parent.group == GroupKind::And
            && !f.mandatory
            && configs
                .iter()
                .all(|c| !c.contains(&parent.name) || c.contains(n))
        {
            a.false_optional.insert(n.clone());
        }
    }
    a
}

/// Forced states of undecided features under explicit decisions, or `None`
/// when no valid configuration extends them.
pub fn implications(
    model: &FeatureModel,
    decisions: &BTreeMap<String, bool>,
) -> Option<(Config, Config)> {
    let configs: Vec<Config> = valid_configurations(model)
        .into_iter()
        .filter(|c| decisions.iter().all(|(n, &v)| c.contains(n) == v))
        .collect();
    if configs.is_empty() {
        return None;
    }
    let mut selected = Config::new();
    let mut deselected = Config::new();
    for f in model.features() {
        if decisions.contains_key(&f.name) {
            continue;
        }
        if configs.iter().all(|c| c.contains(&f.name)) {
            selected.insert(f.name.clone());
        } else if configs.iter().all(|c| !c.contains(&f.name)) {
            deselected.insert(f.name.clone());
        }
    }
    Some((selected, deselected))
}

/// Deduplicated restriction of `configs` to `kept`.
pub fn project(configs: &[Config], kept: &BTreeSet<String>) -> BTreeSet<Config> {
    configs
        .iter()
        .map(|c| c.intersection(kept).cloned().collect())
        .collect()
}

pub fn feature_names(model: &FeatureModel) -> BTreeSet<String> {
    model.features().map(|f| f.name.clone()).collect()
}

/// Valid t-literal interactions over distinct features, as sorted
/// `(name, value)` lists; a tuple is valid iff some configuration realizes it.
pub fn valid_tuples(model: &FeatureModel, t: usize) -> BTreeSet<Vec<(String, bool)>> {
    let configs = valid_configurations(model);
    let names: Vec<String> = feature_names(model).into_iter().collect();
    let mut out = BTreeSet::new();
    for c in &configs {
        let row: Vec<(String, bool)> = names.iter().map(|n| (n.clone(), c.contains(n))).collect();
        combos(&row, t, 0, &mut Vec::new(), &mut out);
    }
    out
}

fn combos(
    row: &[(String, bool)],
    t: usize,
    from: usize,
    acc: &mut Vec<(String, bool)>,
    out: &mut BTreeSet<Vec<(String, bool)>>,
) {
    if acc.len() == t {
        out.insert(acc.clone());
        return;
    }
    for k in from..row.len() {
        acc.push(row[k].clone());
        combos(row, t, k + 1, acc, out);
        acc.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::car;

    #[test]
    fn car_has_three_configurations() {
        let configs = valid_configurations(&car());
        assert_eq!(configs.len(), 3);
        let a = anomalies(&car());
        assert_eq!(a.core, ["Car", "Engine"].map(String::from).into());
        assert!(a.dead.is_empty() && a.false_optional.is_empty() && !a.void);
    }

    #[test]
    fn car_pairs() {
        // 3 configurations over 5 features; pairs realized by at least one
        assert_eq!(valid_tuples(&car(), 1).len(), 8);
        let pairs = valid_tuples(&car(), 2);
        assert!(pairs.contains(&vec![
            ("Electric".to_string(), true),
            ("Radio".to_string(), false)
        ]));
        assert!(!pairs.contains(&vec![
            ("Gas".to_string(), true),
            ("Radio".to_string(), true)
        ]));
    }
}
