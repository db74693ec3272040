//! Slicing preserves the projected configuration space.

use std::collections::BTreeSet;

use fmkit_core::model::validate;
use fmkit_core::slicing::slice;
use fmkit_testkit::gen::{random_model, random_removal, rng, ModelShape};
use fmkit_testkit::oracle::{feature_names, project, valid_configurations};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn slice_equals_projection(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = random_model(&mut r, ModelShape { min_features: 2, max_features: 12, max_constraints: 4, exotic_names: false });
        let remove = random_removal(&mut r, &m);
        let result = slice(&m, &remove).unwrap();
        prop_assert!(validate(&result.model).is_empty());
        let kept: BTreeSet<String> = feature_names(&result.model);
        for name in &remove {
            prop_assert!(!kept.contains(name));
            for c in result.model.constraints() {
                prop_assert!(!c.formula.mentions(name));
            }
        }
        let want = project(&valid_configurations(&m), &kept);
        let got: BTreeSet<_> = valid_configurations(&result.model).into_iter().collect();
        prop_assert!(got.len() <= valid_configurations(&m).len());
        prop_assert_eq!(got, want);
    }

    #[test]
    fn slicing_composes(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = random_model(&mut r, ModelShape { min_features: 4, max_features: 10, max_constraints: 3, exotic_names: false });
        let a = random_removal(&mut r, &m);
        let first = slice(&m, &a).unwrap().model;
        let b = random_removal(&mut r, &first);
        prop_assume!(!b.is_empty());
        let twice = slice(&first, &b).unwrap().model;
        let all: Vec<String> = a.iter().chain(&b).cloned().collect();
        let once = slice(&m, &all).unwrap().model;
        let x: BTreeSet<_> = valid_configurations(&twice).into_iter().collect();
        let y: BTreeSet<_> = valid_configurations(&once).into_iter().collect();
        prop_assert_eq!(x, y);
    }
}

#[test]
fn unreferenced_leaf_matches_plain_removal() {
    let car = fmkit_testkit::car();
    let r = slice(&car, &["Radio"]).unwrap();
    assert!(r.derived_constraints.is_empty());
    assert_eq!(valid_configurations(&r.model).len(), 2);
}
