//! Undo restores, every apply validates, and slicing deletes are safe.

use std::collections::BTreeSet;

use fmkit_core::editing::{apply, EditOp, Editor, InverseRecord, MoveMode};
use fmkit_core::formats::serialize_uvl;
use fmkit_core::model::validate;
use fmkit_testkit::gen::{random_model, random_op, rng, ModelShape};
use fmkit_testkit::oracle::{feature_names, project, valid_configurations};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn undo_all_restores_initial(seed in any::<u64>(), len in 1usize..=30) {
        let mut r = rng(seed);
        let m = random_model(&mut r, ModelShape::small(12, 3));
        let initial = serialize_uvl(&m);
        let mut ed = Editor::new(m);
        let mut fresh = 0;
        let mut snapshots = vec![initial.clone()];
        for _ in 0..len {
            let op = random_op(&mut r, &ed.model, &mut fresh);
            if ed.apply(op, MoveMode::Arbitrary).is_ok() {
                prop_assert!(validate(&ed.model).is_empty());
                snapshots.push(serialize_uvl(&ed.model));
            }
        }
        let after = serialize_uvl(&ed.model);
        while ed.history.can_undo() {
            ed.undo().unwrap();
            snapshots.pop();
            prop_assert_eq!(&serialize_uvl(&ed.model), snapshots.last().unwrap());
        }
        prop_assert_eq!(serialize_uvl(&ed.model), initial);
        while ed.history.can_redo() {
            ed.redo().unwrap();
        }
        prop_assert_eq!(serialize_uvl(&ed.model), after);
    }

    #[test]
    fn slicing_delete_preserves_projection(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = random_model(&mut r, ModelShape { min_features: 3, max_features: 10, max_constraints: 3, exotic_names: false });
        for f in m.features().filter(|f| f.id != m.root()) {
            let (out, inv) = apply(&m, &EditOp::DeleteFeature { feature: f.name.clone() }, MoveMode::Disabled).unwrap();
            if matches!(inv, InverseRecord::Snapshot(_)) {
                let kept: BTreeSet<String> = feature_names(&out);
                let got: BTreeSet<_> = valid_configurations(&out).into_iter().collect();
                prop_assert_eq!(got, project(&valid_configurations(&m), &kept));
            }
        }
    }
}
