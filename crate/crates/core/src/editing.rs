//! Edit operations with inverses, and an undo/redo history.
//!
//! Every successful [`apply`] returns a model that passes `validate`.
//! Features are addressed by name, constraints by id.

use serde::{Deserialize, Serialize};

use crate::formula::Formula;
use crate::model::{
    is_valid_name, validate, ConstraintId, FeatureId, FeatureModel, GroupKind, Violation,
};
use crate::slicing::slice;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all_fields = "camelCase")]
pub enum EditOp {
    CreateFeature {
        name: String,
        parent: String,
        index: usize,
    },
    Rename {
        feature: String,
        new_name: String,
    },
    SetAbstract {
        feature: String,
        value: bool,
    },
    SetMandatory {
        feature: String,
        value: bool,
    },
    SetGroup {
        parent: String,
        group: GroupKind,
    },
    MoveFeature {
        feature: String,
        new_parent: String,
        index: usize,
    },
    DeleteFeature {
        feature: String,
    },
    AddConstraint {
        formula: Formula,
    },
    EditConstraint {
        id: ConstraintId,
        formula: Formula,
    },
    DeleteConstraint {
        id: ConstraintId,
    },
}

/// Reverses exactly one applied op.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum InverseRecord {
    /// Applied in order with [`MoveMode::Arbitrary`].
    Ops(Vec<EditOp>),
    Snapshot(Box<FeatureModel>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MoveMode {
    #[default]
    LateralOnly,
    Arbitrary,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EditError {
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("unknown constraint {0}")]
    UnknownConstraint(ConstraintId),
    #[error("a feature named {0:?} already exists")]
    NameCollision(String),
    #[error("invalid feature name {0:?}")]
    InvalidName(String),
    #[error("cannot move {feature:?} below its own descendant {target:?}")]
    Cycle { feature: String, target: String },
    #[error("the root feature cannot be deleted")]
    RootDeletion,
    #[error("the root feature cannot be moved")]
    RootMove,
    #[error("move not permitted in {0:?} mode")]
    ModeViolation(MoveMode),
    #[error("index {index} out of range (at most {max})")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("result is not well-formed: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("nothing to redo")]
    NothingToRedo,
}

fn lookup(model: &FeatureModel, name: &str) -> Result<FeatureId, EditError> {
    model
        .find(name)
        .ok_or_else(|| EditError::UnknownFeature(name.to_string()))
}

fn check_new_name(model: &FeatureModel, name: &str) -> Result<(), EditError> {
    if !is_valid_name(name) {
        return Err(EditError::InvalidName(name.to_string()));
    }
    if model.find(name).is_some() {
        return Err(EditError::NameCollision(name.to_string()));
    }
    Ok(())
}

/// Detaching the last child of an OR/ALTERNATIVE parent resets it to AND;
/// returns the op that restores the old group.
fn detach_resetting_group(
    model: &mut FeatureModel,
    id: FeatureId,
) -> (FeatureId, usize, Option<EditOp>) {
    let (parent, pos) = model.detach(id).expect("non-root feature");
    let restore = reset_if_emptied(model, parent);
    (parent, pos, restore)
}

fn reset_if_emptied(model: &mut FeatureModel, parent: FeatureId) -> Option<EditOp> {
    let p = model.feature(parent).expect("live");
    if !p.children.is_empty() || p.group == GroupKind::And {
        return None;
    }
    let op = EditOp::SetGroup {
        parent: p.name.clone(),
        group: p.group,
    };
    model.set_group(parent, GroupKind::And).expect("live");
    Some(op)
}

fn check_index(index: usize, max: usize) -> Result<(), EditError> {
    if index > max {
        Err(EditError::IndexOutOfRange { index, max })
    } else {
        Ok(())
    }
}

/// Applies `op` to a copy of `model`.
pub fn apply(
    model: &FeatureModel,
    op: &EditOp,
    mode: MoveMode,
) -> Result<(FeatureModel, InverseRecord), EditError> {
    let mut m = model.clone();
    let inverse = match op {
        EditOp::CreateFeature {
            name,
            parent,
            index,
        } => {
            check_new_name(&m, name)?;
            let p = lookup(&m, parent)?;
            check_index(*index, m.feature(p).expect("live").children.len())?;
            m.insert_child(p, *index, name.clone());
            InverseRecord::Ops(vec![EditOp::DeleteFeature {
                feature: name.clone(),
            }])
        }
        EditOp::Rename { feature, new_name } => {
            let id = lookup(&m, feature)?;
            if new_name != feature {
                check_new_name(&m, new_name)?;
            }
            m.rename(id, new_name.clone()).expect("live");
            InverseRecord::Ops(vec![EditOp::Rename {
                feature: new_name.clone(),
                new_name: feature.clone(),
            }])
        }
        EditOp::SetAbstract { feature, value } => {
            let id = lookup(&m, feature)?;
            let old = m.feature(id).expect("live").is_abstract;
            m.set_abstract(id, *value).expect("live");
            InverseRecord::Ops(vec![EditOp::SetAbstract {
                feature: feature.clone(),
                value: old,
            }])
        }
        EditOp::SetMandatory { feature, value } => {
            let id = lookup(&m, feature)?;
            let old = m.feature(id).expect("live").mandatory;
            m.set_mandatory(id, *value).expect("live");
            InverseRecord::Ops(vec![EditOp::SetMandatory {
                feature: feature.clone(),
                value: old,
            }])
        }
        EditOp::SetGroup { parent, group } => {
            let id = lookup(&m, parent)?;
            let old = m.feature(id).expect("live").group;
            m.set_group(id, *group).expect("live");
            InverseRecord::Ops(vec![EditOp::SetGroup {
                parent: parent.clone(),
                group: old,
            }])
        }
        EditOp::MoveFeature {
            feature,
            new_parent,
            index,
        } => {
            let id = lookup(&m, feature)?;
            let target = lookup(&m, new_parent)?;
            if id == m.root() {
                return Err(EditError::RootMove);
            }
            let old_parent = m.parent(id).expect("non-root");
            match mode {
                MoveMode::Disabled => return Err(EditError::ModeViolation(mode)),
                MoveMode::LateralOnly if target != old_parent => {
                    return Err(EditError::ModeViolation(mode))
                }
                _ => {}
            }
            if m.is_descendant(target, id) || target == id {
                return Err(EditError::Cycle {
                    feature: feature.clone(),
                    target: new_parent.clone(),
                });
            }
            let (_, pos) = m.detach(id).expect("non-root");
            let max = m.feature(target).expect("live").children.len();
            check_index(*index, max)?;
            m.attach(id, target, *index).expect("live");
            let restore = reset_if_emptied(&mut m, old_parent);
            let old_parent_name = m.name(old_parent).expect("live").to_string();
            let mut ops = vec![EditOp::MoveFeature {
                feature: feature.clone(),
                new_parent: old_parent_name,
                index: pos,
            }];
            ops.extend(restore);
            InverseRecord::Ops(ops)
        }
        EditOp::DeleteFeature { feature } => {
            let id = lookup(&m, feature)?;
            if id == m.root() {
                return Err(EditError::RootDeletion);
            }
            let f = m.feature(id).expect("live").clone();
            let referenced = m.constraints().iter().any(|c| c.formula.mentions(feature));
            if !f.children.is_empty() || referenced {
                m = slice(model, &[feature])
                    .expect("feature exists and is not the root")
                    .model;
                InverseRecord::Snapshot(Box::new(model.clone()))
            } else {
                let (parent, pos, restore) = detach_resetting_group(&mut m, id);
                m.drop_slot(id);
                let parent = m.name(parent).expect("live").to_string();
                let mut ops = vec![
                    EditOp::CreateFeature {
                        name: feature.clone(),
                        parent,
                        index: pos,
                    },
                    EditOp::SetAbstract {
                        feature: feature.clone(),
                        value: f.is_abstract,
                    },
                    EditOp::SetMandatory {
                        feature: feature.clone(),
                        value: f.mandatory,
                    },
                    EditOp::SetGroup {
                        parent: feature.clone(),
                        group: f.group,
                    },
                ];
                ops.extend(restore);
                InverseRecord::Ops(ops)
            }
        }
        EditOp::AddConstraint { formula } => {
            m.add_constraint(formula.clone());
            // a snapshot also rewinds the id counter, so redo reissues the same id
            InverseRecord::Snapshot(Box::new(model.clone()))
        }
        EditOp::EditConstraint { id, formula } => {
            let old = m
                .replace_constraint(*id, formula.clone())
                .map_err(|_| EditError::UnknownConstraint(*id))?;
            InverseRecord::Ops(vec![EditOp::EditConstraint {
                id: *id,
                formula: old,
            }])
        }
        EditOp::DeleteConstraint { id } => {
            m.remove_constraint(*id)
                .map_err(|_| EditError::UnknownConstraint(*id))?;
            InverseRecord::Snapshot(Box::new(model.clone()))
        }
    };
    let violations = validate(&m);
    if !violations.is_empty() {
        return Err(EditError::Invalid(violations));
    }
    Ok((m, inverse))
}

/// Reverses one op previously applied to produce `model`.
pub fn apply_inverse(
    model: &FeatureModel,
    inverse: &InverseRecord,
) -> Result<FeatureModel, EditError> {
    match inverse {
        InverseRecord::Snapshot(m) => Ok((**m).clone()),
        InverseRecord::Ops(ops) => {
            let mut m = model.clone();
            for op in ops {
                m = apply(&m, op, MoveMode::Arbitrary)?.0;
            }
            Ok(m)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EditHistory {
    pub applied: Vec<(EditOp, InverseRecord)>,
    pub redo_stack: Vec<EditOp>,
}

impl EditHistory {
    pub fn can_undo(&self) -> bool {
        !self.applied.is_empty()
    }

    pub fn can_redo(&self) -> bool {
        !self.redo_stack.is_empty()
    }
}

/// A model together with its history. Mutators leave both untouched on error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Editor {
    pub model: FeatureModel,
    pub history: EditHistory,
}

impl Editor {
    pub fn new(model: FeatureModel) -> Self {
        Editor {
            model,
            history: EditHistory::default(),
        }
    }

    pub fn apply(&mut self, op: EditOp, mode: MoveMode) -> Result<(), EditError> {
        let (m, inv) = apply(&self.model, &op, mode)?;
        self.model = m;
        self.history.applied.push((op, inv));
        self.history.redo_stack.clear();
        Ok(())
    }

    /// Returns the op that was undone.
    pub fn undo(&mut self) -> Result<EditOp, EditError> {
        let (op, inv) = self
            .history
            .applied
            .last()
            .ok_or(EditError::NothingToUndo)?;
        self.model = apply_inverse(&self.model, inv)?;
        let op = op.clone();
        self.history.applied.pop();
        self.history.redo_stack.push(op.clone());
        Ok(op)
    }

    /// Returns the op that was re-applied.
    pub fn redo(&mut self) -> Result<EditOp, EditError> {
        let op = self
            .history
            .redo_stack
            .last()
            .ok_or(EditError::NothingToRedo)?
            .clone();
        let (m, inv) = apply(&self.model, &op, MoveMode::Arbitrary)?;
        self.model = m;
        self.history.redo_stack.pop();
        self.history.applied.push((op.clone(), inv));
        Ok(op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::count_solutions;
    use crate::formats::{parse_uvl, serialize_uvl, CAR_MODEL_UVL};
    use crate::formula::parse_formula;

    fn car() -> FeatureModel {
        parse_uvl(CAR_MODEL_UVL).unwrap()
    }

    fn create(name: &str, parent: &str, index: usize) -> EditOp {
        EditOp::CreateFeature {
            name: name.into(),
            parent: parent.into(),
            index,
        }
    }

    #[test]
    fn create_and_inverse() {
        let (m, inv) = apply(
            &car(),
            &create("Bluetooth", "Radio", 0),
            MoveMode::LateralOnly,
        )
        .unwrap();
        assert_eq!(m.feature_count(), 6);
        assert_eq!(
            inv,
            InverseRecord::Ops(vec![EditOp::DeleteFeature {
                feature: "Bluetooth".into()
            }])
        );
        assert_eq!(
            serialize_uvl(&apply_inverse(&m, &inv).unwrap()),
            serialize_uvl(&car())
        );
    }

    #[test]
    fn delete_referenced_feature_slices() {
        let mut ed = Editor::new(car());
        ed.apply(
            EditOp::DeleteFeature {
                feature: "Electric".into(),
            },
            MoveMode::LateralOnly,
        )
        .unwrap();
        assert!(matches!(
            ed.history.applied[0].1,
            InverseRecord::Snapshot(_)
        ));
        assert_eq!(
            ed.model.constraints().last().unwrap().formula,
            parse_formula("!Gas | !Radio").unwrap()
        );
        assert_eq!(count_solutions(&ed.model).unwrap(), 3);
        ed.undo().unwrap();
        assert_eq!(serialize_uvl(&ed.model), serialize_uvl(&car()));
        ed.redo().unwrap();
        assert!(ed.model.find("Electric").is_none());
    }

    #[test]
    fn move_gated_by_mode() {
        let op = EditOp::MoveFeature {
            feature: "Radio".into(),
            new_parent: "Gas".into(),
            index: 0,
        };
        assert_eq!(
            apply(&car(), &op, MoveMode::LateralOnly).unwrap_err(),
            EditError::ModeViolation(MoveMode::LateralOnly)
        );
        assert!(apply(&car(), &op, MoveMode::Arbitrary).is_ok());
        let lateral = EditOp::MoveFeature {
            feature: "Radio".into(),
            new_parent: "Car".into(),
            index: 0,
        };
        assert!(apply(&car(), &lateral, MoveMode::LateralOnly).is_ok());
        assert_eq!(
            apply(&car(), &lateral, MoveMode::Disabled).unwrap_err(),
            EditError::ModeViolation(MoveMode::Disabled)
        );
        let cyc = EditOp::MoveFeature {
            feature: "Engine".into(),
            new_parent: "Gas".into(),
            index: 0,
        };
        assert!(matches!(
            apply(&car(), &cyc, MoveMode::Arbitrary),
            Err(EditError::Cycle { .. })
        ));
    }

    #[test]
    fn emptying_a_group_resets_and_restores() {
        let mut m = FeatureModel::new("R");
        let a = m.add_child(m.root(), "A");
        m.set_group(a, GroupKind::Or).unwrap();
        m.add_child(a, "X");
        let mut ed = Editor::new(m.clone());
        ed.apply(
            EditOp::DeleteFeature {
                feature: "X".into(),
            },
            MoveMode::Arbitrary,
        )
        .unwrap();
        assert_eq!(ed.model.feature(a).unwrap().group, GroupKind::And);
        ed.undo().unwrap();
        assert_eq!(serialize_uvl(&ed.model), serialize_uvl(&m));

        let mut ed = Editor::new(m.clone());
        ed.apply(
            EditOp::MoveFeature {
                feature: "X".into(),
                new_parent: "R".into(),
                index: 1,
            },
            MoveMode::Arbitrary,
        )
        .unwrap();
        ed.undo().unwrap();
        assert_eq!(serialize_uvl(&ed.model), serialize_uvl(&m));

        let lateral = EditOp::MoveFeature {
            feature: "X".into(),
            new_parent: "A".into(),
            index: 0,
        };
        let (after, _) = apply(&m, &lateral, MoveMode::LateralOnly).unwrap();
        assert_eq!(after.feature(a).unwrap().group, GroupKind::Or);
    }

    #[test]
    fn constraint_ops_round_trip() {
        let mut ed = Editor::new(car());
        let f = parse_formula("Gas => !Radio").unwrap();
        ed.apply(
            EditOp::AddConstraint { formula: f.clone() },
            MoveMode::Disabled,
        )
        .unwrap();
        let id = ed.model.constraints()[1].id;
        ed.apply(
            EditOp::EditConstraint {
                id,
                formula: parse_formula("Gas | Radio").unwrap(),
            },
            MoveMode::Disabled,
        )
        .unwrap();
        ed.undo().unwrap();
        ed.undo().unwrap();
        assert_eq!(serialize_uvl(&ed.model), serialize_uvl(&car()));
        ed.redo().unwrap();
        ed.redo().unwrap();
        assert_eq!(
            ed.model.constraint(id).unwrap().formula,
            parse_formula("Gas | Radio").unwrap()
        );
        ed.apply(EditOp::DeleteConstraint { id }, MoveMode::Disabled)
            .unwrap();
        assert!(ed.model.constraint(id).is_none());
        assert!(!ed.history.can_redo());
    }

    #[test]
    fn errors() {
        let m = car();
        assert_eq!(
            apply(&m, &create("Gas", "Car", 0), MoveMode::Arbitrary).unwrap_err(),
            EditError::NameCollision("Gas".into())
        );
        assert_eq!(
            apply(&m, &create("X", "Car", 9), MoveMode::Arbitrary).unwrap_err(),
            EditError::IndexOutOfRange { index: 9, max: 2 }
        );
        assert_eq!(
            apply(
                &m,
                &EditOp::DeleteFeature {
                    feature: "Car".into()
                },
                MoveMode::Arbitrary
            )
            .unwrap_err(),
            EditError::RootDeletion
        );
        let bad = EditOp::AddConstraint {
            formula: parse_formula("Ghost").unwrap(),
        };
        assert!(matches!(
            apply(&m, &bad, MoveMode::Arbitrary),
            Err(EditError::Invalid(_))
        ));
        let leaf_group = EditOp::SetGroup {
            parent: "Radio".into(),
            group: GroupKind::Or,
        };
        assert!(matches!(
            apply(&m, &leaf_group, MoveMode::Arbitrary),
            Err(EditError::Invalid(_))
        ));
        let mut ed = Editor::new(m);
        assert_eq!(ed.undo().unwrap_err(), EditError::NothingToUndo);
        assert_eq!(ed.redo().unwrap_err(), EditError::NothingToRedo);
    }

    #[test]
    fn wire_form() {
        let op = EditOp::MoveFeature {
            feature: "Radio".into(),
            new_parent: "Car".into(),
            index: 1,
        };
        let json = serde_json::to_value(&op).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"kind": "MoveFeature", "feature": "Radio", "newParent": "Car", "index": 1})
        );
        let c: EditOp =
            serde_json::from_str(r#"{"kind":"AddConstraint","formula":"A => !B"}"#).unwrap();
        assert_eq!(
            c,
            EditOp::AddConstraint {
                formula: parse_formula("A => !B").unwrap()
            }
        );
    }
}
