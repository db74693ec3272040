//! Test support shared by the workspace: an enumeration oracle that
//! evaluates diagram semantics directly on the tree, seeded random model
//! generators, a structural isomorphism check, and a protocol simulator.

pub mod gen;
pub mod iso;
pub mod oracle;
pub mod protocol;

use fmkit_core::formats::{parse_uvl, CAR_MODEL_UVL};
use fmkit_core::model::FeatureModel;

/// The car example: Car, mandatory Engine with alternative Gas/Electric,
/// optional Radio, and `Radio => Electric`.
pub fn car() -> FeatureModel {
    parse_uvl(CAR_MODEL_UVL).expect("fixture parses")
}
