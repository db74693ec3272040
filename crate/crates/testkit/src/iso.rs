//! Structural isomorphism: names, child order, groups, effective
//! mandatory flags, abstract flags and constraint ASTs in order.

use fmkit_core::model::{FeatureId, FeatureModel};

fn node(m: &FeatureModel, id: FeatureId, out: &mut Vec<String>) {
    let f = m.feature(id).expect("live");
    out.push(format!(
        "{:?} group={} mandatory={} abstract={} children={}",
        f.name,
        f.group,
        m.is_mandatory(id),
        f.is_abstract,
        f.children.len()
    ));
    for &c in &f.children {
        node(m, c, out);
    }
}

/// Line-per-feature description followed by one line per constraint.
pub fn describe(m: &FeatureModel) -> Vec<String> {
    let mut out = Vec::new();
    node(m, m.root(), &mut out);
    out.extend(
        m.constraints()
            .iter()
            .map(|c| format!("constraint {:?}", c.formula)),
    );
    out
}

/// `Err` names the first differing line.
pub fn isomorphic(a: &FeatureModel, b: &FeatureModel) -> Result<(), String> {
    let (da, db) = (describe(a), describe(b));
    for (k, (x, y)) in da.iter().zip(&db).enumerate() {
        if x != y {
            return Err(format!("line {k}: {x} != {y}"));
        }
    }
    if da.len() != db.len() {
        return Err(format!("length {} != {}", da.len(), db.len()));
    }
    Ok(())
}
