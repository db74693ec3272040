//! Feature trees, cross-tree constraints and structural validation.
//!
//! A [`FeatureModel`] is a plain value: construction helpers mutate it in
//! place, everything else (analysis, formats, editing) works on shared
//! references or produces new values.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::Formula;

/// Dense index into a model's feature table. Slots are never reused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureId(pub u32);

impl FeatureId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConstraintId(pub u32);

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// How the children of a feature are decomposed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GroupKind {
    #[default]
    And,
    Or,
    Alternative,
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupKind::And => "AND",
            GroupKind::Or => "OR",
            GroupKind::Alternative => "ALTERNATIVE",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub id: FeatureId,
    pub name: String,
    #[serde(rename = "abstract")]
    pub is_abstract: bool,
    /// Only meaningful when the parent is an AND group.
    pub mandatory: bool,
    pub group: GroupKind,
    pub parent: Option<FeatureId>,
    pub children: Vec<FeatureId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: ConstraintId,
    pub formula: Formula,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown feature {0}")]
    UnknownFeature(FeatureId),
    #[error("unknown feature name {0:?}")]
    UnknownName(String),
    #[error("unknown constraint {0}")]
    UnknownConstraint(ConstraintId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeatureModel {
    root: FeatureId,
    features: Vec<Option<Feature>>,
    constraints: Vec<Constraint>,
    next_constraint_id: u32,
}

impl FeatureModel {
    /// A model consisting of a single root feature.
    pub fn new(root_name: impl Into<String>) -> Self {
        let root = Feature {
            id: FeatureId(0),
            name: root_name.into(),
            is_abstract: false,
            mandatory: false,
            group: GroupKind::And,
            parent: None,
            children: Vec::new(),
        };
        FeatureModel {
            root: FeatureId(0),
            features: vec![Some(root)],
            constraints: Vec::new(),
            next_constraint_id: 0,
        }
    }

    /// Assembles a model from raw parts without checking anything.
    /// Feature `i` of `features` must carry id `i`; use [`validate`] afterwards.
    pub fn from_parts(
        root: FeatureId,
        features: Vec<Option<Feature>>,
        constraints: Vec<Constraint>,
    ) -> Self {
        let next_constraint_id = constraints.iter().map(|c| c.id.0 + 1).max().unwrap_or(0);
        FeatureModel {
            root,
            features,
            constraints,
            next_constraint_id,
        }
    }

    pub fn root(&self) -> FeatureId {
        self.root
    }

    pub fn root_feature(&self) -> &Feature {
        self.feature(self.root).expect("root feature present")
    }

    pub fn feature(&self, id: FeatureId) -> Option<&Feature> {
        self.features.get(id.index()).and_then(Option::as_ref)
    }

    pub(crate) fn feature_mut(&mut self, id: FeatureId) -> Result<&mut Feature, ModelError> {
        self.features
            .get_mut(id.index())
            .and_then(Option::as_mut)
            .ok_or(ModelError::UnknownFeature(id))
    }

    fn expect_feature(&self, id: FeatureId) -> Result<&Feature, ModelError> {
        self.feature(id).ok_or(ModelError::UnknownFeature(id))
    }

    /// Live features in table order.
    pub fn features(&self) -> impl Iterator<Item = &Feature> {
        self.features.iter().flatten()
    }

    pub fn feature_count(&self) -> usize {
        self.features().count()
    }

    /// Size of the id space including deleted slots.
    pub fn id_capacity(&self) -> usize {
        self.features.len()
    }

    pub fn find(&self, name: &str) -> Option<FeatureId> {
        self.features().find(|f| f.name == name).map(|f| f.id)
    }

    pub fn name(&self, id: FeatureId) -> Option<&str> {
        self.feature(id).map(|f| f.name.as_str())
    }

    pub fn parent(&self, id: FeatureId) -> Option<FeatureId> {
        self.feature(id).and_then(|f| f.parent)
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraint(&self, id: ConstraintId) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.id == id)
    }

    /// True if `id` is a child of an AND parent and carries the mandatory flag.
    pub fn is_mandatory(&self, id: FeatureId) -> bool {
        let Some(f) = self.feature(id) else {
            return false;
        };
        match f.parent.and_then(|p| self.feature(p)) {
            Some(p) => p.group == GroupKind::And && f.mandatory,
            None => false,
        }
    }

    /// True if `id` is a non-mandatory child of an AND parent.
    pub fn is_optional(&self, id: FeatureId) -> bool {
        let Some(f) = self.feature(id) else {
            return false;
        };
        match f.parent.and_then(|p| self.feature(p)) {
            Some(p) => p.group == GroupKind::And && !f.mandatory,
            None => false,
        }
    }

    /// Features in depth-first pre-order, starting at the root. Only reachable
    /// features are visited, and each at most once.
    pub fn preorder(&self) -> Vec<FeatureId> {
        self.preorder_from(self.root)
    }

    pub fn preorder_from(&self, start: FeatureId) -> Vec<FeatureId> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![start];
        while let Some(id) = stack.pop() {
            let Some(f) = self.feature(id) else { continue };
            if !seen.insert(id) {
                continue;
            }
            out.push(id);
            stack.extend(f.children.iter().rev().copied());
        }
        out
    }

    pub fn is_descendant(&self, candidate: FeatureId, ancestor: FeatureId) -> bool {
        let mut cur = self.parent(candidate);
        let mut steps = 0;
        while let Some(p) = cur {
            if p == ancestor {
                return true;
            }
            steps += 1;
            if steps > self.features.len() {
                return false;
            }
            cur = self.parent(p);
        }
        false
    }

    // ---- construction ----

    /// Appends a new child feature. Panics if `parent` does not exist.
    pub fn add_child(&mut self, parent: FeatureId, name: impl Into<String>) -> FeatureId {
        let len = self.feature(parent).expect("parent exists").children.len();
        self.insert_child(parent, len, name)
    }

    /// Inserts a new child feature at `index` among the children of `parent`.
    /// Panics if `parent` does not exist or `index` is out of range.
    pub fn insert_child(
        &mut self,
        parent: FeatureId,
        index: usize,
        name: impl Into<String>,
    ) -> FeatureId {
        let id = FeatureId(self.features.len() as u32);
        let p = self.feature_mut(parent).expect("parent exists");
        p.children.insert(index, id);
        self.features.push(Some(Feature {
            id,
            name: name.into(),
            is_abstract: false,
            mandatory: false,
            group: GroupKind::And,
            parent: Some(parent),
            children: Vec::new(),
        }));
        id
    }

    pub fn set_group(&mut self, id: FeatureId, group: GroupKind) -> Result<(), ModelError> {
        self.feature_mut(id)?.group = group;
        Ok(())
    }

    pub fn set_mandatory(&mut self, id: FeatureId, mandatory: bool) -> Result<(), ModelError> {
        self.feature_mut(id)?.mandatory = mandatory;
        Ok(())
    }

    pub fn set_abstract(&mut self, id: FeatureId, is_abstract: bool) -> Result<(), ModelError> {
        self.feature_mut(id)?.is_abstract = is_abstract;
        Ok(())
    }

    /// Renames a feature and every constraint variable referring to it.
    pub fn rename(&mut self, id: FeatureId, new_name: impl Into<String>) -> Result<(), ModelError> {
        let new_name = new_name.into();
        let f = self.feature_mut(id)?;
        let old = std::mem::replace(&mut f.name, new_name.clone());
        for c in &mut self.constraints {
            c.formula.rename_var(&old, &new_name);
        }
        Ok(())
    }

    pub fn add_constraint(&mut self, formula: Formula) -> ConstraintId {
        let idx = self.constraints.len();
        self.insert_constraint(idx, formula)
    }

    pub fn insert_constraint(&mut self, index: usize, formula: Formula) -> ConstraintId {
        let id = ConstraintId(self.next_constraint_id);
        self.next_constraint_id += 1;
        self.constraints.insert(index, Constraint { id, formula });
        id
    }

    pub(crate) fn replace_constraint(
        &mut self,
        id: ConstraintId,
        formula: Formula,
    ) -> Result<Formula, ModelError> {
        let c = self
            .constraints
            .iter_mut()
            .find(|c| c.id == id)
            .ok_or(ModelError::UnknownConstraint(id))?;
        Ok(std::mem::replace(&mut c.formula, formula))
    }

    pub(crate) fn remove_constraint(
        &mut self,
        id: ConstraintId,
    ) -> Result<(usize, Constraint), ModelError> {
        let idx = self
            .constraints
            .iter()
            .position(|c| c.id == id)
            .ok_or(ModelError::UnknownConstraint(id))?;
        Ok((idx, self.constraints.remove(idx)))
    }

    pub(crate) fn retain_constraints(&mut self, mut keep: impl FnMut(&Constraint) -> bool) {
        self.constraints.retain(|c| keep(c));
    }

    /// Unlinks `id` from its parent and returns the former position.
    pub(crate) fn detach(&mut self, id: FeatureId) -> Result<(FeatureId, usize), ModelError> {
        let parent = self
            .expect_feature(id)?
            .parent
            .ok_or(ModelError::UnknownFeature(id))?;
        let p = self.feature_mut(parent)?;
        let pos = p
            .children
            .iter()
            .position(|&c| c == id)
            .ok_or(ModelError::UnknownFeature(id))?;
        p.children.remove(pos);
        self.feature_mut(id)?.parent = None;
        Ok((parent, pos))
    }

    pub(crate) fn attach(
        &mut self,
        id: FeatureId,
        parent: FeatureId,
        index: usize,
    ) -> Result<(), ModelError> {
        let p = self.feature_mut(parent)?;
        let index = index.min(p.children.len());
        p.children.insert(index, id);
        self.feature_mut(id)?.parent = Some(parent);
        Ok(())
    }

    /// Drops a detached feature's slot. The id is never handed out again.
    pub(crate) fn drop_slot(&mut self, id: FeatureId) {
        if let Some(slot) = self.features.get_mut(id.index()) {
            *slot = None;
        }
    }

    // ---- queries used by the viewer ----

    /// Number of direct children and of strict descendants of `id`.
    pub fn collapse_counts(&self, id: FeatureId) -> Result<(usize, usize), ModelError> {
        let f = self.expect_feature(id)?;
        let total = self.preorder_from(id).len() - 1;
        Ok((f.children.len(), total))
    }

    /// `[root, ..., id]` along parent links.
    pub fn path_to_root(&self, id: FeatureId) -> Result<Vec<FeatureId>, ModelError> {
        self.expect_feature(id)?;
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            if path.len() > self.features.len() {
                break;
            }
            path.push(p);
            cur = p;
        }
        path.reverse();
        Ok(path)
    }

    /// Features ranked by Levenshtein distance between `query` and their
    /// name. Ties keep pre-order position. At most `limit` results.
    pub fn search_features(&self, query: &str, limit: usize) -> Vec<(FeatureId, usize)> {
        let mut ranked: Vec<(FeatureId, usize)> = self
            .preorder()
            .into_iter()
            .map(|id| {
                (
                    id,
                    levenshtein(query, &self.feature(id).expect("live").name),
                )
            })
            .collect();
        // stable sort keeps pre-order among equal distances
        ranked.sort_by_key(|&(_, d)| d);
        ranked.truncate(limit);
        ranked
    }

    /// Feature names referenced by constraints.
    pub fn constraint_vars(&self) -> BTreeSet<&str> {
        self.constraints
            .iter()
            .flat_map(|c| c.formula.vars())
            .collect()
    }
}

/// Unit-cost insert/delete/substitute edit distance over chars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

// ---- validation ----

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    MissingRoot,
    RootHasParent,
    IdMismatch,
    DanglingChild,
    ParentMismatch,
    MultipleParents,
    Unreachable,
    EmptyName,
    InvalidName,
    DuplicateName,
    EmptyGroup,
    UnknownFeature,
    DegenerateOperator,
    DuplicateConstraintId,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// One broken structural rule. `subject` names the feature or constraint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: Rule,
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}): {}", self.rule, self.subject, self.detail)
    }
}

pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_control)
}

/// Checks every structural invariant; an empty result means well-formed.
pub fn validate(model: &FeatureModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut v = |rule, subject: &dyn fmt::Display, detail: String| {
        out.push(Violation {
            rule,
            subject: subject.to_string(),
            detail,
        })
    };
    let label = |id: FeatureId| match model.feature(id) {
        Some(f) => format!("{:?}", f.name),
        None => id.to_string(),
    };

    let Some(root) = model.feature(model.root) else {
        v(
            Rule::MissingRoot,
            &model.root,
            "root id has no feature".into(),
        );
        return out;
    };
    if root.parent.is_some() {
        v(
            Rule::RootHasParent,
            &label(model.root),
            "root must not have a parent".into(),
        );
    }

    let mut parent_of: HashMap<FeatureId, FeatureId> = HashMap::new();
    for (slot, f) in model.features.iter().enumerate() {
        let Some(f) = f else { continue };
        if f.id.index() != slot {
            v(
                Rule::IdMismatch,
                &label(f.id),
                format!("stored in slot {slot}"),
            );
        }
        for &c in &f.children {
            match model.feature(c) {
                None => v(
                    Rule::DanglingChild,
                    &label(f.id),
                    format!("child {c} does not exist"),
                ),
                Some(child) => {
                    if let Some(prev) = parent_of.insert(c, f.id) {
                        v(
                            Rule::MultipleParents,
                            &label(c),
                            format!("listed under {} and {}", label(prev), label(f.id)),
                        );
                    } else if child.parent != Some(f.id) {
                        v(
                            Rule::ParentMismatch,
                            &label(c),
                            format!("parent link does not point to {}", label(f.id)),
                        );
                    }
                }
            }
        }
        if f.group != GroupKind::And && f.children.is_empty() {
            v(
                Rule::EmptyGroup,
                &label(f.id),
                format!("{} group without children", f.group),
            );
        }
        if f.name.is_empty() {
            v(Rule::EmptyName, &f.id, "feature name is empty".into());
        } else if !is_valid_name(&f.name) {
            v(
                Rule::InvalidName,
                &label(f.id),
                "name contains control characters".into(),
            );
        }
    }
    for f in model.features() {
        if f.id != model.root && f.parent.is_some() && !parent_of.contains_key(&f.id) {
            v(
                Rule::ParentMismatch,
                &label(f.id),
                "not listed among its parent's children".into(),
            );
        }
    }

    let reachable: HashSet<FeatureId> = model.preorder().into_iter().collect();
    for f in model.features() {
        if !reachable.contains(&f.id) {
            v(
                Rule::Unreachable,
                &label(f.id),
                "not reachable from the root".into(),
            );
        }
    }

    let mut names: HashMap<&str, FeatureId> = HashMap::new();
    for f in model.features() {
        if names.insert(&f.name, f.id).is_some() {
            v(
                Rule::DuplicateName,
                &format!("{:?}", f.name),
                "name used by more than one feature".into(),
            );
        }
    }

    let mut ids = HashSet::new();
    for c in &model.constraints {
        if !ids.insert(c.id) {
            v(
                Rule::DuplicateConstraintId,
                &c.id,
                "constraint id used twice".into(),
            );
        }
        for var in c.formula.vars() {
            if !names.contains_key(var) {
                v(
                    Rule::UnknownFeature,
                    &c.id,
                    format!("references unknown feature {var:?}"),
                );
            }
        }
        if !c.formula.is_normalized() {
            v(
                Rule::DegenerateOperator,
                &c.id,
                "and/or with fewer than two operands".into(),
            );
        }
    }
    out
}

// ---- collapse bookkeeping ----

/// View-only record of hidden parts of a diagram.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CollapseState {
    pub collapsed_subtrees: BTreeSet<FeatureId>,
    /// `(parent, start, end)` with `start..end` indexing the parent's children.
    pub hidden_sibling_ranges: BTreeSet<(FeatureId, usize, usize)>,
}

impl CollapseState {
    pub fn toggle_subtree(&mut self, id: FeatureId) {
        if !self.collapsed_subtrees.remove(&id) {
            self.collapsed_subtrees.insert(id);
        }
    }

    pub fn hide_siblings(&mut self, parent: FeatureId, range: Range<usize>) {
        if range.start < range.end {
            self.hidden_sibling_ranges
                .insert((parent, range.start, range.end));
        }
    }

    pub fn reveal_siblings(&mut self, parent: FeatureId) {
        self.hidden_sibling_ranges.retain(|&(p, _, _)| p != parent);
    }

    /// Features that remain drawn, in pre-order.
    pub fn visible(&self, model: &FeatureModel) -> Vec<FeatureId> {
        let mut out = Vec::new();
        let mut stack = vec![model.root()];
        while let Some(id) = stack.pop() {
            let Some(f) = model.feature(id) else { continue };
            out.push(id);
            if self.collapsed_subtrees.contains(&id) {
                continue;
            }
            for (i, &c) in f.children.iter().enumerate().rev() {
                let hidden = self
                    .hidden_sibling_ranges
                    .range((id, 0, 0)..=(id, usize::MAX, usize::MAX))
                    .any(|&(_, s, e)| (s..e).contains(&i));
                if !hidden {
                    stack.push(c);
                }
            }
        }
        out
    }
}
