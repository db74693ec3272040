//! Aligned text for `--pretty`. Inputs are the JSON results the service
//! layer produced, so both output modes describe the same data.

use std::fmt::Write;

use fmkit_core::analysis::{AnomalyReport, PropagationResult, Provenance, Selection};
use fmkit_core::model::FeatureModel;
use fmkit_service::api::{SampleResultBody, SliceResultBody};
use serde::de::DeserializeOwned;
use serde_json::Value;

fn decode<T: DeserializeOwned>(v: &Value) -> T {
    serde_json::from_value(v.clone()).expect("result matches its schema")
}

fn list(names: &[String]) -> String {
    if names.is_empty() {
        "-".into()
    } else {
        names.join(", ")
    }
}

fn table(rows: &[(String, String)]) -> String {
    let width = rows
        .iter()
        .map(|(k, _)| k.chars().count())
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let line = format!("{k:<width$}  {v}");
        writeln!(out, "{}", line.trim_end()).expect("string write");
    }
    out
}

pub fn analysis(v: &Value) -> String {
    let r: AnomalyReport = decode(v);
    table(&[
        ("void".into(), if r.is_void { "yes" } else { "no" }.into()),
        ("core".into(), list(&r.core)),
        ("dead".into(), list(&r.dead)),
        ("false-optional".into(), list(&r.false_optional)),
    ])
}

pub fn propagation(model: &FeatureModel, v: &Value) -> String {
    let r: PropagationResult = decode(v);
    let mut rows = Vec::new();
    for id in model.preorder() {
        let name = model.name(id).expect("live feature").to_string();
        let s = r.configuration.state(&name);
        let mut cell = match (s.selection, s.provenance) {
            (Selection::Undecided, _) => "undecided".to_string(),
            (sel, Provenance::Explicit) => format!("{} (explicit)", word(sel)),
            (sel, Provenance::Implied) => format!("{} (implied)", word(sel)),
        };
        if r.open.contains(&name) {
            cell.push_str(" open");
        }
        rows.push((name, cell));
    }
    let mut out = table(&rows);
    if r.valid {
        out.push_str("valid\n");
    } else {
        let conflict: Vec<String> = r.conflict.iter().map(ToString::to_string).collect();
        writeln!(out, "invalid: {}", list(&conflict)).expect("string write");
    }
    out
}

fn word(s: Selection) -> &'static str {
    match s {
        Selection::Selected => "selected",
        Selection::Deselected => "deselected",
        Selection::Undecided => "undecided",
    }
}

pub fn slice(v: &Value) -> String {
    let r: SliceResultBody = decode(v);
    let mut out = r.model.text;
    if !out.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("\nderived constraints:\n");
    if r.derived_constraints.is_empty() {
        out.push_str("    -\n");
    }
    for c in &r.derived_constraints {
        writeln!(out, "    {c}").expect("string write");
    }
    out
}

/// One row per feature, one column per configuration; `x` marks selection.
pub fn sample(model: &FeatureModel, v: &Value) -> String {
    let r: SampleResultBody = decode(v);
    let cols = r.configurations.len();
    let cell = cols.to_string().len().max(1);
    let mut rows = vec![(
        format!("t={} seed={}", r.t, r.seed),
        (1..=cols)
            .map(|i| format!("{i:>cell$}"))
            .collect::<Vec<_>>()
            .join(" "),
    )];
    for id in model.preorder() {
        let name = model.name(id).expect("live feature");
        let marks: Vec<String> = r
            .configurations
            .iter()
            .map(|c| {
                let m = if c.iter().any(|n| n == name) {
                    "x"
                } else {
                    "."
                };
                format!("{m:>cell$}")
            })
            .collect();
        rows.push((name.to_string(), marks.join(" ")));
    }
    table(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn analysis_is_aligned() {
        let v = json!({"void": false, "core": ["Car", "Engine"], "dead": [], "falseOptional": []});
        assert_eq!(
            analysis(&v),
            "void            no\ncore            Car, Engine\ndead            -\nfalse-optional  -\n"
        );
    }

    #[test]
    fn sample_marks_selected_features() {
        let mut m = FeatureModel::new("R");
        m.add_child(m.root(), "A");
        let v = json!({"t": 1, "seed": 0, "configurations": [["R", "A"], ["R"]]});
        assert_eq!(
            sample(&m, &v),
            "t=1 seed=0  1 2\nR           x x\nA           x .\n"
        );
    }
}
