//! Indentation-structured UVL subset: a `features` tree with
//! `mandatory`/`optional`/`or`/`alternative` group lines, an optional
//! `{abstract}` marker per feature, and a `constraints` section with one
//! expression per line.

use std::collections::HashMap;

use super::{Diagnostic, ParseError};
use crate::formula::{is_ident_char, parse_formula, quote_name, Formula};
use crate::model::{validate, FeatureId, FeatureModel, GroupKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Indent {
    Tabs,
    Spaces(usize),
}

struct Line<'a> {
    number: usize,
    level: usize,
    /// 1-based char column of `content`.
    column: usize,
    content: &'a str,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Section {
    Mandatory,
    Optional,
    Or,
    Alternative,
}

impl Section {
    fn parse(word: &str) -> Option<Section> {
        Some(match word {
            "mandatory" => Section::Mandatory,
            "optional" => Section::Optional,
            "or" => Section::Or,
            "alternative" => Section::Alternative,
            _ => return None,
        })
    }

    fn group(self) -> GroupKind {
        match self {
            Section::Mandatory | Section::Optional => GroupKind::And,
            Section::Or => GroupKind::Or,
            Section::Alternative => GroupKind::Alternative,
        }
    }
}

enum Frame {
    Feature(FeatureId),
    Group(FeatureId, Section),
}

fn split_lines<'a>(text: &'a str, diags: &mut Vec<Diagnostic>) -> Vec<Line<'a>> {
    let mut unit: Option<Indent> = None;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let number = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = raw.trim_start_matches([' ', '\t']);
        let content = trimmed.trim_end();
        if content.is_empty() {
            continue;
        }
        let ws = &raw[..raw.len() - trimmed.len()];
        let column = ws.chars().count() + 1;
        let level = if ws.is_empty() {
            0
        } else if ws.contains(' ') && ws.contains('\t') {
            diags.push(Diagnostic::error(
                number,
                1,
                "mixed tabs and spaces in indentation",
            ));
            continue;
        } else {
            let this = if ws.starts_with('\t') {
                Indent::Tabs
            } else {
                Indent::Spaces(ws.len())
            };
            let unit = *unit.get_or_insert(this);
            match (unit, this) {
                (Indent::Tabs, Indent::Tabs) => ws.len(),
                (Indent::Spaces(u), Indent::Spaces(n)) if n % u == 0 => n / u,
                (Indent::Spaces(u), Indent::Spaces(n)) => {
                    diags.push(Diagnostic::error(
                        number,
                        1,
                        format!("indentation of {n} spaces is not a multiple of {u}"),
                    ));
                    continue;
                }
                _ => {
                    diags.push(Diagnostic::error(
                        number,
                        1,
                        "indentation mixes tabs and spaces across lines",
                    ));
                    continue;
                }
            }
        };
        out.push(Line {
            number,
            level,
            column,
            content,
        });
    }
    out
}

/// Reads a feature line: a name followed by an optional `{abstract}`.
fn feature_line(line: &Line<'_>) -> Result<(String, bool), Diagnostic> {
    let chars: Vec<char> = line.content.chars().collect();
    let err = |offset: usize, msg: &str| Diagnostic::error(line.number, line.column + offset, msg);
    let (name, mut i) = if chars[0] == '"' {
        let mut name = String::new();
        let mut i = 1;
        loop {
            match chars.get(i) {
                None => return Err(err(0, "unterminated quoted name")),
                Some('"') => break,
                Some('\\') => {
                    match chars.get(i + 1) {
                        Some(&e @ ('"' | '\\')) => name.push(e),
                        _ => return Err(err(i, "invalid escape in quoted name")),
                    }
                    i += 2;
                }
                Some(&c) => {
                    name.push(c);
                    i += 1;
                }
            }
        }
        (name, i + 1)
    } else {
        let end = chars
            .iter()
            .position(|&c| !is_ident_char(c))
            .unwrap_or(chars.len());
        if end == 0 {
            return Err(err(0, "expected a feature name"));
        }
        (chars[..end].iter().collect::<String>(), end)
    };
    if name.is_empty() {
        return Err(err(0, "empty feature name"));
    }
    if name.chars().any(char::is_control) {
        return Err(err(0, "feature name contains control characters"));
    }
    while chars.get(i).is_some_and(|c| c.is_whitespace()) {
        i += 1;
    }
    let rest: String = chars[i..].iter().collect();
    let is_abstract = match rest.as_str() {
        "" => false,
        "{abstract}" | "{abstract true}" => true,
        "{abstract false}" => false,
        other if other.starts_with('{') => {
            return Err(err(i, &format!("unsupported attribute block {other}")))
        }
        _ => return Err(err(i, "unexpected text after feature name")),
    };
    Ok((name, is_abstract))
}

/// Parses a UVL document.
pub fn parse_uvl(text: &str) -> Result<FeatureModel, ParseError> {
    let mut diags = Vec::new();
    let lines = split_lines(text, &mut diags);
    let mut iter = lines.iter().peekable();

    match iter.next() {
        Some(l) if l.level == 0 && l.content == "features" => {}
        Some(l) => {
            diags.push(Diagnostic::error(l.number, l.column, "expected 'features'"));
            return Err(ParseError::new(diags));
        }
        None => {
            diags.push(Diagnostic::error(1, 1, "empty document"));
            return Err(ParseError::new(diags));
        }
    }

    let mut model: Option<FeatureModel> = None;
    let mut positions: HashMap<String, (usize, usize)> = HashMap::new();
    let mut declared: HashMap<FeatureId, (Section, usize)> = HashMap::new();
    let mut stack: Vec<(usize, Frame)> = Vec::new();

    while let Some(line) = iter.peek() {
        if line.level == 0 {
            break;
        }
        let line = iter.next().expect("peeked");
        while stack.last().is_some_and(|(lvl, _)| *lvl >= line.level) {
            stack.pop();
        }
        let expected = stack.last().map_or(1, |(lvl, _)| lvl + 1);
        if line.level != expected {
            diags.push(Diagnostic::error(
                line.number,
                line.column,
                "unexpected indentation",
            ));
            continue;
        }
        match stack.last() {
            Some(&(_, Frame::Feature(parent))) => {
                let Some(section) = Section::parse(line.content) else {
                    diags.push(Diagnostic::error(
                        line.number,
                        line.column,
                        "expected 'mandatory', 'optional', 'or' or 'alternative'",
                    ));
                    // swallow the subtree so its children do not cascade
                    stack.push((line.level, Frame::Group(parent, Section::Optional)));
                    continue;
                };
                let m = model.as_mut().expect("root exists below features");
                match declared.get(&parent) {
                    Some(&(prev, _)) if prev.group() != section.group() => {
                        diags.push(Diagnostic::error(
                            line.number,
                            line.column,
                            format!(
                                "'{}' cannot be combined with an earlier group of another kind",
                                line.content
                            ),
                        ));
                    }
                    _ => {
                        declared.entry(parent).or_insert((section, line.number));
                        m.set_group(parent, section.group()).expect("live");
                    }
                }
                stack.push((line.level, Frame::Group(parent, section)));
            }
            Some(&(_, Frame::Group(parent, section))) => {
                let (name, is_abstract) = match feature_line(line) {
                    Ok(x) => x,
                    Err(d) => {
                        diags.push(d);
                        continue;
                    }
                };
                if let Some(&(l, c)) = positions.get(&name) {
                    diags.push(Diagnostic::error(
                        line.number,
                        line.column,
                        format!("duplicate feature name {name:?} (first declared at {l}:{c})"),
                    ));
                    continue;
                }
                positions.insert(name.clone(), (line.number, line.column));
                let m = model.as_mut().expect("root exists below features");
                let id = m.add_child(parent, name);
                m.set_abstract(id, is_abstract).expect("live");
                m.set_mandatory(id, section == Section::Mandatory)
                    .expect("live");
                stack.push((line.level, Frame::Feature(id)));
            }
            None => {
                if model.is_some() {
                    diags.push(Diagnostic::error(
                        line.number,
                        line.column,
                        "only one root feature is allowed",
                    ));
                    continue;
                }
                let (name, is_abstract) = match feature_line(line) {
                    Ok(x) => x,
                    Err(d) => {
                        diags.push(d);
                        continue;
                    }
                };
                positions.insert(name.clone(), (line.number, line.column));
                let mut m = FeatureModel::new(name);
                let root = m.root();
                m.set_abstract(root, is_abstract).expect("live");
                model = Some(m);
                stack.push((line.level, Frame::Feature(root)));
            }
        }
    }

    let Some(mut model) = model else {
        let (l, c) = lines.first().map_or((1, 1), |l| (l.number, l.column));
        diags.push(Diagnostic::error(l, c, "missing root feature"));
        return Err(ParseError::new(diags));
    };

    for f in model.features() {
        if f.group != GroupKind::And && f.children.is_empty() {
            let (l, _) = declared.get(&f.id).map_or((0, 0), |&(_, l)| (l, 0));
            let (_, c) = positions.get(&f.name).copied().unwrap_or((0, 1));
            diags.push(Diagnostic::error(
                l.max(1),
                c,
                format!("group of {:?} has no children", f.name),
            ));
        }
    }

    if let Some(line) = iter.next() {
        if line.content != "constraints" {
            diags.push(Diagnostic::error(
                line.number,
                line.column,
                "expected 'constraints'",
            ));
        }
        for line in iter {
            if line.level == 0 {
                diags.push(Diagnostic::error(
                    line.number,
                    line.column,
                    "unexpected text after constraints section",
                ));
                continue;
            }
            if line.level != 1 {
                diags.push(Diagnostic::error(
                    line.number,
                    line.column,
                    "constraints must be indented one level",
                ));
                continue;
            }
            match parse_formula(line.content) {
                Ok(f) => {
                    let mut unknown: Vec<&str> = f
                        .vars()
                        .into_iter()
                        .filter(|v| !positions.contains_key(*v))
                        .collect();
                    unknown.dedup();
                    if unknown.is_empty() {
                        model.add_constraint(f);
                    } else {
                        for u in unknown {
                            let offset = line
                                .content
                                .find(u)
                                .map_or(0, |b| line.content[..b].chars().count());
                            diags.push(Diagnostic::error(
                                line.number,
                                line.column + offset,
                                format!("unknown feature {u:?} in constraint"),
                            ));
                        }
                    }
                }
                Err(e) => diags.push(Diagnostic::error(
                    line.number,
                    line.column + e.offset,
                    e.message,
                )),
            }
        }
    }

    if !diags.is_empty() {
        return Err(ParseError::new(diags));
    }
    let violations = validate(&model);
    if !violations.is_empty() {
        return Err(ParseError::new(
            violations
                .into_iter()
                .map(|v| Diagnostic::error(0, 0, v.to_string()))
                .collect(),
        ));
    }
    Ok(model)
}

fn push_feature_line(out: &mut String, depth: usize, model: &FeatureModel, id: FeatureId) {
    let f = model.feature(id).expect("live");
    push_indent(out, depth);
    out.push_str(&quote_name(&f.name));
    if f.is_abstract {
        out.push_str(" {abstract}");
    }
    out.push('\n');
    // consecutive runs of children with the same section keyword
    let mut runs: Vec<(&str, Vec<FeatureId>)> = Vec::new();
    for &c in &f.children {
        let kw = match f.group {
            GroupKind::Or => "or",
            GroupKind::Alternative => "alternative",
            GroupKind::And if model.feature(c).expect("live").mandatory => "mandatory",
            GroupKind::And => "optional",
        };
        match runs.last_mut() {
            Some((k, ids)) if *k == kw => ids.push(c),
            _ => runs.push((kw, vec![c])),
        }
    }
    for (kw, ids) in runs {
        push_indent(out, depth + 1);
        out.push_str(kw);
        out.push('\n');
        for c in ids {
            push_feature_line(out, depth + 2, model, c);
        }
    }
}

fn push_indent(out: &mut String, depth: usize) {
    out.extend(std::iter::repeat_n('\t', depth));
}

/// Renders a model as tab-indented UVL. Constraint order is preserved.
pub fn serialize_uvl(model: &FeatureModel) -> String {
    let mut out = String::from("features\n");
    push_feature_line(&mut out, 1, model, model.root());
    if !model.constraints().is_empty() {
        out.push_str("constraints\n");
        for c in model.constraints() {
            out.push('\t');
            out.push_str(&render_constraint(&c.formula));
            out.push('\n');
        }
    }
    out
}

fn render_constraint(f: &Formula) -> String {
    f.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::CAR_MODEL_UVL;

    #[test]
    fn minimal_document() {
        let m = parse_uvl("features\n\tA").unwrap();
        assert_eq!(m.feature_count(), 1);
        assert_eq!(m.root_feature().name, "A");
        assert_eq!(serialize_uvl(&m), "features\n\tA\n");
    }

    #[test]
    fn car_model_structure() {
        let m = parse_uvl(CAR_MODEL_UVL).unwrap();
        assert_eq!(m.feature_count(), 5);
        assert_eq!(m.constraints().len(), 1);
        let engine = m.find("Engine").unwrap();
        assert_eq!(m.feature(engine).unwrap().group, GroupKind::Alternative);
        assert!(m.is_mandatory(engine));
        assert!(m.is_optional(m.find("Radio").unwrap()));
        assert_eq!(
            m.constraints()[0].formula,
            Formula::implies(Formula::var("Radio"), Formula::var("Electric"))
        );
    }

    #[test]
    fn car_model_serializes_to_listing() {
        let m = parse_uvl(CAR_MODEL_UVL).unwrap();
        let text = serialize_uvl(&m);
        let normalize = |s: &str| {
            s.lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect::<Vec<String>>()
        };
        assert_eq!(normalize(&text), normalize(CAR_MODEL_UVL));
        assert_eq!(serialize_uvl(&parse_uvl(&text).unwrap()), text);
    }

    #[test]
    fn unknown_constraint_identifier() {
        let err = parse_uvl("features\n\tA\nconstraints\n\tB").unwrap_err();
        assert_eq!(err.diagnostics.len(), 1);
        assert!(err.diagnostics[0].message.contains("\"B\""));
        assert_eq!((err.diagnostics[0].line, err.diagnostics[0].column), (4, 2));
    }

    #[test]
    fn iff_rendered_with_double_arrow() {
        let mut m = FeatureModel::new("R");
        m.add_child(m.root(), "A");
        m.add_child(m.root(), "B");
        m.add_constraint(Formula::iff(Formula::var("A"), Formula::var("B")));
        assert!(serialize_uvl(&m).contains("\tA <=> B\n"));
    }

    #[test]
    fn mixed_indentation_rejected() {
        let err = parse_uvl("features\n\tA\n\t\toptional\n    \t\tB").unwrap_err();
        assert!(err.diagnostics[0].message.contains("mixed"));
        let err = parse_uvl("features\n  A\n\t\toptional").unwrap_err();
        assert_eq!(err.diagnostics[0].line, 3);
    }

    #[test]
    fn duplicate_names_and_syntax_errors_located() {
        let err = parse_uvl("features\n\tA\n\t\toptional\n\t\t\tA").unwrap_err();
        assert_eq!(err.diagnostics[0].line, 4);
        let err = parse_uvl("features\n\tA\nconstraints\n\tA &").unwrap_err();
        assert_eq!((err.diagnostics[0].line, err.diagnostics[0].column), (4, 5));
        assert!(parse_uvl("").is_err());
        assert!(parse_uvl("features\n\tA\n\tB").is_err());
        assert!(parse_uvl("features\n\tA\n\t\tor").is_err());
    }

    #[test]
    fn quoted_names_and_abstract() {
        let text = "features\n\t\"My Root\" {abstract}\n\t\toptional\n\t\t\t\"or\"\n";
        let m = parse_uvl(text).unwrap();
        assert!(m.root_feature().is_abstract);
        assert!(m.find("or").is_some());
        assert_eq!(serialize_uvl(&m), text);
    }

    #[test]
    fn interleaved_mandatory_and_optional_runs_keep_order() {
        let text = "features\n\tR\n\t\tmandatory\n\t\t\tA\n\t\toptional\n\t\t\tB\n\t\tmandatory\n\t\t\tC\n";
        let m = parse_uvl(text).unwrap();
        let names: Vec<_> = m
            .root_feature()
            .children
            .iter()
            .map(|&c| m.name(c).unwrap())
            .collect();
        assert_eq!(names, ["A", "B", "C"]);
        assert_eq!(serialize_uvl(&m), text);
    }

    #[test]
    fn or_with_mandatory_section_rejected() {
        let err = parse_uvl("features\n\tR\n\t\tor\n\t\t\tA\n\t\tmandatory\n\t\t\tB").unwrap_err();
        assert_eq!(err.diagnostics[0].line, 5);
    }
}
