//! FeatureIDE-style XML: `featureModel` holding a `struct` tree of
//! `feature`/`and`/`or`/`alt` elements and a `constraints` list of `rule`s
//! over `imp`/`conj`/`disj`/`eq`/`not`/`var`.

use std::collections::HashSet;

use roxmltree::{Document, Node};

use super::{Diagnostic, ParseError};
use crate::formula::Formula;
use crate::model::{validate, FeatureId, FeatureModel, GroupKind};

/// FeatureIDE sections that carry no structure we model; skipped with a warning.
const IGNORED_TOP: &[&str] = &["properties", "calculations", "comments", "featureOrder"];
const IGNORED_IN_FEATURE: &[&str] = &["description", "graphics", "attribute"];
const FEATURE_ATTRS: &[&str] = &["name", "mandatory", "abstract", "hidden"];

struct Reader<'a, 'input> {
    doc: &'a Document<'input>,
    diags: Vec<Diagnostic>,
    names: HashSet<String>,
}

impl<'a, 'input> Reader<'a, 'input> {
    fn pos(&self, node: Node) -> (usize, usize) {
        let p = self.doc.text_pos_at(node.range().start);
        (p.row as usize, p.col as usize)
    }

    fn error(&mut self, node: Node, msg: impl Into<String>) {
        let (l, c) = self.pos(node);
        self.diags.push(Diagnostic::error(l, c, msg));
    }

    fn warn(&mut self, node: Node, msg: impl Into<String>) {
        let (l, c) = self.pos(node);
        self.diags.push(Diagnostic::warning(l, c, msg));
    }

    fn group_of(tag: &str) -> Option<GroupKind> {
        Some(match tag {
            "feature" | "and" => GroupKind::And,
            "or" => GroupKind::Or,
            "alt" => GroupKind::Alternative,
            _ => return None,
        })
    }

    fn flag(&mut self, node: Node, attr: &str) -> bool {
        match node.attribute(attr) {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => {
                self.warn(
                    node,
                    format!("attribute {attr}={other:?} is not a boolean; treated as false"),
                );
                false
            }
        }
    }

    /// Reads one feature element and its subtree; returns its name and flags.
    fn feature(&mut self, node: Node, model: &mut Option<FeatureModel>, parent: Option<FeatureId>) {
        let tag = node.tag_name().name();
        let Some(group) = Self::group_of(tag) else {
            self.error(node, format!("unknown element <{tag}> in feature tree"));
            return;
        };
        for a in node.attributes() {
            if !FEATURE_ATTRS.contains(&a.name()) {
                self.warn(node, format!("unknown attribute {:?} ignored", a.name()));
            }
        }
        let Some(name) = node.attribute("name") else {
            self.error(node, format!("<{tag}> without name attribute"));
            return;
        };
        if name.is_empty() || name.chars().any(char::is_control) {
            self.error(node, format!("invalid feature name {name:?}"));
            return;
        }
        if !self.names.insert(name.to_string()) {
            self.error(node, format!("duplicate feature name {name:?}"));
            return;
        }
        let mandatory = self.flag(node, "mandatory");
        let is_abstract = self.flag(node, "abstract");
        let id = match (model.as_mut(), parent) {
            (Some(m), Some(p)) => m.add_child(p, name),
            (None, None) => {
                *model = Some(FeatureModel::new(name));
                model.as_ref().expect("just set").root()
            }
            _ => unreachable!("root handled by caller"),
        };
        let m = model.as_mut().expect("set above");
        m.set_group(id, group).expect("live");
        m.set_mandatory(id, mandatory).expect("live");
        m.set_abstract(id, is_abstract).expect("live");

        let mut has_children = false;
        for child in node.children().filter(Node::is_element) {
            let ctag = child.tag_name().name();
            if IGNORED_IN_FEATURE.contains(&ctag) {
                self.warn(child, format!("<{ctag}> ignored"));
                continue;
            }
            if tag == "feature" {
                self.error(
                    child,
                    "<feature> cannot have child features; use <and>, <or> or <alt>",
                );
                continue;
            }
            has_children = true;
            self.feature(child, model, Some(id));
        }
        if !has_children && matches!(group, GroupKind::Or | GroupKind::Alternative) {
            self.error(
                node,
                format!("<{tag}> group {name:?} has no child features"),
            );
        }
    }

    fn formula(&mut self, node: Node) -> Option<Formula> {
        let tag = node.tag_name().name();
        let kids: Vec<Node> = node
            .children()
            .filter(|n| n.is_element() && n.tag_name().name() != "description")
            .collect();
        let sub = |this: &mut Self, expected: Option<usize>| -> Option<Vec<Formula>> {
            if let Some(n) = expected {
                if kids.len() != n {
                    this.error(
                        node,
                        format!("<{tag}> expects {n} operand(s), found {}", kids.len()),
                    );
                    return None;
                }
            } else if kids.is_empty() {
                this.error(node, format!("<{tag}> without operands"));
                return None;
            }
            let parts: Vec<Option<Formula>> = kids.iter().map(|&k| this.formula(k)).collect();
            parts.into_iter().collect()
        };
        match tag {
            "var" => {
                let name = node.text().unwrap_or("").trim();
                if !self.names.contains(name) {
                    self.error(node, format!("unknown feature {name:?} in constraint"));
                    return None;
                }
                Some(Formula::var(name))
            }
            "not" => sub(self, Some(1)).map(|mut v| Formula::not(v.remove(0))),
            "imp" => sub(self, Some(2)).map(|mut v| {
                let b = v.pop().expect("two");
                Formula::implies(v.pop().expect("two"), b)
            }),
            "eq" => sub(self, Some(2)).map(|mut v| {
                let b = v.pop().expect("two");
                Formula::iff(v.pop().expect("two"), b)
            }),
            "conj" => sub(self, None).map(Formula::and),
            "disj" => sub(self, None).map(Formula::or),
            other => {
                self.error(node, format!("unknown element <{other}> in constraint"));
                None
            }
        }
    }
}

/// Parses a document, returning the model (if no errors occurred) and all diagnostics.
pub fn parse_fide_xml_diagnostics(text: &str) -> (Option<FeatureModel>, Vec<Diagnostic>) {
    let doc = match Document::parse(text) {
        Ok(d) => d,
        Err(e) => {
            let p = e.pos();
            return (
                None,
                vec![Diagnostic::error(
                    p.row as usize,
                    p.col as usize,
                    format!("malformed XML: {e}"),
                )],
            );
        }
    };
    let mut r = Reader {
        doc: &doc,
        diags: Vec::new(),
        names: HashSet::new(),
    };
    let root = doc.root_element();
    if root.tag_name().name() != "featureModel" {
        r.error(
            root,
            format!(
                "expected <featureModel>, found <{}>",
                root.tag_name().name()
            ),
        );
        return (None, r.diags);
    }
    let mut model: Option<FeatureModel> = None;
    let mut rules: Vec<Node> = Vec::new();
    let mut seen_struct = false;
    for section in root.children().filter(Node::is_element) {
        match section.tag_name().name() {
            "struct" => {
                if seen_struct {
                    r.error(section, "more than one <struct>");
                    continue;
                }
                seen_struct = true;
                let tops: Vec<Node> = section.children().filter(Node::is_element).collect();
                if tops.len() != 1 {
                    r.error(
                        section,
                        format!(
                            "<struct> must hold exactly one root feature, found {}",
                            tops.len()
                        ),
                    );
                }
                if let Some(&top) = tops.first() {
                    r.feature(top, &mut model, None);
                }
            }
            "constraints" => {
                for rule in section.children().filter(Node::is_element) {
                    if rule.tag_name().name() == "rule" {
                        rules.push(rule);
                    } else {
                        r.error(
                            rule,
                            format!(
                                "unknown element <{}> in constraints",
                                rule.tag_name().name()
                            ),
                        );
                    }
                }
            }
            other if IGNORED_TOP.contains(&other) => r.warn(section, format!("<{other}> ignored")),
            other => r.error(section, format!("unknown element <{other}>")),
        }
    }
    if !seen_struct {
        r.error(root, "missing <struct>");
    }
    for rule in rules {
        let body: Vec<Node> = rule
            .children()
            .filter(|n| n.is_element() && n.tag_name().name() != "description")
            .collect();
        if body.len() != 1 {
            r.error(
                rule,
                format!("<rule> must hold exactly one formula, found {}", body.len()),
            );
            continue;
        }
        if let Some(f) = r.formula(body[0]) {
            if let Some(m) = model.as_mut() {
                m.add_constraint(f);
            }
        }
    }
    if r.diags.iter().any(Diagnostic::is_error) {
        return (None, r.diags);
    }
    let Some(model) = model else {
        r.error(root, "no root feature");
        return (None, r.diags);
    };
    let violations = validate(&model);
    if !violations.is_empty() {
        r.diags.extend(
            violations
                .into_iter()
                .map(|v| Diagnostic::error(0, 0, v.to_string())),
        );
        return (None, r.diags);
    }
    (Some(model), r.diags)
}

pub fn parse_fide_xml(text: &str) -> Result<FeatureModel, ParseError> {
    match parse_fide_xml_diagnostics(text) {
        (Some(m), _) => Ok(m),
        (None, diags) => Err(ParseError::new(diags)),
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    out.extend(std::iter::repeat_n('\t', depth));
}

fn write_feature(out: &mut String, model: &FeatureModel, id: FeatureId, depth: usize) {
    let f = model.feature(id).expect("live");
    let tag = match f.group {
        GroupKind::And if f.children.is_empty() => "feature",
        GroupKind::And => "and",
        GroupKind::Or => "or",
        GroupKind::Alternative => "alt",
    };
    indent(out, depth);
    out.push('<');
    out.push_str(tag);
    if f.is_abstract {
        out.push_str(" abstract=\"true\"");
    }
    if f.mandatory {
        out.push_str(" mandatory=\"true\"");
    }
    out.push_str(" name=\"");
    out.push_str(&escape(&f.name));
    out.push('"');
    if f.children.is_empty() {
        out.push_str("/>\n");
        return;
    }
    out.push_str(">\n");
    for &c in &f.children {
        write_feature(out, model, c, depth + 1);
    }
    indent(out, depth);
    out.push_str("</");
    out.push_str(tag);
    out.push_str(">\n");
}

fn write_formula(out: &mut String, f: &Formula, depth: usize) {
    indent(out, depth);
    let (tag, kids): (&str, Vec<&Formula>) = match f {
        Formula::Var(n) => {
            out.push_str("<var>");
            out.push_str(&escape(n));
            out.push_str("</var>\n");
            return;
        }
        Formula::Not(g) => ("not", vec![g]),
        Formula::And(gs) => ("conj", gs.iter().collect()),
        Formula::Or(gs) => ("disj", gs.iter().collect()),
        Formula::Implies(a, b) => ("imp", vec![a, b]),
        Formula::Iff(a, b) => ("eq", vec![a, b]),
    };
    out.push_str(&format!("<{tag}>\n"));
    for k in kids {
        write_formula(out, k, depth + 1);
    }
    indent(out, depth);
    out.push_str(&format!("</{tag}>\n"));
}

pub fn serialize_fide_xml(model: &FeatureModel) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n<featureModel>\n\t<struct>\n");
    write_feature(&mut out, model, model.root(), 2);
    out.push_str("\t</struct>\n");
    if model.constraints().is_empty() {
        out.push_str("\t<constraints/>\n");
    } else {
        out.push_str("\t<constraints>\n");
        for c in model.constraints() {
            out.push_str("\t\t<rule>\n");
            write_formula(&mut out, &c.formula, 3);
            out.push_str("\t\t</rule>\n");
        }
        out.push_str("\t</constraints>\n");
    }
    out.push_str("</featureModel>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let m =
            parse_fide_xml("<featureModel><struct><feature name=\"A\"/></struct></featureModel>")
                .unwrap();
        assert_eq!(m.feature_count(), 1);
        assert_eq!(m.root_feature().name, "A");
    }

    #[test]
    fn alt_group_with_rule() {
        let text = r#"<?xml version="1.0"?>
<featureModel>
  <struct>
    <alt abstract="true" name="R">
      <feature name="A"/>
      <feature name="B"/>
    </alt>
  </struct>
  <constraints>
    <rule><imp><var>A</var><var>B</var></imp></rule>
  </constraints>
</featureModel>"#;
        let m = parse_fide_xml(text).unwrap();
        assert_eq!(m.root_feature().group, GroupKind::Alternative);
        assert!(m.root_feature().is_abstract);
        assert_eq!(
            m.constraints()[0].formula,
            Formula::implies(Formula::var("A"), Formula::var("B"))
        );
        let again = parse_fide_xml(&serialize_fide_xml(&m)).unwrap();
        assert_eq!(serialize_fide_xml(&again), serialize_fide_xml(&m));
    }

    #[test]
    fn undeclared_var_diagnosed() {
        let text = "<featureModel><struct><feature name=\"A\"/></struct>\n<constraints><rule><var>Ghost</var></rule></constraints></featureModel>";
        let err = parse_fide_xml(text).unwrap_err();
        assert!(err.diagnostics[0].message.contains("Ghost"));
        assert_eq!(err.diagnostics[0].line, 2);
    }

    #[test]
    fn malformed_and_unknown_elements() {
        assert!(parse_fide_xml("<featureModel><struct>").is_err());
        let err = parse_fide_xml(
            "<featureModel><struct><feature name=\"A\"/></struct><wat/></featureModel>",
        )
        .unwrap_err();
        assert!(err.diagnostics[0].message.contains("wat"));
        let err = parse_fide_xml("<featureModel><struct><and name=\"A\"><group name=\"B\"/></and></struct></featureModel>").unwrap_err();
        assert!(err.diagnostics[0].message.contains("group"));
    }

    #[test]
    fn unknown_attribute_is_a_warning() {
        let (m, diags) = parse_fide_xml_diagnostics(
            "<featureModel><struct><feature color=\"red\" name=\"A\"/></struct><properties/></featureModel>",
        );
        assert!(m.is_some());
        assert_eq!(diags.len(), 2);
        assert!(diags.iter().all(|d| !d.is_error()));
    }

    #[test]
    fn names_are_escaped() {
        let mut m = FeatureModel::new("R&D <x>");
        m.add_child(m.root(), "\"quoted\"");
        let text = serialize_fide_xml(&m);
        assert!(text.contains("R&amp;D &lt;x&gt;"));
        assert!(parse_fide_xml(&text).unwrap().find("\"quoted\"").is_some());
    }
}
