//! Textual model formats: a UVL subset, FeatureIDE-style XML, and DIMACS export.

mod dimacs;
mod uvl;
mod xml;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use dimacs::{export_dimacs, parse_dimacs, DimacsError};
pub use uvl::{parse_uvl, serialize_uvl};
pub use xml::{parse_fide_xml, parse_fide_xml_diagnostics, serialize_fide_xml};

use crate::cnf::encode;

/// The running car example.
pub const CAR_MODEL_UVL: &str = "features
    Car
        mandatory
            Engine
                alternative
                    Gas
                    Electric
        optional
            Radio
constraints
    Radio => Electric
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Line and column are 1-based; 0 means "whole document".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub severity: Severity,
}

impl Diagnostic {
    pub fn error(line: usize, column: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            line,
            column,
            message: message.into(),
            severity: Severity::Error,
        }
    }

    pub fn warning(line: usize, column: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            line,
            column,
            message: message.into(),
            severity: Severity::Warning,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {sev}: {}", self.line, self.column, self.message)
    }
}

/// Contains at least one error-severity diagnostic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseError {
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseError {
    pub fn new(diagnostics: Vec<Diagnostic>) -> Self {
        debug_assert!(diagnostics.iter().any(Diagnostic::is_error));
        ParseError { diagnostics }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FormatKind {
    Uvl,
    FideXml,
    Dimacs,
    Svg,
}

impl FormatKind {
    pub fn is_parseable(self) -> bool {
        matches!(self, FormatKind::Uvl | FormatKind::FideXml)
    }
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormatKind::Uvl => "UVL",
            FormatKind::FideXml => "FIDE_XML",
            FormatKind::Dimacs => "DIMACS",
            FormatKind::Svg => "SVG",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error("{0}")]
    Parse(ParseError),
    #[error("unsupported direction {from} -> {to}")]
    Unsupported { from: FormatKind, to: FormatKind },
}

pub fn parse(text: &str, kind: FormatKind) -> Result<crate::model::FeatureModel, TransformError> {
    match kind {
        FormatKind::Uvl => parse_uvl(text).map_err(TransformError::Parse),
        FormatKind::FideXml => parse_fide_xml(text).map_err(TransformError::Parse),
        other => Err(TransformError::Unsupported {
            from: other,
            to: other,
        }),
    }
}

/// Parse-then-serialize. SVG rendering belongs to the viewer and is rejected here.
pub fn transform(text: &str, from: FormatKind, to: FormatKind) -> Result<String, TransformError> {
    if !from.is_parseable() || to == FormatKind::Svg {
        return Err(TransformError::Unsupported { from, to });
    }
    let model = parse(text, from)?;
    Ok(match to {
        FormatKind::Uvl => serialize_uvl(&model),
        FormatKind::FideXml => serialize_fide_xml(&model),
        FormatKind::Dimacs => export_dimacs(&encode(&model)),
        FormatKind::Svg => unreachable!("rejected above"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uvl_xml_uvl_is_stable() {
        let xml = transform(CAR_MODEL_UVL, FormatKind::Uvl, FormatKind::FideXml).unwrap();
        let back = transform(&xml, FormatKind::FideXml, FormatKind::Uvl).unwrap();
        assert_eq!(back, serialize_uvl(&parse_uvl(CAR_MODEL_UVL).unwrap()));
    }

    #[test]
    fn uvl_normalization_is_idempotent() {
        let once = transform(CAR_MODEL_UVL, FormatKind::Uvl, FormatKind::Uvl).unwrap();
        assert_eq!(
            transform(&once, FormatKind::Uvl, FormatKind::Uvl).unwrap(),
            once
        );
    }

    #[test]
    fn export_only_sources_rejected() {
        for from in [FormatKind::Dimacs, FormatKind::Svg] {
            assert!(matches!(
                transform("p cnf 1 0\n", from, FormatKind::Uvl),
                Err(TransformError::Unsupported { .. })
            ));
        }
        assert!(matches!(
            transform(CAR_MODEL_UVL, FormatKind::Uvl, FormatKind::Svg),
            Err(TransformError::Unsupported { .. })
        ));
    }

    #[test]
    fn parse_errors_propagate() {
        let err = transform(
            "features\n\tA\nconstraints\n\tB",
            FormatKind::Uvl,
            FormatKind::FideXml,
        )
        .unwrap_err();
        assert!(matches!(err, TransformError::Parse(p) if p.diagnostics[0].message.contains('B')));
    }

    #[test]
    fn format_kind_serde_names() {
        assert_eq!(
            serde_json::to_string(&FormatKind::FideXml).unwrap(),
            "\"FIDE_XML\""
        );
        assert_eq!(
            serde_json::from_str::<FormatKind>("\"DIMACS\"").unwrap(),
            FormatKind::Dimacs
        );
    }
}
