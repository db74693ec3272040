//! Synchronous execution of the six operations, shared by the job runner
//! and the direct propagation endpoint.

use fmkit_core::analysis::{
    analyze, count_solutions_bounded, propagate, AnalysisError, Configuration,
};
use fmkit_core::formats::{self, FormatKind, TransformError};
use fmkit_core::model::FeatureModel;
use fmkit_core::sampling::{sample_twise_cancelable, SampleError};
use fmkit_core::slicing::slice;
use fmkit_core::CancelToken;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::api::{
    ApiError, CountResult, ModelText, NoParams, Operation, PropagateParams, SampleParams,
    SampleResultBody, SliceParams, SliceResultBody, TransformParams, TransformResult,
};

/// An operation with validated parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Task {
    Transform(TransformParams),
    Analyze,
    Propagate(PropagateParams),
    Slice(SliceParams),
    Sample(SampleParams),
    Count,
}

fn params<T: DeserializeOwned + Default>(value: Value) -> Result<T, ApiError> {
    if value.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(value)
        .map_err(|e| ApiError::bad_request("invalid-params", e.to_string()))
}

fn required<T: DeserializeOwned>(value: Value) -> Result<T, ApiError> {
    serde_json::from_value(value)
        .map_err(|e| ApiError::bad_request("invalid-params", e.to_string()))
}

impl Task {
    pub fn new(operation: Operation, value: Value) -> Result<Task, ApiError> {
        Ok(match operation {
            Operation::Transform => {
                let p: TransformParams = required(value)?;
                if p.to == FormatKind::Svg {
                    return Err(ApiError::bad_request(
                        "unsupported-format",
                        "SVG is rendered by the viewer, not the service",
                    ));
                }
                Task::Transform(p)
            }
            Operation::Analyze => {
                params::<NoParams>(value)?;
                Task::Analyze
            }
            Operation::Propagate => Task::Propagate(params(value)?),
            Operation::Slice => Task::Slice(required(value)?),
            Operation::Sample => {
                let p: SampleParams = params(value)?;
                if !(1..=3).contains(&p.t) {
                    return Err(ApiError::bad_request(
                        "invalid-params",
                        SampleError::InvalidStrength(p.t).to_string(),
                    ));
                }
                Task::Sample(p)
            }
            Operation::Count => {
                params::<NoParams>(value)?;
                Task::Count
            }
        })
    }

    pub fn operation(&self) -> Operation {
        match self {
            Task::Transform(_) => Operation::Transform,
            Task::Analyze => Operation::Analyze,
            Task::Propagate(_) => Operation::Propagate,
            Task::Slice(_) => Operation::Slice,
            Task::Sample(_) => Operation::Sample,
            Task::Count => Operation::Count,
        }
    }
}

pub fn parse_operation(name: &str) -> Result<Operation, ApiError> {
    Operation::from_name(name).ok_or_else(|| {
        ApiError::bad_request("unknown-operation", format!("unknown operation {name:?}"))
    })
}

/// Checks that don't need parsing: size and whether the format is an input format.
pub fn check_model(model: &ModelText, limit: usize) -> Result<(), ApiError> {
    if model.text.len() > limit {
        return Err(ApiError::too_large(limit));
    }
    if !model.format.is_parseable() {
        return Err(ApiError::bad_request(
            "unsupported-format",
            format!("{:?} cannot be parsed as a feature model", model.format),
        ));
    }
    Ok(())
}

pub fn parse_model(model: &ModelText) -> Result<FeatureModel, ApiError> {
    formats::parse(&model.text, model.format).map_err(|e| match e {
        TransformError::Parse(p) => ApiError::parse(p),
        TransformError::Unsupported { .. } => {
            ApiError::bad_request("unsupported-format", e.to_string())
        }
    })
}

fn json<T: Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("result types serialize")
}

fn analysis_error(e: AnalysisError) -> ApiError {
    match e {
        AnalysisError::UnknownFeature(_) => {
            ApiError::unprocessable("unknown-feature", e.to_string())
        }
        AnalysisError::BoundExceeded { .. } => {
            ApiError::unprocessable("bound-exceeded", e.to_string())
        }
        AnalysisError::Canceled => ApiError::canceled(),
    }
}

/// Runs `task` to completion or to the first cancellation checkpoint.
pub fn run(
    task: &Task,
    model: &ModelText,
    enum_bound: usize,
    cancel: &CancelToken,
) -> Result<Value, ApiError> {
    let fm = parse_model(model)?;
    match task {
        Task::Transform(p) => {
            let text = match p.to {
                FormatKind::Uvl => formats::serialize_uvl(&fm),
                FormatKind::FideXml => formats::serialize_fide_xml(&fm),
                FormatKind::Dimacs => formats::export_dimacs(&fmkit_core::cnf::encode(&fm)),
                FormatKind::Svg => unreachable!("rejected by Task::new"),
            };
            Ok(json(TransformResult { format: p.to, text }))
        }
        Task::Analyze => Ok(json(analyze(&fm))),
        Task::Propagate(p) => {
            let mut config = Configuration::new();
            for d in &p.decisions {
                config.decide(d.feature.clone(), d.selection);
            }
            propagate(&fm, &config).map(json).map_err(analysis_error)
        }
        Task::Slice(p) => {
            let r = slice(&fm, &p.remove)
                .map_err(|e| ApiError::unprocessable("slice-error", e.to_string()))?;
            Ok(json(SliceResultBody {
                model: ModelText {
                    format: FormatKind::Uvl,
                    text: formats::serialize_uvl(&r.model),
                },
                derived_constraints: r
                    .derived_constraints
                    .iter()
                    .map(|f| f.to_string())
                    .collect(),
            }))
        }
        Task::Sample(p) => {
            let s = sample_twise_cancelable(&fm, p.t, p.seed, cancel).map_err(|e| match e {
                SampleError::Canceled => ApiError::canceled(),
                SampleError::VoidModel => ApiError::unprocessable("void-model", e.to_string()),
                SampleError::InvalidStrength(_) => {
                    ApiError::bad_request("invalid-params", e.to_string())
                }
            })?;
            let order: Vec<&str> = fm
                .preorder()
                .into_iter()
                .filter_map(|id| fm.name(id))
                .collect();
            let configurations = s
                .configurations
                .iter()
                .map(|a| {
                    order
                        .iter()
                        .filter(|n| a.get(**n).copied().unwrap_or(false))
                        .map(|n| n.to_string())
                        .collect()
                })
                .collect();
            Ok(json(SampleResultBody {
                t: s.t,
                seed: p.seed,
                configurations,
            }))
        }
        Task::Count => count_solutions_bounded(&fm, enum_bound, cancel)
            .map(|count| json(CountResult { count }))
            .map_err(analysis_error),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fmkit_core::analysis::AnomalyReport;
    use fmkit_core::formats::CAR_MODEL_UVL;
    use serde_json::json;

    fn car() -> ModelText {
        ModelText {
            format: FormatKind::Uvl,
            text: CAR_MODEL_UVL.into(),
        }
    }

    fn exec(op: Operation, params: Value) -> Result<Value, ApiError> {
        run(&Task::new(op, params)?, &car(), 24, &CancelToken::new())
    }

    #[test]
    fn analyze_car() {
        let r: AnomalyReport =
            serde_json::from_value(exec(Operation::Analyze, Value::Null).unwrap()).unwrap();
        assert_eq!(r.core, ["Car", "Engine"]);
    }

    #[test]
    fn params_are_strict() {
        assert_eq!(
            Task::new(Operation::Analyze, json!({"x": 1}))
                .unwrap_err()
                .body
                .code,
            "invalid-params"
        );
        assert!(Task::new(Operation::Transform, Value::Null).is_err());
        assert!(Task::new(Operation::Transform, json!({"to": "SVG"})).is_err());
        assert!(Task::new(Operation::Sample, json!({"t": 4})).is_err());
        assert_eq!(
            Task::new(Operation::Sample, Value::Null).unwrap(),
            Task::Sample(SampleParams { t: 2, seed: 0 })
        );
    }

    #[test]
    fn sample_lists_selected_features_in_order() {
        let v = exec(Operation::Sample, json!({"t": 1, "seed": 3})).unwrap();
        let s: SampleResultBody = serde_json::from_value(v).unwrap();
        assert!(s.configurations.iter().all(|c| c[..2] == ["Car", "Engine"]));
    }

    #[test]
    fn count_respects_bound() {
        let e = run(&Task::Count, &car(), 2, &CancelToken::new()).unwrap_err();
        assert_eq!(e.body.code, "bound-exceeded");
        assert_eq!(
            exec(Operation::Count, Value::Null).unwrap(),
            json!({"count": 3})
        );
    }

    #[test]
    fn parse_errors_carry_positions() {
        let bad = ModelText {
            format: FormatKind::Uvl,
            text: "features\n    Car\n        bogus\n".into(),
        };
        let e = run(&Task::Analyze, &bad, 24, &CancelToken::new()).unwrap_err();
        assert_eq!(e.body.code, "parse-error");
        assert!(e.body.diagnostics.iter().any(|d| d.line > 0));
    }

    #[test]
    fn dimacs_is_not_an_input() {
        let m = ModelText {
            format: FormatKind::Dimacs,
            text: "p cnf 1 0\n".into(),
        };
        assert_eq!(
            check_model(&m, 100).unwrap_err().body.code,
            "unsupported-format"
        );
        assert_eq!(check_model(&car(), 10).unwrap_err().status, 413);
    }
}
