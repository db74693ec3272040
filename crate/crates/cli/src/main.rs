//! `fmkit`: command-line frontend to the feature-model toolkit.
//!
//! Exit codes: 0 success, 1 domain error (unreadable input, parse or
//! analysis refusal), 2 usage error.

mod render;

use std::fs;
use std::io::{self, Read, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fmkit_core::analysis::{Decision, Selection};
use fmkit_core::formats::FormatKind;
use fmkit_core::CancelToken;
use fmkit_service::api::{
    ApiError, ModelText, PropagateParams, SampleParams, SliceParams, TransformParams,
};
use fmkit_service::ops::{self, Task};
use fmkit_service::Config;
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "fmkit", version, about = "Feature-model toolkit")]
struct Cli {
    /// Aligned text instead of JSON.
    #[arg(long, global = true)]
    pretty: bool,
    /// Write the result to this file instead of standard output.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert between UVL, FeatureIDE XML and DIMACS.
    Convert {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum)]
        to: Format,
    },
    /// Report void, core, dead and false-optional features.
    Analyze {
        #[command(flatten)]
        input: Input,
    },
    /// Propagate selections and deselections.
    Propagate {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_name = "FEATURE")]
        select: Vec<String>,
        #[arg(long, value_name = "FEATURE")]
        deselect: Vec<String>,
    },
    /// Remove features while keeping the semantics of the rest.
    Slice {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_name = "FEATURE", required = true)]
        remove: Vec<String>,
    },
    /// Generate a t-wise covering sample.
    Sample {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=3))]
        t: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Count valid configurations (bounded by FMKIT_ENUM_BOUND).
    Count {
        #[command(flatten)]
        input: Input,
    },
    /// Run the HTTP service; settings come from FMKIT_* variables.
    Serve {
        #[arg(long, env = "FMKIT_BIND")]
        bind: Option<IpAddr>,
        #[arg(long, env = "FMKIT_PORT")]
        port: Option<u16>,
    },
}

#[derive(Args, Debug)]
struct Input {
    /// Model file; standard input when omitted or "-".
    file: Option<PathBuf>,
    /// Input format; inferred from the file extension, UVL otherwise.
    #[arg(long, value_enum)]
    from: Option<Format>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Uvl,
    Xml,
    Dimacs,
}

impl From<Format> for FormatKind {
    fn from(f: Format) -> Self {
        match f {
            Format::Uvl => FormatKind::Uvl,
            Format::Xml => FormatKind::FideXml,
            Format::Dimacs => FormatKind::Dimacs,
        }
    }
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        if e.body.diagnostics.is_empty() {
            Failure::Domain(e.body.message)
        } else {
            // The message already lists the diagnostics one per line.
            Failure::Domain(format!("cannot parse the model\n{}", e.body.message))
        }
    }
}

fn infer_format(path: Option<&Path>) -> Format {
    match path.and_then(Path::extension).and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("xml") => Format::Xml,
        Some(e) if e.eq_ignore_ascii_case("dimacs") || e.eq_ignore_ascii_case("cnf") => {
            Format::Dimacs
        }
        _ => Format::Uvl,
    }
}

impl Input {
    fn read(&self) -> Result<ModelText, Failure> {
        let path = self.file.as_deref().filter(|p| p.as_os_str() != "-");
        let format = self.from.unwrap_or_else(|| infer_format(path));
        if format == Format::Dimacs {
            return Err(Failure::Usage(
                "DIMACS is an output format; read models as uvl or xml".into(),
            ));
        }
        let text = match path {
            Some(p) => fs::read_to_string(p)
                .map_err(|e| Failure::Domain(format!("cannot read {}: {e}", p.display())))?,
            None => {
                let mut s = String::new();
                io::stdin()
                    .read_to_string(&mut s)
                    .map_err(|e| Failure::Domain(format!("cannot read standard input: {e}")))?;
                s
            }
        };
        Ok(ModelText {
            format: format.into(),
            text,
        })
    }
}

fn execute(task: Task, input: &Input) -> Result<(ModelText, Value), Failure> {
    let model = input.read()?;
    let bound = Config::from_env()
        .map_err(|e| Failure::Usage(e.to_string()))?
        .enum_bound;
    let value = ops::run(&task, &model, bound, &CancelToken::new())?;
    Ok((model, value))
}

fn json(v: &Value) -> String {
    let mut s = serde_json::to_string(v).expect("serializable");
    s.push('\n');
    s
}

fn run(cli: &Cli) -> Result<String, Failure> {
    let pretty = cli.pretty;
    Ok(match &cli.command {
        Command::Convert { input, to } => {
            let task = Task::Transform(TransformParams { to: (*to).into() });
            let (_, v) = execute(task, input)?;
            let mut text = v["text"]
                .as_str()
                .expect("transform result has text")
                .to_string();
            if !text.ends_with('\n') {
                text.push('\n');
            }
            text
        }
        Command::Analyze { input } => {
            let (_, v) = execute(Task::Analyze, input)?;
            if pretty {
                render::analysis(&v)
            } else {
                json(&v)
            }
        }
        Command::Propagate {
            input,
            select,
            deselect,
        } => {
            let decisions = select
                .iter()
                .map(|f| (f, Selection::Selected))
                .chain(deselect.iter().map(|f| (f, Selection::Deselected)))
                .map(|(f, selection)| Decision {
                    feature: f.clone(),
                    selection,
                })
                .collect();
            let (model, v) = execute(Task::Propagate(PropagateParams { decisions }), input)?;
            if pretty {
                render::propagation(&ops::parse_model(&model)?, &v)
            } else {
                json(&v)
            }
        }
        Command::Slice { input, remove } => {
            let (_, v) = execute(
                Task::Slice(SliceParams {
                    remove: remove.clone(),
                }),
                input,
            )?;
            if pretty {
                render::slice(&v)
            } else {
                json(&v)
            }
        }
        Command::Sample { input, t, seed } => {
            let params = SampleParams {
                t: usize::from(*t),
                seed: *seed,
            };
            let (model, v) = execute(Task::Sample(params), input)?;
            if pretty {
                render::sample(&ops::parse_model(&model)?, &v)
            } else {
                json(&v)
            }
        }
        Command::Count { input } => {
            let (_, v) = execute(Task::Count, input)?;
            if pretty {
                format!("{}\n", v["count"])
            } else {
                json(&v)
            }
        }
        Command::Serve { bind, port } => {
            let mut config = Config::from_env().map_err(|e| Failure::Usage(e.to_string()))?;
            config.bind = bind.unwrap_or(config.bind);
            config.port = port.unwrap_or(config.port);
            tracing_subscriber::fmt().with_writer(io::stderr).init();
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| Failure::Domain(format!("cannot start runtime: {e}")))?;
            runtime
                .block_on(fmkit_service::serve(config))
                .map_err(|e| Failure::Domain(format!("service stopped: {e}")))?;
            String::new()
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|text| {
        let written = match &cli.out {
            Some(path) => fs::write(path, &text),
            None => io::stdout().lock().write_all(text.as_bytes()),
        };
        written.map_err(|e| Failure::Domain(format!("cannot write output: {e}")))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn formats_follow_extensions() {
        assert_eq!(infer_format(Some(Path::new("m.XML"))), Format::Xml);
        assert_eq!(infer_format(Some(Path::new("m.uvl"))), Format::Uvl);
        assert_eq!(infer_format(Some(Path::new("m.cnf"))), Format::Dimacs);
        assert_eq!(infer_format(None), Format::Uvl);
    }

    #[test]
    fn strength_is_range_checked() {
        assert!(Cli::try_parse_from(["fmkit", "sample", "--t", "4"]).is_err());
        assert!(Cli::try_parse_from(["fmkit", "slice", "m.uvl"]).is_err());
        let cli =
            Cli::try_parse_from(["fmkit", "--pretty", "sample", "--t", "3", "m.uvl"]).unwrap();
        assert!(cli.pretty);
    }
}
