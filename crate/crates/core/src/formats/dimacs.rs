use std::fmt::Write as _;

use crate::cnf::CnfProblem;

/// Comment lines for every variable, then the header, then one clause per line.
pub fn export_dimacs(problem: &CnfProblem) -> String {
    let mut out = String::new();
    let mut aux = 0usize;
    for v in 1..=problem.variable_count() as i32 {
        match problem.name_of(v) {
            Some(name) => writeln!(out, "c {v} {name}").expect("string write"),
            None => {
                aux += 1;
                writeln!(out, "c {v} aux${aux}").expect("string write");
            }
        }
    }
    writeln!(
        out,
        "p cnf {} {}",
        problem.variable_count(),
        problem.clauses().len()
    )
    .expect("string write");
    for clause in problem.clauses() {
        for lit in clause {
            write!(out, "{lit} ").expect("string write");
        }
        out.push_str("0\n");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct DimacsError {
    pub line: usize,
    pub message: String,
}

/// Reads a clause set back. Returns (variable count, clauses, `c i name` comments).
pub fn parse_dimacs(text: &str) -> Result<(usize, Vec<Vec<i32>>, Vec<(i32, String)>), DimacsError> {
    let err = |line: usize, message: String| DimacsError { line, message };
    let mut header: Option<(usize, usize)> = None;
    let mut names = Vec::new();
    let mut clauses = Vec::new();
    let mut current = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('c') {
            let mut parts = rest.trim().splitn(2, ' ');
            if let (Some(v), Some(name)) = (parts.next(), parts.next()) {
                if let Ok(v) = v.parse::<i32>() {
                    names.push((v, name.to_string()));
                }
            }
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('p') {
            let fields: Vec<&str> = rest.split_whitespace().collect();
            match fields.as_slice() {
                ["cnf", v, c] => {
                    let v = v
                        .parse()
                        .map_err(|_| err(line, format!("bad variable count {v:?}")))?;
                    let c = c
                        .parse()
                        .map_err(|_| err(line, format!("bad clause count {c:?}")))?;
                    header = Some((v, c));
                }
                _ => return Err(err(line, "malformed header".into())),
            }
            continue;
        }
        let Some((vars, _)) = header else {
            return Err(err(line, "clause before header".into()));
        };
        for tok in trimmed.split_whitespace() {
            let lit: i32 = tok
                .parse()
                .map_err(|_| err(line, format!("bad literal {tok:?}")))?;
            if lit == 0 {
                clauses.push(std::mem::take(&mut current));
            } else if lit.unsigned_abs() as usize > vars {
                return Err(err(
                    line,
                    format!("literal {lit} exceeds variable count {vars}"),
                ));
            } else {
                current.push(lit);
            }
        }
    }
    let Some((vars, count)) = header else {
        return Err(err(0, "missing header".into()));
    };
    if !current.is_empty() {
        return Err(err(0, "unterminated clause".into()));
    }
    if clauses.len() != count {
        return Err(err(
            0,
            format!("header declares {count} clauses, found {}", clauses.len()),
        ));
    }
    Ok((vars, clauses, names))
}
