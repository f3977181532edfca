//! Text format for small known models.
//!
//! ```text
//! peakq-model 1
//! states 2
//! actions 2
//! horizon 2
//! constraints 1
//! transitions stationary        # or per-step
//! initial 1 0
//! reward 0 1 0.4                # s a value
//! constraint 0 1 1 -0.8         # i s a value
//! transition 0 1 0 1            # s a p_0 .. p_{S-1}; per-step models put h first
//! infeasible 1 0                # s a
//! end
//! ```
//!
//! Rewards and constraint values default to 0. Every transition row must be
//! given exactly once. `#` starts a comment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use peakq_core::cmdp::{CmdpDims, KnownCmdp, Transitions};
use thiserror::Error;

const MAGIC: &str = "peakq-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("model line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("model is inconsistent: {0}")]
    Model(#[from] peakq_core::Error),
}

fn err(line: usize, message: impl Into<String>) -> ModelFileError {
    ModelFileError::Parse {
        line,
        message: message.into(),
    }
}

fn num<T: FromStr>(line: usize, field: &str) -> Result<T, ModelFileError> {
    field
        .parse()
        .map_err(|_| err(line, format!("bad number `{field}`")))
}

pub fn load_model(path: &Path) -> Result<KnownCmdp, ModelFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<KnownCmdp, ModelFileError> {
    let mut rows = text.lines().enumerate().filter_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then(|| (i + 1, body.split_whitespace().collect::<Vec<_>>()))
    });
    let mut last_line = 0;
    let mut header = |key: &str| -> Result<(usize, String), ModelFileError> {
        let (line, f) = rows_next(&mut rows, &mut last_line)?;
        if f.len() != 2 || f[0] != key {
            return Err(err(line, format!("expected `{key} <value>`")));
        }
        Ok((line, f[1].to_string()))
    };
    let (line, version) = header(MAGIC)?;
    if num::<u32>(line, &version)? != FORMAT_VERSION {
        return Err(err(line, format!("unsupported format version {version}")));
    }
    let mut dim = |key: &str| -> Result<usize, ModelFileError> {
        let (line, v) = header(key)?;
        num(line, &v)
    };
    let (s_count, a_count, horizon, i_count) =
        (dim("states")?, dim("actions")?, dim("horizon")?, dim("constraints")?);
    let dims = CmdpDims::new(s_count, a_count, horizon, i_count)?;
    let (line, kind) = header("transitions")?;
    let stationary = match kind.as_str() {
        "stationary" => true,
        "per-step" => false,
        _ => return Err(err(line, "transitions must be `stationary` or `per-step`")),
    };
    let steps = if stationary { 1 } else { horizon };

    let mut initial: Option<Vec<f64>> = None;
    let mut reward = vec![0.0; s_count * a_count];
    let mut constraints = vec![0.0; i_count * s_count * a_count];
    let mut probs = vec![0.0; steps * s_count * a_count * s_count];
    let mut seen = vec![false; steps * s_count * a_count];
    let mut feasible = vec![true; s_count * a_count];
    let check = |line: usize, v: usize, bound: usize, what: &str| {
        if v < bound {
            Ok(v)
        } else {
            Err(err(line, format!("{what} {v} out of range (< {bound})")))
        }
    };
    loop {
        let (line, f) = rows_next(&mut rows, &mut last_line)?;
        match f[0] {
            "end" => break,
            "initial" => {
                if f.len() != 1 + s_count {
                    return Err(err(line, format!("initial needs {s_count} probabilities")));
                }
                initial = Some(f[1..].iter().map(|v| num(line, v)).collect::<Result<_, _>>()?);
            }
            "reward" => {
                if f.len() != 4 {
                    return Err(err(line, "expected `reward s a value`"));
                }
                let s = check(line, num(line, f[1])?, s_count, "state")?;
                let a = check(line, num(line, f[2])?, a_count, "action")?;
                reward[s * a_count + a] = num(line, f[3])?;
            }
            "constraint" => {
                if f.len() != 5 {
                    return Err(err(line, "expected `constraint i s a value`"));
                }
                let i = check(line, num(line, f[1])?, i_count, "constraint")?;
                let s = check(line, num(line, f[2])?, s_count, "state")?;
                let a = check(line, num(line, f[3])?, a_count, "action")?;
                constraints[(i * s_count + s) * a_count + a] = num(line, f[4])?;
            }
            "transition" => {
                let lead = if stationary { 2 } else { 3 };
                if f.len() != 1 + lead + s_count {
                    return Err(err(line, format!("transition needs {lead} indices and {s_count} probabilities")));
                }
                let h = if stationary {
                    0
                } else {
                    check(line, num(line, f[1])?, horizon, "step")?
                };
                let s = check(line, num(line, f[lead - 1])?, s_count, "state")?;
                let a = check(line, num(line, f[lead])?, a_count, "action")?;
                let row = (h * s_count + s) * a_count + a;
                if seen[row] {
                    return Err(err(line, "transition row given twice"));
                }
                seen[row] = true;
                for (k, v) in f[lead + 1..].iter().enumerate() {
                    probs[row * s_count + k] = num(line, v)?;
                }
            }
            "infeasible" => {
                if f.len() != 3 {
                    return Err(err(line, "expected `infeasible s a`"));
                }
                let s = check(line, num(line, f[1])?, s_count, "state")?;
                let a = check(line, num(line, f[2])?, a_count, "action")?;
                feasible[s * a_count + a] = false;
            }
            other => return Err(err(line, format!("unknown entry `{other}`"))),
        }
    }
    if let Some((line, _)) = rows.next() {
        return Err(err(line, "content after `end`"));
    }
    if let Some(missing) = seen.iter().position(|&ok| !ok) {
        let (hs, a) = (missing / a_count, missing % a_count);
        return Err(err(
            last_line,
            format!(
                "missing transition row for step {}, state {}, action {a}",
                hs / s_count,
                hs % s_count
            ),
        ));
    }
    let initial = initial.ok_or_else(|| err(last_line, "missing `initial` line"))?;
    let transitions = if stationary {
        Transitions::stationary(probs)
    } else {
        Transitions::per_step(probs)
    };
    Ok(KnownCmdp::new(dims, transitions, reward, constraints, initial)?.with_feasibility(feasible)?)
}

fn rows_next<'a>(
    rows: &mut impl Iterator<Item = (usize, Vec<&'a str>)>,
    last_line: &mut usize,
) -> Result<(usize, Vec<&'a str>), ModelFileError> {
    match rows.next() {
        Some((line, f)) => {
            *last_line = line;
            Ok((line, f))
        }
        None => Err(err(*last_line + 1, "unexpected end of file")),
    }
}

pub fn model_text(model: &KnownCmdp) -> String {
    let d = model.dims();
    let stationary = model.transitions().is_stationary();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "states {}", d.num_states);
    let _ = writeln!(out, "actions {}", d.num_actions);
    let _ = writeln!(out, "horizon {}", d.horizon);
    let _ = writeln!(out, "constraints {}", d.num_constraints);
    let _ = writeln!(
        out,
        "transitions {}",
        if stationary { "stationary" } else { "per-step" }
    );
    let init: Vec<String> = model.initial_distribution().iter().map(|p| p.to_string()).collect();
    let _ = writeln!(out, "initial {}", init.join(" "));
    for s in 0..d.num_states {
        for a in 0..d.num_actions {
            let _ = writeln!(out, "reward {s} {a} {}", model.reward(s, a));
        }
    }
    for i in 0..d.num_constraints {
        for s in 0..d.num_states {
            for a in 0..d.num_actions {
                let _ = writeln!(out, "constraint {i} {s} {a} {}", model.constraint(i, s, a));
            }
        }
    }
    let steps = if stationary { 1 } else { d.horizon };
    for h in 0..steps {
        for s in 0..d.num_states {
            for a in 0..d.num_actions {
                let row: Vec<String> =
                    model.transition_row(h, s, a).iter().map(|p| p.to_string()).collect();
                if stationary {
                    let _ = writeln!(out, "transition {s} {a} {}", row.join(" "));
                } else {
                    let _ = writeln!(out, "transition {h} {s} {a} {}", row.join(" "));
                }
            }
        }
    }
    for s in 0..d.num_states {
        for a in 0..d.num_actions {
            if !model.is_feasible(s, a) {
                let _ = writeln!(out, "infeasible {s} {a}");
            }
        }
    }
    out.push_str("end\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use peakq_core::cmdp::stream_rng;
    use peakq_core::instances::{builtin_models, random_cmdp, RandomCmdpSpec};

    #[test]
    fn builtin_and_random_models_round_trip() {
        for (_, model) in builtin_models() {
            assert_eq!(parse_model(&model_text(&model)).unwrap(), model);
        }
        let mut rng = stream_rng(3, 0);
        let spec = RandomCmdpSpec::new(CmdpDims::new(3, 2, 3, 2).unwrap(), 0.2);
        let (model, _) = random_cmdp(&spec, &mut rng).unwrap();
        assert_eq!(parse_model(&model_text(&model)).unwrap(), model);
    }

    #[test]
    fn hand_written_model_parses() {
        let text = "peakq-model 1\nstates 2\nactions 2\nhorizon 2\nconstraints 1\n\
transitions stationary\ninitial 1 0\n# rewards\nreward 0 1 0.4\nconstraint 0 1 1 -0.8\n\
transition 0 0 1 0\ntransition 0 1 0 1\ntransition 1 0 0 1\ntransition 1 1 0 1\n\
infeasible 1 0\nend\n";
        let model = parse_model(text).unwrap();
        assert_eq!(model.reward(0, 1), 0.4);
        assert_eq!(model.reward(1, 1), 0.0);
        assert_eq!(model.constraint(0, 1, 1), -0.8);
        assert!(!model.is_feasible(1, 0));
    }

    #[test]
    fn errors_name_the_line() {
        let text = "peakq-model 1\nstates 2\nactions 1\nhorizon 1\nconstraints 0\n\
transitions stationary\ninitial 1 0\ntransition 0 0 1 0\ntransition 0 0 1 0\nend\n";
        assert!(matches!(parse_model(text), Err(ModelFileError::Parse { line: 9, .. })));
        let text = "peakq-model 1\nstates 2\nactions 1\nhorizon 1\nconstraints 0\n\
transitions stationary\ninitial 1 0\ntransition 0 0 1 0\nend\n";
        assert!(matches!(parse_model(text), Err(ModelFileError::Parse { .. })));
        assert!(parse_model("peakq-model 1\nstates 2\n").is_err());
    }
}
