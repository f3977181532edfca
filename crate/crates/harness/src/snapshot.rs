//! Versioned text snapshots of learner tables.
//!
//! ```text
//! peakq-snapshot 1
//! states 25
//! actions 9
//! horizon 5
//! constraints 1
//! xi 0.01
//! gamma 1
//! eta 10
//! episodes 3000
//! seed 17
//! [q]
//! h,s,a,value
//! [w]
//! h,s,value
//! [visits]
//! h,s,a,count
//! [moments]
//! h,s,a,moment1,moment2,beta
//! end
//! ```
//!
//! Rows appear in index order. Floats use the shortest representation that
//! parses back to the same value, so a round trip is exact.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use peakq_core::cmdp::CmdpDims;
use peakq_core::learner::LearnerState;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "peakq-snapshot";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("snapshot line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("snapshot tables are inconsistent: {0}")]
    Tables(#[from] peakq_core::Error),
}

/// What a snapshot records besides the tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotMeta {
    pub xi: f64,
    pub gamma: f64,
    pub eta: f64,
    /// Episodes played when the snapshot was taken.
    pub episodes: usize,
    pub seed: u64,
}

pub fn snapshot_text(state: &LearnerState, meta: &SnapshotMeta) -> String {
    let d = state.dims();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "states {}", d.num_states);
    let _ = writeln!(out, "actions {}", d.num_actions);
    let _ = writeln!(out, "horizon {}", d.horizon);
    let _ = writeln!(out, "constraints {}", d.num_constraints);
    let _ = writeln!(out, "xi {}", meta.xi);
    let _ = writeln!(out, "gamma {}", meta.gamma);
    let _ = writeln!(out, "eta {}", meta.eta);
    let _ = writeln!(out, "episodes {}", meta.episodes);
    let _ = writeln!(out, "seed {}", meta.seed);
    out.push_str("[q]\n");
    for_each_sa(d, |h, s, a| {
        let _ = writeln!(out, "{h},{s},{a},{}", state.q(h, s, a));
    });
    out.push_str("[w]\n");
    for h in 0..=d.horizon {
        for s in 0..d.num_states {
            let _ = writeln!(out, "{h},{s},{}", state.w(h, s));
        }
    }
    out.push_str("[visits]\n");
    for_each_sa(d, |h, s, a| {
        let _ = writeln!(out, "{h},{s},{a},{}", state.visits(h, s, a));
    });
    out.push_str("[moments]\n");
    for_each_sa(d, |h, s, a| {
        let _ = writeln!(
            out,
            "{h},{s},{a},{},{},{}",
            state.moment1(h, s, a),
            state.moment2(h, s, a),
            state.beta_prev(h, s, a)
        );
    });
    out.push_str("end\n");
    out
}

fn for_each_sa(d: CmdpDims, mut f: impl FnMut(usize, usize, usize)) {
    for h in 0..d.horizon {
        for s in 0..d.num_states {
            for a in 0..d.num_actions {
                f(h, s, a);
            }
        }
    }
}

pub fn save_snapshot(state: &LearnerState, meta: &SnapshotMeta, path: &Path) -> Result<(), SnapshotError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|source| SnapshotError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, snapshot_text(state, meta)).map_err(|source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_snapshot(path: &Path) -> Result<(LearnerState, SnapshotMeta), SnapshotError> {
    let text = std::fs::read_to_string(path).map_err(|source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_snapshot(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), SnapshotError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l.trim_end()))
            }
            None => Err(SnapshotError::Parse {
                line: self.last + 1,
                message: "unexpected end of file".into(),
            }),
        }
    }

    fn header<T: FromStr>(&mut self, key: &str) -> Result<T, SnapshotError> {
        let (line, text) = self.next()?;
        let value = text
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| parse_err(line, format!("expected `{key} <value>`, got `{text}`")))?;
        value
            .parse()
            .map_err(|_| parse_err(line, format!("bad value for {key}: `{value}`")))
    }

    fn expect(&mut self, want: &str) -> Result<(), SnapshotError> {
        let (line, text) = self.next()?;
        if text != want {
            return Err(parse_err(line, format!("expected `{want}`, got `{text}`")));
        }
        Ok(())
    }

    /// Reads a row whose leading fields must equal `index` and returns the
    /// remaining `extra` fields.
    fn row(&mut self, index: &[usize], extra: usize) -> Result<(usize, Vec<&'a str>), SnapshotError> {
        let (line, text) = self.next()?;
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != index.len() + extra {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", index.len() + extra, fields.len()),
            ));
        }
        for (field, &want) in fields.iter().zip(index) {
            if field.parse::<usize>().ok() != Some(want) {
                return Err(parse_err(line, format!("expected index {index:?}, got `{text}`")));
            }
        }
        Ok((line, fields[index.len()..].to_vec()))
    }
}

fn parse_err(line: usize, message: String) -> SnapshotError {
    SnapshotError::Parse { line, message }
}

fn num<T: FromStr>(line: usize, field: &str) -> Result<T, SnapshotError> {
    field
        .parse()
        .map_err(|_| parse_err(line, format!("bad number `{field}`")))
}

pub fn parse_snapshot(text: &str) -> Result<(LearnerState, SnapshotMeta), SnapshotError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let version: u32 = lines.header(MAGIC)?;
    if version != FORMAT_VERSION {
        return Err(parse_err(1, format!("unsupported format version {version}")));
    }
    let num_states: usize = lines.header("states")?;
    let num_actions: usize = lines.header("actions")?;
    let horizon: usize = lines.header("horizon")?;
    let num_constraints: usize = lines.header("constraints")?;
    let dims = CmdpDims::new(num_states, num_actions, horizon, num_constraints)
        .map_err(|e| parse_err(5, e.to_string()))?;
    let meta = SnapshotMeta {
        xi: lines.header("xi")?,
        gamma: lines.header("gamma")?,
        eta: lines.header("eta")?,
        episodes: lines.header("episodes")?,
        seed: lines.header("seed")?,
    };
    let sa = horizon * num_states * num_actions;

    lines.expect("[q]")?;
    let mut q = Vec::with_capacity(sa);
    for_each_sa_result(dims, |h, s, a| {
        let (line, f) = lines.row(&[h, s, a], 1)?;
        q.push(num(line, f[0])?);
        Ok(())
    })?;
    lines.expect("[w]")?;
    let mut w = Vec::with_capacity((horizon + 1) * num_states);
    for h in 0..=horizon {
        for s in 0..num_states {
            let (line, f) = lines.row(&[h, s], 1)?;
            w.push(num(line, f[0])?);
        }
    }
    lines.expect("[visits]")?;
    let mut visits = Vec::with_capacity(sa);
    for_each_sa_result(dims, |h, s, a| {
        let (line, f) = lines.row(&[h, s, a], 1)?;
        visits.push(num(line, f[0])?);
        Ok(())
    })?;
    lines.expect("[moments]")?;
    let mut m1 = Vec::with_capacity(sa);
    let mut m2 = Vec::with_capacity(sa);
    let mut beta = Vec::with_capacity(sa);
    for_each_sa_result(dims, |h, s, a| {
        let (line, f) = lines.row(&[h, s, a], 3)?;
        m1.push(num(line, f[0])?);
        m2.push(num(line, f[1])?);
        beta.push(num(line, f[2])?);
        Ok(())
    })?;
    lines.expect("end")?;
    let state = LearnerState::from_tables(dims, meta.eta, q, w, visits, m1, m2, beta)?;
    Ok((state, meta))
}

fn for_each_sa_result(
    d: CmdpDims,
    mut f: impl FnMut(usize, usize, usize) -> Result<(), SnapshotError>,
) -> Result<(), SnapshotError> {
    for h in 0..d.horizon {
        for s in 0..d.num_states {
            for a in 0..d.num_actions {
                f(h, s, a)?;
            }
        }
    }
    Ok(())
}
