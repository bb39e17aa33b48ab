//! File formats: matrix CSV fixtures, problem/run configuration JSON, and
//! trajectory CSV output.
//!
//! All numeric CSV output is written with 17 significant decimal digits so
//! that `f64` values round-trip exactly and replays are byte-identical.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gev::GevProblem;
use crate::harness::build_setting;
use crate::matrix::{Mat, Vector};
use crate::sgha::{Record, StepMode, Trajectory};

/// 17-significant-digit decimal formatting (exact round trip for `f64`).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a matrix as CSV, one row per line.
pub fn write_matrix_csv(path: &Path, m: &Mat) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV matrix; rows must be rectangular and entries finite.
pub fn read_matrix_csv(path: &Path) -> Result<Mat> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| {
                    Error::Parse(format!("{}:{}: bad number {tok:?}: {e}", path.display(), lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse(format!(
                    "{}:{}: ragged row ({} entries, expected {})",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!(
                "{}:{}: non-finite entry",
                path.display(),
                lineno + 1
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: empty matrix", path.display())));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok(Mat::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Problem description: explicit CSV files or a generated setting.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemFile {
    Setting {
        setting: u8,
        d: usize,
        seed: u64,
    },
    Files {
        #[serde(rename = "A")]
        a: PathBuf,
        #[serde(rename = "B")]
        b: PathBuf,
        r: usize,
    },
}

/// Loads a problem; relative CSV paths resolve against `base`.
pub fn load_problem(pf: &ProblemFile, base: &Path) -> Result<GevProblem> {
    match pf {
        ProblemFile::Setting { setting, d, seed } => build_setting(*setting, *d, *seed),
        ProblemFile::Files { a, b, r } => {
            let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
            let a = read_matrix_csv(&resolve(a))?;
            let b = read_matrix_csv(&resolve(b))?;
            GevProblem::new(a, b, *r)
        }
    }
}

/// Oracle section of a run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleConfigFile {
    /// `"exact"`, `"gauss_cov"`, or `"add_noise"`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for OracleConfigFile {
    fn default() -> Self {
        Self { kind: "gauss_cov".into(), n_draws: Some(40), sigma: None, seed: None }
    }
}

/// Seed list: explicit, or derived from a master seed by counter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedsFile {
    List(Vec<u64>),
    Master { master: u64, count: usize },
}

impl SeedsFile {
    /// Expands to the explicit list. Counter derivation means adding seeds
    /// never reshuffles existing ones.
    pub fn expand(&self) -> Vec<u64> {
        match self {
            SeedsFile::List(v) => v.clone(),
            SeedsFile::Master { master, count } => {
                (0..*count as u64).map(|i| crate::seeding::mix(*master, 0x5EED_0000 + i)).collect()
            }
        }
    }
}

/// On-disk run configuration shared by the `solve` and `experiment`
/// subcommands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfigFile {
    pub problem: ProblemFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    /// `"combined"` (default) or `"two-step"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[serde(default)]
    pub oracle: OracleConfigFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<SeedsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

pub fn parse_mode(s: &str) -> Result<StepMode> {
    match s {
        "combined" => Ok(StepMode::Combined),
        "two-step" => Ok(StepMode::TwoStep),
        other => Err(Error::Parse(format!("unknown mode {other:?} (use combined or two-step)"))),
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfigFile> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes a trajectory CSV. The core columns are
/// `iter,error,lagrangian,feasibility`; `wallclock_ns` is appended when
/// requested (single runs), and whitened coordinates `w0..w{d-1}` when the
/// run recorded them.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, include_wallclock: bool) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    let w_dim = traj.records.first().and_then(|r| r.w.as_ref()).map(|w| w.len());
    let mut header = vec![
        "iter".to_string(),
        "error".to_string(),
        "lagrangian".to_string(),
        "feasibility".to_string(),
    ];
    if include_wallclock {
        header.push("wallclock_ns".to_string());
    }
    if let Some(d) = w_dim {
        for i in 0..d {
            header.push(format!("w{i}"));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for rec in &traj.records {
        let mut fields = vec![
            rec.iter.to_string(),
            fmt_f64(rec.error),
            fmt_f64(rec.lagrangian),
            fmt_f64(rec.feasibility),
        ];
        if include_wallclock {
            fields.push(rec.wallclock_ns.to_string());
        }
        if let Some(d) = w_dim {
            match &rec.w {
                Some(w) => fields.extend(w.iter().map(|&v| fmt_f64(v))),
                None => fields.extend(std::iter::repeat("nan".to_string()).take(d)),
            }
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a trajectory CSV produced by [`write_trajectory_csv`].
pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty trajectory", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let (i_iter, i_err, i_lag, i_feas) = match (find("iter"), find("error"), find("lagrangian"), find("feasibility")) {
        (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
        _ => {
            return Err(Error::Parse(format!(
                "{}: missing required trajectory columns",
                path.display()
            )))
        }
    };
    let i_wall = find("wallclock_ns");
    let w_cols: Vec<usize> = (0..)
        .map(|i| find(&format!("w{i}")))
        .take_while(|c| c.is_some())
        .flatten()
        .collect();

    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |idx: usize| -> Result<f64> {
            fields
                .get(idx)
                .ok_or_else(|| Error::Parse(format!("{}:{}: short row", path.display(), lineno + 2)))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 2)))
        };
        let iter = get(i_iter)? as usize;
        let w = if w_cols.is_empty() {
            None
        } else {
            let vals: Result<Vec<f64>> = w_cols.iter().map(|&c| get(c)).collect();
            Some(Vector::from_vec(vals?))
        };
        records.push(Record {
            iter,
            error: get(i_err)?,
            lagrangian: get(i_lag)?,
            feasibility: get(i_feas)?,
            wallclock_ns: i_wall.map(|c| get(c).unwrap_or(0.0) as u64).unwrap_or(0),
            w,
        });
    }
    Ok(Trajectory { records })
}
