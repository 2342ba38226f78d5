//! CSV exports and the run manifest.
//!
//! Every float is written with `{:.16e}` (17 significant digits), which
//! round-trips `f64` exactly. Peakon labels `a` start at 1.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::ch::ChTrajectory;
use crate::complex::ComplexPeakonField;
use crate::error::{Error, Result};
use crate::fields::FieldSnapshot;
use crate::solver::{MonitorSeries, SGrid, StrandState};

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// `t,s,a,Q,M,N`, one row per snapshot, node and peakon.
pub fn write_trajectory(path: &Path, snapshots: &[StrandState]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "s", "a", "Q", "M", "N"])?;
    for st in snapshots {
        for j in 0..st.grid.n {
            for a in 0..st.n_peakons() {
                w.write_record([
                    num(st.t),
                    num(st.grid.node(j)),
                    (a + 1).to_string(),
                    num(st.q[a][j]),
                    num(st.m[a][j]),
                    num(st.n[a][j]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_trajectory`] back into snapshots.
pub fn read_trajectory(path: &Path) -> Result<Vec<StrandState>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "s", "a", "Q", "M", "N"] {
        return Err(Error::invalid(format!("{}: expected header t,s,a,Q,M,N", path.display())));
    }
    // (s, a, q, m, n)
    type Row = (f64, usize, f64, f64, f64);
    // (t, rows) in file order.
    let mut groups: Vec<(f64, Vec<Row>)> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("{} row {}: column {}: {e}", path.display(), line + 2, &headers[i])))
        };
        let a: usize = rec[2]
            .trim()
            .parse()
            .ok()
            .filter(|&a| a >= 1)
            .ok_or_else(|| Error::invalid(format!("{} row {}: bad peakon label", path.display(), line + 2)))?;
        let t = field(0)?;
        let row = (field(1)?, a - 1, field(3)?, field(4)?, field(5)?);
        match groups.last_mut() {
            Some((gt, rows)) if *gt == t => rows.push(row),
            _ => groups.push((t, vec![row])),
        }
    }
    groups
        .into_iter()
        .map(|(t, rows)| {
            let np = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
            let mut s: Vec<f64> = rows.iter().map(|r| r.0).collect();
            s.dedup();
            if s.len() < 5 || rows.len() != s.len() * np {
                return Err(Error::invalid(format!("snapshot at t = {t} is not a full grid")));
            }
            let grid = SGrid { s_min: s[0], ds: (s[s.len() - 1] - s[0]) / (s.len() - 1) as f64, n: s.len() };
            let mut st = StrandState::zeros(t, grid, np);
            for (k, &(_, a, q, m, n)) in rows.iter().enumerate() {
                let j = k / np;
                st.q[a][j] = q;
                st.m[a][j] = m;
                st.n[a][j] = n;
            }
            Ok(st)
        })
        .collect()
}

/// `x,u,v`.
pub fn write_fields(path: &Path, f: &FieldSnapshot) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["x", "u", "v"])?;
    for i in 0..f.x_grid.len() {
        w.write_record([num(f.x_grid[i]), num(f.u[i]), num(f.v[i])])?;
    }
    w.flush()?;
    Ok(())
}

/// `xi,eta,a,Q,ReM,ImM`.
pub fn write_complex(path: &Path, f: &ComplexPeakonField) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["xi", "eta", "a", "Q", "ReM", "ImM"])?;
    let g = f.grid;
    for i in 0..g.n_xi {
        for j in 0..g.n_eta {
            let k = g.index(i, j);
            for a in 0..f.n_peakons() {
                w.write_record([
                    num(g.xi(i)),
                    num(g.eta(j)),
                    (a + 1).to_string(),
                    num(f.q[a][k]),
                    num(f.m[a][k].re),
                    num(f.m[a][k].im),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,a,Q,M,H,P,H_drift,P_drift` at every stored state.
pub fn write_ch(path: &Path, tr: &ChTrajectory) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "a", "Q", "M", "H", "P", "H_drift", "P_drift"])?;
    let (h0, p0) = (tr.records[0].energy, tr.records[0].momentum);
    let mut records = tr.records.iter().peekable();
    for st in &tr.states {
        while records.next_if(|r| r.t != st.t).is_some() {}
        let r = records.peek().ok_or_else(|| Error::invalid("CH record missing for stored state"))?;
        for a in 0..st.q.len() {
            w.write_record([
                num(st.t),
                (a + 1).to_string(),
                num(st.q[a]),
                num(st.m[a]),
                num(r.energy),
                num(r.momentum),
                num(r.energy - h0),
                num(r.momentum - p0),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,constraint_max,momentum_integral,n_charge,min_separation`.
pub fn write_monitor(path: &Path, m: &MonitorSeries) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "constraint_max", "momentum_integral", "n_charge", "min_separation"])?;
    for r in &m.records {
        w.write_record([
            num(r.t),
            num(r.constraint_max),
            num(r.momentum_integral),
            r.n_charge.map(num).unwrap_or_default(),
            num(r.min_separation),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `value < tolerance`
    Below,
    /// `value >= tolerance`
    AtLeast,
    /// `value > tolerance`
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, comparison: Comparison, tolerance: f64) -> Self {
        // NaN fails every comparison.
        let passed = match comparison {
            Comparison::Below => value < tolerance,
            Comparison::AtLeast => value >= tolerance,
            Comparison::Above => value > tolerance,
        };
        Self { name: name.into(), value, tolerance, comparison, passed }
    }

    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, Comparison::Below, tolerance)
    }

    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, Comparison::AtLeast, tolerance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    ConfigError,
    NumericalAbort,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::ConfigError => 2,
            Status::NumericalAbort => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    pub config: serde_json::Value,
    pub monitors: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
