//! One-parameter sweeps of the stability report, evaluated in parallel.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::plant::MicrogridConfig;
use crate::stability::full_report_with_tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepParam {
    #[serde(rename = "P")]
    Load,
    #[serde(rename = "tau")]
    Tau,
    #[serde(rename = "b1")]
    B1,
    #[serde(rename = "b2")]
    B2,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P" | "p" | "load" => Ok(SweepParam::Load),
            "tau" => Ok(SweepParam::Tau),
            "b1" => Ok(SweepParam::B1),
            "b2" => Ok(SweepParam::B2),
            other => Err(Error::InvalidInput(format!("unknown sweep parameter `{other}` (expected P, tau, b1 or b2)"))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Load => "P",
            SweepParam::Tau => "tau",
            SweepParam::B1 => "b1",
            SweepParam::B2 => "b2",
        })
    }
}

impl SweepParam {
    fn apply(&self, cfg: &mut MicrogridConfig, v: f64) {
        match self {
            SweepParam::Load => cfg.load_power = v,
            SweepParam::Tau => cfg.tau = v,
            SweepParam::B1 => cfg.b1 = v,
            SweepParam::B2 => cfg.b2 = v,
        }
    }
}

/// `lo:hi:steps`, with `steps` grid points including both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl FromStr for SweepRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidInput(format!("range `{s}` must look like lo:hi:steps"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if !(lo.is_finite() && hi.is_finite()) || steps == 0 || (steps == 1 && lo != hi) {
            return Err(bad());
        }
        Ok(SweepRange { lo, hi, steps })
    }
}

impl SweepRange {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        let h = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.lo + h * i as f64).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    /// Verdict name, or `error`.
    pub verdict: String,
    /// P < P_sup.
    pub cond28: bool,
    pub certified: bool,
    pub tau_max: f64,
    pub min_re: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flip {
    /// `verdict`, `max-load` or `certificate`.
    pub quantity: String,
    pub lo: f64,
    pub hi: f64,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    pub flips: Vec<Flip>,
}

fn verdict_name(v: crate::stability::Verdict) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|x| x.as_str().map(str::to_owned))
        .unwrap_or_default()
}

pub fn sweep(base: &MicrogridConfig, param: SweepParam, range: SweepRange, eigen_tol: f64) -> SweepResult {
    let rows: Vec<SweepRow> = range
        .values()
        .into_par_iter()
        .map(|value| {
            let mut cfg = base.clone();
            param.apply(&mut cfg, value);
            match full_report_with_tol(&cfg, eigen_tol) {
                Ok(rep) => SweepRow {
                    value,
                    verdict: verdict_name(rep.verdict),
                    cond28: rep.cond28,
                    certified: rep.certificate_holds(),
                    tau_max: rep.tau_max,
                    min_re: rep.eigenvalues.iter().map(|e| e.re).fold(f64::INFINITY, f64::min),
                    note: String::new(),
                },
                Err(e) => SweepRow {
                    value,
                    verdict: "error".into(),
                    cond28: false,
                    certified: false,
                    tau_max: f64::NAN,
                    min_re: f64::NAN,
                    note: e.to_string(),
                },
            }
        })
        .collect();
    let holds = |b: bool| if b { "holds" } else { "violated" }.to_string();
    let mut flips = Vec::new();
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let mut flip = |quantity: &str, from: String, to: String| {
            flips.push(Flip {
                quantity: quantity.into(),
                lo: a.value,
                hi: b.value,
                from,
                to,
            })
        };
        if a.verdict != b.verdict {
            flip("verdict", a.verdict.clone(), b.verdict.clone());
        }
        if a.cond28 != b.cond28 {
            flip("max-load", holds(a.cond28), holds(b.cond28));
        }
        if a.certified != b.certified {
            flip("certificate", holds(a.certified), holds(b.certified));
        }
    }
    SweepResult { param, rows, flips }
}

pub fn write_sweep_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record([result.param.to_string().as_str(), "verdict", "cond28", "certified", "tau_max", "min_re", "note"])
        .map_err(io)?;
    for r in &result.rows {
        w.write_record([
            r.value.to_string(),
            r.verdict.clone(),
            r.cond28.to_string(),
            r.certified.to_string(),
            r.tau_max.to_string(),
            r.min_re.to_string(),
            r.note.clone(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
