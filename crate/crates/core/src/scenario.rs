//! JSON scenario files.
//!
//! ```json
//! {
//!   "name": "case_a",
//!   "network": { "n": 6, "r": [..], "c": [..], "k": [..], "g": [..], "v_ref": 200, "load_power": 5000 },
//!   "comm":    { "edges": [{ "i": 1, "j": 2, "w": 100 }, ..], "scale": 1.0 },
//!   "control": { "b1": 20, "b2": 10, "tau": 0 },
//!   "sim":     { "t_end": 3, "dt": 1e-4, "decimation": 100, "events": [..] },
//!   "analysis": { "eigen_tol": 1e-9 }
//! }
//! ```
//!
//! Node indices in files are 1-based. `comm` takes either `edges` or a dense
//! row-major `matrix`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::{CommGraph, Edge};
use crate::plant::MicrogridConfig;
use crate::simulator::{Action, DelayPlacement, Event, InitialState, Scenario, CONVERGENCE_TOL};
use crate::stability::DEFAULT_EIGEN_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub network: NetworkSection,
    pub comm: CommSection,
    pub control: ControlSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub n: usize,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    pub k: Vec<f64>,
    pub g: Vec<f64>,
    pub v_ref: f64,
    pub load_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<EdgeSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Multiplies every weight (e.g. 0.01 for the delay studies).
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub b1: f64,
    pub b2: f64,
    #[serde(default)]
    pub tau: f64,
    /// Consensus layer active from t = 0.
    #[serde(default = "yes")]
    pub distributed: bool,
    #[serde(default)]
    pub delay_placement: DelayPlacement,
    #[serde(default = "yes")]
    pub isolated_revert_to_droop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ActionSpec {
    EnableDistributedControl,
    DisableDistributedControl,
    SetLoad { power: f64 },
    SetLink { i: usize, j: usize, w: f64 },
    SetVoltageWeight { i: usize, w: f64 },
    SetDelay { tau: f64 },
    FailAllLinks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub time: f64,
    #[serde(flatten)]
    pub action: ActionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    Droop,
    Equilibrium {
        #[serde(default)]
        perturbation: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "one_usize")]
    pub decimation: usize,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    #[serde(default = "droop")]
    pub initial: InitialSpec,
}

fn one_usize() -> usize {
    1
}

fn droop() -> InitialSpec {
    InitialSpec::Droop
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            t_end: 5.0,
            dt: 1e-4,
            decimation: 1,
            events: Vec::new(),
            initial: InitialSpec::Droop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Relative zero band for eigenvalues.
    #[serde(default = "eigen_tol")]
    pub eigen_tol: f64,
    /// Relative voltage / sharing tolerance for the converged outcome.
    #[serde(default = "convergence_tol")]
    pub convergence_tol: f64,
}

fn eigen_tol() -> f64 {
    DEFAULT_EIGEN_TOL
}

fn convergence_tol() -> f64 {
    CONVERGENCE_TOL
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            eigen_tol: DEFAULT_EIGEN_TOL,
            convergence_tol: CONVERGENCE_TOL,
        }
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::scenario(path, format!("must be positive, got {v}")))
    }
}

fn nonnegative(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::scenario(path, format!("must be nonnegative, got {v}")))
    }
}

fn node(path: &str, idx: usize, n: usize) -> Result<usize> {
    if (1..=n).contains(&idx) {
        Ok(idx - 1)
    } else {
        Err(Error::scenario(path, format!("node index {idx} is outside 1..={n}")))
    }
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::scenario(if path == "." { "(root)".to_string() } else { path }, inner.to_string())
        })?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Field-level checks, reported with the offending path.
    pub fn validate(&self) -> Result<()> {
        let net = &self.network;
        let n = net.n;
        if n == 0 {
            return Err(Error::scenario("network.n", "at least one DG is required"));
        }
        for (name, v) in [("r", &net.r), ("c", &net.c), ("k", &net.k), ("g", &net.g)] {
            if v.len() != n {
                return Err(Error::scenario(
                    format!("network.{name}"),
                    format!("expected {n} entries, found {}", v.len()),
                ));
            }
        }
        for (idx, &x) in net.r.iter().enumerate() {
            positive(&format!("network.r[{idx}]"), x)?;
        }
        for (idx, &x) in net.c.iter().enumerate() {
            nonnegative(&format!("network.c[{idx}]"), x)?;
        }
        for (idx, &x) in net.k.iter().enumerate() {
            positive(&format!("network.k[{idx}]"), x)?;
        }
        for (idx, &x) in net.g.iter().enumerate() {
            nonnegative(&format!("network.g[{idx}]"), x)?;
        }
        positive("network.v_ref", net.v_ref)?;
        nonnegative("network.load_power", net.load_power)?;

        self.graph()?;

        nonnegative("control.b1", self.control.b1)?;
        nonnegative("control.b2", self.control.b2)?;
        nonnegative("control.tau", self.control.tau)?;

        let sim = &self.sim;
        positive("sim.dt", sim.dt)?;
        nonnegative("sim.t_end", sim.t_end)?;
        if sim.decimation == 0 {
            return Err(Error::scenario("sim.decimation", "must be at least 1"));
        }
        if let InitialSpec::Equilibrium { perturbation } = &sim.initial {
            if !perturbation.is_empty() && perturbation.len() != n {
                return Err(Error::scenario(
                    "sim.initial.perturbation",
                    format!("expected {n} entries (or none), found {}", perturbation.len()),
                ));
            }
        }
        let mut taus = vec![("control.tau".to_string(), self.control.tau)];
        let mut last = f64::NEG_INFINITY;
        for (idx, ev) in sim.events.iter().enumerate() {
            let at = format!("sim.events[{idx}]");
            nonnegative(&format!("{at}.time"), ev.time)?;
            if ev.time < last {
                return Err(Error::scenario(format!("{at}.time"), "events must be sorted by time"));
            }
            last = ev.time;
            match ev.action {
                ActionSpec::SetLoad { power } => nonnegative(&format!("{at}.power"), power)?,
                ActionSpec::SetLink { i, j, w } => {
                    let a = node(&format!("{at}.i"), i, n)?;
                    let b = node(&format!("{at}.j"), j, n)?;
                    if a == b {
                        return Err(Error::scenario(format!("{at}.j"), "self-loops are not allowed"));
                    }
                    nonnegative(&format!("{at}.w"), w)?;
                }
                ActionSpec::SetVoltageWeight { i, w } => {
                    node(&format!("{at}.i"), i, n)?;
                    nonnegative(&format!("{at}.w"), w)?;
                }
                ActionSpec::SetDelay { tau } => {
                    nonnegative(&format!("{at}.tau"), tau)?;
                    taus.push((format!("{at}.tau"), tau));
                }
                _ => {}
            }
        }
        for (path, tau) in taus {
            if tau > 0.0 && sim.dt > tau / 10.0 * (1.0 + 1e-12) {
                return Err(Error::scenario(
                    "sim.dt",
                    format!("dt = {} must not exceed tau/10 for {path} = {tau}", sim.dt),
                ));
            }
        }
        positive("analysis.eigen_tol", self.analysis.eigen_tol)?;
        positive("analysis.convergence_tol", self.analysis.convergence_tol)?;
        Ok(())
    }

    fn graph(&self) -> Result<CommGraph> {
        let n = self.network.n;
        let comm = &self.comm;
        positive("comm.scale", comm.scale)?;
        let graph = match (&comm.edges, &comm.matrix) {
            (Some(_), Some(_)) => return Err(Error::scenario("comm", "give either `edges` or `matrix`, not both")),
            (None, None) => return Err(Error::scenario("comm", "missing `edges` or `matrix`")),
            (Some(edges), None) => {
                let mut list = Vec::with_capacity(edges.len());
                for (idx, e) in edges.iter().enumerate() {
                    let at = format!("comm.edges[{idx}]");
                    let i = node(&format!("{at}.i"), e.i, n)?;
                    let j = node(&format!("{at}.j"), e.j, n)?;
                    if i == j {
                        return Err(Error::scenario(format!("{at}.j"), "self-loops are not allowed"));
                    }
                    nonnegative(&format!("{at}.w"), e.w)?;
                    if list.iter().any(|x: &Edge| (x.i, x.j) == (i.min(j), i.max(j))) {
                        return Err(Error::scenario(at, "duplicate edge"));
                    }
                    list.push(Edge {
                        i: i.min(j),
                        j: i.max(j),
                        w: e.w,
                    });
                }
                CommGraph::from_edges(n, &list).map_err(|e| Error::scenario("comm.edges", e.to_string()))?
            }
            (None, Some(rows)) => {
                if rows.len() != n {
                    return Err(Error::scenario("comm.matrix", format!("expected {n} rows, found {}", rows.len())));
                }
                for (idx, row) in rows.iter().enumerate() {
                    if row.len() != n {
                        return Err(Error::scenario(
                            format!("comm.matrix[{idx}]"),
                            format!("expected {n} entries, found {}", row.len()),
                        ));
                    }
                }
                CommGraph::from_rows(rows).map_err(|e| Error::scenario("comm.matrix", e.to_string()))?
            }
        };
        Ok(if comm.scale == 1.0 { graph } else { graph.scaled(comm.scale) })
    }

    pub fn config(&self) -> Result<MicrogridConfig> {
        let net = &self.network;
        let cfg = MicrogridConfig {
            r: net.r.clone(),
            c: net.c.clone(),
            k: net.k.clone(),
            g: net.g.clone(),
            comm: self.graph()?,
            v_ref: net.v_ref,
            load_power: net.load_power,
            b1: self.control.b1,
            b2: self.control.b2,
            tau: self.control.tau,
        };
        cfg.validate_physical()?;
        Ok(cfg)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let config = self.config()?;
        let n = config.n();
        let events = self
            .sim
            .events
            .iter()
            .map(|e| Event {
                time: e.time,
                action: match e.action {
                    ActionSpec::EnableDistributedControl => Action::EnableDistributedControl,
                    ActionSpec::DisableDistributedControl => Action::DisableDistributedControl,
                    ActionSpec::SetLoad { power } => Action::SetLoad { power },
                    ActionSpec::SetLink { i, j, w } => Action::SetLink { i: i - 1, j: j - 1, w },
                    ActionSpec::SetVoltageWeight { i, w } => Action::SetVoltageWeight { i: i - 1, w },
                    ActionSpec::SetDelay { tau } => Action::SetDelay { tau },
                    ActionSpec::FailAllLinks => Action::FailAllLinks,
                },
            })
            .collect();
        let initial = match &self.sim.initial {
            InitialSpec::Droop => InitialState::Droop,
            InitialSpec::Equilibrium { perturbation } => InitialState::Equilibrium {
                perturbation: if perturbation.is_empty() { vec![0.0; n] } else { perturbation.clone() },
            },
        };
        let scenario = Scenario {
            config,
            t_end: self.sim.t_end,
            dt: self.sim.dt,
            decimation: self.sim.decimation,
            events,
            initial,
            distributed: self.control.distributed,
            delay_placement: self.control.delay_placement,
            isolated_revert_to_droop: self.control.isolated_revert_to_droop,
            convergence_tol: self.analysis.convergence_tol,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// A minimal file describing `config` (edge list, default sim settings).
    pub fn from_config(config: &MicrogridConfig) -> Self {
        ScenarioFile {
            name: None,
            description: None,
            network: NetworkSection {
                n: config.n(),
                r: config.r.clone(),
                c: config.c.clone(),
                k: config.k.clone(),
                g: config.g.clone(),
                v_ref: config.v_ref,
                load_power: config.load_power,
            },
            comm: CommSection {
                edges: Some(
                    config
                        .comm
                        .edges()
                        .into_iter()
                        .map(|e| EdgeSpec {
                            i: e.i + 1,
                            j: e.j + 1,
                            w: e.w,
                        })
                        .collect(),
                ),
                matrix: None,
                scale: 1.0,
            },
            control: ControlSection {
                b1: config.b1,
                b2: config.b2,
                tau: config.tau,
                distributed: true,
                delay_placement: DelayPlacement::Uniform,
                isolated_revert_to_droop: true,
            },
            sim: SimSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "network": { "n": 3, "r": [1, 2, 0.5], "c": [5, 5, 10], "k": [1, 1, 2], "g": [0, 0, 1],
                     "v_ref": 200, "load_power": 3000 },
        "comm": { "edges": [ { "i": 1, "j": 2, "w": 10 }, { "i": 2, "j": 3, "w": 10 } ], "scale": 0.5 },
        "control": { "b1": 5, "b2": 2 },
        "sim": { "t_end": 1, "dt": 0.001, "events": [
            { "time": 0.5, "action": "set-link", "i": 1, "j": 3, "w": 4 },
            { "time": 0.7, "action": "fail-all-links" } ] }
    }"#;

    #[test]
    fn parses_and_builds() {
        let f = ScenarioFile::from_json(SMALL).unwrap();
        let cfg = f.config().unwrap();
        assert_eq!(cfg.comm.weight(0, 1), 5.0);
        assert_eq!(cfg.comm.weight(2, 1), 5.0);
        assert_eq!(cfg.comm.weight(0, 2), 0.0);
        let sc = f.scenario().unwrap();
        assert_eq!(sc.events[0].action, Action::SetLink { i: 0, j: 2, w: 4.0 });
        assert_eq!(sc.events[1].action, Action::FailAllLinks);
        assert_eq!(sc.initial, InitialState::Droop);
        assert!(sc.distributed && sc.isolated_revert_to_droop);
    }

    #[test]
    fn wrong_length_names_field() {
        let bad = SMALL.replace(r#""r": [1, 2, 0.5]"#, r#""r": [1, 2]"#);
        match ScenarioFile::from_json(&bad) {
            Err(Error::Scenario { path, .. }) => assert_eq!(path, "network.r"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_error_names_field() {
        let bad = SMALL.replace(r#""b1": 5"#, r#""b1": "fast""#);
        match ScenarioFile::from_json(&bad) {
            Err(Error::Scenario { path, .. }) => assert_eq!(path, "control.b1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_event_index_names_field() {
        let bad = SMALL.replace(r#""i": 1, "j": 3, "w": 4"#, r#""i": 1, "j": 9, "w": 4"#);
        match ScenarioFile::from_json(&bad) {
            Err(Error::Scenario { path, .. }) => assert_eq!(path, "sim.events[0].j"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dense_matrix_form() {
        let text = SMALL.replace(
            r#""edges": [ { "i": 1, "j": 2, "w": 10 }, { "i": 2, "j": 3, "w": 10 } ]"#,
            r#""matrix": [[0, 10, 0], [10, 0, 10], [0, 10, 0]]"#,
        );
        let dense = ScenarioFile::from_json(&text).unwrap().config().unwrap();
        let edges = ScenarioFile::from_json(SMALL).unwrap().config().unwrap();
        assert_eq!(dense, edges);
    }

    #[test]
    fn coarse_step_for_delay_rejected() {
        let bad = SMALL.replace(r#""b2": 2"#, r#""b2": 2, "tau": 0.005"#);
        match ScenarioFile::from_json(&bad) {
            Err(Error::Scenario { path, .. }) => assert_eq!(path, "sim.dt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_config() {
        let cfg = ScenarioFile::from_json(SMALL).unwrap().config().unwrap();
        let text = ScenarioFile::from_config(&cfg).to_json();
        let back = ScenarioFile::from_json(&text).unwrap().config().unwrap();
        assert_eq!(back, cfg);
    }
}
