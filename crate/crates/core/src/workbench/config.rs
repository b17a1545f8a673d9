//! Run configuration: flat `key = value` text grouped under `[section]`
//! headers. Section names are checked but keys are unique across sections.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::WorkbenchError;
use crate::chaos::{DEFAULT_GRID_RESOLUTION, DEFAULT_LYAPUNOV_HORIZON, DEFAULT_RENORM_INTERVAL, DEFAULT_SECTION_TAU};
use crate::fock::DEFAULT_TAIL_MASS;
use crate::ode::Tolerances;
use crate::quantum::DEFAULT_BREAKDOWN_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Quantum,
    Meanfield,
    Classical,
    Poincare,
    Lyapunov,
    Sweep,
}

impl Mode {
    pub const ALL: [Mode; 6] = [Mode::Quantum, Mode::Meanfield, Mode::Classical, Mode::Poincare, Mode::Lyapunov, Mode::Sweep];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Quantum => "quantum",
            Mode::Meanfield => "meanfield",
            Mode::Classical => "classical",
            Mode::Poincare => "poincare",
            Mode::Lyapunov => "lyapunov",
            Mode::Sweep => "sweep",
        }
    }

    /// Default `τ_max` (the horizon for `lyapunov`).
    pub fn default_tau_max(self) -> f64 {
        match self {
            Mode::Quantum => 20.0,
            Mode::Meanfield => 1000.0,
            Mode::Classical => 50.0,
            Mode::Poincare => DEFAULT_SECTION_TAU,
            Mode::Lyapunov => DEFAULT_LYAPUNOV_HORIZON,
            Mode::Sweep => 0.0,
        }
    }

    /// Default sampling step of exported time series.
    pub fn default_dtau(self) -> f64 {
        match self {
            Mode::Quantum => 0.01,
            _ => 0.1,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = WorkbenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| WorkbenchError::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = WorkbenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(WorkbenchError::Config(format!("unknown format {other:?}"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    /// Inline reaction DSL.
    pub reaction: Option<String>,
    pub network_file: Option<PathBuf>,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub seed: Option<u64>,

    /// Particle number (quantum, sweep) or initial occupation of species 0.
    pub n: f64,
    pub cutoff: Option<u32>,
    pub tail_mass: f64,
    pub c1: f64,
    pub c2: f64,
    pub energy: f64,
    /// Initial nondimensional atom amplitude.
    pub a0: f64,
    /// Initial concentration of species 0 (classical).
    pub concentration: f64,

    pub tau_max: Option<f64>,
    pub dtau: Option<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,

    pub entropy: bool,
    /// Microcanonical window halfwidth; a fixed fraction of the populated
    /// spectral range when absent.
    pub halfwidth: Option<f64>,
    pub breakdown_threshold: f64,

    pub trajectories: usize,
    pub renorm: f64,
    pub transient: f64,
    pub grid: usize,
    pub c1_grid: Option<Vec<f64>>,

    pub sweep_n: Vec<f64>,
}

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        let tol = Tolerances::<f64>::default();
        Self {
            mode,
            reaction: None,
            network_file: None,
            out: PathBuf::from("out"),
            formats: vec![Format::Csv],
            seed: None,
            n: 100.0,
            cutoff: None,
            tail_mass: DEFAULT_TAIL_MASS,
            c1: 0.1,
            c2: 1.1,
            energy: 100.0,
            a0: 10.0,
            concentration: 1.0,
            tau_max: None,
            dtau: None,
            rel_tol: tol.rel,
            abs_tol: tol.abs,
            entropy: true,
            halfwidth: None,
            breakdown_threshold: DEFAULT_BREAKDOWN_THRESHOLD,
            trajectories: 25,
            renorm: DEFAULT_RENORM_INTERVAL,
            transient: 0.5,
            grid: DEFAULT_GRID_RESOLUTION,
            c1_grid: None,
            sweep_n: vec![20.0, 50.0, 100.0, 200.0],
        }
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max.unwrap_or_else(|| self.mode.default_tau_max())
    }

    pub fn dtau(&self) -> f64 {
        self.dtau.unwrap_or_else(|| self.mode.default_dtau())
    }

    pub fn validate(&self) -> Result<(), WorkbenchError> {
        let bad = |msg: String| Err(WorkbenchError::Config(msg));
        let positive = [
            ("n", self.n),
            ("tail_mass", self.tail_mass),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("renorm", self.renorm),
            ("breakdown_threshold", self.breakdown_threshold),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{key} must be positive and finite, got {v}"));
            }
        }
        for (key, v) in [("tau_max", self.tau_max), ("dtau", self.dtau), ("halfwidth", self.halfwidth)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return bad(format!("{key} must be positive and finite, got {v}"));
                }
            }
        }
        for (key, v) in [("c1", self.c1), ("c2", self.c2), ("energy", self.energy), ("a0", self.a0), ("concentration", self.concentration)] {
            if !v.is_finite() {
                return bad(format!("{key} must be finite"));
            }
        }
        if self.concentration < 0.0 {
            return bad("concentration must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.transient) {
            return bad(format!("transient must lie in [0, 1), got {}", self.transient));
        }
        if self.trajectories == 0 {
            return bad("trajectories must be at least 1".into());
        }
        if self.grid < 8 {
            return bad(format!("grid must be at least 8, got {}", self.grid));
        }
        if self.formats.is_empty() {
            return bad("at least one output format is required".into());
        }
        if self.reaction.is_some() && self.network_file.is_some() {
            return bad("give either reaction or network_file, not both".into());
        }
        if self.mode == Mode::Sweep && (self.sweep_n.is_empty() || self.sweep_n.iter().any(|n| !(n.is_finite() && *n > 0.0))) {
            return bad("sweep_n must be a non-empty list of positive numbers".into());
        }
        if let Some(g) = &self.c1_grid {
            if g.is_empty() || g.iter().any(|c| !c.is_finite()) {
                return bad("c1_grid must be a non-empty list of finite numbers".into());
            }
        }
        if self.mode == Mode::Lyapunov && self.renorm > self.tau_max() {
            return bad("renorm must not exceed the horizon".into());
        }
        Ok(())
    }

    /// Config text accepted by [`RunConfig::parse`].
    pub fn render(&self) -> String {
        let mut s = String::new();
        let kv = |s: &mut String, k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        s.push_str("[run]\n");
        kv(&mut s, "mode", self.mode.to_string());
        if let Some(r) = &self.reaction {
            kv(&mut s, "reaction", r.clone());
        }
        if let Some(p) = &self.network_file {
            kv(&mut s, "network_file", p.display().to_string());
        }
        kv(&mut s, "out", self.out.display().to_string());
        kv(&mut s, "format", self.formats.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(", "));
        if let Some(seed) = self.seed {
            kv(&mut s, "seed", seed.to_string());
        }
        s.push_str("\n[system]\n");
        kv(&mut s, "n", format!("{:?}", self.n));
        if let Some(c) = self.cutoff {
            kv(&mut s, "cutoff", c.to_string());
        }
        kv(&mut s, "tail_mass", format!("{:?}", self.tail_mass));
        kv(&mut s, "c1", format!("{:?}", self.c1));
        kv(&mut s, "c2", format!("{:?}", self.c2));
        kv(&mut s, "energy", format!("{:?}", self.energy));
        kv(&mut s, "a0", format!("{:?}", self.a0));
        kv(&mut s, "concentration", format!("{:?}", self.concentration));
        s.push_str("\n[time]\n");
        if let Some(t) = self.tau_max {
            kv(&mut s, "tau_max", format!("{t:?}"));
        }
        if let Some(t) = self.dtau {
            kv(&mut s, "dtau", format!("{t:?}"));
        }
        kv(&mut s, "rel_tol", format!("{:?}", self.rel_tol));
        kv(&mut s, "abs_tol", format!("{:?}", self.abs_tol));
        s.push_str("\n[quantum]\n");
        kv(&mut s, "entropy", self.entropy.to_string());
        if let Some(h) = self.halfwidth {
            kv(&mut s, "halfwidth", format!("{h:?}"));
        }
        kv(&mut s, "breakdown_threshold", format!("{:?}", self.breakdown_threshold));
        s.push_str("\n[chaos]\n");
        kv(&mut s, "trajectories", self.trajectories.to_string());
        kv(&mut s, "renorm", format!("{:?}", self.renorm));
        kv(&mut s, "transient", format!("{:?}", self.transient));
        kv(&mut s, "grid", self.grid.to_string());
        if let Some(g) = &self.c1_grid {
            kv(&mut s, "c1_grid", list(g));
        }
        s.push_str("\n[sweep]\n");
        kv(&mut s, "sweep_n", list(&self.sweep_n));
        s
    }

    /// Parses config text. `mode` is required; everything else defaults.
    pub fn parse(text: &str) -> Result<Self, WorkbenchError> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        let mut section = String::from("run");
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| WorkbenchError::Config(format!("line {line_no}: unterminated section header")))?
                    .trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(WorkbenchError::Config(format!("line {line_no}: unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| WorkbenchError::Config(format!("line {line_no}: expected key = value")))?;
            let key = key.trim();
            let home = SECTIONS.iter().find(|(_, keys)| keys.contains(&key)).map(|(s, _)| *s);
            match home {
                None => return Err(WorkbenchError::Config(format!("line {line_no}: unknown key {key:?}"))),
                Some(h) if h != section => {
                    return Err(WorkbenchError::Config(format!("line {line_no}: key {key:?} belongs in [{h}]")))
                }
                _ => {}
            }
            if entries.iter().any(|(_, k, _)| k == key) {
                return Err(WorkbenchError::Config(format!("line {line_no}: duplicate key {key:?}")));
            }
            entries.push((line_no, key.to_string(), value.trim().to_string()));
        }
        let mode = entries
            .iter()
            .find(|(_, k, _)| k == "mode")
            .ok_or_else(|| WorkbenchError::Config("missing key \"mode\"".into()))?
            .2
            .parse::<Mode>()?;
        let mut cfg = RunConfig::new(mode);
        for (line_no, key, value) in &entries {
            cfg.set(key, value)
                .map_err(|e| WorkbenchError::Config(format!("line {line_no}: {e}")))?;
        }
        Ok(cfg)
    }

    /// Sets one key from its text form (shared by files and CLI overrides).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.trim().parse().map_err(|_| format!("invalid value {v:?} for {key}"))
        }
        fn list(key: &str, v: &str) -> Result<Vec<f64>, String> {
            v.split(',').map(|x| num(key, x)).collect()
        }
        match key {
            "mode" => self.mode = value.parse().map_err(|e: WorkbenchError| e.to_string())?,
            "reaction" => self.reaction = Some(value.to_string()),
            "network_file" => self.network_file = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "format" => {
                self.formats = value
                    .split(',')
                    .map(|f| f.parse().map_err(|e: WorkbenchError| e.to_string()))
                    .collect::<Result<_, _>>()?
            }
            "seed" => self.seed = Some(num(key, value)?),
            "n" => self.n = num(key, value)?,
            "cutoff" => self.cutoff = Some(num(key, value)?),
            "tail_mass" => self.tail_mass = num(key, value)?,
            "c1" => self.c1 = num(key, value)?,
            "c2" => self.c2 = num(key, value)?,
            "energy" => self.energy = num(key, value)?,
            "a0" => self.a0 = num(key, value)?,
            "concentration" => self.concentration = num(key, value)?,
            "tau_max" => self.tau_max = Some(num(key, value)?),
            "dtau" => self.dtau = Some(num(key, value)?),
            "rel_tol" => self.rel_tol = num(key, value)?,
            "abs_tol" => self.abs_tol = num(key, value)?,
            "entropy" => self.entropy = num(key, value)?,
            "halfwidth" => self.halfwidth = Some(num(key, value)?),
            "breakdown_threshold" => self.breakdown_threshold = num(key, value)?,
            "trajectories" => self.trajectories = num(key, value)?,
            "renorm" => self.renorm = num(key, value)?,
            "transient" => self.transient = num(key, value)?,
            "grid" => self.grid = num(key, value)?,
            "c1_grid" => self.c1_grid = Some(list(key, value)?),
            "sweep_n" => self.sweep_n = list(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }
}

const SECTIONS: [(&str, &[&str]); 6] = [
    ("run", &["mode", "reaction", "network_file", "out", "format", "seed"]),
    ("system", &["n", "cutoff", "tail_mass", "c1", "c2", "energy", "a0", "concentration"]),
    ("time", &["tau_max", "dtau", "rel_tol", "abs_tol"]),
    ("quantum", &["entropy", "halfwidth", "breakdown_threshold"]),
    ("chaos", &["trajectories", "renorm", "transient", "grid", "c1_grid"]),
    ("sweep", &["sweep_n"]),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for mode in Mode::ALL {
            let cfg = RunConfig::new(mode);
            assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
        }
    }

    #[test]
    fn parse_reads_sections_and_comments() {
        let text = "# quench\n[run]\nmode = quantum\nreaction = A + A <k=0.1> A2\nseed = 7\n\n[system]\nn = 25\ncutoff = 60\n[sweep]\nsweep_n = 10, 20\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.mode, Mode::Quantum);
        assert_eq!(cfg.reaction.as_deref(), Some("A + A <k=0.1> A2"));
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.n, 25.0);
        assert_eq!(cfg.cutoff, Some(60));
        assert_eq!(cfg.sweep_n, vec![10.0, 20.0]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let cases = [
            ("[run]\nmode = quantum\nbogus = 1\n", "line 3"),
            ("[run]\nmode = quantum\nn = 5\n", "belongs in [system]"),
            ("[run]\nmode = teleport\n", "unknown mode"),
            ("[system]\nn = 5\n", "missing key"),
            ("[run]\nmode = quantum\n[system]\nn = many\n", "line 4"),
            ("[nowhere]\n", "unknown section"),
            ("[run]\nmode = quantum\nmode = sweep\n", "duplicate"),
        ];
        for (text, needle) in cases {
            let err = RunConfig::parse(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?}: {err}");
        }
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = RunConfig::new(Mode::Poincare);
        assert!(cfg.validate().is_ok());
        cfg.grid = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new(Mode::Quantum);
        cfg.dtau = Some(0.0);
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new(Mode::Sweep);
        cfg.sweep_n.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new(Mode::Classical);
        cfg.reaction = Some("A <k=1> B".into());
        cfg.network_file = Some("x.rxn".into());
        assert!(cfg.validate().is_err());
    }
}
