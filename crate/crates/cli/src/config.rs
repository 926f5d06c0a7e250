//! JSON experiment configs.
//!
//! `y0` files are resolved against the directory holding the config file, `output_dir`
//! against the working directory and `emit_bad_set` against the output directory.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use nullctl_core::dynamics::ModeState;
use nullctl_core::spectral::{ModelKind, Region, SpectralModel, SubdomainMask};
use nullctl_core::system::CoupledSystem;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    name: Option<String>,
    system: RawSystem,
    model: RawModel,
    omegas: Vec<Vec<RawRegion>>,
    #[serde(default)]
    experiment: Option<Experiment>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawSystem {
    n: usize,
    m: usize,
    D: Vec<Vec<f64>>,
    Q: Vec<Vec<f64>>,
    R: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(rename = "type")]
    kind: RawKind,
    num_modes: usize,
    #[serde(rename = "L", default)]
    length: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawKind {
    #[serde(rename = "dirichlet_1d")]
    Dirichlet1d,
    #[serde(rename = "dirichlet_2d")]
    Dirichlet2d,
    TorusStokes,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Initial data: inline entries or a CSV file with columns `mode,equation,value`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Y0Spec {
    File(PathBuf),
    Inline(Vec<Y0Entry>),
}

/// One coefficient of `y0`; `mode` and `equation` count from 1.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Y0Entry {
    pub mode: usize,
    pub equation: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    KalmanCheck {
        #[serde(default)]
        emit_bad_set: Option<PathBuf>,
    },
    DissipationCheck {
        gamma: f64,
        #[serde(default)]
        trials: Option<usize>,
        #[serde(default)]
        times: Option<Vec<f64>>,
    },
    Synthesize {
        gamma: f64,
        tau: f64,
        #[serde(default)]
        gamma_sim: Option<f64>,
        #[serde(default)]
        y0: Option<Y0Spec>,
    },
    ObservabilitySweep {
        gammas: Vec<f64>,
        #[serde(default)]
        tau: Option<f64>,
    },
    LrRun {
        #[serde(rename = "T")]
        horizon: f64,
        #[serde(rename = "M", default)]
        m: Option<f64>,
        #[serde(default)]
        adapt: bool,
        #[serde(default)]
        gamma_sim: Option<f64>,
        #[serde(default)]
        y0: Option<Y0Spec>,
    },
    CostSweep {
        #[serde(rename = "T_list")]
        horizons: Vec<f64>,
        #[serde(rename = "M", default)]
        m: Option<f64>,
        #[serde(default)]
        adapt: bool,
        #[serde(default)]
        gamma_sim: Option<f64>,
        #[serde(default)]
        y0: Option<Y0Spec>,
    },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::KalmanCheck { .. } => "kalman-check",
            Experiment::DissipationCheck { .. } => "dissipation-check",
            Experiment::Synthesize { .. } => "synthesize",
            Experiment::ObservabilitySweep { .. } => "observability-sweep",
            Experiment::LrRun { .. } => "lr-run",
            Experiment::CostSweep { .. } => "cost-sweep",
        }
    }
}

/// A parsed and validated config.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub system: CoupledSystem,
    pub model: SpectralModel,
    pub masks: Vec<SubdomainMask>,
    pub experiment: Option<Experiment>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn matrix(path: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != nrows {
        return Err(invalid(path, format!("expected {nrows} rows, got {}", rows.len())));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(invalid(&format!("{path}[{i}]"), format!("expected {ncols} entries, got {}", row.len())));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses config text; relative paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.inner()))
    })?;

    let s = &raw.system;
    let d = matrix("system.D", &s.D, s.n, s.n)?;
    let q = matrix("system.Q", &s.Q, s.n, s.n)?;
    let r = matrix("system.R", &s.R, s.n, s.m)?;
    let system = CoupledSystem::new(s.n, s.m, d, q, r).map_err(|e| invalid("system", e))?;

    if raw.omegas.len() != s.m {
        return Err(invalid(
            "omegas",
            format!("expected one region list per control channel (m = {}), got {}", s.m, raw.omegas.len()),
        ));
    }
    let (kind, dim, default_length) = match raw.model.kind {
        RawKind::Dirichlet1d => (ModelKind::DirichletInterval, 1, PI),
        RawKind::Dirichlet2d => (ModelKind::DirichletSquare, 2, PI),
        RawKind::TorusStokes => (ModelKind::TorusStokes, 2, 2.0 * PI),
    };
    let length = raw.model.length.unwrap_or(default_length);
    if !(length.is_finite() && length > 0.0) {
        return Err(invalid("model.L", "must be positive"));
    }
    if raw.model.num_modes == 0 {
        return Err(invalid("model.num_modes", "must be positive"));
    }
    let mut regions = Vec::with_capacity(s.m);
    for (j, list) in raw.omegas.iter().enumerate() {
        if list.is_empty() {
            return Err(invalid(&format!("omegas[{j}]"), "needs at least one region"));
        }
        let mut channel = Vec::with_capacity(list.len());
        for (i, reg) in list.iter().enumerate() {
            let at = format!("omegas[{j}][{i}]");
            for (name, v) in [("lo", &reg.lo), ("hi", &reg.hi)] {
                if v.len() != dim {
                    return Err(invalid(&format!("{at}.{name}"), format!("expected {dim} coordinates, got {}", v.len())));
                }
            }
            for a in 0..dim {
                let (lo, hi) = (reg.lo[a], reg.hi[a]);
                if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi && hi <= length) {
                    return Err(invalid(&at, format!("need 0 <= lo < hi <= L on axis {a}, got [{lo}, {hi}]")));
                }
            }
            channel.push(Region { lo: reg.lo.clone(), hi: reg.hi.clone() });
        }
        regions.push(channel);
    }
    let all: Vec<Region> = regions.iter().flatten().cloned().collect();
    let model = SpectralModel::build(kind, raw.model.num_modes, length, &all).map_err(|e| invalid("model", e))?;
    let masks = regions
        .iter()
        .enumerate()
        .map(|(j, list)| SubdomainMask::from_regions(&model, j, list).map_err(|e| invalid(&format!("omegas[{j}]"), e)))
        .collect::<Result<Vec<_>, _>>()?;

    let cfg = ExperimentConfig {
        name: raw.name,
        system,
        model,
        masks,
        experiment: raw.experiment,
        output_dir: raw.output_dir,
        seed: raw.seed,
        base_dir: base_dir.to_path_buf(),
    };
    if let Some(exp) = &cfg.experiment {
        validate_experiment(&cfg, exp)?;
    }
    Ok(cfg)
}

fn validate_experiment(cfg: &ExperimentConfig, exp: &Experiment) -> Result<(), CliError> {
    let y0 = match exp {
        Experiment::Synthesize { y0, .. } | Experiment::LrRun { y0, .. } | Experiment::CostSweep { y0, .. } => y0,
        Experiment::DissipationCheck { times: Some(times), .. } => {
            if let Some(t) = times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                return Err(invalid("experiment.times", format!("{t} is outside [0, 1]")));
            }
            &None
        }
        _ => &None,
    };
    if let Some(spec) = y0 {
        cfg.initial_state(Some(spec)).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("experiment.y0: {msg}")),
            CliError::Io { path, source } => CliError::Config(format!("experiment.y0: {}: {source}", path.display())),
            other => other,
        })?;
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    /// `y0` from a spec; without one, the first eigenfunction with every equation set to 1.
    pub fn initial_state(&self, spec: Option<&Y0Spec>) -> Result<ModeState, CliError> {
        let entries = match spec {
            None => (1..=self.system.n()).map(|i| Y0Entry { mode: 1, equation: i, value: 1.0 }).collect(),
            Some(Y0Spec::Inline(v)) => v.clone(),
            Some(Y0Spec::File(p)) => read_y0_csv(&self.resolve(p))?,
        };
        build_state(self, &entries)
    }
}

pub fn read_y0_csv(path: &Path) -> Result<Vec<Y0Entry>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<Y0Entry>().enumerate() {
        let e = rec.map_err(|e| CliError::Config(format!("{} row {}: {e}", path.display(), i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

fn build_state(cfg: &ExperimentConfig, entries: &[Y0Entry]) -> Result<ModeState, CliError> {
    let n = cfg.system.n();
    let num_modes = cfg.model.len();
    let mut modes: Vec<usize> = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        if e.mode == 0 || e.mode > num_modes {
            return Err(CliError::Config(format!("entry {}: mode {} outside 1..={num_modes}", i + 1, e.mode)));
        }
        if e.equation == 0 || e.equation > n {
            return Err(CliError::Config(format!("entry {}: equation {} outside 1..={n}", i + 1, e.equation)));
        }
        if !e.value.is_finite() {
            return Err(CliError::Config(format!("entry {}: value is not finite", i + 1)));
        }
        if !modes.contains(&(e.mode - 1)) {
            modes.push(e.mode - 1);
        }
    }
    modes.sort_unstable();
    let mut coeffs = DMatrix::zeros(n, modes.len());
    let mut seen = std::collections::HashSet::new();
    for e in entries {
        if !seen.insert((e.mode, e.equation)) {
            return Err(CliError::Config(format!("mode {} equation {} given twice", e.mode, e.equation)));
        }
        let col = modes.binary_search(&(e.mode - 1)).expect("mode collected above");
        coeffs[(e.equation - 1, col)] = e.value;
    }
    Ok(ModeState::new(modes, coeffs, 0.0)?)
}
