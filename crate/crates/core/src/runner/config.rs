use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::presets::preset;
use super::RunError;
use crate::des::{InitialOccupancy, PolicyKind};
use crate::schedule::LoadSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Des,
    Fluid,
    Coupled,
    Ctmc,
    Tuning,
}

/// Derived outputs written next to the trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Resource-share histogram after burn-in.
    Share,
    /// Distance to the ideal occupancy and top occupied level.
    Error,
    /// Diffusion-scaled paths.
    Scaled,
    /// Settling time and value of the threshold.
    Settling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub n: u64,
    pub mu: f64,
    pub horizon: f64,
    pub sample_dt: f64,
    pub initial: InitialOccupancy,
    pub capacity: Option<usize>,
    pub threshold_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub burn_in: f64,
    pub metrics: Vec<Metric>,
    pub settle_quiet: f64,
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub preset: Option<String>,
    pub replications: u32,
    pub seed: u64,
    pub system: SystemSpec,
    pub policies: Vec<PolicyKind>,
    pub schedule: LoadSchedule,
    pub output: OutputSpec,
}

impl ExperimentSpec {
    /// Seed of replication `r`.
    pub fn replication_seed(&self, r: u32) -> u64 {
        self.seed.wrapping_add(r as u64)
    }

    /// The spec as a config document that parses back to the same spec.
    pub fn to_toml(&self) -> String {
        let file = ConfigFile {
            experiment: ExperimentSection {
                mode: Some(self.mode),
                preset: None,
                replications: Some(self.replications),
                seed: Some(self.seed),
            },
            system: Some(SystemSection {
                n: Some(self.system.n),
                mu: Some(self.system.mu),
                horizon: Some(self.system.horizon),
                sample_dt: Some(self.system.sample_dt),
                initial: Some(
                    match &self.system.initial {
                        InitialOccupancy::Empty => "empty",
                        InitialOccupancy::Uniform { .. } => "uniform",
                        InitialOccupancy::Ideal => "ideal",
                        InitialOccupancy::Counts { .. } => "counts",
                    }
                    .to_string(),
                ),
                initial_level: match self.system.initial {
                    InitialOccupancy::Uniform { level } => Some(level),
                    _ => None,
                },
                initial_counts: match &self.system.initial {
                    InitialOccupancy::Counts { counts } => Some(counts.clone()),
                    _ => None,
                },
                capacity: self.system.capacity,
                threshold_cap: self.system.threshold_cap,
            }),
            policy: Some(OneOrMany::Many(self.policies.iter().map(PolicySection::from_kind).collect())),
            schedule: Some(ScheduleSection {
                lambda: None,
                segments: Some(self.schedule.segments().iter().map(|s| (s.start, s.lambda)).collect()),
                lambda_max: Some(self.schedule.lambda_max()),
            }),
            output: Some(OutputSection {
                dir: Some(self.output.dir.clone()),
                burn_in: Some(self.output.burn_in),
                metrics: Some(self.output.metrics.clone()),
                settle_quiet: Some(self.output.settle_quiet),
            }),
        };
        toml::to_string(&file).expect("spec serializes")
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub system: Option<SystemSection>,
    pub policy: Option<OneOrMany<PolicySection>>,
    pub schedule: Option<ScheduleSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub mode: Option<Mode>,
    pub preset: Option<String>,
    pub replications: Option<u32>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n: Option<u64>,
    pub mu: Option<f64>,
    pub horizon: Option<f64>,
    pub sample_dt: Option<f64>,
    /// `empty`, `ideal`, `uniform` (with `initial_level`) or `counts` (with `initial_counts`).
    pub initial: Option<String>,
    pub initial_level: Option<usize>,
    pub initial_counts: Option<Vec<u64>>,
    pub capacity: Option<usize>,
    pub threshold_cap: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    /// `threshold_static`, `threshold_adaptive`, `jsq`, `random` or `power_of_d`.
    pub kind: String,
    pub threshold: Option<usize>,
    pub alpha: Option<f64>,
    pub d: Option<usize>,
}

impl PolicySection {
    fn from_kind(p: &PolicyKind) -> Self {
        let (threshold, alpha, d) = match *p {
            PolicyKind::ThresholdStatic { threshold } => (Some(threshold), None, None),
            PolicyKind::ThresholdAdaptive { initial, alpha } => (Some(initial), Some(alpha), None),
            PolicyKind::PowerOfD { d } => (None, None, Some(d)),
            PolicyKind::Jsq | PolicyKind::Random => (None, None, None),
        };
        Self { kind: p.name().to_string(), threshold, alpha, d }
    }

    fn resolve(&self, key: &str) -> Result<PolicyKind, RunError> {
        let unused = |field: &str, value_set: bool| -> Result<(), RunError> {
            if value_set {
                Err(RunError::config(format!("{key}.{field}"), format!("not used by policy `{}`", self.kind)))
            } else {
                Ok(())
            }
        };
        let policy = match self.kind.as_str() {
            "threshold_static" => {
                unused("alpha", self.alpha.is_some())?;
                unused("d", self.d.is_some())?;
                PolicyKind::ThresholdStatic {
                    threshold: self.threshold.ok_or_else(|| RunError::missing(format!("{key}.threshold")))?,
                }
            }
            "threshold_adaptive" => {
                unused("d", self.d.is_some())?;
                let alpha = self.alpha.ok_or_else(|| RunError::missing(format!("{key}.alpha")))?;
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(RunError::config(format!("{key}.alpha"), format!("must lie in (0, 1), got {alpha}")));
                }
                PolicyKind::ThresholdAdaptive { initial: self.threshold.unwrap_or(0), alpha }
            }
            "jsq" | "random" => {
                unused("threshold", self.threshold.is_some())?;
                unused("alpha", self.alpha.is_some())?;
                unused("d", self.d.is_some())?;
                if self.kind == "jsq" {
                    PolicyKind::Jsq
                } else {
                    PolicyKind::Random
                }
            }
            "power_of_d" => {
                unused("threshold", self.threshold.is_some())?;
                unused("alpha", self.alpha.is_some())?;
                let d = self.d.unwrap_or(2);
                if d == 0 {
                    return Err(RunError::config(format!("{key}.d"), "must be at least 1".into()));
                }
                PolicyKind::PowerOfD { d }
            }
            other => return Err(RunError::config(format!("{key}.kind"), format!("unknown policy `{other}`"))),
        };
        Ok(policy)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// Constant load.
    pub lambda: Option<f64>,
    /// `(start, λ)` pairs, starting at 0.
    pub segments: Option<Vec<(f64, f64)>>,
    pub lambda_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub burn_in: Option<f64>,
    pub metrics: Option<Vec<Metric>>,
    pub settle_quiet: Option<f64>,
}

pub const DEFAULT_MU: f64 = 1.0;
pub const DEFAULT_SAMPLE_DT: f64 = 0.1;
pub const DEFAULT_OUTPUT_DIR: &str = "out";

/// Parses and validates a config document. A preset supplies mode, system,
/// policy and schedule; conflicting values in the document are replaced and
/// reported through `notices`.
pub fn parse_config(text: &str) -> Result<(ExperimentSpec, Vec<String>), RunError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| RunError::Parse(e.message().to_string()))?;
    resolve(file)
}

pub fn resolve(file: ConfigFile) -> Result<(ExperimentSpec, Vec<String>), RunError> {
    let mut notices = Vec::new();
    let file = match &file.experiment.preset {
        Some(name) => {
            let base = preset(name).ok_or_else(|| RunError::config("experiment.preset", format!("unknown preset `{name}`")))?;
            merge_preset(base, file, &mut notices)
        }
        None => file,
    };
    let spec = resolve_plain(&file)?;
    Ok((spec, notices))
}

/// Preset fields win over the document; run settings (seed, replications,
/// output) come from the document when present.
fn merge_preset(mut base: ConfigFile, user: ConfigFile, notices: &mut Vec<String>) -> ConfigFile {
    let name = user.experiment.preset.clone().unwrap_or_default();
    let mut note = |key: &str| notices.push(format!("preset `{name}` overrides {key}"));
    if user.experiment.mode.is_some_and(|m| Some(m) != base.experiment.mode) {
        note("experiment.mode");
    }
    if user.system.is_some() {
        note("system");
    }
    if user.policy.is_some() {
        note("policy");
    }
    if user.schedule.is_some() {
        note("schedule");
    }
    base.experiment.preset = user.experiment.preset;
    if user.experiment.seed.is_some() {
        base.experiment.seed = user.experiment.seed;
    }
    if user.experiment.replications.is_some() {
        base.experiment.replications = user.experiment.replications;
    }
    if let Some(out) = user.output {
        let b = base.output.get_or_insert_with(Default::default);
        b.dir = out.dir.or(b.dir.take());
        b.burn_in = out.burn_in.or(b.burn_in);
        b.metrics = out.metrics.or(b.metrics.take());
        b.settle_quiet = out.settle_quiet.or(b.settle_quiet);
    }
    base
}

fn positive(key: &str, v: f64) -> Result<f64, RunError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(RunError::config(key, format!("must be finite and > 0, got {v}")))
    }
}

fn resolve_plain(file: &ConfigFile) -> Result<ExperimentSpec, RunError> {
    let e = &file.experiment;
    let mode = e.mode.unwrap_or(Mode::Des);
    let replications = e.replications.unwrap_or(1);
    if replications == 0 {
        return Err(RunError::config("experiment.replications", "must be at least 1".into()));
    }
    let seed = e.seed.unwrap_or(0);

    let empty_system = SystemSection::default();
    let s = file.system.as_ref().unwrap_or(&empty_system);
    let needs_n = !matches!(mode, Mode::Fluid | Mode::Tuning);
    let n = match (s.n, needs_n) {
        (Some(0), _) => return Err(RunError::config("system.n", "must be at least 1".into())),
        (Some(n), _) => n,
        (None, true) => return Err(RunError::missing("system.n")),
        (None, false) => 1,
    };
    let mu = positive("system.mu", s.mu.unwrap_or(DEFAULT_MU))?;
    let needs_horizon = !matches!(mode, Mode::Ctmc | Mode::Tuning);
    let horizon = match (s.horizon, needs_horizon) {
        (Some(h), _) if !(h >= 0.0 && h.is_finite()) => {
            return Err(RunError::config("system.horizon", format!("must be finite and >= 0, got {h}")))
        }
        (Some(h), _) => h,
        (None, true) => return Err(RunError::missing("system.horizon")),
        (None, false) => 0.0,
    };
    let sample_dt = positive("system.sample_dt", s.sample_dt.unwrap_or(DEFAULT_SAMPLE_DT))?;
    let initial = match s.initial.as_deref().unwrap_or("empty") {
        "empty" => InitialOccupancy::Empty,
        "ideal" => InitialOccupancy::Ideal,
        "uniform" => InitialOccupancy::Uniform {
            level: s.initial_level.ok_or_else(|| RunError::missing("system.initial_level"))?,
        },
        "counts" => {
            let counts = s.initial_counts.clone().ok_or_else(|| RunError::missing("system.initial_counts"))?;
            if counts.windows(2).any(|w| w[1] > w[0]) || counts.first().is_some_and(|&c| c > n) {
                return Err(RunError::config(
                    "system.initial_counts",
                    "must be non-increasing and at most system.n".into(),
                ));
            }
            InitialOccupancy::Counts { counts }
        }
        other => return Err(RunError::config("system.initial", format!("unknown initial state `{other}`"))),
    };
    if s.initial_level.is_some() && !matches!(initial, InitialOccupancy::Uniform { .. }) {
        return Err(RunError::config("system.initial_level", "only used with initial = \"uniform\"".into()));
    }
    if s.initial_counts.is_some() && !matches!(initial, InitialOccupancy::Counts { .. }) {
        return Err(RunError::config("system.initial_counts", "only used with initial = \"counts\"".into()));
    }
    if s.capacity == Some(0) {
        return Err(RunError::config("system.capacity", "must be at least 1".into()));
    }
    if mode == Mode::Ctmc && s.capacity.is_none() {
        return Err(RunError::missing("system.capacity"));
    }

    let policies = match &file.policy {
        None if matches!(mode, Mode::Coupled) => vec![],
        None => return Err(RunError::missing("policy.kind")),
        Some(OneOrMany::One(p)) => vec![p.resolve("policy")?],
        Some(OneOrMany::Many(ps)) => {
            if ps.is_empty() {
                return Err(RunError::missing("policy.kind"));
            }
            ps.iter().enumerate().map(|(i, p)| p.resolve(&format!("policy[{i}]"))).collect::<Result<_, _>>()?
        }
    };
    if let Some(cap) = s.threshold_cap {
        for p in &policies {
            if p.initial_threshold().is_some_and(|l| l > cap) {
                return Err(RunError::config("policy.threshold", format!("exceeds system.threshold_cap = {cap}")));
            }
        }
    }

    let sch = file.schedule.as_ref().ok_or_else(|| RunError::missing("schedule.lambda"))?;
    let schedule = match (sch.lambda, &sch.segments) {
        (Some(_), Some(_)) => {
            return Err(RunError::config("schedule.segments", "give either lambda or segments, not both".into()))
        }
        (Some(l), None) => LoadSchedule::new(vec![crate::schedule::Segment { start: 0.0, lambda: l }], sch.lambda_max)
            .map_err(|e| RunError::config("schedule.lambda", e.to_string()))?,
        (None, Some(seg)) => LoadSchedule::from_pairs(seg, sch.lambda_max)
            .map_err(|e| RunError::config("schedule.segments", e.to_string()))?,
        (None, None) => return Err(RunError::missing("schedule.lambda")),
    };
    if matches!(mode, Mode::Ctmc | Mode::Coupled) && !schedule.is_constant() {
        return Err(RunError::config("schedule.segments", "this mode needs a constant load".into()));
    }
    if mode == Mode::Coupled && schedule.rate_at(0.0).fract() == 0.0 {
        return Err(RunError::config("schedule.lambda", "coupling needs a non-integer load".into()));
    }
    if mode == Mode::Fluid && policies.len() != 1 {
        return Err(RunError::config("policy", "fluid mode takes exactly one policy".into()));
    }

    let out = file.output.clone().unwrap_or_default();
    let burn_in = out.burn_in.unwrap_or(0.0);
    if !(burn_in >= 0.0) {
        return Err(RunError::config("output.burn_in", format!("must be >= 0, got {burn_in}")));
    }
    let settle_quiet = positive("output.settle_quiet", out.settle_quiet.unwrap_or(crate::metrics::DEFAULT_SETTLING_QUIET))?;

    Ok(ExperimentSpec {
        mode,
        preset: e.preset.clone(),
        replications,
        seed,
        system: SystemSpec {
            n,
            mu,
            horizon,
            sample_dt,
            initial,
            capacity: s.capacity,
            threshold_cap: s.threshold_cap,
        },
        policies,
        schedule,
        output: OutputSpec {
            dir: out.dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            burn_in,
            metrics: out.metrics.unwrap_or_default(),
            settle_quiet,
        },
    })
}
