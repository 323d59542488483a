use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentSpec, Metric, Mode};
use super::RunError;
use crate::des::{simulate, InitialOccupancy, PolicyKind, SampledTrajectory, SimConfig};
use crate::fluid::{ideal_occupancy, integrate, tuning_report, FluidState, IntegratorOptions, ThresholdControl};
use crate::metrics::{
    detect_settling, diffusion_scaled, occupancy_error, resource_share_histogram_window, write_occupancy_error_csv,
};
use crate::oracle::{coupled_run, ctmc_generator, ctmc_stationary, write_stationary_csv};

/// Files written and run facts, in the order they are reported.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
    pub files: Vec<PathBuf>,
}

impl Manifest {
    fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(&format!("{k}={v}\n"));
        }
        for (i, f) in self.files.iter().enumerate() {
            s.push_str(&format!("file.{i}={}\n", f.display()));
        }
        s
    }
}

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const RESOLVED_SPEC_FILE: &str = "resolved.toml";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, RunError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Simulator config of one replication under one policy.
pub fn sim_config(spec: &ExperimentSpec, policy: &PolicyKind, replication: u32) -> SimConfig {
    let s = &spec.system;
    SimConfig {
        n: s.n,
        load: spec.schedule.clone(),
        mu: s.mu,
        policy: policy.clone(),
        threshold_cap: s.threshold_cap,
        capacity: s.capacity,
        initial: s.initial.clone(),
        horizon: s.horizon,
        sample_dt: s.sample_dt,
        seed: spec.replication_seed(replication),
        streams: Default::default(),
    }
}

/// Runs the experiment, writing every output under `spec.output.dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Manifest, RunError> {
    let dir = &spec.output.dir;
    std::fs::create_dir_all(dir)?;
    let mut manifest = Manifest::default();
    manifest.set(
        "mode",
        match spec.mode {
            Mode::Des => "des",
            Mode::Fluid => "fluid",
            Mode::Coupled => "coupled",
            Mode::Ctmc => "ctmc",
            Mode::Tuning => "tuning",
        },
    );
    manifest.set("preset", spec.preset.as_deref().unwrap_or(""));
    manifest.set("replications", spec.replications);
    manifest.set("seed", spec.seed);
    manifest.set("spec", RESOLVED_SPEC_FILE);
    std::fs::write(dir.join(RESOLVED_SPEC_FILE), spec.to_toml())?;

    let files = match spec.mode {
        Mode::Des => run_des(spec, &mut manifest)?,
        Mode::Fluid => run_fluid(spec, &mut manifest)?,
        Mode::Coupled => run_coupled(spec, &mut manifest)?,
        Mode::Ctmc => run_ctmc(spec, &mut manifest)?,
        Mode::Tuning => run_tuning(spec)?,
    };
    manifest.files.push(PathBuf::from(RESOLVED_SPEC_FILE));
    manifest.files.extend(files.into_iter().map(PathBuf::from));
    manifest.files.push(PathBuf::from(MANIFEST_FILE));
    std::fs::write(dir.join(MANIFEST_FILE), manifest.render())?;
    Ok(manifest)
}

struct DesOutput {
    files: Vec<String>,
    settling: Option<(f64, usize)>,
    has_threshold: bool,
}

fn run_des(spec: &ExperimentSpec, manifest: &mut Manifest) -> Result<Vec<String>, RunError> {
    for r in 0..spec.replications {
        manifest.set(format!("seed.{r}"), spec.replication_seed(r));
    }
    let jobs: Vec<(usize, u32)> = (0..spec.policies.len())
        .flat_map(|p| (0..spec.replications).map(move |r| (p, r)))
        .collect();
    let results: Vec<DesOutput> = jobs
        .par_iter()
        .map(|&(p, r)| des_replication(spec, &spec.policies[p], r))
        .collect::<Result<_, _>>()?;

    let mut files = Vec::new();
    let wants_settling = spec.output.metrics.contains(&Metric::Settling);
    let mut settling = wants_settling.then(Vec::new);
    for (&(p, r), out) in jobs.iter().zip(results) {
        files.extend(out.files);
        if let (Some(rows), true) = (settling.as_mut(), out.has_threshold) {
            rows.push((spec.policies[p].name(), r, out.settling));
        }
    }
    if let Some(rows) = settling {
        let name = "settling.csv";
        let mut w = csv::Writer::from_writer(create(&spec.output.dir, name)?);
        w.write_record(["policy", "replication", "t_eq", "l_eq"])?;
        for (policy, r, s) in rows {
            let (t, l) = s.map_or((String::new(), String::new()), |(t, l)| (t.to_string(), l.to_string()));
            w.write_record([policy.to_string(), r.to_string(), t, l])?;
        }
        w.flush()?;
        files.push(name.into());
    }
    Ok(files)
}

fn des_replication(spec: &ExperimentSpec, policy: &PolicyKind, r: u32) -> Result<DesOutput, RunError> {
    let traj = simulate(sim_config(spec, policy, r))?;
    let dir = &spec.output.dir;
    let stem = format!("{}_rep{r:03}", policy.name());
    let mut files = Vec::new();
    let name = format!("{stem}.csv");
    traj.write_csv(create(dir, &name)?)?;
    files.push(name);
    let name = format!("{stem}.counters");
    traj.write_counters(create(dir, &name)?)?;
    files.push(name);
    let has_threshold = traj.initial_threshold.is_some();
    if has_threshold {
        let name = format!("{stem}_threshold.csv");
        traj.write_threshold_events(create(dir, &name)?)?;
        files.push(name);
    }
    for m in &spec.output.metrics {
        match m {
            Metric::Share => {
                let name = format!("{stem}_share.csv");
                let h = resource_share_histogram_window(&traj, spec.output.burn_in, traj.horizon)?;
                h.write_csv(create(dir, &name)?)?;
                files.push(name);
            }
            Metric::Error => {
                let name = format!("{stem}_error.csv");
                write_occupancy_error_csv(&occupancy_error(&traj, &spec.schedule), create(dir, &name)?)?;
                files.push(name);
            }
            Metric::Scaled => {
                let name = format!("{stem}_scaled.csv");
                diffusion_scaled(&traj, spec.schedule.rate_at(0.0))?.write_csv(create(dir, &name)?)?;
                files.push(name);
            }
            Metric::Settling => {}
        }
    }
    Ok(DesOutput { files, settling: settling_of(&traj, spec.output.settle_quiet), has_threshold })
}

fn settling_of(traj: &SampledTrajectory, quiet: f64) -> Option<(f64, usize)> {
    detect_settling(&traj.threshold_events, traj.initial_threshold?, traj.horizon, quiet)
}

/// Initial fluid state for the configured start.
pub fn fluid_initial(spec: &ExperimentSpec) -> Result<FluidState, RunError> {
    let lambda0 = spec.schedule.rate_at(0.0) / spec.system.mu;
    Ok(match &spec.system.initial {
        InitialOccupancy::Empty => FluidState::empty(1),
        InitialOccupancy::Uniform { level } => FluidState::uniform(*level, level + 1)?,
        InitialOccupancy::Ideal => ideal_occupancy(lambda0, lambda0.floor() as usize + 2)?,
        InitialOccupancy::Counts { counts } => {
            let n = spec.system.n as f64;
            let mut q = vec![1.0];
            q.extend(counts.iter().map(|&c| c as f64 / n));
            FluidState::new(q)?
        }
    })
}

fn run_fluid(spec: &ExperimentSpec, manifest: &mut Manifest) -> Result<Vec<String>, RunError> {
    let q0 = fluid_initial(spec)?;
    let control = match spec.policies[0] {
        PolicyKind::ThresholdStatic { threshold } => ThresholdControl::Static(threshold),
        PolicyKind::ThresholdAdaptive { initial, alpha } => {
            ThresholdControl::Adaptive { initial, alpha, cap: spec.system.threshold_cap }
        }
        ref other => {
            return Err(RunError::config("policy.kind", format!("fluid mode needs a threshold policy, got `{}`", other.name())))
        }
    };
    let opts = IntegratorOptions { sample_dt: spec.system.sample_dt, ..Default::default() };
    let traj = integrate(&q0, control, &spec.schedule, spec.system.mu, spec.system.horizon, &opts)?;
    let dir = &spec.output.dir;
    traj.write_csv(create(dir, "fluid.csv")?)?;
    traj.write_switches_csv(create(dir, "switches.csv")?)?;
    manifest.set("fluid.updates", traj.update_count());
    if let Some((t, l)) = traj.settled {
        manifest.set("fluid.t_eq", t);
        manifest.set("fluid.l_eq", l);
    }
    Ok(vec!["fluid.csv".into(), "switches.csv".into()])
}

fn run_coupled(spec: &ExperimentSpec, manifest: &mut Manifest) -> Result<Vec<String>, RunError> {
    let lambda = spec.schedule.rate_at(0.0);
    let runs: Vec<_> = (0..spec.replications)
        .into_par_iter()
        .map(|r| coupled_run(spec.system.n, lambda, spec.system.horizon, spec.replication_seed(r)).map(|p| (r, p)))
        .collect::<Result<_, _>>()?;
    let mut files = Vec::new();
    let mut mismatches = 0;
    for (r, p) in runs {
        manifest.set(format!("seed.{r}"), spec.replication_seed(r));
        mismatches += p.mismatches();
        let name = format!("coupled_rep{r:03}.csv");
        let mut w = csv::Writer::from_writer(create(&spec.output.dir, &name)?);
        w.write_record(["t", "x1_low", "x1_top", "x2_low", "x2_top"])?;
        for k in 0..p.t.len() {
            w.write_record([
                p.t[k].to_string(),
                p.x1[k].0.to_string(),
                p.x1[k].1.to_string(),
                p.x2[k].0.to_string(),
                p.x2[k].1.to_string(),
            ])?;
        }
        w.flush()?;
        files.push(name);
    }
    manifest.set("coupled.mismatches", mismatches);
    Ok(files)
}

fn run_ctmc(spec: &ExperimentSpec, manifest: &mut Manifest) -> Result<Vec<String>, RunError> {
    let capacity = spec.system.capacity.expect("validated");
    let lambda = spec.schedule.rate_at(0.0);
    let mut files = Vec::new();
    for policy in &spec.policies {
        let g = ctmc_generator(spec.system.n, capacity, lambda, spec.system.mu, policy)?;
        let pi = ctmc_stationary(&g)?;
        let name = format!("stationary_{}.csv", policy.name());
        write_stationary_csv(&g, &pi, create(&spec.output.dir, &name)?)?;
        manifest.set(format!("ctmc.{}.states", policy.name()), g.states.len());
        files.push(name);
    }
    Ok(files)
}

fn initial_mass(spec: &ExperimentSpec) -> f64 {
    match &spec.system.initial {
        InitialOccupancy::Empty => 0.0,
        InitialOccupancy::Uniform { level } => *level as f64,
        InitialOccupancy::Ideal => spec.schedule.rate_at(0.0) / spec.system.mu,
        InitialOccupancy::Counts { counts } => counts.iter().sum::<u64>() as f64 / spec.system.n as f64,
    }
}

fn run_tuning(spec: &ExperimentSpec) -> Result<Vec<String>, RunError> {
    let alpha = spec
        .policies
        .iter()
        .find_map(|p| match p {
            PolicyKind::ThresholdAdaptive { alpha, .. } => Some(*alpha),
            _ => None,
        })
        .ok_or_else(|| RunError::missing("policy.alpha"))?;
    let mu = spec.system.mu;
    let u0 = initial_mass(spec);
    let mut w = csv::Writer::from_writer(create(&spec.output.dir, "tuning.csv")?);
    w.write_record([
        "start",
        "lambda",
        "alpha",
        "lambda_max",
        "alpha_min",
        "optimal_condition_holds",
        "l_eq_lower",
        "l_eq_upper",
        "t_eq_bound",
    ])?;
    for seg in spec.schedule.segments() {
        let r = tuning_report(seg.lambda / mu, alpha, spec.schedule.lambda_max() / mu, u0);
        w.write_record([
            seg.start.to_string(),
            r.lambda.to_string(),
            r.alpha.to_string(),
            r.lambda_max.to_string(),
            r.alpha_min.to_string(),
            r.optimal_condition_holds.to_string(),
            r.l_eq_lower.to_string(),
            r.l_eq_upper.to_string(),
            r.t_eq_bound.map_or(String::new(), |t| t.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(vec!["tuning.csv".into()])
}

/// Writes `manifest` lines to `out`; used by the CLI for a summary.
pub fn print_manifest<W: Write>(manifest: &Manifest, mut out: W) -> std::io::Result<()> {
    out.write_all(manifest.render().as_bytes())
}
