//! Built-in scenarios mirroring the published figures.

use super::config::{
    ConfigFile, ExperimentSection, Metric, Mode, OneOrMany, OutputSection, PolicySection, ScheduleSection,
    SystemSection,
};

pub const PRESET_NAMES: [&str; 6] = ["fig3-left", "fig3-right", "fig5-left", "fig5-right", "fig7", "fig8"];

/// Load pattern of the time-varying scenario. This is a reconstruction: the
/// exact curve was never published. It has abrupt jumps at t = 0, 20 and 30,
/// fast small fluctuations on [2, 15] that keep ⌊λ⌋ fixed, and a slow drift
/// on [33, 45] that changes ⌊λ⌋ several times. λ_max = 10.
pub fn time_varying_segments() -> Vec<(f64, f64)> {
    let mut seg = vec![(0.0, 5.4)];
    let wiggle = [5.3, 5.45, 5.35, 5.4];
    let mut t = 2.0;
    let mut k = 0;
    while t < 15.0 {
        seg.push((t, wiggle[k % wiggle.len()]));
        t += 0.5;
        k += 1;
    }
    seg.extend([
        (15.0, 5.4),
        (20.0, 1.5),
        (30.0, 4.45),
        (33.0, 4.4),
        (35.0, 4.3),
        (37.0, 3.6),
        (39.0, 3.4),
        (41.0, 3.3),
        (43.0, 2.6),
        (45.0, 2.5),
    ]);
    seg
}

/// Jump epochs of [`time_varying_segments`] where the load changes drastically.
pub const TIME_VARYING_JUMPS: [f64; 3] = [0.0, 20.0, 30.0];

fn adaptive(alpha: f64) -> PolicySection {
    PolicySection { kind: "threshold_adaptive".into(), threshold: Some(0), alpha: Some(alpha), d: None }
}

fn simple(kind: &str, d: Option<usize>) -> PolicySection {
    PolicySection { kind: kind.into(), threshold: None, alpha: None, d }
}

fn des(
    n: u64,
    horizon: f64,
    sample_dt: f64,
    initial: (&str, Option<usize>),
    policies: Vec<PolicySection>,
    schedule: ScheduleSection,
    output: OutputSection,
) -> ConfigFile {
    ConfigFile {
        experiment: ExperimentSection { mode: Some(Mode::Des), preset: None, replications: None, seed: None },
        system: Some(SystemSection {
            n: Some(n),
            mu: Some(1.0),
            horizon: Some(horizon),
            sample_dt: Some(sample_dt),
            initial: Some(initial.0.into()),
            initial_level: initial.1,
            initial_counts: None,
            capacity: None,
            threshold_cap: None,
        }),
        policy: Some(if policies.len() == 1 {
            OneOrMany::One(policies.into_iter().next().expect("one policy"))
        } else {
            OneOrMany::Many(policies)
        }),
        schedule: Some(schedule),
        output: Some(output),
    }
}

fn constant(lambda: f64) -> ScheduleSection {
    ScheduleSection { lambda: Some(lambda), segments: None, lambda_max: None }
}

fn metrics(list: &[Metric], burn_in: f64) -> OutputSection {
    OutputSection { dir: None, burn_in: Some(burn_in), metrics: Some(list.to_vec()), settle_quiet: None }
}

/// Preset by name.
pub fn preset(name: &str) -> Option<ConfigFile> {
    let settling = metrics(&[Metric::Settling], 0.0);
    Some(match name {
        "fig3-left" => des(100, 100.0, 0.1, ("empty", None), vec![adaptive(0.97)], constant(2.9), settling),
        "fig3-right" => des(400, 100.0, 0.1, ("empty", None), vec![adaptive(0.97)], constant(2.9), settling),
        "fig5-left" => des(500, 30.0, 0.01, ("empty", None), vec![adaptive(0.93)], constant(5.5), settling),
        "fig5-right" => des(500, 30.0, 0.01, ("uniform", Some(9)), vec![adaptive(0.93)], constant(5.5), settling),
        "fig7" => des(
            500,
            220.0,
            0.01,
            ("empty", None),
            vec![simple("random", None), simple("power_of_d", Some(2)), adaptive(0.97), simple("jsq", None)],
            constant(10.5),
            metrics(&[Metric::Share], 20.0),
        ),
        "fig8" => des(
            500,
            50.0,
            0.05,
            ("empty", None),
            vec![adaptive(0.91)],
            ScheduleSection { lambda: None, segments: Some(time_varying_segments()), lambda_max: Some(10.0) },
            metrics(&[Metric::Error], 0.0),
        ),
        _ => return None,
    })
}
