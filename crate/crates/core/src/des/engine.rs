use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{PolicyKind, SimConfig};
use super::occupancy::CountOccupancy;
use super::policy::{adapt_threshold, dispatch_decision, next_arrival_time, Dispatch};
use super::SimError;

/// Guard against runaway queues; a pool level beyond this is treated as an error.
pub const MAX_LEVEL: usize = 1 << 16;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunCounters {
    pub arrivals: u64,
    pub departures: u64,
    pub blocked: u64,
    pub threshold_updates: u64,
    pub threshold_increases: u64,
    pub threshold_decreases: u64,
    /// Token messages (threshold policies only), by colour.
    pub green_messages: u64,
    pub yellow_messages: u64,
    /// The same messages attributed to the event that sent them.
    pub arrival_messages: u64,
    pub departure_messages: u64,
}

impl RunCounters {
    pub fn messages(&self) -> u64 {
        self.green_messages + self.yellow_messages
    }

    pub fn key_values(&self) -> Vec<(&'static str, u64)> {
        vec![
            ("arrivals", self.arrivals),
            ("departures", self.departures),
            ("blocked", self.blocked),
            ("threshold_updates", self.threshold_updates),
            ("threshold_increases", self.threshold_increases),
            ("threshold_decreases", self.threshold_decreases),
            ("green_messages", self.green_messages),
            ("yellow_messages", self.yellow_messages),
            ("arrival_messages", self.arrival_messages),
            ("departure_messages", self.departure_messages),
            ("messages", self.messages()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Arrival routed to a pool that held `level` tasks.
    Arrival { level: usize },
    BlockedArrival,
    /// Departure from a pool that held `level` tasks.
    Departure { level: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    /// Threshold after the event.
    pub threshold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySample {
    pub t: f64,
    pub threshold: Option<usize>,
    /// `Q(0..=top)`.
    pub counts: Vec<u64>,
}

impl OccupancySample {
    pub fn at_least(&self, i: usize) -> u64 {
        self.counts.get(i).copied().unwrap_or(0)
    }

    pub fn total_tasks(&self) -> u64 {
        self.counts.iter().skip(1).sum()
    }
}

/// Occupancy on a regular time grid (plus the horizon), with counters and
/// every threshold change.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrajectory {
    pub n: u64,
    pub policy: String,
    pub samples: Vec<OccupancySample>,
    pub counters: RunCounters,
    pub initial_threshold: Option<usize>,
    /// `(t, new threshold)` for every change.
    pub threshold_events: Vec<(f64, usize)>,
    pub horizon: f64,
}

impl SampledTrajectory {
    pub fn max_level(&self) -> usize {
        self.samples.iter().map(|s| s.counts.len().saturating_sub(1)).max().unwrap_or(0)
    }

    /// Threshold in force at time `t`.
    pub fn threshold_at(&self, t: f64) -> Option<usize> {
        let mut l = self.initial_threshold?;
        for &(s, v) in &self.threshold_events {
            if s > t {
                break;
            }
            l = v;
        }
        Some(l)
    }

    /// Columns `t, l, Q_1..Q_top`; the threshold column is empty for
    /// non-threshold policies.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let top = self.max_level().max(1);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "l".to_string()];
        header.extend((1..=top).map(|i| format!("Q_{i}")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![format!("{}", s.t), s.threshold.map_or(String::new(), |l| l.to_string())];
            row.extend((1..=top).map(|i| s.at_least(i).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_counters<W: Write>(&self, mut out: W) -> Result<(), SimError> {
        writeln!(out, "n={}", self.n)?;
        writeln!(out, "policy={}", self.policy)?;
        writeln!(out, "horizon={}", self.horizon)?;
        for (k, v) in self.counters.key_values() {
            writeln!(out, "{k}={v}")?;
        }
        Ok(())
    }

    pub fn write_threshold_events<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "l"])?;
        if let Some(l0) = self.initial_threshold {
            w.write_record(["0".to_string(), l0.to_string()])?;
        }
        for &(t, l) in &self.threshold_events {
            w.write_record([t.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Occupancy CSV at `path`, counters next to it with a `.counters` suffix.
    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        self.write_csv(std::fs::File::create(path)?)?;
        self.write_counters(std::fs::File::create(path.with_extension("counters"))?)?;
        Ok(())
    }
}

/// Event-driven simulator of `n` pools in aggregate form.
pub struct Engine {
    config: SimConfig,
    occ: CountOccupancy,
    threshold: usize,
    cap: Option<usize>,
    t: f64,
    next_arrival: f64,
    next_departure: f64,
    arrival_rng: ChaCha8Rng,
    departure_rng: ChaCha8Rng,
    selection_rng: ChaCha8Rng,
    counters: RunCounters,
    threshold_events: Vec<(f64, usize)>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Engine {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let occ = config.initial.build(config.n, config.load.rate_at(0.0))?;
        if let Some(b) = config.capacity {
            if occ.top_level() > b {
                return Err(SimError::Config(format!("initial occupancy exceeds capacity {b}")));
            }
        }
        let cap = config.effective_cap();
        let threshold = config.policy.initial_threshold().unwrap_or(0);
        let mut engine = Self {
            arrival_rng: stream(config.seed, config.streams.arrivals),
            departure_rng: stream(config.seed, config.streams.departures),
            selection_rng: stream(config.seed, config.streams.selection),
            config,
            occ,
            threshold,
            cap,
            t: 0.0,
            next_arrival: 0.0,
            next_departure: 0.0,
            counters: RunCounters::default(),
            threshold_events: Vec::new(),
        };
        engine.next_arrival = next_arrival_time(&engine.config.load, 0.0, engine.config.n, &mut engine.arrival_rng);
        engine.redraw_departure();
        Ok(engine)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn occupancy(&self) -> &CountOccupancy {
        &self.occ
    }

    pub fn threshold(&self) -> Option<usize> {
        self.config.policy.is_threshold().then_some(self.threshold)
    }

    pub fn counters(&self) -> &RunCounters {
        &self.counters
    }

    pub fn threshold_events(&self) -> &[(f64, usize)] {
        &self.threshold_events
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Epoch of the next event (infinite if none can occur).
    pub fn next_event_time(&self) -> f64 {
        self.next_arrival.min(self.next_departure)
    }

    // The departure clock is memoryless, so it is redrawn after every event
    // at the current total rate μ·(number of tasks).
    fn redraw_departure(&mut self) {
        let rate = self.config.mu * self.occ.total_tasks() as f64;
        self.next_departure = if rate > 0.0 {
            let u: f64 = self.departure_rng.random();
            self.t - (1.0 - u).ln() / rate
        } else {
            f64::INFINITY
        };
    }

    /// Processes the next event. `None` once no event can occur.
    pub fn step(&mut self) -> Result<Option<Event>, SimError> {
        let te = self.next_event_time();
        if !te.is_finite() {
            return Ok(None);
        }
        self.t = te;
        let kind = if self.next_arrival <= self.next_departure {
            let kind = self.arrive();
            self.next_arrival = next_arrival_time(&self.config.load, self.t, self.config.n, &mut self.arrival_rng);
            kind?
        } else {
            self.depart()
        };
        self.redraw_departure();
        Ok(Some(Event { t: self.t, kind, threshold: self.threshold() }))
    }

    fn arrive(&mut self) -> Result<EventKind, SimError> {
        self.counters.arrivals += 1;
        let used = self.threshold;
        let decision = dispatch_decision(&self.config.policy, &self.occ, used, self.config.capacity, &mut self.selection_rng);
        if let PolicyKind::ThresholdAdaptive { alpha, .. } = self.config.policy {
            let next = adapt_threshold(&self.occ, used, alpha, self.cap);
            if next != used {
                self.counters.threshold_updates += 1;
                if next > used {
                    self.counters.threshold_increases += 1;
                } else {
                    self.counters.threshold_decreases += 1;
                }
                self.threshold = next;
                self.threshold_events.push((self.t, next));
            }
        }
        match decision {
            Dispatch::Blocked => {
                self.counters.blocked += 1;
                Ok(EventKind::BlockedArrival)
            }
            Dispatch::Level(level) => {
                if level + 1 > MAX_LEVEL {
                    return Err(SimError::Depth { level: level + 1, limit: MAX_LEVEL });
                }
                self.occ.add_task(level);
                // The pool still holds a green token if it stays below ℓ.
                if self.config.policy.is_threshold() && level + 1 < used {
                    self.counters.arrival_messages += 1;
                    self.counters.green_messages += 1;
                }
                Ok(EventKind::Arrival { level })
            }
        }
    }

    fn depart(&mut self) -> EventKind {
        let u: f64 = self.departure_rng.random();
        let level = self.occ.pick_task_level(u).expect("departure with no tasks");
        self.occ.remove_task(level);
        self.counters.departures += 1;
        if self.config.policy.is_threshold() {
            let l = self.threshold;
            // Leaving h issues a yellow token, leaving ℓ a green one.
            if level == l + 1 {
                self.counters.departure_messages += 1;
                self.counters.yellow_messages += 1;
            } else if level == l {
                self.counters.departure_messages += 1;
                self.counters.green_messages += 1;
            }
        }
        EventKind::Departure { level }
    }

    fn sample(&self, t: f64) -> OccupancySample {
        OccupancySample { t, threshold: self.threshold(), counts: self.occ.counts().to_vec() }
    }

    /// Runs to `horizon`, sampling on the `sample_dt` grid from the current time.
    pub fn run_until(&mut self, horizon: f64) -> Result<SampledTrajectory, SimError> {
        self.run_logged(horizon, None)
    }

    /// Runs to the configured horizon.
    pub fn run(&mut self) -> Result<SampledTrajectory, SimError> {
        self.run_until(self.config.horizon)
    }

    /// As [`Engine::run_until`], writing one line per event to `log`.
    pub fn run_logged(&mut self, horizon: f64, mut log: Option<&mut dyn Write>) -> Result<SampledTrajectory, SimError> {
        let dt = self.config.sample_dt;
        let mut k = (self.t / dt).ceil() as u64;
        let mut samples = Vec::new();
        let initial_threshold = self.threshold();
        loop {
            let te = self.next_event_time();
            loop {
                let ts = k as f64 * dt;
                if ts > horizon + 1e-9 * dt || ts >= te {
                    break;
                }
                samples.push(self.sample(ts.min(horizon)));
                k += 1;
            }
            if te > horizon {
                break;
            }
            if let Some(ev) = self.step()? {
                if let Some(w) = log.as_deref_mut() {
                    writeln!(w, "{} {:?} l={:?}", ev.t, ev.kind, ev.threshold)?;
                }
            }
        }
        if samples.last().is_none_or(|s| s.t < horizon) {
            samples.push(self.sample(horizon));
        }
        self.t = self.t.max(horizon);
        Ok(SampledTrajectory {
            n: self.config.n,
            policy: self.config.policy.name().to_string(),
            samples,
            counters: self.counters,
            initial_threshold,
            threshold_events: self.threshold_events.clone(),
            horizon,
        })
    }
}

/// Builds an engine from `config` and runs it to the configured horizon.
pub fn simulate(config: SimConfig) -> Result<SampledTrajectory, SimError> {
    Engine::new(config)?.run()
}
