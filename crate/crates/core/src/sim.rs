//! Event-driven simulation of the channel pool under the dynamic
//! reservation scheme and its two baselines.
//!
//! Arrivals of each class are Poisson with piecewise-constant rates and
//! holding times are exponential with mean `1/μ`. Under
//! [`Scheme::DynamicProposed`] every arrival (admitted or not) updates a
//! [`RateEstimator`], after which the load is re-classified and the
//! thresholds recomputed before that arrival is admitted or blocked.
//! Until every class has an observed inter-arrival gap the pool is shared.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::traffic::{
    availability_thresholds, classify_load, LoadCondition, RateEstimator, RateVector,
    SystemParams, ThresholdVector, TrafficError,
};

/// Fraction of the horizon excluded from statistics unless overridden.
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("rate schedule is empty")]
    EmptySchedule,
    #[error("rate schedule must start at time 0, first segment starts at {0}")]
    ScheduleStart(f64),
    #[error("rate schedule segment {index} does not start after the previous one")]
    UnsortedSchedule { index: usize },
    #[error("rate schedule segment {index} starts at or beyond the horizon")]
    SegmentBeyondHorizon { index: usize },
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("warm-up {warmup} must be non-negative and below the horizon {horizon}")]
    InvalidWarmup { warmup: f64, horizon: f64 },
    #[error("fixed guard thresholds {thresholds:?} do not fit {capacity} channels and {classes} classes")]
    GuardMismatch {
        thresholds: Vec<usize>,
        capacity: usize,
        classes: usize,
    },
    #[error("blocked count {blocked} exceeds offered count {offered}")]
    BlockedExceedsOffered { blocked: u64, offered: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    /// Thresholds recomputed from observed inter-arrival gaps.
    DynamicProposed,
    /// Thresholds frozen for the whole run.
    FixedGuard(ThresholdVector<f64>),
    /// Every class shares all channels.
    NonPriority,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::DynamicProposed => "dynamic",
            Scheme::FixedGuard(_) => "fixed_guard",
            Scheme::NonPriority => "non_priority",
        }
    }
}

/// Rates in force from `start` until the next segment starts.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSegment {
    pub start: f64,
    pub rates: RateVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: SystemParams<f64>,
    pub schedule: Vec<RateSegment>,
    pub horizon: f64,
    /// Statistics cover `[warmup, end)`.
    pub warmup: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Exponential smoothing of the estimator's gaps; `None` keeps the last gap.
    pub smoothing: Option<f64>,
    /// Estimator priors; defaults to the time-averaged schedule rates.
    pub priors: Option<RateVector<f64>>,
    /// Stop once this many post-warm-up arrivals have been offered.
    pub arrival_budget: Option<u64>,
    pub record_trace: bool,
}

impl Scenario {
    /// Constant rates over `[0, horizon)` with the default warm-up.
    pub fn constant(
        params: SystemParams<f64>,
        rates: RateVector<f64>,
        horizon: f64,
        seed: u64,
        scheme: Scheme,
    ) -> Self {
        Self {
            params,
            schedule: vec![RateSegment { start: 0.0, rates }],
            horizon,
            warmup: DEFAULT_WARMUP_FRACTION * horizon,
            seed,
            scheme,
            smoothing: None,
            priors: None,
            arrival_budget: None,
            record_trace: false,
        }
    }

    pub fn with_schedule(mut self, schedule: Vec<RateSegment>) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_warmup(mut self, warmup: f64) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_smoothing(mut self, factor: f64) -> Self {
        self.smoothing = Some(factor);
        self
    }

    pub fn with_arrival_budget(mut self, arrivals: u64) -> Self {
        self.arrival_budget = Some(arrivals);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SimError::InvalidHorizon(self.horizon));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.horizon) {
            return Err(SimError::InvalidWarmup {
                warmup: self.warmup,
                horizon: self.horizon,
            });
        }
        let first = self.schedule.first().ok_or(SimError::EmptySchedule)?;
        if first.start != 0.0 {
            return Err(SimError::ScheduleStart(first.start));
        }
        let classes = self.params.class_count();
        for (index, segment) in self.schedule.iter().enumerate() {
            if index > 0 && !(segment.start > self.schedule[index - 1].start) {
                return Err(SimError::UnsortedSchedule { index });
            }
            if segment.start >= self.horizon {
                return Err(SimError::SegmentBeyondHorizon { index });
            }
            if segment.rates.len() != classes {
                return Err(TrafficError::ClassCountMismatch {
                    expected: classes,
                    got: segment.rates.len(),
                }
                .into());
            }
        }
        if let Scheme::FixedGuard(thresholds) = &self.scheme {
            if thresholds.capacity() != self.params.capacity()
                || thresholds.class_count() != classes
            {
                return Err(SimError::GuardMismatch {
                    thresholds: thresholds.as_slice().to_vec(),
                    capacity: self.params.capacity(),
                    classes,
                });
            }
        }
        if let Some(priors) = &self.priors {
            if priors.len() != classes {
                return Err(TrafficError::ClassCountMismatch {
                    expected: classes,
                    got: priors.len(),
                }
                .into());
            }
        }
        if let Some(factor) = self.smoothing {
            RateEstimator::new(&RateVector::zeros(classes)?).with_smoothing(factor)?;
        }
        Ok(())
    }

    /// Time-weighted mean rate of each class over the horizon.
    pub fn mean_rates(&self) -> Result<RateVector<f64>, SimError> {
        let classes = self.params.class_count();
        let mut sums = vec![0.0; classes];
        for (index, segment) in self.schedule.iter().enumerate() {
            let end = self
                .schedule
                .get(index + 1)
                .map_or(self.horizon, |next| next.start);
            for (sum, rate) in sums.iter_mut().zip(segment.rates.iter()) {
                *sum += rate * (end - segment.start);
            }
        }
        Ok(RateVector::new(
            sums.into_iter().map(|s| s / self.horizon).collect(),
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admit,
    Block,
}

/// Admission rule: under light load any class may take a free channel,
/// under high load class `class` needs fewer than `N_class` busy channels.
pub fn admit_call(
    occupied: usize,
    class: usize,
    mode: LoadCondition,
    thresholds: &ThresholdVector<f64>,
    params: &SystemParams<f64>,
) -> Admission {
    let limit = match mode {
        LoadCondition::Light => params.capacity(),
        LoadCondition::High => thresholds.get(class).unwrap_or(0),
    };
    if occupied < limit.min(params.capacity()) {
        Admission::Admit
    } else {
        Admission::Block
    }
}

/// Binomial standard error `sqrt(B(1 - B) / offered)`; `None` without offers.
pub fn blocking_stderr(blocked: u64, offered: u64) -> Result<Option<f64>, SimError> {
    if blocked > offered {
        return Err(SimError::BlockedExceedsOffered { blocked, offered });
    }
    if offered == 0 {
        return Ok(None);
    }
    let b = blocked as f64 / offered as f64;
    Ok(Some((b * (1.0 - b) / offered as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassStats {
    pub offered: u64,
    pub blocked: u64,
}

impl ClassStats {
    pub fn blocking(&self) -> Option<f64> {
        (self.offered > 0).then(|| self.blocked as f64 / self.offered as f64)
    }

    pub fn stderr(&self) -> Option<f64> {
        blocking_stderr(self.blocked, self.offered)
            .ok()
            .flatten()
    }

    fn record(&mut self, admission: Admission) {
        self.offered += 1;
        if admission == Admission::Block {
            self.blocked += 1;
        }
    }
}

/// One admission decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub time: f64,
    pub class: usize,
    pub admission: Admission,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    /// Post-warm-up counts per class.
    pub classes: Vec<ClassStats>,
    /// Post-warm-up counts per schedule segment and class.
    pub segments: Vec<Vec<ClassStats>>,
    /// Busy channel-time over `N ×` measured time.
    pub utilization: f64,
    pub light_fraction: f64,
    pub high_fraction: f64,
    pub measured_time: f64,
    /// Arrivals and departures processed, warm-up included.
    pub event_count: u64,
    /// Calls admitted over the whole run.
    pub admitted: u64,
    /// Calls that completed service before the run ended.
    pub departed: u64,
    /// Calls still holding a channel when the run ended.
    pub in_service: usize,
    /// Every decision, warm-up included, when the scenario asks for it.
    pub trace: Vec<TraceEntry>,
}

impl SimReport {
    pub fn blocking(&self) -> Vec<Option<f64>> {
        self.classes.iter().map(ClassStats::blocking).collect()
    }

    pub fn stderr(&self) -> Vec<Option<f64>> {
        self.classes.iter().map(ClassStats::stderr).collect()
    }

    pub fn total(&self) -> ClassStats {
        self.classes.iter().fold(ClassStats::default(), |acc, c| ClassStats {
            offered: acc.offered + c.offered,
            blocked: acc.blocked + c.blocked,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Departure,
    RateChange { segment: usize },
    Arrival { class: usize, generation: u64 },
}

impl EventKind {
    // departures free a channel before a simultaneous arrival is considered
    fn rank(&self) -> u8 {
        match self {
            EventKind::Departure => 0,
            EventKind::RateChange { .. } => 1,
            EventKind::Arrival { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (f64, u8, u64) {
        (self.time, self.kind.rank(), self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, ra, sa) = self.key();
        let (tb, rb, sb) = other.key();
        ta.total_cmp(&tb).then(ra.cmp(&rb)).then(sa.cmp(&sb))
    }
}

/// Mutable state of one run.
struct SimState<'a> {
    scenario: &'a Scenario,
    now: f64,
    occupied: usize,
    pending_departures: usize,
    mode: LoadCondition,
    thresholds: ThresholdVector<f64>,
    shared: ThresholdVector<f64>,
    estimator: RateEstimator<f64>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    segment: usize,
    generations: Vec<u64>,
    arrival_rngs: Vec<ChaCha8Rng>,
    holding_rng: ChaCha8Rng,
    holding: Exp<f64>,
    // statistics
    busy_time: f64,
    light_time: f64,
    high_time: f64,
    measured_arrivals: u64,
    event_count: u64,
    admitted: u64,
    departed: u64,
    classes: Vec<ClassStats>,
    segments: Vec<Vec<ClassStats>>,
    trace: Vec<TraceEntry>,
}

impl<'a> SimState<'a> {
    fn new(scenario: &'a Scenario) -> Result<Self, SimError> {
        let params = &scenario.params;
        let classes = params.class_count();
        let priors = match &scenario.priors {
            Some(p) => p.clone(),
            None => scenario.mean_rates()?,
        };
        let mut estimator = RateEstimator::new(&priors);
        if let Some(factor) = scenario.smoothing {
            estimator = estimator.with_smoothing(factor)?;
        }
        let shared = ThresholdVector::uniform(params.capacity(), classes)?;
        let (mode, thresholds) = match &scenario.scheme {
            Scheme::FixedGuard(t) => (LoadCondition::High, t.clone()),
            _ => (LoadCondition::Light, shared.clone()),
        };
        // stream 0 drives holding times, stream m + 1 the arrivals of class m
        let stream = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
            rng.set_stream(s);
            rng
        };
        let holding = Exp::new(params.service_rate())
            .map_err(|_| TrafficError::NonPositive {
                name: "service rate",
                value: params.service_rate(),
            })?;
        Ok(Self {
            scenario,
            now: 0.0,
            occupied: 0,
            pending_departures: 0,
            mode,
            thresholds,
            shared,
            estimator,
            queue: BinaryHeap::new(),
            seq: 0,
            segment: 0,
            generations: vec![0; classes],
            arrival_rngs: (0..classes as u64).map(|m| stream(m + 1)).collect(),
            holding_rng: stream(0),
            holding,
            busy_time: 0.0,
            light_time: 0.0,
            high_time: 0.0,
            measured_arrivals: 0,
            event_count: 0,
            admitted: 0,
            departed: 0,
            classes: vec![ClassStats::default(); classes],
            segments: vec![vec![ClassStats::default(); classes]; scenario.schedule.len()],
            trace: Vec::new(),
        })
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Event {
            time,
            seq: self.seq,
            kind,
        }));
    }

    fn schedule_arrival(&mut self, class: usize) {
        let rate = self.scenario.schedule[self.segment].rates.as_slice()[class];
        if rate <= 0.0 {
            return;
        }
        let gap = Exp::new(rate)
            .expect("validated positive rate")
            .sample(&mut self.arrival_rngs[class]);
        let generation = self.generations[class];
        self.push(self.now + gap, EventKind::Arrival { class, generation });
    }

    /// Accumulates time integrals up to `time`.
    fn advance(&mut self, time: f64) {
        let from = self.now.max(self.scenario.warmup);
        if time > from {
            let span = time - from;
            self.busy_time += span * self.occupied as f64;
            match self.mode {
                LoadCondition::Light => self.light_time += span,
                LoadCondition::High => self.high_time += span,
            }
        }
        self.now = time;
    }

    fn update_policy(&mut self) -> Result<(), SimError> {
        if self.scenario.scheme != Scheme::DynamicProposed {
            return Ok(());
        }
        let params = &self.scenario.params;
        if !self.estimator.is_warm() {
            self.mode = LoadCondition::Light;
            return Ok(());
        }
        let rates = self.estimator.rates();
        self.mode = classify_load(&rates, params);
        self.thresholds = match self.mode {
            LoadCondition::Light => self.shared.clone(),
            LoadCondition::High => availability_thresholds(&rates, params)?,
        };
        Ok(())
    }

    fn on_arrival(&mut self, class: usize) -> Result<(), SimError> {
        self.schedule_arrival(class);
        self.estimator.observe_arrival(class, self.now)?;
        self.update_policy()?;

        let admission = admit_call(
            self.occupied,
            class,
            self.mode,
            &self.thresholds,
            &self.scenario.params,
        );
        if admission == Admission::Admit {
            self.occupied += 1;
            self.pending_departures += 1;
            self.admitted += 1;
            let hold = self.holding.sample(&mut self.holding_rng);
            self.push(self.now + hold, EventKind::Departure);
        }
        assert!(self.occupied <= self.scenario.params.capacity());

        if self.now >= self.scenario.warmup {
            self.measured_arrivals += 1;
            self.classes[class].record(admission);
            self.segments[self.segment][class].record(admission);
        }
        if self.scenario.record_trace {
            self.trace.push(TraceEntry {
                time: self.now,
                class,
                admission,
            });
        }
        Ok(())
    }

    fn run(mut self) -> Result<SimReport, SimError> {
        let schedule = &self.scenario.schedule;
        for segment in 1..schedule.len() {
            self.push(schedule[segment].start, EventKind::RateChange { segment });
        }
        for class in 0..self.scenario.params.class_count() {
            self.schedule_arrival(class);
        }

        let horizon = self.scenario.horizon;
        let budget = self.scenario.arrival_budget;
        let mut end = horizon;
        while let Some(Reverse(event)) = self.queue.pop() {
            if event.time >= horizon {
                break;
            }
            debug_assert!(event.time >= self.now);
            debug_assert_eq!(self.occupied, self.pending_departures);
            match event.kind {
                EventKind::Departure => {
                    self.advance(event.time);
                    self.event_count += 1;
                    assert!(self.occupied > 0, "departure from an empty pool");
                    self.occupied -= 1;
                    self.pending_departures -= 1;
                    self.departed += 1;
                }
                EventKind::RateChange { segment } => {
                    self.advance(event.time);
                    self.segment = segment;
                    // memoryless: redraw every class from the new rate
                    for class in 0..self.generations.len() {
                        self.generations[class] += 1;
                        self.schedule_arrival(class);
                    }
                }
                EventKind::Arrival { class, generation } => {
                    if generation != self.generations[class] {
                        continue;
                    }
                    self.advance(event.time);
                    self.event_count += 1;
                    self.on_arrival(class)?;
                    if budget.is_some_and(|b| self.measured_arrivals >= b) {
                        end = event.time;
                        break;
                    }
                }
            }
        }
        if end == horizon {
            self.advance(horizon);
        }

        let measured_time = (end - self.scenario.warmup).max(0.0);
        let capacity = self.scenario.params.capacity() as f64;
        let (utilization, light_fraction, high_fraction) = if measured_time > 0.0 {
            (
                self.busy_time / (capacity * measured_time),
                self.light_time / measured_time,
                self.high_time / measured_time,
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        Ok(SimReport {
            classes: self.classes,
            segments: self.segments,
            utilization,
            light_fraction,
            high_fraction,
            measured_time,
            event_count: self.event_count,
            admitted: self.admitted,
            departed: self.departed,
            in_service: self.occupied,
            trace: self.trace,
        })
    }
}

/// Runs one scenario. Deterministic in the scenario, seed included.
pub fn run_simulation(scenario: &Scenario) -> Result<SimReport, SimError> {
    scenario.validate()?;
    SimState::new(scenario)?.run()
}
