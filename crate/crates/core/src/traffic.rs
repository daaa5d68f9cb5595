//! Arrival-rate arithmetic of the reservation scheme.
//!
//! Classes are indexed from 0 (highest priority) to `M - 1` (lowest).
//! Under high load class `m` reserves `X_m = (λ_m / λ_T)(N - C)` channels
//! against every lower class, so class `m` may only be admitted while the
//! occupancy is below `N_m = N - floor(X_0 + ... + X_{m-1})`.

use std::fmt;

use thiserror::Error;

use crate::Scalar;

/// Default ratio of the load threshold Γ to the mean holding time `1/μ`.
pub const DEFAULT_THRESHOLD_FACTOR: f64 = 0.925;

/// Smallest inter-arrival gap the estimator will invert.
pub const MIN_GAP: f64 = 1e-9;

/// Tolerance on the sum of class mix proportions.
pub const MIX_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrafficError {
    #[error("capacity must be at least one channel")]
    ZeroCapacity,
    #[error("common floor {floor} exceeds capacity {capacity}")]
    FloorAboveCapacity { floor: usize, capacity: usize },
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("at least one traffic class is required")]
    NoClasses,
    #[error("class {class}: rate must be finite and non-negative, got {value}")]
    InvalidRate { class: usize, value: f64 },
    #[error("expected {expected} classes, got {got}")]
    ClassCountMismatch { expected: usize, got: usize },
    #[error("class {class} is out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("total arrival rate is zero, reservation is undefined")]
    ZeroLoad,
    #[error("thresholds must start at capacity and be non-increasing: {0:?}")]
    ThresholdOrder(Vec<usize>),
    #[error("class {class}: arrival at {time} precedes previous arrival at {previous}")]
    NonMonotoneArrival { class: usize, time: f64, previous: f64 },
    #[error("class mix proportions sum to {sum}, expected 1")]
    MixSum { sum: f64 },
    #[error("smoothing factor must lie in (0, 1], got {0}")]
    InvalidSmoothing(f64),
}

fn as_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn check_positive<T: Scalar>(name: &'static str, value: T) -> Result<(), TrafficError> {
    if value.is_finite() && value > T::zero() {
        Ok(())
    } else {
        Err(TrafficError::NonPositive {
            name,
            value: as_f64(value),
        })
    }
}

/// Static description of the channel pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams<T> {
    capacity: usize,
    common_floor: usize,
    load_threshold: T,
    service_rate: T,
    class_count: usize,
}

impl<T: Scalar> SystemParams<T> {
    /// `load_threshold` is Γ, in the same time unit as `1 / service_rate`.
    pub fn new(
        capacity: usize,
        common_floor: usize,
        load_threshold: T,
        service_rate: T,
        class_count: usize,
    ) -> Result<Self, TrafficError> {
        if capacity == 0 {
            return Err(TrafficError::ZeroCapacity);
        }
        if common_floor > capacity {
            return Err(TrafficError::FloorAboveCapacity {
                floor: common_floor,
                capacity,
            });
        }
        check_positive("load threshold", load_threshold)?;
        check_positive("service rate", service_rate)?;
        if class_count == 0 {
            return Err(TrafficError::NoClasses);
        }
        Ok(Self {
            capacity,
            common_floor,
            load_threshold,
            service_rate,
            class_count,
        })
    }

    /// Same as [`SystemParams::new`] with Γ = 0.925 / μ.
    pub fn with_default_threshold(
        capacity: usize,
        common_floor: usize,
        service_rate: T,
        class_count: usize,
    ) -> Result<Self, TrafficError> {
        check_positive("service rate", service_rate)?;
        let gamma = T::lit(DEFAULT_THRESHOLD_FACTOR) / service_rate;
        Self::new(capacity, common_floor, gamma, service_rate, class_count)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn common_floor(&self) -> usize {
        self.common_floor
    }

    pub fn load_threshold(&self) -> T {
        self.load_threshold
    }

    pub fn service_rate(&self) -> T {
        self.service_rate
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Channels that may be reserved away from the lowest class, `N - C`.
    pub fn reservable(&self) -> usize {
        self.capacity - self.common_floor
    }

    /// Total arrival rate `N / Γ` at and above which the load is high.
    pub fn high_load_rate(&self) -> T {
        T::from_count(self.capacity) / self.load_threshold
    }

    /// Copy with every rate-like quantity scaled by `factor` (μ multiplied, Γ divided).
    pub fn time_scaled(&self, factor: T) -> Result<Self, TrafficError> {
        Self::new(
            self.capacity,
            self.common_floor,
            self.load_threshold / factor,
            self.service_rate * factor,
            self.class_count,
        )
    }
}

/// Per-class arrival rates, highest priority first.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector<T> {
    rates: Vec<T>,
}

impl<T: Scalar> RateVector<T> {
    pub fn new(rates: Vec<T>) -> Result<Self, TrafficError> {
        if rates.is_empty() {
            return Err(TrafficError::NoClasses);
        }
        for (class, &value) in rates.iter().enumerate() {
            if !value.is_finite() || value < T::zero() {
                return Err(TrafficError::InvalidRate {
                    class,
                    value: as_f64(value),
                });
            }
        }
        Ok(Self { rates })
    }

    pub fn zeros(classes: usize) -> Result<Self, TrafficError> {
        Self::new(vec![T::zero(); classes])
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn get(&self, class: usize) -> Option<T> {
        self.rates.get(class).copied()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.rates
    }

    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        self.rates.iter().copied()
    }

    pub fn total(&self) -> T {
        total_arrival_rate(self)
    }

    /// Multiplies every class rate by `factor`.
    pub fn scaled(&self, factor: T) -> Result<Self, TrafficError> {
        Self::new(self.rates.iter().map(|&r| r * factor).collect())
    }

    fn check_classes(&self, expected: usize) -> Result<(), TrafficError> {
        if self.len() == expected {
            Ok(())
        } else {
            Err(TrafficError::ClassCountMismatch {
                expected,
                got: self.len(),
            })
        }
    }
}

/// Proportions of the total arrival rate carried by each class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMix<T> {
    shares: Vec<T>,
}

impl<T: Scalar> ClassMix<T> {
    pub fn new(shares: Vec<T>) -> Result<Self, TrafficError> {
        // reuse the rate validation for non-negativity
        let shares = RateVector::new(shares)?.rates;
        let sum: T = shares.iter().copied().sum();
        if (sum - T::one()).abs() > T::lit(MIX_SUM_TOLERANCE) {
            return Err(TrafficError::MixSum { sum: as_f64(sum) });
        }
        Ok(Self { shares })
    }

    /// Equal shares over `classes` classes.
    pub fn uniform(classes: usize) -> Result<Self, TrafficError> {
        if classes == 0 {
            return Err(TrafficError::NoClasses);
        }
        Self::new(vec![T::one() / T::from_count(classes); classes])
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.shares
    }

    /// Class rates for a total arrival rate `total`.
    pub fn rates(&self, total: T) -> Result<RateVector<T>, TrafficError> {
        RateVector::new(self.shares.iter().map(|&s| s * total).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoadCondition {
    /// Every class may use all `N` channels.
    Light,
    /// Reservation thresholds are in force.
    High,
}

impl fmt::Display for LoadCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadCondition::Light => f.write_str("light"),
            LoadCondition::High => f.write_str("high"),
        }
    }
}

/// Occupancy limits per class: class `m` is admitted only while fewer than
/// `thresholds[m]` channels are busy. `thresholds[0]` is the capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector<T> {
    thresholds: Vec<usize>,
    quotas: Vec<T>,
}

impl<T: Scalar> ThresholdVector<T> {
    /// Explicit thresholds, e.g. for a fixed guard-channel policy.
    /// The first entry is taken as the capacity; the rest must not increase.
    pub fn fixed(thresholds: Vec<usize>) -> Result<Self, TrafficError> {
        if thresholds.is_empty() {
            return Err(TrafficError::NoClasses);
        }
        if thresholds[0] == 0 {
            return Err(TrafficError::ZeroCapacity);
        }
        if thresholds.windows(2).any(|w| w[1] > w[0]) {
            return Err(TrafficError::ThresholdOrder(thresholds));
        }
        Ok(Self {
            thresholds,
            quotas: Vec::new(),
        })
    }

    /// All classes share the full capacity.
    pub fn uniform(capacity: usize, classes: usize) -> Result<Self, TrafficError> {
        if classes == 0 {
            return Err(TrafficError::NoClasses);
        }
        Self::fixed(vec![capacity; classes])
    }

    pub fn capacity(&self) -> usize {
        self.thresholds[0]
    }

    pub fn class_count(&self) -> usize {
        self.thresholds.len()
    }

    pub fn get(&self, class: usize) -> Option<usize> {
        self.thresholds.get(class).copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.thresholds
    }

    /// Fractional reservation quotas `X_0 .. X_{M-2}` the thresholds were
    /// derived from; empty for fixed thresholds.
    pub fn quotas(&self) -> &[T] {
        &self.quotas
    }

    /// Whether class `class` may take a channel at the given occupancy.
    pub fn admits(&self, class: usize, occupied: usize) -> bool {
        occupied < self.thresholds[class]
    }
}

/// Total arrival rate `λ_T = Σ λ_m`.
pub fn total_arrival_rate<T: Scalar>(rates: &RateVector<T>) -> T {
    rates.iter().sum()
}

/// High iff `λ_T ≥ N / Γ`.
pub fn classify_load<T: Scalar>(rates: &RateVector<T>, params: &SystemParams<T>) -> LoadCondition {
    if total_arrival_rate(rates) >= params.high_load_rate() {
        LoadCondition::High
    } else {
        LoadCondition::Light
    }
}

/// Channels reserved by class `class` against all lower classes,
/// `(λ_m / λ_T)(N - C)`. Defined for every class but the lowest.
pub fn reservation_quota<T: Scalar>(
    rates: &RateVector<T>,
    params: &SystemParams<T>,
    class: usize,
) -> Result<T, TrafficError> {
    rates.check_classes(params.class_count())?;
    if class + 1 >= params.class_count() {
        return Err(TrafficError::ClassOutOfRange {
            class,
            classes: params.class_count(),
        });
    }
    let total = total_arrival_rate(rates);
    if total <= T::zero() {
        return Err(TrafficError::ZeroLoad);
    }
    let pool = T::from_count(params.reservable());
    Ok((rates.as_slice()[class] / total * pool).min(pool))
}

/// Occupancy thresholds for every class under the current rates.
///
/// The cumulative reservation is rounded down, so lower classes keep the
/// fractional channel. Values within a few ulps below an integer are
/// treated as that integer.
pub fn availability_thresholds<T: Scalar>(
    rates: &RateVector<T>,
    params: &SystemParams<T>,
) -> Result<ThresholdVector<T>, TrafficError> {
    rates.check_classes(params.class_count())?;
    let total = total_arrival_rate(rates);
    if total <= T::zero() {
        return Err(TrafficError::ZeroLoad);
    }
    let capacity = params.capacity();
    let reservable = params.reservable();
    let pool = T::from_count(reservable);
    let slack = T::epsilon() * T::lit(16.0) * pool.max(T::one());

    let classes = params.class_count();
    let mut thresholds = Vec::with_capacity(classes);
    let mut quotas = Vec::with_capacity(classes - 1);
    thresholds.push(capacity);
    let mut higher = T::zero();
    for &rate in &rates.as_slice()[..classes - 1] {
        quotas.push((rate / total * pool).min(pool));
        higher = higher + rate;
        // scale the prefix sum rather than summing rounded quotas
        let cumulative = higher * pool / total;
        let reserved = (cumulative + slack)
            .floor()
            .to_usize()
            .unwrap_or(reservable)
            .min(reservable);
        thresholds.push(capacity - reserved);
    }
    Ok(ThresholdVector { thresholds, quotas })
}

#[derive(Debug, Clone, PartialEq)]
struct ClassTrack<T> {
    last_arrival: Option<T>,
    gap: Option<T>,
    prior: T,
}

/// Online per-class rate estimate from the gap between the last two arrivals.
///
/// With smoothing factor `α` the tracked gap becomes an exponentially
/// weighted average `α·Δt + (1 - α)·gap`, seeded with `1 / prior` when the
/// prior is positive. Without smoothing (the default) it is the last gap.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimator<T> {
    classes: Vec<ClassTrack<T>>,
    smoothing: Option<T>,
}

impl<T: Scalar> RateEstimator<T> {
    /// `priors` is returned for each class until it has two arrivals.
    pub fn new(priors: &RateVector<T>) -> Self {
        Self {
            classes: priors
                .iter()
                .map(|prior| ClassTrack {
                    last_arrival: None,
                    gap: None,
                    prior,
                })
                .collect(),
            smoothing: None,
        }
    }

    pub fn with_smoothing(mut self, factor: T) -> Result<Self, TrafficError> {
        if !(factor > T::zero() && factor <= T::one()) {
            return Err(TrafficError::InvalidSmoothing(as_f64(factor)));
        }
        self.smoothing = Some(factor);
        Ok(self)
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn smoothing(&self) -> Option<T> {
        self.smoothing
    }

    /// Records an arrival of `class` at `time`.
    pub fn observe_arrival(&mut self, class: usize, time: T) -> Result<(), TrafficError> {
        let classes = self.classes.len();
        let smoothing = self.smoothing;
        let track = self
            .classes
            .get_mut(class)
            .ok_or(TrafficError::ClassOutOfRange { class, classes })?;
        if let Some(previous) = track.last_arrival {
            if time < previous {
                return Err(TrafficError::NonMonotoneArrival {
                    class,
                    time: as_f64(time),
                    previous: as_f64(previous),
                });
            }
            let gap = (time - previous).max(T::lit(MIN_GAP));
            track.gap = Some(match smoothing {
                None => gap,
                Some(alpha) => {
                    let base = match track.gap {
                        Some(g) => g,
                        None if track.prior > T::zero() => T::one() / track.prior,
                        None => gap,
                    };
                    alpha * gap + (T::one() - alpha) * base
                }
            });
        }
        track.last_arrival = Some(time);
        Ok(())
    }

    /// Current estimate `1 / Δt` for `class`, or its prior before two arrivals.
    pub fn rate(&self, class: usize) -> T {
        let track = &self.classes[class];
        match track.gap {
            Some(gap) => T::one() / gap,
            None => track.prior,
        }
    }

    /// The tracked inter-arrival gap, once two arrivals have been seen.
    pub fn gap(&self, class: usize) -> Option<T> {
        self.classes[class].gap
    }

    pub fn has_estimate(&self, class: usize) -> bool {
        self.classes[class].gap.is_some()
    }

    /// True once every class has an observed gap.
    pub fn is_warm(&self) -> bool {
        self.classes.iter().all(|c| c.gap.is_some())
    }

    pub fn rates(&self) -> RateVector<T> {
        RateVector {
            rates: (0..self.classes.len()).map(|m| self.rate(m)).collect(),
        }
    }
}
