//! Birth-death model of the channel pool for frozen thresholds.
//!
//! State `i` is the number of busy channels. From state `i` the chain moves
//! up at the summed rate of every class still admitted there
//! (`i < N_m`) and down at `i·μ`.

use nalgebra::{DMatrix, DVector, RealField};
use thiserror::Error;

use crate::traffic::{
    availability_thresholds, classify_load, ClassMix, LoadCondition, RateVector, SystemParams,
    ThresholdVector, TrafficError,
};
use crate::Scalar;

/// Largest chain the dense oracle will factorize.
pub const ORACLE_MAX_CAPACITY: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("chain needs at least one channel")]
    Empty,
    #[error("service rate must be positive and finite, got {0}")]
    InvalidServiceRate(f64),
    #[error("birth rate at state {state} must be finite and non-negative, got {value}")]
    InvalidBirthRate { state: usize, value: f64 },
    #[error("birth rate increases at state {state}")]
    IncreasingBirthRate { state: usize },
    #[error("{thresholds} thresholds for {rates} class rates")]
    ClassCountMismatch { thresholds: usize, rates: usize },
    #[error("distribution covers {distribution} channels, thresholds {thresholds}")]
    CapacityMismatch { distribution: usize, thresholds: usize },
    #[error("load point {0} is not a positive rate")]
    InvalidLoadPoint(f64),
    #[error("dense oracle is limited to {limit} channels, got {capacity}")]
    TooLarge { capacity: usize, limit: usize },
    #[error("balance equations are singular")]
    Singular,
}

fn as_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeathChain<T> {
    /// `birth[i]` is the rate out of state `i` upwards, for `i < N`.
    birth: Vec<T>,
    service_rate: T,
}

impl<T: Scalar> BirthDeathChain<T> {
    /// Chain with the given per-state birth rates; capacity is `birth.len()`.
    pub fn from_birth_rates(birth: Vec<T>, service_rate: T) -> Result<Self, ChainError> {
        if birth.is_empty() {
            return Err(ChainError::Empty);
        }
        if !(service_rate.is_finite() && service_rate > T::zero()) {
            return Err(ChainError::InvalidServiceRate(as_f64(service_rate)));
        }
        for (state, &value) in birth.iter().enumerate() {
            if !value.is_finite() || value < T::zero() {
                return Err(ChainError::InvalidBirthRate {
                    state,
                    value: as_f64(value),
                });
            }
        }
        if let Some(state) = (1..birth.len()).find(|&i| birth[i] > birth[i - 1]) {
            return Err(ChainError::IncreasingBirthRate { state });
        }
        Ok(Self {
            birth,
            service_rate,
        })
    }

    /// Single-class M/M/N/N chain with constant arrival rate.
    pub fn erlang(capacity: usize, arrival_rate: T, service_rate: T) -> Result<Self, ChainError> {
        Self::from_birth_rates(vec![arrival_rate; capacity], service_rate)
    }

    pub fn capacity(&self) -> usize {
        self.birth.len()
    }

    pub fn service_rate(&self) -> T {
        self.service_rate
    }

    pub fn birth_rates(&self) -> &[T] {
        &self.birth
    }

    /// Upward rate out of `state`; zero at capacity.
    pub fn birth_rate(&self, state: usize) -> T {
        self.birth.get(state).copied().unwrap_or_else(T::zero)
    }

    pub fn death_rate(&self, state: usize) -> T {
        T::from_count(state) * self.service_rate
    }
}

/// Chain for the given thresholds and class rates.
pub fn build_chain<T: Scalar>(
    thresholds: &ThresholdVector<T>,
    rates: &RateVector<T>,
    service_rate: T,
) -> Result<BirthDeathChain<T>, ChainError> {
    if thresholds.class_count() != rates.len() {
        return Err(ChainError::ClassCountMismatch {
            thresholds: thresholds.class_count(),
            rates: rates.len(),
        });
    }
    let capacity = thresholds.capacity();
    let limits = thresholds.as_slice();
    let birth = (0..capacity)
        .map(|state| {
            rates
                .iter()
                .zip(limits)
                .filter(|&(_, &limit)| state < limit)
                .map(|(rate, _)| rate)
                .sum()
        })
        .collect();
    BirthDeathChain::from_birth_rates(birth, service_rate)
}

/// Stationary probabilities `P_0 ..= P_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateDistribution<T> {
    probabilities: Vec<T>,
}

impl<T: Scalar> SteadyStateDistribution<T> {
    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }

    pub fn capacity(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn get(&self, state: usize) -> Option<T> {
        self.probabilities.get(state).copied()
    }

    /// Expected number of busy channels.
    pub fn mean_occupancy(&self) -> T {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, &p)| T::from_count(i) * p)
            .sum()
    }

    /// `tails()[k]` is the probability of at least `k` busy channels, for
    /// `k = 0 ..= N + 1`.
    pub fn tails(&self) -> Vec<T> {
        let mut tails = vec![T::zero(); self.probabilities.len() + 1];
        for k in (0..self.probabilities.len()).rev() {
            tails[k] = tails[k + 1] + self.probabilities[k];
        }
        tails
    }
}

/// Product-form solution by the ratio recursion `p_i = p_{i-1}·β_{i-1} / (i·μ)`.
///
/// Weights are rescaled whenever they grow past `sqrt(MAX)`, so no
/// factorial or power is ever formed.
pub fn steady_state<T: Scalar>(chain: &BirthDeathChain<T>) -> SteadyStateDistribution<T> {
    let capacity = chain.capacity();
    let limit = T::max_value().sqrt();
    let mut weights = Vec::with_capacity(capacity + 1);
    weights.push(T::one());
    for state in 1..=capacity {
        let next = weights[state - 1] * chain.birth_rate(state - 1) / chain.death_rate(state);
        weights.push(next);
        if next > limit {
            for w in weights.iter_mut() {
                *w = *w / next;
            }
        }
    }
    let total: T = weights.iter().copied().sum();
    for w in weights.iter_mut() {
        *w = *w / total;
    }
    SteadyStateDistribution {
        probabilities: weights,
    }
}

/// Independent reference solution: the full global-balance system `πQ = 0`
/// with one equation replaced by `Σπ = 1`, solved densely by LU.
pub fn steady_state_oracle<T>(
    chain: &BirthDeathChain<T>,
) -> Result<SteadyStateDistribution<T>, ChainError>
where
    T: Scalar + RealField,
{
    let capacity = chain.capacity();
    if capacity > ORACLE_MAX_CAPACITY {
        return Err(ChainError::TooLarge {
            capacity,
            limit: ORACLE_MAX_CAPACITY,
        });
    }
    let states = capacity + 1;
    // generator matrix, rows = from-state
    let mut generator = DMatrix::<T>::zeros(states, states);
    for i in 0..states {
        if i < capacity {
            generator[(i, i + 1)] = chain.birth_rate(i);
        }
        if i > 0 {
            generator[(i, i - 1)] = chain.death_rate(i);
        }
        let out: T = generator.row(i).iter().copied().sum();
        generator[(i, i)] = -out;
    }
    let mut system = generator.transpose();
    let mut rhs = DVector::<T>::zeros(states);
    for j in 0..states {
        system[(states - 1, j)] = T::one();
    }
    rhs[states - 1] = T::one();

    let solution = system.lu().solve(&rhs).ok_or(ChainError::Singular)?;
    let probabilities = solution
        .iter()
        .map(|&p| if p < T::zero() { T::zero() } else { p })
        .collect();
    Ok(SteadyStateDistribution { probabilities })
}

/// Per-class blocking and channel usage of a solved chain.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockingReport<T> {
    pub blocking: Vec<T>,
    /// Mean fraction of busy channels.
    pub utilization: T,
    /// Admitted traffic in erlangs, `Σ λ_m (1 - B_m) / μ`.
    pub carried_load: T,
    pub mean_occupancy: T,
}

impl<T: Scalar> BlockingReport<T> {
    /// Rate-weighted blocking over all classes; zero when nothing is offered.
    pub fn overall_blocking(&self, rates: &RateVector<T>) -> T {
        let total = rates.total();
        if total <= T::zero() {
            return T::zero();
        }
        rates
            .iter()
            .zip(&self.blocking)
            .map(|(rate, &b)| rate * b)
            .sum::<T>()
            / total
    }
}

/// `B_m = Σ_{i ≥ N_m} P_i`, with utilization and carried load.
pub fn blocking_report<T: Scalar>(
    distribution: &SteadyStateDistribution<T>,
    thresholds: &ThresholdVector<T>,
    rates: &RateVector<T>,
    service_rate: T,
) -> Result<BlockingReport<T>, ChainError> {
    if distribution.capacity() != thresholds.capacity() {
        return Err(ChainError::CapacityMismatch {
            distribution: distribution.capacity(),
            thresholds: thresholds.capacity(),
        });
    }
    if thresholds.class_count() != rates.len() {
        return Err(ChainError::ClassCountMismatch {
            thresholds: thresholds.class_count(),
            rates: rates.len(),
        });
    }
    let tails = distribution.tails();
    let blocking: Vec<T> = thresholds.as_slice().iter().map(|&n| tails[n]).collect();
    let carried_load = rates
        .iter()
        .zip(&blocking)
        .map(|(rate, &b)| rate * (T::one() - b))
        .sum::<T>()
        / service_rate;
    let mean_occupancy = distribution.mean_occupancy();
    Ok(BlockingReport {
        blocking,
        utilization: mean_occupancy / T::from_count(distribution.capacity()),
        carried_load,
        mean_occupancy,
    })
}

/// Builds, solves and reports in one step.
pub fn analyze<T: Scalar>(
    thresholds: &ThresholdVector<T>,
    rates: &RateVector<T>,
    service_rate: T,
) -> Result<BlockingReport<T>, ChainError> {
    let chain = build_chain(thresholds, rates, service_rate)?;
    blocking_report(&steady_state(&chain), thresholds, rates, service_rate)
}

/// Erlang B blocking for `channels` servers and `offered` erlangs.
pub fn erlang_b<T: Scalar>(channels: usize, offered: T) -> T {
    (1..=channels).fold(T::one(), |b, k| {
        let ab = offered * b;
        ab / (T::from_count(k) + ab)
    })
}

/// One load point of an analytic curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint<T> {
    pub lambda_total: T,
    pub load: LoadCondition,
    pub thresholds: ThresholdVector<T>,
    pub report: BlockingReport<T>,
}

/// Evaluates the chain at each total rate, recomputing thresholds from
/// `mix · λ_T`. Light points share the full pool.
pub fn quasi_stationary_curve<T: Scalar>(
    params: &SystemParams<T>,
    mix: &ClassMix<T>,
    grid: &[T],
) -> Result<Vec<CurvePoint<T>>, ChainError> {
    if mix.len() != params.class_count() {
        return Err(TrafficError::ClassCountMismatch {
            expected: params.class_count(),
            got: mix.len(),
        }
        .into());
    }
    grid.iter()
        .map(|&lambda_total| {
            if !(lambda_total.is_finite() && lambda_total > T::zero()) {
                return Err(ChainError::InvalidLoadPoint(as_f64(lambda_total)));
            }
            let rates = mix.rates(lambda_total)?;
            let load = classify_load(&rates, params);
            let thresholds = match load {
                LoadCondition::Light => {
                    ThresholdVector::uniform(params.capacity(), params.class_count())?
                }
                LoadCondition::High => availability_thresholds(&rates, params)?,
            };
            let report = analyze(&thresholds, &rates, params.service_rate())?;
            Ok(CurvePoint {
                lambda_total,
                load,
                thresholds,
                report,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thresholds(t: &[usize]) -> ThresholdVector<f64> {
        ThresholdVector::fixed(t.to_vec()).unwrap()
    }

    fn rates(r: &[f64]) -> RateVector<f64> {
        RateVector::new(r.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn chain_segments() {
        let chain = build_chain(&thresholds(&[4, 3, 2]), &rates(&[1.0, 1.0, 1.0]), 1.0).unwrap();
        assert_eq!(chain.birth_rates(), &[3.0, 3.0, 2.0, 1.0]);
        assert_eq!(chain.birth_rate(4), 0.0);
        assert_eq!(chain.death_rate(3), 3.0);

        let chain = build_chain(&thresholds(&[5, 5, 5]), &rates(&[1.0, 2.0, 0.5]), 2.0).unwrap();
        assert!(chain.birth_rates().iter().all(|&b| b == 3.5));

        // N_2 = N leaves no class-1-only segment
        let chain = build_chain(&thresholds(&[4, 4, 1]), &rates(&[1.0, 2.0, 4.0]), 1.0).unwrap();
        assert_eq!(chain.birth_rates(), &[7.0, 3.0, 3.0, 3.0]);

        assert!(matches!(
            build_chain(&thresholds(&[4, 3]), &rates(&[1.0, 1.0, 1.0]), 1.0),
            Err(ChainError::ClassCountMismatch { .. })
        ));
        assert!(matches!(
            BirthDeathChain::from_birth_rates(vec![1.0, 2.0], 1.0),
            Err(ChainError::IncreasingBirthRate { state: 1 })
        ));
        assert!(BirthDeathChain::from_birth_rates(vec![1.0], 0.0).is_err());
        assert!(BirthDeathChain::<f64>::from_birth_rates(vec![], 1.0).is_err());
    }

    #[test]
    fn two_state_balance() {
        let chain = BirthDeathChain::erlang(1, 1.0, 1.0).unwrap();
        assert_eq!(steady_state(&chain).probabilities(), &[0.5, 0.5]);
        let oracle = steady_state_oracle(&chain).unwrap();
        assert!(close(oracle.probabilities()[0], 0.5, 1e-15));
    }

    #[test]
    fn benchmark_weights() {
        let chain = build_chain(&thresholds(&[4, 3, 2]), &rates(&[1.0, 1.0, 1.0]), 1.0).unwrap();
        let dist = steady_state(&chain);
        let expected = [1.0, 3.0, 4.5, 3.0, 0.75].map(|w| w / 12.25);
        for (p, e) in dist.probabilities().iter().zip(expected) {
            assert!(close(*p, e, 1e-15));
        }
        let oracle = steady_state_oracle(&chain).unwrap();
        for (p, e) in oracle.probabilities().iter().zip(expected) {
            assert!(close(*p, e, 1e-12));
        }
    }

    #[test]
    fn empty_system() {
        let chain = BirthDeathChain::erlang(6, 0.0, 1.0).unwrap();
        let dist = steady_state(&chain);
        assert_eq!(dist.probabilities()[0], 1.0);
        assert!(dist.probabilities()[1..].iter().all(|&p| p == 0.0));
        let oracle = steady_state_oracle(&chain).unwrap();
        assert!(close(oracle.probabilities()[0], 1.0, 1e-15));

        let t = thresholds(&[6, 4, 2]);
        let report = analyze(&t, &rates(&[0.0, 0.0, 0.0]), 1.0).unwrap();
        assert_eq!(report.blocking, vec![0.0; 3]);
        assert_eq!(report.utilization, 0.0);
    }

    #[test]
    fn benchmark_blocking() {
        let t = thresholds(&[4, 3, 2]);
        let r = rates(&[1.0, 1.0, 1.0]);
        let report = analyze(&t, &r, 1.0).unwrap();
        assert!(close(report.blocking[0], 3.0 / 49.0, 1e-15));
        assert!(close(report.blocking[1], 15.0 / 49.0, 1e-15));
        assert!(close(report.blocking[2], 33.0 / 49.0, 1e-15));
        assert!(close(report.utilization, 24.0 / 49.0, 1e-15));
        assert!(close(report.mean_occupancy, report.carried_load, 1e-14));
    }

    #[test]
    fn degenerate_is_erlang_b() {
        let t = thresholds(&[2, 2, 2]);
        let report = analyze(&t, &rates(&[0.5, 0.25, 0.25]), 1.0).unwrap();
        for b in report.blocking {
            assert!(close(b, 0.2, 1e-15));
        }
    }

    #[test]
    fn erlang_b_values() {
        assert_eq!(erlang_b(1, 1.0), 0.5);
        assert!(close(erlang_b(2, 1.0), 0.2, 1e-16));
        // (27/8) / (1 + 3 + 9/2 + 9/2 + 27/8) = 27/131
        assert!(close(erlang_b(4, 3.0), 27.0 / 131.0, 1e-15));
        assert_eq!(erlang_b(0, 3.0), 1.0);
        assert_eq!(erlang_b(5, 0.0), 0.0);
        assert!((erlang_b(4, 3.0f32) - 0.206_107).abs() < 1e-6);
    }

    #[test]
    fn oracle_size_limit() {
        let chain = BirthDeathChain::erlang(ORACLE_MAX_CAPACITY + 1, 1.0, 1.0).unwrap();
        assert!(matches!(
            steady_state_oracle(&chain),
            Err(ChainError::TooLarge { .. })
        ));
    }

    #[test]
    fn large_capacity_does_not_overflow() {
        let chain = BirthDeathChain::erlang(1500, 1400.0, 1.0).unwrap();
        let dist = steady_state(&chain);
        let total: f64 = dist.probabilities().iter().sum();
        assert!(close(total, 1.0, 1e-12));
        assert!(dist.probabilities().iter().all(|p| p.is_finite()));
        let b = *dist.probabilities().last().unwrap();
        assert!(close(b, erlang_b(1500, 1400.0), 1e-12));
    }

    #[test]
    fn curve_light_and_high() {
        let params = SystemParams::new(10, 5, 0.9, 1.0, 3).unwrap();
        let mix = ClassMix::<f64>::uniform(3).unwrap();
        let curve = quasi_stationary_curve(&params, &mix, &[4.0, 12.0]).unwrap();

        assert_eq!(curve[0].load, LoadCondition::Light);
        let eb = erlang_b(10, 4.0);
        for &b in &curve[0].report.blocking {
            assert!(close(b, eb, 1e-12));
        }

        assert_eq!(curve[1].load, LoadCondition::High);
        assert_eq!(curve[1].thresholds.as_slice(), &[10, 9, 7]);
        let b = &curve[1].report.blocking;
        assert!(b[0] < b[1] && b[1] < b[2]);

        assert!(quasi_stationary_curve(&params, &mix, &[]).unwrap().is_empty());
        assert!(matches!(
            quasi_stationary_curve(&params, &mix, &[0.0]),
            Err(ChainError::InvalidLoadPoint(_))
        ));
    }

    #[test]
    fn mismatched_report_inputs() {
        let chain = BirthDeathChain::erlang(3, 1.0, 1.0).unwrap();
        let dist = steady_state(&chain);
        assert!(matches!(
            blocking_report(&dist, &thresholds(&[4, 3]), &rates(&[1.0, 1.0]), 1.0),
            Err(ChainError::CapacityMismatch { .. })
        ));
    }

    #[test]
    fn single_precision_solver() {
        let t = ThresholdVector::<f32>::fixed(vec![4, 3, 2]).unwrap();
        let r = RateVector::new(vec![1.0f32, 1.0, 1.0]).unwrap();
        let report = analyze(&t, &r, 1.0).unwrap();
        assert!((report.blocking[0] - 3.0 / 49.0).abs() < 1e-6);
        let chain = build_chain(&t, &r, 1.0).unwrap();
        let oracle = steady_state_oracle(&chain).unwrap();
        assert!((oracle.probabilities()[4] - 0.75 / 12.25).abs() < 1e-6);
    }
}
