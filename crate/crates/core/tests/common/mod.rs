//! Test-only reference computations shared by the integration suites.

#![allow(dead_code)]

use num_rational::Ratio;

pub type Q = Ratio<i128>;

pub fn q(num: i128, den: i128) -> Q {
    Ratio::new(num, den)
}

pub fn to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

fn pow(base: Q, exp: usize) -> Q {
    (0..exp).fold(Q::from_integer(1), |acc, _| acc * base)
}

fn factorial(n: usize) -> Q {
    (1..=n as i128).fold(Q::from_integer(1), |acc, k| acc * k)
}

/// Exact three-class closed form: state weights built from the segment
/// products `λx^min(i,N3) · λy^… · λ1^…` over `μ^i i!`, then normalized.
/// Returns (P_0..P_N, [B1, B2, B3], mean occupancy).
pub struct ExactSolution {
    pub probabilities: Vec<Q>,
    pub blocking: [Q; 3],
    pub mean_occupancy: Q,
}

pub fn three_class_closed_form(
    capacity: usize,
    n2: usize,
    n3: usize,
    rates: [Q; 3],
    service_rate: Q,
) -> ExactSolution {
    assert!(capacity >= n2 && n2 >= n3);
    let [l1, l2, l3] = rates;
    let lx = l1 + l2 + l3;
    let ly = l1 + l2;
    let weight = |i: usize| -> Q {
        let numerator = if i <= n3 {
            pow(lx, i)
        } else if i <= n2 {
            pow(lx, n3) * pow(ly, i - n3)
        } else {
            pow(lx, n3) * pow(ly, n2 - n3) * pow(l1, i - n2)
        };
        numerator / (pow(service_rate, i) * factorial(i))
    };
    let weights: Vec<Q> = (0..=capacity).map(weight).collect();
    let p0 = Q::from_integer(1) / weights.iter().copied().fold(Q::from_integer(0), |a, b| a + b);
    let probabilities: Vec<Q> = weights.iter().map(|&w| w * p0).collect();
    let tail = |from: usize| {
        probabilities[from..]
            .iter()
            .copied()
            .fold(Q::from_integer(0), |a, b| a + b)
    };
    let mean_occupancy = probabilities
        .iter()
        .enumerate()
        .fold(Q::from_integer(0), |acc, (i, &p)| acc + p * i as i128);
    ExactSolution {
        blocking: [tail(capacity), tail(n2), tail(n3)],
        probabilities,
        mean_occupancy,
    }
}
