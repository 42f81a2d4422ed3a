//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nvpol::kinetics::{build_rate_matrix, PopulationVector, PumpRates};
use rand::Rng;

/// Classical fourth-order Runge–Kutta integration of ṗ = M·p.
pub fn rk4(p0: &PopulationVector, rates: &PumpRates, t: f64, steps: usize) -> [f64; 9] {
    let m = *build_rate_matrix(rates).unwrap().matrix();
    let mut p = p0.to_vector();
    let h = t / steps as f64;
    for _ in 0..steps {
        let k1 = m * p;
        let k2 = m * (p + k1 * (h / 2.0));
        let k3 = m * (p + k2 * (h / 2.0));
        let k4 = m * (p + k3 * h);
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    std::array::from_fn(|i| p[i])
}

/// All-pairs solution written per nuclear projection k:
/// P(±1,k)(t) = P(±1,k)(0)·e^{−k_S t} and
/// P(0,k)(t) = 1/3 + C_k·e^{−3k_I t} + D_k·e^{−k_S t},
/// D_k = (k_S·q_k − k_I·Q)/(3k_I − k_S), q_k = P(−1,k)+P(+1,k), Q = Σq_k.
pub fn all_pairs_oracle(p0: &PopulationVector, rates: &PumpRates, t: f64) -> [f64; 9] {
    let p = p0.as_array();
    let (ks, ki) = (rates.k_s, rates.k_i);
    let es = (-ks * t).exp();
    let ei = (-3.0 * ki * t).exp();
    let q: [f64; 3] = std::array::from_fn(|k| p[3 + k] + p[6 + k]);
    let total: f64 = q.iter().sum();
    let mut out = [0.0; 9];
    for k in 0..3 {
        let d = (ks * q[k] - ki * total) / (3.0 * ki - ks);
        let c = p[k] - 1.0 / 3.0 - d;
        out[k] = 1.0 / 3.0 + c * ei + d * es;
        out[3 + k] = p[3 + k] * es;
        out[6 + k] = p[6 + k] * es;
    }
    out
}

pub fn random_population<R: Rng>(rng: &mut R) -> PopulationVector {
    let w: [f64; 9] = std::array::from_fn(|_| rng.random::<f64>());
    PopulationVector::normalize(w).unwrap()
}

/// Rates spanning an order of magnitude around typical values, away from 3k_I = k_S.
pub fn random_rates<R: Rng>(rng: &mut R) -> PumpRates {
    loop {
        let r = PumpRates {
            k_s: rng.random_range(0.5..10.0),
            k_i: rng.random_range(0.02..2.0),
            tau_d: 0.0,
            ..Default::default()
        };
        if (3.0 * r.k_i - r.k_s).abs() > 0.05 * r.k_s {
            return r;
        }
    }
}

pub fn max_abs_diff(a: &[f64; 9], b: &[f64; 9]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Fig. 4-style data: 20 log-spaced τ_L from 5 ns to 10 µs with Gaussian noise.
pub fn noisy_dataset(rates: &PumpRates, sigma: f64, seed: u64) -> nvpol::analysis::ObservationSet {
    noisy_dataset_from(rates, &PopulationVector::swap_initialized(), sigma, seed)
}

pub fn noisy_dataset_from(
    rates: &PumpRates,
    initial: &PopulationVector,
    sigma: f64,
    seed: u64,
) -> nvpol::analysis::ObservationSet {
    use nvpol::analysis::fit::{log_grid, synthesize_observations};
    use nvpol::analysis::{Observation, ObservationSet};
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    let clean =
        synthesize_observations(rates, &log_grid(0.005, 10.0, 20), initial, true).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut jitter = |v: f64| (v + noise.sample(&mut rng)).clamp(-1.0, 1.0);
    let rows = clean
        .rows()
        .iter()
        .map(|r| Observation {
            tau_l: r.tau_l,
            a_m1: jitter(r.a_m1),
            a_p1: jitter(r.a_p1),
            a_0: jitter(r.a_0),
            p_m1_0: r.p_m1_0.map(&mut jitter),
            sigma: Some(sigma),
        })
        .collect();
    ObservationSet::new(rows).unwrap()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
