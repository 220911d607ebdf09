#![allow(dead_code)]

use lgtc::measure::{DensityMatrix, MeasurementScheme};
use lgtc::qcore::{random_state_vector, random_unitary, CMatrix};
use num_complex::Complex64;
use rand::Rng;

pub struct Instance {
    pub scheme: MeasurementScheme,
    pub rho0: DensityMatrix,
    pub u10: CMatrix,
    pub u21: CMatrix,
    pub u32: CMatrix,
}

impl Instance {
    /// State at the first measurement.
    pub fn rho1(&self) -> DensityMatrix {
        self.rho0.evolve(&self.u10).unwrap()
    }
}

/// Block sizes summing to `n` with `m` parts, in random order.
pub fn random_sizes<R: Rng>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    let mut sizes = vec![1; m];
    for _ in 0..n - m {
        sizes[rng.random_range(0..m)] += 1;
    }
    sizes
}

/// Random ±1 labels using both signs.
pub fn random_labels<R: Rng>(m: usize, rng: &mut R) -> Vec<i8> {
    loop {
        let q: Vec<i8> = (0..m).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        if q.contains(&1) && q.contains(&-1) {
            return q;
        }
    }
}

/// Mixture of up to three random pure states.
pub fn random_state<R: Rng>(n: usize, rng: &mut R) -> DensityMatrix {
    let k = rng.random_range(1..=3);
    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut rho = CMatrix::zeros(n, n);
    for w in weights {
        let v = random_state_vector(n, rng);
        rho += &v * v.adjoint() * Complex64::new(w / total, 0.0);
    }
    DensityMatrix::new(rho).unwrap()
}

pub fn random_instance<R: Rng>(n: usize, m: usize, rng: &mut R) -> Instance {
    let sizes = random_sizes(n, m, rng);
    let q = random_labels(m, rng);
    Instance {
        scheme: MeasurementScheme::from_block_sizes(&sizes, q).unwrap(),
        rho0: random_state(n, rng),
        u10: random_unitary(n, rng),
        u21: random_unitary(n, rng),
        u32: random_unitary(n, rng),
    }
}
