//! The precessing-spin example: a spin-j under `H = Omega Jx`, prepared in
//! `|-j>`, measured in the `Jz` basis at `Omega t1 = pi`, `t1 + tau`,
//! `t1 + 2 tau`.
//!
//! Besides the simulation this module carries the closed forms known for the
//! model: the `N = 3` trigonometric polynomial and the `Omega tau = pi/2`
//! correlators with their large-spin asymptote.

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::measure::{lgi_k3, DensityMatrix, LgiResult, MeasurementScheme};
use crate::qcore::{Precession, SpinParams};

/// Coarse grid step (in `Omega tau`) used before golden-section refinement.
pub const COARSE_STEP: f64 = 0.01;

/// Spin, measurement scheme, initial state and first measurement time.
#[derive(Debug, Clone)]
pub struct SpinModel {
    params: SpinParams,
    scheme: MeasurementScheme,
    initial: DensityMatrix,
    first_angle: f64,
    precession: Precession,
}

impl SpinModel {
    /// von Neumann scheme with only `|-j>` reading `-1`, initial state `|-j>`,
    /// `Omega t1 = pi`.
    pub fn new(params: SpinParams) -> Result<Self> {
        let n = params.dim();
        Ok(Self {
            scheme: MeasurementScheme::von_neumann(n)?,
            initial: DensityMatrix::basis_state(n, n - 1)?,
            first_angle: PI,
            precession: Precession::new(&params),
            params,
        })
    }

    pub fn from_twice_j(twice_j: u32) -> Result<Self> {
        Self::new(SpinParams::from_twice_j(twice_j, 1.0)?)
    }

    pub fn with_scheme(mut self, scheme: MeasurementScheme) -> Result<Self> {
        if scheme.dim() != self.params.dim() {
            return Err(Error::DimensionMismatch { expected: self.params.dim(), found: scheme.dim() });
        }
        self.scheme = scheme;
        Ok(self)
    }

    pub fn with_initial(mut self, rho: DensityMatrix) -> Result<Self> {
        if rho.dim() != self.params.dim() {
            return Err(Error::DimensionMismatch { expected: self.params.dim(), found: rho.dim() });
        }
        self.initial = rho;
        Ok(self)
    }

    /// Overrides `Omega t1`.
    pub fn with_first_angle(mut self, angle: f64) -> Self {
        self.first_angle = angle;
        self
    }

    pub fn params(&self) -> &SpinParams {
        &self.params
    }

    pub fn scheme(&self) -> &MeasurementScheme {
        &self.scheme
    }

    /// Full density-matrix simulation at spacing `Omega tau`.
    pub fn lgi_at(&self, omega_tau: f64) -> Result<LgiResult> {
        let u10 = self.precession.rotate(self.first_angle);
        let step = self.precession.rotate(omega_tau);
        lgi_k3(&self.initial, &u10, &step, &step, &self.scheme)
    }

    pub fn k3_at(&self, omega_tau: f64) -> Result<f64> {
        Ok(self.lgi_at(omega_tau)?.k3)
    }
}

/// A model plus the `Omega tau` values to evaluate.
#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub model: SpinModel,
    pub tau_grid: Vec<f64>,
}

/// `steps` equally spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 grid points, got {steps}")));
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::InvalidParameter(format!("bad interval [{lo}, {hi}]")));
    }
    let h = (hi - lo) / (steps - 1) as f64;
    Ok((0..steps).map(|i| lo + h * i as f64).collect())
}

/// `(Omega tau, K3)` over the grid.
pub fn k3_scan(config: &ScanConfig) -> Result<Vec<(f64, f64)>> {
    config.tau_grid.par_iter().map(|&tau| Ok((tau, config.model.k3_at(tau)?))).collect()
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`,
/// stopping once the bracket is narrower than `tol`.
pub fn golden_section_max<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// Largest `K3` over `Omega tau` in `window`: a coarse scan at
/// [`COARSE_STEP`] picks the best grid point, golden-section search refines
/// it to `1e-8` in `Omega tau`. Fails when the grid maximum sits on the
/// window edge.
pub fn find_max_tau(model: &SpinModel, window: (f64, f64)) -> Result<(f64, f64)> {
    let (lo, hi) = window;
    let steps = (((hi - lo) / COARSE_STEP).ceil() as usize + 1).max(3);
    let grid = uniform_grid(lo, hi, steps)?;
    let values = k3_scan(&ScanConfig { model: model.clone(), tau_grid: grid.clone() })?;
    let (best, _) = values.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).expect("grid is non-empty");
    if best == 0 || best == values.len() - 1 {
        return Err(Error::NoBracket { lo, hi });
    }
    golden_section_max(|t| model.k3_at(t), grid[best - 1], grid[best + 1], 1e-8)
}

/// `K3(tau) = 1/16 + 2 cos x - 5/4 cos 2x + 3/16 cos 4x` with `x = Omega tau`,
/// the exact `N = 3` curve of the default model.
pub fn k3_closed_form_n3(omega_tau: f64) -> f64 {
    let x = omega_tau;
    1.0 / 16.0 + 2.0 * x.cos() - 1.25 * (2.0 * x).cos() + 3.0 / 16.0 * (4.0 * x).cos()
}

/// Above this `2j` the central binomial ratio is taken from log-gamma.
const EXACT_BINOMIAL_LIMIT: u32 = 20;

fn central_binomial_exact(n: u32) -> u128 {
    // C(2n, n), exact while it fits
    (0..n as u128).fold(1u128, |acc, i| acc * (2 * n as u128 - i) / (i + 1))
}

/// `(4j)! / (4^{2j} [(2j)!]^2) = C(4j, 2j) / 16^j`.
pub fn central_binomial_ratio(twice_j: u32) -> f64 {
    if twice_j <= EXACT_BINOMIAL_LIMIT {
        central_binomial_exact(twice_j) as f64 / 4f64.powi(twice_j as i32)
    } else {
        central_binomial_ratio_log(twice_j)
    }
}

fn central_binomial_ratio_log(twice_j: u32) -> f64 {
    let t = twice_j as f64;
    (ln_gamma(2.0 * t + 1.0) - 2.0 * ln_gamma(t + 1.0) - t * 4f64.ln()).exp()
}

/// Correlators of the default model at `Omega tau = pi/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiCorrelators {
    pub c21: f64,
    pub c31: f64,
    pub c32: f64,
}

impl SiCorrelators {
    pub fn k3(&self) -> f64 {
        self.c21 + self.c32 - self.c31
    }
}

pub fn si_correlators(twice_j: u32) -> SiCorrelators {
    let pow2 = |e: i32| 2f64.powi(e);
    let t = twice_j as i32;
    SiCorrelators {
        c21: 1.0 - pow2(1 - t),
        c31: -1.0,
        // 4^{-j} = 2^{-2j}, 16^{-j} = 2^{-4j}
        c32: 1.0 - 2.0 * pow2(-t) + 4.0 * pow2(-2 * t) - 2.0 * central_binomial_ratio(twice_j),
    }
}

/// `K3 = 3 - 4^{1-j} + 4^{1-2j} - 2^{1-4j} (4j)! / [(2j)!]^2` at `Omega tau = pi/2`.
pub fn k3_special(twice_j: u32) -> f64 {
    let t = twice_j as i32;
    3.0 - 2f64.powi(2 - t) + 2f64.powi(2 - 2 * t) - 2.0 * central_binomial_ratio(twice_j)
}

/// Large-spin form `3 - sqrt(2 / (pi j))`.
pub fn k3_asymptote(j: f64) -> f64 {
    3.0 - (2.0 / (PI * j)).sqrt()
}

/// Simulated correlators of the default model at `Omega tau = pi/2`.
pub fn fixed_tau_lgi(twice_j: u32) -> Result<LgiResult> {
    SpinModel::from_twice_j(twice_j)?.lgi_at(FRAC_PI_2)
}
