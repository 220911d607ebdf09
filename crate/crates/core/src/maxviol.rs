//! Direct maximisation of `K3` over the inter-measurement unitaries.
//!
//! `K3` is linear in the initial state, `K3 = Tr(rho G)`, so for fixed
//! unitaries the best state is the top eigenvector of `G` and the search only
//! runs over `(U21, U32)`. The evolution up to the first measurement is
//! absorbed into the state. Each unitary is `exp(-i A(p))` for a Hermitian
//! `A` assembled from `N^2` real parameters; the gradient of the top
//! eigenvalue with respect to those parameters is computed in closed form
//! and fed to a limited-memory BFGS ascent with Armijo backtracking.

use std::collections::VecDeque;
use std::hash::{DefaultHasher, Hash, Hasher};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{canonical_labels, DensityMatrix, MeasurementScheme};
use crate::qcore::{c64, hermitian_eigen, CMatrix};

/// Parameters of one `N x N` unitary: `N` diagonal entries of the generator
/// followed by `(re, im)` of each upper off-diagonal entry, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryParams {
    dim: usize,
    angles: Vec<f64>,
}

impl UnitaryParams {
    pub fn new(dim: usize, angles: Vec<f64>) -> Result<Self> {
        if angles.len() != dim * dim {
            return Err(Error::InvalidParameter(format!(
                "U({dim}) needs {} parameters, got {}",
                dim * dim,
                angles.len()
            )));
        }
        Ok(Self { dim, angles })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, angles: vec![0.0; dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// The Hermitian generator `A(p)`.
    pub fn generator(&self) -> CMatrix {
        generator(self.dim, &self.angles)
    }
}

fn generator(n: usize, p: &[f64]) -> CMatrix {
    let mut a = CMatrix::zeros(n, n);
    for k in 0..n {
        a[(k, k)] = c64(p[k], 0.0);
    }
    let mut idx = n;
    for k in 0..n {
        for l in (k + 1)..n {
            let z = c64(p[idx], p[idx + 1]);
            a[(k, l)] = z;
            a[(l, k)] = z.conj();
            idx += 2;
        }
    }
    a
}

/// `U = exp(-i A(p))`.
pub fn params_to_unitary(p: &UnitaryParams) -> CMatrix {
    ParamUnitary::new(p.dim, &p.angles).unitary
}

/// A unitary together with the spectral data needed to differentiate it.
struct ParamUnitary {
    values: DVector<f64>,
    vectors: CMatrix,
    unitary: CMatrix,
}

impl ParamUnitary {
    fn new(n: usize, p: &[f64]) -> Self {
        let (values, vectors) = hermitian_eigen(&generator(n, p));
        let unitary = crate::qcore::spectral_apply(&values, &vectors, |l| Complex64::from_polar(1.0, -l));
        Self { values, vectors, unitary }
    }

    /// Pulls a matrix gradient `E` (with `df = Re Tr(E^dagger dU)`) back to
    /// the generator parameters, written into `out`.
    fn pullback(&self, e: &CMatrix, out: &mut [f64]) {
        let n = self.values.len();
        let v = &self.vectors;
        let b = v.adjoint() * e * v;
        // divided differences of exp(-i x), written with sinc for stability
        let mut f = CMatrix::zeros(n, n);
        for a in 0..n {
            for c in 0..n {
                let (la, lc) = (self.values[a], self.values[c]);
                let half = 0.5 * (la - lc);
                let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
                let phi = c64(0.0, -1.0) * Complex64::from_polar(1.0, -0.5 * (la + lc)) * sinc;
                f[(a, c)] = phi.conj() * b[(a, c)];
            }
        }
        let ea = v * f * v.adjoint();
        for k in 0..n {
            out[k] = ea[(k, k)].re;
        }
        let mut idx = n;
        for k in 0..n {
            for l in (k + 1)..n {
                out[idx] = ea[(k, l)].re + ea[(l, k)].re;
                out[idx + 1] = ea[(k, l)].im - ea[(l, k)].im;
                idx += 2;
            }
        }
    }
}

/// The operator `G` with `K3 = Tr(rho G)`, where `rho` is the state at the
/// first measurement.
pub fn k3_operator(u21: &CMatrix, u32_: &CMatrix, scheme: &MeasurementScheme) -> CMatrix {
    let q = scheme.observable();
    let u31 = u32_ * u21;
    let heis = |u: &CMatrix| u.adjoint() * &q * u;
    let g21 = scheme.weighted_pinch(&heis(u21));
    let g32 = u21.adjoint() * scheme.weighted_pinch(&heis(u32_)) * u21;
    let g31 = scheme.weighted_pinch(&heis(&u31));
    g21 + g32 - g31
}

/// Optimal initial state for fixed unitaries and the `K3` it attains.
///
/// With `u10 = None` the state is the one at the first measurement. With
/// `Some(U10)` it is the state at `t = 0`, i.e. `G` is pulled back through
/// `U10`.
pub fn best_initial_state(
    u10: Option<&CMatrix>,
    u21: &CMatrix,
    u32_: &CMatrix,
    scheme: &MeasurementScheme,
) -> Result<(DensityMatrix, f64)> {
    let n = scheme.dim();
    for u in [Some(u21), Some(u32_), u10].into_iter().flatten() {
        if u.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: u.nrows() });
        }
    }
    let mut g = k3_operator(u21, u32_, scheme);
    if let Some(u) = u10 {
        g = u.adjoint() * g * u;
    }
    let (values, vectors) = hermitian_eigen(&g);
    let top = vectors.column(n - 1).into_owned();
    Ok((DensityMatrix::pure(&top)?, values[n - 1]))
}

/// `K3` (top eigenvalue of `G`) and its gradient over the concatenated
/// parameters of `(U21, U32)`.
fn objective(scheme: &MeasurementScheme, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let n = scheme.dim();
    let np = n * n;
    let w = ParamUnitary::new(n, &x[..np]);
    let s = ParamUnitary::new(n, &x[np..]);
    let (uw, us) = (&w.unitary, &s.unitary);
    let q = scheme.observable();
    let v = us * uw;
    let pinch_s = scheme.weighted_pinch(&(us.adjoint() * &q * us));
    let g = scheme.weighted_pinch(&(uw.adjoint() * &q * uw)) + uw.adjoint() * &pinch_s * uw
        - scheme.weighted_pinch(&(v.adjoint() * &q * &v));
    let (values, vectors) = hermitian_eigen(&g);
    let value = values[n - 1];
    if let Some(grad) = grad {
        let psi = vectors.column(n - 1);
        let p = psi * psi.adjoint();
        let dp = scheme.weighted_pinch(&p);
        let two = c64(2.0, 0.0);
        let e_v = &q * &v * &dp * c64(-2.0, 0.0);
        let e_w = (&q * uw * &dp + &pinch_s * uw * &p) * two + us.adjoint() * &e_v;
        let e_s = &q * us * scheme.weighted_pinch(&(uw * &p * uw.adjoint())) * two + &e_v * uw.adjoint();
        let (gw, gs) = grad.split_at_mut(np);
        w.pullback(&e_w, gw);
        s.pullback(&e_s, gs);
    }
    value
}

/// `K3` at the optimal initial state for concatenated `(U21, U32)` parameters.
pub fn k3_of_params(scheme: &MeasurementScheme, x: &[f64]) -> f64 {
    objective(scheme, x, None)
}

/// Analytic gradient of [`k3_of_params`].
pub fn k3_gradient(scheme: &MeasurementScheme, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    objective(scheme, x, Some(&mut g));
    g
}

/// Stopping rules for one local ascent.
#[derive(Debug, Clone, Copy)]
pub struct AscentOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Relative improvement below which an iteration counts as stalled.
    pub stall_tol: f64,
    pub stall_iters: usize,
    pub memory: usize,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-8, max_iter: 10_000, stall_tol: 1e-13, stall_iters: 25, memory: 12 }
    }
}

#[derive(Debug, Clone)]
struct Ascent {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS ascent with Armijo backtracking.
fn lbfgs_ascent<F>(mut eval: F, x0: Vec<f64>, opts: &AscentOptions) -> Ascent
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; dim];
    let mut f = eval(&x, &mut g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stalled = 0;
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    for iter in 0..opts.max_iter {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < opts.grad_tol {
            return Ascent { x, value: f, iterations: iter, converged: true };
        }
        // two-loop recursion on the ascent problem (curvature pairs of -f)
        let mut d = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gnorm.max(1.0),
        };
        for di in d.iter_mut() {
            *di *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope > 0.0) {
            history.clear();
            d = g.iter().map(|v| v / gnorm.max(1.0)).collect();
            slope = dot(&g, &d);
        }
        let mut step = 1.0;
        let mut f_new;
        loop {
            for i in 0..dim {
                x_new[i] = x[i] + step * d[i];
            }
            f_new = eval(&x_new, &mut g_new);
            if f_new >= f + 1e-4 * step * slope || step < 1e-16 {
                break;
            }
            step *= 0.5;
        }
        if !(f_new >= f) {
            // line search failed to improve: treat as converged to precision
            return Ascent { x, value: f, iterations: iter, converged: true };
        }
        let s: Vec<f64> = (0..dim).map(|i| x_new[i] - x[i]).collect();
        // y for minimising -f
        let y: Vec<f64> = (0..dim).map(|i| g[i] - g_new[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let improvement = f_new - f;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        if improvement <= opts.stall_tol * (1.0 + f.abs()) {
            stalled += 1;
            if stalled >= opts.stall_iters {
                return Ascent { x, value: f, iterations: iter + 1, converged: true };
            }
        } else {
            stalled = 0;
        }
    }
    Ascent { x, value: f, iterations: opts.max_iter, converged: false }
}

/// Best `K3` found for a scheme, with operators that reproduce it.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub k3_max: f64,
    pub u21: CMatrix,
    pub u32: CMatrix,
    /// State at the first measurement (pure).
    pub rho0: DensityMatrix,
    pub restarts_used: usize,
    pub converged: bool,
    pub params: Vec<f64>,
    pub iterations: usize,
}

/// Restart count used when the caller does not specify one.
pub fn default_restarts(n: usize) -> usize {
    if n <= 5 {
        50
    } else {
        200
    }
}

fn param_hash(x: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for v in x {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

fn random_start(np: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..2 * np).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
}

/// One local ascent from the start point drawn with `seed`.
fn single_restart(scheme: &MeasurementScheme, seed: u64, opts: &AscentOptions) -> Ascent {
    let np = scheme.dim() * scheme.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = random_start(np, &mut rng);
    lbfgs_ascent(|x, g| objective(scheme, x, Some(g)), x0, opts)
}

/// Multi-start maximisation of `K3` for a fixed scheme. Restart `i` draws its
/// start point from `seed + i`; the best run wins, ties broken by the
/// smaller parameter hash.
pub fn maximize_k3(scheme: &MeasurementScheme, restarts: usize, seed: u64) -> Result<OptimizationResult> {
    maximize_k3_with(scheme, restarts, seed, &AscentOptions::default())
}

pub fn maximize_k3_with(
    scheme: &MeasurementScheme,
    restarts: usize,
    seed: u64,
    opts: &AscentOptions,
) -> Result<OptimizationResult> {
    if restarts == 0 {
        return Err(Error::InvalidParameter("at least one restart is required".into()));
    }
    let runs: Vec<Ascent> =
        (0..restarts as u64).into_par_iter().map(|i| single_restart(scheme, seed.wrapping_add(i), opts)).collect();
    let best = runs
        .iter()
        .max_by(|a, b| a.value.total_cmp(&b.value).then_with(|| param_hash(&b.x).cmp(&param_hash(&a.x))))
        .expect("restarts >= 1");
    let n = scheme.dim();
    let np = n * n;
    let u21 = ParamUnitary::new(n, &best.x[..np]).unitary;
    let u32_ = ParamUnitary::new(n, &best.x[np..]).unitary;
    let (rho0, k3) = best_initial_state(None, &u21, &u32_, scheme)?;
    Ok(OptimizationResult {
        k3_max: k3,
        u21,
        u32: u32_,
        rho0,
        restarts_used: restarts,
        converged: best.converged,
        params: best.x.clone(),
        iterations: best.iterations,
    })
}

/// Every labelling of `m` blocks using both signs, one per global flip
/// (the first block always reads `+1`).
pub fn sign_patterns(m: usize) -> Vec<Vec<i8>> {
    (1u32..(1u32 << (m - 1)))
        .map(|mask| {
            let mut q = vec![1i8; m];
            for (k, slot) in q.iter_mut().enumerate().skip(1) {
                if mask & (1 << (k - 1)) != 0 {
                    *slot = -1;
                }
            }
            q
        })
        .collect()
}

/// Maximises every sign pattern for the given blocks; results in the order
/// of [`sign_patterns`].
pub fn enumerate_labelings(
    dim: usize,
    blocks: &[Vec<usize>],
    restarts: usize,
    seed: u64,
) -> Result<Vec<(Vec<i8>, OptimizationResult)>> {
    sign_patterns(blocks.len())
        .into_iter()
        .map(|q| {
            let scheme = MeasurementScheme::new(dim, blocks.to_vec(), q.clone())?;
            Ok((q, maximize_k3(&scheme, restarts, seed)?))
        })
        .collect()
}

/// Block sizes for `M` blocks on `N` levels, up to relabelling of the `+1`
/// blocks: the `-1` block comes last, the `+1` sizes are non-increasing.
pub fn block_size_patterns(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn partitions(total: usize, parts: usize, cap: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 0 {
            if total == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        let hi = cap.min(total.saturating_sub(parts - 1));
        for s in (1..=hi).rev() {
            if total - s < parts - 1 {
                continue;
            }
            prefix.push(s);
            partitions(total - s, parts - 1, s, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if m < 2 || n < m {
        return out;
    }
    for minus in 1..=(n - m + 1) {
        let mut plus = Vec::new();
        partitions(n - minus, m - 1, n, &mut Vec::new(), &mut plus);
        for mut sizes in plus {
            sizes.push(minus);
            out.push(sizes);
        }
    }
    out
}

/// Every labelled block structure on `N` levels with `M` blocks, up to
/// reordering of blocks and a global sign flip. Each entry is
/// `(sizes, q)` with `+1` blocks first.
pub fn labeled_patterns(n: usize, m: usize) -> Vec<(Vec<usize>, Vec<i8>)> {
    let mut seen = std::collections::BTreeSet::new();
    if m < 2 || n < m {
        return Vec::new();
    }
    let partitions: Vec<Vec<usize>> = block_size_patterns(n, m)
        .into_iter()
        .map(|mut s| {
            s.sort_unstable_by(|a, b| b.cmp(a));
            s
        })
        .collect();
    for sizes in partitions {
        for mask in 1u32..(1u32 << m) - 1 {
            let mut pairs: Vec<(i8, usize)> =
                sizes.iter().enumerate().map(|(k, &sz)| (if mask & (1 << k) != 0 { -1 } else { 1 }, sz)).collect();
            let mut flipped: Vec<(i8, usize)> = pairs.iter().map(|&(q, sz)| (-q, sz)).collect();
            pairs.sort_unstable_by(|a, b| b.cmp(a));
            flipped.sort_unstable_by(|a, b| b.cmp(a));
            seen.insert(pairs.max(flipped));
        }
    }
    seen.into_iter()
        .rev()
        .map(|pairs| (pairs.iter().map(|p| p.1).collect(), pairs.iter().map(|p| p.0).collect()))
        .collect()
}

/// One row of the `(M, N)` maximisation table.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub k3_max: f64,
    pub block_sizes: Vec<usize>,
    pub q: Vec<i8>,
    pub restarts: usize,
    pub converged: bool,
}

/// Maximum over block-size patterns for one `(M, N)` with the canonical
/// labelling (only the last block reads `-1`).
pub fn maximize_pair(m: usize, n: usize, restarts: usize, seed: u64) -> Result<(TableRow, OptimizationResult)> {
    if m < 2 || n < m {
        return Err(Error::InvalidParameter(format!("need 2 <= M <= N, got M={m}, N={n}")));
    }
    let mut best: Option<(TableRow, OptimizationResult)> = None;
    for sizes in block_size_patterns(n, m) {
        let scheme = MeasurementScheme::from_block_sizes(&sizes, canonical_labels(m))?;
        let res = maximize_k3(&scheme, restarts, seed)?;
        if best.as_ref().is_none_or(|(row, _)| res.k3_max > row.k3_max) {
            let row = TableRow {
                m,
                n,
                k3_max: res.k3_max,
                block_sizes: sizes,
                q: canonical_labels(m),
                restarts,
                converged: res.converged,
            };
            best = Some((row, res));
        }
    }
    Ok(best.expect("at least one block pattern"))
}

/// Runs [`maximize_pair`] for every `(M, N)`; `restarts = None` uses
/// [`default_restarts`].
pub fn table1_sweep(pairs: &[(usize, usize)], restarts: Option<usize>, seed: u64) -> Result<Vec<TableRow>> {
    pairs
        .iter()
        .map(|&(m, n)| {
            let r = restarts.unwrap_or_else(|| default_restarts(n));
            maximize_pair(m, n, r, seed).map(|(row, _)| row)
        })
        .collect()
}
