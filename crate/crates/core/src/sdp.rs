//! Small dense primal-dual interior-point solver for linear matrix inequalities.
//!
//! Solves `maximize offset + c·y` subject to `S(y) = F0 + Σ y_k F_k ⪰ 0`, paired
//! with `minimize offset + tr(F0 X)` subject to `tr(F_k X) = -c_k`, `X ⪰ 0`.
//! Search directions are HKM with a Mehrotra predictor-corrector step.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Upper-triangle entry `(row, col, value)` of a symmetric matrix, `row <= col`.
pub type Entry = (usize, usize, f64);

#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub dim: usize,
    pub offset: f64,
    pub c: Vec<f64>,
    pub f0: Vec<Entry>,
    pub f: Vec<Vec<Entry>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Looser target accepted when rounding stalls progress.
    pub accept_tol: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200, step_fraction: 0.98, accept_tol: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub y: Vec<f64>,
    /// `offset + c·y`, a certified lower value for the maximum.
    pub dual_objective: f64,
    /// `offset + tr(F0 X)`, an upper bound once `X` is feasible.
    pub primal_objective: f64,
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    /// `S(y)`.
    pub slack: DMatrix<f64>,
    pub multiplier: DMatrix<f64>,
}

impl LmiProblem {
    pub fn new(dim: usize) -> Self {
        Self { dim, offset: 0.0, c: Vec::new(), f0: Vec::new(), f: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn push_var(&mut self, c: f64, entries: Vec<Entry>) -> usize {
        self.c.push(c);
        self.f.push(entries);
        self.c.len() - 1
    }

    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.dim, self.dim);
        add_sym(&mut s, &self.f0, 1.0);
        for (fk, &yk) in self.f.iter().zip(y) {
            add_sym(&mut s, fk, yk);
        }
        s
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("empty LMI".into()));
        }
        if self.c.len() != self.f.len() {
            return Err(Error::DimensionMismatch { expected: self.c.len(), found: self.f.len() });
        }
        for &(r, c, _) in self.f0.iter().chain(self.f.iter().flatten()) {
            if r > c || c >= self.dim {
                return Err(Error::InvalidParameter(format!("entry ({r}, {c}) outside upper triangle")));
            }
        }
        Ok(())
    }
}

fn add_sym(m: &mut DMatrix<f64>, entries: &[Entry], scale: f64) {
    for &(r, c, v) in entries {
        m[(r, c)] += scale * v;
        if r != c {
            m[(c, r)] += scale * v;
        }
    }
}

/// Both orientations of every entry, so `F = Σ v e_r e_cᵀ`.
fn expand(entries: &[Entry]) -> Vec<Entry> {
    let mut out = Vec::with_capacity(2 * entries.len());
    for &(r, c, v) in entries {
        out.push((r, c, v));
        if r != c {
            out.push((c, r, v));
        }
    }
    out
}

/// tr(F K) for symmetric F given by upper entries.
fn trace_with(entries: &[Entry], k: &DMatrix<f64>) -> f64 {
    entries.iter().map(|&(r, c, v)| if r == c { v * k[(r, r)] } else { v * (k[(r, c)] + k[(c, r)]) }).sum()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Near the optimum `H` loses definiteness to rounding; a tiny diagonal
/// shift keeps the factorisation alive, LU is the last resort.
enum SchurSolver {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurSolver {
    fn new(h: DMatrix<f64>) -> Result<Self> {
        if let Some(ch) = Cholesky::new(h.clone()) {
            return Ok(Self::Chol(ch));
        }
        let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
        for shift in [1e-14, 1e-12, 1e-10] {
            let mut hs = h.clone();
            for i in 0..hs.nrows() {
                hs[(i, i)] += shift * scale;
            }
            if let Some(ch) = Cholesky::new(hs) {
                return Ok(Self::Chol(ch));
            }
        }
        let lu = h.lu();
        if !lu.is_invertible() {
            return Err(Error::NumericalIntegrity("singular Schur complement".into()));
        }
        Ok(Self::Lu(lu))
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Chol(ch) => ch.solve(rhs),
            Self::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| rhs.clone() * 0.0),
        }
    }
}

/// Largest `a <= 1` with `x + a dx ⪰ 0`, before damping.
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::new(x.clone()).ok_or_else(|| Error::NumericalIntegrity("iterate left the PSD cone".into()))?;
    let l = chol.l();
    let tmp =
        l.solve_lower_triangular(dx).ok_or_else(|| Error::NumericalIntegrity("singular Cholesky factor".into()))?;
    let w = l
        .solve_lower_triangular(&tmp.transpose())
        .ok_or_else(|| Error::NumericalIntegrity("singular Cholesky factor".into()))?;
    let lmin = SymmetricEigen::new(symmetrize(&w)).eigenvalues.min();
    Ok(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

struct Workspace<'a> {
    problem: &'a LmiProblem,
    full: Vec<Vec<Entry>>,
    c: DVector<f64>,
    x: DMatrix<f64>,
    y: DVector<f64>,
    z: DMatrix<f64>,
}

#[derive(Clone, Copy)]
struct Status {
    pobj: f64,
    dobj: f64,
    rel_gap: f64,
    pinf: f64,
    dinf: f64,
}

impl Status {
    fn within(&self, tol: f64) -> bool {
        self.rel_gap < tol && self.pinf < tol && self.dinf < tol
    }

    fn merit(&self) -> f64 {
        self.rel_gap.max(self.pinf).max(self.dinf)
    }
}

impl Workspace<'_> {
    fn status(&self, f0_norm: f64) -> (Status, DMatrix<f64>) {
        let p = self.problem;
        let m = p.num_vars();
        let s = p.evaluate(self.y.as_slice());
        let rd = &s - &self.z;
        let rp = DVector::from_iterator(m, (0..m).map(|i| -self.c[i] - trace_with(&p.f[i], &self.x)));
        let pobj = trace_with(&p.f0, &self.x);
        let dobj = self.c.dot(&self.y);
        let st = Status {
            pobj,
            dobj,
            rel_gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
            pinf: rp.norm() / (1.0 + self.c.norm()),
            dinf: rd.norm() / (1.0 + f0_norm),
        };
        (st, rd)
    }

    fn step(&mut self, rd: &DMatrix<f64>, opts: &SdpOptions) -> Result<()> {
        let p = self.problem;
        let (n, m) = (p.dim, p.num_vars());
        let (x, z, c) = (&self.x, &self.z, &self.c);
        let zi = Cholesky::new(z.clone())
            .ok_or_else(|| Error::NumericalIntegrity("slack left the PSD cone".into()))?
            .inverse();
        let zi = symmetrize(&zi);
        let mu = x.dot(z) / n as f64;

        // Schur complement H_ij = tr(F_i X F_j Z⁻¹).
        let mut h = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut acc = 0.0;
                for &(pp, q, a) in &self.full[i] {
                    for &(r, s2, b) in &self.full[j] {
                        acc += a * b * x[(q, r)] * zi[(s2, pp)];
                    }
                }
                h[(i, j)] = acc;
                h[(j, i)] = acc;
            }
        }
        let schur = SchurSolver::new(h)?;

        let x_rd_zi = x * rd * &zi;
        let base: DVector<f64> = DVector::from_iterator(m, (0..m).map(|i| c[i] - trace_with(&p.f[i], &x_rd_zi)));

        let direction = |sigma_mu: f64, rc: Option<&DMatrix<f64>>| {
            let mut rhs = base.clone();
            for i in 0..m {
                rhs[i] += sigma_mu * trace_with(&p.f[i], &zi);
                if let Some(rc) = rc {
                    rhs[i] -= trace_with(&p.f[i], rc);
                }
            }
            let dy = schur.solve(&rhs);
            let mut dz = rd.clone();
            for (i, f) in p.f.iter().enumerate() {
                add_sym(&mut dz, f, dy[i]);
            }
            let mut dx = &zi * sigma_mu - x - x * &dz * &zi;
            if let Some(rc) = rc {
                dx -= rc;
            }
            (dy, symmetrize(&dx), dz)
        };

        let (_, dx_a, dz_a) = direction(0.0, None);
        let ap = max_step(x, &dx_a)?.min(1.0);
        let ad = max_step(z, &dz_a)?.min(1.0);
        let mu_aff = (x + &dx_a * ap).dot(&(z + &dz_a * ad)) / n as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let rc = &dx_a * &dz_a * &zi;
        let (dy, dx, dz) = direction(sigma * mu, Some(&rc));
        let ap = (opts.step_fraction * max_step(x, &dx)?).min(1.0);
        let ad = (opts.step_fraction * max_step(z, &dz)?).min(1.0);

        self.x = symmetrize(&(x + &dx * ap));
        self.y += &dy * ad;
        self.z = symmetrize(&(z + &dz * ad));
        Ok(())
    }
}

/// Iterates until the relative gap and both infeasibilities drop below
/// `opts.tol`. When rounding stalls progress first, the best iterate is
/// returned if it meets `opts.accept_tol`.
pub fn solve_lmi(problem: &LmiProblem, opts: &SdpOptions) -> Result<LmiSolution> {
    problem.validate()?;
    let n = problem.dim;
    let m = problem.num_vars();
    let f0_norm = problem.evaluate(&vec![0.0; m]).norm();
    let norms: Vec<f64> = problem.f.iter().map(|f| expand(f).iter().map(|e| e.2 * e.2).sum::<f64>().sqrt()).collect();
    let sqrt_n = (n as f64).sqrt();
    let xi = norms
        .iter()
        .zip(&problem.c)
        .map(|(nf, ci)| n as f64 * (1.0 + ci.abs()) / (1.0 + nf))
        .fold(10.0f64.max(sqrt_n), f64::max);
    let eta = norms.iter().copied().fold(10.0f64.max(sqrt_n).max(f0_norm), f64::max);

    let mut ws = Workspace {
        problem,
        full: problem.f.iter().map(|f| expand(f)).collect(),
        c: DVector::from_column_slice(&problem.c),
        x: DMatrix::identity(n, n) * xi,
        y: DVector::zeros(m),
        z: DMatrix::identity(n, n) * eta,
    };

    let finish = |ws: &Workspace, st: Status, iterations: usize| LmiSolution {
        y: ws.y.as_slice().to_vec(),
        dual_objective: problem.offset + st.dobj,
        primal_objective: problem.offset + st.pobj,
        gap: st.pobj - st.dobj,
        primal_infeasibility: st.pinf,
        dual_infeasibility: st.dinf,
        iterations,
        slack: problem.evaluate(ws.y.as_slice()),
        multiplier: ws.x.clone(),
    };

    let mut best: Option<(f64, LmiSolution)> = None;
    let mut since_best = 0;
    let mut iterations = 0;
    loop {
        let (st, rd) = ws.status(f0_norm);
        if !(st.pobj.is_finite() && st.dobj.is_finite()) {
            break;
        }
        if st.within(opts.tol) {
            return Ok(finish(&ws, st, iterations));
        }
        if st.within(opts.accept_tol) {
            if best.as_ref().is_none_or(|(b, _)| st.merit() < 0.5 * *b) {
                best = Some((st.merit(), finish(&ws, st, iterations)));
                since_best = 0;
            } else {
                since_best += 1;
            }
            if since_best >= 5 {
                break;
            }
        }
        if iterations >= opts.max_iter {
            break;
        }
        if ws.x.norm() > 1e14 {
            return Err(Error::Infeasible(format!("primal multiplier diverged after {iterations} iterations")));
        }
        iterations += 1;
        if ws.step(&rd, opts).is_err() {
            break;
        }
    }
    match best {
        Some((_, sol)) => Ok(sol),
        None => {
            let (st, _) = ws.status(f0_norm);
            Err(Error::NotConverged { gap: st.pobj - st.dobj, iterations })
        }
    }
}
