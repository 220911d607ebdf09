//! Dense complex linear algebra and spin-j operators.
//!
//! Basis convention shared by every module: for a spin of length `j` the
//! basis index `k = 0..N` holds `|m = j - k>`, so `|+j>` comes first and
//! `|-j>` last.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const UNITARY_TOL: f64 = 1e-10;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Largest entrywise deviation of `a` from `a^dagger`.
pub fn hermiticity_error(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(a: &CMatrix, tol: f64) -> bool {
    a.is_square() && hermiticity_error(a) <= tol
}

/// `max |(U^dagger U - I)_{ij}|`.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let n = u.nrows();
    let prod = u.adjoint() * u;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - c64(target, 0.0)).norm());
        }
    }
    worst
}

pub fn is_unitary(u: &CMatrix, tol: f64) -> bool {
    u.is_square() && unitarity_error(u) <= tol
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(h: &CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = SymmetricEigen::new(h.clone());
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `V diag(f(lambda)) V^dagger` for a Hermitian `h = V diag(lambda) V^dagger`.
pub fn hermitian_function(h: &CMatrix, f: impl Fn(f64) -> Complex64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(h);
    spectral_apply(&values, &vectors, f)
}

pub(crate) fn spectral_apply(values: &DVector<f64>, vectors: &CMatrix, f: impl Fn(f64) -> Complex64) -> CMatrix {
    let mut scaled = vectors.clone();
    for (k, &lambda) in values.iter().enumerate() {
        let w = f(lambda);
        for entry in scaled.column_mut(k).iter_mut() {
            *entry *= w;
        }
    }
    scaled * vectors.adjoint()
}

/// `exp(-i H t)` computed through the spectral decomposition of `H`.
pub fn propagator(h: &CMatrix, t: f64) -> Result<CMatrix> {
    if !h.is_square() {
        return Err(Error::InvalidParameter("Hamiltonian must be square".into()));
    }
    let scale = 1.0 + h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if hermiticity_error(h) > HERMITIAN_TOL * scale {
        return Err(Error::InvalidParameter("Hamiltonian is not Hermitian".into()));
    }
    if t == 0.0 {
        return Ok(CMatrix::identity(h.nrows(), h.nrows()));
    }
    Ok(hermitian_function(h, |lambda| Complex64::from_polar(1.0, -lambda * t)))
}

/// Spin length and precession frequency of the spin model.
///
/// `j` is stored doubled so half-integers are exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinParams {
    twice_j: u32,
    pub omega: f64,
}

impl SpinParams {
    pub fn from_twice_j(twice_j: u32, omega: f64) -> Result<Self> {
        if twice_j == 0 {
            return Err(Error::InvalidParameter("spin length must be at least 1/2".into()));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
        }
        Ok(Self { twice_j, omega })
    }

    /// Accepts `j` as a float; it must be a positive half-integer.
    pub fn new(j: f64, omega: f64) -> Result<Self> {
        let doubled = 2.0 * j;
        if !doubled.is_finite() || doubled < 1.0 || (doubled - doubled.round()).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("j = {j} is not a positive half-integer")));
        }
        Self::from_twice_j(doubled.round() as u32, omega)
    }

    pub fn from_dim(n: usize, omega: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("dimension {n} < 2")));
        }
        Self::from_twice_j((n - 1) as u32, omega)
    }

    pub fn twice_j(&self) -> u32 {
        self.twice_j
    }

    pub fn j(&self) -> f64 {
        self.twice_j as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.twice_j as usize + 1
    }

    /// Magnetic quantum number at basis index `k`.
    pub fn m_at(&self, k: usize) -> f64 {
        self.j() - k as f64
    }
}

/// Ladder coefficient `sqrt(j(j+1) - m(m+1))` for raising `|m>`.
fn raise_coeff(j: f64, m: f64) -> f64 {
    (j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
}

/// `(Jx, Jz)` in the descending-m basis.
pub fn spin_operators(params: &SpinParams) -> (CMatrix, CMatrix) {
    let n = params.dim();
    let j = params.j();
    let mut jx = CMatrix::zeros(n, n);
    let mut jz = CMatrix::zeros(n, n);
    for k in 0..n {
        let m = params.m_at(k);
        jz[(k, k)] = c64(m, 0.0);
        if k > 0 {
            // <m+1| J+ |m> sits at (k-1, k)
            let v = 0.5 * raise_coeff(j, m);
            jx[(k - 1, k)] = c64(v, 0.0);
            jx[(k, k - 1)] = c64(v, 0.0);
        }
    }
    (jx, jz)
}

pub fn spin_jy(params: &SpinParams) -> CMatrix {
    let n = params.dim();
    let j = params.j();
    let mut jy = CMatrix::zeros(n, n);
    for k in 1..n {
        let v = 0.5 * raise_coeff(j, params.m_at(k));
        jy[(k - 1, k)] = c64(0.0, -v);
        jy[(k, k - 1)] = c64(0.0, v);
    }
    jy
}

/// Precession generator `exp(-i theta Jx)` with the spectral data of `Jx`
/// cached so repeated evaluations skip the eigensolver.
#[derive(Debug, Clone)]
pub struct Precession {
    values: DVector<f64>,
    vectors: CMatrix,
}

impl Precession {
    pub fn new(params: &SpinParams) -> Self {
        let (jx, _) = spin_operators(params);
        let (values, vectors) = hermitian_eigen(&jx);
        Self { values, vectors }
    }

    /// `exp(-i angle Jx)`, where `angle = Omega t`.
    pub fn rotate(&self, angle: f64) -> CMatrix {
        if angle == 0.0 {
            return CMatrix::identity(self.values.len(), self.values.len());
        }
        spectral_apply(&self.values, &self.vectors, |lambda| Complex64::from_polar(1.0, -lambda * angle))
    }
}

/// `R = exp(-i (pi/2) Jx)`, the quarter-period precession.
pub fn rotation_r(params: &SpinParams) -> CMatrix {
    let (jx, _) = spin_operators(params);
    let h = jx * c64(params.omega, 0.0);
    propagator(&h, std::f64::consts::FRAC_PI_2 / params.omega).expect("omega * Jx is Hermitian by construction")
}

/// Haar-random unitary from the QR decomposition of a complex Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64(1.0, 0.0) };
        for entry in q.column_mut(k).iter_mut() {
            *entry *= phase;
        }
    }
    q
}

/// Uniformly random unit vector in `C^n`.
pub fn random_state_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<Complex64> {
    let v = DVector::from_fn(n, |_, _| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let norm = v.norm();
    v / c64(norm, 0.0)
}
