//! Projective measurement schemes with `M` outcome blocks, state update and
//! the two-time correlators that make up `K3`.
//!
//! One update rule covers every case: the post-measurement state is
//! `Pi_l rho Pi_l / Tr(Pi_l rho)` for the block `l` that fired. Two blocks
//! give the Lueders rule, `M = N` rank-one blocks give von Neumann's rule, and
//! everything in between is the same code path.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{c64, hermitian_eigen, hermiticity_error, CMatrix};

/// Probabilities below this are treated as an impossible branch.
pub const ZERO_PROBABILITY: f64 = 1e-14;
/// Largest tolerated imaginary part of a correlator before it is rejected.
pub const IMAGINARY_RESIDUE: f64 = 1e-8;

/// `M` orthogonal projectors summing to the identity, each labelled `+1` or `-1`.
#[derive(Debug, Clone)]
pub struct MeasurementScheme {
    dim: usize,
    blocks: Vec<Vec<usize>>,
    q: Vec<i8>,
    projectors: Vec<CMatrix>,
    // projectors are diagonal in the computational basis
    diagonal: bool,
}

/// Wire form of a scheme: `{"N", "M", "blocks", "q"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub blocks: Vec<Vec<usize>>,
    pub q: Vec<i8>,
}

impl MeasurementScheme {
    /// Builds a scheme with projectors diagonal in the computational basis.
    pub fn new(dim: usize, blocks: Vec<Vec<usize>>, q: Vec<i8>) -> Result<Self> {
        let m = blocks.len();
        if m < 2 || m > dim {
            return Err(Error::Partition(format!("{m} blocks for dimension {dim}; need 2 <= M <= N")));
        }
        if q.len() != m {
            return Err(Error::InvalidParameter(format!("{} labels for {m} blocks", q.len())));
        }
        if let Some(bad) = q.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::InvalidParameter(format!("label {bad} is not +1 or -1")));
        }
        if !(q.contains(&1) && q.contains(&-1)) {
            return Err(Error::DegenerateLabeling);
        }
        let mut seen = vec![false; dim];
        for block in &blocks {
            if block.is_empty() {
                return Err(Error::Partition("empty block".into()));
            }
            for &k in block {
                if k >= dim {
                    return Err(Error::Partition(format!("index {k} outside 0..{dim}")));
                }
                if std::mem::replace(&mut seen[k], true) {
                    return Err(Error::Partition(format!("index {k} appears twice")));
                }
            }
        }
        if let Some(k) = seen.iter().position(|&s| !s) {
            return Err(Error::Partition(format!("index {k} is not covered")));
        }
        let projectors = blocks
            .iter()
            .map(|block| {
                let mut p = CMatrix::zeros(dim, dim);
                for &k in block {
                    p[(k, k)] = c64(1.0, 0.0);
                }
                p
            })
            .collect();
        Ok(Self { dim, blocks, q, projectors, diagonal: true })
    }

    /// Consecutive blocks of the given sizes.
    pub fn from_block_sizes(sizes: &[usize], q: Vec<i8>) -> Result<Self> {
        let dim = sizes.iter().sum();
        let mut next = 0;
        let blocks = sizes
            .iter()
            .map(|&s| {
                let b: Vec<usize> = (next..next + s).collect();
                next += s;
                b
            })
            .collect();
        Self::new(dim, blocks, q)
    }

    /// `M = N` rank-one blocks with the lowest level (last index) labelled `-1`.
    pub fn von_neumann(dim: usize) -> Result<Self> {
        Self::new(dim, (0..dim).map(|k| vec![k]).collect(), canonical_labels(dim))
    }

    /// Conjugates every projector by `basis`: `Pi_l -> U Pi_l U^dagger`.
    pub fn with_basis(&self, basis: &CMatrix) -> Result<Self> {
        check_dim(self.dim, basis.nrows())?;
        let projectors = self.projectors.iter().map(|p| basis * p * basis.adjoint()).collect();
        Ok(Self { projectors, diagonal: false, ..self.clone() })
    }

    pub fn from_spec(spec: &SchemeSpec) -> Result<Self> {
        if spec.m != spec.blocks.len() {
            return Err(Error::InvalidParameter(format!("M = {} but {} blocks given", spec.m, spec.blocks.len())));
        }
        Self::new(spec.n, spec.blocks.clone(), spec.q.clone())
    }

    pub fn spec(&self) -> SchemeSpec {
        SchemeSpec { n: self.dim, m: self.outcomes(), blocks: self.blocks.clone(), q: self.q.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.spec())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(&serde_json::from_str(text)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of blocks `M`.
    pub fn outcomes(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn labels(&self) -> &[i8] {
        &self.q
    }

    pub fn label(&self, l: usize) -> f64 {
        self.q[l] as f64
    }

    pub fn projector(&self, l: usize) -> &CMatrix {
        &self.projectors[l]
    }

    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// `Q = sum_l q_l Pi_l`.
    pub fn observable(&self) -> CMatrix {
        let mut q = CMatrix::zeros(self.dim, self.dim);
        for (l, p) in self.projectors.iter().enumerate() {
            q += p * c64(self.label(l), 0.0);
        }
        q
    }

    /// `Pi_l X Pi_l`.
    pub fn sandwich(&self, l: usize, x: &CMatrix) -> CMatrix {
        if self.diagonal {
            let mut out = CMatrix::zeros(self.dim, self.dim);
            for &a in &self.blocks[l] {
                for &b in &self.blocks[l] {
                    out[(a, b)] = x[(a, b)];
                }
            }
            out
        } else {
            let p = &self.projectors[l];
            p * x * p
        }
    }

    /// `sum_l q_l Pi_l X Pi_l`, the label-weighted block pinching of `X`.
    pub fn weighted_pinch(&self, x: &CMatrix) -> CMatrix {
        if self.diagonal {
            let mut out = CMatrix::zeros(self.dim, self.dim);
            for (l, block) in self.blocks.iter().enumerate() {
                let w = self.label(l);
                for &a in block {
                    for &b in block {
                        out[(a, b)] = x[(a, b)] * w;
                    }
                }
            }
            out
        } else {
            let mut out = CMatrix::zeros(self.dim, self.dim);
            for l in 0..self.outcomes() {
                out += self.sandwich(l, x) * c64(self.label(l), 0.0);
            }
            out
        }
    }

    /// `Tr(Pi_l X)`.
    pub fn weight(&self, l: usize, x: &CMatrix) -> Complex64 {
        if self.diagonal {
            self.blocks[l].iter().map(|&k| x[(k, k)]).sum()
        } else {
            trace_product(&self.projectors[l], x)
        }
    }
}

/// `(+1, ..., +1, -1)`: only the last block reads `-1`.
pub fn canonical_labels(m: usize) -> Vec<i8> {
    let mut q = vec![1i8; m];
    if let Some(last) = q.last_mut() {
        *last = -1;
    }
    q
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = c64(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// A validated `N x N` state: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidParameter("density matrix must be square".into()));
        }
        if hermiticity_error(&matrix) > 1e-12 {
            return Err(Error::InvalidParameter("density matrix is not Hermitian".into()));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("trace {tr} != 1")));
        }
        let (values, _) = hermitian_eigen(&matrix);
        if values[0] < -1e-10 {
            return Err(Error::InvalidParameter(format!("negative eigenvalue {}", values[0])));
        }
        Ok(Self { matrix })
    }

    /// `|psi><psi|` for a vector normalised here.
    pub fn pure(psi: &DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        let v = psi / c64(norm, 0.0);
        Ok(Self { matrix: &v * v.adjoint() })
    }

    pub fn basis_state(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidParameter(format!("basis index {k} outside 0..{dim}")));
        }
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = c64(1.0, 0.0);
        Ok(Self { matrix: m })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: CMatrix::identity(dim, dim) * c64(1.0 / dim as f64, 0.0) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `U rho U^dagger`.
    pub fn evolve(&self, u: &CMatrix) -> Result<Self> {
        check_dim(self.dim(), u.nrows())?;
        Ok(Self { matrix: u * &self.matrix * u.adjoint() })
    }
}

/// The three correlators and `K3 = C21 + C32 - C31`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgiResult {
    pub c21: f64,
    pub c32: f64,
    pub c31: f64,
    pub k3: f64,
}

impl LgiResult {
    pub fn from_correlators(c21: f64, c32: f64, c31: f64) -> Self {
        Self { c21, c32, c31, k3: c21 + c32 - c31 }
    }
}

/// Measures block `l` on `rho`: returns `Tr(Pi_l rho)` and the renormalised
/// post-measurement state.
pub fn update_state(scheme: &MeasurementScheme, rho: &DensityMatrix, l: usize) -> Result<(f64, DensityMatrix)> {
    check_dim(scheme.dim(), rho.dim())?;
    if l >= scheme.outcomes() {
        return Err(Error::InvalidParameter(format!("outcome {l} outside 0..{}", scheme.outcomes())));
    }
    let prob = scheme.weight(l, rho.matrix()).re;
    if prob < ZERO_PROBABILITY {
        return Err(Error::ZeroProbability { prob });
    }
    let post = scheme.sandwich(l, rho.matrix()) / c64(prob, 0.0);
    Ok((prob, DensityMatrix { matrix: post }))
}

/// Joint probabilities `P[(l, m)]` of outcome `l` at the first measurement
/// (after `u_a0`) and `m` at the second (after a further `u_ba`).
pub fn joint_probabilities(
    rho0: &DensityMatrix,
    u_a0: &CMatrix,
    u_ba: &CMatrix,
    scheme: &MeasurementScheme,
) -> Result<DMatrix<f64>> {
    let (probs, residue) = joint_probabilities_complex(rho0, u_a0, u_ba, scheme)?;
    if residue > IMAGINARY_RESIDUE {
        return Err(Error::NumericalIntegrity(format!("joint probability has imaginary part {residue:e}")));
    }
    Ok(probs)
}

fn joint_probabilities_complex(
    rho0: &DensityMatrix,
    u_a0: &CMatrix,
    u_ba: &CMatrix,
    scheme: &MeasurementScheme,
) -> Result<(DMatrix<f64>, f64)> {
    let n = scheme.dim();
    check_dim(n, rho0.dim())?;
    check_dim(n, u_a0.nrows())?;
    check_dim(n, u_ba.nrows())?;
    let m = scheme.outcomes();
    let rho_a = u_a0 * rho0.matrix() * u_a0.adjoint();
    let mut probs = DMatrix::zeros(m, m);
    let mut residue = 0.0f64;
    for l in 0..m {
        let branch = scheme.sandwich(l, &rho_a);
        let moved = u_ba * branch * u_ba.adjoint();
        for k in 0..m {
            let p = scheme.weight(k, &moved);
            residue = residue.max(p.im.abs());
            probs[(l, k)] = p.re;
        }
    }
    Ok((probs, residue))
}

/// `C_{beta alpha} = sum_{l,m} q_l q_m Tr(Pi_m U_ba Pi_l U_a0 rho0 U_a0^dagger Pi_l U_ba^dagger)`,
/// evaluated by enumerating every `(l, m)` branch.
pub fn correlator(rho0: &DensityMatrix, u_a0: &CMatrix, u_ba: &CMatrix, scheme: &MeasurementScheme) -> Result<f64> {
    let n = scheme.dim();
    check_dim(n, rho0.dim())?;
    check_dim(n, u_a0.nrows())?;
    check_dim(n, u_ba.nrows())?;
    let rho_a = u_a0 * rho0.matrix() * u_a0.adjoint();
    let mut total = c64(0.0, 0.0);
    for l in 0..scheme.outcomes() {
        let branch = scheme.sandwich(l, &rho_a);
        let moved = u_ba * branch * u_ba.adjoint();
        for m in 0..scheme.outcomes() {
            total += scheme.weight(m, &moved) * (scheme.label(l) * scheme.label(m));
        }
    }
    if total.im.abs() > IMAGINARY_RESIDUE {
        return Err(Error::NumericalIntegrity(format!("correlator has imaginary part {:e}", total.im)));
    }
    Ok(total.re.clamp(-1.0, 1.0))
}

/// `K3` for measurements at `t1, t2, t3`; `u_10` takes `rho0` to `t1`.
pub fn lgi_k3(
    rho0: &DensityMatrix,
    u_10: &CMatrix,
    u_21: &CMatrix,
    u_32: &CMatrix,
    scheme: &MeasurementScheme,
) -> Result<LgiResult> {
    let c21 = correlator(rho0, u_10, u_21, scheme)?;
    let c32 = correlator(rho0, &(u_21 * u_10), u_32, scheme)?;
    let c31 = correlator(rho0, u_10, &(u_32 * u_21), scheme)?;
    Ok(LgiResult::from_correlators(c21, c32, c31))
}

/// One step of a measurement sequence: evolve by `evolution`, then measure
/// `scheme` and keep outcome `outcome`.
#[derive(Debug, Clone, Copy)]
pub struct SequenceStep<'a> {
    pub evolution: &'a CMatrix,
    pub scheme: &'a MeasurementScheme,
    pub outcome: usize,
}

/// Joint probability of the outcome sequence in `steps`.
pub fn sequence_probability(rho0: &DensityMatrix, steps: &[SequenceStep<'_>]) -> Result<f64> {
    if steps.is_empty() {
        return Err(Error::InvalidParameter("empty measurement sequence".into()));
    }
    let n = rho0.dim();
    let mut state = rho0.matrix().clone();
    for step in steps {
        check_dim(n, step.evolution.nrows())?;
        check_dim(n, step.scheme.dim())?;
        if step.outcome >= step.scheme.outcomes() {
            return Err(Error::InvalidParameter(format!("outcome {} out of range", step.outcome)));
        }
        state = step.evolution * state * step.evolution.adjoint();
        state = step.scheme.sandwich(step.outcome, &state);
    }
    Ok(state.trace().re.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{propagator, random_state_vector, random_unitary, spin_operators, SpinParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ident(n: usize) -> CMatrix {
        CMatrix::identity(n, n)
    }

    fn random_rho(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
        // mixture of three random pure states
        let mut m = CMatrix::zeros(n, n);
        let weights = [0.5, 0.3, 0.2];
        for w in weights {
            let v = random_state_vector(n, rng);
            m += &v * v.adjoint() * c64(w, 0.0);
        }
        DensityMatrix::new(m).unwrap()
    }

    #[test]
    fn scheme_examples() {
        let qubit = MeasurementScheme::new(2, vec![vec![0], vec![1]], vec![1, -1]).unwrap();
        assert_eq!(qubit.outcomes(), 2);
        let vn = MeasurementScheme::new(3, vec![vec![0], vec![1], vec![2]], vec![1, 1, -1]).unwrap();
        assert_eq!(vn.labels(), MeasurementScheme::von_neumann(3).unwrap().labels());
        let luders = MeasurementScheme::new(3, vec![vec![0, 1], vec![2]], vec![1, -1]).unwrap();
        assert_eq!(luders.block_sizes(), vec![2, 1]);
        for s in [&qubit, &vn, &luders] {
            let n = s.dim();
            let mut sum = CMatrix::zeros(n, n);
            for (l, pl) in s.projectors().iter().enumerate() {
                sum += pl;
                for (m, pm) in s.projectors().iter().enumerate() {
                    let want = if l == m { pl.clone() } else { CMatrix::zeros(n, n) };
                    assert!((pl * pm - want).camax() < 1e-12);
                }
            }
            assert!((sum - ident(n)).camax() < 1e-12);
        }
    }

    #[test]
    fn scheme_errors() {
        assert!(matches!(
            MeasurementScheme::new(3, vec![vec![0, 1], vec![1, 2]], vec![1, -1]),
            Err(Error::Partition(_))
        ));
        assert!(matches!(MeasurementScheme::new(3, vec![vec![0], vec![1]], vec![1, -1]), Err(Error::Partition(_))));
        assert!(matches!(
            MeasurementScheme::new(2, vec![vec![0], vec![1]], vec![1, 1]),
            Err(Error::DegenerateLabeling)
        ));
        assert!(MeasurementScheme::new(2, vec![vec![0, 1]], vec![1]).is_err());
    }

    #[test]
    fn scheme_json_round_trip() {
        let s = MeasurementScheme::new(4, vec![vec![0, 2], vec![1], vec![3]], vec![1, 1, -1]).unwrap();
        let text = s.to_json().unwrap();
        assert!(text.contains("\"N\":4") && text.contains("\"M\":3"));
        let back = MeasurementScheme::from_json(&text).unwrap();
        assert_eq!(back.spec(), s.spec());
        assert!(MeasurementScheme::from_json(r#"{"N":2,"M":3,"blocks":[[0],[1]],"q":[1,-1]}"#).is_err());
    }

    #[test]
    fn update_examples() {
        let s = MeasurementScheme::new(2, vec![vec![0], vec![1]], vec![1, -1]).unwrap();
        let ket0 = DensityMatrix::basis_state(2, 0).unwrap();
        let (p, post) = update_state(&s, &ket0, 0).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(post, ket0);

        let mixed = DensityMatrix::maximally_mixed(2);
        for l in 0..2 {
            assert!((update_state(&s, &mixed, l).unwrap().0 - 0.5).abs() < 1e-15);
        }

        let plus = DensityMatrix::pure(&DVector::from_vec(vec![c64(1.0, 0.0), c64(1.0, 0.0)])).unwrap();
        let (p, post) = update_state(&s, &plus, 0).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!((post.matrix() - ket0.matrix()).camax() < 1e-15);

        assert!(matches!(update_state(&s, &ket0, 1), Err(Error::ZeroProbability { .. })));
    }

    #[test]
    fn repeated_measurement_is_perfectly_correlated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = MeasurementScheme::new(4, vec![vec![0], vec![1, 2], vec![3]], vec![1, -1, 1]).unwrap();
        for _ in 0..5 {
            let rho = random_rho(4, &mut rng);
            let u = random_unitary(4, &mut rng);
            let c = correlator(&rho, &u, &ident(4), &s).unwrap();
            assert!((c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn qubit_precession_correlator_is_cosine() {
        let p = SpinParams::from_twice_j(1, 1.0).unwrap();
        let (jx, _) = spin_operators(&p);
        let s = MeasurementScheme::von_neumann(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho = random_rho(2, &mut rng);
        for tau in [0.0, 0.4, 1.0, 2.5, PI] {
            let u = propagator(&jx, tau).unwrap();
            let u_a0 = propagator(&jx, 0.7).unwrap();
            let c = correlator(&rho, &u_a0, &u, &s).unwrap();
            assert!((c - tau.cos()).abs() < 1e-12, "tau {tau}: {c}");
        }
    }

    #[test]
    fn spin_one_half_period_anticorrelates() {
        let p = SpinParams::from_twice_j(2, 1.0).unwrap();
        let (jx, _) = spin_operators(&p);
        let s = MeasurementScheme::von_neumann(3).unwrap();
        let rho = DensityMatrix::basis_state(3, 2).unwrap();
        let u10 = propagator(&jx, PI).unwrap();
        let u31 = propagator(&jx, PI).unwrap();
        let c31 = correlator(&rho, &u10, &u31, &s).unwrap();
        assert!((c31 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_evolution_gives_k3_one() {
        let s = MeasurementScheme::von_neumann(3).unwrap();
        let rho = DensityMatrix::maximally_mixed(3);
        let r = lgi_k3(&rho, &ident(3), &ident(3), &ident(3), &s).unwrap();
        assert_eq!((r.c21, r.c32, r.c31, r.k3), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn qubit_optimal_precession_reaches_three_halves() {
        let p = SpinParams::from_twice_j(1, 1.0).unwrap();
        let (jx, _) = spin_operators(&p);
        let s = MeasurementScheme::von_neumann(2).unwrap();
        let rho = DensityMatrix::basis_state(2, 1).unwrap();
        let u10 = propagator(&jx, PI).unwrap();
        let u = propagator(&jx, PI / 3.0).unwrap();
        let r = lgi_k3(&rho, &u10, &u, &u, &s).unwrap();
        assert!((r.k3 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = MeasurementScheme::von_neumann(3).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(matches!(correlator(&rho, &ident(2), &ident(2), &s), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn density_matrix_validation() {
        let mut m = CMatrix::identity(2, 2);
        assert!(DensityMatrix::new(m.clone()).is_err());
        m[(0, 0)] = c64(1.5, 0.0);
        m[(1, 1)] = c64(-0.5, 0.0);
        assert!(DensityMatrix::new(m).is_err());
        assert!(DensityMatrix::basis_state(2, 2).is_err());
    }

    #[test]
    fn sequence_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = MeasurementScheme::new(3, vec![vec![0], vec![1], vec![2]], vec![1, 1, -1]).unwrap();
        let rho = random_rho(3, &mut rng);
        let u = random_unitary(3, &mut rng);
        let total: f64 = (0..3)
            .map(|l| sequence_probability(&rho, &[SequenceStep { evolution: &u, scheme: &s, outcome: l }]).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);

        let id = ident(3);
        for l in 0..3 {
            for m in 0..3 {
                let p = sequence_probability(
                    &rho,
                    &[
                        SequenceStep { evolution: &u, scheme: &s, outcome: l },
                        SequenceStep { evolution: &id, scheme: &s, outcome: m },
                    ],
                )
                .unwrap();
                if l != m {
                    assert!(p.abs() < 1e-15);
                }
            }
        }
        assert!(sequence_probability(&rho, &[]).is_err());
    }

    #[test]
    fn spin_one_first_measurement_never_reads_minus_one() {
        let p = SpinParams::from_twice_j(2, 1.0).unwrap();
        let (jx, _) = spin_operators(&p);
        let s = MeasurementScheme::von_neumann(3).unwrap();
        let rho = DensityMatrix::basis_state(3, 2).unwrap();
        let u10 = propagator(&jx, PI).unwrap();
        let p = sequence_probability(&rho, &[SequenceStep { evolution: &u10, scheme: &s, outcome: 2 }]).unwrap();
        assert!(p < 1e-24);
    }

    /// Heisenberg-picture symmetrised product `1/2 Tr(rho {Q_b, Q_a})`.
    fn symmetrised(rho: &DensityMatrix, u_a0: &CMatrix, u_ba: &CMatrix, s: &MeasurementScheme) -> f64 {
        let q = s.observable();
        let u_b0 = u_ba * u_a0;
        let qa = u_a0.adjoint() * &q * u_a0;
        let qb = u_b0.adjoint() * &q * &u_b0;
        let anti = &qa * &qb + &qb * &qa;
        0.5 * trace_product(rho.matrix(), &anti).re
    }

    #[test]
    fn two_block_correlators_are_symmetrised_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(2013);
        let mut count = 0;
        for n in 2..=4usize {
            for split in 1..n {
                let s =
                    MeasurementScheme::new(n, vec![(0..split).collect(), (split..n).collect()], vec![1, -1]).unwrap();
                for _ in 0..4 {
                    let rho = random_rho(n, &mut rng);
                    let ua = random_unitary(n, &mut rng);
                    let ub = random_unitary(n, &mut rng);
                    let c = correlator(&rho, &ua, &ub, &s).unwrap();
                    assert!((c - symmetrised(&rho, &ua, &ub, &s)).abs() < 1e-10);
                    count += 1;
                }
            }
        }
        assert!(count >= 20);
    }

    #[test]
    fn three_block_correlator_depends_on_order() {
        // forward: measure Q_a then Q_b; reversed: Q_b then Q_a, with Heisenberg
        // operators Q_a = Q, Q_b = U^dagger Q U
        let s = MeasurementScheme::von_neumann(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut best = 0.0f64;
        for _ in 0..50 {
            let rho = random_rho(3, &mut rng);
            let u = random_unitary(3, &mut rng);
            let forward = correlator(&rho, &ident(3), &u, &s).unwrap();
            // measuring U^dagger Q U first is measuring Q after U, then undoing U
            let reversed = correlator(&rho, &u, &u.adjoint(), &s).unwrap();
            best = best.max((forward - reversed).abs());
        }
        assert!(best > 1e-3, "largest order asymmetry {best}");
    }

    #[test]
    fn correlator_is_weighted_joint_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..=5usize {
            let s = MeasurementScheme::von_neumann(n).unwrap();
            let rho = random_rho(n, &mut rng);
            let ua = random_unitary(n, &mut rng);
            let ub = random_unitary(n, &mut rng);
            let p = joint_probabilities(&rho, &ua, &ub, &s).unwrap();
            let mut c = 0.0;
            for l in 0..n {
                for m in 0..n {
                    c += s.label(l) * s.label(m) * p[(l, m)];
                }
            }
            assert!((c - correlator(&rho, &ua, &ub, &s).unwrap()).abs() < 1e-12);
            assert!((p.sum() - 1.0).abs() < 1e-12);
        }
    }
}
