//! Moment-matrix relaxation for three sequential projective measurements.
//!
//! A [`Word`] is a product of projectors `Π(r|s)` read in written order, with
//! settings increasing along the word for index entries. The moment matrix is
//! `M[u, v] = Re⟨O_u O_v†⟩`, so the diagonal entry of `(α,l)(β,m)` is the
//! sequential probability `P(l, m | α, β)`.
//!
//! The full index always carries the linear dependency `Σ_r Π(r|s) = 1`, which
//! leaves the feasible set without interior points. [`solve`] therefore works on
//! the equivalent reduced index that drops the last outcome of every setting,
//! then lifts the optimum back to the full matrix and checks every constraint.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{canonical_labels, DensityMatrix, MeasurementScheme};
use crate::qcore::CMatrix;
use crate::sdp::{solve_lmi, LmiProblem, SdpOptions};

pub const SETTINGS: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    pub setting: u8,
    pub outcome: u8,
}

impl Letter {
    pub fn new(setting: u8, outcome: u8) -> Self {
        Self { setting, outcome }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(Vec<Letter>);

impl Word {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn new(letters: Vec<Letter>) -> Self {
        Self(letters)
    }

    pub fn single(setting: u8, outcome: u8) -> Self {
        Self(vec![Letter::new(setting, outcome)])
    }

    pub fn pair(a: Letter, b: Letter) -> Self {
        Self(vec![a, b])
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }

    pub fn concat(&self, other: &Word) -> Self {
        let mut letters = self.0.clone();
        letters.extend_from_slice(&other.0);
        Self(letters)
    }

    /// Representative of `{w, reverse(w)}`; both have the same real moment.
    pub fn canonical(&self) -> Self {
        let rev = self.reversed();
        if rev < *self {
            rev
        } else {
            self.clone()
        }
    }

    /// Word underlying the entry `M[self, other]`.
    pub fn entry_word(&self, other: &Word) -> Self {
        self.concat(&other.reversed())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for l in &self.0 {
            write!(f, "({},{})", l.setting, l.outcome)?;
        }
        Ok(())
    }
}

/// Applies idempotency and orthogonality of same-setting neighbours.
/// `None` is the zero operator.
pub fn reduce_word(w: &Word) -> Option<Word> {
    let mut out: Vec<Letter> = Vec::with_capacity(w.len());
    for &l in w.letters() {
        match out.last() {
            Some(prev) if prev.setting == l.setting => {
                if prev.outcome != l.outcome {
                    return None;
                }
            }
            _ => out.push(l),
        }
    }
    Some(Word(out))
}

fn reduced_key(w: &Word) -> Option<Word> {
    reduce_word(w).map(|r| r.canonical())
}

/// `{∅} ∪ singles ∪ time-ordered pairs`, of size `1 + 3M + 3M²`.
pub fn build_index(outcomes: usize) -> Result<Vec<Word>> {
    if outcomes < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 outcomes, got {outcomes}")));
    }
    Ok(index_over(outcomes as u8))
}

fn index_over(alphabet: u8) -> Vec<Word> {
    let mut index = vec![Word::empty()];
    for s in 1..=SETTINGS {
        for r in 0..alphabet {
            index.push(Word::single(s, r));
        }
    }
    for s in 1..=SETTINGS {
        for t in s + 1..=SETTINGS {
            for r in 0..alphabet {
                for x in 0..alphabet {
                    index.push(Word::pair(Letter::new(s, r), Letter::new(t, x)));
                }
            }
        }
    }
    index
}

/// Sparse linear functional on upper-triangle entries: `Σ coeff · M[i, j] = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<((usize, usize), f64)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn residual(&self, m: &DMatrix<f64>) -> f64 {
        self.coeffs.iter().map(|&((i, j), a)| a * m[(i, j)]).sum::<f64>() - self.rhs
    }
}

fn upper(i: usize, j: usize) -> (usize, usize) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Coefficients and right-hand side in fixed-point form, for deduplication.
type ConstraintKey = (Vec<((usize, usize), i64)>, i64);

struct ConstraintSet {
    seen: HashSet<ConstraintKey>,
    list: Vec<Constraint>,
}

impl ConstraintSet {
    fn new() -> Self {
        Self { seen: HashSet::new(), list: Vec::new() }
    }

    fn push(&mut self, terms: &[((usize, usize), i64)], rhs: i64) {
        let mut acc: BTreeMap<(usize, usize), i64> = BTreeMap::new();
        for &((i, j), a) in terms {
            *acc.entry(upper(i, j)).or_default() += a;
        }
        let mut coeffs: Vec<_> = acc.into_iter().filter(|&(_, a)| a != 0).collect();
        if coeffs.is_empty() {
            return;
        }
        let mut rhs = rhs;
        if coeffs[0].1 < 0 {
            coeffs.iter_mut().for_each(|c| c.1 = -c.1);
            rhs = -rhs;
        }
        if self.seen.insert((coeffs.clone(), rhs)) {
            self.list
                .push(Constraint { coeffs: coeffs.into_iter().map(|(e, a)| (e, a as f64)).collect(), rhs: rhs as f64 });
        }
    }
}

/// Linear relations implied by projector algebra and Hermiticity, deduplicated.
pub fn build_constraints(index: &[Word]) -> Vec<Constraint> {
    let n = index.len();
    let position: HashMap<&Word, usize> = index.iter().enumerate().map(|(i, w)| (w, i)).collect();
    let mut set = ConstraintSet::new();

    if let Some(&e) = position.get(&Word::empty()) {
        set.push(&[((e, e), 1)], 1);
    }

    let mut groups: BTreeMap<Word, (usize, usize)> = BTreeMap::new();
    for i in 0..n {
        for j in i..n {
            match reduced_key(&index[i].entry_word(&index[j])) {
                None => set.push(&[((i, j), 1)], 0),
                Some(key) => match groups.get(&key) {
                    Some(&rep) => set.push(&[((i, j), 1), (rep, -1)], 0),
                    None => {
                        groups.insert(key, (i, j));
                    }
                },
            }
        }
    }

    let alphabet = index.iter().flat_map(|w| w.letters().iter().map(|l| l.outcome as usize + 1)).max().unwrap_or(0);
    for (i, u) in index.iter().enumerate() {
        for s in 1..=SETTINGS {
            for front in [false, true] {
                let rows: Option<Vec<usize>> = (0..alphabet as u8)
                    .map(|r| {
                        let l = Word::single(s, r);
                        let w = if front { l.concat(u) } else { u.concat(&l) };
                        position.get(&w).copied()
                    })
                    .collect();
                let Some(rows) = rows else { continue };
                for j in 0..n {
                    let mut terms: Vec<_> = rows.iter().map(|&k| ((k, j), 1)).collect();
                    terms.push(((i, j), -1));
                    set.push(&terms, 0);
                }
            }
        }
    }
    set.list
}

/// Coefficients of `C21 + C32 − C31` on diagonal entries.
pub fn k3_objective(index: &[Word], q: &[i8]) -> Result<Vec<((usize, usize), f64)>> {
    check_labels(q)?;
    let position: HashMap<&Word, usize> = index.iter().enumerate().map(|(i, w)| (w, i)).collect();
    let mut out = Vec::new();
    for (a, b, sign) in [(1u8, 2u8, 1.0), (2, 3, 1.0), (1, 3, -1.0)] {
        for (l, &ql) in q.iter().enumerate() {
            for (m, &qm) in q.iter().enumerate() {
                let w = Word::pair(Letter::new(a, l as u8), Letter::new(b, m as u8));
                let &i = position.get(&w).ok_or_else(|| {
                    Error::InvalidParameter(format!("index lacks the word {w} needed by the objective"))
                })?;
                out.push(((i, i), sign * f64::from(ql) * f64::from(qm)));
            }
        }
    }
    Ok(out)
}

fn check_labels(q: &[i8]) -> Result<()> {
    if q.len() < 2 || q.iter().any(|&x| x != 1 && x != -1) {
        return Err(Error::InvalidParameter(format!("labels must be ±1, got {q:?}")));
    }
    if q.iter().all(|&x| x == q[0]) {
        return Err(Error::DegenerateLabeling);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MomentProblem {
    pub outcomes: usize,
    pub q: Vec<i8>,
    pub index: Vec<Word>,
    pub dim: usize,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<((usize, usize), f64)>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub optimum: f64,
    /// Full moment matrix over `index`.
    pub matrix: DMatrix<f64>,
    pub duality_gap: f64,
    pub iterations: usize,
    pub max_residual: f64,
    pub min_eigenvalue: f64,
}

impl MomentProblem {
    /// Canonical labels `(+1, …, +1, −1)`.
    pub fn new(outcomes: usize) -> Result<Self> {
        if outcomes < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 outcomes, got {outcomes}")));
        }
        Self::with_labels(canonical_labels(outcomes))
    }

    pub fn with_labels(q: Vec<i8>) -> Result<Self> {
        check_labels(&q)?;
        let index = build_index(q.len())?;
        let constraints = build_constraints(&index);
        let objective = k3_objective(&index, &q)?;
        Ok(Self { outcomes: q.len(), dim: index.len(), q, index, constraints, objective })
    }

    pub fn objective_value(&self, m: &DMatrix<f64>) -> f64 {
        self.objective.iter().map(|&((i, j), c)| c * m[(i, j)]).sum()
    }

    pub fn max_residual(&self, m: &DMatrix<f64>) -> f64 {
        self.constraints.iter().map(|c| c.residual(m).abs()).fold(0.0, f64::max)
    }

    /// Moment matrix of an explicit instance. `rho` is the state at the first
    /// measurement; later settings are the projectors carried back through
    /// `u21` and `u32 u21`.
    pub fn certificate(
        &self,
        rho: &DensityMatrix,
        u21: &CMatrix,
        u32: &CMatrix,
        scheme: &MeasurementScheme,
    ) -> Result<DMatrix<f64>> {
        if scheme.outcomes() != self.outcomes {
            return Err(Error::DimensionMismatch { expected: self.outcomes, found: scheme.outcomes() });
        }
        let d = scheme.dim();
        if rho.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: rho.dim() });
        }
        let v = u32 * u21;
        let heisenberg = |s: u8, r: u8| -> CMatrix {
            let p = scheme.projector(r as usize);
            match s {
                1 => p.clone(),
                2 => u21.adjoint() * p * u21,
                _ => v.adjoint() * p * &v,
            }
        };
        let ops: Vec<CMatrix> = self
            .index
            .iter()
            .map(|w| w.letters().iter().fold(CMatrix::identity(d, d), |acc, l| acc * heisenberg(l.setting, l.outcome)))
            .collect();
        let rho = rho.matrix();
        let n = self.dim;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let left = rho * &ops[i];
            for j in i..n {
                let val = (&left * ops[j].adjoint()).trace().re;
                m[(i, j)] = val;
                m[(j, i)] = val;
            }
        }
        Ok(m)
    }

    fn reduced_lmi(&self) -> Result<ReducedLmi> {
        let last = (self.outcomes - 1) as u8;
        let index: Vec<Word> =
            self.index.iter().filter(|w| w.letters().iter().all(|l| l.outcome < last)).cloned().collect();
        let n = index.len();
        let mut lmi = LmiProblem::new(n);
        let mut vars: BTreeMap<Word, usize> = BTreeMap::new();
        let mut entries: Vec<Vec<(usize, usize, f64)>> = Vec::new();
        for i in 0..n {
            for j in i..n {
                match reduced_key(&index[i].entry_word(&index[j])) {
                    None => {}
                    Some(k) if k.is_empty() => lmi.f0.push((i, j, 1.0)),
                    Some(k) => {
                        let next = vars.len();
                        let id = *vars.entry(k).or_insert(next);
                        if id == entries.len() {
                            entries.push(Vec::new());
                        }
                        entries[id].push((i, j, 1.0));
                    }
                }
            }
        }
        let mut c = vec![0.0; entries.len()];
        let mut offset = 0.0;
        for &((i, j), coef) in &self.objective {
            let w = self.index[i].entry_word(&self.index[j]);
            for (key, a) in expand_word(&w, last) {
                if key.is_empty() {
                    offset += coef * a;
                } else {
                    let &id = vars.get(&key).ok_or_else(|| {
                        Error::NumericalIntegrity(format!("objective moment {key} missing from the reduced matrix"))
                    })?;
                    c[id] += coef * a;
                }
            }
        }
        lmi.offset = offset;
        for (ci, e) in c.into_iter().zip(entries) {
            lmi.push_var(ci, e);
        }
        Ok(ReducedLmi { lmi, vars, last })
    }

    pub fn solve(&self, tol: f64) -> Result<SdpSolution> {
        solve(self, tol)
    }
}

struct ReducedLmi {
    lmi: LmiProblem,
    vars: BTreeMap<Word, usize>,
    last: u8,
}

impl ReducedLmi {
    fn moment(&self, w: &Word, y: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (key, a) in expand_word(w, self.last) {
            let v = if key.is_empty() {
                1.0
            } else {
                let &id = self.vars.get(&key).ok_or_else(|| {
                    Error::NumericalIntegrity(format!("moment {key} missing from the reduced matrix"))
                })?;
                y[id]
            };
            total += a * v;
        }
        Ok(total)
    }
}

/// Rewrites every `Π(last|s)` as `1 − Σ_{r<last} Π(r|s)` and collects canonical words.
fn expand_word(w: &Word, last: u8) -> BTreeMap<Word, f64> {
    let mut terms: Vec<(Vec<Letter>, f64)> = vec![(Vec::new(), 1.0)];
    for &l in w.letters() {
        let mut next = Vec::new();
        for (t, a) in terms {
            if l.outcome < last {
                let mut t2 = t.clone();
                t2.push(l);
                next.push((t2, a));
            } else {
                next.push((t.clone(), a));
                for r in 0..last {
                    let mut t2 = t.clone();
                    t2.push(Letter::new(l.setting, r));
                    next.push((t2, -a));
                }
            }
        }
        terms = next;
    }
    let mut out: BTreeMap<Word, f64> = BTreeMap::new();
    for (t, a) in terms {
        if let Some(k) = reduced_key(&Word(t)) {
            *out.entry(k).or_default() += a;
        }
    }
    out.retain(|_, a| *a != 0.0);
    out
}

pub fn solve(problem: &MomentProblem, tol: f64) -> Result<SdpSolution> {
    let reduced = problem.reduced_lmi()?;
    let opts = SdpOptions { tol, ..SdpOptions::default() };
    let sol = solve_lmi(&reduced.lmi, &opts)?;
    let n = problem.dim;
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let w = problem.index[i].entry_word(&problem.index[j]);
            let v = reduced.moment(&w, &sol.y)?;
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    let max_residual = problem.max_residual(&matrix);
    let min_eigenvalue = SymmetricEigen::new(matrix.clone()).eigenvalues.min();
    Ok(SdpSolution {
        optimum: sol.dual_objective,
        matrix,
        duality_gap: sol.gap,
        iterations: sol.iterations,
        max_residual,
        min_eigenvalue,
    })
}

/// Dimension-independent upper bound on K3 for `outcomes` projectors per measurement.
pub fn sdp_bound(outcomes: usize, tol: f64) -> Result<SdpSolution> {
    MomentProblem::new(outcomes)?.solve(tol)
}
