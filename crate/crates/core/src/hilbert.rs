//! Dense complex linear algebra over the truncated Fock space of the cavity
//! and the two qubit factors (meter and post-selection).
//!
//! Qubit basis order is `(g, e)` with the conventions
//! `σx|g⟩ = |e⟩`, `σy|g⟩ = i|e⟩`, `σz|g⟩ = −|g⟩`.
//!
//! The tripartite state is stored n-major: `index = (n * 2 + meter) * 2 + ps`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

const NORM_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-12;

/// Qubit level, used as an index into the `(g, e)` basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    G = 0,
    E = 1,
}

impl Level {
    pub const BOTH: [Level; 2] = [Level::G, Level::E];
}

/// Pure state of the cavity mode in the truncated Fock basis `|0⟩..|n_max⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityState {
    amps: Vec<C64>,
}

impl CavityState {
    /// Wraps raw amplitudes `c_0..c_N` without normalizing them.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.len() < 2 {
            return Err(Error::InvalidTruncation(amps.len().saturating_sub(1)));
        }
        if amps.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite amplitude".into()));
        }
        Ok(Self { amps })
    }

    /// Wraps and normalizes.
    pub fn normalized(amps: Vec<C64>) -> Result<Self> {
        Self::new(amps)?.normalize()
    }

    pub fn fock(n_max: usize, k: usize) -> Result<Self> {
        check_truncation(n_max)?;
        if k > n_max {
            return Err(Error::FockIndexOutOfRange { index: k, n_max });
        }
        let mut amps = vec![ZERO; n_max + 1];
        amps[k] = ONE;
        Ok(Self { amps })
    }

    pub fn vacuum(n_max: usize) -> Result<Self> {
        Self::fock(n_max, 0)
    }

    /// Coherent state `|α⟩` truncated at `n_max` and renormalized.
    pub fn coherent(n_max: usize, alpha: C64) -> Result<Self> {
        check_truncation(n_max)?;
        let mut amps = Vec::with_capacity(n_max + 1);
        let mut term = ONE;
        amps.push(term);
        for n in 1..=n_max {
            term = term * alpha / (n as f64).sqrt();
            amps.push(term);
        }
        Self::normalized(amps)
    }

    /// Even cat state `|α⟩ + |−α⟩`, truncated and renormalized.
    pub fn cat(n_max: usize, alpha: C64) -> Result<Self> {
        let plus = Self::coherent(n_max, alpha)?;
        let minus = Self::coherent(n_max, -alpha)?;
        let amps = plus
            .amps
            .iter()
            .zip(&minus.amps)
            .map(|(a, b)| a + b)
            .collect();
        Self::normalized(amps)
    }

    /// Haar-distributed random pure state (normalized complex Gaussian vector).
    pub fn haar_random<R: Rng + ?Sized>(n_max: usize, rng: &mut R) -> Result<Self> {
        check_truncation(n_max)?;
        let amps = (0..=n_max)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::normalized(amps)
    }

    pub fn n_max(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amps(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn normalize(self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            amps: self.amps.into_iter().map(|c| c / norm).collect(),
        })
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &CavityState) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Multiplies every amplitude by `e^{iθ}`.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        let phase = C64::from_polar(1.0, theta);
        Self {
            amps: self.amps.iter().map(|c| c * phase).collect(),
        }
    }

    /// Rotates the global phase so the first amplitude above `threshold` is real positive.
    pub fn gauge_fixed(&self, threshold: f64) -> Self {
        let Some(k) = self.amps.iter().position(|c| c.norm() > threshold) else {
            return self.clone();
        };
        let mut fixed = self.with_global_phase(-self.amps[k].arg());
        fixed.amps[k] = C64::new(self.amps[k].norm(), 0.0);
        fixed
    }
}

/// Pure state of a single qubit, amplitudes on `|g⟩` and `|e⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitState {
    pub g: C64,
    pub e: C64,
}

impl QubitState {
    pub fn new(g: C64, e: C64) -> Self {
        Self { g, e }
    }

    pub fn ground() -> Self {
        Self { g: ONE, e: ZERO }
    }

    pub fn excited() -> Self {
        Self { g: ZERO, e: ONE }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.g.norm_sqr() + self.e.norm_sqr()
    }

    pub fn normalize(self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            g: self.g / norm,
            e: self.e / norm,
        })
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    pub fn amp(&self, level: Level) -> C64 {
        match level {
            Level::G => self.g,
            Level::E => self.e,
        }
    }

    /// Trace distance between two pure qubit states, `sqrt(1 − |⟨a|b⟩|²)`.
    pub fn trace_distance(&self, other: &QubitState) -> f64 {
        let overlap = self.g.conj() * other.g + self.e.conj() * other.e;
        let f = overlap.norm_sqr() / (self.norm_sqr() * other.norm_sqr());
        (1.0 - f.min(1.0)).sqrt()
    }
}

/// Normalized pure state on cavity ⊗ meter ⊗ post-selection qubit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    amps: Vec<C64>,
    n_max: usize,
}

impl JointState {
    pub fn index(n: usize, meter: Level, ps: Level) -> usize {
        (n * 2 + meter as usize) * 2 + ps as usize
    }

    pub fn dim_for(n_max: usize) -> usize {
        (n_max + 1) * 4
    }

    /// Builds a joint state from raw amplitudes in the fixed layout; must be normalized.
    pub fn from_amps(n_max: usize, amps: Vec<C64>) -> Result<Self> {
        check_truncation(n_max)?;
        if amps.len() != Self::dim_for(n_max) {
            return Err(Error::DimensionMismatch {
                expected: Self::dim_for(n_max),
                found: amps.len(),
            });
        }
        let state = Self { amps, n_max };
        if !state.is_normalized() {
            return Err(Error::NotNormalized(state.norm_sqr()));
        }
        Ok(state)
    }

    pub fn basis(n_max: usize, n: usize, meter: Level, ps: Level) -> Result<Self> {
        check_truncation(n_max)?;
        if n > n_max {
            return Err(Error::FockIndexOutOfRange { index: n, n_max });
        }
        let mut amps = vec![ZERO; Self::dim_for(n_max)];
        amps[Self::index(n, meter, ps)] = ONE;
        Ok(Self { amps, n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn amp(&self, n: usize, meter: Level, ps: Level) -> C64 {
        self.amps[Self::index(n, meter, ps)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    pub(crate) fn renormalized(self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            amps: self.amps.into_iter().map(|c| c / norm).collect(),
            n_max: self.n_max,
        })
    }

    /// Cavity amplitudes of the branch with fixed meter and ps levels (unnormalized).
    pub fn cavity_branch(&self, meter: Level, ps: Level) -> Vec<C64> {
        (0..=self.n_max).map(|n| self.amp(n, meter, ps)).collect()
    }

    /// Reduced density matrix of the cavity after tracing out both qubits.
    pub fn reduced_cavity(&self) -> DMatrix<C64> {
        let d = self.n_max + 1;
        DMatrix::from_fn(d, d, |i, j| {
            let mut acc = ZERO;
            for m in Level::BOTH {
                for p in Level::BOTH {
                    acc += self.amp(i, m, p) * self.amp(j, m, p).conj();
                }
            }
            acc
        })
    }
}

/// Which subsystem(s) an operator acts on inside a [`JointState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Cavity,
    Meter,
    Ps,
    /// Local index `n * 2 + meter`.
    CavityMeter,
    /// Local index `n * 2 + ps`.
    CavityPs,
}

impl Factor {
    fn dim(self, n_max: usize) -> usize {
        match self {
            Factor::Cavity => n_max + 1,
            Factor::Meter | Factor::Ps => 2,
            Factor::CavityMeter | Factor::CavityPs => 2 * (n_max + 1),
        }
    }

    /// Splits a global index into (local index on this factor, spectator key).
    fn split(self, idx: usize) -> (usize, usize) {
        let ps = idx % 2;
        let meter = (idx / 2) % 2;
        let n = idx / 4;
        match self {
            Factor::Cavity => (n, meter * 2 + ps),
            Factor::Meter => (meter, n * 2 + ps),
            Factor::Ps => (ps, n * 2 + meter),
            Factor::CavityMeter => (n * 2 + meter, ps),
            Factor::CavityPs => (n * 2 + ps, meter),
        }
    }

    fn join(self, local: usize, spectator: usize) -> usize {
        let (n, meter, ps) = match self {
            Factor::Cavity => (local, spectator / 2, spectator % 2),
            Factor::Meter => (spectator / 2, local, spectator % 2),
            Factor::Ps => (spectator / 2, spectator % 2, local),
            Factor::CavityMeter => (local / 2, local % 2, spectator),
            Factor::CavityPs => (local / 2, spectator, local % 2),
        };
        (n * 2 + meter) * 2 + ps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    Unitary,
    Hermitian,
    General,
}

/// Dense complex operator with a declared kind, checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOp {
    matrix: DMatrix<C64>,
    kind: OpKind,
}

impl LinearOp {
    pub fn new(matrix: DMatrix<C64>, kind: OpKind) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        match kind {
            OpKind::Unitary => {
                let dev = max_abs_diff(
                    &(matrix.adjoint() * &matrix),
                    &DMatrix::identity(matrix.nrows(), matrix.ncols()),
                );
                if dev > UNITARY_TOL {
                    return Err(Error::NotUnitary(dev));
                }
            }
            OpKind::Hermitian => {
                let dev = max_abs_diff(&matrix, &matrix.adjoint());
                if dev > HERMITIAN_TOL {
                    return Err(Error::NotHermitian(dev));
                }
            }
            OpKind::General => {}
        }
        Ok(Self { matrix, kind })
    }

    pub fn unitary(matrix: DMatrix<C64>) -> Result<Self> {
        Self::new(matrix, OpKind::Unitary)
    }

    pub fn hermitian(matrix: DMatrix<C64>) -> Result<Self> {
        Self::new(matrix, OpKind::Hermitian)
    }

    pub fn general(matrix: DMatrix<C64>) -> Self {
        Self {
            matrix,
            kind: OpKind::General,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            kind: OpKind::Unitary,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            kind: self.kind,
        }
    }

    /// `self · rhs`; unitary only if both factors are.
    pub fn compose(&self, rhs: &LinearOp) -> Result<Self> {
        if self.dim() != rhs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: rhs.dim(),
            });
        }
        let kind = if self.kind == OpKind::Unitary && rhs.kind == OpKind::Unitary {
            OpKind::Unitary
        } else {
            OpKind::General
        };
        Ok(Self {
            matrix: &self.matrix * &rhs.matrix,
            kind,
        })
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_deviation(&self, other: &LinearOp) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(max_abs_diff(&self.matrix, &other.matrix))
    }

    /// Deviation of `U†U` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.dim();
        max_abs_diff(&(self.matrix.adjoint() * &self.matrix), &DMatrix::identity(d, d))
    }

    pub fn apply_vec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok((0..self.dim())
            .map(|r| (0..self.dim()).map(|c| self.matrix[(r, c)] * v[c]).sum())
            .collect())
    }
}

pub(crate) fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn check_truncation(n_max: usize) -> Result<()> {
    if n_max < 1 {
        Err(Error::InvalidTruncation(n_max))
    } else {
        Ok(())
    }
}

/// Single-qubit Pauli set in the `(g, e)` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSet {
    pub x: LinearOp,
    pub y: LinearOp,
    pub z: LinearOp,
    /// Lowering operator `σ⁻ = |g⟩⟨e|`.
    pub minus: LinearOp,
    pub identity: LinearOp,
}

impl PauliSet {
    pub fn new() -> Self {
        let m = |a: [C64; 4]| DMatrix::from_row_slice(2, 2, &a);
        Self {
            x: LinearOp {
                matrix: m([ZERO, ONE, ONE, ZERO]),
                kind: OpKind::Hermitian,
            },
            // column g maps to i|e⟩
            y: LinearOp {
                matrix: m([ZERO, -I, I, ZERO]),
                kind: OpKind::Hermitian,
            },
            z: LinearOp {
                matrix: m([-ONE, ZERO, ZERO, ONE]),
                kind: OpKind::Hermitian,
            },
            minus: LinearOp::general(m([ZERO, ONE, ZERO, ZERO])),
            identity: LinearOp::identity(2),
        }
    }
}

impl Default for PauliSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Ladder, number and projector operators on the truncated cavity, plus the qubit Paulis.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet {
    pub n_max: usize,
    pub a: LinearOp,
    pub a_dag: LinearOp,
    pub number: LinearOp,
    pub pauli: PauliSet,
}

impl OperatorSet {
    /// `|n⟩⟨n|` on the cavity.
    pub fn projector(&self, n: usize) -> Result<LinearOp> {
        if n > self.n_max {
            return Err(Error::FockIndexOutOfRange {
                index: n,
                n_max: self.n_max,
            });
        }
        let d = self.n_max + 1;
        let mut matrix = DMatrix::zeros(d, d);
        matrix[(n, n)] = ONE;
        Ok(LinearOp {
            matrix,
            kind: OpKind::Hermitian,
        })
    }
}

pub fn make_operators(n_max: usize) -> Result<OperatorSet> {
    check_truncation(n_max)?;
    let d = n_max + 1;
    let mut a = DMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let a_dag = a.adjoint();
    let number = &a_dag * &a;
    Ok(OperatorSet {
        n_max,
        a: LinearOp::general(a),
        a_dag: LinearOp::general(a_dag),
        number: LinearOp::hermitian(number)?,
        pauli: PauliSet::new(),
    })
}

/// Product state `cavity ⊗ meter ⊗ ps` in the fixed layout.
pub fn tensor(cavity: &CavityState, meter: &QubitState, ps: &QubitState) -> Result<JointState> {
    if !cavity.is_normalized() {
        return Err(Error::NotNormalized(cavity.norm_sqr()));
    }
    for q in [meter, ps] {
        if !q.is_normalized() {
            return Err(Error::NotNormalized(q.norm_sqr()));
        }
    }
    let n_max = cavity.n_max();
    let mut amps = vec![ZERO; JointState::dim_for(n_max)];
    for (n, c) in cavity.amps().iter().enumerate() {
        for m in Level::BOTH {
            for p in Level::BOTH {
                amps[JointState::index(n, m, p)] = c * meter.amp(m) * ps.amp(p);
            }
        }
    }
    Ok(JointState { amps, n_max })
}

/// Applies `op` to the declared factor, identity elsewhere.
///
/// Unitary operators return a state that is still normalized; general operators
/// return the unnormalized image renormalized to unit norm.
pub fn apply(op: &LinearOp, state: &JointState, factor: Factor) -> Result<JointState> {
    let expected = factor.dim(state.n_max);
    if op.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: op.dim(),
        });
    }
    let mut out = vec![ZERO; state.amps.len()];
    for (idx, &amp) in state.amps.iter().enumerate() {
        if amp == ZERO {
            continue;
        }
        let (col, spectator) = factor.split(idx);
        for row in 0..expected {
            let m = op.matrix[(row, col)];
            if m != ZERO {
                out[factor.join(row, spectator)] += m * amp;
            }
        }
    }
    let image = JointState {
        amps: out,
        n_max: state.n_max,
    };
    match op.kind {
        OpKind::Unitary => Ok(image),
        _ => image.renormalized(),
    }
}

/// Meter measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeterBasis {
    /// `|±⟩ = (|g⟩ ± |e⟩)/√2`, eigenbasis of σx.
    X,
    /// `|±⟩ = (|g⟩ ± i|e⟩)/√2`, eigenbasis of σy.
    Y,
}

impl MeterBasis {
    pub const BOTH: [MeterBasis; 2] = [MeterBasis::X, MeterBasis::Y];

    pub fn name(self) -> &'static str {
        match self {
            MeterBasis::X => "X",
            MeterBasis::Y => "Y",
        }
    }

    /// Basis vector for outcome `+` (`sign = 0`) or `−` (`sign = 1`), as `(g, e)` amplitudes.
    pub fn vector(self, sign: usize) -> QubitState {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phase = match (self, sign) {
            (MeterBasis::X, 0) => ONE,
            (MeterBasis::X, _) => -ONE,
            (MeterBasis::Y, 0) => I,
            (MeterBasis::Y, _) => -I,
        };
        QubitState::new(C64::new(s, 0.0), phase * s)
    }
}

/// Joint probabilities of (meter outcome ±, ps outcome g/e); index `[meter][ps]`
/// with meter `0 = +`, `1 = −` and ps `0 = g`, `1 = e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub probs: [[f64; 2]; 2],
}

impl OutcomeTable {
    pub fn p(&self, meter_sign: usize, ps: Level) -> f64 {
        self.probs[meter_sign][ps as usize]
    }

    pub fn ps_marginal(&self, ps: Level) -> f64 {
        self.probs[0][ps as usize] + self.probs[1][ps as usize]
    }

    pub fn meter_marginal(&self, meter_sign: usize) -> f64 {
        self.probs[meter_sign][0] + self.probs[meter_sign][1]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().flatten().sum()
    }

    /// Outcomes flattened as `[(+,g), (+,e), (−,g), (−,e)]`.
    pub fn flat(&self) -> [f64; 4] {
        [
            self.probs[0][0],
            self.probs[0][1],
            self.probs[1][0],
            self.probs[1][1],
        ]
    }
}

/// Projective measurement statistics of meter (in `basis`) and ps (in `{g, e}`),
/// cavity traced out.
pub fn outcome_distribution(state: &JointState, basis: MeterBasis) -> OutcomeTable {
    let mut probs = [[0.0; 2]; 2];
    for (sign, row) in probs.iter_mut().enumerate() {
        let b = basis.vector(sign);
        for ps in Level::BOTH {
            row[ps as usize] = (0..=state.n_max)
                .map(|n| {
                    let amp = b.g.conj() * state.amp(n, Level::G, ps)
                        + b.e.conj() * state.amp(n, Level::E, ps);
                    amp.norm_sqr()
                })
                .sum();
        }
    }
    OutcomeTable { probs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn approx(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn lowering_operator_on_one_photon() {
        let ops = make_operators(3).unwrap();
        let out = ops.a.apply_vec(&[ZERO, ONE, ZERO, ZERO]).unwrap();
        assert_eq!(out, vec![ONE, ZERO, ZERO, ZERO]);
        assert!(approx(ops.a.entry(2, 3), C64::new(3f64.sqrt(), 0.0), 1e-15));
    }

    #[test]
    fn commutator_is_identity_below_edge() {
        let n_max = 6;
        let ops = make_operators(n_max).unwrap();
        let a = ops.a.matrix();
        let ad = ops.a_dag.matrix();
        let comm = a * ad - ad * a;
        for n in 0..n_max {
            assert!(approx(comm[(n, n)], ONE, 1e-12), "n = {n}");
        }
        // truncation edge picks up −n_max
        assert!(approx(comm[(n_max, n_max)], C64::new(-(n_max as f64), 0.0), 1e-12));
    }

    #[test]
    fn number_operator_spectrum() {
        let ops = make_operators(5).unwrap();
        for n in 0..=5 {
            assert!(approx(ops.number.entry(n, n), C64::new(n as f64, 0.0), 1e-12));
        }
        assert_eq!(ops.number.kind(), OpKind::Hermitian);
    }

    #[test]
    fn rejects_trivial_truncation() {
        assert_eq!(make_operators(0).unwrap_err(), Error::InvalidTruncation(0));
        assert!(CavityState::fock(0, 0).is_err());
    }

    #[test]
    fn projectors_are_orthogonal_and_complete() {
        let ops = make_operators(4).unwrap();
        let mut sum = DMatrix::<C64>::zeros(5, 5);
        for n in 0..=4 {
            let pn = ops.projector(n).unwrap();
            for m in 0..=4 {
                let pm = ops.projector(m).unwrap();
                let prod = pn.matrix() * pm.matrix();
                let expected = if n == m { pn.matrix().clone() } else { DMatrix::zeros(5, 5) };
                assert_eq!(max_abs_diff(&prod, &expected), 0.0);
            }
            sum += pn.matrix();
        }
        assert_eq!(max_abs_diff(&sum, &DMatrix::identity(5, 5)), 0.0);
        assert!(ops.projector(5).is_err());
    }

    #[test]
    fn pauli_actions_on_ground() {
        let p = PauliSet::new();
        let g = [ONE, ZERO];
        assert_eq!(p.x.apply_vec(&g).unwrap(), vec![ZERO, ONE]);
        assert_eq!(p.y.apply_vec(&g).unwrap(), vec![ZERO, I]);
        assert_eq!(p.z.apply_vec(&g).unwrap(), vec![-ONE, ZERO]);
        assert_eq!(p.minus.apply_vec(&[ZERO, ONE]).unwrap(), vec![ONE, ZERO]);
    }

    #[test]
    fn pauli_algebra() {
        let p = PauliSet::new();
        let (x, y, z) = (p.x.matrix(), p.y.matrix(), p.z.matrix());
        let id = DMatrix::<C64>::identity(2, 2);
        for s in [x, y, z] {
            assert_eq!(max_abs_diff(&(s * s), &id), 0.0);
        }
        // With σz|g⟩ = −|g⟩ and σy|g⟩ = i|e⟩ the cyclic product carries the opposite
        // orientation: σy σx = iσz (equivalently σx σy = −iσz).
        assert_eq!(max_abs_diff(&(y * x), &(z * I)), 0.0);
        assert_eq!(max_abs_diff(&(x * y), &(z * -I)), 0.0);
        assert_eq!(max_abs_diff(&(z * y), &(x * I)), 0.0);
        assert_eq!(max_abs_diff(&(x * z), &(y * I)), 0.0);
    }

    #[test]
    fn tensor_basis_and_superposition() {
        let s = tensor(&CavityState::vacuum(2).unwrap(), &QubitState::ground(), &QubitState::ground()).unwrap();
        assert_eq!(s, JointState::basis(2, 0, Level::G, Level::G).unwrap());

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let cav = CavityState::normalized(vec![ONE, ONE, ZERO]).unwrap();
        let s = tensor(&cav, &QubitState::ground(), &QubitState::ground()).unwrap();
        assert!(approx(s.amp(0, Level::G, Level::G), C64::new(h, 0.0), 1e-15));
        assert!(approx(s.amp(1, Level::G, Level::G), C64::new(h, 0.0), 1e-15));
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_rejects_unnormalized() {
        let cav = CavityState::new(vec![ONE, ONE]).unwrap();
        assert!(matches!(
            tensor(&cav, &QubitState::ground(), &QubitState::ground()),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn apply_identity_and_sigma_x() {
        let s = JointState::basis(3, 0, Level::G, Level::G).unwrap();
        assert_eq!(apply(&LinearOp::identity(2), &s, Factor::Meter).unwrap(), s);
        let flipped = apply(&PauliSet::new().x, &s, Factor::Meter);
        // σx is flagged hermitian, so the image is renormalized (already unit norm)
        assert_eq!(flipped.unwrap(), JointState::basis(3, 0, Level::E, Level::G).unwrap());
    }

    #[test]
    fn apply_checks_dimensions() {
        let s = JointState::basis(3, 0, Level::G, Level::G).unwrap();
        let err = apply(&LinearOp::identity(3), &s, Factor::Cavity).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 4, found: 3 });
    }

    #[test]
    fn unitary_flag_is_checked() {
        let m = DMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(LinearOp::unitary(m), Err(Error::NotUnitary(_))));
        let m = DMatrix::from_row_slice(2, 2, &[ONE, I, I, ONE]);
        assert!(matches!(LinearOp::hermitian(m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn outcome_distribution_examples() {
        let s = JointState::basis(2, 0, Level::G, Level::G).unwrap();
        let t = outcome_distribution(&s, MeterBasis::X);
        assert!((t.p(0, Level::G) - 0.5).abs() < 1e-15);
        assert!((t.p(1, Level::G) - 0.5).abs() < 1e-15);
        assert_eq!(t.ps_marginal(Level::E), 0.0);

        let plus = MeterBasis::X.vector(0);
        let s = tensor(&CavityState::fock(2, 1).unwrap(), &plus, &QubitState::ground()).unwrap();
        let t = outcome_distribution(&s, MeterBasis::X);
        assert!((t.meter_marginal(0) - 1.0).abs() < 1e-15);

        let plus_y = MeterBasis::Y.vector(0);
        let s = tensor(&CavityState::fock(2, 1).unwrap(), &plus_y, &QubitState::ground()).unwrap();
        let t = outcome_distribution(&s, MeterBasis::Y);
        assert!((t.meter_marginal(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn y_basis_vectors_are_sigma_y_eigenstates() {
        let p = PauliSet::new();
        for (sign, eig) in [(0usize, 1.0), (1usize, -1.0)] {
            let v = MeterBasis::Y.vector(sign);
            let out = p.y.apply_vec(&[v.g, v.e]).unwrap();
            assert!(approx(out[0], v.g * eig, 1e-15));
            assert!(approx(out[1], v.e * eig, 1e-15));
        }
    }

    #[test]
    fn outcome_distribution_matches_explicit_projectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n_max = 3;
        let d = JointState::dim_for(n_max);
        let raw: Vec<C64> = (0..d)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let s = JointState::from_amps(n_max, raw.iter().map(|c| c / norm).collect()).unwrap();
        for basis in MeterBasis::BOTH {
            let t = outcome_distribution(&s, basis);
            assert!((t.total() - 1.0).abs() < 1e-12);
            for sign in 0..2 {
                let b = basis.vector(sign);
                for ps in Level::BOTH {
                    // ⟨ψ| I ⊗ |b⟩⟨b| ⊗ |ps⟩⟨ps| |ψ⟩ built as a full matrix
                    let mut proj = DMatrix::<C64>::zeros(d, d);
                    for n in 0..=n_max {
                        for m1 in Level::BOTH {
                            for m2 in Level::BOTH {
                                proj[(JointState::index(n, m1, ps), JointState::index(n, m2, ps))] =
                                    b.amp(m1) * b.amp(m2).conj();
                            }
                        }
                    }
                    let v = nalgebra::DVector::from_column_slice(s.amps());
                    let expect = (v.adjoint() * &proj * &v)[(0, 0)].re;
                    assert!((t.p(sign, ps) - expect).abs() < 1e-12);
                }
            }
            // ps marginal equals the reduced ps-state population
            let pg: f64 = (0..=n_max)
                .flat_map(|n| Level::BOTH.map(|m| s.amp(n, m, Level::G).norm_sqr()))
                .sum();
            assert!((t.ps_marginal(Level::G) - pg).abs() < 1e-12);
        }
    }

    #[test]
    fn coherent_and_cat_presets() {
        let c = CavityState::coherent(12, C64::new(1.0, 0.0)).unwrap();
        assert!(c.is_normalized());
        let expect1 = (-0.5f64).exp();
        assert!((c.amps()[0].re - expect1).abs() < 1e-5);
        let cat = CavityState::cat(8, C64::new(1.5, 0.0)).unwrap();
        for n in (1..=8).step_by(2) {
            assert!(cat.amps()[n].norm() < 1e-15);
        }
    }

    #[test]
    fn gauge_fix_makes_lead_real_positive() {
        let s = CavityState::normalized(vec![ZERO, C64::new(0.0, -1.0), ONE]).unwrap();
        let g = s.gauge_fixed(1e-6);
        assert!(g.amps()[1].im.abs() < 1e-15 && g.amps()[1].re > 0.0);
    }
}
