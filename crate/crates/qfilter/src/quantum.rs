//! Small-matrix quantum mechanics for weak-measurement chains.
//!
//! States are 2x2 (qubit) or 4x4 (system + ancilla) density matrices.
//! The ancilla occupies the inner (second) tensor slot, so projective
//! measurements on it are `I (x) P`. Everything here is a pure function
//! over immutable values; RNG state is passed in explicitly.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Entrywise tolerance for Hermiticity and trace checks.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Eigenvalues of a density matrix may dip this far below zero before the
/// state is rejected; absorbs drift over ~1e4 evolution/measurement steps.
pub const EIGENVALUE_TOL: f64 = -1e-10;
/// Measurement branches with probability below this are treated as impossible.
pub const ZERO_PROBABILITY_TOL: f64 = 1e-14;

/// Dense square complex matrix of dimension 2 or 4, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        ComplexMatrix {
            dim,
            data: vec![Complex64::ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::ONE;
        }
        m
    }

    /// Builds a matrix from rows of (re, im) pairs.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if !(dim == 2 || dim == 4) || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension(format!(
                "expected square 2x2 or 4x4 input, got {} rows",
                dim
            )));
        }
        let data: Vec<Complex64> = rows.iter().flatten().copied().collect();
        let m = ComplexMatrix { dim, data };
        if !m.is_finite() {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    pub fn mul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, other.dim, "matrix product dimension mismatch");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == Complex64::ZERO {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn scale(&self, factor: Complex64) -> ComplexMatrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= factor;
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Trace of `self * other`, without forming the product.
    pub fn trace_of_product(&self, other: &ComplexMatrix) -> Complex64 {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut t = Complex64::ZERO;
        for i in 0..n {
            for j in 0..n {
                t += self[(i, j)] * other[(j, i)];
            }
        }
        t
    }

    /// Kronecker product, `self` on the outer (first) slot.
    pub fn kronecker(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let (n, m) = (self.dim, other.dim);
        let mut out = Self::zeros(n * m);
        for i in 0..n {
            for j in 0..n {
                let a = self[(i, j)];
                for k in 0..m {
                    for l in 0..m {
                        out[(i * m + k, j * m + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of `W W^dagger` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        self.mul(&self.adjoint())
            .max_abs_diff(&ComplexMatrix::identity(self.dim))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        for i in 0..self.dim {
            for j in i..self.dim {
                let d = self[(i, j)] - self[(j, i)].conj();
                if d.norm() > tol {
                    return false;
                }
            }
        }
        true
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Eigenvalues of a Hermitian matrix, ascending.
///
/// Embeds H = A + iB into the real symmetric [[A, -B], [B, A]] (same spectrum,
/// doubled multiplicity) and runs cyclic Jacobi sweeps.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let n = m.dim;
    let nn = 2 * n;
    let mut s = vec![0.0f64; nn * nn];
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            s[i * nn + j] = z.re;
            s[i * nn + (j + n)] = -z.im;
            s[(i + n) * nn + j] = z.im;
            s[(i + n) * nn + (j + n)] = z.re;
        }
    }

    let scale = (0..nn)
        .map(|i| s[i * nn + i].abs())
        .fold(1e-300, f64::max)
        .max(s.iter().fold(0.0f64, |acc, v| acc.max(v.abs())));

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..nn {
            for q in (p + 1)..nn {
                off += s[p * nn + q] * s[p * nn + q];
            }
        }
        if off.sqrt() < 1e-15 * scale {
            break;
        }
        for p in 0..nn {
            for q in (p + 1)..nn {
                let apq = s[p * nn + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = s[p * nn + p];
                let aqq = s[q * nn + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..nn {
                    let skp = s[k * nn + p];
                    let skq = s[k * nn + q];
                    s[k * nn + p] = c * skp - sn * skq;
                    s[k * nn + q] = sn * skp + c * skq;
                }
                for k in 0..nn {
                    let spk = s[p * nn + k];
                    let sqk = s[q * nn + k];
                    s[p * nn + k] = c * spk - sn * sqk;
                    s[q * nn + k] = sn * spk + c * sqk;
                }
            }
        }
    }

    let mut eig: Vec<f64> = (0..nn).map(|i| s[i * nn + i]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Every eigenvalue appears twice; average the adjacent duplicates.
    (0..n).map(|i| 0.5 * (eig[2 * i] + eig[2 * i + 1])).collect()
}

/// Hermitian, unit-trace, positive-semidefinite state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// Validating constructor; rejects non-Hermitian, non-normalized or
    /// negative states.
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        let rho = DensityMatrix { mat };
        rho.validate()?;
        Ok(rho)
    }

    /// Constructor for matrices that are valid states by construction
    /// (unitary conjugation, projection + renormalization, partial trace).
    pub(crate) fn new_unchecked(mat: ComplexMatrix) -> Self {
        debug_assert!(mat.is_hermitian(1e-9), "state lost Hermiticity");
        debug_assert!((mat.trace().re - 1.0).abs() < 1e-9, "state lost trace");
        DensityMatrix { mat }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mat.is_finite() {
            return Err(Error::NonFinite("density matrix entry".into()));
        }
        if !(self.mat.dim == 2 || self.mat.dim == 4) {
            return Err(Error::Dimension(format!(
                "density matrix must be 2x2 or 4x4, got {}x{}",
                self.mat.dim, self.mat.dim
            )));
        }
        if !self.mat.is_hermitian(HERMITICITY_TOL) {
            return Err(Error::InvalidState("matrix is not Hermitian".into()));
        }
        let tr = self.mat.trace();
        if (tr.re - 1.0).abs() > HERMITICITY_TOL || tr.im.abs() > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!(
                "trace is {:.17}, expected 1",
                tr.re
            )));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < EIGENVALUE_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {:.3e}",
                min_eig
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.mat)[0]
    }

    /// Maximally mixed state I/d.
    pub fn maximally_mixed(dim: usize) -> Self {
        let mat = ComplexMatrix::identity(dim).scale(Complex64::new(1.0 / dim as f64, 0.0));
        DensityMatrix { mat }
    }
}

/// Real 3-vector parameterizing a qubit state as (I + theta.sigma)/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector(pub [f64; 3]);

impl BlochVector {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Self {
        BlochVector([t1, t2, t3])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Rank-deficient Hermitian idempotent with an outcome tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    mat: ComplexMatrix,
    label: i8,
}

impl Projector {
    pub fn new(mat: ComplexMatrix, label: i8) -> Result<Self> {
        if !mat.is_hermitian(HERMITICITY_TOL) {
            return Err(Error::InvalidState("projector is not Hermitian".into()));
        }
        if mat.mul(&mat).max_abs_diff(&mat) > HERMITICITY_TOL {
            return Err(Error::InvalidState("projector is not idempotent".into()));
        }
        Ok(Projector { mat, label })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn label(&self) -> i8 {
        self.label
    }

    /// Conjugates by a unitary; U P U^dagger is again a projector.
    pub fn conjugated(&self, u: &ComplexMatrix) -> Result<Self> {
        let defect = u.unitarity_defect();
        if defect > 1e-10 {
            return Err(Error::NotUnitary(defect));
        }
        Ok(Projector {
            mat: u.mul(&self.mat).mul(&u.adjoint()),
            label: self.label,
        })
    }
}

/// Outcome of a von Neumann measurement.
#[derive(Debug, Clone)]
pub struct MeasurementOutcome {
    pub label: i8,
    pub probability: f64,
    pub post_state: DensityMatrix,
}

/// Measured observable on the ancilla.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    X,
    Z,
}

/// Which factor a partial trace keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    System,
    Ancilla,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// sigma_x.
pub fn pauli_x() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2);
    m[(0, 1)] = Complex64::ONE;
    m[(1, 0)] = Complex64::ONE;
    m
}

/// sigma_y.
pub fn pauli_y() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2);
    m[(0, 1)] = c(0.0, -1.0);
    m[(1, 0)] = c(0.0, 1.0);
    m
}

/// sigma_z.
pub fn pauli_z() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2);
    m[(0, 0)] = Complex64::ONE;
    m[(1, 1)] = c(-1.0, 0.0);
    m
}

/// (I + theta.sigma)/2 for |theta| <= 1.
pub fn bloch_to_density(theta: &BlochVector) -> Result<DensityMatrix> {
    let [t1, t2, t3] = theta.0;
    if !(t1.is_finite() && t2.is_finite() && t3.is_finite()) {
        return Err(Error::NonFinite("Bloch component".into()));
    }
    if theta.norm() > 1.0 + 1e-12 {
        return Err(Error::InvalidState(format!(
            "Bloch vector norm {:.17} exceeds 1",
            theta.norm()
        )));
    }
    let mut m = ComplexMatrix::zeros(2);
    m[(0, 0)] = c(0.5 * (1.0 + t3), 0.0);
    m[(0, 1)] = c(0.5 * t1, -0.5 * t2);
    m[(1, 0)] = c(0.5 * t1, 0.5 * t2);
    m[(1, 1)] = c(0.5 * (1.0 - t3), 0.0);
    Ok(DensityMatrix::new_unchecked(m))
}

/// theta_i = Tr(rho sigma_i); inverse of `bloch_to_density`.
pub fn density_to_bloch(rho: &DensityMatrix) -> Result<BlochVector> {
    if rho.dim() != 2 {
        return Err(Error::Dimension(format!(
            "Bloch vector requires a 2x2 state, got {}x{}",
            rho.dim(),
            rho.dim()
        )));
    }
    let m = rho.matrix();
    let t1 = m[(0, 1)].re + m[(1, 0)].re;
    let t2 = m[(1, 0)].im - m[(0, 1)].im;
    let t3 = m[(0, 0)].re - m[(1, 1)].re;
    Ok(BlochVector([t1, t2, t3]))
}

/// System (x) ancilla product state; system occupies the outer slot.
pub fn kron(system: &DensityMatrix, ancilla: &DensityMatrix) -> Result<DensityMatrix> {
    if system.dim() != 2 || ancilla.dim() != 2 {
        return Err(Error::Dimension(
            "kron expects two 2x2 density matrices".into(),
        ));
    }
    Ok(DensityMatrix::new_unchecked(
        system.matrix().kronecker(ancilla.matrix()),
    ))
}

/// Coupling unitary exp(-i a_y h sigma_y (x) sigma_y).
///
/// (sigma_y (x) sigma_y)^2 = I, so the exponential closes to
/// cos(a) I - i sin(a) sigma_y (x) sigma_y with a = a_y * h.
pub fn coupling_unitary(a_y: f64, h: f64) -> Result<ComplexMatrix> {
    let alpha = a_y * h;
    if !alpha.is_finite() {
        return Err(Error::NonFinite("coupling angle".into()));
    }
    let g = pauli_y().kronecker(&pauli_y());
    let cos_part = ComplexMatrix::identity(4).scale(c(alpha.cos(), 0.0));
    let sin_part = g.scale(c(0.0, -alpha.sin()));
    Ok(cos_part.add(&sin_part))
}

/// The explicit 4x4 rotation acting on the |00>,|11> plane:
/// cos/sin corners, identity middle block.
pub fn swap_like_unitary(phi: f64) -> Result<ComplexMatrix> {
    if !phi.is_finite() {
        return Err(Error::NonFinite("rotation angle".into()));
    }
    let (cs, sn) = (phi.cos(), phi.sin());
    let mut w = ComplexMatrix::zeros(4);
    w[(0, 0)] = c(cs, 0.0);
    w[(0, 3)] = c(sn, 0.0);
    w[(1, 1)] = Complex64::ONE;
    w[(2, 2)] = Complex64::ONE;
    w[(3, 0)] = c(-sn, 0.0);
    w[(3, 3)] = c(cs, 0.0);
    Ok(w)
}

/// W rho W^dagger for unitary W.
pub fn evolve(rho: &DensityMatrix, w: &ComplexMatrix) -> Result<DensityMatrix> {
    if rho.dim() != w.dim() {
        return Err(Error::Dimension(format!(
            "state is {}x{} but unitary is {}x{}",
            rho.dim(),
            rho.dim(),
            w.dim(),
            w.dim()
        )));
    }
    let defect = w.unitarity_defect();
    if defect > 1e-12 {
        return Err(Error::NotUnitary(defect));
    }
    Ok(DensityMatrix::new_unchecked(
        w.mul(rho.matrix()).mul(&w.adjoint()),
    ))
}

/// The pair I (x) P_{+-} for a Pauli observable measured on the ancilla.
pub fn projector_set(observable: Observable) -> (Projector, Projector) {
    let (p_plus, p_minus) = match observable {
        Observable::X => {
            let mut plus = ComplexMatrix::zeros(2);
            plus[(0, 0)] = c(0.5, 0.0);
            plus[(0, 1)] = c(0.5, 0.0);
            plus[(1, 0)] = c(0.5, 0.0);
            plus[(1, 1)] = c(0.5, 0.0);
            let mut minus = ComplexMatrix::zeros(2);
            minus[(0, 0)] = c(0.5, 0.0);
            minus[(0, 1)] = c(-0.5, 0.0);
            minus[(1, 0)] = c(-0.5, 0.0);
            minus[(1, 1)] = c(0.5, 0.0);
            (plus, minus)
        }
        Observable::Z => {
            let mut plus = ComplexMatrix::zeros(2);
            plus[(0, 0)] = Complex64::ONE;
            let mut minus = ComplexMatrix::zeros(2);
            minus[(1, 1)] = Complex64::ONE;
            (plus, minus)
        }
    };
    let eye = ComplexMatrix::identity(2);
    (
        Projector {
            mat: eye.kronecker(&p_plus),
            label: 1,
        },
        Projector {
            mat: eye.kronecker(&p_minus),
            label: -1,
        },
    )
}

/// Born rule: probability Tr(rho P), post state P rho P / Tr(rho P).
pub fn measure(rho: &DensityMatrix, p: &Projector) -> Result<MeasurementOutcome> {
    if rho.dim() != p.mat.dim {
        return Err(Error::Dimension(format!(
            "state is {}x{} but projector is {}x{}",
            rho.dim(),
            rho.dim(),
            p.mat.dim,
            p.mat.dim
        )));
    }
    let probability = rho.matrix().trace_of_product(&p.mat).re;
    if probability < ZERO_PROBABILITY_TOL {
        return Err(Error::ZeroProbability);
    }
    let projected = p.mat.mul(rho.matrix()).mul(&p.mat);
    let post = projected.scale(c(1.0 / probability, 0.0));
    Ok(MeasurementOutcome {
        label: p.label,
        probability,
        post_state: DensityMatrix::new_unchecked(post),
    })
}

/// Samples one outcome from a complete projector set; deterministic
/// under a fixed RNG stream.
pub fn sample_outcome<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    projectors: &[Projector],
    rng: &mut R,
) -> Result<MeasurementOutcome> {
    if projectors.is_empty() {
        return Err(Error::IncompleteProjectors);
    }
    let dim = projectors[0].mat.dim;
    let mut sum = ComplexMatrix::zeros(dim);
    for p in projectors {
        sum = sum.add(&p.mat);
    }
    if sum.max_abs_diff(&ComplexMatrix::identity(dim)) > 1e-10 {
        return Err(Error::IncompleteProjectors);
    }

    let probs: Vec<f64> = projectors
        .iter()
        .map(|p| rho.matrix().trace_of_product(&p.mat).re.max(0.0))
        .collect();
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut chosen = projectors.len() - 1;
    for (i, prob) in probs.iter().enumerate() {
        cumulative += prob;
        if u < cumulative {
            chosen = i;
            break;
        }
    }
    measure(rho, &projectors[chosen])
}

/// Reduces a 4x4 composite state to one 2x2 factor.
pub fn partial_trace(rho: &DensityMatrix, keep: Subsystem) -> Result<DensityMatrix> {
    if rho.dim() != 4 {
        return Err(Error::Dimension(format!(
            "partial trace expects a 4x4 state, got {}x{}",
            rho.dim(),
            rho.dim()
        )));
    }
    let m = rho.matrix();
    let mut out = ComplexMatrix::zeros(2);
    match keep {
        Subsystem::System => {
            for i in 0..2 {
                for j in 0..2 {
                    out[(i, j)] = m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)];
                }
            }
        }
        Subsystem::Ancilla => {
            for k in 0..2 {
                for l in 0..2 {
                    out[(k, l)] = m[(k, l)] + m[(2 + k, 2 + l)];
                }
            }
        }
    }
    Ok(DensityMatrix::new_unchecked(out))
}

/// Indirect-measurement chain: couple a fresh ancilla to the system,
/// evolve, measure the ancilla, keep the reduced system state.
#[derive(Debug, Clone)]
pub struct WeakMeasurementChain {
    system: DensityMatrix,
    ancilla: BlochVector,
    coupling: ComplexMatrix,
    projectors: [Projector; 2],
}

impl WeakMeasurementChain {
    pub fn new(
        system: DensityMatrix,
        ancilla: BlochVector,
        coupling: ComplexMatrix,
        observable: Observable,
    ) -> Result<Self> {
        if system.dim() != 2 {
            return Err(Error::Dimension("chain system must be a qubit".into()));
        }
        if coupling.dim() != 4 {
            return Err(Error::Dimension("chain coupling must be 4x4".into()));
        }
        let defect = coupling.unitarity_defect();
        if defect > 1e-12 {
            return Err(Error::NotUnitary(defect));
        }
        bloch_to_density(&ancilla)?;
        let (p, m) = projector_set(observable);
        Ok(WeakMeasurementChain {
            system,
            ancilla,
            coupling,
            projectors: [p, m],
        })
    }

    pub fn system(&self) -> &DensityMatrix {
        &self.system
    }

    /// Second Bloch component of the current system state.
    pub fn hidden_coordinate(&self) -> f64 {
        density_to_bloch(&self.system).expect("chain system is a qubit").0[1]
    }

    /// One prepare-couple-measure round; returns the sampled outcome.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<MeasurementOutcome> {
        let ancilla = bloch_to_density(&self.ancilla)?;
        let joint = kron(&self.system, &ancilla)?;
        let evolved = evolve(&joint, &self.coupling)?;
        let outcome = sample_outcome(&evolved, &self.projectors, rng)?;
        self.system = partial_trace(&outcome.post_state, Subsystem::System)?;
        Ok(outcome)
    }
}
