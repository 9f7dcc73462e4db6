//! Observation models on a single four-level system (spin 3/2).
//!
//! A 4x4 density matrix has no subsystems, but relabeling its indices by the
//! spin projections 3/2, 1/2, -1/2, -3/2 and summing partial-trace-style
//! pairs extracts two "artificial qubits". On product states the extraction
//! inverts the Kronecker product exactly, so the weak-measurement chain runs
//! on a qudit byte-for-byte like the two-qubit one; on general states it
//! measures whichever levels are experimentally accessible.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Trajectory;
use crate::quantum::{
    bloch_to_density, density_to_bloch, evolve, kron, projector_set, sample_outcome,
    BlochVector, ComplexMatrix, DensityMatrix, MeasurementOutcome, Observable, Projector,
};

/// Spin-projection labels attached to the four levels, in index order.
pub const LEVEL_LABELS: [&str; 4] = ["3/2", "1/2", "-1/2", "-3/2"];

/// Spin projection values 3/2, 1/2, -1/2, -3/2.
pub const LEVEL_VALUES: [f64; 4] = [1.5, 0.5, -0.5, -1.5];

/// A 4x4 density matrix carrying the half-integer index convention.
#[derive(Debug, Clone, PartialEq)]
pub struct QuditState {
    mat: DensityMatrix,
}

/// Attaches spin labels to a 4x4 state. Entries are untouched: the map
/// 1<->3/2, 2<->1/2, 3<->-1/2, 4<->-3/2 is pure bookkeeping.
pub fn relabel(rho: DensityMatrix) -> Result<QuditState> {
    if rho.dim() != 4 {
        return Err(Error::Dimension(format!(
            "qudit state must be 4x4, got {}x{}",
            rho.dim(),
            rho.dim()
        )));
    }
    Ok(QuditState { mat: rho })
}

impl QuditState {
    pub fn density(&self) -> &DensityMatrix {
        &self.mat
    }

    /// Inverse of [`relabel`]: drops the labels.
    pub fn into_density(self) -> DensityMatrix {
        self.mat
    }

    /// Label pair addressed by a matrix entry, e.g. (0, 0) -> ("3/2", "3/2").
    pub fn label_pair(&self, i: usize, j: usize) -> (&'static str, &'static str) {
        (LEVEL_LABELS[i], LEVEL_LABELS[j])
    }

    /// Diagonal as level-occupation probabilities (p_{3/2}, ..., p_{-3/2}).
    pub fn level_probabilities(&self) -> [f64; 4] {
        let m = self.mat.matrix();
        [m[(0, 0)].re, m[(1, 1)].re, m[(2, 2)].re, m[(3, 3)].re]
    }

    pub fn to_json(&self) -> String {
        let m = self.mat.matrix();
        let mut re = [[0.0f64; 4]; 4];
        let mut im = [[0.0f64; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                re[i][j] = m[(i, j)].re;
                im[i][j] = m[(i, j)].im;
            }
        }
        let dto = QuditStateJson {
            labels: LEVEL_LABELS.map(String::from),
            re,
            im,
        };
        serde_json::to_string_pretty(&dto).expect("qudit state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dto: QuditStateJson = serde_json::from_str(text)
            .map_err(|e| Error::InvalidState(format!("qudit state json: {e}")))?;
        if dto.labels != LEVEL_LABELS.map(String::from) {
            return Err(Error::InvalidState(format!(
                "unexpected level labels {:?}",
                dto.labels
            )));
        }
        let mut mat = ComplexMatrix::zeros(4);
        for i in 0..4 {
            for j in 0..4 {
                mat[(i, j)] = num_complex::Complex64::new(dto.re[i][j], dto.im[i][j]);
            }
        }
        Ok(QuditState {
            mat: DensityMatrix::new(mat)?,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct QuditStateJson {
    labels: [String; 4],
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

/// Extracts the two artificial qubits.
///
/// The first (unobserved-system) qubit sums index pairs two apart in the
/// inner slot; the second (ancilla) qubit sums pairs two apart in the outer
/// slot. On `relabel(kron(a, b))` this returns exactly (a, b).
pub fn artificial_qubits(q: &QuditState) -> (DensityMatrix, DensityMatrix) {
    let m = q.mat.matrix();
    let mut first = ComplexMatrix::zeros(2);
    for i in 0..2 {
        for j in 0..2 {
            first[(i, j)] = m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)];
        }
    }
    let mut second = ComplexMatrix::zeros(2);
    for k in 0..2 {
        for l in 0..2 {
            second[(k, l)] = m[(k, l)] + m[(2 + k, 2 + l)];
        }
    }
    (
        DensityMatrix::new_unchecked(first),
        DensityMatrix::new_unchecked(second),
    )
}

/// Two disjoint index pairs covering the four levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    /// Indices mapped to outcome +1.
    pub plus: [usize; 2],
    /// Indices mapped to outcome -1.
    pub minus: [usize; 2],
}

impl Partition {
    pub fn new(plus: [usize; 2], minus: [usize; 2]) -> Result<Self> {
        let mut seen = [false; 4];
        for &i in plus.iter().chain(minus.iter()) {
            if i > 3 || seen[i] {
                return Err(Error::InvalidState(format!(
                    "partition must cover indices 0..4 exactly once, got {plus:?}/{minus:?}"
                )));
            }
            seen[i] = true;
        }
        Ok(Partition { plus, minus })
    }

    /// Groups by the outer (first-coin) index: {0,1} vs {2,3}.
    pub fn by_outer() -> Self {
        Partition {
            plus: [0, 1],
            minus: [2, 3],
        }
    }

    /// Groups by the inner (second-coin) index: {0,2} vs {1,3}.
    /// For the four-level atom this is the fourth-or-second-level grouping
    /// {3/2, -1/2} vs {1/2, -3/2}.
    pub fn by_inner() -> Self {
        Partition {
            plus: [0, 2],
            minus: [1, 3],
        }
    }

    fn sign(&self, index: usize) -> f64 {
        if self.plus.contains(&index) {
            1.0
        } else {
            -1.0
        }
    }
}

/// A partition together with its two summed probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseGraining {
    pub partition: Partition,
    pub probabilities: [f64; 2],
}

fn validate_probs(probs: &[f64; 4]) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < -1e-12) {
        return Err(Error::InvalidState(format!(
            "invalid probability vector {probs:?}"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidState(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Sums the four-outcome distribution over each partition side.
pub fn coarse_grain(probs: &[f64; 4], partition: Partition) -> Result<CoarseGraining> {
    validate_probs(probs)?;
    let p_plus = probs[partition.plus[0]] + probs[partition.plus[1]];
    let p_minus = probs[partition.minus[0]] + probs[partition.minus[1]];
    Ok(CoarseGraining {
        partition,
        probabilities: [p_plus, p_minus],
    })
}

/// Covariance of the two +-1 outcomes induced by a pair of partitions:
/// `E[AB] - E[A]E[B]`.
pub fn coarse_correlation(probs: &[f64; 4], part_a: Partition, part_b: Partition) -> Result<f64> {
    validate_probs(probs)?;
    let mut e_ab = 0.0;
    let mut e_a = 0.0;
    let mut e_b = 0.0;
    for (idx, &p) in probs.iter().enumerate() {
        let a = part_a.sign(idx);
        let b = part_b.sign(idx);
        e_ab += a * b * p;
        e_a += a * p;
        e_b += b * p;
    }
    Ok(e_ab - e_a * e_b)
}

/// Weak-measurement chain running on a single qudit.
///
/// Each step evolves the full 4x4 state and measures the projectors of the
/// artificial ancilla. In product mode (`reprepare` set) the artificial
/// system qubit is recombined with a freshly prepared ancilla after every
/// measurement, mirroring the two-qubit chain exactly; otherwise the
/// collapsed qudit state carries over, which models inaccessible levels
/// that cannot be re-initialized.
#[derive(Debug, Clone)]
pub struct QuditChain {
    state: QuditState,
    coupling: ComplexMatrix,
    projectors: [Projector; 2],
    reprepare: Option<BlochVector>,
}

/// Binds a qudit state and evolution to the two-qubit observation machinery.
pub fn qudit_observation_model(
    state: QuditState,
    evolution: ComplexMatrix,
    observable: Observable,
    reprepare: Option<BlochVector>,
) -> Result<QuditChain> {
    if evolution.dim() != 4 {
        return Err(Error::Dimension("qudit evolution must be 4x4".into()));
    }
    let defect = evolution.unitarity_defect();
    if defect > 1e-12 {
        return Err(Error::NotUnitary(defect));
    }
    if let Some(theta) = &reprepare {
        bloch_to_density(theta)?;
    }
    let (p, m) = projector_set(observable);
    Ok(QuditChain {
        state,
        coupling: evolution,
        projectors: [p, m],
        reprepare,
    })
}

impl QuditChain {
    pub fn state(&self) -> &QuditState {
        &self.state
    }

    pub fn is_product_mode(&self) -> bool {
        self.reprepare.is_some()
    }

    /// Second Bloch component of the artificial system qubit.
    pub fn hidden_coordinate(&self) -> f64 {
        let (system, _) = artificial_qubits(&self.state);
        density_to_bloch(&system).expect("artificial qubit is 2x2").0[1]
    }

    /// Outcome probabilities of the next measurement, before sampling.
    pub fn outcome_probabilities(&self) -> Result<[f64; 2]> {
        let evolved = evolve(self.state.density(), &self.coupling)?;
        let p_plus = evolved
            .matrix()
            .trace_of_product(self.projectors[0].matrix())
            .re;
        let p_minus = evolved
            .matrix()
            .trace_of_product(self.projectors[1].matrix())
            .re;
        Ok([p_plus, p_minus])
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<MeasurementOutcome> {
        let evolved = evolve(self.state.density(), &self.coupling)?;
        let outcome = sample_outcome(&evolved, &self.projectors, rng)?;
        let next = match &self.reprepare {
            Some(theta) => {
                let collapsed = relabel(outcome.post_state.clone())?;
                let (system, _) = artificial_qubits(&collapsed);
                relabel(kron(&system, &bloch_to_density(theta)?)?)?
            }
            None => relabel(outcome.post_state.clone())?,
        };
        self.state = next;
        Ok(outcome)
    }

    /// Runs the chain for `blocks` blocks of `per_block` measurements each,
    /// recording the hidden coordinate after each block and the outcome
    /// count difference as the observation.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        blocks: usize,
        per_block: u32,
        seed: u64,
        rng: &mut R,
    ) -> Result<Trajectory> {
        if blocks == 0 {
            return Err(Error::InvalidState("trajectory length must be >= 1".into()));
        }
        let mut hidden = Vec::with_capacity(blocks);
        let mut observed = Vec::with_capacity(blocks);
        for _ in 0..blocks {
            let mut diff = 0i64;
            for _ in 0..per_block {
                diff += self.step(rng)?.label as i64;
            }
            observed.push(diff as f64);
            hidden.push(self.hidden_coordinate());
        }
        let params = BTreeMap::from([
            ("N".into(), per_block as f64),
            ("product_mode".into(), if self.is_product_mode() { 1.0 } else { 0.0 }),
        ]);
        Trajectory::new(hidden, observed, seed, "qudit-chain", params, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{coupling_unitary, measure, swap_like_unitary, WeakMeasurementChain};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_qubit(rng: &mut ChaCha8Rng) -> DensityMatrix {
        // G G^dagger / tr, G complex Gaussian-ish: always a valid state.
        let mut g = ComplexMatrix::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                g[(i, j)] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        let gg = g.mul(&g.adjoint());
        let tr = gg.trace().re;
        DensityMatrix::new(gg.scale(Complex64::new(1.0 / tr, 0.0))).unwrap()
    }

    #[test]
    fn relabel_is_pure_bookkeeping() {
        let rho = DensityMatrix::maximally_mixed(4);
        let q = relabel(rho.clone()).unwrap();
        assert_eq!(q.label_pair(0, 0), ("3/2", "3/2"));
        assert_eq!(q.label_pair(2, 1), ("-1/2", "1/2"));
        assert_eq!(q.density(), &rho);
        assert_eq!(q.clone().into_density(), rho);
        assert!(relabel(DensityMatrix::maximally_mixed(2)).is_err());
    }

    #[test]
    fn artificial_qubits_of_maximally_mixed_state() {
        let q = relabel(DensityMatrix::maximally_mixed(4)).unwrap();
        let (a, b) = artificial_qubits(&q);
        let half = DensityMatrix::maximally_mixed(2);
        assert!(a.matrix().max_abs_diff(half.matrix()) < 1e-15);
        assert!(b.matrix().max_abs_diff(half.matrix()) < 1e-15);
    }

    #[test]
    fn artificial_qubits_invert_kron_on_product_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let a = random_qubit(&mut rng);
            let b = random_qubit(&mut rng);
            let q = relabel(kron(&a, &b).unwrap()).unwrap();
            let (ra, rb) = artificial_qubits(&q);
            assert!(ra.matrix().max_abs_diff(a.matrix()) < 1e-12);
            assert!(rb.matrix().max_abs_diff(b.matrix()) < 1e-12);
            ra.validate().unwrap();
            rb.validate().unwrap();
        }
    }

    #[test]
    fn diagonal_second_qubit_matches_level_sums() {
        let mut mat = ComplexMatrix::zeros(4);
        let probs = [0.4, 0.3, 0.2, 0.1];
        for (i, p) in probs.iter().enumerate() {
            mat[(i, i)] = Complex64::new(*p, 0.0);
        }
        let q = relabel(DensityMatrix::new(mat).unwrap()).unwrap();
        let (_, second) = artificial_qubits(&q);
        let m = second.matrix();
        // Exactly the same sums, in the same order, as the coarse-graining.
        let cg = coarse_grain(&probs, Partition::by_inner()).unwrap();
        assert_eq!(m[(0, 0)].re, cg.probabilities[0]);
        assert_eq!(m[(1, 1)].re, cg.probabilities[1]);
        assert_eq!(cg.probabilities, [0.4 + 0.2, 0.3 + 0.1]);
    }

    #[test]
    fn coin_partitions_sum_joint_probabilities() {
        let probs = [0.1, 0.2, 0.3, 0.4]; // p11, p12, p21, p22
        let first = coarse_grain(&probs, Partition::by_outer()).unwrap();
        assert_eq!(first.probabilities, [0.1 + 0.2, 0.3 + 0.4]);
        let second = coarse_grain(&probs, Partition::by_inner()).unwrap();
        assert_eq!(second.probabilities, [0.1 + 0.3, 0.2 + 0.4]);
        let uniform = coarse_grain(&[0.25; 4], Partition::by_outer()).unwrap();
        assert_eq!(uniform.probabilities, [0.5, 0.5]);
    }

    #[test]
    fn partition_must_cover_all_levels() {
        assert!(Partition::new([0, 1], [2, 3]).is_ok());
        assert!(Partition::new([0, 0], [2, 3]).is_err());
        assert!(Partition::new([0, 1], [2, 4]).is_err());
        assert!(coarse_grain(&[0.5, 0.5, 0.1, -0.1], Partition::by_outer()).is_err());
    }

    #[test]
    fn independent_coins_are_uncorrelated() {
        let (u, v) = ([0.3, 0.7], [0.6, 0.4]);
        let probs = [u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1]];
        let corr =
            coarse_correlation(&probs, Partition::by_outer(), Partition::by_inner()).unwrap();
        assert_abs_diff_eq!(corr, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn perfectly_aligned_coins_have_unit_correlation() {
        let probs = [0.5, 0.0, 0.0, 0.5];
        let corr =
            coarse_correlation(&probs, Partition::by_outer(), Partition::by_inner()).unwrap();
        assert_abs_diff_eq!(corr, 1.0, epsilon = 1e-12);
        let uniform =
            coarse_correlation(&[0.25; 4], Partition::by_outer(), Partition::by_inner()).unwrap();
        assert_abs_diff_eq!(uniform, 0.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn correlation_is_symmetric_and_bounded(
            raw in proptest::array::uniform4(0.01f64..1.0)
        ) {
            let total: f64 = raw.iter().sum();
            let probs = [raw[0]/total, raw[1]/total, raw[2]/total, raw[3]/total];
            let ab = coarse_correlation(&probs, Partition::by_outer(), Partition::by_inner()).unwrap();
            let ba = coarse_correlation(&probs, Partition::by_inner(), Partition::by_outer()).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ab));
        }
    }

    #[test]
    fn product_qudit_chain_reproduces_two_qubit_chain_bitwise() {
        let model_c = 0.3;
        let system = bloch_to_density(&BlochVector::new(0.0, 0.45, 0.0)).unwrap();
        let ancilla = BlochVector::new(0.0, 0.0, model_c);
        let w = coupling_unitary(1.0, std::f64::consts::FRAC_PI_4).unwrap();

        let mut two_qubit = WeakMeasurementChain::new(
            system.clone(),
            ancilla,
            w.clone(),
            Observable::X,
        )
        .unwrap();

        let start = relabel(kron(&system, &bloch_to_density(&ancilla).unwrap()).unwrap()).unwrap();
        let mut qudit = qudit_observation_model(start, w, Observable::X, Some(ancilla)).unwrap();
        assert!(qudit.is_product_mode());

        let mut rng_a = ChaCha8Rng::seed_from_u64(99);
        let mut rng_b = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..400 {
            let a = two_qubit.step(&mut rng_a).unwrap();
            let b = qudit.step(&mut rng_b).unwrap();
            assert_eq!(a.label, b.label);
            assert_eq!(a.probability.to_bits(), b.probability.to_bits());
            assert_eq!(
                a.post_state.matrix().max_abs_diff(b.post_state.matrix()),
                0.0
            );
            // Reading theta_2 through the re-prepared product re-associates
            // one sum, so the two readouts may differ in the last ulp.
            assert_abs_diff_eq!(
                two_qubit.hidden_coordinate(),
                qudit.hidden_coordinate(),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn identity_evolution_keeps_outcome_probabilities_constant() {
        let ancilla = BlochVector::new(0.0, 0.0, 0.6);
        let state = relabel(
            kron(
                &bloch_to_density(&BlochVector::new(0.1, 0.2, 0.3)).unwrap(),
                &bloch_to_density(&ancilla).unwrap(),
            )
            .unwrap(),
        )
        .unwrap();
        // Re-prepared ancilla, no coupling: the distribution never moves.
        let mut chain = qudit_observation_model(
            state.clone(),
            ComplexMatrix::identity(4),
            Observable::Z,
            Some(ancilla),
        )
        .unwrap();
        let first = chain.outcome_probabilities().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let probs = chain.outcome_probabilities().unwrap();
            assert_abs_diff_eq!(probs[0] + probs[1], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(probs[0], first[0], epsilon = 1e-12);
            chain.step(&mut rng).unwrap();
        }

        // Without re-preparation the first collapse pins the measured
        // levels; from then on the outcome repeats with certainty.
        let mut frozen =
            qudit_observation_model(state, ComplexMatrix::identity(4), Observable::Z, None)
                .unwrap();
        assert!(!frozen.is_product_mode());
        let first = frozen.step(&mut rng).unwrap();
        for _ in 0..10 {
            let next = frozen.step(&mut rng).unwrap();
            assert_eq!(next.label, first.label);
            assert_abs_diff_eq!(next.probability, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn decohered_qudit_reproduces_rotated_z_measurement_states() {
        // Diagonal qudit state evolved by the corner rotation, then the
        // z-projectors: the post-measurement states keep the closed form
        // diag(p4 sin^2 + p1 cos^2, 0, p3, 0) and diag(0, p2, 0, p1 sin^2 + p4 cos^2).
        let probs = [0.4, 0.3, 0.2, 0.1];
        let mut mat = ComplexMatrix::zeros(4);
        for (i, p) in probs.iter().enumerate() {
            mat[(i, i)] = Complex64::new(*p, 0.0);
        }
        let q = relabel(DensityMatrix::new(mat).unwrap()).unwrap();
        let phi = 0.7;
        let w = swap_like_unitary(phi).unwrap();
        let evolved = evolve(q.density(), &w).unwrap();
        let (pz_plus, pz_minus) = projector_set(Observable::Z);

        let (s2, c2) = (phi.sin().powi(2), phi.cos().powi(2));
        let plus = measure(&evolved, &pz_plus).unwrap();
        let top = probs[3] * s2 + probs[0] * c2;
        let norm_plus = top + probs[2];
        assert_abs_diff_eq!(plus.probability, norm_plus, epsilon = 1e-12);
        let m = plus.post_state.matrix();
        assert_abs_diff_eq!(m[(0, 0)].re, top / norm_plus, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(2, 2)].re, probs[2] / norm_plus, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(1, 1)].re, 0.0, epsilon = 1e-15);

        let minus = measure(&evolved, &pz_minus).unwrap();
        let bottom = probs[0] * s2 + probs[3] * c2;
        let norm_minus = probs[1] + bottom;
        assert_abs_diff_eq!(minus.probability, norm_minus, epsilon = 1e-12);
        let mm = minus.post_state.matrix();
        assert_abs_diff_eq!(mm[(1, 1)].re, probs[1] / norm_minus, epsilon = 1e-12);
        assert_abs_diff_eq!(mm[(3, 3)].re, bottom / norm_minus, epsilon = 1e-12);
    }

    #[test]
    fn qudit_state_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a = random_qubit(&mut rng);
        let b = random_qubit(&mut rng);
        let q = relabel(kron(&a, &b).unwrap()).unwrap();
        let text = q.to_json();
        assert!(text.contains("\"3/2\""));
        let back = QuditState::from_json(&text).unwrap();
        assert!(back.density().matrix().max_abs_diff(q.density().matrix()) < 1e-15);
    }

    #[test]
    fn chain_run_produces_consistent_trajectory() {
        let c = 0.25;
        let system = bloch_to_density(&BlochVector::new(0.0, 0.2, 0.0)).unwrap();
        let ancilla = BlochVector::new(0.0, 0.0, c);
        let start = relabel(kron(&system, &bloch_to_density(&ancilla).unwrap()).unwrap()).unwrap();
        let w = coupling_unitary(1.0, std::f64::consts::FRAC_PI_4).unwrap();
        let mut chain = qudit_observation_model(start, w, Observable::X, Some(ancilla)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let traj = chain.run(20, 10, 13, &mut rng).unwrap();
        assert_eq!(traj.len(), 20);
        assert!(traj.hidden.iter().all(|s| s.abs() < 1.0));
        assert!(traj.observed.iter().all(|x| x.abs() <= 10.0));
        assert_eq!(traj.model_id, "qudit-chain");
    }
}
