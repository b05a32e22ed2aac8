//! Dense statevector evaluation of `f(x, θ) = ⟨0|U(x,θ)† O U(x,θ)|0⟩` and
//! parameter-shift gradients.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::circuit::{Angle, Axis, Circuit, Gate, LightCone};
use crate::error::{QfmError, Result};
use crate::haar::haar_unitary;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Rotation angles plus one dense unitary per Haar slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub angles: Vec<f64>,
    pub unitaries: Vec<DMatrix<Complex64>>,
}

impl Params {
    /// Angles uniform on `[0, 2π)`, Haar slots Haar-random.
    pub fn sample<R: Rng + ?Sized>(circuit: &Circuit, rng: &mut R) -> Params {
        let angles = (0..circuit.n_params)
            .map(|_| rng.gen::<f64>() * std::f64::consts::TAU)
            .collect();
        let unitaries = circuit
            .haar_dims
            .iter()
            .map(|&d| haar_unitary(d, rng))
            .collect();
        Params { angles, unitaries }
    }

    /// All angles zero, Haar slots identity.
    pub fn identity(circuit: &Circuit) -> Params {
        Params {
            angles: vec![0.0; circuit.n_params],
            unitaries: circuit
                .haar_dims
                .iter()
                .map(|&d| DMatrix::identity(d, d))
                .collect(),
        }
    }

    pub fn from_angles(angles: Vec<f64>) -> Params {
        Params {
            angles,
            unitaries: vec![],
        }
    }

    /// Parameters of a light-cone sub-circuit taken from the full circuit's.
    pub fn restrict(&self, cone: &LightCone) -> Params {
        Params {
            angles: cone.param_map.iter().map(|&s| self.angles[s]).collect(),
            unitaries: cone.haar_map.iter().map(|&s| self.unitaries[s].clone()).collect(),
        }
    }

    fn check(&self, circuit: &Circuit) -> Result<()> {
        if self.angles.len() != circuit.n_params {
            return Err(QfmError::ParameterLength {
                expected: circuit.n_params,
                got: self.angles.len(),
            });
        }
        if self.unitaries.len() != circuit.haar_dims.len()
            || self
                .unitaries
                .iter()
                .zip(&circuit.haar_dims)
                .any(|(u, &d)| u.nrows() != d || u.ncols() != d)
        {
            return Err(QfmError::InvalidArgument(format!(
                "circuit expects Haar blocks of dimensions {:?}",
                circuit.haar_dims
            )));
        }
        Ok(())
    }
}

pub fn rotation(axis: Axis, theta: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    match axis {
        Axis::X => [
            [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
            [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
        ],
        Axis::Y => [
            [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
            [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
        ],
        Axis::Z => [[Complex64::new(c, -s), ZERO], [ZERO, Complex64::new(c, s)]],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub n_qubits: usize,
    pub amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(n: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n];
        amps[0] = ONE;
        StateVector { n_qubits: n, amps }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn bit(&self, q: usize) -> usize {
        1 << (self.n_qubits - 1 - q)
    }

    pub fn apply_1q(&mut self, q: usize, u: &[[Complex64; 2]; 2]) {
        let s = self.bit(q);
        let dim = self.amps.len();
        let mut base = 0;
        while base < dim {
            for i in base..base + s {
                let a0 = self.amps[i];
                let a1 = self.amps[i + s];
                self.amps[i] = u[0][0] * a0 + u[0][1] * a1;
                self.amps[i + s] = u[1][0] * a0 + u[1][1] * a1;
            }
            base += 2 * s;
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let (c, t) = (self.bit(control), self.bit(target));
        for i in 0..self.amps.len() {
            if i & c != 0 && i & t == 0 {
                self.amps.swap(i, i | t);
            }
        }
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) {
        let mask = self.bit(a) | self.bit(b);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
    }

    fn offsets(&self, qubits: &[usize]) -> (Vec<usize>, usize) {
        let k = qubits.len();
        let mut offsets = vec![0usize; 1 << k];
        for (l, off) in offsets.iter_mut().enumerate() {
            for (i, &q) in qubits.iter().enumerate() {
                if (l >> (k - 1 - i)) & 1 == 1 {
                    *off |= self.bit(q);
                }
            }
        }
        let mask = qubits.iter().fold(0, |m, &q| m | self.bit(q));
        (offsets, mask)
    }

    pub fn apply_diagonal(&mut self, qubits: &[usize], phases: &[Complex64]) {
        let (offsets, mask) = self.offsets(qubits);
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            for (off, ph) in offsets.iter().zip(phases) {
                self.amps[base + off] *= ph;
            }
        }
    }

    pub fn apply_dense(&mut self, qubits: &[usize], u: &DMatrix<Complex64>) {
        if qubits.len() == self.n_qubits && qubits.iter().enumerate().all(|(i, &q)| i == q) {
            let v = nalgebra::DVector::from_column_slice(&self.amps);
            self.amps.copy_from_slice((u * v).as_slice());
            return;
        }
        let (offsets, mask) = self.offsets(qubits);
        let k = offsets.len();
        let mut buf = vec![ZERO; k];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            for (b, off) in buf.iter_mut().zip(&offsets) {
                *b = self.amps[base + off];
            }
            for (r, off) in offsets.iter().enumerate() {
                let mut acc = ZERO;
                for (c, b) in buf.iter().enumerate() {
                    acc += u[(r, c)] * b;
                }
                self.amps[base + off] = acc;
            }
        }
    }

    /// Applies `gate` (or its adjoint) with parameters `params` at input `x`.
    pub fn apply(&mut self, gate: &Gate, params: &Params, x: f64, adjoint: bool) {
        match gate {
            Gate::Rot { axis, qubit, angle } => {
                let theta = match angle {
                    Angle::Param(s) => params.angles[*s],
                    Angle::Fixed(v) => *v,
                };
                let theta = if adjoint { -theta } else { theta };
                self.apply_1q(*qubit, &rotation(*axis, theta));
            }
            Gate::Cnot { control, target } => self.apply_cnot(*control, *target),
            Gate::Cz { a, b } => self.apply_cz(*a, *b),
            Gate::Encoding { qubits, eigenvalues } => {
                let sign = if adjoint { 1.0 } else { -1.0 };
                let phases: Vec<Complex64> = eigenvalues
                    .iter()
                    .map(|&l| Complex64::from_polar(1.0, sign * x * l))
                    .collect();
                self.apply_diagonal(qubits, &phases);
            }
            Gate::Haar { qubits, slot } => {
                let u = &params.unitaries[*slot];
                if adjoint {
                    self.apply_dense(qubits, &u.adjoint());
                } else {
                    self.apply_dense(qubits, u);
                }
            }
            Gate::Unitary { qubits, matrix } => {
                if adjoint {
                    self.apply_dense(qubits, &matrix.adjoint());
                } else {
                    self.apply_dense(qubits, matrix);
                }
            }
        }
    }

    pub fn apply_gates(&mut self, gates: &[Gate], params: &Params, x: f64) {
        for g in gates {
            self.apply(g, params, x, false);
        }
    }
}

/// Measured Hermitian operator with its cached norms.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservableKind {
    /// `|0…0⟩⟨0…0|`.
    GlobalZero,
    /// `(1/n) Σ_j |0⟩⟨0|_j ⊗ 1`.
    LocalZeroAverage,
    /// Projector onto the first `rank` basis states of `qubits`, identity elsewhere.
    LocalProjector { qubits: Vec<usize>, rank: usize },
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub kind: ObservableKind,
    pub n_qubits: usize,
    diag: Option<Vec<f64>>,
    dense: Option<DMatrix<Complex64>>,
    /// `Tr O`.
    pub trace: f64,
    /// `‖O‖₂² = Tr O²`.
    pub norm2_sq: f64,
    /// Largest |eigenvalue|.
    pub norm_inf: f64,
    /// Sum of |eigenvalues|.
    pub norm1: f64,
    /// `Σ_{ij} |O_ij|`.
    pub abs_sum: f64,
}

impl Observable {
    fn from_diag(kind: ObservableKind, n: usize, diag: Vec<f64>) -> Observable {
        let trace = diag.iter().sum();
        let norm2_sq = diag.iter().map(|v| v * v).sum();
        let norm_inf = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let norm1 = diag.iter().map(|v| v.abs()).sum();
        Observable {
            kind,
            n_qubits: n,
            diag: Some(diag),
            dense: None,
            trace,
            norm2_sq,
            norm_inf,
            norm1,
            abs_sum: norm1,
        }
    }

    pub fn global_zero(n: usize) -> Observable {
        let mut diag = vec![0.0; 1 << n];
        diag[0] = 1.0;
        Self::from_diag(ObservableKind::GlobalZero, n, diag)
    }

    pub fn local_zero_average(n: usize) -> Observable {
        let diag = (0..1usize << n)
            .map(|b| (n - b.count_ones() as usize) as f64 / n as f64)
            .collect();
        Self::from_diag(ObservableKind::LocalZeroAverage, n, diag)
    }

    pub fn local_projector(n: usize, qubits: &[usize], rank: usize) -> Result<Observable> {
        let m = qubits.len();
        if m == 0 || qubits.iter().any(|&q| q >= n) || rank == 0 || rank > 1 << m {
            return Err(QfmError::InvalidArgument(format!(
                "local projector needs qubits inside 0..{n} and 1 <= rank <= 2^{m}"
            )));
        }
        let diag = (0..1usize << n)
            .map(|b| {
                let local = crate::spectrum::block_index(b, n, qubits);
                if local < rank {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self::from_diag(
            ObservableKind::LocalProjector {
                qubits: qubits.to_vec(),
                rank,
            },
            n,
            diag,
        ))
    }

    pub fn custom(matrix: DMatrix<Complex64>) -> Result<Observable> {
        let d = matrix.nrows();
        if d == 0 || matrix.ncols() != d || !d.is_power_of_two() {
            return Err(QfmError::InvalidArgument(
                "observable must be a square 2^n matrix".into(),
            ));
        }
        let herm_err = (&matrix - matrix.adjoint()).norm();
        if herm_err > 1e-10 * (1.0 + matrix.norm()) {
            return Err(QfmError::InvalidArgument(format!(
                "observable is not Hermitian (deviation {herm_err:e})"
            )));
        }
        let eig = matrix.clone().symmetric_eigen();
        let trace = matrix.trace().re;
        let norm2_sq = matrix.iter().map(|v| v.norm_sqr()).sum();
        let norm_inf = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let norm1 = eig.eigenvalues.iter().map(|v| v.abs()).sum();
        let abs_sum = matrix.iter().map(|v| v.norm()).sum();
        Ok(Observable {
            kind: ObservableKind::Custom,
            n_qubits: d.trailing_zeros() as usize,
            diag: None,
            dense: Some(matrix),
            trace,
            norm2_sq,
            norm_inf,
            norm1,
            abs_sum,
        })
    }

    /// `a · O`.
    pub fn scaled(&self, a: f64) -> Observable {
        match (&self.diag, &self.dense) {
            (Some(diag), _) => {
                let mut o = Self::from_diag(
                    self.kind.clone(),
                    self.n_qubits,
                    diag.iter().map(|v| a * v).collect(),
                );
                if a == 1.0 {
                    o.kind = self.kind.clone();
                }
                o
            }
            (None, Some(m)) => Self::custom(m * Complex64::new(a, 0.0)).expect("scaled Hermitian"),
            _ => unreachable!("observable has a representation"),
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn diagonal(&self) -> Option<&[f64]> {
        self.diag.as_deref()
    }

    pub fn dense(&self) -> DMatrix<Complex64> {
        match (&self.diag, &self.dense) {
            (Some(diag), _) => DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                diag.len(),
                diag.iter().map(|&v| Complex64::new(v, 0.0)),
            )),
            (None, Some(m)) => m.clone(),
            _ => unreachable!("observable has a representation"),
        }
    }

    /// `Σ_{lk} |[O⊗O]_{lk}| / d²`.
    pub fn c2(&self) -> f64 {
        let d = self.dim() as f64;
        self.abs_sum * self.abs_sum / (d * d)
    }

    pub fn expectation(&self, psi: &StateVector) -> f64 {
        match (&self.diag, &self.dense) {
            (Some(diag), _) => psi
                .amps
                .iter()
                .zip(diag)
                .map(|(a, o)| a.norm_sqr() * o)
                .sum(),
            (None, Some(m)) => {
                let v = nalgebra::DVector::from_column_slice(&psi.amps);
                v.dotc(&(m * &v)).re
            }
            _ => unreachable!("observable has a representation"),
        }
    }
}

fn check(circuit: &Circuit, params: &Params, obs: &Observable) -> Result<()> {
    params.check(circuit)?;
    if obs.n_qubits != circuit.n_qubits {
        return Err(QfmError::InvalidArgument(format!(
            "observable acts on {} qubits, circuit on {}",
            obs.n_qubits, circuit.n_qubits
        )));
    }
    Ok(())
}

/// `U(x, θ)|0⟩`.
pub fn run(circuit: &Circuit, params: &Params, x: f64) -> Result<StateVector> {
    params.check(circuit)?;
    let mut psi = StateVector::zero(circuit.n_qubits);
    psi.apply_gates(&circuit.gates, params, x);
    Ok(psi)
}

pub fn evaluate(circuit: &Circuit, params: &Params, obs: &Observable, x: f64) -> Result<f64> {
    check(circuit, params, obs)?;
    let mut psi = StateVector::zero(circuit.n_qubits);
    psi.apply_gates(&circuit.gates, params, x);
    Ok(obs.expectation(&psi))
}

/// `f` at every point of `xs`; the `x`-independent prefix is simulated once.
pub fn evaluate_grid(
    circuit: &Circuit,
    params: &Params,
    obs: &Observable,
    xs: &[f64],
) -> Result<Vec<f64>> {
    check(circuit, params, obs)?;
    let split = circuit.first_encoding_gate();
    let mut prefix = StateVector::zero(circuit.n_qubits);
    prefix.apply_gates(&circuit.gates[..split], params, 0.0);
    let tail = &circuit.gates[split..];
    let one = |&x: &f64| {
        let mut psi = prefix.clone();
        psi.apply_gates(tail, params, x);
        obs.expectation(&psi)
    };
    let work = xs.len() * tail.len() << circuit.n_qubits;
    Ok(if work > 1 << 18 {
        xs.par_iter().map(one).collect()
    } else {
        xs.iter().map(one).collect()
    })
}

fn check_shift_rule(circuit: &Circuit) -> Result<()> {
    if circuit.slot_usage().iter().any(|&u| u != 1) {
        return Err(QfmError::Unsupported(
            "parameter shift needs every slot to drive exactly one Pauli rotation".into(),
        ));
    }
    Ok(())
}

/// `∂f/∂θ_i = [f(θ_i + π/2) − f(θ_i − π/2)] / 2` for every slot.
pub fn gradient(circuit: &Circuit, params: &Params, obs: &Observable, x: f64) -> Result<Vec<f64>> {
    check(circuit, params, obs)?;
    check_shift_rule(circuit)?;
    let shift = std::f64::consts::FRAC_PI_2;
    let mut p = params.clone();
    let mut grad = Vec::with_capacity(circuit.n_params);
    for i in 0..circuit.n_params {
        let base = p.angles[i];
        p.angles[i] = base + shift;
        let plus = evaluate(circuit, &p, obs, x)?;
        p.angles[i] = base - shift;
        let minus = evaluate(circuit, &p, obs, x)?;
        p.angles[i] = base;
        grad.push((plus - minus) / 2.0);
    }
    Ok(grad)
}

/// Parameter-shift gradient of `f` at every grid point: `out[i][k] = ∂f(x_k)/∂θ_i`.
pub fn gradient_grid(
    circuit: &Circuit,
    params: &Params,
    obs: &Observable,
    xs: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check(circuit, params, obs)?;
    check_shift_rule(circuit)?;
    let shift = std::f64::consts::FRAC_PI_2;
    crate::rng::par_map(circuit.n_params, |i| {
        let mut p = params.clone();
        let base = p.angles[i];
        p.angles[i] = base + shift;
        let plus = evaluate_grid(circuit, &p, obs, xs)?;
        p.angles[i] = base - shift;
        let minus = evaluate_grid(circuit, &p, obs, xs)?;
        Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / 2.0).collect())
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{self, ansatz_block, block_circuit, build_model_circuit, AnsatzKind};
    use crate::rng::task_rng;
    use crate::spectrum::{build_encoding, Strategy};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Dense oracle: Kronecker-embed every gate and multiply matrices.
    fn embed(n: usize, qubits: &[usize], u: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let d = 1 << n;
        let k = qubits.len();
        DMatrix::from_fn(d, d, |r, col| {
            let rest_mask: usize = (0..n)
                .filter(|q| !qubits.contains(q))
                .map(|q| 1 << (n - 1 - q))
                .sum();
            if r & rest_mask != col & rest_mask {
                return c(0.0, 0.0);
            }
            let local = |b: usize| {
                qubits
                    .iter()
                    .fold(0, |acc, &q| (acc << 1) | ((b >> (n - 1 - q)) & 1))
            };
            let _ = k;
            u[(local(r), local(col))]
        })
    }

    fn gate_matrix(g: &Gate, params: &Params, x: f64) -> (Vec<usize>, DMatrix<Complex64>) {
        let m2 = |a: [[Complex64; 2]; 2]| DMatrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]]);
        match g {
            Gate::Rot { axis, qubit, angle } => {
                let t = match angle {
                    Angle::Param(s) => params.angles[*s],
                    Angle::Fixed(v) => *v,
                };
                (vec![*qubit], m2(rotation(*axis, t)))
            }
            Gate::Cnot { control, target } => {
                let mut m = DMatrix::zeros(4, 4);
                for (r, col) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
                    m[(r, col)] = c(1.0, 0.0);
                }
                (vec![*control, *target], m)
            }
            Gate::Cz { a, b } => {
                let mut m = DMatrix::identity(4, 4);
                m[(3, 3)] = c(-1.0, 0.0);
                (vec![*a, *b], m)
            }
            Gate::Encoding { qubits, eigenvalues } => (
                qubits.clone(),
                DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    eigenvalues.len(),
                    eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, -x * l)),
                )),
            ),
            Gate::Haar { qubits, slot } => (qubits.clone(), params.unitaries[*slot].clone()),
            Gate::Unitary { qubits, matrix } => (qubits.clone(), matrix.clone()),
        }
    }

    fn dense_unitary(circuit: &Circuit, params: &Params, x: f64) -> DMatrix<Complex64> {
        let d = 1 << circuit.n_qubits;
        circuit.gates.iter().fold(DMatrix::identity(d, d), |acc, g| {
            let (q, u) = gate_matrix(g, params, x);
            embed(circuit.n_qubits, &q, &u) * acc
        })
    }

    fn ansatze() -> Vec<AnsatzKind> {
        vec![
            AnsatzKind::StronglyEntangling { reps: 3 },
            AnsatzKind::SimplifiedTwoDesign { depth: 2 },
            AnsatzKind::Haar,
            AnsatzKind::LocalBlocks { m: 2, rows: 2, reps: 2 },
        ]
    }

    #[test]
    fn blocks_are_unitary() {
        let mut rng = task_rng(11, 0);
        for n in 2..=3 {
            for kind in ansatze() {
                let circ = block_circuit(&ansatz_block(kind, n).unwrap());
                let p = Params::sample(&circ, &mut rng);
                let u = dense_unitary(&circ, &p, 0.0);
                let err = (u.adjoint() * &u - DMatrix::identity(1 << n, 1 << n)).norm();
                assert!(err < 1e-12, "{kind:?} n={n}: {err}");
            }
        }
    }

    #[test]
    fn gatewise_matches_dense_assembly() {
        let mut rng = task_rng(12, 0);
        for n in 1..=3 {
            for strategy in [Strategy::Pauli, Strategy::Exponential, Strategy::Golomb] {
                let spec = build_encoding(strategy, n, 1, None).unwrap();
                for kind in ansatze() {
                    let Ok(circ) = build_model_circuit(&spec, kind) else {
                        continue;
                    };
                    let p = Params::sample(&circ, &mut rng);
                    let x: f64 = rng.gen::<f64>() * 6.0;
                    let u = dense_unitary(&circ, &p, x);
                    let psi = run(&circ, &p, x).unwrap();
                    assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
                    for obs in [Observable::global_zero(n), Observable::local_zero_average(n)] {
                        let o = obs.dense();
                        let e0 = (u.adjoint() * o * &u)[(0, 0)].re;
                        let f = evaluate(&circ, &p, &obs, x).unwrap();
                        assert!((e0 - f).abs() < 1e-10, "{kind:?} {strategy:?} n={n}");
                    }
                }
            }
        }
    }

    fn rx_encoding_circuit() -> Circuit {
        // e^{-ixσ_x/2} as H · diag(e^{-ix/2}, e^{ix/2}) · H.
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)],
        ) * c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let spec = build_encoding(Strategy::Pauli, 1, 1, None).unwrap();
        let mut circ = build_model_circuit(&spec, AnsatzKind::LocalBlocks { m: 1, rows: 1, reps: 1 }).unwrap();
        circ.gates = vec![
            Gate::Unitary { qubits: vec![0], matrix: h.clone() },
            Gate::Encoding { qubits: vec![0], eigenvalues: vec![-0.5, 0.5] },
            Gate::Unitary { qubits: vec![0], matrix: h },
        ];
        circ.n_params = 0;
        circ
    }

    #[test]
    fn single_qubit_analytic_model() {
        let circ = rx_encoding_circuit();
        let obs = Observable::global_zero(1);
        for x in [0.0, 0.3, 1.7, -2.2] {
            let f = evaluate(&circ, &Params::from_angles(vec![]), &obs, x).unwrap();
            assert!((f - (x / 2.0).cos().powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_parameters_give_one() {
        for kind in [
            AnsatzKind::StronglyEntangling { reps: 2 },
            AnsatzKind::SimplifiedTwoDesign { depth: 2 },
        ] {
            let spec = build_encoding(Strategy::Pauli, 3, 2, None).unwrap();
            let circ = build_model_circuit(&spec, kind).unwrap();
            let f = evaluate(&circ, &Params::identity(&circ), &Observable::global_zero(3), 0.0).unwrap();
            assert!((f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ry_gradient_analytic() {
        let block = circuit::simplified_two_design(2, 0).unwrap();
        let circ = block_circuit(&block);
        let obs = Observable::local_projector(2, &[0], 1).unwrap();
        for theta in [0.1, 1.0, 2.5] {
            let p = Params::from_angles(vec![theta, 0.4]);
            let g = gradient(&circ, &p, &obs, 0.0).unwrap();
            assert!((g[0] + theta.sin() / 2.0).abs() < 1e-14);
            assert!(g[1].abs() < 1e-14);
        }
    }

    #[test]
    fn constant_observable_has_zero_gradient() {
        let spec = build_encoding(Strategy::Pauli, 2, 1, None).unwrap();
        let circ = build_model_circuit(&spec, AnsatzKind::StronglyEntangling { reps: 2 }).unwrap();
        let obs = Observable::custom(DMatrix::identity(4, 4)).unwrap();
        let p = Params::sample(&circ, &mut task_rng(3, 0));
        assert!(gradient(&circ, &p, &obs, 0.7).unwrap().iter().all(|g| g.abs() < 1e-14));
    }

    #[test]
    fn bounded_by_spectrum_of_observable() {
        let spec = build_encoding(Strategy::Exponential, 3, 1, None).unwrap();
        let circ = build_model_circuit(&spec, AnsatzKind::StronglyEntangling { reps: 2 }).unwrap();
        let obs = Observable::global_zero(3);
        let mut rng = task_rng(5, 0);
        for _ in 0..200 {
            let p = Params::sample(&circ, &mut rng);
            let f = evaluate(&circ, &p, &obs, rng.gen::<f64>() * 10.0).unwrap();
            assert!((-1e-12..=1.0 + 1e-12).contains(&f));
        }
    }

    #[test]
    fn observable_scalars_match_dense() {
        let mut rng = task_rng(8, 0);
        let n = 3;
        let mut list = vec![
            Observable::global_zero(n),
            Observable::local_zero_average(n),
            Observable::local_projector(n, &[1, 2], 3).unwrap(),
        ];
        let a = DMatrix::from_fn(8, 8, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        list.push(Observable::custom(&a + a.adjoint()).unwrap());
        for o in list {
            let m = o.dense();
            let eig = m.clone().symmetric_eigen().eigenvalues;
            assert!((o.trace - m.trace().re).abs() < 1e-12);
            assert!((o.norm2_sq - (&m * &m).trace().re).abs() < 1e-10);
            assert!((o.norm_inf - eig.iter().fold(0.0f64, |x, v| x.max(v.abs()))).abs() < 1e-10);
            assert!((o.norm1 - eig.iter().map(|v| v.abs()).sum::<f64>()).abs() < 1e-10);
            assert!((o.abs_sum - m.iter().map(|v| v.norm()).sum::<f64>()).abs() < 1e-10);
        }
        assert!((Observable::global_zero(2).c2() - 1.0 / 16.0).abs() < 1e-15);
        assert!(Observable::custom(DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])).is_err());
    }

    #[test]
    fn parameter_permutation_round_trip() {
        let spec = build_encoding(Strategy::Pauli, 3, 1, None).unwrap();
        let circ = build_model_circuit(&spec, AnsatzKind::StronglyEntangling { reps: 2 }).unwrap();
        let mut rng = task_rng(9, 0);
        let p = Params::sample(&circ, &mut rng);
        let mut perm: Vec<usize> = (0..circ.n_params).collect();
        perm.reverse();
        perm.swap(0, 5);
        let permuted: Vec<f64> = perm.iter().map(|&i| p.angles[i]).collect();
        let mut back = vec![0.0; circ.n_params];
        for (k, &i) in perm.iter().enumerate() {
            back[i] = permuted[k];
        }
        let obs = Observable::local_zero_average(3);
        let a = evaluate(&circ, &p, &obs, 0.4).unwrap();
        let b = evaluate(&circ, &Params::from_angles(back), &obs, 0.4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_wrong_parameter_length() {
        let spec = build_encoding(Strategy::Pauli, 2, 1, None).unwrap();
        let circ = build_model_circuit(&spec, AnsatzKind::StronglyEntangling { reps: 1 }).unwrap();
        let err = evaluate(&circ, &Params::from_angles(vec![0.0; 3]), &Observable::global_zero(2), 0.0);
        assert_eq!(err, Err(QfmError::ParameterLength { expected: 12, got: 3 }));
    }

    #[test]
    fn grid_matches_pointwise() {
        let spec = build_encoding(Strategy::Pauli, 3, 2, None).unwrap();
        let circ = build_model_circuit(&spec, AnsatzKind::SimplifiedTwoDesign { depth: 2 }).unwrap();
        let p = Params::sample(&circ, &mut task_rng(4, 0));
        let obs = Observable::local_zero_average(3);
        let xs: Vec<f64> = (0..40).map(|k| k as f64 * 0.17).collect();
        let grid = evaluate_grid(&circ, &p, &obs, &xs).unwrap();
        for (x, g) in xs.iter().zip(grid) {
            assert!((evaluate(&circ, &p, &obs, *x).unwrap() - g).abs() < 1e-14);
        }
        let gg = gradient_grid(&circ, &p, &obs, &xs[..3]).unwrap();
        let g1 = gradient(&circ, &p, &obs, xs[1]).unwrap();
        for i in 0..circ.n_params {
            assert!((gg[i][1] - g1[i]).abs() < 1e-14);
        }
    }
}
