//! Fourier coefficients by Nyquist sampling plus DFT, and their Monte-Carlo
//! statistics over random parameters.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};

use crate::circuit::Circuit;
use crate::error::{QfmError, Result};
use crate::rng::{par_map, task_rng, tree_reduce};
use crate::simulator::{evaluate_grid, Observable, Params};
use crate::spectrum::EncodingSpec;

/// Largest accepted DFT length.
pub const MAX_SAMPLE_POINTS: usize = 1 << 20;

/// Samples per accumulation chunk in [`coefficient_statistics`].
const CHUNK: usize = 256;

/// Lattice frequencies `j·step` for `j ∈ −half..=half`, sampled at `2·half+1` points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingGrid {
    pub lattice_scale: u32,
    pub step: i64,
    pub half: i64,
}

impl SamplingGrid {
    pub fn for_encoding(spec: &EncodingSpec) -> Result<SamplingGrid> {
        let (max, g) = spec.lattice_extent();
        let step = if g == 0 { 1 } else { g };
        let grid = SamplingGrid {
            lattice_scale: spec.lattice_scale,
            step,
            half: max / step,
        };
        if grid.n_points() > MAX_SAMPLE_POINTS {
            return Err(QfmError::SpectrumTooLarge {
                size: grid.n_points() as u128,
                limit: MAX_SAMPLE_POINTS as u128,
            });
        }
        Ok(grid)
    }

    pub fn n_points(&self) -> usize {
        (2 * self.half + 1) as usize
    }

    /// `x_k = 2π s k / (step · N)`.
    pub fn points(&self) -> Vec<f64> {
        let n = self.n_points() as f64;
        let scale = std::f64::consts::TAU * self.lattice_scale as f64 / (self.step as f64 * n);
        (0..self.n_points()).map(|k| k as f64 * scale).collect()
    }

    /// Lattice frequencies in ascending order.
    pub fn frequencies(&self) -> Vec<i64> {
        (-self.half..=self.half).map(|j| j * self.step).collect()
    }

    pub fn physical(&self, lattice: i64) -> f64 {
        lattice as f64 / self.lattice_scale as f64
    }
}

/// Coefficients `c_ω` keyed by lattice frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub grid: SamplingGrid,
    pub coeffs: BTreeMap<i64, Complex64>,
}

impl CoefficientSet {
    pub fn get(&self, omega: i64) -> Complex64 {
        self.coeffs.get(&omega).copied().unwrap_or_default()
    }

    pub fn sum_sq(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm_sqr()).sum()
    }

    /// `Σ_ω c_ω e^{iωx}` with physical frequencies.
    pub fn reconstruct(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(&w, c)| (c * Complex64::from_polar(1.0, self.grid.physical(w) * x)).re)
            .sum()
    }

    /// Coefficients in grid-frequency order.
    pub fn values(&self) -> Vec<Complex64> {
        self.coeffs.values().copied().collect()
    }
}

/// Reusable FFT plan for one sampling grid.
#[derive(Clone)]
pub struct Extractor {
    pub grid: SamplingGrid,
    points: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Extractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Extractor").field("grid", &self.grid).finish()
    }
}

impl Extractor {
    pub fn new(grid: SamplingGrid) -> Extractor {
        let fft = FftPlanner::new().plan_fft_forward(grid.n_points());
        Extractor {
            points: grid.points(),
            grid,
            fft,
        }
    }

    pub fn for_circuit(circuit: &Circuit) -> Result<Extractor> {
        Ok(Self::new(SamplingGrid::for_encoding(&circuit.encoding)?))
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// DFT of samples taken at [`Extractor::points`], in grid-frequency order.
    pub fn transform(&self, samples: &[f64]) -> Vec<Complex64> {
        let n = self.grid.n_points();
        assert_eq!(samples.len(), n, "one sample per grid point");
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        let inv = 1.0 / n as f64;
        let half = self.grid.half;
        (-half..=half)
            .map(|j| buf[j.rem_euclid(n as i64) as usize] * inv)
            .collect()
    }

    pub fn from_samples(&self, samples: &[f64]) -> CoefficientSet {
        CoefficientSet {
            grid: self.grid,
            coeffs: self.grid.frequencies().into_iter().zip(self.transform(samples)).collect(),
        }
    }

    pub fn extract(&self, circuit: &Circuit, params: &Params, obs: &Observable) -> Result<CoefficientSet> {
        Ok(self.from_samples(&evaluate_grid(circuit, params, obs, &self.points)?))
    }
}

pub fn extract_coefficients(circuit: &Circuit, params: &Params, obs: &Observable) -> Result<CoefficientSet> {
    Extractor::for_circuit(circuit)?.extract(circuit, params, obs)
}

/// Monte-Carlo statistics of one coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyStats {
    /// Lattice frequency.
    pub omega: i64,
    pub mean: Complex64,
    /// `E|c|²`.
    pub mean_abs2: f64,
    /// Unbiased `E|c|² − |E c|²`.
    pub variance: f64,
    /// Standard error of `variance`.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientStats {
    pub grid: SamplingGrid,
    pub samples: usize,
    pub seed: u64,
    pub entries: Vec<FrequencyStats>,
}

impl CoefficientStats {
    pub fn get(&self, omega: i64) -> Option<&FrequencyStats> {
        self.entries
            .binary_search_by_key(&omega, |e| e.omega)
            .ok()
            .map(|i| &self.entries[i])
    }
}

/// Raw sums of `y = z − shift` per component.
#[derive(Debug, Clone)]
struct Sums {
    count: usize,
    y: Vec<Complex64>,
    y2: Vec<Complex64>,
    abs2: Vec<f64>,
    abs2_y: Vec<Complex64>,
    abs4: Vec<f64>,
}

impl Sums {
    fn new(k: usize) -> Sums {
        Sums {
            count: 0,
            y: vec![Complex64::default(); k],
            y2: vec![Complex64::default(); k],
            abs2: vec![0.0; k],
            abs2_y: vec![Complex64::default(); k],
            abs4: vec![0.0; k],
        }
    }

    fn push(&mut self, z: &[Complex64], shift: &[Complex64]) {
        self.count += 1;
        for i in 0..z.len() {
            let y = z[i] - shift[i];
            let a = y.norm_sqr();
            self.y[i] += y;
            self.y2[i] += y * y;
            self.abs2[i] += a;
            self.abs2_y[i] += y * a;
            self.abs4[i] += a * a;
        }
    }

    fn merge(mut self, o: Sums) -> Sums {
        self.count += o.count;
        for i in 0..self.y.len() {
            self.y[i] += o.y[i];
            self.y2[i] += o.y2[i];
            self.abs2[i] += o.abs2[i];
            self.abs2_y[i] += o.abs2_y[i];
            self.abs4[i] += o.abs4[i];
        }
        self
    }
}

/// Mean, `E|z|²`, unbiased variance and its standard error for each component
/// of i.i.d. complex vectors produced by `draw(rng_i)`, `rng_i = task_rng(seed, i)`.
pub fn moment_statistics<F>(samples: usize, seed: u64, draw: F) -> Result<Vec<(Complex64, f64, f64, f64)>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Vec<Complex64>> + Sync + Send,
{
    if samples < 2 {
        return Err(QfmError::InvalidArgument("at least 2 samples are required".into()));
    }
    let shift = draw(&mut task_rng(seed, 0))?;
    let k = shift.len();
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Result<Sums>> = par_map(chunks, |c| {
        let mut sums = Sums::new(k);
        for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
            let z = draw(&mut task_rng(seed, i as u64))?;
            if z.len() != k {
                return Err(QfmError::InvalidArgument("sample length changed between draws".into()));
            }
            sums.push(&z, &shift);
        }
        Ok(sums)
    });
    let partial = partial.into_iter().collect::<Result<Vec<_>>>()?;
    let sums = tree_reduce(partial, Sums::merge).expect("at least one chunk");
    let s = sums.count as f64;
    Ok((0..k)
        .map(|i| {
            let m = sums.y[i] / s;
            let e_abs2 = sums.abs2[i] / s;
            let e_y2 = sums.y2[i] / s;
            let e_abs2_y = sums.abs2_y[i] / s;
            let e_abs4 = sums.abs4[i] / s;
            let mm = m.norm_sqr();
            let pop_var = (e_abs2 - mm).max(0.0);
            let re_sq = ((e_y2.conj() * m * m).re + e_abs2 * mm) / 2.0;
            let mu4 = e_abs4 + mm * mm + 4.0 * re_sq + 2.0 * e_abs2 * mm
                - 4.0 * (m * e_abs2_y.conj()).re
                - 4.0 * mm * mm;
            let stderr = ((mu4 - pop_var * pop_var).max(0.0) / s).sqrt();
            let mean = m + shift[i];
            let mean_abs2 = e_abs2 + 2.0 * (shift[i].conj() * m).re + shift[i].norm_sqr();
            (mean, mean_abs2, pop_var * s / (s - 1.0), stderr)
        })
        .collect())
}

/// Statistics of every grid coefficient over `Params::sample` draws.
pub fn coefficient_statistics(
    circuit: &Circuit,
    obs: &Observable,
    samples: usize,
    seed: u64,
) -> Result<CoefficientStats> {
    let ex = Extractor::for_circuit(circuit)?;
    let stats = moment_statistics(samples, seed, |rng| {
        let p = Params::sample(circuit, rng);
        Ok(ex.transform(&evaluate_grid(circuit, &p, obs, ex.points())?))
    })?;
    Ok(CoefficientStats {
        grid: ex.grid,
        samples,
        seed,
        entries: ex
            .grid
            .frequencies()
            .into_iter()
            .zip(stats)
            .map(|(omega, (mean, mean_abs2, variance, stderr))| FrequencyStats {
                omega,
                mean,
                mean_abs2,
                variance,
                stderr,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub sum_sq: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `Σ_ω |c_ω|² ≤ ‖O‖∞²`.
pub fn norm_bound_check(cs: &CoefficientSet, obs: &Observable) -> NormReport {
    let sum_sq = cs.sum_sq();
    let bound = obs.norm_inf * obs.norm_inf;
    NormReport {
        sum_sq,
        bound,
        pass: sum_sq <= bound + 1e-9,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_model_circuit, AnsatzKind, Gate};
    use crate::spectrum::{build_encoding, full_redundancy, Strategy};
    use nalgebra::DMatrix;
    use rand::Rng;

    fn cos2_circuit() -> Circuit {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(s, 0.0),
                Complex64::new(s, 0.0),
                Complex64::new(s, 0.0),
                Complex64::new(-s, 0.0),
            ],
        );
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
    fn cos_squared_coefficients() {
        let circ = cos2_circuit();
        let obs = Observable::global_zero(1);
        let cs = extract_coefficients(&circ, &Params::from_angles(vec![]), &obs).unwrap();
        assert_eq!(cs.grid.n_points(), 3);
        assert!((cs.get(0) - Complex64::new(0.5, 0.0)).norm() < 1e-12);
        assert!((cs.get(2) - Complex64::new(0.25, 0.0)).norm() < 1e-12);
        assert!((cs.get(-2) - Complex64::new(0.25, 0.0)).norm() < 1e-12);
        assert_eq!(cs.grid.physical(2), 1.0);
        let r = norm_bound_check(&cs, &obs);
        assert!((r.sum_sq - 0.375).abs() < 1e-12 && r.pass);
        let r2 = norm_bound_check(&cs, &obs.scaled(2.0));
        assert!((r2.bound - 4.0).abs() < 1e-12 && r2.pass);
    }

    #[test]
    fn constant_model_has_only_dc() {
        let spec = build_encoding(Strategy::Pauli, 2, 2, None).unwrap();
        let circ = build_model_circuit(&spec, AnsatzKind::StronglyEntangling { reps: 2 }).unwrap();
        let obs = Observable::custom(DMatrix::identity(4, 4) * Complex64::new(0.3, 0.0)).unwrap();
        let p = Params::sample(&circ, &mut task_rng(1, 0));
        let cs = extract_coefficients(&circ, &p, &obs).unwrap();
        for (&w, c) in &cs.coeffs {
            let expect = if w == 0 { 0.3 } else { 0.0 };
            assert!((c - Complex64::new(expect, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn support_hermiticity_and_round_trip() {
        let mut rng = task_rng(2, 0);
        for strategy in [Strategy::Pauli, Strategy::Exponential, Strategy::Golomb] {
            for n in 2..=4 {
                let spec = build_encoding(strategy, n, 1, None).unwrap();
                let table = full_redundancy(&spec).unwrap();
                let circ = build_model_circuit(&spec, AnsatzKind::SimplifiedTwoDesign { depth: 2 }).unwrap();
                let obs = Observable::local_zero_average(n);
                let ex = Extractor::for_circuit(&circ).unwrap();
                for _ in 0..200 / (n * 4) {
                    let p = Params::sample(&circ, &mut rng);
                    let samples = evaluate_grid(&circ, &p, &obs, ex.points()).unwrap();
                    let cs = ex.from_samples(&samples);
                    for (&w, c) in &cs.coeffs {
                        assert!((c - cs.get(-w).conj()).norm() < 1e-10);
                        if table.get(w) == 0 {
                            assert!(c.norm() < 1e-10, "{strategy:?} n={n} ω={w} c={c}");
                        }
                    }
                    for (x, f) in ex.points().iter().zip(&samples) {
                        assert!((cs.reconstruct(*x) - f).abs() < 1e-10);
                    }
                    assert!(norm_bound_check(&cs, &obs).pass);
                }
            }
        }
    }

    #[test]
    fn pauli_two_qubits_band_limited() {
        let spec = build_encoding(Strategy::Pauli, 2, 1, None).unwrap();
        let circ = build_model_circuit(&spec, AnsatzKind::StronglyEntangling { reps: 2 }).unwrap();
        let p = Params::sample(&circ, &mut task_rng(3, 0));
        let cs = extract_coefficients(&circ, &p, &Observable::global_zero(2)).unwrap();
        assert_eq!(cs.grid.half, 2);
        // Off-grid frequencies: evaluate the series against fresh points.
        let obs = Observable::global_zero(2);
        for x in [0.123, 1.9, 4.4] {
            let f = crate::simulator::evaluate(&circ, &p, &obs, x).unwrap();
            assert!((cs.reconstruct(x) - f).abs() < 1e-10);
        }
    }

    #[test]
    fn variance_matches_two_pass_reference() {
        let draws: Vec<Vec<Complex64>> = (0..1000)
            .map(|i| {
                let mut r = task_rng(4, i);
                (0..3)
                    .map(|k| Complex64::new(r.gen::<f64>() * (k + 1) as f64 + 5.0, r.gen::<f64>() - 0.2))
                    .collect()
            })
            .collect();
        let stats = moment_statistics(1000, 4, |rng| {
            Ok((0..3)
                .map(|k| Complex64::new(rng.gen::<f64>() * (k + 1) as f64 + 5.0, rng.gen::<f64>() - 0.2))
                .collect())
        })
        .unwrap();
        for k in 0..3 {
            let zs: Vec<Complex64> = draws.iter().map(|d| d[k]).collect();
            let mean = zs.iter().sum::<Complex64>() / 1000.0;
            let dev: Vec<f64> = zs.iter().map(|z| (z - mean).norm_sqr()).collect();
            let var = dev.iter().sum::<f64>() / 999.0;
            let pop = dev.iter().sum::<f64>() / 1000.0;
            let mu4 = dev.iter().map(|d| d * d).sum::<f64>() / 1000.0;
            let se = ((mu4 - pop * pop) / 1000.0).sqrt();
            let (m, m2, v, s) = stats[k];
            assert!((m - mean).norm() < 1e-12);
            assert!((v - var).abs() < 1e-12, "{v} {var}");
            assert!((s - se).abs() < 1e-12, "{s} {se}");
            let e_abs2 = zs.iter().map(|z| z.norm_sqr()).sum::<f64>() / 1000.0;
            assert!((m2 - e_abs2).abs() < 1e-10);
        }
    }

    #[test]
    fn statistics_are_reproducible_across_pools() {
        let spec = build_encoding(Strategy::Pauli, 2, 1, None).unwrap();
        let circ = build_model_circuit(&spec, AnsatzKind::Haar).unwrap();
        let obs = Observable::global_zero(2);
        let a = crate::rng::with_threads(1, || coefficient_statistics(&circ, &obs, 700, 9).unwrap());
        let b = crate::rng::with_threads(3, || coefficient_statistics(&circ, &obs, 700, 9).unwrap());
        assert_eq!(a, b);
        assert!(a.entries.iter().all(|e| e.variance >= 0.0));
    }

    #[test]
    fn haar_pair_single_qubit_variance() {
        // a = |U_11|², b = |V_11|² are uniform on [0,1]; Var(c_1) = E[a(1−a)]·E[b(1−b)] = 1/36.
        let spec = build_encoding(Strategy::Pauli, 1, 1, None).unwrap();
        let circ = build_model_circuit(&spec, AnsatzKind::Haar).unwrap();
        let st = coefficient_statistics(&circ, &Observable::global_zero(1), 20_000, 5).unwrap();
        let c1 = st.get(2).unwrap();
        assert!((c1.variance - 1.0 / 36.0).abs() < 3.0 * c1.stderr + 1e-4, "{c1:?}");
        let c0 = st.get(0).unwrap();
        assert!((c0.mean.re - 0.5).abs() < 0.01);
    }

    #[test]
    fn exponential_guard() {
        let spec = build_encoding(Strategy::Exponential, 7, 2, None).unwrap();
        assert!(matches!(
            SamplingGrid::for_encoding(&spec),
            Err(QfmError::SpectrumTooLarge { .. })
        ));
    }
}
