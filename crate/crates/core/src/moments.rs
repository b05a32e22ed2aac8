//! Haar second moments by Weingarten calculus and empirical distances of an
//! ansatz ensemble to a unitary 2-design.
//!
//! The empirical operator `E[U⊗U⊗Ū⊗Ū]` is stored as the Gram matrix of the
//! symmetric pair vectors `v_(a≤b) = U_a U_b` (`a, b` flat entry indices of `U`),
//! which holds each of the `d⁸` tensor entries exactly once up to symmetry.

use matrixmultiply::{zgemm, CGemmOption};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{block_circuit, Circuit, TrainableBlock};
use crate::error::{QfmError, Result};
use crate::rng::{par_map, task_rng};
use crate::simulator::{Params, StateVector};

/// Below this many samples the report carries a warning.
pub const MIN_SAMPLES: usize = 1000;

/// Largest dimension for the spectral distance.
pub const MAX_SPECTRAL_DIM: usize = 8;

const TILE: usize = 256;
const BATCH: usize = 128;
/// Memory budget for Gram tiles held in one pass.
const BAND_BYTES: usize = 1 << 30;

/// `E_Haar[U_{i₁j₁} U_{i₂j₂} Ū_{i₃j₃} Ū_{i₄j₄}]`.
pub fn haar_second_moment_entry(d: usize, i: [usize; 4], j: [usize; 4]) -> Result<f64> {
    if d < 2 {
        return Err(QfmError::InvalidArgument("Weingarten weights need d >= 2".into()));
    }
    if i.iter().chain(&j).any(|&x| x >= d) {
        return Err(QfmError::InvalidArgument(format!("indices must lie in 0..{d}")));
    }
    Ok(haar_entry(d as f64, i, j))
}

fn haar_entry(d: f64, i: [usize; 4], j: [usize; 4]) -> f64 {
    let wg_id = 1.0 / (d * d - 1.0);
    let wg_swap = -1.0 / (d * (d * d - 1.0));
    let row_id = i[0] == i[2] && i[1] == i[3];
    let row_sw = i[0] == i[3] && i[1] == i[2];
    let col_id = j[0] == j[2] && j[1] == j[3];
    let col_sw = j[0] == j[3] && j[1] == j[2];
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    (b(row_id && col_id) + b(row_sw && col_sw)) * wg_id + (b(row_id && col_sw) + b(row_sw && col_id)) * wg_swap
}

/// Dense unitary of a circuit without encoding gates.
pub fn circuit_unitary(circuit: &Circuit, params: &Params) -> DMatrix<Complex64> {
    let d = 1usize << circuit.n_qubits;
    let mut u = DMatrix::zeros(d, d);
    for col in 0..d {
        let mut amps = vec![Complex64::default(); d];
        amps[col] = Complex64::new(1.0, 0.0);
        let mut psi = StateVector {
            n_qubits: circuit.n_qubits,
            amps,
        };
        psi.apply_gates(&circuit.gates, params, 0.0);
        for (row, a) in psi.amps.into_iter().enumerate() {
            u[(row, col)] = a;
        }
    }
    u
}

/// Sampler drawing `U(θ)` of `block` for uniform angles (and Haar slots).
pub fn block_sampler(block: &TrainableBlock) -> impl Fn(&mut ChaCha8Rng) -> DMatrix<Complex64> + Sync + Send {
    let circ = block_circuit(block);
    move |rng: &mut ChaCha8Rng| {
        let p = Params::sample(&circ, rng);
        circuit_unitary(&circ, &p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub d: usize,
    pub samples: usize,
    pub seed: u64,
    /// `d² · max |empirical − Haar|` over all second-moment entries.
    pub epsilon_m: f64,
    /// Standard error of `epsilon_m` at the maximizing entry.
    pub stderr: f64,
    /// `[i₁, j₁, i₂, j₂, i₃, j₃, i₄, j₄]` of the maximizing entry
    /// `E[U_{i₁j₁} U_{i₂j₂} Ū_{i₃j₃} Ū_{i₄j₄}]`.
    pub argmax: [usize; 8],
    pub empirical: Complex64,
    pub haar: f64,
    pub epsilon_inf: Option<f64>,
    /// Gram rows were produced in several passes over regenerated samples.
    pub streamed: bool,
    pub warnings: Vec<String>,
}

/// Index bookkeeping for pair vectors.
struct Pairs {
    d: usize,
    n2: usize,
    list: Vec<(usize, usize)>,
}

impl Pairs {
    fn new(d: usize) -> Pairs {
        let n2 = d * d;
        let mut list = Vec::with_capacity(n2 * (n2 + 1) / 2);
        for a in 0..n2 {
            for b in a..n2 {
                list.push((a, b));
            }
        }
        Pairs { d, n2, list }
    }

    fn len(&self) -> usize {
        self.list.len()
    }

    fn index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        a * self.n2 - a * a.saturating_sub(1) / 2 + (b - a)
    }

    fn vector(&self, u: &DMatrix<Complex64>, out: &mut [Complex64]) {
        let d = self.d;
        let flat = |a: usize| u[(a / d, a % d)];
        for (slot, &(a, b)) in out.iter_mut().zip(&self.list) {
            *slot = flat(a) * flat(b);
        }
    }

    /// `(row, col)` pairs of `U` entries behind pair `p`.
    fn entries(&self, p: usize) -> [(usize, usize); 2] {
        let (a, b) = self.list[p];
        [(a / self.d, a % self.d), (b / self.d, b % self.d)]
    }
}

/// Upper-triangular tiles of `Σ_s conj(v_p) v_q` for the tile rows of one band.
struct Band {
    p: usize,
    /// `(ti, tj, data)` row-major, `tj ≥ ti`.
    tiles: Vec<(usize, usize, Vec<Complex64>)>,
}

impl Band {
    fn new(tile_rows: std::ops::Range<usize>, p: usize) -> Band {
        let n_tiles = p.div_ceil(TILE);
        let mut tiles = Vec::new();
        for ti in tile_rows.clone() {
            for tj in ti..n_tiles {
                let len = tile_len(ti, p) * tile_len(tj, p);
                tiles.push((ti, tj, vec![Complex64::default(); len]));
            }
        }
        Band { p, tiles }
    }

    /// Adds `conj(V)ᵀ V` for a batch `v` of `rows` pair vectors (row-major).
    fn accumulate(&mut self, v: &[Complex64], vc: &[Complex64], rows: usize) {
        let p = self.p;
        self.tiles.par_iter_mut().for_each(|(ti, tj, data)| {
            let (m, n) = (tile_len(*ti, p), tile_len(*tj, p));
            // SAFETY: every view lies inside `v`, `vc` (rows × p) or `data` (m × n).
            unsafe {
                zgemm(
                    CGemmOption::Standard,
                    CGemmOption::Standard,
                    m,
                    rows,
                    n,
                    [1.0, 0.0],
                    vc.as_ptr().add(*ti * TILE) as *const [f64; 2],
                    1,
                    p as isize,
                    v.as_ptr().add(*tj * TILE) as *const [f64; 2],
                    p as isize,
                    1,
                    [1.0, 0.0],
                    data.as_mut_ptr() as *mut [f64; 2],
                    n as isize,
                    1,
                );
            }
        });
    }
}

fn tile_len(t: usize, p: usize) -> usize {
    TILE.min(p - t * TILE)
}

/// Draws samples `range` and returns their pair vectors and conjugates, row-major.
fn pair_batch<F>(pairs: &Pairs, range: std::ops::Range<usize>, seed: u64, sampler: &F) -> (Vec<Complex64>, Vec<Complex64>)
where
    F: Fn(&mut ChaCha8Rng) -> DMatrix<Complex64> + Sync,
{
    let p = pairs.len();
    let start = range.start;
    let rows: Vec<Vec<Complex64>> = par_map(range.len(), |k| {
        let u = sampler(&mut task_rng(seed, (start + k) as u64));
        let mut row = vec![Complex64::default(); p];
        pairs.vector(&u, &mut row);
        row
    });
    let v: Vec<Complex64> = rows.into_iter().flatten().collect();
    let vc = v.iter().map(|z| z.conj()).collect();
    (v, vc)
}

fn check_unitary(u: &DMatrix<Complex64>, d: usize) -> Result<()> {
    if u.nrows() != d || u.ncols() != d {
        return Err(QfmError::InvalidArgument(format!(
            "sampler returned a {}×{} matrix, expected {d}×{d}",
            u.nrows(),
            u.ncols()
        )));
    }
    Ok(())
}

/// Runs all passes; `visit` sees every finished band (sums, not means).
fn gram_passes<F>(
    d: usize,
    samples: usize,
    seed: u64,
    sampler: &F,
    band_bytes: usize,
    mut visit: impl FnMut(&Pairs, &Band),
) -> Result<bool>
where
    F: Fn(&mut ChaCha8Rng) -> DMatrix<Complex64> + Sync,
{
    check_unitary(&sampler(&mut task_rng(seed, 0)), d)?;
    let pairs = Pairs::new(d);
    let p = pairs.len();
    let n_tiles = p.div_ceil(TILE);
    let row_bytes = |ti: usize| (n_tiles - ti) * TILE * TILE * std::mem::size_of::<Complex64>();
    let mut bands = Vec::new();
    let mut start = 0;
    while start < n_tiles {
        let mut end = start + 1;
        let mut bytes = row_bytes(start);
        while end < n_tiles && bytes + row_bytes(end) <= band_bytes {
            bytes += row_bytes(end);
            end += 1;
        }
        bands.push(start..end);
        start = end;
    }
    let streamed = bands.len() > 1;
    for rows in bands {
        let mut band = Band::new(rows, p);
        let mut s = 0;
        while s < samples {
            let e = (s + BATCH).min(samples);
            let (v, vc) = pair_batch(&pairs, s..e, seed, sampler);
            band.accumulate(&v, &vc, e - s);
            s = e;
        }
        visit(&pairs, &band);
    }
    Ok(streamed)
}

/// Monomial distance of the ensemble drawn by `sampler` (sample `i` from
/// `task_rng(seed, i)`) to the Haar second moment.
pub fn epsilon_monomial_with<F>(d: usize, samples: usize, seed: u64, sampler: F) -> Result<MomentReport>
where
    F: Fn(&mut ChaCha8Rng) -> DMatrix<Complex64> + Sync + Send,
{
    epsilon_monomial_banded(d, samples, seed, &sampler, BAND_BYTES)
}

fn epsilon_monomial_banded<F>(d: usize, samples: usize, seed: u64, sampler: &F, band_bytes: usize) -> Result<MomentReport>
where
    F: Fn(&mut ChaCha8Rng) -> DMatrix<Complex64> + Sync + Send,
{
    if samples < 2 {
        return Err(QfmError::InvalidArgument("at least 2 samples are required".into()));
    }
    if d < 2 {
        return Err(QfmError::InvalidArgument("second moments need d >= 2".into()));
    }
    let inv = 1.0 / samples as f64;
    let df = d as f64;
    // (deviation, conj-side pair, U-side pair, empirical, haar)
    let mut best = (-1.0f64, 0usize, 0usize, Complex64::default(), 0.0f64);
    let streamed = gram_passes(d, samples, seed, sampler, band_bytes, |pairs, band| {
        let p = band.p;
        let local: Vec<(f64, usize, usize, Complex64, f64)> = band
            .tiles
            .par_iter()
            .map(|(ti, tj, data)| {
                let n = tile_len(*tj, p);
                let mut top = (-1.0f64, 0, 0, Complex64::default(), 0.0);
                for (k, g) in data.iter().enumerate() {
                    let (pr, pc) = (ti * TILE + k / n, tj * TILE + k % n);
                    let [c, e] = pairs.entries(pr);
                    let [a, b] = pairs.entries(pc);
                    let h = haar_entry(df, [a.0, b.0, c.0, e.0], [a.1, b.1, c.1, e.1]);
                    let emp = g * inv;
                    let dev = (emp - h).norm();
                    if dev > top.0 {
                        top = (dev, pr, pc, emp, h);
                    }
                }
                top
            })
            .collect();
        for t in local {
            if t.0 > best.0 {
                best = t;
            }
        }
    })?;
    let (dev, pr, pc, empirical, haar) = best;
    let pairs = Pairs::new(d);
    // Second pass over regenerated samples for the spread of the maximizing entry.
    let values: Vec<Complex64> = par_map(samples, |i| {
        let u = sampler(&mut task_rng(seed, i as u64));
        let [c, e] = pairs.entries(pr);
        let [a, b] = pairs.entries(pc);
        u[a] * u[b] * (u[c] * u[e]).conj()
    });
    let mean = values.iter().sum::<Complex64>() * inv;
    let var = values.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (samples as f64 - 1.0);
    let [c, e] = pairs.entries(pr);
    let [a, b] = pairs.entries(pc);
    let mut warnings = Vec::new();
    if samples < MIN_SAMPLES {
        warnings.push(format!("only {samples} samples (< {MIN_SAMPLES}); ε_M is noisy"));
    }
    Ok(MomentReport {
        d,
        samples,
        seed,
        epsilon_m: df * df * dev,
        stderr: df * df * (var * inv).sqrt(),
        argmax: [a.0, a.1, b.0, b.1, c.0, c.1, e.0, e.1],
        empirical,
        haar,
        epsilon_inf: None,
        streamed,
        warnings,
    })
}

pub fn empirical_epsilon_monomial(block: &TrainableBlock, samples: usize, seed: u64) -> Result<MomentReport> {
    epsilon_monomial_with(1 << block.n_qubits, samples, seed, block_sampler(block))
}

/// Largest singular value of `E_Haar[U⊗U⊗Ū⊗Ū] − E_emp[U⊗U⊗Ū⊗Ū]`.
pub fn epsilon_spectral_with<F>(d: usize, samples: usize, seed: u64, sampler: F) -> Result<f64>
where
    F: Fn(&mut ChaCha8Rng) -> DMatrix<Complex64> + Sync + Send,
{
    if d > MAX_SPECTRAL_DIM || d < 2 {
        return Err(QfmError::SpectrumTooLarge {
            size: (d as u128).pow(4),
            limit: (MAX_SPECTRAL_DIM as u128).pow(4),
        });
    }
    if samples < 2 {
        return Err(QfmError::InvalidArgument("at least 2 samples are required".into()));
    }
    let pairs = Pairs::new(d);
    let p = pairs.len();
    let mut gram = vec![Complex64::default(); p * p];
    gram_passes(d, samples, seed, &sampler, usize::MAX, |_, band| {
        for (ti, tj, data) in &band.tiles {
            let n = tile_len(*tj, p);
            for (k, g) in data.iter().enumerate() {
                let (r, c) = (ti * TILE + k / n, tj * TILE + k % n);
                gram[r * p + c] = *g;
                gram[c * p + r] = g.conj();
            }
        }
    })?;
    let inv = 1.0 / samples as f64;
    let d2 = d * d;
    let d4 = d2 * d2;
    let df = d as f64;
    // Operator row (i₁i₂i₃i₄), column (j₁j₂j₃j₄).
    let split = |x: usize| [x / (d * d2), (x / d2) % d, (x / d) % d, x % d];
    let mut delta = vec![Complex64::default(); d4 * d4];
    delta.par_chunks_mut(d4).enumerate().for_each(|(row, out)| {
        let i = split(row);
        for (col, slot) in out.iter_mut().enumerate() {
            let j = split(col);
            let pc = pairs.index(i[0] * d + j[0], i[1] * d + j[1]);
            let pr = pairs.index(i[2] * d + j[2], i[3] * d + j[3]);
            *slot = Complex64::new(haar_entry(df, i, j), 0.0) - gram[pr * p + pc] * inv;
        }
    });
    Ok(top_singular_value(&delta, d4, seed))
}

pub fn empirical_epsilon_spectral(block: &TrainableBlock, samples: usize, seed: u64) -> Result<f64> {
    epsilon_spectral_with(1 << block.n_qubits, samples, seed, block_sampler(block))
}

/// Power iteration on `A†A` for a dense row-major `n×n` matrix.
fn top_singular_value(a: &[Complex64], n: usize, seed: u64) -> f64 {
    let mut rng = task_rng(seed, u64::MAX);
    let mut x: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nx = norm(&x);
    x.iter_mut().for_each(|z| *z /= nx);
    let mut sigma = 0.0;
    for _ in 0..5000 {
        let y: Vec<Complex64> = a
            .par_chunks(n)
            .map(|row| row.iter().zip(&x).map(|(r, v)| r * v).sum())
            .collect();
        let s = norm(&y);
        if s == 0.0 {
            return 0.0;
        }
        let mut z = vec![Complex64::default(); n];
        for (row, yr) in a.chunks(n).zip(&y) {
            for (zi, r) in z.iter_mut().zip(row) {
                *zi += r.conj() * yr;
            }
        }
        let nz = norm(&z);
        x = z.into_iter().map(|v| v / nz).collect();
        let converged = (s - sigma).abs() <= 1e-13 * s;
        sigma = s;
        if converged {
            break;
        }
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{ansatz_block, AnsatzKind, Axis, Angle, Gate};
    use crate::haar::haar_unitary;

    fn haar_sampler(d: usize) -> impl Fn(&mut ChaCha8Rng) -> DMatrix<Complex64> + Sync + Send {
        move |rng: &mut ChaCha8Rng| haar_unitary(d, rng)
    }

    #[test]
    fn weingarten_values() {
        // |U11|⁴ and |U11|²|U22|² at d = 2.
        assert!((haar_second_moment_entry(2, [0, 0, 0, 0], [0, 0, 0, 0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((haar_second_moment_entry(2, [0, 1, 0, 1], [0, 1, 0, 1]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((haar_second_moment_entry(2, [0, 1, 0, 1], [0, 1, 1, 0]).unwrap() + 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(haar_second_moment_entry(3, [0, 1, 0, 2], [0, 1, 0, 1]).unwrap(), 0.0);
        assert!(haar_second_moment_entry(1, [0; 4], [0; 4]).is_err());
        // E|U11|⁴ = 2/(d(d+1)).
        for d in 2..6 {
            let v = haar_second_moment_entry(d, [0; 4], [0; 4]).unwrap();
            assert!((v - 2.0 / (d * (d + 1)) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn weingarten_matches_haar_monte_carlo() {
        let samples = 20_000;
        for d in [2usize, 4, 8] {
            let mut pick = task_rng(100 + d as u64, 0);
            let tuples: Vec<([usize; 4], [usize; 4])> = (0..50)
                .map(|k| {
                    let mut i: [usize; 4] = std::array::from_fn(|_| pick.gen_range(0..d));
                    let mut j: [usize; 4] = std::array::from_fn(|_| pick.gen_range(0..d));
                    // Balance half the tuples so the Haar value is nonzero.
                    if k % 2 == 0 {
                        i[2] = i[0];
                        i[3] = i[1];
                        j[2] = j[0];
                        j[3] = j[1];
                    }
                    (i, j)
                })
                .collect();
            let draws: Vec<DMatrix<Complex64>> = par_map(samples, |s| haar_unitary(d, &mut task_rng(7, s as u64)));
            for (i, j) in tuples {
                let vals: Vec<Complex64> = draws
                    .iter()
                    .map(|u| u[(i[0], j[0])] * u[(i[1], j[1])] * (u[(i[2], j[2])] * u[(i[3], j[3])]).conj())
                    .collect();
                let mean = vals.iter().sum::<Complex64>() / samples as f64;
                let var = vals.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (samples - 1) as f64;
                let se = (var / samples as f64).sqrt();
                let h = haar_second_moment_entry(d, i, j).unwrap();
                assert!((mean - h).norm() <= 5.0 * se + 1e-12, "d={d} {i:?} {j:?}: {mean} vs {h}");
            }
        }
    }

    #[test]
    fn pair_index_is_inverse_of_list() {
        let pairs = Pairs::new(3);
        for (p, &(a, b)) in pairs.list.iter().enumerate() {
            assert_eq!(pairs.index(a, b), p);
            assert_eq!(pairs.index(b, a), p);
        }
    }

    /// Direct d⁸ scan oracle.
    fn brute_force_epsilon(d: usize, samples: usize, seed: u64, sampler: impl Fn(&mut ChaCha8Rng) -> DMatrix<Complex64>) -> f64 {
        let us: Vec<DMatrix<Complex64>> = (0..samples).map(|s| sampler(&mut task_rng(seed, s as u64))).collect();
        let mut best = 0.0f64;
        let idx = |x: usize, k: usize| (x / d.pow(k as u32)) % d;
        for x in 0..d.pow(8) {
            let i = [idx(x, 0), idx(x, 1), idx(x, 2), idx(x, 3)];
            let j = [idx(x, 4), idx(x, 5), idx(x, 6), idx(x, 7)];
            let emp = us
                .iter()
                .map(|u| u[(i[0], j[0])] * u[(i[1], j[1])] * (u[(i[2], j[2])] * u[(i[3], j[3])]).conj())
                .sum::<Complex64>()
                / samples as f64;
            best = best.max((emp - haar_entry(d as f64, i, j)).norm());
        }
        (d * d) as f64 * best
    }

    #[test]
    fn gram_scan_matches_brute_force() {
        let block = ansatz_block(AnsatzKind::StronglyEntangling { reps: 1 }, 2).unwrap();
        let fast = empirical_epsilon_monomial(&block, 300, 5).unwrap();
        let slow = brute_force_epsilon(4, 300, 5, block_sampler(&block));
        assert!((fast.epsilon_m - slow).abs() < 1e-12, "{} {}", fast.epsilon_m, slow);
        assert!(!fast.streamed);
        assert_eq!(fast.warnings.len(), 1);
    }

    #[test]
    fn streamed_bands_match_single_pass() {
        let block = ansatz_block(AnsatzKind::SimplifiedTwoDesign { depth: 1 }, 3).unwrap();
        let s = block_sampler(&block);
        let one = epsilon_monomial_banded(8, 200, 3, &s, usize::MAX).unwrap();
        let many = epsilon_monomial_banded(8, 200, 3, &s, 1).unwrap();
        assert!(many.streamed);
        assert_eq!(one.epsilon_m, many.epsilon_m);
        assert_eq!(one.argmax, many.argmax);
    }

    #[test]
    fn diagonal_ensemble_is_far_from_haar() {
        // Single RZ: |U11| = 1 always, Haar gives E|U11|⁴ = 1/3.
        let block = TrainableBlock {
            kind: AnsatzKind::StronglyEntangling { reps: 1 },
            n_qubits: 1,
            gates: vec![Gate::Rot { axis: Axis::Z, qubit: 0, angle: Angle::Param(0) }],
            n_params: 1,
            haar_dims: vec![],
        };
        let r = empirical_epsilon_monomial(&block, 2000, 1).unwrap();
        assert!(r.epsilon_m >= 4.0 * 2.0 / 3.0 - 1e-12, "{}", r.epsilon_m);
        assert!(empirical_epsilon_spectral(&block, 2000, 1).unwrap() > 0.1);
    }

    #[test]
    fn haar_ensemble_is_consistent_with_zero() {
        let r = epsilon_monomial_with(2, 100_000, 9, haar_sampler(2)).unwrap();
        assert!(r.epsilon_m <= 5.0 * r.stderr, "{} vs {}", r.epsilon_m, r.stderr);
        let e = epsilon_spectral_with(2, 100_000, 9, haar_sampler(2)).unwrap();
        assert!(e < 0.02, "{e}");
    }

    #[test]
    fn stderr_shrinks_with_samples() {
        let block = ansatz_block(AnsatzKind::StronglyEntangling { reps: 2 }, 2).unwrap();
        let a = empirical_epsilon_monomial(&block, 2000, 4).unwrap();
        let b = empirical_epsilon_monomial(&block, 4000, 4).unwrap();
        assert!(b.stderr < a.stderr);
        assert_eq!(a, empirical_epsilon_monomial(&block, 2000, 4).unwrap());
    }

    #[test]
    fn connectivity_orders_epsilon() {
        let local = ansatz_block(AnsatzKind::LocalBlocks { m: 1, rows: 1, reps: 5 }, 2).unwrap();
        let sel = ansatz_block(AnsatzKind::StronglyEntangling { reps: 5 }, 2).unwrap();
        let a = empirical_epsilon_monomial(&local, 20_000, 2).unwrap();
        let b = empirical_epsilon_monomial(&sel, 20_000, 2).unwrap();
        assert!(a.epsilon_m > b.epsilon_m, "{} {}", a.epsilon_m, b.epsilon_m);
    }

    #[test]
    fn spectral_dominated_by_monomial() {
        // ‖Δ‖∞ ≤ d⁴ · max|Δ_ij| = d² ε_M.
        for (k, kind) in [
            AnsatzKind::StronglyEntangling { reps: 1 },
            AnsatzKind::StronglyEntangling { reps: 3 },
            AnsatzKind::SimplifiedTwoDesign { depth: 1 },
            AnsatzKind::SimplifiedTwoDesign { depth: 3 },
            AnsatzKind::LocalBlocks { m: 1, rows: 1, reps: 2 },
        ]
        .into_iter()
        .enumerate()
        {
            let block = ansatz_block(kind, 2).unwrap();
            let m = empirical_epsilon_monomial(&block, 1000, k as u64).unwrap();
            let s = empirical_epsilon_spectral(&block, 1000, k as u64).unwrap();
            assert!(s <= 16.0 * m.epsilon_m + 1e-12, "{kind:?}: {s} {}", m.epsilon_m);
        }
        assert!(epsilon_spectral_with(16, 10, 0, haar_sampler(16)).is_err());
    }

    #[test]
    fn spectral_matches_dense_svd() {
        let block = ansatz_block(AnsatzKind::LocalBlocks { m: 1, rows: 1, reps: 1 }, 1).unwrap();
        let s = block_sampler(&block);
        let fast = epsilon_spectral_with(2, 500, 6, &s).unwrap();
        let us: Vec<DMatrix<Complex64>> = (0..500).map(|i| s(&mut task_rng(6, i))).collect();
        let delta = DMatrix::from_fn(16, 16, |r, c| {
            let i = [r >> 3, (r >> 2) & 1, (r >> 1) & 1, r & 1];
            let j = [c >> 3, (c >> 2) & 1, (c >> 1) & 1, c & 1];
            let emp = us
                .iter()
                .map(|u| u[(i[0], j[0])] * u[(i[1], j[1])] * (u[(i[2], j[2])] * u[(i[3], j[3])]).conj())
                .sum::<Complex64>()
                / 500.0;
            Complex64::new(haar_entry(2.0, i, j), 0.0) - emp
        });
        let top = delta.singular_values().max();
        assert!((fast - top).abs() < 1e-8, "{fast} {top}");
    }
}
