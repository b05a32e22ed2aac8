//! Gradient-descent fitting of a model onto `offset + amplitude·cos(ω_t x)`.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate};
use crate::error::{QfmError, Result};
use crate::fourier::{Extractor, SamplingGrid};
use crate::rng::{par_map, task_rng};
use crate::simulator::{evaluate_grid, gradient_grid, Observable, ObservableKind, Params, StateVector};
use crate::spectrum::full_redundancy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    Sgd,
}

impl std::str::FromStr for Optimizer {
    type Err = QfmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Optimizer::Adam),
            "sgd" => Ok(Optimizer::Sgd),
            _ => Err(QfmError::InvalidArgument(format!("unknown optimizer '{s}' (expected adam or sgd)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Physical target frequency.
    pub omega: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub offset: f64,
    /// Grid points over one period; `None` uses the Nyquist count.
    #[serde(default)]
    pub grid: Option<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Coefficient snapshot every this many epochs (0 disables).
    pub snapshot_period: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            omega: 1.0,
            amplitude: 0.2,
            offset: 0.25,
            grid: None,
            epochs: 300,
            lr: 0.02,
            optimizer: Optimizer::Adam,
            seed: 0,
            snapshot_period: 10,
        }
    }
}

impl TrainConfig {
    pub fn target(&self, x: f64) -> f64 {
        self.offset + self.amplitude * (self.omega * x).cos()
    }
}

/// `|c_ω|` for every `ω ≥ 0` at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: usize,
    /// `(physical ω, |c_ω|)`.
    pub coeffs: Vec<(f64, f64)>,
    pub sum_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Loss before each update, then the final loss (`epochs + 1` values).
    pub loss: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub initial: Vec<f64>,
    pub final_params: Vec<f64>,
    /// Largest |parameter shift − central difference| at the start.
    pub gradient_check: f64,
    /// Whether the FFT amplitude path was used.
    pub fast_path: bool,
}

impl TrainTrace {
    pub fn final_loss(&self) -> f64 {
        *self.loss.last().expect("trace has a loss")
    }
}

/// `|⟨0|W₂ D(x) W₁|0⟩|²` on a uniform grid, with diagonal `D` binned onto an FFT.
struct FastModel {
    pre: Range<usize>,
    post: Range<usize>,
    bins: Vec<usize>,
    fft: Arc<dyn Fft<f64>>,
    size: usize,
    n_qubits: usize,
}

impl FastModel {
    fn new(circuit: &Circuit, obs: &Observable, grid: &SamplingGrid, size: usize) -> Option<FastModel> {
        if obs.kind != ObservableKind::GlobalZero || circuit.encoding.n_layers() != 1 {
            return None;
        }
        let enc: Vec<usize> = (0..circuit.gates.len())
            .filter(|&i| matches!(circuit.gates[i], Gate::Encoding { .. }))
            .collect();
        let (&first, &last) = (enc.first()?, enc.last()?);
        if last - first + 1 != enc.len() {
            return None;
        }
        let diag = circuit.encoding.layers[0].diagonal();
        let lo = *diag.iter().min()?;
        let bins: Vec<usize> = diag.iter().map(|&l| ((l - lo) / grid.step) as usize).collect();
        if bins.iter().any(|&b| b >= size) {
            return None;
        }
        Some(FastModel {
            pre: 0..first,
            post: last + 1..circuit.gates.len(),
            bins,
            fft: FftPlanner::new().plan_fft_forward(size),
            size,
            n_qubits: circuit.n_qubits,
        })
    }

    fn front(&self, circuit: &Circuit, params: &Params) -> Vec<Complex64> {
        let mut psi = StateVector::zero(self.n_qubits);
        psi.apply_gates(&circuit.gates[self.pre.clone()], params, 0.0);
        psi.amps
    }

    fn back(&self, circuit: &Circuit, params: &Params) -> Vec<Complex64> {
        let mut psi = StateVector::zero(self.n_qubits);
        for g in circuit.gates[self.post.clone()].iter().rev() {
            psi.apply(g, params, 0.0, true);
        }
        psi.amps
    }

    fn values(&self, a: &[Complex64], b: &[Complex64]) -> Vec<f64> {
        let mut buf = vec![Complex64::default(); self.size];
        for ((ai, bi), &u) in a.iter().zip(b).zip(&self.bins) {
            buf[u] += bi.conj() * ai;
        }
        self.fft.process(&mut buf);
        buf.into_iter().map(|z| z.norm_sqr()).collect()
    }
}

enum Engine {
    Fast(FastModel),
    Generic(Vec<f64>),
}

impl Engine {
    fn values(&self, circuit: &Circuit, obs: &Observable, params: &Params) -> Result<Vec<f64>> {
        match self {
            Engine::Fast(m) => Ok(m.values(&m.front(circuit, params), &m.back(circuit, params))),
            Engine::Generic(xs) => evaluate_grid(circuit, params, obs, xs),
        }
    }

    /// `out[i][k] = ∂f(x_k)/∂θ_i` by parameter shift.
    fn gradients(&self, circuit: &Circuit, obs: &Observable, params: &Params) -> Result<Vec<Vec<f64>>> {
        let m = match self {
            Engine::Fast(m) => m,
            Engine::Generic(xs) => return gradient_grid(circuit, params, obs, xs),
        };
        if circuit.slot_usage().iter().any(|&u| u != 1) {
            return Err(QfmError::Unsupported(
                "parameter shift needs every slot to drive exactly one Pauli rotation".into(),
            ));
        }
        let in_pre: Vec<bool> = {
            let mut v = vec![false; circuit.n_params];
            for g in &circuit.gates[m.pre.clone()] {
                if let Gate::Rot { angle: crate::circuit::Angle::Param(s), .. } = g {
                    v[*s] = true;
                }
            }
            v
        };
        let a0 = m.front(circuit, params);
        let b0 = m.back(circuit, params);
        let shift = std::f64::consts::FRAC_PI_2;
        Ok(par_map(circuit.n_params, |i| {
            let mut p = params.clone();
            let mut eval = |delta: f64| {
                p.angles[i] = params.angles[i] + delta;
                if in_pre[i] {
                    m.values(&m.front(circuit, &p), &b0)
                } else {
                    m.values(&a0, &m.back(circuit, &p))
                }
            };
            let plus = eval(shift);
            let minus = eval(-shift);
            plus.iter().zip(&minus).map(|(a, b)| (a - b) / 2.0).collect()
        }))
    }
}

fn mse(values: &[f64], target: &[f64]) -> f64 {
    values.iter().zip(target).map(|(f, y)| (f - y).powi(2)).sum::<f64>() / values.len() as f64
}

/// Rejects targets outside the model spectrum, suggesting the nearest ones.
pub fn check_target(circuit: &Circuit, omega: f64) -> Result<i64> {
    let table = full_redundancy(&circuit.encoding)?;
    let scale = table.lattice_scale() as f64;
    let lattice = (omega * scale).round();
    let on_lattice = (omega * scale - lattice).abs() <= 1e-9 * (1.0 + lattice.abs());
    if on_lattice && table.get(lattice as i64) > 0 {
        return Ok(lattice as i64);
    }
    Err(QfmError::FrequencyNotInSpectrum {
        omega,
        nearest: table
            .nearest(lattice as i64, 3)
            .into_iter()
            .map(|w| table.physical(w))
            .collect(),
    })
}

/// `|c_ω|` snapshots for a parameter history of `(epoch, angles)`.
pub fn coefficient_trace(
    circuit: &Circuit,
    obs: &Observable,
    base: &Params,
    history: &[(usize, Vec<f64>)],
) -> Result<Vec<Snapshot>> {
    let ex = Extractor::for_circuit(circuit)?;
    history
        .iter()
        .map(|(epoch, angles)| {
            let p = Params {
                angles: angles.clone(),
                unitaries: base.unitaries.clone(),
            };
            let cs = ex.extract(circuit, &p, obs)?;
            Ok(Snapshot {
                epoch: *epoch,
                coeffs: cs
                    .coeffs
                    .iter()
                    .filter(|(&w, _)| w >= 0)
                    .map(|(&w, c)| (cs.grid.physical(w), c.norm()))
                    .collect(),
                sum_sq: cs.sum_sq(),
            })
        })
        .collect()
}

/// Max |parameter shift − central difference| of `f` at `x` over the first
/// `count` slots.
pub fn gradient_spot_check(circuit: &Circuit, obs: &Observable, params: &Params, x: f64, count: usize) -> Result<f64> {
    let shift = crate::simulator::gradient(circuit, params, obs, x)?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..count.min(circuit.n_params) {
        let mut p = params.clone();
        p.angles[i] += h;
        let plus = crate::simulator::evaluate(circuit, &p, obs, x)?;
        p.angles[i] -= 2.0 * h;
        let minus = crate::simulator::evaluate(circuit, &p, obs, x)?;
        worst = worst.max((shift[i] - (plus - minus) / (2.0 * h)).abs());
    }
    Ok(worst)
}

pub fn train(circuit: &Circuit, obs: &Observable, config: &TrainConfig) -> Result<TrainTrace> {
    if !(config.lr > 0.0) || !config.amplitude.is_finite() || !config.offset.is_finite() {
        return Err(QfmError::InvalidArgument("learning rate must be positive and the target finite".into()));
    }
    check_target(circuit, config.omega)?;
    let nyquist = SamplingGrid::for_encoding(&circuit.encoding)?;
    let size = config.grid.unwrap_or(nyquist.n_points());
    if size < nyquist.n_points() {
        return Err(QfmError::InvalidArgument(format!(
            "grid of {size} points is below the Nyquist count {}",
            nyquist.n_points()
        )));
    }
    let period = std::f64::consts::TAU * nyquist.lattice_scale as f64 / nyquist.step as f64;
    let xs: Vec<f64> = (0..size).map(|k| period * k as f64 / size as f64).collect();
    let target: Vec<f64> = xs.iter().map(|&x| config.target(x)).collect();
    let engine = match FastModel::new(circuit, obs, &nyquist, size) {
        Some(m) => Engine::Fast(m),
        None => Engine::Generic(xs.clone()),
    };
    let mut params = Params::sample(circuit, &mut task_rng(config.seed, 0));
    let initial = params.angles.clone();
    let gradient_check = gradient_spot_check(circuit, obs, &params, xs[size / 3], 8)?;

    let np = circuit.n_params;
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m1 = vec![0.0; np];
    let mut m2 = vec![0.0; np];
    let mut loss = Vec::with_capacity(config.epochs + 1);
    let mut history = Vec::new();
    let snap = |e: usize| config.snapshot_period > 0 && e % config.snapshot_period == 0;
    for epoch in 0..config.epochs {
        if snap(epoch) {
            history.push((epoch, params.angles.clone()));
        }
        let values = engine.values(circuit, obs, &params)?;
        loss.push(mse(&values, &target));
        let grads = engine.gradients(circuit, obs, &params)?;
        let resid: Vec<f64> = values.iter().zip(&target).map(|(f, y)| 2.0 * (f - y) / size as f64).collect();
        for (i, gi) in grads.iter().enumerate() {
            let g: f64 = gi.iter().zip(&resid).map(|(a, r)| a * r).sum();
            match config.optimizer {
                Optimizer::Sgd => params.angles[i] -= config.lr * g,
                Optimizer::Adam => {
                    let t = (epoch + 1) as i32;
                    m1[i] = b1 * m1[i] + (1.0 - b1) * g;
                    m2[i] = b2 * m2[i] + (1.0 - b2) * g * g;
                    let mh = m1[i] / (1.0 - b1.powi(t));
                    let vh = m2[i] / (1.0 - b2.powi(t));
                    params.angles[i] -= config.lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
    if snap(config.epochs) {
        history.push((config.epochs, params.angles.clone()));
    }
    loss.push(mse(&engine.values(circuit, obs, &params)?, &target));
    if let Some(bad) = loss.iter().position(|l| !l.is_finite()) {
        return Err(QfmError::InvalidArgument(format!("loss diverged at epoch {bad}")));
    }
    let snapshots = coefficient_trace(circuit, obs, &params, &history)?;
    Ok(TrainTrace {
        loss,
        snapshots,
        initial,
        final_params: params.angles,
        gradient_check,
        fast_path: matches!(engine, Engine::Fast(_)),
    })
}
