//! Closed-form moments and bounds for Fourier coefficients under 2-design
//! assumptions on the trainable blocks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{QfmError, Result};
use crate::simulator::Observable;
use crate::spectrum::{layer_spectrum, partial_redundancy, EncodingSpec, RedundancyTable};

/// Observable scalars entering every formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub d: f64,
    pub trace: f64,
    pub norm2_sq: f64,
    pub norm_inf: f64,
    pub norm1: f64,
    /// `Σ_{lk} |[O⊗O]_{lk}| / d²`.
    pub c2: f64,
}

impl TheoryInputs {
    pub fn from_observable(obs: &Observable) -> TheoryInputs {
        TheoryInputs {
            d: obs.dim() as f64,
            trace: obs.trace,
            norm2_sq: obs.norm2_sq,
            norm_inf: obs.norm_inf,
            norm1: obs.norm1,
            c2: obs.c2(),
        }
    }

    /// `(d‖O‖₂² − Tr²) / (d(d²−1))`.
    pub fn c1(&self) -> f64 {
        let d = self.d;
        (d * self.norm2_sq - self.trace * self.trace) / (d * (d * d - 1.0))
    }

    /// `(d Tr² − ‖O‖₂²) / (d(d²−1))`.
    pub fn k1(&self) -> f64 {
        let d = self.d;
        (d * self.trace * self.trace - self.norm2_sq) / (d * (d * d - 1.0))
    }

    /// `(d‖O‖₂² − Tr²) / d²`.
    pub fn alpha(&self) -> f64 {
        (self.d * self.norm2_sq - self.trace * self.trace) / (self.d * self.d)
    }

    /// Slope of the single-layer variance in `R(ω)`.
    pub fn single_layer_slope(&self) -> f64 {
        self.c1() / (self.d * (self.d + 1.0))
    }
}

/// A formula value; `approximate` marks outputs clamped or built from "≃" steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryValue {
    pub value: f64,
    pub raw: f64,
    pub approximate: bool,
}

impl TheoryValue {
    fn exact(v: f64) -> Self {
        TheoryValue {
            value: v,
            raw: v,
            approximate: false,
        }
    }

    pub fn flag(&self) -> &'static str {
        if self.approximate {
            "approximate"
        } else {
            "exact"
        }
    }
}

/// `E[c_ω] = Tr(O)/d · δ_ω⁰`.
pub fn mean_2design(t: &TheoryInputs, omega: i64) -> f64 {
    if omega == 0 {
        t.trace / t.d
    } else {
        0.0
    }
}

/// Single-layer variance `C₁·R/(d(d+1)) + (Tr² − d‖O‖₂²)/(d²(d²−1))·δ_ω⁰`.
/// At `ω = 0` the value is clamped at zero and flagged approximate.
pub fn var_2design_single(t: &TheoryInputs, omega: i64, r: u128) -> TheoryValue {
    let d = t.d;
    let main = t.single_layer_slope() * r as f64;
    if omega != 0 {
        return TheoryValue::exact(main);
    }
    let raw = main + (t.trace * t.trace - d * t.norm2_sq) / (d * d * (d * d - 1.0));
    TheoryValue {
        value: raw.max(0.0),
        raw,
        approximate: true,
    }
}

/// Informal form `α·R̃/d − α/d²·δ_ω⁰` with `R̃ = R/d²`.
pub fn var_2design_informal(t: &TheoryInputs, omega: i64, r: u128) -> f64 {
    let d = t.d;
    let a = t.alpha();
    let dc = if omega == 0 { a / (d * d) } else { 0.0 };
    a * r as f64 / (d * d * d) - dc
}

/// `R_j^L` for `j = 1..=L`.
pub fn reuploading_tables(spec: &EncodingSpec) -> Result<Vec<RedundancyTable>> {
    let l = spec.n_layers();
    (1..=l)
        .map(|j| partial_redundancy(spec, j, l).map(|p| p.table))
        .collect()
}

/// Reuploading variance
/// `C₁[(R₁ᴸ − R₂ᴸ)/(d(d+1)(d²−1)^{L−1}) + Σ_{j≥3} R_jᴸ/(d(d²−1)^{L−j+2})] + δ-term`,
/// from the tables returned by [`reuploading_tables`].
pub fn var_2design_reuploading(t: &TheoryInputs, omega: i64, tables: &[RedundancyTable]) -> TheoryValue {
    let l = tables.len() as i32;
    if l == 0 {
        return TheoryValue::exact(0.0);
    }
    if l == 1 {
        return var_2design_single(t, omega, tables[0].get(omega));
    }
    let d = t.d;
    let dd = d * d - 1.0;
    let r = |j: usize| tables.get(j - 1).map_or(0.0, |tb| tb.get(omega) as f64);
    let mut bracket = (r(1) - r(2)) / (d * (d + 1.0) * dd.powi(l - 1));
    for j in 3..=l as usize {
        bracket += r(j) / (d * dd.powi(l - j as i32 + 2));
    }
    let mut raw = t.c1() * bracket;
    if omega == 0 {
        raw += (t.trace * t.trace - d * t.norm2_sq) / (d * d * dd);
    }
    TheoryValue {
        value: raw.max(0.0),
        raw,
        approximate: true,
    }
}

/// Exact variance of every coefficient for independent Haar trainable layers,
/// through the second-moment recursion over encoding layers.
pub fn var_2design_exact(t: &TheoryInputs, spec: &EncodingSpec) -> Result<BTreeMap<i64, f64>> {
    let d = t.d;
    if (d - spec.dim() as f64).abs() > 0.0 {
        return Err(QfmError::InvalidArgument(format!(
            "observable dimension {d} does not match encoding dimension {}",
            spec.dim()
        )));
    }
    let dd = d * d - 1.0;
    let layers: Vec<RedundancyTable> = spec.layers.iter().map(layer_spectrum).collect();
    let Some(first) = layers.first() else {
        let mut out = BTreeMap::new();
        out.insert(0, 0.0);
        return Ok(out);
    };
    let mut a2: BTreeMap<i64, f64> = first
        .iter()
        .map(|(w, r)| (w, r as f64 / (d * (d + 1.0))))
        .collect();
    *a2.entry(0).or_insert(0.0) += 1.0 / (d + 1.0);
    for layer in &layers[1..] {
        let mut next: BTreeMap<i64, f64> = BTreeMap::new();
        for (k, rk) in layer.iter() {
            let alpha = (rk as f64 - if k == 0 { 1.0 } else { 0.0 }) / dd;
            if alpha == 0.0 {
                continue;
            }
            for (&w, &v) in &a2 {
                *next.entry(w + k).or_insert(0.0) += alpha * v;
            }
        }
        for (w, r) in layer.iter() {
            *next.entry(w).or_insert(0.0) -= r as f64 / (d * dd);
        }
        *next.entry(0).or_insert(0.0) += d / dd;
        a2 = next;
    }
    let k2 = t.c1();
    let mean0 = t.trace / d;
    Ok(a2
        .into_iter()
        .map(|(w, a)| {
            let mut v = k2 * a;
            if w == 0 {
                v += t.k1() - mean0 * mean0;
            }
            (w, v)
        })
        .collect())
}

/// Single-layer exact variance; equals [`var_2design_single`] off zero.
pub fn var_2design_single_exact(t: &TheoryInputs, omega: i64, r: u128) -> f64 {
    let d = t.d;
    let mut v = t.single_layer_slope() * r as f64;
    if omega == 0 {
        let mean0 = t.trace / d;
        v += t.c1() / (d + 1.0) + t.k1() - mean0 * mean0;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Diamond,
    Spectral,
    Monomial,
}

impl std::str::FromStr for NormKind {
    type Err = QfmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diamond" => Ok(NormKind::Diamond),
            "spectral" | "infinity" => Ok(NormKind::Spectral),
            "monomial" => Ok(NormKind::Monomial),
            _ => Err(QfmError::InvalidArgument(format!(
                "unknown norm kind '{s}' (expected diamond, spectral or monomial)"
            ))),
        }
    }
}

impl NormKind {
    pub fn name(&self) -> &'static str {
        match self {
            NormKind::Diamond => "diamond",
            NormKind::Spectral => "spectral",
            NormKind::Monomial => "monomial",
        }
    }
}

/// Correction polynomial `Q(ε, R)` for the chosen distance to a 2-design.
pub fn q_polynomial(t: &TheoryInputs, kind: NormKind, eps: f64, r: u128) -> f64 {
    let d = t.d;
    let r = r as f64;
    let c1 = t.c1();
    match kind {
        NormKind::Diamond => {
            c1 * eps + t.norm1 * t.norm1 * eps * eps + t.norm_inf * t.norm_inf * r * eps / (d * (d + 1.0))
        }
        NormKind::Spectral => {
            (c1 + t.norm2_sq / (d * (d + 1.0))) * eps * r.sqrt() + t.norm2_sq * eps * eps * r
        }
        NormKind::Monomial => {
            (c1 / (d * d) + t.c2 / (d * (d + 1.0))) * eps * r + t.c2 / (d * d) * (eps * r).powi(2)
        }
    }
}

/// Exact single-layer 2-design variance plus `Q(ε, R)`.
pub fn bound_approx_2design(t: &TheoryInputs, kind: NormKind, eps: f64, omega: i64, r: u128) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(QfmError::InvalidArgument(format!("ε must be nonnegative (got {eps})")));
    }
    Ok(var_2design_single_exact(t, omega, r).max(0.0) + q_polynomial(t, kind, eps, r))
}

/// `‖O‖₂²/d² + ‖O‖₂² ε`.
pub fn bound_model_variance(t: &TheoryInputs, eps: f64) -> f64 {
    t.norm2_sq / (t.d * t.d) + t.norm2_sq * eps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "case")]
pub enum LocalCase {
    /// Site observable with `‖Ô‖₂² = norm2_sq`.
    BoundedNorm { norm2_sq: f64 },
    /// Site observable a projector of rank `rank`.
    Projector { rank: usize },
}

/// Brickwise local 2-design bound `(2^{m+1}/(2^{2m}−1))^{2L₂}·R²`, times
/// `(r/2^m)²` for a rank-`r` projector.
pub fn bound_local_2design(case: LocalCase, m: usize, l2: usize, r_ek: u128) -> Result<f64> {
    if m == 0 {
        return Err(QfmError::InvalidArgument("block size m must be positive".into()));
    }
    let dm = (1u64 << m) as f64;
    let pref = (2.0 * dm / (dm * dm - 1.0)).powi(2 * l2 as i32);
    let r2 = (r_ek as f64).powi(2);
    match case {
        LocalCase::BoundedNorm { norm2_sq } => {
            if norm2_sq > dm * (1.0 + 1e-12) {
                return Err(QfmError::NormPrecondition(format!(
                    "‖Ô‖₂² = {norm2_sq} exceeds 2^m = {dm}"
                )));
            }
            Ok(pref * r2)
        }
        LocalCase::Projector { rank } => {
            if rank == 0 || rank as f64 > dm {
                return Err(QfmError::InvalidArgument(format!(
                    "projector rank must lie in 1..=2^m (got {rank})"
                )));
            }
            Ok(pref * (rank as f64 / dm).powi(2) * r2)
        }
    }
}

/// Light-cone 2-design variance
/// `(Tr Ô² − (Tr Ô)²/2^m)·R_Ek / (2^m (2^{m(L₁+L₂−1)}+1)(2^{2mL₂}−1))`, `ω ≠ 0`.
pub fn var_2design_lightcone(
    m: usize,
    l1: usize,
    l2: usize,
    trace: f64,
    trace_sq: f64,
    omega: i64,
    r_ek: u128,
) -> Result<f64> {
    if omega == 0 {
        return Err(QfmError::Unsupported(
            "the light-cone variance formula covers nonzero frequencies only".into(),
        ));
    }
    if l1 == 0 || l2 == 0 {
        return Err(QfmError::InvalidArgument("light-cone formula needs L1, L2 >= 1".into()));
    }
    let dm = (1u64 << m) as f64;
    let a = 2f64.powi((m * (l1 + l2 - 1)) as i32);
    let b = 2f64.powi((2 * m * l2) as i32);
    Ok((trace_sq - trace * trace / dm) * r_ek as f64 / (dm * (a + 1.0) * (b - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_model_circuit, AnsatzKind};
    use crate::fourier::coefficient_statistics;
    use crate::rng::task_rng;
    use crate::spectrum::{build_encoding, full_redundancy, Strategy};
    use proptest::prelude::*;
    use rand::Rng;

    fn og(n: usize) -> TheoryInputs {
        TheoryInputs::from_observable(&Observable::global_zero(n))
    }

    #[test]
    fn means() {
        assert_eq!(mean_2design(&og(2), 0), 0.25);
        assert_eq!(mean_2design(&og(2), 3), 0.0);
        let z = Observable::custom(nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            num_complex::Complex64::new(1.0, 0.0),
            num_complex::Complex64::new(-1.0, 0.0),
        ])))
        .unwrap();
        assert_eq!(mean_2design(&TheoryInputs::from_observable(&z), 0), 0.0);
    }

    #[test]
    fn single_layer_values() {
        assert!((var_2design_single(&og(1), 1, 1).value - 1.0 / 36.0).abs() < 1e-15);
        for r in [1u128, 3, 7] {
            assert!((var_2design_single(&og(2), 2, r).value - r as f64 / 400.0).abs() < 1e-15);
        }
        assert_eq!(var_2design_single(&og(2), 5, 0).value, 0.0);
        let zero = var_2design_single(&og(1), 0, 2);
        assert!((zero.raw + 1.0 / 36.0).abs() < 1e-15);
        assert_eq!(zero.value, 0.0);
        assert!(zero.approximate);
        assert!((var_2design_single_exact(&og(1), 0, 2) - 1.0 / 36.0).abs() < 1e-15);
        assert!((og(2).c2 - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn exact_recursion_single_layer_matches_closed_form() {
        for n in 1..=3 {
            for strategy in [Strategy::Pauli, Strategy::Golomb] {
                let spec = build_encoding(strategy, n, 1, None).unwrap();
                let table = full_redundancy(&spec).unwrap();
                for obs in [Observable::global_zero(n), Observable::local_zero_average(n)] {
                    let t = TheoryInputs::from_observable(&obs);
                    let exact = var_2design_exact(&t, &spec).unwrap();
                    for (w, r) in table.iter() {
                        assert!((exact[&w] - var_2design_single_exact(&t, w, r)).abs() < 1e-15);
                        if w != 0 {
                            assert!((exact[&w] - var_2design_single(&t, w, r).value).abs() < 1e-15);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reuploading_reduces_to_single() {
        let mut rng = task_rng(1, 0);
        for _ in 0..20 {
            let n = rng.gen_range(1..=4);
            let t = TheoryInputs {
                d: (1u64 << n) as f64,
                trace: rng.gen::<f64>() * 3.0,
                norm2_sq: rng.gen::<f64>() * 5.0 + 0.5,
                norm_inf: 1.0,
                norm1: 1.0,
                c2: 0.1,
            };
            let r: u128 = rng.gen_range(0..50);
            let w = rng.gen_range(-3..=3);
            let table = RedundancyTable::point(w, r, 1);
            let a = var_2design_reuploading(&t, w, &[table]);
            assert_eq!(a, var_2design_single(&t, w, r));
        }
        let spec = build_encoding(Strategy::Pauli, 2, 2, None).unwrap();
        let tables = reuploading_tables(&spec).unwrap();
        assert_eq!(var_2design_reuploading(&og(2), 99, &tables).value, 0.0);
    }

    #[test]
    fn reuploading_closed_form_tracks_exact_recursion() {
        // The "≃" form drops the δ in α_k; off zero it stays within a few percent
        // for pauli at L = 2.
        let spec = build_encoding(Strategy::Pauli, 3, 2, None).unwrap();
        let tables = reuploading_tables(&spec).unwrap();
        let t = og(3);
        let exact = var_2design_exact(&t, &spec).unwrap();
        for (w, r) in tables[0].iter() {
            if w == 0 || r < 10 {
                continue;
            }
            let approx = var_2design_reuploading(&t, w, &tables).value;
            assert!((approx - exact[&w]).abs() / exact[&w] < 0.1, "ω={w}");
        }
    }

    #[test]
    fn exact_recursion_matches_haar_monte_carlo_two_layers() {
        let spec = build_encoding(Strategy::Pauli, 1, 2, None).unwrap();
        let circ = build_model_circuit(&spec, AnsatzKind::Haar).unwrap();
        let obs = Observable::global_zero(1);
        let exact = var_2design_exact(&TheoryInputs::from_observable(&obs), &spec).unwrap();
        let st = coefficient_statistics(&circ, &obs, 20_000, 3).unwrap();
        for e in &st.entries {
            let v = exact.get(&e.omega).copied().unwrap_or(0.0);
            assert!((e.variance - v).abs() <= 4.0 * e.stderr + 1e-12, "ω={} mc={} exact={v}", e.omega, e.variance);
        }
    }

    #[test]
    fn norm_bound_consistency() {
        for n in 1..=4 {
            let spec = build_encoding(Strategy::Pauli, n, 1, None).unwrap();
            let table = full_redundancy(&spec).unwrap();
            let t = og(n);
            let total: f64 = table.iter().map(|(w, r)| var_2design_single(&t, w, r).value).sum();
            assert!(total <= t.norm_inf * t.norm_inf);
        }
    }

    #[test]
    fn bounds_reduce_and_scale() {
        let t = og(2);
        for kind in [NormKind::Diamond, NormKind::Spectral, NormKind::Monomial] {
            let b = bound_approx_2design(&t, kind, 0.0, 3, 5).unwrap();
            assert_eq!(b, var_2design_single(&t, 3, 5).value);
        }
        assert!("frobenius".parse::<NormKind>().is_err());
        assert!((bound_model_variance(&t, 0.0) - 1.0 / 16.0).abs() < 1e-15);
        let t2 = TheoryInputs::from_observable(&Observable::global_zero(2).scaled(2.0));
        assert!((bound_model_variance(&t2, 0.3) - 4.0 * bound_model_variance(&t, 0.3)).abs() < 1e-14);
    }

    #[test]
    fn local_bounds() {
        let b = bound_local_2design(LocalCase::Projector { rank: 1 }, 2, 1, 1).unwrap();
        assert!((b - 64.0 / 3600.0).abs() < 1e-15);
        let b0 = bound_local_2design(LocalCase::Projector { rank: 3 }, 2, 0, 5).unwrap();
        assert!((b0 - (0.75f64).powi(2) * 25.0).abs() < 1e-12);
        assert!(matches!(
            bound_local_2design(LocalCase::BoundedNorm { norm2_sq: 5.0 }, 2, 1, 1),
            Err(QfmError::NormPrecondition(_))
        ));
        let v = var_2design_lightcone(2, 1, 1, 1.0, 1.0, 2, 7).unwrap();
        assert!((v - 7.0 / 400.0).abs() < 1e-15);
        assert!(var_2design_lightcone(2, 1, 1, 1.0, 1.0, 0, 7).is_err());
    }

    #[test]
    fn lightcone_value_below_local_bound() {
        for m in 1..=3 {
            for l1 in 1..=3 {
                for l2 in 1..=3 {
                    for r in [1u128, 2, 10, 100] {
                        let v = var_2design_lightcone(m, l1, l2, 1.0, 1.0, 1, r).unwrap();
                        let b = bound_local_2design(LocalCase::Projector { rank: 1 }, m, l2, r).unwrap();
                        assert!(v <= b, "m={m} l1={l1} l2={l2} r={r}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn bounds_monotone(e1 in 0.0f64..1.0, e2 in 0.0f64..1.0, r1 in 0u128..1000, r2 in 0u128..1000, n in 1usize..4) {
            let t = TheoryInputs::from_observable(&Observable::local_zero_average(n));
            let (elo, ehi) = (e1.min(e2), e1.max(e2));
            let (rlo, rhi) = (r1.min(r2), r1.max(r2));
            for kind in [NormKind::Diamond, NormKind::Spectral, NormKind::Monomial] {
                let lo = bound_approx_2design(&t, kind, elo, 1, rlo).unwrap();
                prop_assert!(lo >= 0.0);
                prop_assert!(lo <= bound_approx_2design(&t, kind, ehi, 1, rlo).unwrap());
                prop_assert!(lo <= bound_approx_2design(&t, kind, elo, 1, rhi).unwrap());
            }
            let case = LocalCase::Projector { rank: 1 };
            let a = bound_local_2design(case, n, 1, rlo).unwrap();
            let b = bound_local_2design(case, n, 1, rhi).unwrap();
            prop_assert!(a <= b);
        }
    }
}
