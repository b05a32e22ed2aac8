//! Frequency spectra and redundancies of Hamiltonian encodings.
//!
//! Every eigenvalue is stored as an integer multiple of `1 / lattice_scale`,
//! so frequencies (eigenvalue differences) are exact integers and redundancy
//! counts are exact. Tables map a lattice frequency to the number of ordered
//! eigenvalue-index path pairs that produce it.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{QfmError, Result};

/// Largest number of distinct frequencies a table may hold.
pub const MAX_FREQUENCIES: u128 = 10_000_000;

/// Absolute tolerance used to snap custom eigenvalues onto the lattice.
pub const CUSTOM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Pauli,
    Exponential,
    Golomb,
    Custom,
}

impl std::str::FromStr for Strategy {
    type Err = QfmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pauli" => Ok(Strategy::Pauli),
            "exponential" | "exp" => Ok(Strategy::Exponential),
            "golomb" => Ok(Strategy::Golomb),
            "custom" => Ok(Strategy::Custom),
            other => Err(QfmError::InvalidArgument(format!(
                "unknown encoding strategy '{other}'"
            ))),
        }
    }
}

/// A diagonal encoding block: the eigenvalues of its Hamiltonian, on the lattice.
///
/// The first listed qubit is the most significant bit of the block-local index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingBlock {
    pub qubits: Vec<usize>,
    pub eigenvalues: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingLayer {
    pub n_qubits: usize,
    pub blocks: Vec<EncodingBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub strategy: Strategy,
    pub n_qubits: usize,
    pub lattice_scale: u32,
    pub layers: Vec<EncodingLayer>,
}

/// User-supplied eigenvalues for the custom strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomEigs {
    pub lattice_scale: u32,
    /// `layers[l]` lists `(qubits, eigenvalues)` blocks of layer `l`.
    pub layers: Vec<Vec<(Vec<usize>, Vec<f64>)>>,
}

impl EncodingLayer {
    /// Eigenvalue of the whole layer for each computational basis state.
    ///
    /// Qubit `q` is bit `n - 1 - q` of the basis index.
    pub fn diagonal(&self) -> Vec<i64> {
        let n = self.n_qubits;
        let mut diag = vec![0i64; 1usize << n];
        for (b, slot) in diag.iter_mut().enumerate() {
            for block in &self.blocks {
                *slot += block.eigenvalues[block_index(b, n, &block.qubits)];
            }
        }
        diag
    }
}

/// Index of basis state `b` restricted to `qubits` (first qubit most significant).
pub fn block_index(b: usize, n: usize, qubits: &[usize]) -> usize {
    qubits
        .iter()
        .fold(0usize, |acc, &q| (acc << 1) | ((b >> (n - 1 - q)) & 1))
}

impl EncodingSpec {
    pub fn dim(&self) -> usize {
        1usize << self.n_qubits
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn physical(&self, lattice: i64) -> f64 {
        lattice as f64 / self.lattice_scale as f64
    }

    /// Largest lattice frequency and the gcd of all lattice frequencies.
    pub fn lattice_extent(&self) -> (i64, i64) {
        let mut max = 0i64;
        let mut g = 0i64;
        for layer in &self.layers {
            for block in &layer.blocks {
                let lo = *block.eigenvalues.iter().min().unwrap_or(&0);
                let hi = *block.eigenvalues.iter().max().unwrap_or(&0);
                max += hi - lo;
                for &e in &block.eigenvalues {
                    g = gcd(g, e - lo);
                }
            }
        }
        (max, g)
    }

    fn validate(&self) -> Result<()> {
        if self.lattice_scale == 0 {
            return Err(QfmError::InvalidArgument("lattice_scale must be positive".into()));
        }
        for layer in &self.layers {
            let mut used = vec![false; self.n_qubits];
            for block in &layer.blocks {
                if block.qubits.is_empty() {
                    return Err(QfmError::InvalidArgument("empty encoding block".into()));
                }
                for &q in &block.qubits {
                    if q >= self.n_qubits || used[q] {
                        return Err(QfmError::InvalidArgument(format!(
                            "encoding blocks must partition a subset of qubits 0..{} (qubit {q})",
                            self.n_qubits
                        )));
                    }
                    used[q] = true;
                }
                let expected = 1usize << block.qubits.len();
                if block.eigenvalues.len() != expected {
                    return Err(QfmError::EigenvalueCount {
                        qubits: block.qubits.len(),
                        expected,
                        got: block.eigenvalues.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn pauli_block(q: usize, s: i64) -> EncodingBlock {
    EncodingBlock {
        qubits: vec![q],
        eigenvalues: vec![-s, s],
    }
}

/// Marks of a ruler with all pairwise differences distinct.
///
/// Optimal Golomb rulers up to 16 marks, greedy Sidon (Mian–Chowla) beyond.
pub fn sidon_marks(d: usize) -> Vec<i64> {
    const OPTIMAL: [&[i64]; 5] = [
        &[0],
        &[0, 1],
        &[0, 1, 4, 6],
        &[0, 1, 4, 9, 15, 22, 32, 34],
        &[0, 1, 4, 11, 26, 32, 56, 68, 76, 115, 117, 134, 150, 163, 168, 177],
    ];
    if d.is_power_of_two() && d.trailing_zeros() < OPTIMAL.len() as u32 {
        return OPTIMAL[d.trailing_zeros() as usize].to_vec();
    }
    let mut marks: Vec<i64> = Vec::with_capacity(d);
    let mut diffs = std::collections::HashSet::new();
    let mut candidate = 0i64;
    while marks.len() < d {
        if marks.iter().all(|&m| !diffs.contains(&(candidate - m))) {
            for &m in &marks {
                diffs.insert(candidate - m);
            }
            marks.push(candidate);
        }
        candidate += 1;
    }
    marks
}

/// Builds one of the built-in encodings, or a custom one from `custom`.
pub fn build_encoding(
    strategy: Strategy,
    n: usize,
    layers: usize,
    custom: Option<&CustomEigs>,
) -> Result<EncodingSpec> {
    if n == 0 || layers == 0 {
        return Err(QfmError::InvalidArgument("n and L must be at least 1".into()));
    }
    if n > 24 {
        return Err(QfmError::InvalidArgument(format!("n={n} is too large")));
    }
    let spec = match strategy {
        Strategy::Pauli => EncodingSpec {
            strategy,
            n_qubits: n,
            lattice_scale: 2,
            layers: (0..layers)
                .map(|_| EncodingLayer {
                    n_qubits: n,
                    blocks: (0..n).map(|q| pauli_block(q, 1)).collect(),
                })
                .collect(),
        },
        Strategy::Exponential => {
            if n * layers > 38 {
                return Err(QfmError::InvalidArgument(format!(
                    "exponential scaling 3^{} overflows",
                    n * layers
                )));
            }
            EncodingSpec {
                strategy,
                n_qubits: n,
                lattice_scale: 2,
                layers: (0..layers)
                    .map(|l| EncodingLayer {
                        n_qubits: n,
                        blocks: (0..n)
                            .map(|q| pauli_block(q, 3i64.pow((l * n + q) as u32)))
                            .collect(),
                    })
                    .collect(),
            }
        }
        Strategy::Golomb => {
            if layers != 1 {
                return Err(QfmError::GolombMultiLayer(layers));
            }
            if n > 12 {
                return Err(QfmError::InvalidArgument(format!(
                    "golomb encoding limited to n <= 12 (got {n})"
                )));
            }
            EncodingSpec {
                strategy,
                n_qubits: n,
                lattice_scale: 1,
                layers: vec![EncodingLayer {
                    n_qubits: n,
                    blocks: vec![EncodingBlock {
                        qubits: (0..n).collect(),
                        eigenvalues: sidon_marks(1 << n),
                    }],
                }],
            }
        }
        Strategy::Custom => {
            let custom = custom.ok_or_else(|| {
                QfmError::InvalidArgument("custom strategy requires eigenvalues".into())
            })?;
            custom_encoding(n, layers, custom)?
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn custom_encoding(n: usize, layers: usize, custom: &CustomEigs) -> Result<EncodingSpec> {
    if custom.layers.is_empty() {
        return Err(QfmError::InvalidArgument("custom encoding has no layers".into()));
    }
    if custom.layers.len() != 1 && custom.layers.len() != layers {
        return Err(QfmError::InvalidArgument(format!(
            "custom encoding lists {} layers, expected 1 or {layers}",
            custom.layers.len()
        )));
    }
    let scale = custom.lattice_scale;
    if scale == 0 {
        return Err(QfmError::InvalidArgument("lattice_scale must be positive".into()));
    }
    let snap = |v: f64| -> Result<i64> {
        let scaled = (v * scale as f64).round();
        if (v - scaled / scale as f64).abs() > CUSTOM_TOLERANCE || !scaled.is_finite() {
            return Err(QfmError::NonLattice {
                value: v,
                scale,
                tol: CUSTOM_TOLERANCE,
            });
        }
        Ok(scaled as i64)
    };
    let mut out = Vec::with_capacity(layers);
    for l in 0..layers {
        let src = &custom.layers[if custom.layers.len() == 1 { 0 } else { l }];
        let mut blocks = Vec::with_capacity(src.len());
        for (qubits, eigs) in src {
            let expected = 1usize << qubits.len();
            if eigs.len() != expected {
                return Err(QfmError::EigenvalueCount {
                    qubits: qubits.len(),
                    expected,
                    got: eigs.len(),
                });
            }
            blocks.push(EncodingBlock {
                qubits: qubits.clone(),
                eigenvalues: eigs.iter().map(|&v| snap(v)).collect::<Result<_>>()?,
            });
        }
        out.push(EncodingLayer { n_qubits: n, blocks });
    }
    Ok(EncodingSpec {
        strategy: Strategy::Custom,
        n_qubits: n,
        lattice_scale: scale,
        layers: out,
    })
}

/// Exact frequency → redundancy counts on an integer lattice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundancyTable {
    entries: BTreeMap<i64, u128>,
    total_paths: u128,
    lattice_scale: u32,
}

impl RedundancyTable {
    pub fn from_counts(entries: BTreeMap<i64, u128>, lattice_scale: u32) -> Self {
        let entries: BTreeMap<i64, u128> = entries.into_iter().filter(|&(_, c)| c > 0).collect();
        let total_paths = entries.values().sum();
        RedundancyTable {
            entries,
            total_paths,
            lattice_scale,
        }
    }

    /// Table with a single frequency.
    pub fn point(omega: i64, count: u128, lattice_scale: u32) -> Self {
        Self::from_counts(BTreeMap::from([(omega, count)]), lattice_scale)
    }

    pub fn get(&self, omega: i64) -> u128 {
        self.entries.get(&omega).copied().unwrap_or(0)
    }

    pub fn total_paths(&self) -> u128 {
        self.total_paths
    }

    pub fn lattice_scale(&self) -> u32 {
        self.lattice_scale
    }

    /// Number of distinct frequencies.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, u128)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn frequencies(&self) -> Vec<i64> {
        self.entries.keys().copied().collect()
    }

    pub fn entries(&self) -> &BTreeMap<i64, u128> {
        &self.entries
    }

    pub fn physical(&self, omega: i64) -> f64 {
        omega as f64 / self.lattice_scale as f64
    }

    pub fn normalized(&self, omega: i64) -> f64 {
        self.get(omega) as f64 / self.total_paths as f64
    }

    /// Nonzero frequency with the largest redundancy (smallest |ω| on ties).
    pub fn max_redundancy_nonzero(&self) -> Option<i64> {
        self.entries
            .iter()
            .filter(|(&k, _)| k > 0)
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&k, _)| k)
    }

    /// Up to `count` spectrum frequencies closest to the lattice point `omega`.
    pub fn nearest(&self, omega: i64, count: usize) -> Vec<i64> {
        let mut keys = self.frequencies();
        keys.sort_by_key(|&k| ((k - omega).abs(), k));
        keys.truncate(count);
        keys
    }
}

/// Differences of one eigenvalue list with itself, with multiplicity.
fn difference_table(eigs: &[i64], scale: u32) -> RedundancyTable {
    let mut counts: HashMap<i64, u128> = HashMap::new();
    for &a in eigs {
        for &b in eigs {
            *counts.entry(a - b).or_insert(0) += 1;
        }
    }
    RedundancyTable::from_counts(counts.into_iter().collect(), scale)
}

/// Discrete convolution of two count maps.
pub fn compose(a: &RedundancyTable, b: &RedundancyTable) -> Result<RedundancyTable> {
    if a.lattice_scale != b.lattice_scale {
        return Err(QfmError::LatticeMismatch(a.lattice_scale, b.lattice_scale));
    }
    if a.is_empty() || b.is_empty() {
        return Ok(RedundancyTable::from_counts(BTreeMap::new(), a.lattice_scale));
    }
    let (a_lo, a_hi) = (*a.entries.keys().next().unwrap(), *a.entries.keys().last().unwrap());
    let (b_lo, b_hi) = (*b.entries.keys().next().unwrap(), *b.entries.keys().last().unwrap());
    let span = (a_hi - a_lo + b_hi - b_lo + 1) as u128;
    let pairs = a.len() as u128 * b.len() as u128;
    let bound = span.min(pairs);
    if bound > MAX_FREQUENCIES {
        return Err(QfmError::SpectrumTooLarge {
            size: bound,
            limit: MAX_FREQUENCIES,
        });
    }
    let entries = if span <= 4 * pairs.max(1024) {
        let lo = a_lo + b_lo;
        let mut dense = vec![0u128; span as usize];
        for (&ka, &va) in &a.entries {
            for (&kb, &vb) in &b.entries {
                dense[(ka + kb - lo) as usize] += va * vb;
            }
        }
        dense
            .into_iter()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .map(|(i, c)| (lo + i as i64, c))
            .collect()
    } else {
        let mut counts: HashMap<i64, u128> = HashMap::new();
        for (&ka, &va) in &a.entries {
            for (&kb, &vb) in &b.entries {
                *counts.entry(ka + kb).or_insert(0) += va * vb;
            }
        }
        counts.into_iter().collect()
    };
    Ok(RedundancyTable {
        entries,
        total_paths: a.total_paths * b.total_paths,
        lattice_scale: a.lattice_scale,
    })
}

fn layer_table(layer: &EncodingLayer, scale: u32) -> Result<RedundancyTable> {
    let covered: usize = layer.blocks.iter().map(|b| b.qubits.len()).sum();
    let idle = layer.n_qubits - covered;
    let mut table = RedundancyTable::point(0, 1u128 << (2 * idle), scale);
    for block in &layer.blocks {
        table = compose(&table, &difference_table(&block.eigenvalues, scale))?;
    }
    Ok(table)
}

/// Frequencies of a single encoding layer (lattice scale 1 for a bare layer).
pub fn layer_spectrum(layer: &EncodingLayer) -> RedundancyTable {
    layer_table(layer, 1).expect("same-lattice convolution of a single layer")
}

/// Full redundancy table of the encoding.
pub fn full_redundancy(spec: &EncodingSpec) -> Result<RedundancyTable> {
    fold_layers(spec, 0, spec.n_layers())
}

fn fold_layers(spec: &EncodingSpec, from: usize, to: usize) -> Result<RedundancyTable> {
    let mut table = RedundancyTable::point(0, 1, spec.lattice_scale);
    for layer in &spec.layers[from..to] {
        table = compose(&table, &layer_table(layer, spec.lattice_scale)?)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialRedundancyTable {
    pub from_layer: usize,
    pub to_layer: usize,
    pub table: RedundancyTable,
}

/// Redundancies of layers `h..=l` (1-based, inclusive).
pub fn partial_redundancy(spec: &EncodingSpec, h: usize, l: usize) -> Result<PartialRedundancyTable> {
    if h == 0 || h > l || l > spec.n_layers() {
        return Err(QfmError::LayerRange {
            h,
            l,
            layers: spec.n_layers(),
        });
    }
    Ok(PartialRedundancyTable {
        from_layer: h,
        to_layer: l,
        table: fold_layers(spec, h - 1, l)?,
    })
}

/// Whether stacking the layers in sequence gives the same spectrum as placing
/// all their blocks side by side in a single layer on n·L qubits.
pub fn sequential_parallel_check(spec: &EncodingSpec) -> bool {
    let n = spec.n_qubits;
    let wide = n * spec.n_layers();
    let blocks = spec
        .layers
        .iter()
        .enumerate()
        .flat_map(|(l, layer)| {
            layer.blocks.iter().map(move |b| EncodingBlock {
                qubits: b.qubits.iter().map(|q| q + l * n).collect(),
                eigenvalues: b.eigenvalues.clone(),
            })
        })
        .collect();
    let parallel = EncodingSpec {
        strategy: spec.strategy,
        n_qubits: wide,
        lattice_scale: spec.lattice_scale,
        layers: vec![EncodingLayer {
            n_qubits: wide,
            blocks,
        }],
    };
    match (full_redundancy(spec), full_redundancy(&parallel)) {
        (Ok(a), Ok(b)) => a.entries == b.entries,
        _ => false,
    }
}
