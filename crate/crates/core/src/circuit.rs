//! Circuit layouts: trainable ansätze, encoding layers, brickwise geometry and
//! backward light cones.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QfmError, Result};
use crate::spectrum::{self, EncodingBlock, EncodingLayer, EncodingSpec, RedundancyTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Angle {
    Param(usize),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Rot { axis: Axis, qubit: usize, angle: Angle },
    Cnot { control: usize, target: usize },
    Cz { a: usize, b: usize },
    /// `diag(e^{-i x λ_j})` on `qubits`; eigenvalues in physical units.
    Encoding { qubits: Vec<usize>, eigenvalues: Vec<f64> },
    /// Dense unitary drawn per sample from slot `slot` of the parameters.
    Haar { qubits: Vec<usize>, slot: usize },
    Unitary { qubits: Vec<usize>, matrix: DMatrix<Complex64> },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::Rot { qubit, .. } => vec![*qubit],
            Gate::Cnot { control, target } => vec![*control, *target],
            Gate::Cz { a, b } => vec![*a, *b],
            Gate::Encoding { qubits, .. } | Gate::Haar { qubits, .. } | Gate::Unitary { qubits, .. } => {
                qubits.clone()
            }
        }
    }

    fn remap(&self, qmap: &[usize], param_offset: usize, haar_offset: usize) -> Gate {
        let m = |q: &usize| qmap[*q];
        match self {
            Gate::Rot { axis, qubit, angle } => Gate::Rot {
                axis: *axis,
                qubit: qmap[*qubit],
                angle: match angle {
                    Angle::Param(s) => Angle::Param(s + param_offset),
                    Angle::Fixed(v) => Angle::Fixed(*v),
                },
            },
            Gate::Cnot { control, target } => Gate::Cnot {
                control: qmap[*control],
                target: qmap[*target],
            },
            Gate::Cz { a, b } => Gate::Cz { a: qmap[*a], b: qmap[*b] },
            Gate::Encoding { qubits, eigenvalues } => Gate::Encoding {
                qubits: qubits.iter().map(m).collect(),
                eigenvalues: eigenvalues.clone(),
            },
            Gate::Haar { qubits, slot } => Gate::Haar {
                qubits: qubits.iter().map(m).collect(),
                slot: slot + haar_offset,
            },
            Gate::Unitary { qubits, matrix } => Gate::Unitary {
                qubits: qubits.iter().map(m).collect(),
                matrix: matrix.clone(),
            },
        }
    }
}

/// Family of trainable unitaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnsatzKind {
    StronglyEntangling { reps: usize },
    SimplifiedTwoDesign { depth: usize },
    /// One Haar-random unitary on the whole support.
    Haar,
    /// Rows of `m`-qubit strongly entangling blocks with alternating offsets
    /// and open boundaries; edge blocks shrink to fit.
    LocalBlocks { m: usize, rows: usize, reps: usize },
}

/// A trainable unitary on qubits `0..n_qubits` with local parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableBlock {
    pub kind: AnsatzKind,
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub n_params: usize,
    /// Dimension of each Haar slot.
    pub haar_dims: Vec<usize>,
}

impl TrainableBlock {
    /// CNOT ranges of the entangling rings, in order.
    pub fn entangler_ranges(&self) -> Vec<usize> {
        let n = self.n_qubits;
        self.gates
            .iter()
            .filter_map(|g| match g {
                Gate::Cnot { control: 0, target } => Some(target % n),
                _ => None,
            })
            .collect()
    }
}

/// CNOT range of sub-layer `l` (0-based) of an `n`-qubit strongly entangling block.
pub fn sel_range(l: usize, n: usize) -> usize {
    if n <= 2 {
        1
    } else {
        l % (n - 1) + 1
    }
}

fn rot_gates(gates: &mut Vec<Gate>, q: usize, slot: usize) {
    for (k, axis) in [Axis::Z, Axis::Y, Axis::Z].into_iter().enumerate() {
        gates.push(Gate::Rot {
            axis,
            qubit: q,
            angle: Angle::Param(slot + k),
        });
    }
}

fn sel_gates(n: usize, reps: usize) -> Vec<Gate> {
    let mut gates = Vec::with_capacity(reps * 4 * n);
    for l in 0..reps {
        for q in 0..n {
            rot_gates(&mut gates, q, 3 * (l * n + q));
        }
        if n > 1 {
            let r = sel_range(l, n);
            for q in 0..n {
                gates.push(Gate::Cnot {
                    control: q,
                    target: (q + r) % n,
                });
            }
        }
    }
    gates
}

/// Strongly entangling layers: per sub-layer, a Z·Y·Z rotation on every qubit
/// followed by a ring of CNOTs whose range cycles through 1..n-1.
pub fn strongly_entangling(n: usize, reps: usize) -> Result<TrainableBlock> {
    if n < 2 || reps < 1 {
        return Err(QfmError::InvalidArgument(format!(
            "strongly entangling needs n >= 2 and reps >= 1 (got n={n}, reps={reps})"
        )));
    }
    Ok(TrainableBlock {
        kind: AnsatzKind::StronglyEntangling { reps },
        n_qubits: n,
        gates: sel_gates(n, reps),
        n_params: 3 * n * reps,
        haar_dims: vec![],
    })
}

/// Initial R_Y layer, then `depth` layers of CZ + R_Y pairs on even then odd
/// neighbouring pairs.
pub fn simplified_two_design(n: usize, depth: usize) -> Result<TrainableBlock> {
    if n < 2 {
        return Err(QfmError::InvalidArgument(format!(
            "simplified two-design needs n >= 2 (got {n})"
        )));
    }
    let mut gates = Vec::new();
    let mut slot = 0;
    let mut ry = |gates: &mut Vec<Gate>, q: usize| {
        gates.push(Gate::Rot {
            axis: Axis::Y,
            qubit: q,
            angle: Angle::Param(slot),
        });
        slot += 1;
    };
    for q in 0..n {
        ry(&mut gates, q);
    }
    for _ in 0..depth {
        for start in [0, 1] {
            let mut a = start;
            while a + 1 < n {
                gates.push(Gate::Cz { a, b: a + 1 });
                ry(&mut gates, a);
                ry(&mut gates, a + 1);
                a += 2;
            }
        }
    }
    Ok(TrainableBlock {
        kind: AnsatzKind::SimplifiedTwoDesign { depth },
        n_qubits: n,
        gates,
        n_params: n + depth * 2 * (n - 1),
        haar_dims: vec![],
    })
}

pub fn haar_block(n: usize) -> TrainableBlock {
    TrainableBlock {
        kind: AnsatzKind::Haar,
        n_qubits: n,
        gates: vec![Gate::Haar {
            qubits: (0..n).collect(),
            slot: 0,
        }],
        n_params: 0,
        haar_dims: vec![1 << n],
    }
}

/// Qubit groups of one row of width-`m` blocks starting at `offset` (open boundary).
fn open_row(n: usize, m: usize, offset: usize) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    if offset > 0 {
        groups.push((0..offset.min(n)).collect());
    }
    let mut start = offset;
    while start < n {
        groups.push((start..(start + m).min(n)).collect());
        start += m;
    }
    groups
}

fn local_blocks(n: usize, m: usize, rows: usize, reps: usize) -> Result<TrainableBlock> {
    if m == 0 || rows == 0 || reps == 0 {
        return Err(QfmError::InvalidArgument(
            "local blocks need m, rows and reps >= 1".into(),
        ));
    }
    let kind = AnsatzKind::LocalBlocks { m, rows, reps };
    let rows = if m >= n || m == 1 { 1 } else { rows };
    let mut gates = Vec::new();
    let mut n_params = 0;
    for r in 0..rows {
        let offset = if r % 2 == 1 { m / 2 } else { 0 };
        for group in open_row(n, m.min(n), offset) {
            let k = group.len();
            for g in sel_gates(k, reps) {
                gates.push(g.remap(&group, n_params, 0));
            }
            n_params += 3 * k * reps;
        }
    }
    Ok(TrainableBlock {
        kind,
        n_qubits: n,
        gates,
        n_params,
        haar_dims: vec![],
    })
}

pub fn ansatz_block(kind: AnsatzKind, n: usize) -> Result<TrainableBlock> {
    match kind {
        AnsatzKind::StronglyEntangling { reps } => strongly_entangling(n, reps),
        AnsatzKind::SimplifiedTwoDesign { depth } => simplified_two_design(n, depth),
        AnsatzKind::Haar => Ok(haar_block(n)),
        AnsatzKind::LocalBlocks { m, rows, reps } => local_blocks(n, m, rows, reps),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Trainable,
    Encoding,
}

/// One placed block of the circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub kind: ElementKind,
    pub qubits: Vec<usize>,
    pub gates: std::ops::Range<usize>,
    /// Brick row for brickwise circuits.
    pub row: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub elements: Vec<Element>,
    pub n_params: usize,
    pub haar_dims: Vec<usize>,
    /// Encoding blocks present in the circuit, grouped by layer.
    pub encoding: EncodingSpec,
}

impl Circuit {
    pub fn trainable_count(&self) -> usize {
        self.elements.iter().filter(|e| e.kind == ElementKind::Trainable).count()
    }

    pub fn encoding_count(&self) -> usize {
        self.elements.iter().filter(|e| e.kind == ElementKind::Encoding).count()
    }

    /// Index of the first gate that depends on `x`.
    pub fn first_encoding_gate(&self) -> usize {
        self.gates
            .iter()
            .position(|g| matches!(g, Gate::Encoding { .. }))
            .unwrap_or(self.gates.len())
    }

    /// Number of gates reading each parameter slot.
    pub fn slot_usage(&self) -> Vec<usize> {
        let mut usage = vec![0; self.n_params];
        for g in &self.gates {
            if let Gate::Rot {
                angle: Angle::Param(s),
                ..
            } = g
            {
                usage[*s] += 1;
            }
        }
        usage
    }
}

struct Builder {
    n: usize,
    gates: Vec<Gate>,
    elements: Vec<Element>,
    n_params: usize,
    haar_dims: Vec<usize>,
}

impl Builder {
    fn new(n: usize) -> Self {
        Builder {
            n,
            gates: Vec::new(),
            elements: Vec::new(),
            n_params: 0,
            haar_dims: Vec::new(),
        }
    }

    fn trainable(&mut self, block: &TrainableBlock, qubits: &[usize], row: Option<usize>) {
        let start = self.gates.len();
        for g in &block.gates {
            self.gates
                .push(g.remap(qubits, self.n_params, self.haar_dims.len()));
        }
        self.n_params += block.n_params;
        self.haar_dims.extend_from_slice(&block.haar_dims);
        self.elements.push(Element {
            kind: ElementKind::Trainable,
            qubits: qubits.to_vec(),
            gates: start..self.gates.len(),
            row,
        });
    }

    fn encoding(&mut self, qubits: &[usize], eigenvalues: Vec<f64>, row: Option<usize>) {
        let start = self.gates.len();
        self.gates.push(Gate::Encoding {
            qubits: qubits.to_vec(),
            eigenvalues,
        });
        self.elements.push(Element {
            kind: ElementKind::Encoding,
            qubits: qubits.to_vec(),
            gates: start..start + 1,
            row,
        });
    }

    fn finish(self, encoding: EncodingSpec) -> Circuit {
        Circuit {
            n_qubits: self.n,
            gates: self.gates,
            elements: self.elements,
            n_params: self.n_params,
            haar_dims: self.haar_dims,
            encoding,
        }
    }
}

fn physical(block: &EncodingBlock, scale: u32) -> Vec<f64> {
    block
        .eigenvalues
        .iter()
        .map(|&e| e as f64 / scale as f64)
        .collect()
}

/// `W^{L+1} S^L(x) W^L ... S^1(x) W^1` with one ansatz instance per trainable layer.
pub fn build_model_circuit(spec: &EncodingSpec, ansatz: AnsatzKind) -> Result<Circuit> {
    let n = spec.n_qubits;
    let block = ansatz_block(ansatz, n)?;
    let all: Vec<usize> = (0..n).collect();
    let mut b = Builder::new(n);
    b.trainable(&block, &all, None);
    for layer in &spec.layers {
        for enc in &layer.blocks {
            b.encoding(&enc.qubits, physical(enc, spec.lattice_scale), None);
        }
        b.trainable(&block, &all, None);
    }
    Ok(b.finish(spec.clone()))
}

/// A circuit with no encoding: just one trainable block.
pub fn block_circuit(block: &TrainableBlock) -> Circuit {
    let mut b = Builder::new(block.n_qubits);
    let all: Vec<usize> = (0..block.n_qubits).collect();
    b.trainable(block, &all, None);
    b.finish(EncodingSpec {
        strategy: spectrum::Strategy::Custom,
        n_qubits: block.n_qubits,
        lattice_scale: 1,
        layers: vec![],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrickwiseLayout {
    pub n_qubits: usize,
    pub m: usize,
    pub l1: usize,
    pub l2: usize,
    /// Brick index of the observable in the final row.
    pub site: usize,
}

impl BrickwiseLayout {
    fn validate(&self) -> Result<()> {
        let BrickwiseLayout { n_qubits: n, m, .. } = *self;
        if m == 0 || n == 0 || n % m != 0 {
            return Err(QfmError::Layout(format!("n={n} must be a positive multiple of m={m}")));
        }
        let offset_rows = (self.l1 > 1) || (self.l2 > 1);
        if offset_rows && m > 1 && m % 2 == 1 {
            return Err(QfmError::Layout(format!("odd m={m} cannot be staggered by m/2")));
        }
        if self.site >= n / m {
            return Err(QfmError::Layout(format!(
                "site {} out of range for {} bricks per row",
                self.site,
                n / m
            )));
        }
        Ok(())
    }

    /// Total rows: pre-encoding, encoding, post-encoding.
    pub fn rows(&self) -> usize {
        self.l1 + 1 + self.l2
    }

    /// Offset of a row in units of m/2.
    pub fn row_offset(&self, row: usize) -> usize {
        if row < self.l1 {
            (self.l1 - 1 - row) % 2
        } else if row == self.l1 {
            0
        } else {
            (row - self.l1 - 1) % 2
        }
    }

    /// Qubits of every brick in a row (circular wrap).
    pub fn row_bricks(&self, row: usize) -> Vec<Vec<usize>> {
        let n = self.n_qubits;
        let shift = self.row_offset(row) * (self.m / 2);
        (0..n / self.m)
            .map(|b| (0..self.m).map(|t| (shift + b * self.m + t) % n).collect())
            .collect()
    }

    /// Qubits carrying the local observable.
    pub fn site_qubits(&self) -> Vec<usize> {
        self.row_bricks(self.rows() - 1)[self.site].clone()
    }
}

/// Brickwise circuit: `l1` rows of trainable bricks, one row of encoding
/// bricks, `l2` rows of trainable bricks.
pub fn build_brickwise(
    layout: &BrickwiseLayout,
    spec: &EncodingSpec,
    brick: AnsatzKind,
) -> Result<Circuit> {
    layout.validate()?;
    if spec.n_qubits != layout.n_qubits || spec.n_layers() != 1 {
        return Err(QfmError::Layout(
            "brickwise circuits need a single encoding layer on the same qubits".into(),
        ));
    }
    let m = layout.m;
    let block = ansatz_block(brick, m).or_else(|_| match brick {
        AnsatzKind::StronglyEntangling { reps } if m == 1 => {
            ansatz_block(AnsatzKind::LocalBlocks { m: 1, rows: 1, reps }, 1)
        }
        _ => Err(QfmError::Layout(format!("ansatz unavailable on {m}-qubit bricks"))),
    })?;
    let enc_bricks = encoding_bricks(layout, &spec.layers[0])?;
    let mut b = Builder::new(layout.n_qubits);
    let mut merged = Vec::new();
    for row in 0..layout.rows() {
        if row == layout.l1 {
            for (qubits, eigs) in &enc_bricks {
                b.encoding(qubits, eigs.iter().map(|&e| e as f64 / spec.lattice_scale as f64).collect(), Some(row));
                merged.push(EncodingBlock {
                    qubits: qubits.clone(),
                    eigenvalues: eigs.clone(),
                });
            }
        } else {
            for qubits in layout.row_bricks(row) {
                b.trainable(&block, &qubits, Some(row));
            }
        }
    }
    let encoding = EncodingSpec {
        strategy: spec.strategy,
        n_qubits: layout.n_qubits,
        lattice_scale: spec.lattice_scale,
        layers: vec![EncodingLayer {
            n_qubits: layout.n_qubits,
            blocks: merged,
        }],
    };
    Ok(b.finish(encoding))
}

/// Groups the encoding blocks into one diagonal per encoding-row brick.
fn encoding_bricks(layout: &BrickwiseLayout, layer: &EncodingLayer) -> Result<Vec<(Vec<usize>, Vec<i64>)>> {
    let bricks = layout.row_bricks(layout.l1);
    let mut out = Vec::with_capacity(bricks.len());
    let mut owner = vec![usize::MAX; layout.n_qubits];
    for (i, brick) in bricks.iter().enumerate() {
        for &q in brick {
            owner[q] = i;
        }
    }
    for block in &layer.blocks {
        let home = owner[block.qubits[0]];
        if block.qubits.iter().any(|&q| owner[q] != home) {
            return Err(QfmError::Layout(format!(
                "encoding block on qubits {:?} straddles two bricks",
                block.qubits
            )));
        }
    }
    for (i, brick) in bricks.iter().enumerate() {
        let m = brick.len();
        let mut eigs = vec![0i64; 1 << m];
        for block in layer.blocks.iter().filter(|b| owner[b.qubits[0]] == i) {
            let pos: Vec<usize> = block
                .qubits
                .iter()
                .map(|q| brick.iter().position(|x| x == q).unwrap())
                .collect();
            for (local, e) in eigs.iter_mut().enumerate() {
                *e += block.eigenvalues[spectrum::block_index(local, m, &pos)];
            }
        }
        out.push((brick.clone(), eigs));
    }
    Ok(out)
}

/// Backward light cone of the observable site of a brickwise circuit.
#[derive(Debug, Clone)]
pub struct LightCone {
    /// Circuit on the support qubits, renumbered `0..support.len()`.
    pub sub_circuit: Circuit,
    /// Full-circuit qubits in the cone, sorted; position = sub-circuit qubit.
    pub support: Vec<usize>,
    /// Qubits of encoding bricks inside the cone.
    pub encoding_support: Vec<usize>,
    /// Cone qubits that carry no encoding.
    pub complement: Vec<usize>,
    /// Redundancies of the encoding bricks inside the cone.
    pub redundancy: RedundancyTable,
    /// Observable qubits, in sub-circuit numbering.
    pub site: Vec<usize>,
    /// Sub-circuit parameter slot → full-circuit slot.
    pub param_map: Vec<usize>,
    /// Sub-circuit Haar slot → full-circuit Haar slot.
    pub haar_map: Vec<usize>,
}

pub fn extract_lightcone(circuit: &Circuit, layout: &BrickwiseLayout) -> Result<LightCone> {
    layout.validate()?;
    let mut cone: BTreeSet<usize> = layout.site_qubits().into_iter().collect();
    let mut kept = vec![false; circuit.elements.len()];
    let mut encoding_support = BTreeSet::new();
    for (i, el) in circuit.elements.iter().enumerate().rev() {
        if el.row.is_none() {
            return Err(QfmError::Layout("circuit was not built by build_brickwise".into()));
        }
        if el.qubits.iter().any(|q| cone.contains(q)) {
            kept[i] = true;
            cone.extend(el.qubits.iter().copied());
            if el.kind == ElementKind::Encoding {
                encoding_support.extend(el.qubits.iter().copied());
            }
        }
    }
    let support: Vec<usize> = cone.into_iter().collect();
    let mut local = vec![usize::MAX; circuit.n_qubits];
    for (i, &q) in support.iter().enumerate() {
        local[q] = i;
    }
    let mut b = Builder::new(support.len());
    let mut param_map = Vec::new();
    let mut haar_map = Vec::new();
    let mut enc_blocks = Vec::new();
    for (i, el) in circuit.elements.iter().enumerate() {
        if !kept[i] {
            continue;
        }
        let start = b.gates.len();
        for g in &circuit.gates[el.gates.clone()] {
            let mut g = g.remap(&local, 0, 0);
            match &mut g {
                Gate::Rot {
                    angle: Angle::Param(s),
                    ..
                } => {
                    param_map.push(*s);
                    *s = param_map.len() - 1;
                }
                Gate::Haar { slot, .. } => {
                    haar_map.push(*slot);
                    b.haar_dims.push(circuit.haar_dims[*slot]);
                    *slot = haar_map.len() - 1;
                }
                _ => {}
            }
            b.gates.push(g);
        }
        if el.kind == ElementKind::Encoding {
            let idx = circuit.encoding.layers[0]
                .blocks
                .iter()
                .position(|blk| blk.qubits == el.qubits)
                .expect("encoding element has a matching block");
            let blk = &circuit.encoding.layers[0].blocks[idx];
            enc_blocks.push(EncodingBlock {
                qubits: blk.qubits.iter().map(|&q| local[q]).collect(),
                eigenvalues: blk.eigenvalues.clone(),
            });
        }
        b.elements.push(Element {
            kind: el.kind,
            qubits: el.qubits.iter().map(|&q| local[q]).collect(),
            gates: start..b.gates.len(),
            row: el.row,
        });
    }
    b.n_params = param_map.len();
    let encoding = EncodingSpec {
        strategy: circuit.encoding.strategy,
        n_qubits: support.len(),
        lattice_scale: circuit.encoding.lattice_scale,
        layers: vec![EncodingLayer {
            n_qubits: support.len(),
            blocks: enc_blocks,
        }],
    };
    let enc_only = EncodingSpec {
        n_qubits: encoding_support.len(),
        layers: vec![EncodingLayer {
            n_qubits: encoding_support.len(),
            blocks: encoding.layers[0]
                .blocks
                .iter()
                .map(|blk| EncodingBlock {
                    qubits: blk
                        .qubits
                        .iter()
                        .map(|&q| encoding_support.iter().position(|&e| local[e] == q).unwrap())
                        .collect(),
                    eigenvalues: blk.eigenvalues.clone(),
                })
                .collect(),
        }],
        ..encoding.clone()
    };
    let redundancy = spectrum::full_redundancy(&enc_only)?;
    let site = layout.site_qubits().iter().map(|&q| local[q]).collect();
    let complement = support
        .iter()
        .copied()
        .filter(|q| !encoding_support.contains(q))
        .collect();
    Ok(LightCone {
        sub_circuit: b.finish(encoding),
        support,
        encoding_support: encoding_support.into_iter().collect(),
        complement,
        redundancy,
        site,
        param_map,
        haar_map,
    })
}
