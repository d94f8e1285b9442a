//! Convolutional policy/value network with hand-written reverse-mode
//! gradients.
//!
//! Maps: conv(16, 3x3, s2) -> relu -> conv(32, 3x3, s2) -> relu -> flatten
//! -> dense(128) -> relu. Aux: dense(32) -> relu. Both are concatenated and
//! fed through dense(128) -> relu into a policy head (3 logits) and a value
//! head. All parameters live in one flat vector so optimizers and
//! checkpoints treat them uniformly.

mod adam;
mod categorical;
mod checkpoint;
mod init;

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncoderConfig, Observation};
use crate::gridworld::Action;
use crate::scalar::{gemm, MatRef, Scalar};
use crate::seeding::Rng;
use crate::sensor::LidarConfig;

pub use adam::{clip_grad_norm, grad_norm, Adam, AdamConfig};
pub use categorical::Categorical;
pub use checkpoint::checkpoint_scalar;
pub use init::orthogonal;

pub const ACTIONS: usize = Action::COUNT;
pub const IN_CHANNELS: usize = 2;
pub const CONV1_FILTERS: usize = 16;
pub const CONV2_FILTERS: usize = 32;
pub const MAP_HIDDEN: usize = 128;
pub const AUX_HIDDEN: usize = 32;
pub const TRUNK_HIDDEN: usize = 128;
const KERNEL: usize = 9;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("observation {index}: {reason}")]
    Shape { index: usize, reason: String },
    #[error("expected {expected} parameters, got {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("checkpoint line {line}: {reason}")]
    Checkpoint { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Input dimensions the network is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub height: usize,
    pub width: usize,
    pub aux: usize,
}

impl Default for NetShape {
    fn default() -> Self {
        Self::for_encoder(&EncoderConfig::default(), &LidarConfig::default())
    }
}

impl NetShape {
    pub fn for_encoder(enc: &EncoderConfig, lidar: &LidarConfig) -> Self {
        Self { height: enc.height, width: enc.width, aux: lidar.beam_count() + 1 }
    }

    fn conv1_out(&self) -> (usize, usize) {
        (conv_out(self.height), conv_out(self.width))
    }

    fn conv2_out(&self) -> (usize, usize) {
        let (h, w) = self.conv1_out();
        (conv_out(h), conv_out(w))
    }

    /// Length of the flattened conv2 activation.
    pub fn flat_features(&self) -> usize {
        let (h, w) = self.conv2_out();
        CONV2_FILTERS * h * w
    }
}

/// Output size of a 3x3, stride-2, pad-1 convolution.
fn conv_out(n: usize) -> usize {
    n.div_ceil(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Conv1W,
    Conv1B,
    Conv2W,
    Conv2B,
    MapW,
    MapB,
    AuxW,
    AuxB,
    TrunkW,
    TrunkB,
    PolicyW,
    PolicyB,
    ValueW,
    ValueB,
}

impl Block {
    pub const ALL: [Block; 14] = [
        Block::Conv1W,
        Block::Conv1B,
        Block::Conv2W,
        Block::Conv2B,
        Block::MapW,
        Block::MapB,
        Block::AuxW,
        Block::AuxB,
        Block::TrunkW,
        Block::TrunkB,
        Block::PolicyW,
        Block::PolicyB,
        Block::ValueW,
        Block::ValueB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Conv1W => "conv1.weight",
            Block::Conv1B => "conv1.bias",
            Block::Conv2W => "conv2.weight",
            Block::Conv2B => "conv2.bias",
            Block::MapW => "map_fc.weight",
            Block::MapB => "map_fc.bias",
            Block::AuxW => "aux_fc.weight",
            Block::AuxB => "aux_fc.bias",
            Block::TrunkW => "trunk_fc.weight",
            Block::TrunkB => "trunk_fc.bias",
            Block::PolicyW => "policy_head.weight",
            Block::PolicyB => "policy_head.bias",
            Block::ValueW => "value_head.weight",
            Block::ValueB => "value_head.bias",
        }
    }

    pub fn is_bias(self) -> bool {
        matches!(
            self,
            Block::Conv1B | Block::Conv2B | Block::MapB | Block::AuxB | Block::TrunkB | Block::PolicyB | Block::ValueB
        )
    }
}

/// Offsets and `(rows, cols)` of each block inside the flat parameter
/// vector. Biases are `(n, 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    shape: NetShape,
    entries: [(usize, usize, usize); 14],
    len: usize,
}

impl Layout {
    pub fn new(shape: NetShape) -> Self {
        let dims = |b: Block| -> (usize, usize) {
            match b {
                Block::Conv1W => (CONV1_FILTERS, IN_CHANNELS * KERNEL),
                Block::Conv1B => (CONV1_FILTERS, 1),
                Block::Conv2W => (CONV2_FILTERS, CONV1_FILTERS * KERNEL),
                Block::Conv2B => (CONV2_FILTERS, 1),
                Block::MapW => (MAP_HIDDEN, shape.flat_features()),
                Block::MapB => (MAP_HIDDEN, 1),
                Block::AuxW => (AUX_HIDDEN, shape.aux),
                Block::AuxB => (AUX_HIDDEN, 1),
                Block::TrunkW => (TRUNK_HIDDEN, MAP_HIDDEN + AUX_HIDDEN),
                Block::TrunkB => (TRUNK_HIDDEN, 1),
                Block::PolicyW => (ACTIONS, TRUNK_HIDDEN),
                Block::PolicyB => (ACTIONS, 1),
                Block::ValueW => (1, TRUNK_HIDDEN),
                Block::ValueB => (1, 1),
            }
        };
        let mut entries = [(0, 0, 0); 14];
        let mut offset = 0;
        for (slot, b) in entries.iter_mut().zip(Block::ALL) {
            let (r, c) = dims(b);
            *slot = (offset, r, c);
            offset += r * c;
        }
        Self { shape, entries, len: offset }
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self, b: Block) -> (usize, usize) {
        let (_, r, c) = self.entries[b as usize];
        (r, c)
    }

    pub fn range(&self, b: Block) -> Range<usize> {
        let (o, r, c) = self.entries[b as usize];
        o..o + r * c
    }
}

/// Network outputs for a batch, row-major `B x ACTIONS` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs<T> {
    pub logits: Vec<T>,
    pub values: Vec<T>,
}

impl<T> Outputs<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn logits_of(&self, i: usize) -> &[T] {
        &self.logits[i * ACTIONS..(i + 1) * ACTIONS]
    }
}

/// Activations retained by [`Network::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    batch: usize,
    cols1: Vec<T>,
    a1: Vec<T>,
    cols2: Vec<T>,
    a2: Vec<T>,
    flat: Vec<T>,
    aux: Vec<T>,
    z: Vec<T>,
    ht: Vec<T>,
}

impl<T> Cache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl<T: Scalar> Cache<T> {
    /// Which hidden units are active, in layer order. Two forward passes
    /// with equal patterns lie on the same linear piece of the network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        [&self.a1, &self.a2, &self.z, &self.ht]
            .into_iter()
            .flat_map(|layer| layer.iter().map(|&x| x > T::zero()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    layout: Layout,
    params: Vec<T>,
}

impl<T: Scalar> Network<T> {
    pub fn zeros(shape: NetShape) -> Self {
        let layout = Layout::new(shape);
        let params = vec![T::zero(); layout.len()];
        Self { layout, params }
    }

    /// Orthogonal weights (gain sqrt 2 for hidden layers, 0.01 for the
    /// policy head, 1 for the value head) and zero biases.
    pub fn init(shape: NetShape, rng: &mut Rng) -> Self {
        let mut net = Self::zeros(shape);
        let hidden = std::f64::consts::SQRT_2;
        for (b, gain) in [
            (Block::Conv1W, hidden),
            (Block::Conv2W, hidden),
            (Block::MapW, hidden),
            (Block::AuxW, hidden),
            (Block::TrunkW, hidden),
            (Block::PolicyW, 0.01),
            (Block::ValueW, 1.0),
        ] {
            let (r, c) = net.layout.dims(b);
            let w = orthogonal(r, c, gain, rng);
            for (dst, src) in net.block_mut(b).iter_mut().zip(w) {
                *dst = T::of(src);
            }
        }
        net
    }

    pub fn from_params(shape: NetShape, params: Vec<T>) -> Result<Self, NetError> {
        let layout = Layout::new(shape);
        if params.len() != layout.len() {
            return Err(NetError::ParamCount { expected: layout.len(), found: params.len() });
        }
        Ok(Self { layout, params })
    }

    pub fn shape(&self) -> NetShape {
        self.layout.shape
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn block(&self, b: Block) -> &[T] {
        &self.params[self.layout.range(b)]
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [T] {
        let r = self.layout.range(b);
        &mut self.params[r]
    }

    /// Converts to another scalar type (rounding if narrowing).
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network { layout: self.layout.clone(), params: self.params.iter().map(|p| U::of(p.as_f64())).collect() }
    }

    fn weight(&self, b: Block) -> MatRef<'_, T> {
        let (r, c) = self.layout.dims(b);
        MatRef::row_major(self.block(b), r, c)
    }

    fn check_batch(&self, batch: &[&Observation<T>]) -> Result<(), NetError> {
        let s = self.layout.shape;
        for (index, o) in batch.iter().enumerate() {
            let reason = if o.height != s.height || o.width != s.width {
                format!("maps are {}x{}, network expects {}x{}", o.height, o.width, s.height, s.width)
            } else if o.maps.len() != IN_CHANNELS * s.height * s.width {
                format!("map buffer holds {} values, expected {}", o.maps.len(), IN_CHANNELS * s.height * s.width)
            } else if o.aux.len() != s.aux {
                format!("aux vector has {} entries, expected {}", o.aux.len(), s.aux)
            } else {
                continue;
            };
            return Err(NetError::Shape { index, reason });
        }
        Ok(())
    }

    pub fn forward(&self, batch: &[&Observation<T>]) -> Result<Outputs<T>, NetError> {
        self.forward_cached(batch).map(|(out, _)| out)
    }

    pub fn forward_cached(&self, batch: &[&Observation<T>]) -> Result<(Outputs<T>, Cache<T>), NetError> {
        self.check_batch(batch)?;
        let s = self.layout.shape;
        let b = batch.len();
        let (h, w) = (s.height, s.width);
        let (h1, w1) = s.conv1_out();
        let (h2, w2) = s.conv2_out();
        let (p1, p2) = (h1 * w1, h2 * w2);
        let feats = s.flat_features();
        let one = T::one();
        let zero = T::zero();

        let mut x = Vec::with_capacity(b * IN_CHANNELS * h * w);
        let mut aux = Vec::with_capacity(b * s.aux);
        for o in batch {
            x.extend_from_slice(&o.maps);
            aux.extend_from_slice(&o.aux);
        }

        let cols1 = im2col(&x, IN_CHANNELS, b, (h, w), (h * w, IN_CHANNELS * h * w), (h1, w1));
        let mut a1 = vec![zero; CONV1_FILTERS * b * p1];
        gemm(one, self.weight(Block::Conv1W), MatRef::row_major(&cols1, IN_CHANNELS * KERNEL, b * p1), zero, &mut a1);
        bias_relu_rows(&mut a1, self.block(Block::Conv1B), b * p1);

        let cols2 = im2col(&a1, CONV1_FILTERS, b, (h1, w1), (b * p1, p1), (h2, w2));
        let mut a2 = vec![zero; CONV2_FILTERS * b * p2];
        gemm(one, self.weight(Block::Conv2W), MatRef::row_major(&cols2, CONV1_FILTERS * KERNEL, b * p2), zero, &mut a2);
        bias_relu_rows(&mut a2, self.block(Block::Conv2B), b * p2);

        let mut flat = vec![zero; b * feats];
        for c in 0..CONV2_FILTERS {
            for bi in 0..b {
                let src = &a2[c * b * p2 + bi * p2..][..p2];
                flat[bi * feats + c * p2..][..p2].copy_from_slice(src);
            }
        }

        let mut hm = vec![zero; b * MAP_HIDDEN];
        gemm(one, MatRef::row_major(&flat, b, feats), self.weight(Block::MapW).t(), zero, &mut hm);
        bias_relu_cols(&mut hm, self.block(Block::MapB), true);
        let mut ha = vec![zero; b * AUX_HIDDEN];
        gemm(one, MatRef::row_major(&aux, b, s.aux), self.weight(Block::AuxW).t(), zero, &mut ha);
        bias_relu_cols(&mut ha, self.block(Block::AuxB), true);

        let zw = MAP_HIDDEN + AUX_HIDDEN;
        let mut z = Vec::with_capacity(b * zw);
        for bi in 0..b {
            z.extend_from_slice(&hm[bi * MAP_HIDDEN..][..MAP_HIDDEN]);
            z.extend_from_slice(&ha[bi * AUX_HIDDEN..][..AUX_HIDDEN]);
        }

        let mut ht = vec![zero; b * TRUNK_HIDDEN];
        gemm(one, MatRef::row_major(&z, b, zw), self.weight(Block::TrunkW).t(), zero, &mut ht);
        bias_relu_cols(&mut ht, self.block(Block::TrunkB), true);

        let htm = MatRef::row_major(&ht, b, TRUNK_HIDDEN);
        let mut logits = vec![zero; b * ACTIONS];
        gemm(one, htm, self.weight(Block::PolicyW).t(), zero, &mut logits);
        bias_relu_cols(&mut logits, self.block(Block::PolicyB), false);
        let mut values = vec![zero; b];
        gemm(one, htm, self.weight(Block::ValueW).t(), zero, &mut values);
        bias_relu_cols(&mut values, self.block(Block::ValueB), false);

        let cache = Cache { batch: b, cols1, a1, cols2, a2, flat, aux, z, ht };
        Ok((Outputs { logits, values }, cache))
    }

    /// Gradient of a scalar loss given its derivatives with respect to the
    /// logits (`B x ACTIONS`) and values (`B`) of the cached forward pass.
    pub fn backward(&self, cache: &Cache<T>, dlogits: &[T], dvalues: &[T]) -> Vec<T> {
        let s = self.layout.shape;
        let b = cache.batch;
        assert_eq!(dlogits.len(), b * ACTIONS, "dlogits length");
        assert_eq!(dvalues.len(), b, "dvalues length");
        let (h1, w1) = s.conv1_out();
        let (h2, w2) = s.conv2_out();
        let (p1, p2) = (h1 * w1, h2 * w2);
        let feats = s.flat_features();
        let zw = MAP_HIDDEN + AUX_HIDDEN;
        let one = T::one();
        let zero = T::zero();
        let l = &self.layout;
        let mut g = vec![zero; l.len()];

        let dl = MatRef::row_major(dlogits, b, ACTIONS);
        let dv = MatRef::row_major(dvalues, b, 1);
        let htm = MatRef::row_major(&cache.ht, b, TRUNK_HIDDEN);
        gemm(one, dl.t(), htm, zero, &mut g[l.range(Block::PolicyW)]);
        col_sums(dlogits, ACTIONS, &mut g[l.range(Block::PolicyB)]);
        gemm(one, dv.t(), htm, zero, &mut g[l.range(Block::ValueW)]);
        col_sums(dvalues, 1, &mut g[l.range(Block::ValueB)]);

        let mut dht = vec![zero; b * TRUNK_HIDDEN];
        gemm(one, dl, self.weight(Block::PolicyW), zero, &mut dht);
        gemm(one, dv, self.weight(Block::ValueW), one, &mut dht);
        relu_mask(&mut dht, &cache.ht);

        let zm = MatRef::row_major(&cache.z, b, zw);
        gemm(one, MatRef::row_major(&dht, b, TRUNK_HIDDEN).t(), zm, zero, &mut g[l.range(Block::TrunkW)]);
        col_sums(&dht, TRUNK_HIDDEN, &mut g[l.range(Block::TrunkB)]);
        let mut dz = vec![zero; b * zw];
        gemm(one, MatRef::row_major(&dht, b, TRUNK_HIDDEN), self.weight(Block::TrunkW), zero, &mut dz);
        relu_mask(&mut dz, &cache.z);

        let dhm = MatRef { data: &dz, rows: b, cols: MAP_HIDDEN, row_stride: zw, col_stride: 1 };
        let dha = MatRef { data: &dz[MAP_HIDDEN..], rows: b, cols: AUX_HIDDEN, row_stride: zw, col_stride: 1 };
        gemm(one, dhm.t(), MatRef::row_major(&cache.flat, b, feats), zero, &mut g[l.range(Block::MapW)]);
        gemm(one, dha.t(), MatRef::row_major(&cache.aux, b, s.aux), zero, &mut g[l.range(Block::AuxW)]);
        {
            let (mb, ab) = (l.range(Block::MapB), l.range(Block::AuxB));
            for bi in 0..b {
                let row = &dz[bi * zw..][..zw];
                for (acc, &d) in g[mb.clone()].iter_mut().zip(&row[..MAP_HIDDEN]) {
                    *acc = *acc + d;
                }
                for (acc, &d) in g[ab.clone()].iter_mut().zip(&row[MAP_HIDDEN..]) {
                    *acc = *acc + d;
                }
            }
        }
        let mut dflat = vec![zero; b * feats];
        gemm(one, dhm, self.weight(Block::MapW), zero, &mut dflat);

        let mut da2 = vec![zero; CONV2_FILTERS * b * p2];
        for c in 0..CONV2_FILTERS {
            for bi in 0..b {
                da2[c * b * p2 + bi * p2..][..p2].copy_from_slice(&dflat[bi * feats + c * p2..][..p2]);
            }
        }
        relu_mask(&mut da2, &cache.a2);
        let k2 = CONV1_FILTERS * KERNEL;
        let da2m = MatRef::row_major(&da2, CONV2_FILTERS, b * p2);
        gemm(one, da2m, MatRef::row_major(&cache.cols2, k2, b * p2).t(), zero, &mut g[l.range(Block::Conv2W)]);
        row_sums(&da2, b * p2, &mut g[l.range(Block::Conv2B)]);
        let mut dcols2 = vec![zero; k2 * b * p2];
        gemm(one, self.weight(Block::Conv2W).t(), da2m, zero, &mut dcols2);

        let mut da1 = col2im(&dcols2, CONV1_FILTERS, b, (h1, w1), (h2, w2));
        relu_mask(&mut da1, &cache.a1);
        let k1 = IN_CHANNELS * KERNEL;
        gemm(
            one,
            MatRef::row_major(&da1, CONV1_FILTERS, b * p1),
            MatRef::row_major(&cache.cols1, k1, b * p1).t(),
            zero,
            &mut g[l.range(Block::Conv1W)],
        );
        row_sums(&da1, b * p1, &mut g[l.range(Block::Conv1B)]);
        g
    }
}

/// Gathers 3x3 stride-2 patches (zero padding 1) into a `[C*9, B*oh*ow]`
/// matrix. `strides` are the channel and batch strides of `src`; rows and
/// columns inside a plane are contiguous.
fn im2col<T: Scalar>(
    src: &[T],
    channels: usize,
    batch: usize,
    (h, w): (usize, usize),
    (cs, bs): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let p = oh * ow;
    let n = batch * p;
    let mut cols = vec![T::zero(); channels * KERNEL * n];
    for ci in 0..channels {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * KERNEL + ky * 3 + kx) * n..][..n];
                for bi in 0..batch {
                    let plane = &src[bi * bs + ci * cs..];
                    for oy in 0..oh {
                        let Some(y) = (2 * oy + ky).checked_sub(1).filter(|&y| y < h) else { continue };
                        for ox in 0..ow {
                            if let Some(x) = (2 * ox + kx).checked_sub(1).filter(|&x| x < w) {
                                row[bi * p + oy * ow + ox] = plane[y * w + x];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`] for a source in `[C, B*h*w]` layout.
fn col2im<T: Scalar>(
    cols: &[T],
    channels: usize,
    batch: usize,
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let p = oh * ow;
    let n = batch * p;
    let hw = h * w;
    let mut out = vec![T::zero(); channels * batch * hw];
    for ci in 0..channels {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * KERNEL + ky * 3 + kx) * n..][..n];
                for bi in 0..batch {
                    let plane = &mut out[ci * batch * hw + bi * hw..][..hw];
                    for oy in 0..oh {
                        let Some(y) = (2 * oy + ky).checked_sub(1).filter(|&y| y < h) else { continue };
                        for ox in 0..ow {
                            if let Some(x) = (2 * ox + kx).checked_sub(1).filter(|&x| x < w) {
                                let v = &mut plane[y * w + x];
                                *v = *v + row[bi * p + oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adds `bias[r]` to every element of row `r` and applies relu.
fn bias_relu_rows<T: Scalar>(m: &mut [T], bias: &[T], cols: usize) {
    for (row, &bv) in m.chunks_mut(cols).zip(bias) {
        for v in row {
            *v = (*v + bv).max(T::zero());
        }
    }
}

/// Adds `bias` to every row; optionally applies relu.
fn bias_relu_cols<T: Scalar>(m: &mut [T], bias: &[T], relu: bool) {
    for row in m.chunks_mut(bias.len()) {
        for (v, &bv) in row.iter_mut().zip(bias) {
            let s = *v + bv;
            *v = if relu { s.max(T::zero()) } else { s };
        }
    }
}

/// Zeroes `grad` wherever the relu output was not positive.
fn relu_mask<T: Scalar>(grad: &mut [T], activation: &[T]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

fn col_sums<T: Scalar>(m: &[T], cols: usize, out: &mut [T]) {
    for row in m.chunks(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
}

fn row_sums<T: Scalar>(m: &[T], cols: usize, out: &mut [T]) {
    for (o, row) in out.iter_mut().zip(m.chunks(cols)) {
        *o = row.iter().copied().sum();
    }
}
