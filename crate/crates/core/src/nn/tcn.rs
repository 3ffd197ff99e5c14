//! Temporal convolutional network: residual blocks of dilated causal
//! convolutions with a linear readout of the newest time step.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::ops::Range;

use super::mlp::INITIAL_LOG_STD;
use super::policy::{ActorCritic, NetworkSpec};
use super::tensor::{gemm_nn, gemm_nt, gemm_tn};
use crate::error::NnError;
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcnConfig {
    pub input_channels: usize,
    pub channels: usize,
    pub kernel: usize,
    /// One residual block per dilation.
    pub dilations: Vec<usize>,
    /// Widths of the output heads; they share one linear readout.
    pub heads: Vec<usize>,
    pub seq_len: usize,
}

impl TcnConfig {
    /// History encoder predicting the 9-D peg pose and, optionally, an
    /// alignment logit.
    pub fn encoder(seq_len: usize, with_alignment: bool) -> Self {
        Self {
            input_channels: 6,
            channels: 32,
            kernel: 3,
            dilations: vec![1, 2, 4],
            heads: if with_alignment { vec![9, 1] } else { vec![9] },
            seq_len,
        }
    }

    pub fn with_heads(&self, heads: Vec<usize>) -> Self {
        Self { heads, ..self.clone() }
    }

    pub const CONVS_PER_BLOCK: usize = 2;

    pub fn receptive_field(&self) -> usize {
        1 + Self::CONVS_PER_BLOCK * (self.kernel - 1) * self.dilations.iter().sum::<usize>()
    }

    pub fn output_dim(&self) -> usize {
        self.heads.iter().sum()
    }

    pub fn input_dim(&self) -> usize {
        self.seq_len * self.input_channels
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_channels == 0 || self.channels == 0 || self.kernel == 0 || self.seq_len == 0 {
            return Err(NnError::ShapeMismatch("TCN dimensions must be positive".into()));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(NnError::ShapeMismatch("TCN needs at least one block with positive dilation".into()));
        }
        if self.heads.is_empty() || self.heads.contains(&0) {
            return Err(NnError::ShapeMismatch("TCN heads must be non-empty".into()));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let (c, k) = (self.channels, self.kernel);
        let mut off = 0;
        let mut take = |n: usize| {
            let r = off..off + n;
            off += n;
            r
        };
        let blocks = (0..self.dilations.len())
            .map(|b| {
                let cin = if b == 0 { self.input_channels } else { c };
                let w1 = take(c * k * cin);
                let b1 = take(c);
                let w2 = take(c * k * c);
                let b2 = take(c);
                let skip = (cin != c).then(|| (take(c * cin), take(c)));
                BlockLayout { cin, w1, b1, w2, b2, skip }
            })
            .collect();
        let head_w = take(self.output_dim() * c);
        let head_b = take(self.output_dim());
        Layout { blocks, head_w, head_b, total: off }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total
    }

    /// Tensor names and shapes in parameter order.
    pub fn param_names(&self, prefix: &str) -> Vec<(String, Vec<usize>)> {
        let (c, k) = (self.channels, self.kernel);
        let mut names = Vec::new();
        for b in 0..self.dilations.len() {
            let cin = if b == 0 { self.input_channels } else { c };
            names.push((format!("{prefix}blocks.{b}.conv1.weight"), vec![c, k, cin]));
            names.push((format!("{prefix}blocks.{b}.conv1.bias"), vec![c]));
            names.push((format!("{prefix}blocks.{b}.conv2.weight"), vec![c, k, c]));
            names.push((format!("{prefix}blocks.{b}.conv2.bias"), vec![c]));
            if cin != c {
                names.push((format!("{prefix}blocks.{b}.skip.weight"), vec![c, cin]));
                names.push((format!("{prefix}blocks.{b}.skip.bias"), vec![c]));
            }
        }
        names.push((format!("{prefix}head.weight"), vec![self.output_dim(), c]));
        names.push((format!("{prefix}head.bias"), vec![self.output_dim()]));
        names
    }
}

struct BlockLayout {
    cin: usize,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
    skip: Option<(Range<usize>, Range<usize>)>,
}

struct Layout {
    blocks: Vec<BlockLayout>,
    head_w: Range<usize>,
    head_b: Range<usize>,
    total: usize,
}

struct BlockCache {
    input: Vec<f64>,
    col1: Vec<f64>,
    h1: Vec<f64>,
    col2: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
}

pub struct TcnCache {
    batch: usize,
    blocks: Vec<BlockCache>,
    /// Head inputs: newest-step features, or every step for sequence maps.
    features: Vec<f64>,
    all_steps: bool,
}

impl TcnCache {
    /// Sign pattern of every ReLU input, for kink-aware finite differences.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.blocks
            .iter()
            .flat_map(|b| b.h1.iter().chain(&b.h2).chain(&b.out).map(|v| *v > 0.0))
            .collect()
    }
}

/// Causal dilated-conv network with its own parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Tcn {
    config: TcnConfig,
    params: Vec<f64>,
}

/// `col[(b,t)][k·cin + i] = x[(b, t − (K−1−k)·d)][i]`, zero before the start.
fn im2col(x: &[f64], batch: usize, seq: usize, cin: usize, kernel: usize, dilation: usize) -> Vec<f64> {
    let width = kernel * cin;
    let mut col = vec![0.0; batch * seq * width];
    for b in 0..batch {
        for t in 0..seq {
            let row = &mut col[(b * seq + t) * width..(b * seq + t + 1) * width];
            for k in 0..kernel {
                let back = (kernel - 1 - k) * dilation;
                if back <= t {
                    let src = (b * seq + t - back) * cin;
                    row[k * cin..(k + 1) * cin].copy_from_slice(&x[src..src + cin]);
                }
            }
        }
    }
    col
}

fn col2im(dcol: &[f64], batch: usize, seq: usize, cin: usize, kernel: usize, dilation: usize) -> Vec<f64> {
    let width = kernel * cin;
    let mut dx = vec![0.0; batch * seq * cin];
    for b in 0..batch {
        for t in 0..seq {
            let row = &dcol[(b * seq + t) * width..(b * seq + t + 1) * width];
            for k in 0..kernel {
                let back = (kernel - 1 - k) * dilation;
                if back <= t {
                    let dst = (b * seq + t - back) * cin;
                    dx[dst..dst + cin].iter_mut().zip(&row[k * cin..(k + 1) * cin]).for_each(|(d, g)| *d += g);
                }
            }
        }
    }
    dx
}

fn broadcast_bias(bias: &[f64], rows: usize) -> Vec<f64> {
    (0..rows).flat_map(|_| bias.iter().copied()).collect()
}

fn add_colsum(grad: &mut [f64], d: &[f64]) {
    let n = grad.len();
    for row in d.chunks_exact(n) {
        grad.iter_mut().zip(row).for_each(|(g, v)| *g += v);
    }
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn relu_mask(a: &[f64], d: &mut [f64]) {
    d.iter_mut().zip(a).for_each(|(d, a)| {
        if *a <= 0.0 {
            *d = 0.0
        }
    });
}

impl Tcn {
    pub fn zeros(config: TcnConfig) -> Result<Self, NnError> {
        config.validate()?;
        let n = config.num_params();
        Ok(Self { config, params: vec![0.0; n] })
    }

    pub fn new(config: TcnConfig, rng: &mut Rng) -> Result<Self, NnError> {
        let mut t = Self::zeros(config)?;
        t.init(rng);
        Ok(t)
    }

    pub fn from_params(config: TcnConfig, params: Vec<f64>) -> Result<Self, NnError> {
        let mut t = Self::zeros(config)?;
        if params.len() != t.params.len() {
            return Err(NnError::ShapeMismatch(format!(
                "TCN expects {} parameters, got {}",
                t.params.len(),
                params.len()
            )));
        }
        t.params = params;
        Ok(t)
    }

    /// He-normal convolutions, small readout, zero biases.
    pub fn init(&mut self, rng: &mut Rng) {
        let layout = self.config.layout();
        let (c, k) = (self.config.channels, self.config.kernel);
        let mut fill = |r: &Range<usize>, std: f64, params: &mut [f64]| {
            let n = Normal::new(0.0, std).expect("finite std");
            params[r.clone()].iter_mut().for_each(|p| *p = n.sample(rng));
        };
        self.params.fill(0.0);
        for bl in &layout.blocks {
            fill(&bl.w1, (2.0 / (k * bl.cin) as f64).sqrt(), &mut self.params);
            fill(&bl.w2, (2.0 / (k * c) as f64).sqrt(), &mut self.params);
            if let Some((ws, _)) = &bl.skip {
                fill(ws, (1.0 / bl.cin as f64).sqrt(), &mut self.params);
            }
        }
        fill(&layout.head_w, (1.0 / c as f64).sqrt(), &mut self.params);
    }

    pub fn config(&self) -> &TcnConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Outputs at the newest time step, `batch × output_dim`.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, TcnCache), NnError> {
        self.config.forward(&self.params, x, batch)
    }

    /// Outputs at every time step, `batch × seq_len × output_dim`.
    pub fn forward_sequence(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, TcnCache), NnError> {
        self.config.forward_sequence(&self.params, x, batch)
    }

    pub fn predict(&self, history: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(history, 1)?.0)
    }

    /// Accumulate parameter gradients for output gradient `dy`.
    pub fn backward(&self, cache: &TcnCache, dy: &[f64], grad: &mut [f64]) {
        self.config.backward(&self.params, cache, dy, grad)
    }
}

impl TcnConfig {
    fn check_input(&self, p: &[f64], x: &[f64], batch: usize) -> Result<(), NnError> {
        if p.len() != self.num_params() {
            return Err(NnError::ShapeMismatch(format!("TCN expects {} parameters, got {}", self.num_params(), p.len())));
        }
        let want = batch * self.input_dim();
        if x.len() != want {
            return Err(NnError::ShapeMismatch(format!(
                "TCN expects {batch}×{}×{} inputs, got {} values",
                self.seq_len,
                self.input_channels,
                x.len()
            )));
        }
        Ok(())
    }

    fn trunk(&self, p: &[f64], x: &[f64], batch: usize) -> (Vec<BlockCache>, Vec<f64>) {
        let layout = self.layout();
        let (c, k, seq) = (self.channels, self.kernel, self.seq_len);
        let rows = batch * seq;
        let mut cur = x.to_vec();
        let mut blocks = Vec::with_capacity(layout.blocks.len());
        for (bl, &d) in layout.blocks.iter().zip(&self.dilations) {
            let col1 = im2col(&cur, batch, seq, bl.cin, k, d);
            let mut h1 = broadcast_bias(&p[bl.b1.clone()], rows);
            gemm_nt(rows, k * bl.cin, c, &col1, &p[bl.w1.clone()], 1.0, &mut h1);
            relu(&mut h1);
            let col2 = im2col(&h1, batch, seq, c, k, d);
            let mut h2 = broadcast_bias(&p[bl.b2.clone()], rows);
            gemm_nt(rows, k * c, c, &col2, &p[bl.w2.clone()], 1.0, &mut h2);
            relu(&mut h2);
            let mut out = match &bl.skip {
                Some((ws, bs)) => {
                    let mut s = broadcast_bias(&p[bs.clone()], rows);
                    gemm_nt(rows, bl.cin, c, &cur, &p[ws.clone()], 1.0, &mut s);
                    s
                }
                None => cur.clone(),
            };
            out.iter_mut().zip(&h2).for_each(|(o, h)| *o += h);
            relu(&mut out);
            let input = std::mem::replace(&mut cur, out.clone());
            blocks.push(BlockCache { input, col1, h1, col2, h2, out });
        }
        (blocks, cur)
    }

    fn readout(&self, p: &[f64], features: &[f64], rows: usize) -> Vec<f64> {
        let layout = self.layout();
        let od = self.output_dim();
        let mut y = broadcast_bias(&p[layout.head_b.clone()], rows);
        gemm_nt(rows, self.channels, od, features, &p[layout.head_w], 1.0, &mut y);
        y
    }

    /// Outputs at the newest time step, `batch × output_dim`.
    pub fn forward(&self, p: &[f64], x: &[f64], batch: usize) -> Result<(Vec<f64>, TcnCache), NnError> {
        self.check_input(p, x, batch)?;
        let (blocks, last) = self.trunk(p, x, batch);
        let (c, seq) = (self.channels, self.seq_len);
        let mut features = Vec::with_capacity(batch * c);
        for b in 0..batch {
            let r = (b * seq + seq - 1) * c;
            features.extend_from_slice(&last[r..r + c]);
        }
        let y = self.readout(p, &features, batch);
        Ok((y, TcnCache { batch, blocks, features, all_steps: false }))
    }

    /// Outputs at every time step, `batch × seq_len × output_dim`.
    pub fn forward_sequence(&self, p: &[f64], x: &[f64], batch: usize) -> Result<(Vec<f64>, TcnCache), NnError> {
        self.check_input(p, x, batch)?;
        let (blocks, last) = self.trunk(p, x, batch);
        let y = self.readout(p, &last, batch * self.seq_len);
        Ok((y, TcnCache { batch, blocks, features: last, all_steps: true }))
    }

    /// Accumulate parameter gradients for output gradient `dy`.
    pub fn backward(&self, p: &[f64], cache: &TcnCache, dy: &[f64], grad: &mut [f64]) {
        let layout = self.layout();
        let (c, k, seq) = (self.channels, self.kernel, self.seq_len);
        let od = self.output_dim();
        let batch = cache.batch;
        let rows = batch * seq;
        let head_rows = if cache.all_steps { rows } else { batch };
        assert_eq!(dy.len(), head_rows * od);
        assert_eq!(grad.len(), p.len());

        gemm_tn(head_rows, od, c, dy, &cache.features, 1.0, &mut grad[layout.head_w.clone()]);
        add_colsum(&mut grad[layout.head_b.clone()], dy);
        let mut dfeat = vec![0.0; head_rows * c];
        gemm_nn(head_rows, od, c, dy, &p[layout.head_w.clone()], 0.0, &mut dfeat);
        let mut dcur = if cache.all_steps {
            dfeat
        } else {
            let mut full = vec![0.0; rows * c];
            for b in 0..batch {
                let r = (b * seq + seq - 1) * c;
                full[r..r + c].copy_from_slice(&dfeat[b * c..(b + 1) * c]);
            }
            full
        };

        for ((bl, &d), bc) in layout.blocks.iter().zip(&self.dilations).zip(&cache.blocks).rev() {
            let mut dsum = dcur;
            relu_mask(&bc.out, &mut dsum);
            let mut dz2 = dsum.clone();
            relu_mask(&bc.h2, &mut dz2);
            gemm_tn(rows, c, k * c, &dz2, &bc.col2, 1.0, &mut grad[bl.w2.clone()]);
            add_colsum(&mut grad[bl.b2.clone()], &dz2);
            let mut dcol2 = vec![0.0; rows * k * c];
            gemm_nn(rows, c, k * c, &dz2, &p[bl.w2.clone()], 0.0, &mut dcol2);
            let mut dz1 = col2im(&dcol2, batch, seq, c, k, d);
            relu_mask(&bc.h1, &mut dz1);
            gemm_tn(rows, c, k * bl.cin, &dz1, &bc.col1, 1.0, &mut grad[bl.w1.clone()]);
            add_colsum(&mut grad[bl.b1.clone()], &dz1);
            let mut dcol1 = vec![0.0; rows * k * bl.cin];
            gemm_nn(rows, c, k * bl.cin, &dz1, &p[bl.w1.clone()], 0.0, &mut dcol1);
            let mut dx = col2im(&dcol1, batch, seq, bl.cin, k, d);
            match &bl.skip {
                Some((ws, bs)) => {
                    gemm_tn(rows, c, bl.cin, &dsum, &bc.input, 1.0, &mut grad[ws.clone()]);
                    add_colsum(&mut grad[bs.clone()], &dsum);
                    gemm_nn(rows, c, bl.cin, &dsum, &p[ws.clone()], 1.0, &mut dx);
                }
                None => dx.iter_mut().zip(&dsum).for_each(|(a, b)| *a += b),
            }
            dcur = dx;
        }
    }
}

/// Actor and critic TCNs over the raw sensor history, with a learned
/// log-std. Parameters are `[actor | critic | log_std]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TcnPolicy {
    actor: TcnConfig,
    critic: TcnConfig,
    params: Vec<f64>,
}

pub struct TcnPolicyCache {
    actor: TcnCache,
    critic: TcnCache,
}

impl TcnPolicy {
    pub fn new(trunk: &TcnConfig, action_dim: usize, rng: &mut Rng) -> Result<Self, NnError> {
        let mut actor = Tcn::new(trunk.with_heads(vec![action_dim]), rng)?;
        let layout = actor.config.layout();
        actor.params[layout.head_w].iter_mut().for_each(|w| *w *= 0.01);
        let critic = Tcn::new(trunk.with_heads(vec![1]), rng)?;
        let mut params = actor.params;
        params.extend_from_slice(&critic.params);
        params.extend(std::iter::repeat_n(INITIAL_LOG_STD, action_dim));
        Ok(Self { actor: actor.config, critic: critic.config, params })
    }

    pub fn from_params(actor: TcnConfig, critic: TcnConfig, params: Vec<f64>) -> Result<Self, NnError> {
        actor.validate()?;
        critic.validate()?;
        let want = actor.num_params() + critic.num_params() + actor.output_dim();
        if params.len() != want {
            return Err(NnError::ShapeMismatch(format!("TCN policy expects {want} parameters, got {}", params.len())));
        }
        Ok(Self { actor, critic, params })
    }

    fn split(&self) -> (Range<usize>, Range<usize>) {
        let na = self.actor.num_params();
        (0..na, na..na + self.critic.num_params())
    }

    pub fn seq_len(&self) -> usize {
        self.actor.seq_len
    }

    pub fn mean(&self, history: &[f64]) -> Result<Vec<f64>, NnError> {
        let (ar, _) = self.split();
        Ok(self.actor.forward(&self.params[ar], history, 1)?.0)
    }
}

impl ActorCritic for TcnPolicy {
    type Cache = TcnPolicyCache;

    fn input_dim(&self) -> usize {
        self.actor.input_dim()
    }

    fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn log_std_range(&self) -> Range<usize> {
        let n = self.params.len();
        n - self.action_dim()..n
    }

    fn forward_batch(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>, Self::Cache), NnError> {
        let (ar, cr) = self.split();
        let (mean, actor) = self.actor.forward(&self.params[ar], x, batch)?;
        let (value, critic) = self.critic.forward(&self.params[cr], x, batch)?;
        Ok((mean, value, TcnPolicyCache { actor, critic }))
    }

    fn backward_batch(&self, cache: &Self::Cache, d_mean: &[f64], d_value: &[f64], grad: &mut [f64]) {
        let (ar, cr) = self.split();
        self.actor.backward(&self.params[ar.clone()], &cache.actor, d_mean, &mut grad[ar]);
        self.critic.backward(&self.params[cr.clone()], &cache.critic, d_value, &mut grad[cr]);
    }

    fn param_names(&self) -> Vec<(String, Vec<usize>)> {
        let mut names = self.actor.param_names("actor.");
        names.extend(self.critic.param_names("critic."));
        names.push(("log_std".into(), vec![self.action_dim()]));
        names
    }

    fn spec(&self) -> NetworkSpec {
        NetworkSpec::TcnPolicy { actor: self.actor.clone(), critic: self.critic.clone() }
    }
}
