//! Dense classifier substrate: an encoder of affine layers with optional
//! batch normalization, an optional power-scaling stage, and either a linear or
//! a prototype (scaled cosine) head.

mod checkpoint;
mod optim;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MODEL_SCHEMA};
pub use optim::{OptimizerKind, OptimizerSpec, OptimizerState, DECAY_RANGE, LR_RANGE, MOMENTUM_RANGE};
pub(crate) use optim::check_range;

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from, Rng};
use crate::tensor::{axpy, dot, Matrix, Real};

/// Normalizer epsilon of batch normalization.
pub const BN_EPS: f64 = 1e-5;
/// Norm floor of the cosine head.
pub const COSINE_EPS: f64 = 1e-8;
/// Momentum carried by freshly built batch-norm layers.
pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics normalize, running statistics are updated.
    Train,
    /// Running statistics normalize and are left untouched.
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// Affine map `x · W + b` with `W` stored input-major (`in × out`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T = f32> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(weight: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::shape("dense bias", weight.cols(), bias.len()));
        }
        Ok(Self { weight, bias })
    }

    /// He-uniform weights, zero bias.
    pub fn init(input: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / input.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let data = (0..input * output).map(|_| T::lit(dist.sample(rng))).collect();
        Self {
            weight: Matrix::from_raw(input, output, data),
            bias: vec![T::zero(); output],
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.weight.cols()
    }

    fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut z = x.matmul(&self.weight)?;
        for i in 0..z.rows() {
            for (v, &b) in z.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    /// Returns `(dW, db, dX)`.
    fn backward(&self, x: &Matrix<T>, dz: &Matrix<T>) -> Result<(Vec<T>, Vec<T>, Matrix<T>)> {
        let dw = x.matmul_tn(dz)?;
        let mut db = vec![T::zero(); dz.cols()];
        for r in dz.iter_rows() {
            for (d, &v) in db.iter_mut().zip(r) {
                *d += v;
            }
        }
        let dx = dz.matmul_nt(&self.weight)?;
        Ok((dw.into_vec(), db, dx))
    }
}

/// Per-feature batch normalization with running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T = f32> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    /// Weight of the batch statistics in a running update:
    /// `new = (1 - m) · old + m · batch`.
    pub momentum: T,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(width: usize) -> Self {
        Self {
            running_mean: vec![T::zero(); width],
            running_var: vec![T::one(); width],
            gamma: vec![T::one(); width],
            beta: vec![T::zero(); width],
            momentum: T::lit(DEFAULT_BN_MOMENTUM),
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// Folds batch moments into the running statistics.
    pub fn update_running(&mut self, mean: &[T], var: &[T]) {
        let m = self.momentum;
        let keep = T::one() - m;
        for (r, &b) in self.running_mean.iter_mut().zip(mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(var) {
            *r = keep * *r + m * b;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer<T = f32> {
    pub dense: Dense<T>,
    pub norm: Option<BatchNorm<T>>,
    pub activation: Activation,
}

/// Elementwise `sgn(x) · |x|^p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerScale<T = f32> {
    pub p: T,
}

pub const POWER_RANGE: (f64, f64) = (0.2, 4.0);

impl<T: Real> PowerScale<T> {
    pub fn new(p: T) -> Result<Self> {
        let v = p.as_f64();
        if !(POWER_RANGE.0..=POWER_RANGE.1).contains(&v) {
            return Err(Error::OutOfRange {
                field: "p".into(),
                value: v,
                low: POWER_RANGE.0,
                high: POWER_RANGE.1,
            });
        }
        Ok(Self { p })
    }
}

#[inline]
fn power_scale_value<T: Real>(x: T, p: T) -> T {
    if x == T::zero() {
        T::zero()
    } else {
        x.signum() * x.abs().powf(p)
    }
}

#[inline]
fn power_scale_derivative<T: Real>(x: T, p: T) -> T {
    if x == T::zero() {
        if p == T::one() {
            T::one()
        } else {
            T::zero()
        }
    } else {
        p * x.abs().powf(p - T::one())
    }
}

/// Elementwise signed power `y_i = sgn(x_i)·|x_i|^p`.
pub fn power_scale<T: Real>(x: &[T], p: T) -> Vec<T> {
    x.iter().map(|&v| power_scale_value(v, p)).collect()
}

/// Scaled-cosine classifier over class prototypes.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeHead<T = f32> {
    /// One row per class.
    pub prototypes: Matrix<T>,
    pub tau: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Head<T = f32> {
    Linear(Dense<T>),
    Prototype(PrototypeHead<T>),
}

impl<T: Real> Head<T> {
    pub fn num_classes(&self) -> usize {
        match self {
            Head::Linear(d) => d.output_width(),
            Head::Prototype(p) => p.prototypes.rows(),
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            Head::Linear(d) => d.input_width(),
            Head::Prototype(p) => p.prototypes.cols(),
        }
    }
}

/// Which learning rate a parameter tensor trains with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Embed,
    Classifier,
}

/// Gradients in the order of [`Model::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T = f32> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        Self {
            tensors: model.params().into_iter().map(|(_, p)| vec![T::zero(); p.len()]).collect(),
        }
    }

    /// `self += w · other`.
    pub fn add_scaled(&mut self, other: &Self, w: T) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            axpy(w, b, a);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().flatten().all(|v| *v == T::zero())
    }
}

/// Encoder + optional power scaling + head.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T = f32> {
    input_width: usize,
    pub layers: Vec<EncoderLayer<T>>,
    /// Applied between encoder and head, only while the head is a prototype head.
    pub power_scale: Option<PowerScale<T>>,
    pub head: Head<T>,
}

/// Shape of a freshly initialized model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTemplate {
    pub input_width: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_true")]
    pub batch_norm: bool,
    pub classes: usize,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

fn default_true() -> bool {
    true
}

impl ModelTemplate {
    pub fn new(input_width: usize, classes: usize) -> Self {
        Self {
            input_width,
            hidden: default_hidden(),
            batch_norm: true,
            classes,
        }
    }

    pub fn build<T: Real>(&self, seed: u64) -> Result<Model<T>> {
        if self.input_width == 0 || self.classes == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("model template widths must be positive".into()));
        }
        let mut rng = rng_from(seed);
        let mut width = self.input_width;
        let mut layers = Vec::with_capacity(self.hidden.len());
        for &h in &self.hidden {
            layers.push(EncoderLayer {
                dense: Dense::init(width, h, &mut rng),
                norm: self.batch_norm.then(|| BatchNorm::new(h)),
                activation: Activation::Relu,
            });
            width = h;
        }
        let head = Head::Linear(Dense::init(width, self.classes, &mut rng));
        Model::new(self.input_width, layers, None, head)
    }
}

struct NormCache<T> {
    xhat: Matrix<T>,
    inv_std: Vec<T>,
    batch_stats: bool,
}

struct LayerCache<T> {
    input: Matrix<T>,
    norm: Option<NormCache<T>>,
    output: Matrix<T>,
}

enum HeadCache<T> {
    Linear,
    Prototype {
        unit: Matrix<T>,
        norms: Vec<T>,
        proto_unit: Matrix<T>,
        proto_norms: Vec<T>,
    },
}

/// Activations retained by [`Model::forward_cached`] for the backward pass.
pub struct ForwardCache<T = f32> {
    rows: usize,
    layers: Vec<LayerCache<T>>,
    embedding: Matrix<T>,
    head_input: Matrix<T>,
    head: HeadCache<T>,
}

type BatchMoments<T> = Vec<Option<(Vec<T>, Vec<T>)>>;

fn normalize_rows<T: Real>(m: &Matrix<T>) -> (Matrix<T>, Vec<T>) {
    let eps = T::lit(COSINE_EPS);
    let mut unit = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let r = unit.row_mut(i);
        let n = dot(r, r).sqrt();
        let d = if n > eps { n } else { eps };
        r.iter_mut().for_each(|v| *v /= d);
        norms.push(n);
    }
    (unit, norms)
}

/// Backward of `u = x / max(‖x‖, ε)` for each row.
fn normalize_rows_backward<T: Real>(unit: &Matrix<T>, norms: &[T], du: &Matrix<T>) -> Matrix<T> {
    let eps = T::lit(COSINE_EPS);
    let mut dx = du.clone();
    for i in 0..du.rows() {
        let n = norms[i];
        let r = dx.row_mut(i);
        if n > eps {
            let u = unit.row(i);
            let proj = dot(u, r);
            for (d, &uv) in r.iter_mut().zip(u) {
                *d = (*d - uv * proj) / n;
            }
        } else {
            r.iter_mut().for_each(|d| *d /= eps);
        }
    }
    dx
}

impl<T: Real> Model<T> {
    pub fn new(
        input_width: usize,
        layers: Vec<EncoderLayer<T>>,
        power_scale: Option<PowerScale<T>>,
        head: Head<T>,
    ) -> Result<Self> {
        let mut width = input_width;
        for (i, l) in layers.iter().enumerate() {
            if l.dense.input_width() != width {
                return Err(Error::shape("encoder layer input", width, format!("{} (layer {i})", l.dense.input_width())));
            }
            width = l.dense.output_width();
            if let Some(n) = &l.norm {
                if n.width() != width {
                    return Err(Error::shape("batch norm width", width, n.width()));
                }
            }
        }
        if head.input_width() != width {
            return Err(Error::shape("head input", width, head.input_width()));
        }
        Ok(Self {
            input_width,
            layers,
            power_scale,
            head,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn embedding_width(&self) -> usize {
        self.layers.last().map_or(self.input_width, |l| l.dense.output_width())
    }

    pub fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| l.norm.is_some())
    }

    fn active_power(&self) -> Option<T> {
        match (&self.head, &self.power_scale) {
            (Head::Prototype(_), Some(ps)) => Some(ps.p),
            _ => None,
        }
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.input_width {
            return Err(Error::shape("model input columns", self.input_width, x.cols()));
        }
        Ok(())
    }

    fn encode(&self, x: &Matrix<T>, mode: Mode, keep: bool) -> Result<(Matrix<T>, Vec<LayerCache<T>>, BatchMoments<T>)> {
        let mut h = x.clone();
        let mut caches = Vec::new();
        let mut moments = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut z = layer.dense.forward(&h)?;
            let mut norm_cache = None;
            let mut batch = None;
            if let Some(bn) = &layer.norm {
                let eps = T::lit(BN_EPS);
                let (mean, inv_std, batch_stats) = match mode {
                    Mode::Train if z.rows() > 0 => {
                        let (mean, var) = z.column_moments();
                        let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                        batch = Some((mean.clone(), var));
                        (mean, inv, true)
                    }
                    _ => (
                        bn.running_mean.clone(),
                        bn.running_var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect(),
                        false,
                    ),
                };
                let mut xhat = z;
                for i in 0..xhat.rows() {
                    for (j, v) in xhat.row_mut(i).iter_mut().enumerate() {
                        *v = (*v - mean[j]) * inv_std[j];
                    }
                }
                z = xhat.clone();
                for i in 0..z.rows() {
                    for (j, v) in z.row_mut(i).iter_mut().enumerate() {
                        *v = bn.gamma[j] * *v + bn.beta[j];
                    }
                }
                if keep {
                    norm_cache = Some(NormCache { xhat, inv_std, batch_stats });
                }
            }
            if layer.activation == Activation::Relu {
                z.as_mut_slice().iter_mut().for_each(|v| {
                    if *v < T::zero() {
                        *v = T::zero()
                    }
                });
            }
            moments.push(batch);
            let input = std::mem::replace(&mut h, z);
            if keep {
                caches.push(LayerCache {
                    input,
                    norm: norm_cache,
                    output: h.clone(),
                });
            }
        }
        Ok((h, caches, moments))
    }

    fn head_forward(&self, feats: &Matrix<T>, keep: bool) -> Result<(Matrix<T>, HeadCache<T>)> {
        match &self.head {
            Head::Linear(d) => Ok((d.forward(feats)?, HeadCache::Linear)),
            Head::Prototype(ph) => {
                let (unit, norms) = normalize_rows(feats);
                let (proto_unit, proto_norms) = normalize_rows(&ph.prototypes);
                let mut scores = unit.matmul_nt(&proto_unit)?;
                scores.as_mut_slice().iter_mut().for_each(|v| *v *= ph.tau);
                let cache = if keep {
                    HeadCache::Prototype {
                        unit,
                        norms,
                        proto_unit,
                        proto_norms,
                    }
                } else {
                    HeadCache::Linear
                };
                Ok((scores, cache))
            }
        }
    }

    fn apply_power(&self, emb: &Matrix<T>) -> Matrix<T> {
        match self.active_power() {
            Some(p) => emb.map(|v| power_scale_value(v, p)),
            None => emb.clone(),
        }
    }

    fn apply_moments(&mut self, moments: BatchMoments<T>) {
        for (layer, m) in self.layers.iter_mut().zip(moments) {
            if let (Some(bn), Some((mean, var))) = (layer.norm.as_mut(), m) {
                bn.update_running(&mean, &var);
            }
        }
    }

    /// Evaluation-mode encoder output (before power scaling).
    pub fn embed(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        Ok(self.encode(x, Mode::Eval, false)?.0)
    }

    /// Evaluation-mode features seen by the head (embedding, power-scaled when
    /// the prototype head is active).
    pub fn head_features(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.apply_power(&self.embed(x)?))
    }

    /// Evaluation-mode class scores. Never touches running statistics.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let feats = self.head_features(x)?;
        Ok(self.head_forward(&feats, false)?.0)
    }

    /// Class scores; in [`Mode::Train`] batch-norm layers use batch statistics
    /// and fold them into their running statistics.
    pub fn forward(&mut self, x: &Matrix<T>, mode: Mode) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let (emb, _, moments) = self.encode(x, mode, false)?;
        let scores = self.head_forward(&self.apply_power(&emb), false)?.0;
        if mode == Mode::Train {
            self.apply_moments(moments);
        }
        Ok(scores)
    }

    /// Like [`Model::forward`] but keeps what [`Model::backward`] needs.
    pub fn forward_cached(&mut self, x: &Matrix<T>, mode: Mode) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let (emb, layers, moments) = self.encode(x, mode, true)?;
        let head_input = self.apply_power(&emb);
        let (scores, head) = self.head_forward(&head_input, true)?;
        if mode == Mode::Train {
            self.apply_moments(moments);
        }
        Ok((
            scores,
            ForwardCache {
                rows: x.rows(),
                layers,
                embedding: emb,
                head_input,
                head,
            },
        ))
    }

    /// Runs the encoder in training mode purely to refresh running statistics.
    pub fn update_norm_statistics(&mut self, x: &Matrix<T>) -> Result<()> {
        self.check_input(x)?;
        let (_, _, moments) = self.encode(x, Mode::Train, false)?;
        self.apply_moments(moments);
        Ok(())
    }

    /// Parameter gradients given `dL/dscores` for the batch behind `cache`.
    pub fn backward(&self, cache: &ForwardCache<T>, loss_grads: &Matrix<T>) -> Result<Gradients<T>> {
        if loss_grads.shape() != (cache.rows, self.num_classes()) {
            return Err(Error::shape(
                "loss gradients",
                format!("{}x{}", cache.rows, self.num_classes()),
                format!("{}x{}", loss_grads.rows(), loss_grads.cols()),
            ));
        }
        let mut head_grads = Vec::new();
        let dfeat = match (&self.head, &cache.head) {
            (Head::Linear(d), _) => {
                let (dw, db, dx) = d.backward(&cache.head_input, loss_grads)?;
                head_grads.push(dw);
                head_grads.push(db);
                dx
            }
            (
                Head::Prototype(ph),
                HeadCache::Prototype {
                    unit,
                    norms,
                    proto_unit,
                    proto_norms,
                },
            ) => {
                let mut ds = loss_grads.clone();
                ds.as_mut_slice().iter_mut().for_each(|v| *v *= ph.tau);
                let du = ds.matmul(proto_unit)?;
                let dv = ds.matmul_tn(unit)?;
                head_grads.push(normalize_rows_backward(proto_unit, proto_norms, &dv).into_vec());
                normalize_rows_backward(unit, norms, &du)
            }
            (Head::Prototype(_), HeadCache::Linear) => unreachable!("cache built without prototype state"),
        };
        let mut dh = match self.active_power() {
            Some(p) => {
                let mut d = dfeat;
                for (g, &e) in d.as_mut_slice().iter_mut().zip(cache.embedding.as_slice()) {
                    *g *= power_scale_derivative(e, p);
                }
                d
            }
            None => dfeat,
        };

        let mut layer_grads: Vec<Vec<Vec<T>>> = Vec::with_capacity(self.layers.len());
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let mut grads = Vec::new();
            if layer.activation == Activation::Relu {
                for (g, &o) in dh.as_mut_slice().iter_mut().zip(lc.output.as_slice()) {
                    if o <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            let mut norm_grads = None;
            if let (Some(bn), Some(nc)) = (&layer.norm, &lc.norm) {
                let width = bn.width();
                let mut dgamma = vec![T::zero(); width];
                let mut dbeta = vec![T::zero(); width];
                for i in 0..dh.rows() {
                    let (g, xh) = (dh.row(i), nc.xhat.row(i));
                    for j in 0..width {
                        dgamma[j] += g[j] * xh[j];
                        dbeta[j] += g[j];
                    }
                }
                // dxhat = dy * gamma
                let mut dxhat = dh;
                for i in 0..dxhat.rows() {
                    for (j, v) in dxhat.row_mut(i).iter_mut().enumerate() {
                        *v *= bn.gamma[j];
                    }
                }
                if nc.batch_stats {
                    let n = T::from_usize(dxhat.rows());
                    let mut sum = vec![T::zero(); width];
                    let mut sum_x = vec![T::zero(); width];
                    for i in 0..dxhat.rows() {
                        let (d, xh) = (dxhat.row(i), nc.xhat.row(i));
                        for j in 0..width {
                            sum[j] += d[j];
                            sum_x[j] += d[j] * xh[j];
                        }
                    }
                    for i in 0..dxhat.rows() {
                        let xh = nc.xhat.row(i).to_vec();
                        for (j, v) in dxhat.row_mut(i).iter_mut().enumerate() {
                            *v = nc.inv_std[j] / n * (n * *v - sum[j] - xh[j] * sum_x[j]);
                        }
                    }
                } else {
                    for i in 0..dxhat.rows() {
                        for (j, v) in dxhat.row_mut(i).iter_mut().enumerate() {
                            *v *= nc.inv_std[j];
                        }
                    }
                }
                dh = dxhat;
                norm_grads = Some((dgamma, dbeta));
            }
            let (dw, db, dx) = layer.dense.backward(&lc.input, &dh)?;
            grads.push(dw);
            grads.push(db);
            if let Some((dg, dbeta)) = norm_grads {
                grads.push(dg);
                grads.push(dbeta);
            }
            layer_grads.push(grads);
            dh = dx;
        }
        let mut tensors: Vec<Vec<T>> = layer_grads.into_iter().rev().flatten().collect();
        tensors.extend(head_grads);
        Ok(Gradients { tensors })
    }

    /// Gradients at `x` without disturbing the model (runs on a scratch copy).
    pub fn gradients(&self, x: &Matrix<T>, loss_grads: &Matrix<T>, mode: Mode) -> Result<Gradients<T>> {
        let mut scratch = self.clone();
        let (_, cache) = scratch.forward_cached(x, mode)?;
        self.backward(&cache, loss_grads)
    }

    /// Trainable tensors in a fixed order: per encoder layer `W, b[, γ, β]`,
    /// then the head (`W, b` or the prototype matrix).
    pub fn params(&self) -> Vec<(ParamGroup, &[T])> {
        let mut out: Vec<(ParamGroup, &[T])> = Vec::new();
        for l in &self.layers {
            out.push((ParamGroup::Embed, l.dense.weight.as_slice()));
            out.push((ParamGroup::Embed, &l.dense.bias));
            if let Some(bn) = &l.norm {
                out.push((ParamGroup::Embed, &bn.gamma));
                out.push((ParamGroup::Embed, &bn.beta));
            }
        }
        match &self.head {
            Head::Linear(d) => {
                out.push((ParamGroup::Classifier, d.weight.as_slice()));
                out.push((ParamGroup::Classifier, &d.bias));
            }
            Head::Prototype(p) => out.push((ParamGroup::Classifier, p.prototypes.as_slice())),
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(ParamGroup, &mut [T])> {
        let mut out: Vec<(ParamGroup, &mut [T])> = Vec::new();
        for l in &mut self.layers {
            out.push((ParamGroup::Embed, l.dense.weight.as_mut_slice()));
            out.push((ParamGroup::Embed, &mut l.dense.bias));
            if let Some(bn) = &mut l.norm {
                out.push((ParamGroup::Embed, &mut bn.gamma));
                out.push((ParamGroup::Embed, &mut bn.beta));
            }
        }
        match &mut self.head {
            Head::Linear(d) => {
                out.push((ParamGroup::Classifier, d.weight.as_mut_slice()));
                out.push((ParamGroup::Classifier, &mut d.bias));
            }
            Head::Prototype(p) => out.push((ParamGroup::Classifier, p.prototypes.as_mut_slice())),
        }
        out
    }

    /// Replaces the head with a freshly initialized linear classifier.
    pub fn reinitialize_head(&mut self, classes: usize, seed: u64) {
        let mut rng = rng_from(seed);
        self.head = Head::Linear(Dense::init(self.embedding_width(), classes, &mut rng));
    }

    /// Sets the momentum of every batch-norm layer.
    pub fn set_norm_momentum(&mut self, m: T) {
        for bn in self.layers.iter_mut().filter_map(|l| l.norm.as_mut()) {
            bn.momentum = m;
        }
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let v = |xs: &[T]| xs.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
        let dense = |d: &Dense<T>| Dense {
            weight: d.weight.cast(),
            bias: v(&d.bias),
        };
        Model {
            input_width: self.input_width,
            layers: self
                .layers
                .iter()
                .map(|l| EncoderLayer {
                    dense: dense(&l.dense),
                    norm: l.norm.as_ref().map(|bn| BatchNorm {
                        running_mean: v(&bn.running_mean),
                        running_var: v(&bn.running_var),
                        gamma: v(&bn.gamma),
                        beta: v(&bn.beta),
                        momentum: U::lit(bn.momentum.as_f64()),
                    }),
                    activation: l.activation,
                })
                .collect(),
            power_scale: self.power_scale.map(|p| PowerScale { p: U::lit(p.p.as_f64()) }),
            head: match &self.head {
                Head::Linear(d) => Head::Linear(dense(d)),
                Head::Prototype(p) => Head::Prototype(PrototypeHead {
                    prototypes: p.prototypes.cast(),
                    tau: U::lit(p.tau.as_f64()),
                }),
            },
        }
    }

    /// Exponential moving average toward `other`: `self = d·self + (1-d)·other`
    /// over trainable tensors and batch-norm running statistics.
    pub fn ema_toward(&mut self, other: &Model<T>, decay: T) {
        let keep = T::one() - decay;
        for ((_, a), (_, b)) in self.params_mut().into_iter().zip(other.params()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = decay * *x + keep * y;
            }
        }
        for (la, lb) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(na), Some(nb)) = (la.norm.as_mut(), lb.norm.as_ref()) {
                for (x, &y) in na.running_mean.iter_mut().zip(&nb.running_mean) {
                    *x = decay * *x + keep * y;
                }
                for (x, &y) in na.running_var.iter_mut().zip(&nb.running_var) {
                    *x = decay * *x + keep * y;
                }
            }
        }
    }
}

/// Standard normal noise scaled by `sigma`.
#[cfg(test)]
pub(crate) fn gaussian_matrix<T: Real>(rows: usize, cols: usize, sigma: f64, rng: &mut Rng) -> Matrix<T> {
    use rand::Rng as _;
    let data = (0..rows * cols)
        .map(|_| T::lit(sigma * rng.sample::<f64, _>(rand_distr::StandardNormal)))
        .collect();
    Matrix::from_raw(rows, cols, data)
}
