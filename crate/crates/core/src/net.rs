//! MLP encoder with a classification head and an L2-normalised projection
//! head, exact reverse-mode gradients and SGD with momentum.
//!
//! All parameters live in one flat vector. A [`GradVec`] uses the same
//! layout, so optimizer updates and gradient diagnostics are plain vector
//! arithmetic.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub input: usize,
    /// Backbone widths, one entry per ReLU layer.
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub proj_hidden: usize,
    pub proj_dim: usize,
}

impl NetDims {
    /// 64-64 backbone, 64 -> 32 projector.
    pub fn standard(input: usize, classes: usize) -> Self {
        NetDims {
            input,
            hidden: vec![64, 64],
            classes,
            proj_hidden: 64,
            proj_dim: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0
            || self.hidden.is_empty()
            || self.hidden.contains(&0)
            || self.classes == 0
            || self.proj_hidden == 0
            || self.proj_dim == 0
        {
            return Err(Error::InvalidArgument(format!("bad network dims {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

impl Dense {
    fn end(&self) -> usize {
        self.b + self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    backbone: Vec<Dense>,
    classifier: Dense,
    proj_hidden: Dense,
    proj_out: Dense,
    len: usize,
}

impl Layout {
    fn new(d: &NetDims) -> Layout {
        let mut off = 0;
        let mut dense = |fan_in: usize, fan_out: usize| {
            let l = Dense {
                fan_in,
                fan_out,
                w: off,
                b: off + fan_in * fan_out,
            };
            off = l.end();
            l
        };
        let mut backbone = Vec::with_capacity(d.hidden.len());
        let mut prev = d.input;
        for &h in &d.hidden {
            backbone.push(dense(prev, h));
            prev = h;
        }
        let classifier = dense(prev, d.classes);
        let proj_hidden = dense(prev, d.proj_hidden);
        let proj_out = dense(d.proj_hidden, d.proj_dim);
        Layout {
            backbone,
            classifier,
            proj_hidden,
            proj_out,
            len: off,
        }
    }

    /// Parameter range of the projection head (both layers).
    fn projector_range(&self) -> std::ops::Range<usize> {
        self.proj_hidden.w..self.proj_out.end()
    }
}

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

/// Backbone f, classifier g and projector h for one network.
///
/// Each instance (including clones) carries its own identity, and the
/// generation counter advances on every parameter change; forward caches
/// record both so [`NetState::backward`] can reject stale caches.
#[derive(Debug)]
pub struct NetState {
    dims: NetDims,
    layout: Layout,
    params: Vec<f64>,
    id: u64,
    generation: u64,
}

impl Clone for NetState {
    fn clone(&self) -> Self {
        NetState {
            dims: self.dims.clone(),
            layout: self.layout.clone(),
            params: self.params.clone(),
            id: fresh_id(),
            generation: 0,
        }
    }
}

/// Flat gradient in the canonical parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVec(pub Vec<f64>);

impl GradVec {
    pub fn zeros(len: usize) -> Self {
        GradVec(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &GradVec) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &GradVec) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    net_id: u64,
    generation: u64,
    input: Array2<f64>,
    /// Post-ReLU activation of every backbone layer; the last is f(x).
    backbone: Vec<Array2<f64>>,
    proj_hidden: Array2<f64>,
    proj_norms: Array1<f64>,
}

impl ForwardCache {
    pub fn batch_len(&self) -> usize {
        self.input.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOut {
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    /// Unit-norm projection embeddings.
    pub proj: Array2<f64>,
    pub cache: ForwardCache,
}

impl NetState {
    /// He-normal weights, zero biases.
    pub fn new(dims: NetDims, seed: u64) -> Result<NetState> {
        let mut net = NetState::zeros(dims)?;
        let mut r = rng::stream(seed, "net-init", &[]);
        let layout = net.layout.clone();
        let dense = layout
            .backbone
            .iter()
            .chain([&layout.classifier, &layout.proj_hidden, &layout.proj_out]);
        for l in dense {
            let std = (2.0 / l.fan_in as f64).sqrt();
            for w in &mut net.params[l.w..l.b] {
                let z: f64 = StandardNormal.sample(&mut r);
                *w = std * z;
            }
        }
        Ok(net)
    }

    pub fn zeros(dims: NetDims) -> Result<NetState> {
        dims.validate()?;
        let layout = Layout::new(&dims);
        Ok(NetState {
            params: vec![0.0; layout.len],
            layout,
            dims,
            id: fresh_id(),
            generation: 0,
        })
    }

    pub fn dims(&self) -> &NetDims {
        &self.dims
    }

    pub fn num_params(&self) -> usize {
        self.layout.len
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        self.generation += 1;
        Ok(())
    }

    /// Parameter index range belonging to the projection head.
    pub fn projector_range(&self) -> std::ops::Range<usize> {
        self.layout.projector_range()
    }

    fn weight(&self, l: &Dense) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((l.fan_in, l.fan_out), &self.params[l.w..l.b]).expect("layout")
    }

    fn bias(&self, l: &Dense) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[l.b..l.end()])
    }

    fn affine(&self, l: &Dense, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((x.nrows(), l.fan_out));
        out += &self.bias(l);
        general_mat_mul(1.0, x, &self.weight(l), 1.0, &mut out);
        out
    }

    /// z = g(f(x)), t = softmax(z), q = normalize(h(f(x))).
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<ForwardOut> {
        if x.ncols() != self.dims.input {
            return Err(Error::DimensionMismatch(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.dims.input
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        let mut backbone: Vec<Array2<f64>> = Vec::with_capacity(self.layout.backbone.len());
        for (k, l) in self.layout.backbone.iter().enumerate() {
            let prev = if k == 0 { x.view() } else { backbone[k - 1_usize].view() };
            let mut a = self.affine(l, &prev);
            a.mapv_inplace(relu);
            backbone.push(a);
        }
        let feat = backbone.last().expect("nonempty backbone").view();
        let logits = self.affine(&self.layout.classifier, &feat);
        let probs = softmax_rows(&logits);
        let mut proj_hidden = self.affine(&self.layout.proj_hidden, &feat);
        proj_hidden.mapv_inplace(relu);
        let mut proj = self.affine(&self.layout.proj_out, &proj_hidden.view());
        let proj_norms = normalize_rows(&mut proj);
        Ok(ForwardOut {
            logits,
            probs,
            proj,
            cache: ForwardCache {
                net_id: self.id,
                generation: self.generation,
                input: x.to_owned(),
                backbone,
                proj_hidden,
                proj_norms,
            },
        })
    }

    /// Reverse-mode gradient given upstream gradients on the logits and on
    /// the normalized projection. `None` means a zero upstream.
    pub fn backward(
        &self,
        out: &ForwardOut,
        d_logits: Option<ArrayView2<f64>>,
        d_proj: Option<ArrayView2<f64>>,
    ) -> Result<GradVec> {
        let cache = &out.cache;
        if cache.net_id != self.id || cache.generation != self.generation {
            return Err(Error::StaleCache(format!(
                "cache from net {}#{} used with net {}#{}",
                cache.net_id, cache.generation, self.id, self.generation
            )));
        }
        let b = cache.batch_len();
        let check = |name: &str, g: &Option<ArrayView2<f64>>, cols: usize| -> Result<()> {
            match g {
                Some(g) if g.dim() != (b, cols) => Err(Error::DimensionMismatch(format!(
                    "upstream {name} has shape {:?}, expected ({b}, {cols})",
                    g.dim()
                ))),
                _ => Ok(()),
            }
        };
        check("logits", &d_logits, self.dims.classes)?;
        check("projection", &d_proj, self.dims.proj_dim)?;

        let mut grad = GradVec::zeros(self.layout.len);
        let feat = cache.backbone.last().expect("nonempty backbone");
        let mut d_feat = Array2::<f64>::zeros(feat.dim());

        if let Some(dz) = d_logits {
            let l = &self.layout.classifier;
            self.accumulate_dense(&mut grad, l, &feat.view(), &dz);
            general_mat_mul(1.0, &dz, &self.weight(l).t(), 1.0, &mut d_feat);
        }

        if let Some(dq) = d_proj {
            // q = u / |u|  =>  du = (dq - q <q, dq>) / |u|
            let q = &out.proj;
            let mut du = dq.to_owned();
            for ((mut du_row, q_row), &norm) in du
                .outer_iter_mut()
                .zip(q.outer_iter())
                .zip(cache.proj_norms.iter())
            {
                if norm == 0.0 {
                    du_row.fill(0.0);
                    continue;
                }
                let along = q_row.dot(&du_row);
                du_row.scaled_add(-along, &q_row);
                du_row.mapv_inplace(|v| v / norm);
            }
            let lo = &self.layout.proj_out;
            self.accumulate_dense(&mut grad, lo, &cache.proj_hidden.view(), &du.view());
            let mut d_ph = du.dot(&self.weight(lo).t());
            relu_backward(&mut d_ph, &cache.proj_hidden);
            let lh = &self.layout.proj_hidden;
            self.accumulate_dense(&mut grad, lh, &feat.view(), &d_ph.view());
            general_mat_mul(1.0, &d_ph, &self.weight(lh).t(), 1.0, &mut d_feat);
        }

        let mut delta = d_feat;
        for k in (0..self.layout.backbone.len()).rev() {
            relu_backward(&mut delta, &cache.backbone[k]);
            let l = &self.layout.backbone[k];
            let prev = if k == 0 {
                cache.input.view()
            } else {
                cache.backbone[k - 1].view()
            };
            self.accumulate_dense(&mut grad, l, &prev, &delta.view());
            if k > 0 {
                delta = delta.dot(&self.weight(l).t());
            }
        }
        Ok(grad)
    }

    fn accumulate_dense(
        &self,
        grad: &mut GradVec,
        l: &Dense,
        input: &ArrayView2<f64>,
        delta: &ArrayView2<f64>,
    ) {
        let (w, b) = grad.0[l.w..l.end()].split_at_mut(l.fan_in * l.fan_out);
        let mut gw = ArrayViewMut2::from_shape((l.fan_in, l.fan_out), w).expect("layout");
        general_mat_mul(1.0, &input.t(), delta, 1.0, &mut gw);
        for (gb, s) in b.iter_mut().zip(delta.sum_axis(Axis(0))) {
            *gb += s;
        }
    }

    /// Writes `<stem>.csv` (one parameter per line) and `<stem>.json` (dims).
    pub fn save_checkpoint(&self, stem: &Path) -> Result<()> {
        let mut csv = String::with_capacity(self.params.len() * 24 + 8);
        csv.push_str("param\n");
        for v in &self.params {
            csv.push_str(&format!("{v}\n"));
        }
        std::fs::write(stem.with_extension("csv"), csv)?;
        std::fs::write(
            stem.with_extension("json"),
            serde_json::to_string_pretty(&self.dims)?,
        )?;
        Ok(())
    }

    pub fn load_checkpoint(stem: &Path) -> Result<NetState> {
        let json_path = stem.with_extension("json");
        let dims: NetDims = serde_json::from_str(&std::fs::read_to_string(&json_path)?)?;
        let mut net = NetState::zeros(dims)?;
        let csv_path = stem.with_extension("csv");
        let text = std::fs::read_to_string(&csv_path)?;
        let values = text
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: csv_path.clone(),
                    msg: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        net.set_params(&values)?;
        Ok(net)
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn relu_backward(delta: &mut Array2<f64>, activation: &Array2<f64>) {
    ndarray::Zip::from(delta).and(activation).for_each(|d, &a| {
        if a <= 0.0 {
            *d = 0.0;
        }
    });
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut t = z.clone();
    for mut row in t.outer_iter_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    t
}

/// Pulls a gradient on softmax outputs back to the logits:
/// dz = t ⊙ (dt - <dt, t>).
pub fn softmax_backward(t: &Array2<f64>, dt: &Array2<f64>) -> Array2<f64> {
    let mut dz = dt.clone();
    for (mut dz_row, t_row) in dz.outer_iter_mut().zip(t.outer_iter()) {
        let s = dz_row.dot(&t_row);
        dz_row.zip_mut_with(&t_row, |d, &p| *d = p * (*d - s));
    }
    dz
}

/// Normalizes rows to unit length in place and returns the original norms.
pub fn normalize_rows(m: &mut Array2<f64>) -> Array1<f64> {
    let mut norms = Array1::zeros(m.nrows());
    for (mut row, n) in m.outer_iter_mut().zip(norms.iter_mut()) {
        let norm = row.dot(&row).sqrt();
        if norm < 1e-12 {
            // All-zero row (dead ReLUs): pin it to the diagonal direction and
            // report norm 0 so no gradient flows through it.
            let d = row.len() as f64;
            row.fill(1.0 / d.sqrt());
            *n = 0.0;
        } else {
            row.mapv_inplace(|v| v / norm);
            *n = norm;
        }
    }
    norms
}

/// SGD with momentum and L2 weight decay (decay folded into the gradient).
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    /// v <- momentum v + (g + wd θ);  θ <- θ - lr v
    pub fn step(&mut self, net: &mut NetState, grad: &GradVec) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.lr)));
        }
        if grad.len() != net.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "gradient has {} entries, network {}",
                grad.len(),
                net.num_params()
            )));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        if self.velocity.len() != grad.len() {
            self.velocity = vec![0.0; grad.len()];
        }
        for ((p, v), g) in net.params.iter_mut().zip(&mut self.velocity).zip(&grad.0) {
            *v = self.momentum * *v + g + self.weight_decay * *p;
            *p -= self.lr * *v;
        }
        net.generation += 1;
        Ok(())
    }
}
