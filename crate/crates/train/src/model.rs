//! Trainable recurrent models with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat vector; each layer records offsets into it.
//! The residual stream has width `d_model`; every recurrent layer adds its
//! readout to the stream and the head normalizes the last stream before the
//! classifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statetrack_core::lrnn::EigenRange;

use crate::ops::{self, dot, mtv_acc, mv, mv_acc, outer_acc, sigmoid};
use crate::TrainError;

/// Epsilon inside the key L2 normalization.
pub const KEY_EPS: f64 = 1e-8;
/// Epsilon inside the RMS normalization of the head.
pub const RMS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Elementwise gate `a(x) ⊙ h + W_b x`.
    Diagonal,
    /// Delta rule `(I − β k kᵀ) H + β k vᵀ` with a `d × d` state.
    Delta,
    /// Learnable `n × n` matrix per token, state projected onto the unit ball.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default)]
    pub range: EigenRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    Linear,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab: usize,
    pub classes: usize,
    pub d_model: usize,
    pub layers: Vec<LayerSpec>,
    pub head: Head,
    /// State size `n` of full-matrix layers.
    #[serde(default = "default_full_dim")]
    pub full_dim: usize,
}

fn default_full_dim() -> usize {
    5
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.vocab == 0 || self.classes == 0 || self.d_model == 0 {
            return bad("vocab, classes and d_model must be positive");
        }
        if let Head::Mlp { hidden: 0 } = self.head {
            return bad("mlp hidden width must be positive");
        }
        if self.full_dim == 0 && self.layers.iter().any(|l| l.kind == LayerKind::Full) {
            return bad("full_dim must be positive");
        }
        Ok(())
    }
}

/// Gate nonlinearity for a given range: `σ` or `2σ − 1` for diagonal
/// entries, `σ` or `2σ` for delta-rule `β`.
#[inline]
fn gate(kind: LayerKind, range: EigenRange, z: f64) -> (f64, f64) {
    let s = sigmoid(z);
    let ds = s * (1.0 - s);
    match (kind, range) {
        (_, EigenRange::UnitInterval) => (s, ds),
        (LayerKind::Delta, EigenRange::Symmetric) => (2.0 * s, 2.0 * ds),
        (_, EigenRange::Symmetric) => (2.0 * s - 1.0, 2.0 * ds),
    }
}

/// Transition eigenvalue produced by a gate preactivation: the diagonal entry
/// itself, or `1 − β` for the delta rule.
pub fn transition_eigenvalue(kind: LayerKind, range: EigenRange, z: f64) -> f64 {
    let (g, _) = gate(kind, range, z);
    match kind {
        LayerKind::Delta => 1.0 - g,
        _ => g,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Offsets {
    Diagonal { wa: usize, ca: usize, wb: usize, h0: usize, wo: usize },
    Delta { wk: usize, wv: usize, wq: usize, wbeta: usize, cbeta: usize, h0: usize, wo: usize },
    Full { a: usize, wo: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HeadOffsets {
    Linear { g: usize, w: usize, b: usize },
    Mlp { g: usize, w1: usize, b1: usize, w2: usize, b2: usize },
}

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    segments: Vec<Segment>,
    embed: usize,
    layers: Vec<Offsets>,
    head: HeadOffsets,
    total: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Layout {
        let d = cfg.d_model;
        let mut segments = Vec::new();
        let mut total = 0;
        let mut add = |name: String, shape: Vec<usize>| {
            let offset = total;
            total += shape.iter().product::<usize>();
            segments.push(Segment { name, offset, shape });
            offset
        };
        let embed = add("embed".into(), vec![cfg.vocab, d]);
        let mut layers = Vec::new();
        for (i, spec) in cfg.layers.iter().enumerate() {
            let p = |s: &str| format!("layer{i}.{s}");
            layers.push(match spec.kind {
                LayerKind::Diagonal => Offsets::Diagonal {
                    wa: add(p("w_a"), vec![d, d]),
                    ca: add(p("c_a"), vec![d]),
                    wb: add(p("w_b"), vec![d, d]),
                    h0: add(p("h0"), vec![d]),
                    wo: add(p("w_o"), vec![d, d]),
                },
                LayerKind::Delta => Offsets::Delta {
                    wk: add(p("w_k"), vec![d, d]),
                    wv: add(p("w_v"), vec![d, d]),
                    wq: add(p("w_q"), vec![d, d]),
                    wbeta: add(p("w_beta"), vec![d]),
                    cbeta: add(p("c_beta"), vec![1]),
                    h0: add(p("h0"), vec![d, d]),
                    wo: add(p("w_o"), vec![d, d]),
                },
                LayerKind::Full => {
                    let n = cfg.full_dim;
                    Offsets::Full {
                        a: add(p("a"), vec![cfg.vocab, n, n]),
                        wo: add(p("w_o"), vec![d, n * n]),
                    }
                }
            });
        }
        let head = match cfg.head {
            Head::Linear => HeadOffsets::Linear {
                g: add("head.gain".into(), vec![d]),
                w: add("head.w".into(), vec![cfg.classes, d]),
                b: add("head.b".into(), vec![cfg.classes]),
            },
            Head::Mlp { hidden } => HeadOffsets::Mlp {
                g: add("head.gain".into(), vec![d]),
                w1: add("head.w1".into(), vec![hidden, d]),
                b1: add("head.b1".into(), vec![hidden]),
                w2: add("head.w2".into(), vec![cfg.classes, hidden]),
                b2: add("head.b2".into(), vec![cfg.classes]),
            },
        };
        Layout {
            segments,
            embed,
            layers,
            head,
            total,
        }
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    Diagonal {
        z: Vec<f64>,
        a: Vec<f64>,
        /// `T + 1` states, the first being `h0`.
        h: Vec<f64>,
    },
    Delta {
        k: Vec<f64>,
        norm: Vec<f64>,
        q: Vec<f64>,
        s: Vec<f64>,
        beta: Vec<f64>,
        r: Vec<f64>,
        y: Vec<f64>,
        /// `T + 1` states of `d × d`.
        h: Vec<f64>,
    },
    Full {
        /// `T + 1` states of `n × n`, the first being the identity.
        h: Vec<f64>,
        norm: Vec<f64>,
        z: Vec<f64>,
    },
}

/// Everything the backward pass needs for one sequence.
#[derive(Debug, Clone)]
pub struct SeqCache {
    pub tokens: Vec<usize>,
    /// `layers + 1` residual streams of `T × d`; the last feeds the head.
    streams: Vec<Vec<f64>>,
    layers: Vec<LayerCache>,
    rms: Vec<f64>,
    xhat: Vec<f64>,
    pre: Vec<f64>,
    /// Per-position logits, `T × classes`.
    pub logits: Vec<f64>,
    num_params: usize,
}

impl SeqCache {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn logits_at(&self, pos: usize, classes: usize) -> &[f64] {
        &self.logits[pos * classes..(pos + 1) * classes]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainableModel {
    config: ModelConfig,
    layout: Layout,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NamedParam {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    config: ModelConfig,
    params: Vec<NamedParam>,
}

const CHECKPOINT_FORMAT: &str = "statetrack-trainable";

impl TrainableModel {
    /// All parameters zero.
    pub fn zeros(config: ModelConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = vec![0.0; layout.total];
        Ok(TrainableModel { config, layout, params })
    }

    /// Uniform fan-in initialization from `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, TrainError> {
        let mut m = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let segments = m.layout.segments.clone();
        for seg in &segments {
            let field = seg.name.rsplit('.').next().unwrap_or(&seg.name);
            let fan_in = *seg.shape.last().unwrap_or(&1) as f64;
            let slice = &mut m.params[seg.offset..seg.offset + seg.len()];
            match field {
                "embed" => slice.iter_mut().for_each(|p| *p = rng.gen_range(-1.0..1.0)),
                "c_a" | "c_beta" | "h0" | "b" | "b1" | "b2" => {}
                "gain" => slice.fill(1.0),
                "a" => {
                    let n = seg.shape[1];
                    let s = 0.1 / (n as f64).sqrt();
                    for (i, p) in slice.iter_mut().enumerate() {
                        let (r, c) = ((i / n) % n, i % n);
                        *p = if r == c { 1.0 } else { 0.0 } + rng.gen_range(-s..s);
                    }
                }
                _ => {
                    let s = 1.0 / fan_in.sqrt();
                    slice.iter_mut().for_each(|p| *p = rng.gen_range(-s..s));
                }
            }
        }
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn segments(&self) -> &[Segment] {
        &self.layout.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.layout.segments.iter().find(|s| s.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&[f64]> {
        self.segment(name).map(|s| &self.params[s.offset..s.offset + s.len()])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let s = self.segment(name)?.clone();
        Some(&mut self.params[s.offset..s.offset + s.len()])
    }

    pub fn to_json(&self) -> Result<String, TrainError> {
        let params = self
            .layout
            .segments
            .iter()
            .map(|s| NamedParam {
                name: s.name.clone(),
                shape: s.shape.clone(),
                values: self.params[s.offset..s.offset + s.len()].to_vec(),
            })
            .collect();
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            params,
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(TrainError::Config(format!("unknown checkpoint format {:?}", ck.format)));
        }
        let mut m = Self::zeros(ck.config)?;
        if ck.params.len() != m.layout.segments.len() {
            return Err(TrainError::Config("parameter list does not match config".into()));
        }
        for (np, seg) in ck.params.iter().zip(m.layout.segments.clone()) {
            if np.name != seg.name || np.shape != seg.shape || np.values.len() != seg.len() {
                return Err(TrainError::Config(format!("parameter {} does not match config", np.name)));
            }
            m.params[seg.offset..seg.offset + seg.len()].copy_from_slice(&np.values);
        }
        Ok(m)
    }

    /// Forward pass over one sequence.
    pub fn forward_seq(&self, tokens: &[usize]) -> Result<SeqCache, TrainError> {
        if tokens.is_empty() {
            return Err(TrainError::Shape("empty sequence".into()));
        }
        let cfg = &self.config;
        if let Some(&t) = tokens.iter().find(|&&t| t >= cfg.vocab) {
            return Err(TrainError::Shape(format!("token {t} outside vocabulary of {}", cfg.vocab)));
        }
        let d = cfg.d_model;
        let t_len = tokens.len();
        let p = &self.params;
        let mut x = vec![0.0; t_len * d];
        for (t, &tok) in tokens.iter().enumerate() {
            let e = self.layout.embed + tok * d;
            x[t * d..(t + 1) * d].copy_from_slice(&p[e..e + d]);
        }
        let mut streams = vec![x];
        let mut layers = Vec::with_capacity(cfg.layers.len());
        for (spec, off) in cfg.layers.iter().zip(&self.layout.layers) {
            let input = streams.last().expect("nonempty");
            let mut out = input.clone();
            let cache = match *off {
                Offsets::Diagonal { wa, ca, wb, h0, wo } => {
                    let mut z = vec![0.0; t_len * d];
                    let mut a = vec![0.0; t_len * d];
                    let mut h = vec![0.0; (t_len + 1) * d];
                    h[..d].copy_from_slice(&p[h0..h0 + d]);
                    let mut b = vec![0.0; d];
                    for t in 0..t_len {
                        let u = &input[t * d..(t + 1) * d];
                        let zt = &mut z[t * d..(t + 1) * d];
                        mv(&p[wa..wa + d * d], d, d, u, zt);
                        mv(&p[wb..wb + d * d], d, d, u, &mut b);
                        let (prev, next) = h.split_at_mut((t + 1) * d);
                        let prev = &prev[t * d..];
                        let next = &mut next[..d];
                        for i in 0..d {
                            zt[i] += p[ca + i];
                            let (g, _) = gate(spec.kind, spec.range, zt[i]);
                            a[t * d + i] = g;
                            next[i] = g * prev[i] + b[i];
                        }
                        mv_acc(&p[wo..wo + d * d], d, d, next, &mut out[t * d..(t + 1) * d]);
                    }
                    LayerCache::Diagonal { z, a, h }
                }
                Offsets::Delta { wk, wv, wq, wbeta, cbeta, h0, wo } => {
                    let dd = d * d;
                    let mut k = vec![0.0; t_len * d];
                    let mut norm = vec![0.0; t_len];
                    let mut q = vec![0.0; t_len * d];
                    let mut s = vec![0.0; t_len];
                    let mut beta = vec![0.0; t_len];
                    let mut r = vec![0.0; t_len * d];
                    let mut y = vec![0.0; t_len * d];
                    let mut h = vec![0.0; (t_len + 1) * dd];
                    h[..dd].copy_from_slice(&p[h0..h0 + dd]);
                    let mut v = vec![0.0; d];
                    for t in 0..t_len {
                        let u = &input[t * d..(t + 1) * d];
                        let kt = &mut k[t * d..(t + 1) * d];
                        mv(&p[wk..wk + dd], d, d, u, kt);
                        let m = (dot(kt, kt) + KEY_EPS).sqrt();
                        kt.iter_mut().for_each(|e| *e /= m);
                        norm[t] = m;
                        mv(&p[wv..wv + dd], d, d, u, &mut v);
                        mv(&p[wq..wq + dd], d, d, u, &mut q[t * d..(t + 1) * d]);
                        s[t] = dot(&p[wbeta..wbeta + d], u) + p[cbeta];
                        let bt = gate(LayerKind::Delta, spec.range, s[t]).0;
                        beta[t] = bt;
                        let (prev, next) = h.split_at_mut((t + 1) * dd);
                        let prev = &prev[t * dd..];
                        let next = &mut next[..dd];
                        // r = v − Hᵀk
                        let rt = &mut r[t * d..(t + 1) * d];
                        rt.copy_from_slice(&v);
                        for (i, &ki) in kt.iter().enumerate() {
                            ops::axpy(-ki, &prev[i * d..(i + 1) * d], rt);
                        }
                        for i in 0..d {
                            let c = bt * kt[i];
                            for j in 0..d {
                                next[i * d + j] = prev[i * d + j] + c * rt[j];
                            }
                        }
                        // y = H'ᵀ q
                        let yt = &mut y[t * d..(t + 1) * d];
                        mtv_acc(next, d, &q[t * d..(t + 1) * d], yt);
                        mv_acc(&p[wo..wo + dd], d, d, yt, &mut out[t * d..(t + 1) * d]);
                    }
                    LayerCache::Delta { k, norm, q, s, beta, r, y, h }
                }
                Offsets::Full { a, wo } => {
                    let n = cfg.full_dim;
                    let nn = n * n;
                    let mut h = vec![0.0; (t_len + 1) * nn];
                    for i in 0..n {
                        h[i * n + i] = 1.0;
                    }
                    let mut norm = vec![0.0; t_len];
                    let mut z = vec![0.0; t_len * nn];
                    for (t, &tok) in tokens.iter().enumerate() {
                        let at = &p[a + tok * nn..a + (tok + 1) * nn];
                        let (prev, next) = h.split_at_mut((t + 1) * nn);
                        let prev = &prev[t * nn..];
                        let next = &mut next[..nn];
                        for i in 0..n {
                            for l in 0..n {
                                let c = at[i * n + l];
                                ops::axpy(c, &prev[l * n..(l + 1) * n], &mut next[i * n..(i + 1) * n]);
                            }
                        }
                        let nr = dot(next, next).sqrt();
                        norm[t] = nr;
                        let scale = nr.max(1.0);
                        let zt = &mut z[t * nn..(t + 1) * nn];
                        for (zi, &hi) in zt.iter_mut().zip(next.iter()) {
                            *zi = hi / scale;
                        }
                        mv_acc(&p[wo..wo + d * nn], d, nn, zt, &mut out[t * d..(t + 1) * d]);
                    }
                    LayerCache::Full { h, norm, z }
                }
            };
            layers.push(cache);
            streams.push(out);
        }

        let c = cfg.classes;
        let last = streams.last().expect("nonempty");
        let mut rms = vec![0.0; t_len];
        let mut xhat = vec![0.0; t_len * d];
        let mut logits = vec![0.0; t_len * c];
        let hidden = match cfg.head {
            Head::Linear => 0,
            Head::Mlp { hidden } => hidden,
        };
        let mut pre = vec![0.0; t_len * hidden];
        let mut normed = vec![0.0; d];
        let mut act = vec![0.0; hidden];
        for t in 0..t_len {
            let xt = &last[t * d..(t + 1) * d];
            let r = (dot(xt, xt) / d as f64 + RMS_EPS).sqrt();
            rms[t] = r;
            let g = match self.layout.head {
                HeadOffsets::Linear { g, .. } | HeadOffsets::Mlp { g, .. } => g,
            };
            for i in 0..d {
                xhat[t * d + i] = xt[i] / r;
                normed[i] = xhat[t * d + i] * p[g + i];
            }
            let lt = &mut logits[t * c..(t + 1) * c];
            match self.layout.head {
                HeadOffsets::Linear { w, b, .. } => {
                    mv(&p[w..w + c * d], c, d, &normed, lt);
                    ops::axpy(1.0, &p[b..b + c], lt);
                }
                HeadOffsets::Mlp { w1, b1, w2, b2, .. } => {
                    let pt = &mut pre[t * hidden..(t + 1) * hidden];
                    mv(&p[w1..w1 + hidden * d], hidden, d, &normed, pt);
                    ops::axpy(1.0, &p[b1..b1 + hidden], pt);
                    for (ai, &zi) in act.iter_mut().zip(pt.iter()) {
                        *ai = ops::silu(zi);
                    }
                    mv(&p[w2..w2 + c * hidden], c, hidden, &act, lt);
                    ops::axpy(1.0, &p[b2..b2 + c], lt);
                }
            }
        }
        Ok(SeqCache {
            tokens: tokens.to_vec(),
            streams,
            layers,
            rms,
            xhat,
            pre,
            logits,
            num_params: self.layout.total,
        })
    }

    /// Accumulates parameter gradients into `grad` given `dlogits` (`T × classes`).
    pub fn backward_seq(&self, cache: &SeqCache, dlogits: &[f64], grad: &mut [f64]) -> Result<(), TrainError> {
        let cfg = &self.config;
        let (d, c) = (cfg.d_model, cfg.classes);
        let t_len = cache.len();
        if cache.num_params != self.layout.total || cache.layers.len() != cfg.layers.len() || cache.streams.len() != cfg.layers.len() + 1 {
            return Err(TrainError::StaleCache);
        }
        if dlogits.len() != t_len * c || grad.len() != self.layout.total {
            return Err(TrainError::Shape("gradient buffer size mismatch".into()));
        }
        let p = &self.params;

        // head
        let last = cache.streams.last().expect("nonempty");
        let mut dx = vec![0.0; t_len * d];
        let g = match self.layout.head {
            HeadOffsets::Linear { g, .. } | HeadOffsets::Mlp { g, .. } => g,
        };
        let hidden = match cfg.head {
            Head::Linear => 0,
            Head::Mlp { hidden } => hidden,
        };
        let mut normed = vec![0.0; d];
        let mut dn = vec![0.0; d];
        let mut act = vec![0.0; hidden];
        let mut dact = vec![0.0; hidden];
        for t in 0..t_len {
            let dl = &dlogits[t * c..(t + 1) * c];
            if dl.iter().all(|&v| v == 0.0) {
                continue;
            }
            let xh = &cache.xhat[t * d..(t + 1) * d];
            for i in 0..d {
                normed[i] = xh[i] * p[g + i];
            }
            dn.fill(0.0);
            match self.layout.head {
                HeadOffsets::Linear { w, b, .. } => {
                    outer_acc(&mut grad[w..w + c * d], d, dl, &normed);
                    ops::axpy(1.0, dl, &mut grad[b..b + c]);
                    mtv_acc(&p[w..w + c * d], d, dl, &mut dn);
                }
                HeadOffsets::Mlp { w1, b1, w2, b2, .. } => {
                    let pt = &cache.pre[t * hidden..(t + 1) * hidden];
                    for (ai, &zi) in act.iter_mut().zip(pt) {
                        *ai = ops::silu(zi);
                    }
                    outer_acc(&mut grad[w2..w2 + c * hidden], hidden, dl, &act);
                    ops::axpy(1.0, dl, &mut grad[b2..b2 + c]);
                    dact.fill(0.0);
                    mtv_acc(&p[w2..w2 + c * hidden], hidden, dl, &mut dact);
                    for (da, &zi) in dact.iter_mut().zip(pt) {
                        *da *= ops::silu_grad(zi);
                    }
                    outer_acc(&mut grad[w1..w1 + hidden * d], d, &dact, &normed);
                    ops::axpy(1.0, &dact, &mut grad[b1..b1 + hidden]);
                    mtv_acc(&p[w1..w1 + hidden * d], d, &dact, &mut dn);
                }
            }
            // RMS norm: dx = (dx̂ − x̂·mean(dx̂ ⊙ x̂)) / r
            let mut proj = 0.0;
            for i in 0..d {
                grad[g + i] += dn[i] * xh[i];
                dn[i] *= p[g + i];
                proj += dn[i] * xh[i];
            }
            proj /= d as f64;
            let r = cache.rms[t];
            for i in 0..d {
                dx[t * d + i] = (dn[i] - xh[i] * proj) / r;
            }
        }
        let _ = last;

        // layers, last to first; dx holds the gradient of the layer output stream
        for (li, (spec, off)) in cfg.layers.iter().zip(&self.layout.layers).enumerate().rev() {
            let input = &cache.streams[li];
            let mut du = dx.clone();
            match (*off, &cache.layers[li]) {
                (Offsets::Diagonal { wa, ca, wb, h0, wo }, LayerCache::Diagonal { z, a, h }) => {
                    let dd = d * d;
                    let mut carry = vec![0.0; d];
                    let mut dh = vec![0.0; d];
                    let mut dz = vec![0.0; d];
                    for t in (0..t_len).rev() {
                        let u = &input[t * d..(t + 1) * d];
                        let d_o = &dx[t * d..(t + 1) * d];
                        let h_next = &h[(t + 1) * d..(t + 2) * d];
                        let h_prev = &h[t * d..(t + 1) * d];
                        outer_acc(&mut grad[wo..wo + dd], d, d_o, h_next);
                        dh.copy_from_slice(&carry);
                        mtv_acc(&p[wo..wo + dd], d, d_o, &mut dh);
                        for i in 0..d {
                            let (_, dg) = gate(spec.kind, spec.range, z[t * d + i]);
                            dz[i] = dh[i] * h_prev[i] * dg;
                            carry[i] = dh[i] * a[t * d + i];
                            grad[ca + i] += dz[i];
                        }
                        outer_acc(&mut grad[wa..wa + dd], d, &dz, u);
                        outer_acc(&mut grad[wb..wb + dd], d, &dh, u);
                        let dut = &mut du[t * d..(t + 1) * d];
                        mtv_acc(&p[wa..wa + dd], d, &dz, dut);
                        mtv_acc(&p[wb..wb + dd], d, &dh, dut);
                    }
                    ops::axpy(1.0, &carry, &mut grad[h0..h0 + d]);
                }
                (
                    Offsets::Delta { wk, wv, wq, wbeta, cbeta, h0, wo },
                    LayerCache::Delta { k, norm, q, s, beta, r, y, h },
                ) => {
                    let dd = d * d;
                    let mut gmat = vec![0.0; dd];
                    let mut dy = vec![0.0; d];
                    let mut dq = vec![0.0; d];
                    let mut dk = vec![0.0; d];
                    let mut dr = vec![0.0; d];
                    let mut gr = vec![0.0; d];
                    let mut dkr = vec![0.0; d];
                    for t in (0..t_len).rev() {
                        let u = &input[t * d..(t + 1) * d];
                        let d_o = &dx[t * d..(t + 1) * d];
                        let kt = &k[t * d..(t + 1) * d];
                        let qt = &q[t * d..(t + 1) * d];
                        let rt = &r[t * d..(t + 1) * d];
                        let h_next = &h[(t + 1) * dd..(t + 2) * dd];
                        let h_prev = &h[t * dd..(t + 1) * dd];
                        let bt = beta[t];
                        outer_acc(&mut grad[wo..wo + dd], d, d_o, &y[t * d..(t + 1) * d]);
                        dy.fill(0.0);
                        mtv_acc(&p[wo..wo + dd], d, d_o, &mut dy);
                        // y = H'ᵀ q
                        outer_acc(&mut gmat, d, qt, &dy);
                        mv(h_next, d, d, &dy, &mut dq);
                        // H' = H + β k rᵀ
                        mv(&gmat, d, d, rt, &mut gr);
                        let dbeta = dot(kt, &gr);
                        for i in 0..d {
                            dk[i] = bt * gr[i];
                        }
                        dr.fill(0.0);
                        mtv_acc(&gmat, d, kt, &mut dr);
                        dr.iter_mut().for_each(|e| *e *= bt);
                        // r = v − Hᵀk: dv = dr, dk −= H dr, dH −= k drᵀ
                        for i in 0..d {
                            dk[i] -= dot(&h_prev[i * d..(i + 1) * d], &dr);
                        }
                        for i in 0..d {
                            ops::axpy(-kt[i], &dr, &mut gmat[i * d..(i + 1) * d]);
                        }
                        let kdk = dot(kt, &dk);
                        for i in 0..d {
                            dkr[i] = (dk[i] - kt[i] * kdk) / norm[t];
                        }
                        let ds = dbeta * gate(LayerKind::Delta, spec.range, s[t]).1;
                        ops::axpy(ds, u, &mut grad[wbeta..wbeta + d]);
                        grad[cbeta] += ds;
                        outer_acc(&mut grad[wk..wk + dd], d, &dkr, u);
                        outer_acc(&mut grad[wv..wv + dd], d, &dr, u);
                        outer_acc(&mut grad[wq..wq + dd], d, &dq, u);
                        let dut = &mut du[t * d..(t + 1) * d];
                        mtv_acc(&p[wk..wk + dd], d, &dkr, dut);
                        mtv_acc(&p[wv..wv + dd], d, &dr, dut);
                        mtv_acc(&p[wq..wq + dd], d, &dq, dut);
                        ops::axpy(ds, &p[wbeta..wbeta + d], dut);
                    }
                    ops::axpy(1.0, &gmat, &mut grad[h0..h0 + dd]);
                }
                (Offsets::Full { a, wo }, LayerCache::Full { h, norm, z }) => {
                    let n = cfg.full_dim;
                    let nn = n * n;
                    let mut gmat = vec![0.0; nn];
                    let mut dz = vec![0.0; nn];
                    let mut prev_g = vec![0.0; nn];
                    for t in (0..t_len).rev() {
                        let d_o = &dx[t * d..(t + 1) * d];
                        let zt = &z[t * nn..(t + 1) * nn];
                        outer_acc(&mut grad[wo..wo + d * nn], nn, d_o, zt);
                        dz.fill(0.0);
                        mtv_acc(&p[wo..wo + d * nn], nn, d_o, &mut dz);
                        if norm[t] > 1.0 {
                            let zd = dot(zt, &dz);
                            for i in 0..nn {
                                gmat[i] += (dz[i] - zt[i] * zd) / norm[t];
                            }
                        } else {
                            ops::axpy(1.0, &dz, &mut gmat);
                        }
                        let tok = cache.tokens[t];
                        let at = &p[a + tok * nn..a + (tok + 1) * nn];
                        let h_prev = &h[t * nn..(t + 1) * nn];
                        // H' = A H: dA += G Hᵀ, dH = Aᵀ G
                        let ga = &mut grad[a + tok * nn..a + (tok + 1) * nn];
                        for i in 0..n {
                            for l in 0..n {
                                ga[i * n + l] += dot(&gmat[i * n..(i + 1) * n], &h_prev[l * n..(l + 1) * n]);
                            }
                        }
                        prev_g.fill(0.0);
                        for i in 0..n {
                            for l in 0..n {
                                let c = at[i * n + l];
                                ops::axpy(c, &gmat[i * n..(i + 1) * n], &mut prev_g[l * n..(l + 1) * n]);
                            }
                        }
                        std::mem::swap(&mut gmat, &mut prev_g);
                    }
                }
                _ => return Err(TrainError::StaleCache),
            }
            dx = du;
        }

        for (t, &tok) in cache.tokens.iter().enumerate() {
            let e = self.layout.embed + tok * d;
            ops::axpy(1.0, &dx[t * d..(t + 1) * d], &mut grad[e..e + d]);
        }
        Ok(())
    }

    /// Per-position argmax predictions.
    pub fn predict_seq(&self, tokens: &[usize]) -> Result<Vec<usize>, TrainError> {
        let cache = self.forward_seq(tokens)?;
        let c = self.config.classes;
        Ok((0..tokens.len()).map(|t| ops::argmax(cache.logits_at(t, c))).collect())
    }
}

/// Forward pass over a batch of sequences.
pub fn forward(model: &TrainableModel, batch: &[Vec<usize>]) -> Result<(Vec<Vec<f64>>, Vec<SeqCache>), TrainError> {
    let caches = batch.iter().map(|s| model.forward_seq(s)).collect::<Result<Vec<_>, _>>()?;
    Ok((caches.iter().map(|c| c.logits.clone()).collect(), caches))
}

/// Parameter gradients for a batch given per-sequence logit gradients.
pub fn backward(model: &TrainableModel, caches: &[SeqCache], dlogits: &[Vec<f64>]) -> Result<Vec<f64>, TrainError> {
    if caches.len() != dlogits.len() {
        return Err(TrainError::Shape("one logit gradient per cached sequence required".into()));
    }
    let mut grad = vec![0.0; model.num_params()];
    for (c, dl) in caches.iter().zip(dlogits) {
        model.backward_seq(c, dl, &mut grad)?;
    }
    Ok(grad)
}

/// Norms of the projected full-matrix states, per layer and position.
pub fn full_state_norms(model: &TrainableModel, cache: &SeqCache) -> Vec<f64> {
    let nn = model.config.full_dim * model.config.full_dim;
    let mut out = Vec::new();
    for lc in &cache.layers {
        if let LayerCache::Full { z, .. } = lc {
            out.extend(z.chunks_exact(nn).map(|zt| dot(zt, zt).sqrt()));
        }
    }
    out
}

/// Norms of the normalized delta-rule keys, per layer and position.
pub fn delta_key_norms(model: &TrainableModel, cache: &SeqCache) -> Vec<f64> {
    let d = model.config.d_model;
    let mut out = Vec::new();
    for lc in &cache.layers {
        if let LayerCache::Delta { k, .. } = lc {
            out.extend(k.chunks_exact(d).map(|kt| dot(kt, kt).sqrt()));
        }
    }
    out
}
