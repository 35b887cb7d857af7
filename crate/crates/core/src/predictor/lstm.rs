//! Attention LSTM risk model with an explicit backward pass.
//!
//! Per timestep, every observed variable is embedded from its standardized
//! value and an age-decay feature, pooled by additive variable attention,
//! and fed to a stack of LSTM layers whose initial states are projected from
//! the static features. Top-layer outputs are pooled by additive collection
//! attention and mapped to a logit.
//!
//! All trainable weights live in one flat vector so that gradients,
//! clipping, finite differences and serialization share a single layout.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::input::{ModelInput, Step};
use crate::predictor::math::{
    dot, matvec_acc, matvec_t_acc, outer_acc, sigmoid, softmax_in_place, softplus,
};
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmShape {
    pub n_variables: usize,
    pub static_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub attention_dim: usize,
}

impl LstmShape {
    /// 256-wide embeddings and hidden states, two layers.
    pub fn standard(n_variables: usize, static_dim: usize) -> Self {
        Self {
            n_variables,
            static_dim,
            embed_dim: 256,
            hidden_dim: 256,
            layers: 2,
            attention_dim: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_variables == 0
            || self.embed_dim == 0
            || self.hidden_dim == 0
            || self.layers == 0
            || self.attention_dim == 0
        {
            return Err(Error::Shape(format!("all dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerLayout {
    input_dim: usize,
    w_ih: usize,
    w_hh: usize,
    bias: usize,
    h0_w: usize,
    h0_b: usize,
    c0_w: usize,
    c0_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    embed_w: usize,
    embed_b: usize,
    var_w: usize,
    var_b: usize,
    var_u: usize,
    layers: Vec<LayerLayout>,
    col_w: usize,
    col_b: usize,
    col_u: usize,
    head_w: usize,
    head_b: usize,
    total: usize,
}

impl Layout {
    fn new(s: &LstmShape) -> Self {
        let (v, e, h, a, st) = (s.n_variables, s.embed_dim, s.hidden_dim, s.attention_dim, s.static_dim);
        let mut at = 0;
        let mut take = |n: usize| {
            let start = at;
            at += n;
            start
        };
        let embed_w = take(v * e * 2);
        let embed_b = take(v * e);
        let var_w = take(a * e);
        let var_b = take(a);
        let var_u = take(a);
        let layers = (0..s.layers)
            .map(|l| {
                let input_dim = if l == 0 { e } else { h };
                LayerLayout {
                    input_dim,
                    w_ih: take(4 * h * input_dim),
                    w_hh: take(4 * h * h),
                    bias: take(4 * h),
                    h0_w: take(h * st),
                    h0_b: take(h),
                    c0_w: take(h * st),
                    c0_b: take(h),
                }
            })
            .collect();
        let col_w = take(a * h);
        let col_b = take(a);
        let col_u = take(a);
        let head_w = take(h);
        let head_b = take(1);
        Self {
            embed_w,
            embed_b,
            var_w,
            var_b,
            var_u,
            layers,
            col_w,
            col_b,
            col_u,
            head_w,
            head_b,
            total: at,
        }
    }
}

/// Trainable parameters plus the fixed per-variable decay scales.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    shape: LstmShape,
    decay_hours: Vec<f64>,
    theta: Vec<f64>,
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
struct LstmParamsRepr {
    shape: LstmShape,
    decay_hours: Vec<f64>,
    theta: Vec<f64>,
}

impl Serialize for LstmParams {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        LstmParamsRepr {
            shape: self.shape,
            decay_hours: self.decay_hours.clone(),
            theta: self.theta.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for LstmParams {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let r = LstmParamsRepr::deserialize(de)?;
        LstmParams::from_parts(r.shape, r.decay_hours, r.theta).map_err(serde::de::Error::custom)
    }
}

/// Everything the forward pass exposes for interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Per step, one weight per observed entry (empty for empty steps).
    pub variable_attention: Vec<Vec<f64>>,
    /// Top-layer hidden vector per step.
    pub hidden: Vec<Vec<f64>>,
    /// One weight per step.
    pub collection_attention: Vec<f64>,
    pub logit: f64,
    pub probability: f64,
}

struct StepTape {
    vars: Vec<usize>,
    feats: Vec<[f64; 2]>,
    emb: Vec<f64>,
    att: Vec<f64>,
    alpha: Vec<f64>,
    x: Vec<f64>,
}

struct CellTape {
    /// Activated gates, order i, f, g, o.
    gates: Vec<f64>,
    c: Vec<f64>,
    tc: Vec<f64>,
    h: Vec<f64>,
}

struct Tape {
    steps: Vec<StepTape>,
    cells: Vec<Vec<CellTape>>,
    h0: Vec<Vec<f64>>,
    c0: Vec<Vec<f64>>,
    col_act: Vec<Vec<f64>>,
    beta: Vec<f64>,
    pooled: Vec<f64>,
    logit: f64,
}

impl LstmParams {
    /// Uniform fan-in initialisation; forget-gate biases start at 1.
    pub fn init(shape: LstmShape, decay_hours: Vec<f64>, seed: u64) -> Result<Self> {
        let mut p = Self::from_parts(shape, decay_hours, vec![0.0; Layout::new(&shape).total])?;
        let mut rng = rng_for(seed, &[0x1157]);
        let s = shape;
        let mut fill = |theta: &mut [f64], start: usize, len: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for w in &mut theta[start..start + len] {
                *w = rng.random_range(-bound..bound);
            }
        };
        let l = p.layout.clone();
        let th = &mut p.theta;
        fill(th, l.embed_w, s.n_variables * s.embed_dim * 2, 2);
        fill(th, l.var_w, s.attention_dim * s.embed_dim, s.embed_dim);
        fill(th, l.var_u, s.attention_dim, s.attention_dim);
        for ll in &l.layers {
            let h = s.hidden_dim;
            fill(th, ll.w_ih, 4 * h * ll.input_dim, ll.input_dim);
            fill(th, ll.w_hh, 4 * h * h, h);
            th[ll.bias + h..ll.bias + 2 * h].fill(1.0);
            fill(th, ll.h0_w, h * s.static_dim, s.static_dim.max(1) * 4);
            fill(th, ll.c0_w, h * s.static_dim, s.static_dim.max(1) * 4);
        }
        fill(th, l.col_w, s.attention_dim * s.hidden_dim, s.hidden_dim);
        fill(th, l.col_u, s.attention_dim, s.attention_dim);
        fill(th, l.head_w, s.hidden_dim, s.hidden_dim);
        Ok(p)
    }

    pub fn from_parts(shape: LstmShape, decay_hours: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        let layout = Layout::new(&shape);
        if theta.len() != layout.total {
            return Err(Error::Shape(format!(
                "expected {} parameters for {shape:?}, got {}",
                layout.total,
                theta.len()
            )));
        }
        if decay_hours.len() != shape.n_variables || decay_hours.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Shape(format!(
                "need {} positive decay scales, got {:?}",
                shape.n_variables, decay_hours
            )));
        }
        if theta.iter().any(|w| !w.is_finite()) {
            return Err(Error::Shape("parameters must be finite".into()));
        }
        Ok(Self {
            shape,
            decay_hours,
            theta,
            layout,
        })
    }

    pub fn shape(&self) -> &LstmShape {
        &self.shape
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn decay_hours(&self) -> &[f64] {
        &self.decay_hours
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    /// Zeroes the output head so every prediction is exactly 0.5.
    pub fn zero_head(&mut self) {
        let h = self.shape.hidden_dim;
        let at = self.layout.head_w;
        self.theta[at..at + h + 1].fill(0.0);
    }

    pub fn head_bias_index(&self) -> usize {
        self.layout.head_b
    }

    /// Zeroes the embedding of `variable`, making it inert.
    pub fn silence_variable(&mut self, variable: usize) {
        let e = self.shape.embed_dim;
        let w = self.layout.embed_w + variable * e * 2;
        self.theta[w..w + 2 * e].fill(0.0);
        let b = self.layout.embed_b + variable * e;
        self.theta[b..b + e].fill(0.0);
    }

    /// Index range of the embedding weights of `variable`.
    pub fn embedding_range(&self, variable: usize) -> std::ops::Range<usize> {
        let e = self.shape.embed_dim;
        let w = self.layout.embed_w + variable * e * 2;
        w..w + 2 * e
    }

    pub fn check_input(&self, input: &ModelInput) -> Result<()> {
        if input.statics.len() != self.shape.static_dim {
            return Err(Error::Shape(format!(
                "static vector has {} features, model expects {}",
                input.statics.len(),
                self.shape.static_dim
            )));
        }
        for step in &input.steps {
            for e in &step.entries {
                if e.variable >= self.shape.n_variables {
                    return Err(Error::Shape(format!(
                        "variable id {} outside vocabulary of {}",
                        e.variable, self.shape.n_variables
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &ModelInput) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let tape = self.run(input);
        let top = self.shape.layers - 1;
        Ok(ForwardTrace {
            variable_attention: tape.steps.iter().map(|s| s.alpha.clone()).collect(),
            hidden: tape.cells[top].iter().map(|c| c.h.clone()).collect(),
            collection_attention: tape.beta.clone(),
            logit: tape.logit,
            probability: sigmoid(tape.logit),
        })
    }

    /// Binary cross-entropy of one example.
    pub fn loss(&self, input: &ModelInput, label: bool) -> f64 {
        let logit = self.run(input).logit;
        softplus(logit) - if label { logit } else { 0.0 }
    }

    /// Adds the gradient of the example loss into `grad`; returns the loss.
    pub fn accumulate_gradient(&self, input: &ModelInput, label: bool, grad: &mut [f64]) -> f64 {
        debug_assert_eq!(grad.len(), self.theta.len());
        let tape = self.run(input);
        let y = if label { 1.0 } else { 0.0 };
        let loss = softplus(tape.logit) - y * tape.logit;
        self.backward(input, &tape, sigmoid(tape.logit) - y, grad);
        loss
    }

    fn embed_step(&self, step: &Step) -> StepTape {
        let s = &self.shape;
        let (e, a) = (s.embed_dim, s.attention_dim);
        let th = &self.theta;
        let l = &self.layout;
        let n = step.entries.len();
        let mut vars = Vec::with_capacity(n);
        let mut feats = Vec::with_capacity(n);
        let mut emb = vec![0.0; n * e];
        let mut att = vec![0.0; n * a];
        let mut scores = vec![0.0; n];
        for (j, entry) in step.entries.iter().enumerate() {
            let v = entry.variable;
            let f = [entry.value, (-entry.age.max(0.0) / self.decay_hours[v]).exp()];
            let w = &th[l.embed_w + v * e * 2..l.embed_w + (v + 1) * e * 2];
            let b = &th[l.embed_b + v * e..l.embed_b + (v + 1) * e];
            let ej = &mut emb[j * e..(j + 1) * e];
            for k in 0..e {
                ej[k] = w[2 * k] * f[0] + w[2 * k + 1] * f[1] + b[k];
            }
            let aj = &mut att[j * a..(j + 1) * a];
            aj.copy_from_slice(&th[l.var_b..l.var_b + a]);
            matvec_acc(&th[l.var_w..l.var_w + a * e], a, e, ej, aj);
            for x in aj.iter_mut() {
                *x = x.tanh();
            }
            scores[j] = dot(&th[l.var_u..l.var_u + a], aj);
            vars.push(v);
            feats.push(f);
        }
        softmax_in_place(&mut scores);
        let mut x = vec![0.0; e];
        for j in 0..n {
            let aj = scores[j];
            for (xk, ek) in x.iter_mut().zip(&emb[j * e..(j + 1) * e]) {
                *xk += aj * ek;
            }
        }
        StepTape {
            vars,
            feats,
            emb,
            att,
            alpha: scores,
            x,
        }
    }

    fn initial_states(&self, statics: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let h = self.shape.hidden_dim;
        let st = self.shape.static_dim;
        let th = &self.theta;
        let mut h0 = Vec::with_capacity(self.shape.layers);
        let mut c0 = Vec::with_capacity(self.shape.layers);
        for ll in &self.layout.layers {
            let mut hv = th[ll.h0_b..ll.h0_b + h].to_vec();
            matvec_acc(&th[ll.h0_w..ll.h0_w + h * st], h, st, statics, &mut hv);
            let mut cv = th[ll.c0_b..ll.c0_b + h].to_vec();
            matvec_acc(&th[ll.c0_w..ll.c0_w + h * st], h, st, statics, &mut cv);
            h0.push(hv);
            c0.push(cv);
        }
        (h0, c0)
    }

    fn cell(&self, layer: usize, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> CellTape {
        let h = self.shape.hidden_dim;
        let ll = &self.layout.layers[layer];
        let th = &self.theta;
        let mut gates = th[ll.bias..ll.bias + 4 * h].to_vec();
        matvec_acc(&th[ll.w_ih..ll.w_ih + 4 * h * ll.input_dim], 4 * h, ll.input_dim, x, &mut gates);
        matvec_acc(&th[ll.w_hh..ll.w_hh + 4 * h * h], 4 * h, h, h_prev, &mut gates);
        for (k, g) in gates.iter_mut().enumerate() {
            *g = if (2 * h..3 * h).contains(&k) { g.tanh() } else { sigmoid(*g) };
        }
        let mut c = vec![0.0; h];
        let mut tc = vec![0.0; h];
        let mut hv = vec![0.0; h];
        for k in 0..h {
            c[k] = gates[h + k] * c_prev[k] + gates[k] * gates[2 * h + k];
            tc[k] = c[k].tanh();
            hv[k] = gates[3 * h + k] * tc[k];
        }
        CellTape { gates, c, tc, h: hv }
    }

    fn collection_score(&self, hv: &[f64]) -> (Vec<f64>, f64) {
        let (a, h) = (self.shape.attention_dim, self.shape.hidden_dim);
        let l = &self.layout;
        let th = &self.theta;
        let mut act = th[l.col_b..l.col_b + a].to_vec();
        matvec_acc(&th[l.col_w..l.col_w + a * h], a, h, hv, &mut act);
        for x in act.iter_mut() {
            *x = x.tanh();
        }
        let score = dot(&th[l.col_u..l.col_u + a], &act);
        (act, score)
    }

    fn head(&self, pooled: &[f64]) -> f64 {
        let l = &self.layout;
        let h = self.shape.hidden_dim;
        dot(&self.theta[l.head_w..l.head_w + h], pooled) + self.theta[l.head_b]
    }

    fn run(&self, input: &ModelInput) -> Tape {
        let n_layers = self.shape.layers;
        let steps: Vec<StepTape> = input.steps.iter().map(|s| self.embed_step(s)).collect();
        let (h0, c0) = self.initial_states(&input.statics);
        let mut cells: Vec<Vec<CellTape>> = (0..n_layers).map(|_| Vec::with_capacity(steps.len())).collect();
        for (t, st) in steps.iter().enumerate() {
            for l in 0..n_layers {
                let cell = {
                    let x: &[f64] = if l == 0 { &st.x } else { &cells[l - 1][t].h };
                    let (hp, cp): (&[f64], &[f64]) = if t == 0 {
                        (&h0[l], &c0[l])
                    } else {
                        (&cells[l][t - 1].h, &cells[l][t - 1].c)
                    };
                    self.cell(l, x, hp, cp)
                };
                cells[l].push(cell);
            }
        }
        let top = &cells[n_layers - 1];
        let mut col_act = Vec::with_capacity(top.len());
        let mut beta = Vec::with_capacity(top.len());
        for c in top {
            let (act, s) = self.collection_score(&c.h);
            col_act.push(act);
            beta.push(s);
        }
        softmax_in_place(&mut beta);
        let pooled = if top.is_empty() {
            h0[n_layers - 1].clone()
        } else {
            let mut p = vec![0.0; self.shape.hidden_dim];
            for (b, c) in beta.iter().zip(top) {
                for (pk, hk) in p.iter_mut().zip(&c.h) {
                    *pk += b * hk;
                }
            }
            p
        };
        let logit = self.head(&pooled);
        Tape {
            steps,
            cells,
            h0,
            c0,
            col_act,
            beta,
            pooled,
            logit,
        }
    }

    fn backward(&self, input: &ModelInput, tape: &Tape, dlogit: f64, grad: &mut [f64]) {
        let s = &self.shape;
        let (h, a, st) = (s.hidden_dim, s.attention_dim, s.static_dim);
        let l = &self.layout;
        let th = &self.theta;
        let n_steps = tape.steps.len();
        let top = s.layers - 1;

        for k in 0..h {
            grad[l.head_w + k] += dlogit * tape.pooled[k];
        }
        grad[l.head_b] += dlogit;
        let dpooled: Vec<f64> = th[l.head_w..l.head_w + h].iter().map(|w| dlogit * w).collect();

        if n_steps == 0 {
            let ll = &l.layers[top];
            outer_acc(&mut grad[ll.h0_w..ll.h0_w + h * st], h, st, &dpooled, &input.statics);
            for k in 0..h {
                grad[ll.h0_b + k] += dpooled[k];
            }
            return;
        }

        // Collection attention.
        let mut dh_ext: Vec<Vec<f64>> = vec![vec![0.0; h]; n_steps];
        let pooled_dot = dot(&tape.pooled, &dpooled);
        for t in 0..n_steps {
            let ht = &tape.cells[top][t].h;
            let beta = tape.beta[t];
            for k in 0..h {
                dh_ext[t][k] += beta * dpooled[k];
            }
            let ds = beta * (dot(ht, &dpooled) - pooled_dot);
            let act = &tape.col_act[t];
            let mut dpre = vec![0.0; a];
            for m in 0..a {
                grad[l.col_u + m] += ds * act[m];
                dpre[m] = ds * th[l.col_u + m] * (1.0 - act[m] * act[m]);
                grad[l.col_b + m] += dpre[m];
            }
            outer_acc(&mut grad[l.col_w..l.col_w + a * h], a, h, &dpre, ht);
            matvec_t_acc(&th[l.col_w..l.col_w + a * h], a, h, &dpre, &mut dh_ext[t]);
        }

        // Recurrent layers, top to bottom.
        for layer in (0..s.layers).rev() {
            let ll = &l.layers[layer];
            let in_dim = ll.input_dim;
            let mut dx_all: Vec<Vec<f64>> = vec![vec![0.0; in_dim]; n_steps];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            let mut dz = vec![0.0; 4 * h];
            for t in (0..n_steps).rev() {
                let cell = &tape.cells[layer][t];
                let (h_prev, c_prev): (&[f64], &[f64]) = if t == 0 {
                    (&tape.h0[layer], &tape.c0[layer])
                } else {
                    (&tape.cells[layer][t - 1].h, &tape.cells[layer][t - 1].c)
                };
                let x: &[f64] = if layer == 0 {
                    &tape.steps[t].x
                } else {
                    &tape.cells[layer - 1][t].h
                };
                let g = &cell.gates;
                for k in 0..h {
                    let dh = dh_ext[t][k] + dh_next[k];
                    let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                    let tc = cell.tc[k];
                    let d_o = dh * tc;
                    let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                    dz[k] = dc * gg * i * (1.0 - i);
                    dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
                    dz[2 * h + k] = dc * i * (1.0 - gg * gg);
                    dz[3 * h + k] = d_o * o * (1.0 - o);
                    dc_next[k] = dc * f;
                }
                outer_acc(&mut grad[ll.w_ih..ll.w_ih + 4 * h * in_dim], 4 * h, in_dim, &dz, x);
                outer_acc(&mut grad[ll.w_hh..ll.w_hh + 4 * h * h], 4 * h, h, &dz, h_prev);
                for k in 0..4 * h {
                    grad[ll.bias + k] += dz[k];
                }
                matvec_t_acc(&th[ll.w_ih..ll.w_ih + 4 * h * in_dim], 4 * h, in_dim, &dz, &mut dx_all[t]);
                dh_next.fill(0.0);
                matvec_t_acc(&th[ll.w_hh..ll.w_hh + 4 * h * h], 4 * h, h, &dz, &mut dh_next);
            }
            outer_acc(&mut grad[ll.h0_w..ll.h0_w + h * st], h, st, &dh_next, &input.statics);
            outer_acc(&mut grad[ll.c0_w..ll.c0_w + h * st], h, st, &dc_next, &input.statics);
            for k in 0..h {
                grad[ll.h0_b + k] += dh_next[k];
                grad[ll.c0_b + k] += dc_next[k];
            }
            if layer > 0 {
                dh_ext = dx_all;
            } else {
                for (step, dx) in tape.steps.iter().zip(&dx_all) {
                    self.backward_step(step, dx, grad);
                }
            }
        }
    }

    fn backward_step(&self, step: &StepTape, dx: &[f64], grad: &mut [f64]) {
        let (e, a) = (self.shape.embed_dim, self.shape.attention_dim);
        let l = &self.layout;
        let th = &self.theta;
        let x_dot = dot(&step.x, dx);
        let mut de = vec![0.0; e];
        let mut dpre = vec![0.0; a];
        for (j, &v) in step.vars.iter().enumerate() {
            let ej = &step.emb[j * e..(j + 1) * e];
            let act = &step.att[j * a..(j + 1) * a];
            let alpha = step.alpha[j];
            let ds = alpha * (dot(ej, dx) - x_dot);
            for k in 0..e {
                de[k] = alpha * dx[k];
            }
            for m in 0..a {
                grad[l.var_u + m] += ds * act[m];
                dpre[m] = ds * th[l.var_u + m] * (1.0 - act[m] * act[m]);
                grad[l.var_b + m] += dpre[m];
            }
            outer_acc(&mut grad[l.var_w..l.var_w + a * e], a, e, &dpre, ej);
            matvec_t_acc(&th[l.var_w..l.var_w + a * e], a, e, &dpre, &mut de);
            let f = step.feats[j];
            let w = l.embed_w + v * e * 2;
            let b = l.embed_b + v * e;
            for k in 0..e {
                grad[w + 2 * k] += de[k] * f[0];
                grad[w + 2 * k + 1] += de[k] * f[1];
                grad[b + k] += de[k];
            }
        }
    }

    /// Runs all but the final step once so many candidate final steps can be
    /// scored cheaply.
    pub fn encode_prefix(&self, statics: &[f64], prefix: &[Step]) -> PrefixState<'_> {
        let (mut h, mut c) = self.initial_states(statics);
        let n_layers = self.shape.layers;
        let mut max_score = f64::NEG_INFINITY;
        let mut weighted = vec![0.0; self.shape.hidden_dim];
        let mut norm = 0.0;
        for step in prefix {
            let st = self.embed_step(step);
            let mut x = st.x;
            for l in 0..n_layers {
                let cell = self.cell(l, &x, &h[l], &c[l]);
                h[l] = cell.h;
                c[l] = cell.c;
                x = h[l].clone();
            }
            let (_, s) = self.collection_score(&h[n_layers - 1]);
            accumulate_pool(&mut max_score, &mut weighted, &mut norm, s, &h[n_layers - 1]);
        }
        PrefixState {
            params: self,
            h,
            c,
            max_score,
            weighted,
            norm,
        }
    }
}

fn accumulate_pool(max_score: &mut f64, weighted: &mut [f64], norm: &mut f64, s: f64, hv: &[f64]) {
    let m = max_score.max(s);
    let old = if max_score.is_finite() { (*max_score - m).exp() } else { 0.0 };
    let new = (s - m).exp();
    for (w, x) in weighted.iter_mut().zip(hv) {
        *w = *w * old + new * x;
    }
    *norm = *norm * old + new;
    *max_score = m;
}

/// Recurrent state after a fixed prefix of steps.
#[derive(Debug, Clone)]
pub struct PrefixState<'a> {
    params: &'a LstmParams,
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    max_score: f64,
    weighted: Vec<f64>,
    norm: f64,
}

impl PrefixState<'_> {
    /// Logit after appending `last` to the prefix.
    pub fn finish_logit(&self, last: &Step) -> f64 {
        let p = self.params;
        let st = p.embed_step(last);
        let mut x = st.x;
        let mut top = Vec::new();
        for l in 0..p.shape.layers {
            let cell = p.cell(l, &x, &self.h[l], &self.c[l]);
            x = cell.h.clone();
            top = cell.h;
        }
        let (_, s) = p.collection_score(&top);
        let mut max_score = self.max_score;
        let mut weighted = self.weighted.clone();
        let mut norm = self.norm;
        accumulate_pool(&mut max_score, &mut weighted, &mut norm, s, &top);
        for w in weighted.iter_mut() {
            *w /= norm;
        }
        p.head(&weighted)
    }

    pub fn finish(&self, last: &Step) -> f64 {
        sigmoid(self.finish_logit(last))
    }
}
