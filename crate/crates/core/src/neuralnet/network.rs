use rayon::prelude::*;

use super::config::{InceptionBranch, ModelConfig, Shapes};
use super::layers::{
    conv_backward, conv_forward, cross_entropy, leaky, leaky_grad, pool_backward, pool_forward, sigmoid, softmax,
    ConvGeom,
};
use super::params::Weights;
use crate::error::{Error, Result};
use crate::lobdata::Movement;
use crate::rng::CounterRng;
use crate::scalar::{lit, Scalar};
use crate::uncertainty::{McSamples, CLASSES};

/// Per-channel inverted-dropout multipliers, shared by every timestep of a pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask<S> {
    pub rate: f64,
    /// Each entry is `0` or `1 / (1 - rate)`.
    pub values: Vec<S>,
}

impl<S: Scalar> DropoutMask<S> {
    /// One uniform draw per channel; a channel is kept when the draw is `>= rate`.
    pub fn sample(channels: usize, rate: f64, rng: &mut CounterRng) -> Self {
        let keep: S = S::one() / lit(1.0 - rate);
        let values = (0..channels)
            .map(|_| if rng.uniform() >= rate { keep } else { S::zero() })
            .collect();
        Self { rate, values }
    }

    pub fn ones(channels: usize) -> Self {
        Self {
            rate: 0.0,
            values: vec![S::one(); channels],
        }
    }

    pub fn kept(&self) -> usize {
        self.values.iter().filter(|v| **v != S::zero()).count()
    }
}

/// Receives `(timestep, mask)` each time the dropout mask is applied.
pub type MaskObserver<'a, S> = dyn FnMut(usize, &[S]) + 'a;

/// How the dropout layer behaves during a forward pass.
pub enum Mode<'a, S> {
    /// No mask; inverted scaling makes this the expectation pass.
    Deterministic,
    /// Draws a fresh mask from the stream before computing anything else.
    Stochastic(&'a mut CounterRng),
    /// Applies the given mask.
    Frozen(&'a DropoutMask<S>),
}

/// One labelled training input with the dropout mask to use for it.
#[derive(Debug, Clone)]
pub struct Example<'a, S> {
    pub input: &'a [S],
    pub label: Movement,
    pub mask: Option<DropoutMask<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<S> {
    config: ModelConfig,
    shapes: Shapes,
    weights: Weights<S>,
}

struct TrunkCache<S> {
    /// Input of every conv block, then the conv stack output.
    conv_acts: Vec<Vec<S>>,
    conv_pre: Vec<Vec<S>>,
    branch_pre: Vec<Vec<S>>,
    branch_pool: Vec<Option<(Vec<S>, Vec<u32>)>>,
    features: Vec<S>,
}

struct HeadCache<S> {
    x: Vec<S>,
    gates: Vec<S>,
    c: Vec<S>,
    tanh_c: Vec<S>,
    h: Vec<S>,
    logits: [S; CLASSES],
}

fn check_finite<S: Scalar>(v: &[S], layer: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer: layer.into() })
    }
}

impl<S: Scalar> Network<S> {
    pub fn new(config: ModelConfig, weights: Weights<S>) -> Result<Self> {
        let shapes = config.shapes()?;
        weights.check(&config)?;
        Ok(Self {
            config,
            shapes,
            weights,
        })
    }

    pub fn init(config: ModelConfig, rng: &mut CounterRng) -> Result<Self> {
        let weights = Weights::init(&config, rng)?;
        Self::new(config, weights)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn shapes(&self) -> &Shapes {
        &self.shapes
    }

    pub fn weights(&self) -> &Weights<S> {
        &self.weights
    }

    pub fn into_weights(self) -> Weights<S> {
        self.weights
    }

    /// Replaces the weights, re-validating their shapes.
    pub fn set_weights(&mut self, weights: Weights<S>) -> Result<()> {
        weights.check(&self.config)?;
        self.weights = weights;
        Ok(())
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Weights<S> {
        &mut self.weights
    }

    /// Number of channels the dropout mask covers.
    pub fn mask_channels(&self) -> usize {
        self.shapes.recurrent_input
    }

    pub fn sample_mask(&self, rng: &mut CounterRng) -> DropoutMask<S> {
        DropoutMask::sample(self.mask_channels(), self.config.dropout_rate, rng)
    }

    fn conv_index(&self, i: usize) -> usize {
        2 * i
    }

    fn inception_index(&self, j: usize) -> usize {
        2 * (self.config.conv_blocks.len() + j)
    }

    fn lstm_index(&self) -> usize {
        2 * (self.config.conv_blocks.len() + self.config.inception.len())
    }

    fn conv_geom(&self, i: usize) -> ConvGeom {
        let b = self.config.conv_blocks[i];
        let (w_in, c_in) = self.shapes.conv_io[i];
        let (w_out, c_out) = self.shapes.conv_io[i + 1];
        ConvGeom {
            steps: self.config.window,
            w_in,
            c_in,
            kt: b.kernel.0,
            kf: b.kernel.1,
            sf: b.stride.1,
            c_out,
            w_out,
        }
    }

    fn branch_geom(&self, j: usize) -> ConvGeom {
        let (kt, filters) = match self.config.inception[j] {
            InceptionBranch::Conv { time_kernel, filters } => (time_kernel, filters),
            InceptionBranch::PoolConv { filters, .. } => (1, filters),
        };
        ConvGeom {
            steps: self.config.window,
            w_in: self.shapes.trunk_width,
            c_in: self.shapes.trunk_channels,
            kt,
            kf: 1,
            sf: 1,
            c_out: filters,
            w_out: self.shapes.trunk_width,
        }
    }

    fn check_input(&self, x: &[S]) -> Result<()> {
        if x.len() != self.config.input_len() {
            return Err(Error::Shape {
                layer: "input".into(),
                expected: format!("{}x{}", self.config.window, self.config.input_features),
                found: format!("{} values", x.len()),
            });
        }
        check_finite(x, "input")
    }

    /// Convolution stack and inception module; everything before dropout.
    fn trunk(&self, x: &[S]) -> Result<TrunkCache<S>> {
        self.check_input(x)?;
        let slope: S = lit(self.config.leaky_slope);
        let t = &self.weights.tensors;
        let mut conv_acts = vec![x.to_vec()];
        let mut conv_pre = Vec::with_capacity(self.config.conv_blocks.len());
        for i in 0..self.config.conv_blocks.len() {
            let g = self.conv_geom(i);
            let k = self.conv_index(i);
            let pre = conv_forward(&g, conv_acts.last().unwrap(), &t[k].data, &t[k + 1].data);
            let act: Vec<S> = pre.iter().map(|&v| leaky(v, slope)).collect();
            check_finite(&act, &t[k].name)?;
            conv_pre.push(pre);
            conv_acts.push(act);
        }

        let input = conv_acts.last().unwrap();
        let (steps, width, cin) = (self.config.window, self.shapes.trunk_width, self.shapes.trunk_channels);
        let mut branch_pre = Vec::new();
        let mut branch_pool = Vec::new();
        let features = if self.config.inception.is_empty() {
            input.clone()
        } else {
            let cout = self.shapes.inception_channels;
            let mut out = vec![S::zero(); steps * width * cout];
            let mut offset = 0;
            for (j, br) in self.config.inception.iter().enumerate() {
                let g = self.branch_geom(j);
                let k = self.inception_index(j);
                let (pre, pooled) = match *br {
                    InceptionBranch::Conv { .. } => (conv_forward(&g, input, &t[k].data, &t[k + 1].data), None),
                    InceptionBranch::PoolConv { pool, .. } => {
                        let (p, src) = pool_forward(steps, width, cin, pool, input);
                        (conv_forward(&g, &p, &t[k].data, &t[k + 1].data), Some((p, src)))
                    }
                };
                for pos in 0..steps * width {
                    for c in 0..g.c_out {
                        out[pos * cout + offset + c] = leaky(pre[pos * g.c_out + c], slope);
                    }
                }
                offset += g.c_out;
                branch_pre.push(pre);
                branch_pool.push(pooled);
            }
            check_finite(&out, "inception")?;
            out
        };
        Ok(TrunkCache {
            conv_acts,
            conv_pre,
            branch_pre,
            branch_pool,
            features,
        })
    }

    /// Dropout, recurrent layer and dense head on trunk features.
    fn head(
        &self,
        features: &[S],
        mask: Option<&[S]>,
        observer: Option<&mut MaskObserver<'_, S>>,
    ) -> Result<HeadCache<S>> {
        let steps = self.config.window;
        let d = self.shapes.recurrent_input;
        let h = self.config.recurrent_units;
        let li = self.lstm_index();
        let t = &self.weights.tensors;
        let (wx, wh, b) = (&t[li].data, &t[li + 1].data, &t[li + 2].data);
        let (wd, bd) = (&t[li + 3].data, &t[li + 4].data);

        let mut x = features.to_vec();
        if let Some(m) = mask {
            if m.len() != d {
                return Err(Error::Shape {
                    layer: "dropout".into(),
                    expected: format!("{d} channels"),
                    found: format!("{} channels", m.len()),
                });
            }
            let mut observer = observer;
            for step in 0..steps {
                for (v, &mv) in x[step * d..(step + 1) * d].iter_mut().zip(m) {
                    *v *= mv;
                }
                if let Some(obs) = observer.as_deref_mut() {
                    obs(step, m);
                }
            }
        }

        let mut gates = vec![S::zero(); steps * 4 * h];
        let mut c = vec![S::zero(); steps * h];
        let mut tanh_c = vec![S::zero(); steps * h];
        let mut hs = vec![S::zero(); steps * h];
        let mut z = vec![S::zero(); 4 * h];
        for step in 0..steps {
            let xt = &x[step * d..(step + 1) * d];
            for r in 0..4 * h {
                let row = &wx[r * d..(r + 1) * d];
                let mut acc = b[r];
                for (w, v) in row.iter().zip(xt) {
                    acc += *w * *v;
                }
                if step > 0 {
                    let hp = &hs[(step - 1) * h..step * h];
                    for (w, v) in wh[r * h..(r + 1) * h].iter().zip(hp) {
                        acc += *w * *v;
                    }
                }
                z[r] = acc;
            }
            let g = &mut gates[step * 4 * h..(step + 1) * 4 * h];
            for u in 0..h {
                let i_g = sigmoid(z[u]);
                let f_g = sigmoid(z[h + u]);
                let c_g = z[2 * h + u].tanh();
                let o_g = sigmoid(z[3 * h + u]);
                g[u] = i_g;
                g[h + u] = f_g;
                g[2 * h + u] = c_g;
                g[3 * h + u] = o_g;
                let prev = if step > 0 { c[(step - 1) * h + u] } else { S::zero() };
                let cv = f_g * prev + i_g * c_g;
                c[step * h + u] = cv;
                tanh_c[step * h + u] = cv.tanh();
                hs[step * h + u] = o_g * cv.tanh();
            }
        }
        check_finite(&hs, "lstm")?;

        let last = &hs[(steps - 1) * h..];
        let mut logits = [S::zero(); CLASSES];
        for (k, l) in logits.iter_mut().enumerate() {
            let mut acc = bd[k];
            for (w, v) in wd[k * h..(k + 1) * h].iter().zip(last) {
                acc += *w * *v;
            }
            *l = acc;
        }
        check_finite(&logits, "dense")?;
        Ok(HeadCache {
            x,
            gates,
            c,
            tanh_c,
            h: hs,
            logits,
        })
    }

    fn resolve_mask(&self, mode: Mode<'_, S>) -> Option<DropoutMask<S>> {
        match mode {
            Mode::Deterministic => None,
            Mode::Stochastic(rng) => Some(self.sample_mask(rng)),
            Mode::Frozen(m) => Some(m.clone()),
        }
    }

    /// Class probabilities `[up, neutral, down]`.
    pub fn forward(&self, x: &[S], mode: Mode<'_, S>) -> Result<[S; CLASSES]> {
        let mask = self.resolve_mask(mode);
        let trunk = self.trunk(x)?;
        let head = self.head(&trunk.features, mask.as_ref().map(|m| m.values.as_slice()), None)?;
        Ok(softmax(&head.logits))
    }

    /// Like [`Network::forward`], reporting the mask applied at every timestep
    /// to `observer`. The observer is not called in deterministic mode.
    pub fn forward_observed(
        &self,
        x: &[S],
        mode: Mode<'_, S>,
        observer: &mut MaskObserver<'_, S>,
    ) -> Result<[S; CLASSES]> {
        let mask = self.resolve_mask(mode);
        let trunk = self.trunk(x)?;
        let head = self.head(
            &trunk.features,
            mask.as_ref().map(|m| m.values.as_slice()),
            Some(observer),
        )?;
        Ok(softmax(&head.logits))
    }

    pub fn predict(&self, x: &[S]) -> Result<[S; CLASSES]> {
        self.forward(x, Mode::Deterministic)
    }

    /// `passes` stochastic forward passes with a fresh mask each. The layers
    /// before dropout are deterministic, so they are evaluated once.
    pub fn mc_forward(&self, x: &[S], passes: usize, rng: &mut CounterRng) -> Result<McSamples<S>> {
        if passes == 0 {
            return Err(Error::Config("at least one Monte-Carlo pass is required".into()));
        }
        let trunk = self.trunk(x)?;
        let mut rows = Vec::with_capacity(passes);
        for _ in 0..passes {
            let mask = self.sample_mask(rng);
            let head = self.head(&trunk.features, Some(&mask.values), None)?;
            rows.push(softmax(&head.logits));
        }
        McSamples::new(rows)
    }

    fn example_loss(&self, ex: &Example<'_, S>) -> Result<S> {
        let trunk = self.trunk(ex.input)?;
        let head = self.head(&trunk.features, ex.mask.as_ref().map(|m| m.values.as_slice()), None)?;
        Ok(cross_entropy(&head.logits, ex.label.class_index()))
    }

    /// Mean cross-entropy of a batch without gradients.
    pub fn loss(&self, batch: &[Example<'_, S>]) -> Result<S> {
        if batch.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        let losses = batch
            .par_iter()
            .map(|ex| self.example_loss(ex))
            .collect::<Result<Vec<S>>>()?;
        let loss = losses.into_iter().sum::<S>() / lit(batch.len() as f64);
        if !loss.is_finite() {
            return Err(Error::NonFinite { layer: "loss".into() });
        }
        Ok(loss)
    }

    fn example_grad(&self, ex: &Example<'_, S>, scale: S, grad: &mut Weights<S>) -> Result<S> {
        let trunk = self.trunk(ex.input)?;
        let mask = ex.mask.as_ref().map(|m| m.values.as_slice());
        let head = self.head(&trunk.features, mask, None)?;
        let label = ex.label.class_index();
        let loss = cross_entropy(&head.logits, label);
        let p = softmax(&head.logits);
        let mut dlogits = p;
        dlogits[label] -= S::one();
        for v in &mut dlogits {
            *v *= scale;
        }
        let dfeat = self.head_backward(&head, mask, &dlogits, grad);
        self.trunk_backward(&trunk, dfeat, grad);
        Ok(loss)
    }

    fn head_backward(
        &self,
        hc: &HeadCache<S>,
        mask: Option<&[S]>,
        dlogits: &[S; CLASSES],
        grad: &mut Weights<S>,
    ) -> Vec<S> {
        let steps = self.config.window;
        let d = self.shapes.recurrent_input;
        let h = self.config.recurrent_units;
        let li = self.lstm_index();
        let wt = &self.weights.tensors;
        let (wx, wh, wd) = (&wt[li].data, &wt[li + 1].data, &wt[li + 3].data);

        let last = &hc.h[(steps - 1) * h..];
        let mut dh = vec![S::zero(); h];
        {
            let (head_w, rest) = grad.tensors[li + 3..].split_at_mut(1);
            for k in 0..CLASSES {
                for u in 0..h {
                    head_w[0].data[k * h + u] += dlogits[k] * last[u];
                    dh[u] += wd[k * h + u] * dlogits[k];
                }
                rest[0].data[k] += dlogits[k];
            }
        }

        let (gx, rest) = grad.tensors[li..].split_at_mut(1);
        let (gh, rest) = rest.split_at_mut(1);
        let gb = &mut rest[0];
        let (gx, gh) = (&mut gx[0].data, &mut gh[0].data);

        let mut dfeat = vec![S::zero(); steps * d];
        let mut dc_next = vec![S::zero(); h];
        let mut da = vec![S::zero(); 4 * h];
        for step in (0..steps).rev() {
            let g = &hc.gates[step * 4 * h..(step + 1) * 4 * h];
            for u in 0..h {
                let (i_g, f_g, c_g, o_g) = (g[u], g[h + u], g[2 * h + u], g[3 * h + u]);
                let tc = hc.tanh_c[step * h + u];
                let d_o = dh[u] * tc;
                let dc = dc_next[u] + dh[u] * o_g * (S::one() - tc * tc);
                let c_prev = if step > 0 { hc.c[(step - 1) * h + u] } else { S::zero() };
                da[u] = dc * c_g * i_g * (S::one() - i_g);
                da[h + u] = dc * c_prev * f_g * (S::one() - f_g);
                da[2 * h + u] = dc * i_g * (S::one() - c_g * c_g);
                da[3 * h + u] = d_o * o_g * (S::one() - o_g);
                dc_next[u] = dc * f_g;
            }
            let xt = &hc.x[step * d..(step + 1) * d];
            let dx = &mut dfeat[step * d..(step + 1) * d];
            let mut dh_prev = vec![S::zero(); h];
            for r in 0..4 * h {
                let a = da[r];
                if a == S::zero() {
                    continue;
                }
                gb.data[r] += a;
                let row = r * d;
                for j in 0..d {
                    gx[row + j] += a * xt[j];
                    dx[j] += wx[row + j] * a;
                }
                if step > 0 {
                    let hp = &hc.h[(step - 1) * h..step * h];
                    for u in 0..h {
                        gh[r * h + u] += a * hp[u];
                        dh_prev[u] += wh[r * h + u] * a;
                    }
                }
            }
            if let Some(m) = mask {
                for (v, &mv) in dx.iter_mut().zip(m) {
                    *v *= mv;
                }
            }
            dh = dh_prev;
        }
        dfeat
    }

    fn trunk_backward(&self, tc: &TrunkCache<S>, dfeat: Vec<S>, grad: &mut Weights<S>) {
        let slope: S = lit(self.config.leaky_slope);
        let wt = &self.weights.tensors;
        let (steps, width, cin) = (self.config.window, self.shapes.trunk_width, self.shapes.trunk_channels);
        let n_conv = self.config.conv_blocks.len();
        if n_conv == 0 && self.config.inception.is_empty() {
            return;
        }
        let input = &tc.conv_acts[n_conv];

        let mut d_act = if self.config.inception.is_empty() {
            dfeat
        } else {
            let cout = self.shapes.inception_channels;
            let need_dx = n_conv > 0;
            let mut dx = vec![S::zero(); if need_dx { input.len() } else { 0 }];
            let mut offset = 0;
            for (j, br) in self.config.inception.iter().enumerate() {
                let g = self.branch_geom(j);
                let k = self.inception_index(j);
                let pre = &tc.branch_pre[j];
                let mut dpre = vec![S::zero(); pre.len()];
                for pos in 0..steps * width {
                    for c in 0..g.c_out {
                        let idx = pos * g.c_out + c;
                        dpre[idx] = dfeat[pos * cout + offset + c] * leaky_grad(pre[idx], slope);
                    }
                }
                offset += g.c_out;
                let (gk, gb) = grad.tensors[k..k + 2].split_at_mut(1);
                match *br {
                    InceptionBranch::Conv { .. } => {
                        let dx_opt = if need_dx { Some(dx.as_mut_slice()) } else { None };
                        conv_backward(&g, input, &wt[k].data, &dpre, &mut gk[0].data, &mut gb[0].data, dx_opt);
                    }
                    InceptionBranch::PoolConv { .. } => {
                        let (pooled, src) = tc.branch_pool[j].as_ref().expect("pool cache");
                        if need_dx {
                            let mut dp = vec![S::zero(); pooled.len()];
                            conv_backward(
                                &g,
                                pooled,
                                &wt[k].data,
                                &dpre,
                                &mut gk[0].data,
                                &mut gb[0].data,
                                Some(&mut dp),
                            );
                            pool_backward(width * cin, src, &dp, &mut dx);
                        } else {
                            conv_backward(&g, pooled, &wt[k].data, &dpre, &mut gk[0].data, &mut gb[0].data, None);
                        }
                    }
                }
            }
            dx
        };

        for i in (0..n_conv).rev() {
            let g = self.conv_geom(i);
            let k = self.conv_index(i);
            let pre = &tc.conv_pre[i];
            for (dv, &p) in d_act.iter_mut().zip(pre) {
                *dv *= leaky_grad(p, slope);
            }
            let x_in = &tc.conv_acts[i];
            let (gk, gb) = grad.tensors[k..k + 2].split_at_mut(1);
            if i > 0 {
                let mut dx = vec![S::zero(); x_in.len()];
                conv_backward(
                    &g,
                    x_in,
                    &wt[k].data,
                    &d_act,
                    &mut gk[0].data,
                    &mut gb[0].data,
                    Some(&mut dx),
                );
                d_act = dx;
            } else {
                conv_backward(&g, x_in, &wt[k].data, &d_act, &mut gk[0].data, &mut gb[0].data, None);
            }
        }
    }

    /// Mean categorical cross-entropy over the batch and its exact gradient.
    ///
    /// Examples are processed in fixed-size chunks whose partial sums are added
    /// in order, so the result does not depend on the thread count.
    pub fn loss_and_grad(&self, batch: &[Example<'_, S>]) -> Result<(S, Weights<S>)> {
        const CHUNK: usize = 4;
        if batch.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        let scale: S = S::one() / lit(batch.len() as f64);
        let partials = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = self.weights.zeros_like();
                let mut loss = S::zero();
                for ex in chunk {
                    loss += self.example_grad(ex, scale, &mut g)?;
                }
                Ok((loss, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut iter = partials.into_iter();
        let (mut loss, mut grad) = iter.next().expect("non-empty batch");
        for (l, g) in iter {
            loss += l;
            grad.add_scaled(&g, S::one());
        }
        let loss = loss * scale;
        if !loss.is_finite() {
            return Err(Error::NonFinite { layer: "loss".into() });
        }
        Ok((loss, grad))
    }
}
