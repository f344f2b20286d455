//! Dense, conv1d and LSTM networks with hand-written backpropagation.
//!
//! All parameters of a network live in one flat f64 vector; each architecture
//! defines a fixed layout over it. Gradients come back in the same layout,
//! which keeps the optimizer, serialization and finite-difference checks
//! trivial.
//!
//! Fixed shapes: the FCN flattens its input through two 64-unit ReLU layers;
//! the LSTM runs one 32-unit layer and classifies from the last hidden state;
//! the CNN stacks two kernel-7 conv blocks (16 then 32 channels, ReLU,
//! max-pool 2) and a global average pool.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{acc_bias, acc_outer, add_bias, dot, matmul_nn_acc, matmul_nt};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FCN_HIDDEN: usize = 64;
pub const LSTM_UNITS: usize = 32;
pub const CNN_CHANNELS_1: usize = 16;
pub const CNN_CHANNELS_2: usize = 32;
pub const CNN_KERNEL: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetKind {
    Fcn,
    Lstm,
    Cnn,
}

impl NetKind {
    pub fn name(&self) -> &'static str {
        match self {
            NetKind::Fcn => "fcn",
            NetKind::Lstm => "lstm",
            NetKind::Cnn => "cnn",
        }
    }
}

/// One named parameter tensor inside the flat layout.
#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: &'static str,
    pub offset: usize,
    pub len: usize,
    pub fan_in: usize,
    pub is_bias: bool,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Waveform classifier with a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Network {
    pub kind: NetKind,
    pub steps: usize,
    pub channels: usize,
    pub classes: usize,
    params: Vec<f64>,
}

impl Network {
    /// Parameter layout for this architecture.
    pub fn layout(kind: NetKind, steps: usize, channels: usize, classes: usize) -> Vec<ParamEntry> {
        let mut entries = Vec::new();
        let mut offset = 0;
        let mut push = |name: &'static str, len: usize, fan_in: usize, is_bias: bool| {
            entries.push(ParamEntry { name, offset, len, fan_in, is_bias });
            offset += len;
        };
        match kind {
            NetKind::Fcn => {
                let input = steps * channels;
                push("w1", FCN_HIDDEN * input, input, false);
                push("b1", FCN_HIDDEN, input, true);
                push("w2", FCN_HIDDEN * FCN_HIDDEN, FCN_HIDDEN, false);
                push("b2", FCN_HIDDEN, FCN_HIDDEN, true);
                push("w_out", classes * FCN_HIDDEN, FCN_HIDDEN, false);
                push("b_out", classes, FCN_HIDDEN, true);
            }
            NetKind::Lstm => {
                let zdim = channels + LSTM_UNITS;
                push("w_gates", 4 * LSTM_UNITS * zdim, zdim, false);
                push("b_gates", 4 * LSTM_UNITS, zdim, true);
                push("w_out", classes * LSTM_UNITS, LSTM_UNITS, false);
                push("b_out", classes, LSTM_UNITS, true);
            }
            NetKind::Cnn => {
                push("w_conv1", CNN_CHANNELS_1 * CNN_KERNEL * channels, CNN_KERNEL * channels, false);
                push("b_conv1", CNN_CHANNELS_1, CNN_KERNEL * channels, true);
                push(
                    "w_conv2",
                    CNN_CHANNELS_2 * CNN_KERNEL * CNN_CHANNELS_1,
                    CNN_KERNEL * CNN_CHANNELS_1,
                    false,
                );
                push("b_conv2", CNN_CHANNELS_2, CNN_KERNEL * CNN_CHANNELS_1, true);
                push("w_out", classes * CNN_CHANNELS_2, CNN_CHANNELS_2, false);
                push("b_out", classes, CNN_CHANNELS_2, true);
            }
        }
        entries
    }

    pub fn param_count(kind: NetKind, steps: usize, channels: usize, classes: usize) -> usize {
        Self::layout(kind, steps, channels, classes)
            .iter()
            .map(|e| e.len)
            .sum()
    }

    /// Fan-in scaled uniform initialization from a seeded stream; biases are
    /// zero except the LSTM forget gate, which starts open at 1.
    pub fn init(kind: NetKind, steps: usize, channels: usize, classes: usize, seed: u64) -> Result<Self> {
        if steps == 0 || channels == 0 || classes < 2 {
            return Err(Error::config(format!(
                "invalid network shape: steps {steps}, channels {channels}, classes {classes}"
            )));
        }
        let layout = Self::layout(kind, steps, channels, classes);
        let total: usize = layout.iter().map(|e| e.len).sum();
        let mut params = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for entry in &layout {
            if entry.is_bias {
                continue;
            }
            let scale = 1.0 / (entry.fan_in as f64).sqrt();
            for v in &mut params[entry.offset..entry.offset + entry.len] {
                *v = rng.random_range(-scale..scale);
            }
        }
        if kind == NetKind::Lstm {
            // Chrono-style gate bias init: per-unit forget timescales spread
            // log-uniformly up to the sequence length, input bias mirrored.
            // With a last-state readout over hundreds of steps, a uniform
            // forget bias near 1 starves early-sequence credit assignment.
            let b = layout.iter().find(|e| e.name == "b_gates").unwrap();
            for j in 0..LSTM_UNITS {
                let u = (j as f64 + 0.5) / LSTM_UNITS as f64;
                let timescale = (1.0 + u * (steps.saturating_sub(1)) as f64).ln();
                params[b.offset + j] = -timescale;
                params[b.offset + LSTM_UNITS + j] = timescale;
            }
        }
        Ok(Network { kind, steps, channels, classes, params })
    }

    pub fn from_params(
        kind: NetKind,
        steps: usize,
        channels: usize,
        classes: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let expected = Self::param_count(kind, steps, channels, classes);
        if params.len() != expected {
            return Err(Error::validation(format!(
                "expected {expected} parameters for {}, got {}",
                kind.name(),
                params.len()
            )));
        }
        Ok(Network { kind, steps, channels, classes, params })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn validate_batch(&self, x: &Tensor) -> Result<usize> {
        let shape = x.shape();
        if shape.len() != 3 || shape[1] != self.steps || shape[2] != self.channels {
            return Err(Error::validation(format!(
                "batch shape {shape:?} does not match input spec ({}, {}, {})",
                "N", self.steps, self.channels
            )));
        }
        Ok(shape[0])
    }

    /// Class probabilities for a batch of shape (N, steps, channels).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let n = self.validate_batch(x)?;
        let (mut logits, _) = self.forward_logits(x.data(), n);
        softmax_rows(&mut logits, n, self.classes);
        Tensor::new(vec![n, self.classes], logits)
    }

    /// Mean categorical cross-entropy and the gradient for every parameter.
    pub fn loss_and_grads(&self, x: &Tensor, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        let n = self.validate_batch(x)?;
        if labels.len() != n {
            return Err(Error::validation(format!(
                "{} labels for a batch of {n}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.classes) {
            return Err(Error::validation(format!(
                "label {bad} out of range for {} classes",
                self.classes
            )));
        }
        let (mut logits, cache) = self.forward_logits(x.data(), n);
        softmax_rows(&mut logits, n, self.classes);
        let (loss, dlogits) = cross_entropy(&logits, labels, self.classes);
        let mut grads = vec![0.0; self.params.len()];
        self.backward(x.data(), n, &cache, &dlogits, &mut grads);
        Ok((loss, grads))
    }

    fn entry(&self, name: &str) -> (usize, usize) {
        let layout = Self::layout(self.kind, self.steps, self.channels, self.classes);
        let e = layout.iter().find(|e| e.name == name).unwrap();
        (e.offset, e.len)
    }

    fn forward_logits(&self, x: &[f64], n: usize) -> (Vec<f64>, Cache) {
        match self.kind {
            NetKind::Fcn => self.fcn_forward(x, n),
            NetKind::Lstm => self.lstm_forward(x, n),
            NetKind::Cnn => self.cnn_forward(x, n),
        }
    }

    fn backward(&self, x: &[f64], n: usize, cache: &Cache, dlogits: &[f64], grads: &mut [f64]) {
        match (self.kind, cache) {
            (NetKind::Fcn, Cache::Fcn(c)) => self.fcn_backward(x, n, c, dlogits, grads),
            (NetKind::Lstm, Cache::Lstm(c)) => self.lstm_backward(x, n, c, dlogits, grads),
            (NetKind::Cnn, Cache::Cnn(c)) => self.cnn_backward(x, n, c, dlogits, grads),
            _ => unreachable!("cache kind mismatch"),
        }
    }

    // ---- fully-connected ----

    fn fcn_forward(&self, x: &[f64], n: usize) -> (Vec<f64>, Cache) {
        let input = self.steps * self.channels;
        let p = &self.params;
        let (w1, _) = self.entry("w1");
        let (b1, _) = self.entry("b1");
        let (w2, _) = self.entry("w2");
        let (b2, _) = self.entry("b2");
        let (wo, _) = self.entry("w_out");
        let (bo, _) = self.entry("b_out");

        let mut h1 = vec![0.0; n * FCN_HIDDEN];
        matmul_nt(x, n, input, &p[w1..w1 + FCN_HIDDEN * input], FCN_HIDDEN, &mut h1);
        add_bias(&mut h1, n, FCN_HIDDEN, &p[b1..b1 + FCN_HIDDEN]);
        relu(&mut h1);

        let mut h2 = vec![0.0; n * FCN_HIDDEN];
        matmul_nt(&h1, n, FCN_HIDDEN, &p[w2..w2 + FCN_HIDDEN * FCN_HIDDEN], FCN_HIDDEN, &mut h2);
        add_bias(&mut h2, n, FCN_HIDDEN, &p[b2..b2 + FCN_HIDDEN]);
        relu(&mut h2);

        let mut logits = vec![0.0; n * self.classes];
        matmul_nt(&h2, n, FCN_HIDDEN, &p[wo..wo + self.classes * FCN_HIDDEN], self.classes, &mut logits);
        add_bias(&mut logits, n, self.classes, &p[bo..bo + self.classes]);

        (logits, Cache::Fcn(FcnCache { h1, h2 }))
    }

    fn fcn_backward(&self, x: &[f64], n: usize, c: &FcnCache, dlogits: &[f64], grads: &mut [f64]) {
        let input = self.steps * self.channels;
        let p = &self.params;
        let (w2, w2l) = self.entry("w2");
        let (wo, wol) = self.entry("w_out");

        {
            let (o, l) = self.entry("w_out");
            acc_outer(dlogits, &c.h2, n, self.classes, FCN_HIDDEN, &mut grads[o..o + l]);
            let (o, l) = self.entry("b_out");
            acc_bias(dlogits, n, self.classes, &mut grads[o..o + l]);
        }

        let mut dh2 = vec![0.0; n * FCN_HIDDEN];
        matmul_nn_acc(dlogits, n, self.classes, &p[wo..wo + wol], FCN_HIDDEN, &mut dh2);
        relu_backward(&c.h2, &mut dh2);
        {
            let (o, l) = self.entry("w2");
            acc_outer(&dh2, &c.h1, n, FCN_HIDDEN, FCN_HIDDEN, &mut grads[o..o + l]);
            let (o, l) = self.entry("b2");
            acc_bias(&dh2, n, FCN_HIDDEN, &mut grads[o..o + l]);
        }

        let mut dh1 = vec![0.0; n * FCN_HIDDEN];
        matmul_nn_acc(&dh2, n, FCN_HIDDEN, &p[w2..w2 + w2l], FCN_HIDDEN, &mut dh1);
        relu_backward(&c.h1, &mut dh1);
        {
            let (o, l) = self.entry("w1");
            acc_outer(&dh1, x, n, FCN_HIDDEN, input, &mut grads[o..o + l]);
            let (o, l) = self.entry("b1");
            acc_bias(&dh1, n, FCN_HIDDEN, &mut grads[o..o + l]);
        }
    }

    // ---- LSTM ----

    fn lstm_forward(&self, x: &[f64], n: usize) -> (Vec<f64>, Cache) {
        let h = LSTM_UNITS;
        let cdim = self.channels;
        let zdim = cdim + h;
        let p = &self.params;
        let (w, _) = self.entry("w_gates");
        let (b, _) = self.entry("b_gates");
        let (wo, _) = self.entry("w_out");
        let (bo, _) = self.entry("b_out");
        let w = &p[w..w + 4 * h * zdim];
        let b = &p[b..b + 4 * h];

        let mut cache = LstmCache {
            zcat: Vec::with_capacity(self.steps),
            gates: Vec::with_capacity(self.steps),
            cell: Vec::with_capacity(self.steps),
            tanh_c: Vec::with_capacity(self.steps),
        };
        let mut hidden = vec![0.0; n * h];
        let mut cell = vec![0.0; n * h];
        let mut lin = vec![0.0; n * 4 * h];

        for t in 0..self.steps {
            // z = [x_t | h_{t-1}]
            let mut z = vec![0.0; n * zdim];
            for i in 0..n {
                let xrow = &x[(i * self.steps + t) * cdim..(i * self.steps + t + 1) * cdim];
                z[i * zdim..i * zdim + cdim].copy_from_slice(xrow);
                z[i * zdim + cdim..(i + 1) * zdim].copy_from_slice(&hidden[i * h..(i + 1) * h]);
            }
            matmul_nt(&z, n, zdim, w, 4 * h, &mut lin);
            add_bias(&mut lin, n, 4 * h, b);

            // Gate order in the 4H block: input, forget, candidate, output.
            let mut gates = vec![0.0; n * 4 * h];
            for i in 0..n {
                let src = &lin[i * 4 * h..(i + 1) * 4 * h];
                let dst = &mut gates[i * 4 * h..(i + 1) * 4 * h];
                for j in 0..h {
                    dst[j] = sigmoid(src[j]);
                    dst[h + j] = sigmoid(src[h + j]);
                    dst[2 * h + j] = src[2 * h + j].tanh();
                    dst[3 * h + j] = sigmoid(src[3 * h + j]);
                }
            }

            let mut tanh_c = vec![0.0; n * h];
            for i in 0..n {
                let g = &gates[i * 4 * h..(i + 1) * 4 * h];
                for j in 0..h {
                    let c_new = g[h + j] * cell[i * h + j] + g[j] * g[2 * h + j];
                    cell[i * h + j] = c_new;
                    tanh_c[i * h + j] = c_new.tanh();
                    hidden[i * h + j] = g[3 * h + j] * tanh_c[i * h + j];
                }
            }

            cache.zcat.push(z);
            cache.gates.push(gates);
            cache.cell.push(cell.clone());
            cache.tanh_c.push(tanh_c);
        }

        let mut logits = vec![0.0; n * self.classes];
        matmul_nt(&hidden, n, h, &p[wo..wo + self.classes * h], self.classes, &mut logits);
        add_bias(&mut logits, n, self.classes, &p[bo..bo + self.classes]);
        (logits, Cache::Lstm(cache))
    }

    fn lstm_backward(&self, _x: &[f64], n: usize, c: &LstmCache, dlogits: &[f64], grads: &mut [f64]) {
        let h = LSTM_UNITS;
        let cdim = self.channels;
        let zdim = cdim + h;
        let p = &self.params;
        let (w_off, w_len) = self.entry("w_gates");
        let w = &p[w_off..w_off + w_len];
        let (wo_off, wo_len) = self.entry("w_out");

        // Head gradients against the last hidden state.
        let last_hidden: Vec<f64> = {
            let t = self.steps - 1;
            let gates = &c.gates[t];
            let tanh_c = &c.tanh_c[t];
            (0..n * h)
                .map(|i| {
                    let row = i / h;
                    let j = i % h;
                    gates[row * 4 * h + 3 * h + j] * tanh_c[i]
                })
                .collect()
        };
        {
            let (o, l) = self.entry("w_out");
            acc_outer(dlogits, &last_hidden, n, self.classes, h, &mut grads[o..o + l]);
            let (o, l) = self.entry("b_out");
            acc_bias(dlogits, n, self.classes, &mut grads[o..o + l]);
        }

        let mut dh = vec![0.0; n * h];
        matmul_nn_acc(dlogits, n, self.classes, &p[wo_off..wo_off + wo_len], h, &mut dh);
        let mut dc = vec![0.0; n * h];
        let mut dlin = vec![0.0; n * 4 * h];

        for t in (0..self.steps).rev() {
            let gates = &c.gates[t];
            let tanh_c = &c.tanh_c[t];
            for i in 0..n {
                let g = &gates[i * 4 * h..(i + 1) * 4 * h];
                let dl = &mut dlin[i * 4 * h..(i + 1) * 4 * h];
                for j in 0..h {
                    let idx = i * h + j;
                    let tc = tanh_c[idx];
                    let o_gate = g[3 * h + j];
                    let dcell = dc[idx] + dh[idx] * o_gate * (1.0 - tc * tc);
                    let c_prev = if t > 0 { c.cell[t - 1][idx] } else { 0.0 };

                    let di = dcell * g[2 * h + j];
                    let df = dcell * c_prev;
                    let dg = dcell * g[j];
                    let do_ = dh[idx] * tc;

                    dl[j] = di * g[j] * (1.0 - g[j]);
                    dl[h + j] = df * g[h + j] * (1.0 - g[h + j]);
                    dl[2 * h + j] = dg * (1.0 - g[2 * h + j] * g[2 * h + j]);
                    dl[3 * h + j] = do_ * o_gate * (1.0 - o_gate);

                    dc[idx] = dcell * g[h + j];
                }
            }

            {
                let (o, l) = self.entry("w_gates");
                acc_outer(&dlin, &c.zcat[t], n, 4 * h, zdim, &mut grads[o..o + l]);
                let (o, l) = self.entry("b_gates");
                acc_bias(&dlin, n, 4 * h, &mut grads[o..o + l]);
            }

            // dz = dlin * W; the hidden slice feeds the previous step.
            let mut dz = vec![0.0; n * zdim];
            matmul_nn_acc(&dlin, n, 4 * h, w, zdim, &mut dz);
            for i in 0..n {
                dh[i * h..(i + 1) * h].copy_from_slice(&dz[i * zdim + cdim..(i + 1) * zdim]);
            }
        }
    }

    // ---- CNN ----

    fn cnn_forward(&self, x: &[f64], n: usize) -> (Vec<f64>, Cache) {
        let p = &self.params;
        let t1 = self.steps;
        let t2 = t1 / 2;
        let t3 = t2 / 2;
        let (w1, w1l) = self.entry("w_conv1");
        let (b1, b1l) = self.entry("b_conv1");
        let (w2, w2l) = self.entry("w_conv2");
        let (b2, b2l) = self.entry("b_conv2");
        let (wo, wol) = self.entry("w_out");
        let (bo, bol) = self.entry("b_out");

        let mut c1 = conv1d_forward(x, n, t1, self.channels, &p[w1..w1 + w1l], &p[b1..b1 + b1l], CNN_CHANNELS_1);
        relu(&mut c1);
        let (p1, idx1) = maxpool2(&c1, n, t1, CNN_CHANNELS_1);

        let mut c2 = conv1d_forward(&p1, n, t2, CNN_CHANNELS_1, &p[w2..w2 + w2l], &p[b2..b2 + b2l], CNN_CHANNELS_2);
        relu(&mut c2);
        let (p2, idx2) = maxpool2(&c2, n, t2, CNN_CHANNELS_2);

        // Global average pool over time.
        let mut pooled = vec![0.0; n * CNN_CHANNELS_2];
        for i in 0..n {
            for t in 0..t3 {
                for ch in 0..CNN_CHANNELS_2 {
                    pooled[i * CNN_CHANNELS_2 + ch] += p2[(i * t3 + t) * CNN_CHANNELS_2 + ch];
                }
            }
            for ch in 0..CNN_CHANNELS_2 {
                pooled[i * CNN_CHANNELS_2 + ch] /= t3 as f64;
            }
        }

        let mut logits = vec![0.0; n * self.classes];
        matmul_nt(&pooled, n, CNN_CHANNELS_2, &p[wo..wo + wol], self.classes, &mut logits);
        add_bias(&mut logits, n, self.classes, &p[bo..bo + bol]);

        (logits, Cache::Cnn(CnnCache { c1, idx1, p1, c2, idx2, pooled }))
    }

    fn cnn_backward(&self, x: &[f64], n: usize, c: &CnnCache, dlogits: &[f64], grads: &mut [f64]) {
        let p = &self.params;
        let t1 = self.steps;
        let t2 = t1 / 2;
        let t3 = t2 / 2;
        let (w2_off, w2l) = self.entry("w_conv2");
        let (wo_off, wol) = self.entry("w_out");

        {
            let (o, l) = self.entry("w_out");
            acc_outer(dlogits, &c.pooled, n, self.classes, CNN_CHANNELS_2, &mut grads[o..o + l]);
            let (o, l) = self.entry("b_out");
            acc_bias(dlogits, n, self.classes, &mut grads[o..o + l]);
        }

        let mut dpooled = vec![0.0; n * CNN_CHANNELS_2];
        matmul_nn_acc(dlogits, n, self.classes, &p[wo_off..wo_off + wol], CNN_CHANNELS_2, &mut dpooled);

        // Undo the average pool, then the max pool.
        let mut dp2 = vec![0.0; n * t3 * CNN_CHANNELS_2];
        for i in 0..n {
            for t in 0..t3 {
                for ch in 0..CNN_CHANNELS_2 {
                    dp2[(i * t3 + t) * CNN_CHANNELS_2 + ch] =
                        dpooled[i * CNN_CHANNELS_2 + ch] / t3 as f64;
                }
            }
        }
        let mut dc2 = vec![0.0; n * t2 * CNN_CHANNELS_2];
        maxpool2_backward(&dp2, &c.idx2, &mut dc2);
        relu_backward(&c.c2, &mut dc2);

        let mut dp1 = vec![0.0; n * t2 * CNN_CHANNELS_1];
        {
            // Weight and bias entries are adjacent in the layout.
            let (o, l) = self.entry("w_conv2");
            let (_, lb) = self.entry("b_conv2");
            let (dw, db) = grads[o..o + l + lb].split_at_mut(l);
            conv1d_backward(
                &c.p1,
                n,
                t2,
                CNN_CHANNELS_1,
                &p[w2_off..w2_off + w2l],
                CNN_CHANNELS_2,
                &dc2,
                dw,
                db,
                Some(&mut dp1),
            );
        }

        let mut dc1 = vec![0.0; n * t1 * CNN_CHANNELS_1];
        maxpool2_backward(&dp1, &c.idx1, &mut dc1);
        relu_backward(&c.c1, &mut dc1);

        {
            let (o, l) = self.entry("w_conv1");
            let (_, lb) = self.entry("b_conv1");
            let (dw, db) = grads[o..o + l + lb].split_at_mut(l);
            conv1d_backward(x, n, t1, self.channels, &[], CNN_CHANNELS_1, &dc1, dw, db, None);
        }
    }
}

fn relu(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Mask gradients where the cached post-activation output is zero.
fn relu_backward(activated: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Same-padded 1-D convolution. Input (n, t, c_in) row-major, weights
/// (c_out, k, c_in), output (n, t, c_out).
pub(crate) fn conv1d_forward(
    x: &[f64],
    n: usize,
    t_len: usize,
    c_in: usize,
    w: &[f64],
    b: &[f64],
    c_out: usize,
) -> Vec<f64> {
    let pad = CNN_KERNEL / 2;
    let mut y = vec![0.0; n * t_len * c_out];
    for i in 0..n {
        for t in 0..t_len {
            let out = &mut y[(i * t_len + t) * c_out..(i * t_len + t + 1) * c_out];
            for (o, out_v) in out.iter_mut().enumerate() {
                let mut acc = b[o];
                for k in 0..CNN_KERNEL {
                    let s = t as isize + k as isize - pad as isize;
                    if s >= 0 && (s as usize) < t_len {
                        let xrow = &x[(i * t_len + s as usize) * c_in..(i * t_len + s as usize + 1) * c_in];
                        let wrow = &w[(o * CNN_KERNEL + k) * c_in..(o * CNN_KERNEL + k + 1) * c_in];
                        acc += dot(xrow, wrow);
                    }
                }
                *out_v = acc;
            }
        }
    }
    y
}

/// Gradients of the same-padded conv1d. `w` may be empty when `dx` is None
/// (input-layer shortcut: only weight gradients are needed).
#[allow(clippy::too_many_arguments)]
fn conv1d_backward(
    x: &[f64],
    n: usize,
    t_len: usize,
    c_in: usize,
    w: &[f64],
    c_out: usize,
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut dx: Option<&mut Vec<f64>>,
) {
    let pad = CNN_KERNEL / 2;
    for i in 0..n {
        for t in 0..t_len {
            let dyr = &dy[(i * t_len + t) * c_out..(i * t_len + t + 1) * c_out];
            for (o, &g) in dyr.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                for k in 0..CNN_KERNEL {
                    let s = t as isize + k as isize - pad as isize;
                    if s >= 0 && (s as usize) < t_len {
                        let s = s as usize;
                        let xrow = &x[(i * t_len + s) * c_in..(i * t_len + s + 1) * c_in];
                        let wslot = &mut dw[(o * CNN_KERNEL + k) * c_in..(o * CNN_KERNEL + k + 1) * c_in];
                        for (dwv, &xv) in wslot.iter_mut().zip(xrow) {
                            *dwv += g * xv;
                        }
                        if let Some(dx) = dx.as_deref_mut() {
                            let wrow = &w[(o * CNN_KERNEL + k) * c_in..(o * CNN_KERNEL + k + 1) * c_in];
                            let dxrow = &mut dx[(i * t_len + s) * c_in..(i * t_len + s + 1) * c_in];
                            for (dxv, &wv) in dxrow.iter_mut().zip(wrow) {
                                *dxv += g * wv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Non-overlapping max pool of width 2 over time. Returns pooled values and
/// flat argmax indices into the input.
fn maxpool2(x: &[f64], n: usize, t_len: usize, c: usize) -> (Vec<f64>, Vec<usize>) {
    let t_out = t_len / 2;
    let mut y = vec![0.0; n * t_out * c];
    let mut idx = vec![0usize; n * t_out * c];
    for i in 0..n {
        for t in 0..t_out {
            for ch in 0..c {
                let a_i = (i * t_len + 2 * t) * c + ch;
                let b_i = (i * t_len + 2 * t + 1) * c + ch;
                let out_i = (i * t_out + t) * c + ch;
                if x[a_i] >= x[b_i] {
                    y[out_i] = x[a_i];
                    idx[out_i] = a_i;
                } else {
                    y[out_i] = x[b_i];
                    idx[out_i] = b_i;
                }
            }
        }
    }
    (y, idx)
}

fn maxpool2_backward(dy: &[f64], idx: &[usize], dx: &mut [f64]) {
    for (g, &i) in dy.iter().zip(idx) {
        dx[i] += g;
    }
}

/// Row-wise softmax in place (max-shifted for stability).
pub(crate) fn softmax_rows(logits: &mut [f64], n: usize, k: usize) {
    for i in 0..n {
        let row = &mut logits[i * k..(i + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Mean negative log-likelihood and d(loss)/d(logits) given probabilities.
pub(crate) fn cross_entropy(probs: &[f64], labels: &[usize], k: usize) -> (f64, Vec<f64>) {
    let n = labels.len();
    let mut loss = 0.0;
    let mut dlogits = probs.to_vec();
    for (i, &y) in labels.iter().enumerate() {
        loss -= probs[i * k + y].max(1e-300).ln();
        dlogits[i * k + y] -= 1.0;
    }
    for v in dlogits.iter_mut() {
        *v /= n as f64;
    }
    (loss / n as f64, dlogits)
}

enum Cache {
    Fcn(FcnCache),
    Lstm(LstmCache),
    Cnn(CnnCache),
}

struct FcnCache {
    h1: Vec<f64>,
    h2: Vec<f64>,
}

struct LstmCache {
    zcat: Vec<Vec<f64>>,
    gates: Vec<Vec<f64>>,
    cell: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
}

struct CnnCache {
    c1: Vec<f64>,
    idx1: Vec<usize>,
    p1: Vec<f64>,
    c2: Vec<f64>,
    idx2: Vec<usize>,
    pooled: Vec<f64>,
}
