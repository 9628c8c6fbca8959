//! Batched forward pass and reverse-mode gradient (BPTT) of the per-sensor
//! LSTM network and of the dense comparison network.
//!
//! Inputs are already normalized and laid out `[sample][step][channel]`.
//! Matrix products go through [`Scalar::gemm`]; everything else is plain
//! loops in a fixed order, so results are bit-reproducible.

use rayon::prelude::*;

use super::model::ModelParams;
use super::tensor::check_finite;
use crate::error::{DftcError, Result};
use crate::plant::{INPUT_DIM, SENSOR_COUNT};
use crate::scalar::Scalar;

#[derive(Clone, Debug, Default)]
struct BlockCache<T> {
    /// `m × B` channel inputs.
    x: Vec<T>,
    /// `m × B × 4H` gate activations `[i f g o]`.
    gates: Vec<T>,
    /// `(m+1) × B × H`, with the zero initial state first.
    c: Vec<T>,
    /// `m × B × H`, `tanh(c_t)`.
    tc: Vec<T>,
    /// `(m+1) × B × H`, with the zero initial state first.
    h: Vec<T>,
}

/// Activations of the last forward pass, reused by [`backward`].
#[derive(Clone, Debug, Default)]
pub struct Workspace<T> {
    batch: usize,
    blocks: Vec<BlockCache<T>>,
    /// `B × head_input`: concatenated block outputs, or raw inputs.
    z: Vec<T>,
    /// Per dense layer, `B × fan_out` pre-activations.
    pre: Vec<Vec<T>>,
    /// Per hidden dense layer, `B × fan_out` after ReLU.
    post: Vec<Vec<T>>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new() -> Self {
        Workspace {
            batch: 0,
            blocks: Vec::new(),
            z: Vec::new(),
            pre: Vec::new(),
            post: Vec::new(),
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Head input of sample `b`; for the recurrent model these are the final
    /// hidden states of the six blocks.
    pub fn head_input(&self, b: usize) -> &[T] {
        let w = self.z.len() / self.batch.max(1);
        &self.z[b * w..(b + 1) * w]
    }

    /// `B × 2` outputs of the last forward pass.
    pub fn outputs(&self) -> &[T] {
        self.pre.last().map_or(&[], Vec::as_slice)
    }

    /// Which hidden ReLU units were active, over all layers and samples.
    /// The loss is smooth in the weights as long as this does not change.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let hidden = self.pre.len().saturating_sub(1);
        self.pre[..hidden].iter().flatten().map(|&a| a > T::zero()).collect()
    }
}

fn resize<T: Scalar>(v: &mut Vec<T>, n: usize) {
    v.clear();
    v.resize(n, T::zero());
}

fn block_forward<T: Scalar>(
    w_ih: &[T],
    w_hh: &[T],
    bias: &[T],
    hidden: usize,
    window: usize,
    batch: usize,
    cache: &mut BlockCache<T>,
) {
    let (h, g4) = (hidden, 4 * hidden);
    let bh = batch * h;
    let bg = batch * g4;
    for t in 0..window {
        let (prev_h, rest_h) = cache.h.split_at_mut((t + 1) * bh);
        let prev_h = &prev_h[t * bh..];
        let next_h = &mut rest_h[..bh];
        let gates = &mut cache.gates[t * bg..(t + 1) * bg];
        let x = &cache.x[t * batch..(t + 1) * batch];
        for (row, &xb) in gates.chunks_exact_mut(g4).zip(x) {
            for ((g, &b), &w) in row.iter_mut().zip(bias).zip(w_ih) {
                *g = b + xb * w;
            }
        }
        if t > 0 {
            T::gemm(batch, h, g4, T::one(), prev_h, (h, 1), w_hh, (1, h), T::one(), gates, (g4, 1));
        }
        let (prev_c, rest_c) = cache.c.split_at_mut((t + 1) * bh);
        let prev_c = &prev_c[t * bh..];
        let next_c = &mut rest_c[..bh];
        let tc = &mut cache.tc[t * bh..(t + 1) * bh];
        // one sigmoid pass over all gates, with tanh(a) = 2σ(2a) − 1 for g
        let two = T::of(2.0);
        for row in gates.chunks_exact_mut(g4) {
            for v in &mut row[2 * h..3 * h] {
                *v *= two;
            }
        }
        T::sigmoid_slice(gates);
        for b in 0..batch {
            let row = &mut gates[b * g4..(b + 1) * g4];
            for v in &mut row[2 * h..3 * h] {
                *v = two * *v - T::one();
            }
            let (pc, nc) = (&prev_c[b * h..(b + 1) * h], &mut next_c[b * h..(b + 1) * h]);
            for k in 0..h {
                nc[k] = row[h + k] * pc[k] + row[k] * row[2 * h + k];
            }
        }
        tc.copy_from_slice(next_c);
        T::tanh_slice(tc);
        for b in 0..batch {
            let o = &gates[b * g4 + 3 * h..(b + 1) * g4];
            for k in 0..h {
                next_h[b * h + k] = o[k] * tc[b * h + k];
            }
        }
    }
}

/// Forward pass over a batch. Returns the `B × 2` outputs.
pub fn forward<'w, T: Scalar>(
    model: &ModelParams<T>,
    inputs: &[T],
    batch: usize,
    ws: &'w mut Workspace<T>,
) -> Result<&'w [T]> {
    let arch = model.arch();
    let m = arch.window;
    if batch == 0 || inputs.len() != batch * m * SENSOR_COUNT {
        return Err(DftcError::Shape(format!(
            "expected {batch} windows of {m}×{SENSOR_COUNT} inputs, got {} values",
            inputs.len()
        )));
    }
    ws.batch = batch;
    let h = arch.hidden;
    let blocks = arch.blocks();
    let head_in = arch.head_input();
    let layout = model.layout();
    let params = model.params();
    resize(&mut ws.z, batch * head_in);

    if blocks == 0 {
        ws.z.copy_from_slice(inputs);
    } else {
        ws.blocks.resize_with(blocks, BlockCache::default);
        let block_len = layout.block_len(arch);
        ws.blocks.par_iter_mut().enumerate().try_for_each(|(j, cache)| {
            resize(&mut cache.x, m * batch);
            for b in 0..batch {
                for t in 0..m {
                    cache.x[t * batch + b] = inputs[(b * m + t) * SENSOR_COUNT + j];
                }
            }
            resize(&mut cache.gates, m * batch * 4 * h);
            resize(&mut cache.c, (m + 1) * batch * h);
            resize(&mut cache.tc, m * batch * h);
            resize(&mut cache.h, (m + 1) * batch * h);
            let p = &params[j * block_len..(j + 1) * block_len];
            let (w_ih, rest) = p.split_at(4 * h);
            let (w_hh, bias) = rest.split_at(4 * h * h);
            block_forward(w_ih, w_hh, bias, h, m, batch, cache);
            check_finite(&cache.h[m * batch * h..], &format!("lstm{}", j + 1))
        })?;
        for (j, cache) in ws.blocks.iter().enumerate() {
            let last = &cache.h[m * batch * h..];
            for b in 0..batch {
                ws.z[b * head_in + j * h..b * head_in + (j + 1) * h]
                    .copy_from_slice(&last[b * h..(b + 1) * h]);
            }
        }
    }

    let dims = arch.dense_dims();
    let layers = dims.len();
    ws.pre.resize_with(layers, Vec::new);
    ws.post.resize_with(layers - 1, Vec::new);
    let mut offset = layout.head_offset(arch);
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let w = &params[offset..offset + fan_in * fan_out];
        let bias = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let input: &[T] = if l == 0 { &ws.z } else { &ws.post[l - 1] };
        let mut out = std::mem::take(&mut ws.pre[l]);
        resize(&mut out, batch * fan_out);
        for row in out.chunks_exact_mut(fan_out) {
            row.copy_from_slice(bias);
        }
        T::gemm(batch, fan_in, fan_out, T::one(), input, (fan_in, 1), w, (1, fan_in), T::one(), &mut out, (fan_out, 1));
        let name = if l + 1 == layers { "out".to_string() } else { format!("fc{}", l + 1) };
        check_finite(&out, &name)?;
        if l + 1 < layers {
            let post = &mut ws.post[l];
            resize(post, batch * fan_out);
            for (p, &a) in post.iter_mut().zip(&out) {
                *p = if a > T::zero() { a } else { T::zero() };
            }
        }
        ws.pre[l] = out;
    }
    Ok(ws.outputs())
}

/// One LSTM block (`D = 1`) over a scalar sequence from a zero state.
/// Returns the `m × H` hidden outputs and the final `(h, c)`.
pub fn lstm_forward<T: Scalar>(
    w_ih: &[T],
    w_hh: &[T],
    bias: &[T],
    sequence: &[T],
) -> Result<(Vec<T>, (Vec<T>, Vec<T>))> {
    let h = bias.len() / 4;
    if h == 0 || bias.len() != 4 * h || w_ih.len() != 4 * h || w_hh.len() != 4 * h * h {
        return Err(DftcError::Shape("LSTM parameters must be 4H, 4H×H and 4H".into()));
    }
    check_finite(sequence, "lstm input")?;
    let m = sequence.len();
    let mut cache = BlockCache {
        x: sequence.to_vec(),
        gates: vec![T::zero(); m * 4 * h],
        c: vec![T::zero(); (m + 1) * h],
        tc: vec![T::zero(); m * h],
        h: vec![T::zero(); (m + 1) * h],
    };
    block_forward(w_ih, w_hh, bias, h, m, 1, &mut cache);
    let outputs = cache.h[h..].to_vec();
    let last_h = cache.h[m * h..].to_vec();
    let last_c = cache.c[m * h..].to_vec();
    Ok((outputs, (last_h, last_c)))
}

/// Normalize a raw `m × 6` window and evaluate the model on it.
pub fn model_forward<T: Scalar>(
    model: &ModelParams<T>,
    window: &[[f64; SENSOR_COUNT]],
    ws: &mut Workspace<T>,
) -> Result<[T; INPUT_DIM]> {
    if window.len() != model.arch().window {
        return Err(DftcError::InvalidInput(format!(
            "window has {} rows, model expects {}",
            window.len(),
            model.arch().window
        )));
    }
    if window.iter().flatten().any(|v| !v.is_finite()) {
        return Err(DftcError::numeric("measurement window"));
    }
    let inputs: Vec<T> = window.iter().flat_map(|y| model.normalize(y)).collect();
    let out = forward(model, &inputs, 1, ws)?;
    Ok([out[0], out[1]])
}

/// `P = 1/(2n) Σ ‖targetᵢ − predᵢ‖²`.
pub fn loss<T: Scalar>(preds: &[T], targets: &[T]) -> Result<T> {
    if preds.is_empty() || preds.len() != targets.len() || preds.len() % INPUT_DIM != 0 {
        return Err(DftcError::InvalidInput(format!(
            "loss needs equal non-empty batches, got {} predictions and {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let n = T::of((preds.len() / INPUT_DIM) as f64);
    let sq: T = preds.iter().zip(targets).map(|(&p, &t)| (t - p) * (t - p)).sum();
    Ok(sq / (T::of(2.0) * n))
}

/// `P_L2 = P + λ/(2n) Σ V²` over weights.
pub fn regularized_loss<T: Scalar>(p: T, model: &ModelParams<T>, lambda: T, n: usize) -> T {
    p + lambda / T::of(2.0 * n as f64) * model.weight_sq_sum()
}

#[allow(clippy::too_many_arguments)]
fn block_backward<T: Scalar>(
    w_hh: &[T],
    grad: &mut [T],
    hidden: usize,
    window: usize,
    batch: usize,
    cache: &BlockCache<T>,
    mut dh: Vec<T>,
) {
    let (h, g4) = (hidden, 4 * hidden);
    let (bh, bg) = (batch * h, batch * 4 * hidden);
    let (gw_ih, rest) = grad.split_at_mut(g4);
    let (gw_hh, gb) = rest.split_at_mut(g4 * h);
    let mut dc = vec![T::zero(); bh];
    let mut da = vec![T::zero(); bg];
    let one = T::one();
    for t in (0..window).rev() {
        let gates = &cache.gates[t * bg..(t + 1) * bg];
        let tc = &cache.tc[t * bh..(t + 1) * bh];
        let prev_c = &cache.c[t * bh..(t + 1) * bh];
        for b in 0..batch {
            let row = &gates[b * g4..(b + 1) * g4];
            let d = &mut da[b * g4..(b + 1) * g4];
            for k in 0..h {
                let idx = b * h + k;
                let (i, f, g, o) = (row[k], row[h + k], row[2 * h + k], row[3 * h + k]);
                let t_c = tc[idx];
                let dhv = dh[idx];
                let dcv = dc[idx] + dhv * o * (one - t_c * t_c);
                d[k] = dcv * g * i * (one - i);
                d[h + k] = dcv * prev_c[idx] * f * (one - f);
                d[2 * h + k] = dcv * i * (one - g * g);
                d[3 * h + k] = dhv * t_c * o * (one - o);
                dc[idx] = dcv * f;
            }
        }
        let x = &cache.x[t * batch..(t + 1) * batch];
        for (b, &xb) in x.iter().enumerate() {
            let d = &da[b * g4..(b + 1) * g4];
            for r in 0..g4 {
                gw_ih[r] += d[r] * xb;
                gb[r] += d[r];
            }
        }
        if t > 0 {
            let prev_h = &cache.h[t * bh..(t + 1) * bh];
            T::gemm(g4, batch, h, one, &da, (1, g4), prev_h, (h, 1), one, gw_hh, (h, 1));
            T::gemm(batch, g4, h, one, &da, (g4, 1), w_hh, (h, 1), T::zero(), &mut dh, (h, 1));
        }
    }
}

/// Gradient of `P_L2` for the batch of the last [`forward`] call, written to
/// `grads` (same layout as the parameters). Returns `P`.
pub fn backward<T: Scalar>(
    model: &ModelParams<T>,
    ws: &Workspace<T>,
    targets: &[T],
    lambda: T,
    grads: &mut [T],
) -> Result<T> {
    let batch = ws.batch;
    let p = loss(ws.outputs(), targets)?;
    if grads.len() != model.param_count() {
        return Err(DftcError::Shape("gradient buffer does not match the model".into()));
    }
    grads.fill(T::zero());
    let arch = model.arch();
    let layout = model.layout();
    let params = model.params();
    let dims = arch.dense_dims();
    let layers = dims.len();
    let inv_n = T::one() / T::of(batch as f64);

    // dP/dU = (U − target)/n
    let mut delta: Vec<T> = ws
        .outputs()
        .iter()
        .zip(targets)
        .map(|(&u, &t)| (u - t) * inv_n)
        .collect();
    let head = layout.head_offset(arch);
    let mut offsets = Vec::with_capacity(layers);
    let mut off = head;
    for &(fi, fo) in &dims {
        offsets.push(off);
        off += fi * fo + fo;
    }
    let mut dz = Vec::new();
    for l in (0..layers).rev() {
        let (fan_in, fan_out) = dims[l];
        let off = offsets[l];
        let input: &[T] = if l == 0 { &ws.z } else { &ws.post[l - 1] };
        let (gw, gb) = grads[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
        T::gemm(fan_out, batch, fan_in, T::one(), &delta, (1, fan_out), input, (fan_in, 1), T::zero(), gw, (fan_in, 1));
        for row in delta.chunks_exact(fan_out) {
            for (g, &d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        if l == 0 && arch.blocks() == 0 {
            break;
        }
        let w = &params[off..off + fan_in * fan_out];
        let mut d_in = vec![T::zero(); batch * fan_in];
        T::gemm(batch, fan_out, fan_in, T::one(), &delta, (fan_out, 1), w, (fan_in, 1), T::zero(), &mut d_in, (fan_in, 1));
        if l > 0 {
            for (d, &a) in d_in.iter_mut().zip(&ws.pre[l - 1]) {
                if a <= T::zero() {
                    *d = T::zero();
                }
            }
            delta = d_in;
        } else {
            dz = d_in;
        }
    }

    let blocks = arch.blocks();
    if blocks > 0 {
        let h = arch.hidden;
        let head_in = arch.head_input();
        let block_len = layout.block_len(arch);
        grads[..head]
            .par_chunks_mut(block_len)
            .zip(ws.blocks.par_iter())
            .enumerate()
            .for_each(|(j, (grad, cache))| {
                let mut dh = vec![T::zero(); batch * h];
                for b in 0..batch {
                    dh[b * h..(b + 1) * h]
                        .copy_from_slice(&dz[b * head_in + j * h..b * head_in + (j + 1) * h]);
                }
                let w_hh = &params[j * block_len + 4 * h..j * block_len + 4 * h + 4 * h * h];
                block_backward(w_hh, grad, h, arch.window, batch, cache, dh);
            });
    }

    if lambda != T::zero() {
        let scale = lambda * inv_n;
        for g in layout.groups.iter().filter(|g| g.weight) {
            for (d, &v) in grads[g.range()].iter_mut().zip(&params[g.range()]) {
                *d += scale * v;
            }
        }
    }
    check_finite(grads, "gradient")?;
    Ok(p)
}
