//! Minimal f32 neural-network engine: layers with explicit forward/backward
//! passes over channel-major batched tensors, backed by `matrixmultiply`.
//!
//! Activations are laid out `[channel][batch][row][col]`. Keeping every
//! channel contiguous across the batch lets a 3×3 convolution run as nine
//! GEMMs over shifted views of one zero-padded buffer, so no im2col copy is
//! needed in either direction.

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Batched activation tensor, `[c][b][h][w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub b: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(c: usize, b: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            b,
            h,
            w,
            data: vec![0.0; c * b * h * w],
        }
    }

    pub fn from_vec(c: usize, b: usize, h: usize, w: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), c * b * h * w, "tensor data length");
        Tensor { c, b, h, w, data }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Stack two tensors along the channel axis.
    pub fn concat(a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!((a.b, a.h, a.w), (b.b, b.h, b.w), "concat shape");
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor::from_vec(a.c + b.c, a.b, a.h, a.w, data)
    }

    /// Inverse of [`Tensor::concat`] for gradients.
    pub fn split(self, c_first: usize) -> (Tensor, Tensor) {
        let Tensor { c, b, h, w, mut data } = self;
        let rest = data.split_off(c_first * b * h * w);
        (
            Tensor::from_vec(c_first, b, h, w, data),
            Tensor::from_vec(c - c_first, b, h, w, rest),
        )
    }
}

/// C = alpha·A·B + beta·C over strided views. The slices bound every index
/// the views can touch, which keeps the unsafe call sound.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    beta: f32,
    c: &mut [f32],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(k == 0 || last(m, k, rsa, csa) < a.len(), "gemm: A view out of bounds");
    assert!(k == 0 || last(k, n, rsb, csb) < b.len(), "gemm: B view out of bounds");
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: C view out of bounds");
    // SAFETY: the asserts above keep all strided accesses inside the slices,
    // and `c` is a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Named slice of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// How parameters are initialized when a model is first built.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// He normal with the given fan-in.
    He(usize),
    /// Uniform on [−bound, bound].
    Uniform(f32),
    Const(f32),
}

/// Builder that hands out parameter slots and records their layout.
#[derive(Clone, Debug, Default)]
pub struct ParamLayout {
    pub entries: Vec<ParamEntry>,
    inits: Vec<Init>,
    total: usize,
}

impl ParamLayout {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> usize {
        let offset = self.total;
        let entry = ParamEntry {
            name: name.into(),
            offset,
            shape: shape.to_vec(),
        };
        self.total += entry.len();
        self.entries.push(entry);
        self.inits.push(init);
        offset
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn initialize<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f32> {
        let mut out = vec![0.0f32; self.total];
        for (e, init) in self.entries.iter().zip(&self.inits) {
            let dst = &mut out[e.range()];
            match *init {
                Init::Const(v) => dst.fill(v),
                Init::Uniform(bound) => {
                    for v in dst {
                        *v = rng.gen_range(-bound..=bound);
                    }
                }
                Init::He(fan_in) => {
                    let std = (2.0 / fan_in as f64).sqrt();
                    let normal = Normal::new(0.0, std).expect("positive std");
                    for v in dst {
                        *v = normal.sample(rng) as f32;
                    }
                }
            }
        }
        out
    }
}

/// 3×3 convolution, stride 1, zero padding 1. Weights are
/// `[cout][cin][3][3]`, biases `[cout]`.
///
/// The bias is not redundant in front of group norm: with several channels
/// per group, the spread of the biases sets part of the group variance, and
/// without it conv → norm on a zero-filled sparse input is invariant to the
/// overall scale of the readings. Biases start uniform in ±1/√fan_in.
#[derive(Clone, Copy, Debug)]
pub struct Conv3 {
    pub cin: usize,
    pub cout: usize,
    pub w: usize,
    pub bias: usize,
}

/// Zero-padded copy of a conv input, kept for the weight gradient.
pub struct PaddedInput {
    data: Vec<f32>,
    b: usize,
    h: usize,
    w: usize,
}

impl PaddedInput {
    fn pitch(&self) -> usize {
        self.w + 2
    }

    fn plane(&self) -> usize {
        (self.h + 2) * (self.w + 2)
    }
}

fn pad_zero(x: &Tensor) -> PaddedInput {
    let (h, w) = (x.h, x.w);
    let pp = (h + 2) * (w + 2);
    let mut data = vec![0.0f32; x.c * x.b * pp];
    for (src, dst) in x.data.chunks_exact(h * w).zip(data.chunks_exact_mut(pp)) {
        for r in 0..h {
            let d = (r + 1) * (w + 2) + 1;
            dst[d..d + w].copy_from_slice(&src[r * w..(r + 1) * w]);
        }
    }
    PaddedInput {
        data,
        b: x.b,
        h,
        w,
    }
}

impl Conv3 {
    pub fn new(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize) -> Self {
        let w = layout.add(format!("{name}.weight"), &[cout, cin, 3, 3], Init::He(cin * 9));
        let bound = 1.0 / ((cin * 9) as f32).sqrt();
        let bias = layout.add(format!("{name}.bias"), &[cout], Init::Uniform(bound));
        Conv3 { cin, cout, w, bias }
    }

    fn weights<'a>(&self, params: &'a [f32]) -> &'a [f32] {
        &params[self.w..self.w + self.cout * self.cin * 9]
    }

    /// Each output pixel (r, c) lands at padded position r·(W+2)+c of its
    /// sample's block; tap (dy, dx) reads the input shifted by dy·(W+2)+dx.
    /// Columns that straddle the padding are computed and thrown away.
    pub fn forward(&self, params: &[f32], x: &Tensor) -> (Tensor, PaddedInput) {
        assert_eq!(x.c, self.cin, "conv input channels");
        let xp = pad_zero(x);
        let (pitch, pp) = (xp.pitch(), xp.plane());
        let span = x.b * pp;
        let n = span - (2 * pitch + 2);
        let wt = self.weights(params);
        let mut ext = vec![0.0f32; self.cout * span];
        for k in 0..9 {
            let off = (k / 3) * pitch + k % 3;
            gemm(
                self.cout,
                self.cin,
                n,
                &wt[k..],
                self.cin * 9,
                9,
                &xp.data[off..],
                span,
                1,
                1.0,
                &mut ext,
                span,
                1,
            );
        }
        let mut y = Tensor::zeros(self.cout, x.b, x.h, x.w);
        for (src, dst) in ext.chunks_exact(pp).zip(y.data.chunks_exact_mut(x.h * x.w)) {
            for r in 0..x.h {
                dst[r * x.w..(r + 1) * x.w].copy_from_slice(&src[r * pitch..r * pitch + x.w]);
            }
        }
        let bias = &params[self.bias..self.bias + self.cout];
        for (row, &b) in y.data.chunks_exact_mut(x.b * x.h * x.w).zip(bias) {
            row.iter_mut().for_each(|v| *v += b);
        }
        (y, xp)
    }

    /// Accumulates the weight gradient into `grads`; returns the input
    /// gradient when `need_dx`.
    pub fn backward(
        &self,
        params: &[f32],
        xp: &PaddedInput,
        dy: &Tensor,
        grads: &mut [f32],
        need_dx: bool,
    ) -> Option<Tensor> {
        let (h, w) = (xp.h, xp.w);
        let (pitch, pp) = (xp.pitch(), xp.plane());
        let span = xp.b * pp;
        let n = span - (2 * pitch + 2);
        let gb = &mut grads[self.bias..self.bias + self.cout];
        for (g, row) in gb.iter_mut().zip(dy.data.chunks_exact(xp.b * h * w)) {
            *g += row.iter().sum::<f32>();
        }
        let mut dext = vec![0.0f32; self.cout * span];
        for (src, dst) in dy.data.chunks_exact(h * w).zip(dext.chunks_exact_mut(pp)) {
            for r in 0..h {
                dst[r * pitch..r * pitch + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
        }
        // The weight gradient reduces over every pixel; GEMM packing is far
        // faster when both operands are stored pixel-major.
        let dext_t = transpose(&dext, self.cout, span);
        let xp_t = transpose(&xp.data, self.cin, span);
        let gw = &mut grads[self.w..self.w + self.cout * self.cin * 9];
        for k in 0..9 {
            let off = (k / 3) * pitch + k % 3;
            gemm(
                self.cout,
                n,
                self.cin,
                &dext_t,
                1,
                self.cout,
                &xp_t[off * self.cin..],
                self.cin,
                1,
                1.0,
                &mut gw[k..],
                self.cin * 9,
                9,
            );
        }
        if !need_dx {
            return None;
        }
        let wt = self.weights(params);
        let mut dxp = vec![0.0f32; self.cin * span];
        for k in 0..9 {
            let off = (k / 3) * pitch + k % 3;
            gemm(
                self.cin,
                self.cout,
                n,
                &wt[k..],
                9,
                self.cin * 9,
                &dext,
                span,
                1,
                1.0,
                &mut dxp[off..],
                span,
                1,
            );
        }
        let mut dx = Tensor::zeros(self.cin, xp.b, h, w);
        for (src, dst) in dxp.chunks_exact(pp).zip(dx.data.chunks_exact_mut(h * w)) {
            for r in 0..h {
                let s = (r + 1) * pitch + 1;
                dst[r * w..(r + 1) * w].copy_from_slice(&src[s..s + w]);
            }
        }
        Some(dx)
    }
}

/// Transpose a row-major `rows × cols` matrix, in cache-sized column blocks.
fn transpose(src: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    const BLOCK: usize = 64;
    assert_eq!(src.len(), rows * cols);
    let mut dst = vec![0.0f32; rows * cols];
    for c0 in (0..cols).step_by(BLOCK) {
        let c1 = (c0 + BLOCK).min(cols);
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            for c in c0..c1 {
                dst[c * rows + r] = row[c];
            }
        }
    }
    dst
}

/// 1×1 convolution with bias: a per-pixel linear map over channels.
#[derive(Clone, Copy, Debug)]
pub struct Conv1 {
    pub cin: usize,
    pub cout: usize,
    pub w: usize,
    pub bias: usize,
}

impl Conv1 {
    pub fn new(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize, init: Init) -> Self {
        let w = layout.add(format!("{name}.weight"), &[cout, cin], init);
        let bias = layout.add(format!("{name}.bias"), &[cout], Init::Const(0.0));
        Conv1 { cin, cout, w, bias }
    }

    pub fn forward(&self, params: &[f32], x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.cin, "conv1 input channels");
        let span = x.b * x.plane();
        let mut y = Tensor::zeros(self.cout, x.b, x.h, x.w);
        for (o, row) in y.data.chunks_exact_mut(span).enumerate() {
            row.fill(params[self.bias + o]);
        }
        gemm(
            self.cout,
            self.cin,
            span,
            &params[self.w..],
            self.cin,
            1,
            &x.data,
            span,
            1,
            1.0,
            &mut y.data,
            span,
            1,
        );
        y
    }

    pub fn backward(&self, params: &[f32], x: &Tensor, dy: &Tensor, grads: &mut [f32]) -> Tensor {
        let span = x.b * x.plane();
        for (o, row) in dy.data.chunks_exact(span).enumerate() {
            grads[self.bias + o] += row.iter().sum::<f32>();
        }
        gemm(
            self.cout,
            span,
            self.cin,
            &dy.data,
            span,
            1,
            &x.data,
            1,
            span,
            1.0,
            &mut grads[self.w..],
            self.cin,
            1,
        );
        let mut dx = Tensor::zeros(self.cin, x.b, x.h, x.w);
        gemm(
            self.cin,
            self.cout,
            span,
            &params[self.w..],
            1,
            self.cin,
            &dy.data,
            span,
            1,
            0.0,
            &mut dx.data,
            span,
            1,
        );
        dx
    }
}

/// Group normalization followed by ReLU.
#[derive(Clone, Copy, Debug)]
pub struct GroupNormRelu {
    pub c: usize,
    pub groups: usize,
    pub gamma: usize,
    pub beta: usize,
}

pub struct GroupNormCache {
    xhat: Vec<f32>,
    /// 1/σ per (sample, group), indexed `b * groups + g`.
    inv_std: Vec<f32>,
    /// Post-ReLU output, kept for the ReLU mask.
    y: Tensor,
}

pub const GROUP_NORM_EPS: f64 = 1e-5;

impl GroupNormRelu {
    pub fn new(layout: &mut ParamLayout, name: &str, c: usize, groups: usize) -> Self {
        assert!(groups > 0 && c % groups == 0, "{c} channels not divisible into {groups} groups");
        let gamma = layout.add(format!("{name}.gamma"), &[c], Init::Const(1.0));
        let beta = layout.add(format!("{name}.beta"), &[c], Init::Const(0.0));
        GroupNormRelu { c, groups, gamma, beta }
    }

    pub fn forward(&self, params: &[f32], x: &Tensor) -> (Tensor, GroupNormCache) {
        assert_eq!(x.c, self.c, "group norm channels");
        let (b, hw) = (x.b, x.plane());
        let cg = self.c / self.groups;
        let mut xhat = vec![0.0f32; x.len()];
        let mut inv_std = vec![0.0f32; b * self.groups];
        let mut y = Tensor::zeros(x.c, b, x.h, x.w);
        for g in 0..self.groups {
            for bi in 0..b {
                let blocks = (g * cg..(g + 1) * cg).map(|ch| (ch * b + bi) * hw);
                let (mut s, mut s2) = (0.0f64, 0.0f64);
                for start in blocks.clone() {
                    for &v in &x.data[start..start + hw] {
                        s += v as f64;
                        s2 += (v as f64) * (v as f64);
                    }
                }
                let count = (cg * hw) as f64;
                let mean = s / count;
                let var = (s2 / count - mean * mean).max(0.0);
                let inv = 1.0 / (var + GROUP_NORM_EPS).sqrt();
                inv_std[bi * self.groups + g] = inv as f32;
                for (ci, start) in blocks.enumerate() {
                    let ch = g * cg + ci;
                    let (ga, be) = (params[self.gamma + ch], params[self.beta + ch]);
                    for i in start..start + hw {
                        let xh = ((x.data[i] as f64 - mean) * inv) as f32;
                        xhat[i] = xh;
                        y.data[i] = (ga * xh + be).max(0.0);
                    }
                }
            }
        }
        let out = y.clone();
        (out, GroupNormCache { xhat, inv_std, y })
    }

    pub fn backward(
        &self,
        params: &[f32],
        cache: &GroupNormCache,
        dy: &Tensor,
        grads: &mut [f32],
    ) -> Tensor {
        let (b, hw) = (dy.b, dy.plane());
        let cg = self.c / self.groups;
        let mut dx = Tensor::zeros(dy.c, b, dy.h, dy.w);
        // dxhat stored in dx first, then overwritten in place
        for ch in 0..self.c {
            let ga = params[self.gamma + ch];
            let (mut dg, mut db) = (0.0f64, 0.0f64);
            let range = ch * b * hw..(ch + 1) * b * hw;
            for i in range {
                let d = if cache.y.data[i] > 0.0 { dy.data[i] } else { 0.0 };
                dg += (d * cache.xhat[i]) as f64;
                db += d as f64;
                dx.data[i] = d * ga;
            }
            grads[self.gamma + ch] += dg as f32;
            grads[self.beta + ch] += db as f32;
        }
        for g in 0..self.groups {
            for bi in 0..b {
                let blocks = (g * cg..(g + 1) * cg).map(|ch| (ch * b + bi) * hw);
                let (mut a, mut c) = (0.0f64, 0.0f64);
                for start in blocks.clone() {
                    for i in start..start + hw {
                        a += dx.data[i] as f64;
                        c += (dx.data[i] * cache.xhat[i]) as f64;
                    }
                }
                let count = (cg * hw) as f64;
                let (a, c) = ((a / count) as f32, (c / count) as f32);
                let inv = cache.inv_std[bi * self.groups + g];
                for start in blocks {
                    for i in start..start + hw {
                        dx.data[i] = inv * (dx.data[i] - a - cache.xhat[i] * c);
                    }
                }
            }
        }
        dx
    }
}

/// 2×2 max pooling, stride 2. Returns the argmax position in each window.
pub fn maxpool2(x: &Tensor) -> (Tensor, Vec<u8>) {
    assert!(x.h % 2 == 0 && x.w % 2 == 0, "maxpool needs even sizes");
    let (ho, wo) = (x.h / 2, x.w / 2);
    let mut y = Tensor::zeros(x.c, x.b, ho, wo);
    let mut arg = vec![0u8; y.len()];
    for (p, (src, dst)) in x
        .data
        .chunks_exact(x.plane())
        .zip(y.data.chunks_exact_mut(ho * wo))
        .enumerate()
    {
        let args = &mut arg[p * ho * wo..(p + 1) * ho * wo];
        for r in 0..ho {
            for c in 0..wo {
                let mut best = f32::NEG_INFINITY;
                let mut which = 0u8;
                for k in 0..4u8 {
                    let v = src[(2 * r + (k as usize >> 1)) * x.w + 2 * c + (k as usize & 1)];
                    if v > best {
                        best = v;
                        which = k;
                    }
                }
                dst[r * wo + c] = best;
                args[r * wo + c] = which;
            }
        }
    }
    (y, arg)
}

pub fn maxpool2_backward(dy: &Tensor, arg: &[u8]) -> Tensor {
    let (h, w) = (dy.h * 2, dy.w * 2);
    let mut dx = Tensor::zeros(dy.c, dy.b, h, w);
    let pw = dy.plane();
    for (p, (src, dst)) in dy
        .data
        .chunks_exact(pw)
        .zip(dx.data.chunks_exact_mut(h * w))
        .enumerate()
    {
        for r in 0..dy.h {
            for c in 0..dy.w {
                let k = arg[p * pw + r * dy.w + c] as usize;
                dst[(2 * r + (k >> 1)) * w + 2 * c + (k & 1)] = src[r * dy.w + c];
            }
        }
    }
    dx
}

/// Corner-aligned linear interpolation taps along one axis.
fn taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f32)> {
    (0..n_out)
        .map(|i| {
            if n_in == 1 || n_out == 1 {
                return (0, 0, 0.0);
            }
            let src = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, (src - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resize with aligned corners (the first and last pixels of each
/// axis map onto each other exactly).
pub fn resize_bilinear(x: &Tensor, ho: usize, wo: usize) -> Tensor {
    let (ty, tx) = (taps(x.h, ho), taps(x.w, wo));
    let mut y = Tensor::zeros(x.c, x.b, ho, wo);
    for (src, dst) in x.data.chunks_exact(x.plane()).zip(y.data.chunks_exact_mut(ho * wo)) {
        for (r, &(r0, r1, fy)) in ty.iter().enumerate() {
            for (c, &(c0, c1, fx)) in tx.iter().enumerate() {
                let top = src[r0 * x.w + c0] * (1.0 - fx) + src[r0 * x.w + c1] * fx;
                let bot = src[r1 * x.w + c0] * (1.0 - fx) + src[r1 * x.w + c1] * fx;
                dst[r * wo + c] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    y
}

pub fn resize_bilinear_backward(dy: &Tensor, hi: usize, wi: usize) -> Tensor {
    let (ty, tx) = (taps(hi, dy.h), taps(wi, dy.w));
    let mut dx = Tensor::zeros(dy.c, dy.b, hi, wi);
    for (src, dst) in dy.data.chunks_exact(dy.plane()).zip(dx.data.chunks_exact_mut(hi * wi)) {
        for (r, &(r0, r1, fy)) in ty.iter().enumerate() {
            for (c, &(c0, c1, fx)) in tx.iter().enumerate() {
                let g = src[r * dy.w + c];
                dst[r0 * wi + c0] += g * (1.0 - fy) * (1.0 - fx);
                dst[r0 * wi + c1] += g * (1.0 - fy) * fx;
                dst[r1 * wi + c0] += g * fy * (1.0 - fx);
                dst[r1 * wi + c1] += g * fy * fx;
            }
        }
    }
    dx
}

/// Fully connected layer on row-major `[batch][features]` matrices.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub din: usize,
    pub dout: usize,
    pub w: usize,
    pub bias: usize,
}

impl Linear {
    pub fn new(layout: &mut ParamLayout, name: &str, din: usize, dout: usize, init: Init) -> Self {
        let w = layout.add(format!("{name}.weight"), &[dout, din], init);
        let bias = layout.add(format!("{name}.bias"), &[dout], Init::Const(0.0));
        Linear { din, dout, w, bias }
    }

    pub fn forward(&self, params: &[f32], x: &[f32], batch: usize) -> Vec<f32> {
        assert_eq!(x.len(), batch * self.din, "linear input size");
        let mut y = Vec::with_capacity(batch * self.dout);
        for _ in 0..batch {
            y.extend_from_slice(&params[self.bias..self.bias + self.dout]);
        }
        // y[b][o] += Σ_i x[b][i]·W[o][i]
        gemm(
            batch,
            self.din,
            self.dout,
            x,
            self.din,
            1,
            &params[self.w..],
            1,
            self.din,
            1.0,
            &mut y,
            self.dout,
            1,
        );
        y
    }

    pub fn backward(
        &self,
        params: &[f32],
        x: &[f32],
        dy: &[f32],
        batch: usize,
        grads: &mut [f32],
        need_dx: bool,
    ) -> Option<Vec<f32>> {
        for row in dy.chunks_exact(self.dout) {
            for (g, d) in grads[self.bias..self.bias + self.dout].iter_mut().zip(row) {
                *g += d;
            }
        }
        // dW[o][i] += Σ_b dy[b][o]·x[b][i]
        gemm(
            self.dout,
            batch,
            self.din,
            dy,
            1,
            self.dout,
            x,
            self.din,
            1,
            1.0,
            &mut grads[self.w..],
            self.din,
            1,
        );
        if !need_dx {
            return None;
        }
        let mut dx = vec![0.0f32; batch * self.din];
        gemm(
            batch,
            self.dout,
            self.din,
            dy,
            self.dout,
            1,
            &params[self.w..],
            self.din,
            1,
            0.0,
            &mut dx,
            self.din,
            1,
        );
        Some(dx)
    }
}

pub fn relu_inplace(x: &mut [f32]) {
    for v in x {
        *v = v.max(0.0);
    }
}

/// Zero the gradient wherever the ReLU output was clamped.
pub fn relu_backward_inplace(y: &[f32], dy: &mut [f32]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
}
