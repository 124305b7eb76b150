//! Adaptive UNet: a UNet whose decoder upsamples by bilinear interpolation
//! instead of transposed convolution and normalizes with group norm.
//!
//! Stage plan for base width B and depth D: encoder widths B, 2B, …,
//! 2^(D−1)·B, bottleneck 2^(D−1)·B; decoder stage i takes the upsampled
//! lower stage concatenated with the level-i skip (2^(i+1)·B channels) and
//! emits 2^(i−1)·B channels (B at the top). Each stage is two 3×3
//! conv → group norm → ReLU blocks; a 1×1 conv produces the output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    maxpool2, maxpool2_backward, resize_bilinear, resize_bilinear_backward, Conv1, Conv3,
    GroupNormCache, GroupNormRelu, Init, PaddedInput, ParamLayout, Tensor,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    pub depth: usize,
    pub norm_groups: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            in_channels: 1,
            out_channels: 1,
            base_width: 64,
            depth: 4,
            norm_groups: 8,
        }
    }
}

impl UNetConfig {
    /// The reduced width used for CPU-scale experiments.
    pub fn desk() -> Self {
        UNetConfig {
            base_width: 32,
            ..Self::default()
        }
    }

    /// Smallest multiple of 2^depth that is at least `n`.
    pub fn pad_to(&self, n: usize) -> usize {
        let m = 1 << self.depth;
        n.div_ceil(m) * m
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.base_width == 0 {
            return Err(Error::Config("UNet channel counts must be positive".into()));
        }
        if self.depth == 0 || self.depth > 8 {
            return Err(Error::Config(format!("UNet depth {} outside 1..=8", self.depth)));
        }
        for c in self.stage_widths() {
            if self.norm_groups == 0 || c % self.norm_groups != 0 {
                return Err(Error::Config(format!(
                    "{} norm groups do not divide a {c}-channel stage",
                    self.norm_groups
                )));
            }
        }
        Ok(())
    }

    fn stage_widths(&self) -> Vec<usize> {
        let b = self.base_width;
        let d = self.depth;
        let mut v: Vec<usize> = (0..d).map(|i| b << i).collect();
        v.push(b << (d - 1));
        for i in (0..d).rev() {
            v.push(b << i);
            v.push(up_out(b, i));
        }
        v
    }
}

fn up_out(base: usize, level: usize) -> usize {
    if level == 0 {
        base
    } else {
        base << (level - 1)
    }
}

#[derive(Clone, Copy, Debug)]
struct DoubleConv {
    c1: Conv3,
    n1: GroupNormRelu,
    c2: Conv3,
    n2: GroupNormRelu,
}

struct DoubleConvTape {
    x1: PaddedInput,
    g1: GroupNormCache,
    x2: PaddedInput,
    g2: GroupNormCache,
}

impl DoubleConv {
    fn new(layout: &mut ParamLayout, name: &str, cin: usize, mid: usize, cout: usize, groups: usize) -> Self {
        DoubleConv {
            c1: Conv3::new(layout, &format!("{name}.conv1"), cin, mid),
            n1: GroupNormRelu::new(layout, &format!("{name}.norm1"), mid, groups),
            c2: Conv3::new(layout, &format!("{name}.conv2"), mid, cout),
            n2: GroupNormRelu::new(layout, &format!("{name}.norm2"), cout, groups),
        }
    }

    fn forward(&self, p: &[f32], x: &Tensor) -> (Tensor, DoubleConvTape) {
        let (a, x1) = self.c1.forward(p, x);
        let (a, g1) = self.n1.forward(p, &a);
        let (b, x2) = self.c2.forward(p, &a);
        let (b, g2) = self.n2.forward(p, &b);
        (b, DoubleConvTape { x1, g1, x2, g2 })
    }

    fn backward(&self, p: &[f32], t: &DoubleConvTape, dy: &Tensor, g: &mut [f32], need_dx: bool) -> Option<Tensor> {
        let d = self.n2.backward(p, &t.g2, dy, g);
        let d = self.c2.backward(p, &t.x2, &d, g, true).expect("dx requested");
        let d = self.n1.backward(p, &t.g1, &d, g);
        self.c1.backward(p, &t.x1, &d, g, need_dx)
    }
}

pub struct UNet {
    pub config: UNetConfig,
    pub layout: ParamLayout,
    inc: DoubleConv,
    downs: Vec<DoubleConv>,
    /// Decoder stages, ordered from the deepest level up.
    ups: Vec<DoubleConv>,
    head: Conv1,
}

pub struct UNetTape {
    inc: DoubleConvTape,
    pools: Vec<Vec<u8>>,
    downs: Vec<DoubleConvTape>,
    ups: Vec<DoubleConvTape>,
    /// Skip channels and the pre-upsampling size of each decoder stage.
    up_shapes: Vec<(usize, usize, usize)>,
    head_in: Tensor,
    level_shapes: Vec<(usize, usize)>,
}

impl UNet {
    pub fn new(config: UNetConfig) -> Result<Self> {
        config.validate()?;
        let b = config.base_width;
        let d = config.depth;
        let g = config.norm_groups;
        let mut layout = ParamLayout::default();
        let inc = DoubleConv::new(&mut layout, "inc", config.in_channels, b, b, g);
        let mut downs = Vec::with_capacity(d);
        for i in 1..=d {
            let cin = b << (i - 1);
            let cout = if i == d { b << (d - 1) } else { b << i };
            downs.push(DoubleConv::new(&mut layout, &format!("down{i}"), cin, cout, cout, g));
        }
        let mut ups = Vec::with_capacity(d);
        for (k, level) in (0..d).rev().enumerate() {
            let cin = b << (level + 1);
            let mid = cin / 2;
            ups.push(DoubleConv::new(&mut layout, &format!("up{}", k + 1), cin, mid, up_out(b, level), g));
        }
        let head = Conv1::new(&mut layout, "outc", b, config.out_channels, Init::He(b));
        Ok(UNet {
            config,
            layout,
            inc,
            downs,
            ups,
            head,
        })
    }

    pub fn n_params(&self) -> usize {
        self.layout.total()
    }

    /// Apply the network to an input whose sides are divisible by 2^depth.
    pub fn forward(&self, p: &[f32], x: &Tensor) -> (Tensor, UNetTape) {
        assert_eq!(p.len(), self.n_params(), "parameter vector length");
        let m = 1 << self.config.depth;
        assert!(x.h % m == 0 && x.w % m == 0, "input sides must be divisible by {m}");
        let (s0, inc) = self.inc.forward(p, x);
        let mut skips = vec![s0];
        let mut pools = Vec::new();
        let mut downs = Vec::new();
        let mut level_shapes = vec![(x.h, x.w)];
        for dc in &self.downs {
            let (pooled, arg) = maxpool2(skips.last().expect("nonempty"));
            level_shapes.push((pooled.h, pooled.w));
            let (s, t) = dc.forward(p, &pooled);
            pools.push(arg);
            downs.push(t);
            skips.push(s);
        }
        let mut y = skips.pop().expect("bottleneck");
        let mut ups = Vec::new();
        let mut up_shapes = Vec::new();
        for dc in &self.ups {
            let skip = skips.pop().expect("skip per level");
            up_shapes.push((skip.c, y.h, y.w));
            let u = resize_bilinear(&y, skip.h, skip.w);
            let cat = Tensor::concat(&skip, &u);
            let (out, t) = dc.forward(p, &cat);
            ups.push(t);
            y = out;
        }
        let out = self.head.forward(p, &y);
        (
            out,
            UNetTape {
                inc,
                pools,
                downs,
                ups,
                up_shapes,
                head_in: y,
                level_shapes,
            },
        )
    }

    /// Accumulate parameter gradients for output gradient `dy`.
    pub fn backward(&self, p: &[f32], tape: &UNetTape, dy: &Tensor, grads: &mut [f32]) {
        assert_eq!(grads.len(), self.n_params(), "gradient vector length");
        let mut d = self.head.backward(p, &tape.head_in, dy, grads);
        let depth = self.config.depth;
        // skip gradients indexed by level
        let mut dskip: Vec<Option<Tensor>> = (0..depth).map(|_| None).collect();
        for (k, dc) in self.ups.iter().enumerate().rev() {
            let level = depth - 1 - k;
            let (c_skip, h_low, w_low) = tape.up_shapes[k];
            let dcat = dc.backward(p, &tape.ups[k], &d, grads, true).expect("dx requested");
            let (ds, du) = dcat.split(c_skip);
            dskip[level] = Some(ds);
            d = resize_bilinear_backward(&du, h_low, w_low);
        }
        for i in (1..=depth).rev() {
            let dp = self.downs[i - 1]
                .backward(p, &tape.downs[i - 1], &d, grads, true)
                .expect("dx requested");
            let (h, w) = tape.level_shapes[i];
            debug_assert_eq!((dp.h, dp.w), (h, w));
            let mut up = maxpool2_backward(&dp, &tape.pools[i - 1]);
            let ds = dskip[i - 1].take().expect("skip gradient");
            for (a, b) in up.data.iter_mut().zip(&ds.data) {
                *a += b;
            }
            d = up;
        }
        self.inc.backward(p, &tape.inc, &d, grads, false);
    }
}

/// Reflect-pad index: maps [−lo, n + hi) onto [0, n) without repeating edges.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Reflect-pad a batch of single-channel n×n planes to size×size.
pub fn pad_reflect(planes: &[f32], b: usize, n: usize, size: usize) -> Tensor {
    assert_eq!(planes.len(), b * n * n);
    let lo = (size - n) / 2;
    let mut out = Tensor::zeros(1, b, size, size);
    for (src, dst) in planes.chunks_exact(n * n).zip(out.data.chunks_exact_mut(size * size)) {
        for r in 0..size {
            let sr = reflect(r as isize - lo as isize, n);
            for c in 0..size {
                dst[r * size + c] = src[sr * n + reflect(c as isize - lo as isize, n)];
            }
        }
    }
    out
}

/// Crop the centre n×n window of each padded plane (inverse of the padding
/// offset used by [`pad_reflect`]).
pub fn crop(t: &Tensor, n: usize) -> Vec<f32> {
    let lo = (t.h - n) / 2;
    let mut out = Vec::with_capacity(t.c * t.b * n * n);
    for plane in t.data.chunks_exact(t.plane()) {
        for r in lo..lo + n {
            out.extend_from_slice(&plane[r * t.w + lo..r * t.w + lo + n]);
        }
    }
    out
}

/// Adjoint of [`crop`]: place n×n gradients back into zero padded planes.
pub fn uncrop(d: &[f32], c: usize, b: usize, n: usize, size: usize) -> Tensor {
    let lo = (size - n) / 2;
    let mut out = Tensor::zeros(c, b, size, size);
    for (src, dst) in d.chunks_exact(n * n).zip(out.data.chunks_exact_mut(size * size)) {
        for r in 0..n {
            let o = (r + lo) * size + lo;
            dst[o..o + n].copy_from_slice(&src[r * n..(r + 1) * n]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_plan_widths() {
        let net = UNet::new(UNetConfig::desk()).unwrap();
        let names: Vec<(&str, &[usize])> = net
            .layout
            .entries
            .iter()
            .filter(|e| e.name.ends_with("conv1.weight") || e.name.ends_with("conv2.weight"))
            .map(|e| (e.name.as_str(), e.shape.as_slice()))
            .collect();
        assert_eq!(names[0], ("inc.conv1.weight", &[32, 1, 3, 3][..]));
        let find = |n: &str| names.iter().find(|(m, _)| *m == n).unwrap().1[..2].to_vec();
        assert_eq!(find("down4.conv2.weight"), vec![256, 256]);
        assert_eq!(find("up1.conv1.weight"), vec![256, 512]);
        assert_eq!(find("up1.conv2.weight"), vec![128, 256]);
        assert_eq!(find("up4.conv1.weight"), vec![32, 64]);
        assert_eq!(find("up4.conv2.weight"), vec![32, 32]);
    }

    #[test]
    fn padding_rule() {
        let c = UNetConfig::default();
        assert_eq!(c.pad_to(200), 208);
        assert_eq!(c.pad_to(64), 64);
        assert_eq!(c.pad_to(50), 64);
        assert_eq!(c.pad_to(16), 16);
    }

    #[test]
    fn bad_group_count_is_rejected() {
        let c = UNetConfig {
            base_width: 12,
            ..UNetConfig::default()
        };
        assert!(UNet::new(c).is_err());
    }

    #[test]
    fn reflect_pad_then_crop_is_identity() {
        let v: Vec<f32> = (0..2 * 5 * 5).map(|i| i as f32).collect();
        let t = pad_reflect(&v, 2, 5, 8);
        assert_eq!(crop(&t, 5), v);
        // one row below the original block mirrors row 1
        assert_eq!(t.data[0 * 8 + 1], v[1 * 5]);
    }
}
