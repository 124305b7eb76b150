//! Fully connected networks: the patch regressor and the coarse-grid
//! baseline that predicts a whole field from the reading vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{relu_backward_inplace, relu_inplace, Init, Linear, ParamLayout};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Layer widths from input to output, e.g. [m, 32, 32, 52].
    pub sizes: Vec<usize>,
}

impl MlpConfig {
    pub fn patch(m: usize, p: usize) -> Self {
        MlpConfig {
            sizes: vec![m, 32, 32, p],
        }
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) {
            return Err(Error::Config(format!(
                "MLP needs at least two positive layer sizes, got {:?}",
                self.sizes
            )));
        }
        Ok(())
    }
}

/// ReLU on every hidden layer, identity on the output.
pub struct Mlp {
    pub config: MlpConfig,
    pub layout: ParamLayout,
    layers: Vec<Linear>,
}

pub struct MlpTape {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Vec<f32>>,
    batch: usize,
}

impl Mlp {
    pub fn new(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut layout = ParamLayout::default();
        let layers = config
            .sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&mut layout, &format!("fc{}", i + 1), w[0], w[1], Init::He(w[0])))
            .collect();
        Ok(Mlp {
            config,
            layout,
            layers,
        })
    }

    pub fn n_params(&self) -> usize {
        self.layout.total()
    }

    /// Offset and length of the final layer's weights and bias.
    pub fn output_layer(&self) -> (usize, usize) {
        let last = self.layers.last().expect("at least one layer");
        (last.w, last.dout * (last.din + 1))
    }

    pub fn forward(&self, p: &[f32], x: &[f32], batch: usize) -> (Vec<f32>, MlpTape) {
        assert_eq!(p.len(), self.n_params(), "parameter vector length");
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(p, &h, batch);
            if i + 1 < self.layers.len() {
                relu_inplace(&mut y);
            }
            inputs.push(h);
            h = y;
        }
        (h, MlpTape { inputs, batch })
    }

    pub fn backward(&self, p: &[f32], tape: &MlpTape, dy: &[f32], grads: &mut [f32]) {
        let mut d = dy.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let need_dx = i > 0;
            let dx = layer.backward(p, &tape.inputs[i], &d, tape.batch, grads, need_dx);
            if let Some(mut dx) = dx {
                // inputs[i] is the ReLU output of layer i−1
                relu_backward_inplace(&tape.inputs[i], &mut dx);
                d = dx;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnBaselineConfig {
    pub inputs: usize,
    pub hidden: usize,
    /// Side of the coarse output grid before bilinear upsampling.
    pub coarse_n: usize,
}

impl NnBaselineConfig {
    pub fn new(m: usize) -> Self {
        NnBaselineConfig {
            inputs: m,
            hidden: 256,
            coarse_n: 50,
        }
    }

    pub fn mlp(&self) -> MlpConfig {
        MlpConfig {
            sizes: vec![self.inputs, self.hidden, self.hidden, self.coarse_n * self.coarse_n],
        }
    }
}
