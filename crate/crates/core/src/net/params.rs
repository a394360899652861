use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;

/// One named tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Affine layer `y = x W + b`, optionally followed by ReLU.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub relu: bool,
}

impl Dense {
    pub fn weight<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.fan_in, self.fan_out), &p[self.w..self.w + self.fan_in * self.fan_out])
            .expect("layout matches parameter vector")
    }

    pub fn bias<'a>(&self, p: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&p[self.b..self.b + self.fan_out])
    }

    pub fn forward(&self, p: &[f64], x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight(p));
        y += &self.bias(p);
        if self.relu {
            y.mapv_inplace(|v| v.max(0.0));
        }
        y
    }

    /// Accumulates parameter gradients into `g` and returns `dL/dx`.
    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &Array2<f64>, y: &Array2<f64>, mut dy: Array2<f64>) -> Array2<f64> {
        if self.relu {
            Zip::from(&mut dy).and(y).for_each(|d, &v| {
                if v <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        let (gw, gb) = g.split_at_mut(self.b);
        let mut gw = ArrayViewMut2::from_shape(
            (self.fan_in, self.fan_out),
            &mut gw[self.w..self.w + self.fan_in * self.fan_out],
        )
        .expect("layout matches gradient vector");
        gw += &x.t().dot(&dy);
        let mut gb = ArrayViewMut1::from(&mut gb[..self.fan_out]);
        gb += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight(p).t())
    }
}

/// Layer activations of one MLP pass: `acts[0]` is the input.
pub type MlpTape = Vec<Array2<f64>>;

pub fn mlp_forward(layers: &[Dense], p: &[f64], x: Array2<f64>) -> MlpTape {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x);
    for layer in layers {
        let y = layer.forward(p, acts.last().expect("non-empty"));
        acts.push(y);
    }
    acts
}

pub fn mlp_backward(layers: &[Dense], p: &[f64], g: &mut [f64], acts: &MlpTape, mut dy: Array2<f64>) -> Array2<f64> {
    for (i, layer) in layers.iter().enumerate().rev() {
        dy = layer.backward(p, g, &acts[i], &acts[i + 1], dy);
    }
    dy
}

/// Where every layer of a [`NetworkConfig`] lives in the flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub entries: Vec<ParamEntry>,
    pub pre: Vec<Dense>,
    /// `sa[level][scale]` is a shared MLP.
    pub sa: Vec<Vec<Vec<Dense>>>,
    pub fp: Vec<Vec<Dense>>,
    /// Hidden layers followed by the linear output layer.
    pub head: Vec<Dense>,
    pub total: usize,
}

struct Builder {
    entries: Vec<ParamEntry>,
    total: usize,
}

impl Builder {
    fn tensor(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let offset = self.total;
        self.entries.push(ParamEntry { name, offset, rows, cols });
        self.total += rows * cols;
        offset
    }

    fn mlp(&mut self, prefix: &str, mut fan_in: usize, widths: &[usize], relu_last: bool) -> Vec<Dense> {
        let mut out = Vec::with_capacity(widths.len());
        for (i, &fan_out) in widths.iter().enumerate() {
            let w = self.tensor(format!("{prefix}.{i}.weight"), fan_in, fan_out);
            let b = self.tensor(format!("{prefix}.{i}.bias"), 1, fan_out);
            let relu = relu_last || i + 1 < widths.len();
            out.push(Dense { w, b, fan_in, fan_out, relu });
            fan_in = fan_out;
        }
        out
    }
}

impl Layout {
    pub fn new(config: &NetworkConfig) -> Self {
        let mut b = Builder { entries: Vec::new(), total: 0 };
        let pre = b.mlp("pre", crate::features::NUM_FEATURES, &config.preprocess, true);
        let mut channels = vec![config.base_channels()];
        let mut sa = Vec::with_capacity(config.sa.len());
        for (l, level) in config.sa.iter().enumerate() {
            let c_in = 2 + channels[l];
            let scales = level
                .mlps
                .iter()
                .enumerate()
                .map(|(s, widths)| b.mlp(&format!("sa{}.scale{s}", l + 1), c_in, widths, true))
                .collect();
            sa.push(scales);
            channels.push(level.out_channels());
        }
        let mut fp = Vec::with_capacity(config.fp.len());
        let mut coarse = channels[config.sa.len()];
        for (j, widths) in config.fp.iter().enumerate() {
            let skip = channels[config.sa.len() - 1 - j];
            fp.push(b.mlp(&format!("fp{}", j + 1), coarse + skip, widths, true));
            coarse = *widths.last().expect("validated");
        }
        let mut head_widths = config.head.clone();
        head_widths.push(config.num_classes);
        let head = b.mlp("head", coarse, &head_widths, false);
        Layout {
            entries: b.entries,
            pre,
            sa,
            fp,
            head,
            total: b.total,
        }
    }

    /// He-normal weights, zero biases.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; self.total];
        for e in &self.entries {
            if e.name.ends_with(".weight") {
                let dist = Normal::new(0.0, (2.0 / e.rows as f64).sqrt()).expect("positive std");
                for v in &mut p[e.range()] {
                    *v = dist.sample(&mut rng);
                }
            }
        }
        p
    }

    /// Name of the tensor holding flat index `i`, with the element offset.
    pub fn locate(&self, i: usize) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|e| e.range().contains(&i))
            .map(|e| (e.name.as_str(), i - e.offset))
    }
}
