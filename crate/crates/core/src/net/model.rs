use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use super::config::NetworkConfig;
use super::params::{mlp_backward, mlp_forward, Layout, MlpTape, ParamEntry};
use super::sampling::{build_plan, FpsStart, SamplingPlan};
use crate::error::{Error, Result};
use crate::features::{Standardizer, COL_X, COL_Y, NUM_FEATURES};

/// FPS seed used for inference, so predictions are a pure function of the
/// input.
pub const INFERENCE_SEED: u64 = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: NetworkConfig,
    pub standardizer: Standardizer,
    pub params: Vec<f64>,
    layout: Layout,
}

struct ScaleTape {
    mlp: MlpTape,
    /// Row of the group tensor that won the max, per (center, channel).
    argmax: Array2<usize>,
}

/// Intermediate values of one forward pass, consumed by [`Model::backward`].
pub struct Tape {
    pre: MlpTape,
    /// `feats[0]` enters level 1; `feats[l]` is the output of level `l`.
    feats: Vec<Array2<f64>>,
    sa: Vec<Vec<ScaleTape>>,
    fp: Vec<MlpTape>,
    head: MlpTape,
}

impl Tape {
    /// ReLU activity and pooling winners; equal signatures mean the forward
    /// pass is a single smooth piece around the current parameters.
    pub fn signature(&self) -> Vec<u64> {
        let mut sig = Vec::new();
        let mut push_acts = |acts: &MlpTape| {
            for a in &acts[1..] {
                sig.extend(a.iter().map(|&v| u64::from(v > 0.0)));
            }
        };
        push_acts(&self.pre);
        for level in &self.sa {
            for sc in level {
                push_acts(&sc.mlp);
            }
        }
        for f in &self.fp {
            push_acts(f);
        }
        push_acts(&self.head);
        for level in &self.sa {
            for sc in level {
                sig.extend(sc.argmax.iter().map(|&i| i as u64));
            }
        }
        sig
    }
}

impl Model {
    /// Freshly initialized model.
    pub fn new(config: NetworkConfig, standardizer: Standardizer, seed: u64) -> Result<Self> {
        config.validate()?;
        standardizer.validate()?;
        let layout = Layout::new(&config);
        let params = layout.init(seed);
        Ok(Model {
            config,
            standardizer,
            params,
            layout,
        })
    }

    /// Rebuilds a model from stored parameters, checking their layout.
    pub fn from_parts(config: NetworkConfig, standardizer: Standardizer, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        standardizer.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Checkpoint(format!(
                "parameter count {} does not match the configured topology ({})",
                params.len(),
                layout.total
            )));
        }
        Ok(Model {
            config,
            standardizer,
            params,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn manifest(&self) -> &[ParamEntry] {
        &self.layout().entries
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Sampling plan for standardized positions.
    pub fn plan(&self, positions: ArrayView2<f64>, start: FpsStart) -> Result<SamplingPlan> {
        build_plan(&self.config, positions, self.standardizer.xy_scale(), start)
    }

    /// Logits for a standardized feature matrix with exactly
    /// `input_points` rows, using the inference sampling plan.
    pub fn forward(&self, features: ArrayView2<f64>, positions: ArrayView2<f64>) -> Result<Array2<f64>> {
        if features.nrows() != self.config.input_points || positions.nrows() != features.nrows() {
            return Err(Error::Contract(format!(
                "forward expects {} points, got {} feature rows and {} positions",
                self.config.input_points,
                features.nrows(),
                positions.nrows()
            )));
        }
        self.forward_any(features, positions)
    }

    /// As [`Model::forward`] for any number of points; sample counts are
    /// clamped to the input size.
    pub fn forward_any(&self, features: ArrayView2<f64>, positions: ArrayView2<f64>) -> Result<Array2<f64>> {
        let plan = self.plan(positions, FpsStart::Seeded(INFERENCE_SEED))?;
        Ok(self.forward_planned(features, &plan)?.0)
    }

    /// Standardizes raw feature rows and runs [`Model::forward_any`].
    pub fn infer(&self, raw: &Array2<f64>) -> Result<Array2<f64>> {
        let z = self.standardizer.apply(raw)?;
        let pos = z.slice(s![.., COL_X..=COL_Y]).to_owned();
        self.forward_any(z.view(), pos.view())
    }

    pub fn forward_planned(&self, features: ArrayView2<f64>, plan: &SamplingPlan) -> Result<(Array2<f64>, Tape)> {
        if features.ncols() != NUM_FEATURES || features.nrows() != plan.input_points() {
            return Err(Error::Contract(format!(
                "feature matrix is {}x{}, plan expects {}x{NUM_FEATURES}",
                features.nrows(),
                features.ncols(),
                plan.input_points()
            )));
        }
        let layout = self.layout();
        let p = &self.params[..];
        let pre = mlp_forward(&layout.pre, p, features.to_owned());
        let x0 = pre.last().expect("input stored").clone();
        let mut feats = vec![x0];
        let mut sa_tapes = Vec::with_capacity(layout.sa.len());
        for (l, scales) in layout.sa.iter().enumerate() {
            let lp = &plan.levels[l];
            let prev_pos = &plan.positions[l];
            let centers = &plan.positions[l + 1];
            let m = lp.centers.len();
            let mut outs = Vec::with_capacity(scales.len());
            let mut tapes = Vec::with_capacity(scales.len());
            for (mlp, groups) in scales.iter().zip(&lp.groups) {
                let k = groups.k;
                let c_in = feats[l].ncols();
                let mut g = Array2::zeros((m * k, 2 + c_in));
                for c in 0..m {
                    for (slot, &j) in groups.group(c).iter().enumerate() {
                        let mut row = g.row_mut(c * k + slot);
                        row[0] = prev_pos[[j, 0]] - centers[[c, 0]];
                        row[1] = prev_pos[[j, 1]] - centers[[c, 1]];
                        row.slice_mut(s![2..]).assign(&feats[l].row(j));
                    }
                }
                let acts = mlp_forward(mlp, p, g);
                let h = acts.last().expect("non-empty");
                let c_out = h.ncols();
                let mut pooled = Array2::zeros((m, c_out));
                let mut argmax = Array2::zeros((m, c_out));
                for c in 0..m {
                    for ch in 0..c_out {
                        let mut best = c * k;
                        for r in c * k + 1..(c + 1) * k {
                            if h[[r, ch]] > h[[best, ch]] {
                                best = r;
                            }
                        }
                        pooled[[c, ch]] = h[[best, ch]];
                        argmax[[c, ch]] = best;
                    }
                }
                outs.push(pooled);
                tapes.push(ScaleTape { mlp: acts, argmax });
            }
            let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
            feats.push(concatenate(Axis(1), &views).expect("equal row counts"));
            sa_tapes.push(tapes);
        }
        let levels = layout.sa.len();
        let mut coarse = feats[levels].clone();
        let mut fp_tapes = Vec::with_capacity(layout.fp.len());
        for (j, mlp) in layout.fp.iter().enumerate() {
            let fine = levels - 1 - j;
            let it = &plan.interp[j];
            let n = plan.positions[fine].nrows();
            let mut input = Array2::zeros((n, coarse.ncols() + feats[fine].ncols()));
            for f in 0..n {
                let mut row = input.row_mut(f);
                for t in 0..it.k {
                    let w = it.weights[f * it.k + t];
                    if w != 0.0 {
                        row.slice_mut(s![..coarse.ncols()]).scaled_add(w, &coarse.row(it.indices[f * it.k + t]));
                    }
                }
                row.slice_mut(s![coarse.ncols()..]).assign(&feats[fine].row(f));
            }
            let acts = mlp_forward(mlp, p, input);
            coarse = acts.last().expect("non-empty").clone();
            fp_tapes.push(acts);
        }
        let head = mlp_forward(&layout.head, p, coarse);
        let logits = head.last().expect("non-empty").clone();
        Ok((
            logits,
            Tape {
                pre,
                feats,
                sa: sa_tapes,
                fp: fp_tapes,
                head,
            },
        ))
    }

    /// Accumulates `dL/dparams` into `grads` given `dL/dlogits`.
    pub fn backward(&self, plan: &SamplingPlan, tape: &Tape, dlogits: Array2<f64>, grads: &mut [f64]) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::Contract("gradient buffer has the wrong length".into()));
        }
        let layout = self.layout();
        let p = &self.params[..];
        let levels = layout.sa.len();
        let mut dfeats: Vec<Array2<f64>> = tape.feats.iter().map(|f| Array2::zeros(f.raw_dim())).collect();

        let mut d = mlp_backward(&layout.head, p, grads, &tape.head, dlogits);
        for (j, mlp) in layout.fp.iter().enumerate().rev() {
            let fine = levels - 1 - j;
            let din = mlp_backward(mlp, p, grads, &tape.fp[j], d);
            let c_coarse = din.ncols() - tape.feats[fine].ncols();
            dfeats[fine] += &din.slice(s![.., c_coarse..]);
            let coarse_rows = plan.positions[fine + 1].nrows();
            let mut dcoarse = Array2::zeros((coarse_rows, c_coarse));
            let it = &plan.interp[j];
            for f in 0..din.nrows() {
                for t in 0..it.k {
                    let w = it.weights[f * it.k + t];
                    if w != 0.0 {
                        dcoarse
                            .row_mut(it.indices[f * it.k + t])
                            .scaled_add(w, &din.slice(s![f, ..c_coarse]));
                    }
                }
            }
            if j == 0 {
                dfeats[levels] += &dcoarse;
                d = Array2::zeros((0, 0));
            } else {
                d = dcoarse;
            }
        }
        drop(d);

        for l in (0..levels).rev() {
            let lp = &plan.levels[l];
            let dout = std::mem::take(&mut dfeats[l + 1]);
            let mut col = 0;
            for (s_idx, mlp) in layout.sa[l].iter().enumerate() {
                let st = &tape.sa[l][s_idx];
                let groups = &lp.groups[s_idx];
                let h = st.mlp.last().expect("non-empty");
                let c_out = h.ncols();
                let mut dh = Array2::zeros(h.raw_dim());
                for c in 0..st.argmax.nrows() {
                    for ch in 0..c_out {
                        dh[[st.argmax[[c, ch]], ch]] += dout[[c, col + ch]];
                    }
                }
                col += c_out;
                let dg = mlp_backward(mlp, p, grads, &st.mlp, dh);
                for (row, &j) in groups.indices.iter().enumerate() {
                    dfeats[l].row_mut(j).scaled_add(1.0, &dg.slice(s![row, 2..]));
                }
            }
        }
        if !layout.pre.is_empty() {
            let d0 = std::mem::take(&mut dfeats[0]);
            mlp_backward(&layout.pre, p, grads, &tape.pre, d0);
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            let (name, off) = layout.locate(i).unwrap_or(("?", 0));
            return Err(Error::Training(format!("non-finite gradient at {name}[{off}]")));
        }
        Ok(())
    }
}
