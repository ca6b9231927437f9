//! Parameters and every forward quantity of the model.
//!
//! Scores follow
//!
//! ```text
//! x_i   = Σ_j α_ij P c_j                         (α uniform in AVG mode)
//! α_i·  = softmax_j( w¹ · f(W¹ [v_i, W⁰ c_j]) )  (ATT mode)
//! r̂_ai = β1 u_a·v_i + β2 w_a·x_i               (β = (1, 1) in SUM mode)
//! β     = softmax( w² · f(W² [u_a, v_i]), w² · f(W² [w_a, x_i]) )
//! l̂_ak = w_a · P c_k
//! ```

pub mod config;
pub(crate) mod mlp;
pub mod params;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, softmax, Matrix};

pub use config::{Activation, FusionMode, ModelConfig, VisualMode};
use mlp::{concat, AttentionMlp, MlpGrads, MlpTrace};
pub use params::{init_params, Dims, GradientSet, JifrParams, ParamId};

/// A configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: JifrParams,
}

/// Forward state of an item's visual embedding, kept for backprop.
#[derive(Debug, Clone)]
pub struct ItemVisual {
    pub item: usize,
    pub x: Vec<f64>,
    pooling: Pooling,
}

#[derive(Debug, Clone)]
enum Pooling {
    Avg {
        mean_features: Vec<f64>,
    },
    Att {
        frames: Vec<usize>,
        traces: Vec<MlpTrace>,
        weights: Vec<f64>,
        projected: Vec<Vec<f64>>,
    },
}

/// Forward state of one `(user, item)` score.
#[derive(Debug, Clone)]
pub struct ScoreTrace {
    pub user: usize,
    pub item: usize,
    pub score: f64,
    collaborative: f64,
    visual: f64,
    fusion: Option<FusionTrace>,
}

#[derive(Debug, Clone)]
struct FusionTrace {
    beta: (f64, f64),
    collaborative: MlpTrace,
    visual: MlpTrace,
}

impl Model {
    /// Validates `config` and initializes parameters for the given sizes.
    pub fn new(config: ModelConfig, dims: Dims) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, dims);
        Ok(Model { config, params })
    }

    /// Wraps existing parameters, checking every shape against `config`.
    pub fn from_parts(config: ModelConfig, params: JifrParams) -> Result<Self> {
        config.validate()?;
        let dims = params.dims();
        for id in ParamId::ALL {
            let want = JifrParams::shape_of(id, &config, dims);
            if params.get(id).shape() != want {
                return Err(Error::Config(format!(
                    "{} has shape {:?}, expected {:?}",
                    id.name(),
                    params.get(id).shape(),
                    want
                )));
            }
        }
        if !params.is_finite() {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(Model { config, params })
    }

    pub fn dims(&self) -> Dims {
        self.params.dims()
    }

    /// Checks that the model was built for `d`.
    pub fn check_dataset(&self, d: &Dataset) -> Result<()> {
        let dims = self.dims();
        let want = Dims {
            num_users: d.num_users(),
            num_items: d.num_items(),
            feature_dim: d.feature_dim(),
        };
        if dims != want {
            return Err(Error::Config(format!(
                "model sizes {dims:?} do not match dataset sizes {want:?}"
            )));
        }
        Ok(())
    }

    fn frames_of<'d>(&self, item: usize, data: &'d Dataset) -> Result<&'d [usize]> {
        let frames = data.frames_of(item);
        if frames.is_empty() {
            return Err(Error::MissingFrames { item });
        }
        Ok(frames)
    }

    fn require_visual(&self, what: &str) -> Result<()> {
        if self.config.visual_enabled() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "{what} needs a visual pathway (visual mode is off)"
            )))
        }
    }

    fn require_frame_attention(&self) -> Result<()> {
        if self.config.frame_attention_enabled() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "frame attention needs visual mode att, got {}",
                self.config.visual_mode
            )))
        }
    }

    fn frame_mlp(&self) -> AttentionMlp<'_> {
        AttentionMlp {
            hidden: &self.params.frame_attn_hidden,
            out: &self.params.frame_attn_out,
            bias: self
                .config
                .attention_bias
                .then_some(&self.params.frame_attn_bias),
            activation: self.config.activation,
        }
    }

    fn rating_mlp(&self) -> AttentionMlp<'_> {
        AttentionMlp {
            hidden: &self.params.rating_attn_hidden,
            out: &self.params.rating_attn_out,
            bias: self
                .config
                .attention_bias
                .then_some(&self.params.rating_attn_bias),
            activation: self.config.activation,
        }
    }

    /// `P c_k`.
    pub fn project_frame(&self, frame: usize, data: &Dataset) -> Vec<f64> {
        self.params.visual_projection.matvec(data.features(frame))
    }

    /// Mean of `P c_k` over the item's frames.
    pub fn item_visual_avg(&self, item: usize, data: &Dataset) -> Result<Vec<f64>> {
        self.require_visual("average pooling")?;
        Ok(self.avg_forward(item, data)?.x)
    }

    fn avg_forward(&self, item: usize, data: &Dataset) -> Result<ItemVisual> {
        let frames = self.frames_of(item, data)?;
        let n = frames.len() as f64;
        let mut x = vec![0.0; self.config.d2];
        let mut mean_features = vec![0.0; data.feature_dim()];
        for &k in frames {
            axpy(1.0, &self.project_frame(k, data), &mut x);
            axpy(1.0, data.features(k), &mut mean_features);
        }
        x.iter_mut().for_each(|v| *v /= n);
        mean_features.iter_mut().for_each(|v| *v /= n);
        Ok(ItemVisual {
            item,
            x,
            pooling: Pooling::Avg { mean_features },
        })
    }

    /// One trace per frame of `item`, in the dataset's frame order.
    fn frame_traces(&self, item: usize, frames: &[usize], data: &Dataset) -> Vec<MlpTrace> {
        let key_proj = self.params.key_projection(&self.config);
        let v = self.params.item_factors.row(item);
        let mlp = self.frame_mlp();
        frames
            .iter()
            .map(|&k| mlp.forward(concat(v, &key_proj.matvec(data.features(k)))))
            .collect()
    }

    /// Unnormalized frame attention scores `w¹ · f(W¹ [v_i, W⁰ c_j])`.
    pub fn frame_attention_logits(&self, item: usize, data: &Dataset) -> Result<Vec<f64>> {
        self.require_frame_attention()?;
        let frames = self.frames_of(item, data)?;
        Ok(self
            .frame_traces(item, frames, data)
            .iter()
            .map(|t| t.logit)
            .collect())
    }

    /// Softmax of the frame attention scores over the item's frames.
    pub fn frame_attention_weights(&self, item: usize, data: &Dataset) -> Result<Vec<f64>> {
        Ok(softmax(&self.frame_attention_logits(item, data)?))
    }

    /// Attention-weighted sum of `P c_j`.
    pub fn item_visual_att(&self, item: usize, data: &Dataset) -> Result<Vec<f64>> {
        self.require_frame_attention()?;
        Ok(self.att_forward(item, data)?.x)
    }

    fn att_forward(&self, item: usize, data: &Dataset) -> Result<ItemVisual> {
        let frames = self.frames_of(item, data)?;
        let traces = self.frame_traces(item, frames, data);
        let logits: Vec<f64> = traces.iter().map(|t| t.logit).collect();
        let weights = softmax(&logits);
        let projected: Vec<Vec<f64>> = frames
            .iter()
            .map(|&k| self.project_frame(k, data))
            .collect();
        let mut x = vec![0.0; self.config.d2];
        for (w, p) in weights.iter().zip(&projected) {
            axpy(*w, p, &mut x);
        }
        Ok(ItemVisual {
            item,
            x,
            pooling: Pooling::Att {
                frames: frames.to_vec(),
                traces,
                weights,
                projected,
            },
        })
    }

    /// Item visual embedding for the configured mode; `None` when the visual
    /// pathway is off.
    pub fn item_visual(&self, item: usize, data: &Dataset) -> Result<Option<ItemVisual>> {
        match self.config.visual_mode {
            VisualMode::Off => Ok(None),
            VisualMode::Avg => self.avg_forward(item, data).map(Some),
            VisualMode::Att => self.att_forward(item, data).map(Some),
        }
    }

    /// Normalized hybrid rating attention `(β1, β2)` for a given item visual embedding.
    pub fn rating_attention(&self, user: usize, item: usize, x: &[f64]) -> Result<(f64, f64)> {
        if !self.config.rating_attention_enabled() {
            return Err(Error::Unsupported(
                "rating attention needs a visual pathway and fusion mode att".into(),
            ));
        }
        if self.config.d1 != self.config.d2 || x.len() != self.config.d2 {
            return Err(Error::Config(format!(
                "rating attention needs d1 == d2 == |x|, got {}, {}, {}",
                self.config.d1,
                self.config.d2,
                x.len()
            )));
        }
        Ok(self.fusion_forward(user, item, x).beta)
    }

    fn fusion_forward(&self, user: usize, item: usize, x: &[f64]) -> FusionTrace {
        let p = &self.params;
        let mlp = self.rating_mlp();
        let collaborative = mlp.forward(concat(p.user_factors.row(user), p.item_factors.row(item)));
        let visual = mlp.forward(concat(p.user_visual.row(user), x));
        let w = softmax(&[collaborative.logit, visual.logit]);
        FusionTrace {
            beta: (w[0], w[1]),
            collaborative,
            visual,
        }
    }

    /// Scores `(user, item)` given the item's visual embedding (ignored when
    /// the visual pathway is off).
    pub fn score_trace(&self, user: usize, item: usize, x: Option<&[f64]>) -> ScoreTrace {
        let p = &self.params;
        let collaborative = dot(p.user_factors.row(user), p.item_factors.row(item));
        let (visual, fusion) = match x {
            Some(x) if self.config.visual_enabled() => {
                let visual = dot(p.user_visual.row(user), x);
                let fusion = self
                    .config
                    .rating_attention_enabled()
                    .then(|| self.fusion_forward(user, item, x));
                (visual, fusion)
            }
            _ => (0.0, None),
        };
        let score = match (&fusion, self.config.visual_enabled()) {
            (_, false) => collaborative,
            (None, true) => collaborative + visual,
            (Some(f), true) => f.beta.0 * collaborative + f.beta.1 * visual,
        };
        ScoreTrace {
            user,
            item,
            score,
            collaborative,
            visual,
            fusion,
        }
    }

    pub fn score_with_visual(&self, user: usize, item: usize, x: Option<&[f64]>) -> f64 {
        self.score_trace(user, item, x).score
    }

    /// Predicted preference `r̂_ai`.
    pub fn predict_item_score(&self, user: usize, item: usize, data: &Dataset) -> Result<f64> {
        let visual = self.item_visual(item, data)?;
        Ok(self.score_with_visual(user, item, visual.as_ref().map(|v| v.x.as_slice())))
    }

    /// Predicted frame preference `l̂_ak = w_a · P c_k`.
    pub fn predict_frame_score(&self, user: usize, frame: usize, data: &Dataset) -> Result<f64> {
        self.require_visual("frame scoring")?;
        Ok(dot(
            self.params.user_visual.row(user),
            &self.project_frame(frame, data),
        ))
    }

    /// Backpropagates `g = ∂L/∂r̂` through one score. Returns `∂L/∂x_i` when the
    /// visual pathway is on.
    pub fn backward_score(
        &self,
        trace: &ScoreTrace,
        x: Option<&[f64]>,
        g: f64,
        grads: &mut GradientSet,
    ) -> Option<Vec<f64>> {
        let p = &self.params;
        let (a, i) = (trace.user, trace.item);
        let u = p.user_factors.row(a);
        let v = p.item_factors.row(i);
        let visual_on = self.config.visual_enabled() && x.is_some();
        let (g_cf, g_vis) = match &trace.fusion {
            Some(f) if visual_on => (g * f.beta.0, g * f.beta.1),
            _ => (g, if visual_on { g } else { 0.0 }),
        };
        axpy(g_cf, v, grads.user_factors.row_mut(a));
        axpy(g_cf, u, grads.item_factors.row_mut(i));
        if !visual_on {
            return None;
        }
        let x = x.expect("checked above");
        let w = p.user_visual.row(a);
        axpy(g_vis, x, grads.user_visual.row_mut(a));
        let mut g_x = vec![0.0; x.len()];
        axpy(g_vis, w, &mut g_x);

        if let Some(f) = &trace.fusion {
            let (b1, b2) = f.beta;
            let dlogit = g * b1 * b2 * (trace.collaborative - trace.visual);
            let mlp = self.rating_mlp();
            let d1 = self.config.d1;
            let mut mg = MlpGrads {
                hidden: &mut grads.rating_attn_hidden,
                out: &mut grads.rating_attn_out,
                bias: if self.config.attention_bias {
                    Some(&mut grads.rating_attn_bias)
                } else {
                    None
                },
            };
            let mut g_in = vec![0.0; 2 * d1];
            mlp.backward(&f.collaborative, dlogit, &mut mg, &mut g_in);
            axpy(1.0, &g_in[..d1], grads.user_factors.row_mut(a));
            axpy(1.0, &g_in[d1..], grads.item_factors.row_mut(i));
            g_in.fill(0.0);
            mlp.backward(&f.visual, -dlogit, &mut mg, &mut g_in);
            axpy(1.0, &g_in[..d1], grads.user_visual.row_mut(a));
            axpy(1.0, &g_in[d1..], &mut g_x);
        }
        Some(g_x)
    }

    /// Backpropagates `∂L/∂x_i` into the projection, attention and item factor gradients.
    pub fn backward_visual(
        &self,
        visual: &ItemVisual,
        g_x: &[f64],
        data: &Dataset,
        grads: &mut GradientSet,
    ) {
        match &visual.pooling {
            Pooling::Avg { mean_features } => {
                grads.visual_projection.add_outer(1.0, g_x, mean_features);
            }
            Pooling::Att {
                frames,
                traces,
                weights,
                projected,
            } => {
                let mut pooled = vec![0.0; data.feature_dim()];
                for (&k, &w) in frames.iter().zip(weights) {
                    axpy(w, data.features(k), &mut pooled);
                }
                grads.visual_projection.add_outer(1.0, g_x, &pooled);

                let d_weight: Vec<f64> = projected.iter().map(|p| dot(g_x, p)).collect();
                let mean: f64 = weights.iter().zip(&d_weight).map(|(w, d)| w * d).sum();
                let d1 = self.config.d1;
                let mlp = self.frame_mlp();
                let mut g_in = vec![0.0; d1 + self.config.key_dim()];
                let mut g_key_proj = Matrix::zeros(self.config.key_dim(), data.feature_dim());
                for (j, &k) in frames.iter().enumerate() {
                    let dlogit = weights[j] * (d_weight[j] - mean);
                    let mut mg = MlpGrads {
                        hidden: &mut grads.frame_attn_hidden,
                        out: &mut grads.frame_attn_out,
                        bias: if self.config.attention_bias {
                            Some(&mut grads.frame_attn_bias)
                        } else {
                            None
                        },
                    };
                    g_in.fill(0.0);
                    mlp.backward(&traces[j], dlogit, &mut mg, &mut g_in);
                    axpy(1.0, &g_in[..d1], grads.item_factors.row_mut(visual.item));
                    g_key_proj.add_outer(1.0, &g_in[d1..], data.features(k));
                }
                let target = if self.config.share_visual_projection {
                    &mut grads.visual_projection
                } else {
                    &mut grads.attn_key_projection
                };
                axpy(1.0, g_key_proj.as_slice(), target.as_mut_slice());
            }
        }
    }
}

#[cfg(test)]
mod tests;
