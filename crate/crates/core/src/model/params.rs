use crate::linalg::Matrix;
use crate::model::config::ModelConfig;
use crate::seed;

/// Names every trainable tensor. Order is the canonical iteration order
/// (initialization, checkpoints, optimizer state).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamId {
    /// `U`, one row per user (length d1).
    UserFactors,
    /// `V`, one row per item (length d1).
    ItemFactors,
    /// `W`, one row per user (length d2).
    UserVisual,
    /// `P`, d2 × F value projection of frame features.
    VisualProjection,
    /// `W⁰`, d0 × F key projection used by the frame attention.
    AttnKeyProjection,
    /// `W¹`, h_c × (d1 + d0).
    FrameAttnHidden,
    /// `w¹`, 1 × h_c.
    FrameAttnOut,
    FrameAttnBias,
    /// `W²`, h_r × 2·d1.
    RatingAttnHidden,
    /// `w²`, 1 × h_r.
    RatingAttnOut,
    RatingAttnBias,
}

impl ParamId {
    pub const ALL: [ParamId; 11] = [
        ParamId::UserFactors,
        ParamId::ItemFactors,
        ParamId::UserVisual,
        ParamId::VisualProjection,
        ParamId::AttnKeyProjection,
        ParamId::FrameAttnHidden,
        ParamId::FrameAttnOut,
        ParamId::FrameAttnBias,
        ParamId::RatingAttnHidden,
        ParamId::RatingAttnOut,
        ParamId::RatingAttnBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamId::UserFactors => "user_factors",
            ParamId::ItemFactors => "item_factors",
            ParamId::UserVisual => "user_visual",
            ParamId::VisualProjection => "visual_projection",
            ParamId::AttnKeyProjection => "attn_key_projection",
            ParamId::FrameAttnHidden => "frame_attn_hidden",
            ParamId::FrameAttnOut => "frame_attn_out",
            ParamId::FrameAttnBias => "frame_attn_bias",
            ParamId::RatingAttnHidden => "rating_attn_hidden",
            ParamId::RatingAttnOut => "rating_attn_out",
            ParamId::RatingAttnBias => "rating_attn_bias",
        }
    }

    pub fn from_name(name: &str) -> Option<ParamId> {
        ParamId::ALL.into_iter().find(|id| id.name() == name)
    }

    /// Whether the tensor takes part in scoring (and therefore training) under `cfg`.
    pub fn is_active(self, cfg: &ModelConfig) -> bool {
        match self {
            ParamId::UserFactors | ParamId::ItemFactors => true,
            ParamId::UserVisual | ParamId::VisualProjection => cfg.visual_enabled(),
            ParamId::AttnKeyProjection => {
                cfg.frame_attention_enabled() && !cfg.share_visual_projection
            }
            ParamId::FrameAttnHidden | ParamId::FrameAttnOut => cfg.frame_attention_enabled(),
            ParamId::FrameAttnBias => cfg.frame_attention_enabled() && cfg.attention_bias,
            ParamId::RatingAttnHidden | ParamId::RatingAttnOut => cfg.rating_attention_enabled(),
            ParamId::RatingAttnBias => cfg.rating_attention_enabled() && cfg.attention_bias,
        }
    }

    /// Member of the regularized set {U, V, W}.
    pub fn is_regularized(self) -> bool {
        matches!(
            self,
            ParamId::UserFactors | ParamId::ItemFactors | ParamId::UserVisual
        )
    }
}

/// Sizes taken from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub num_users: usize,
    pub num_items: usize,
    pub feature_dim: usize,
}

/// Every trainable tensor. Embedding tables are stored one row per entity,
/// i.e. `user_factors` is `Uᵀ` (M × d1).
#[derive(Debug, Clone, PartialEq)]
pub struct JifrParams {
    pub user_factors: Matrix,
    pub item_factors: Matrix,
    pub user_visual: Matrix,
    pub visual_projection: Matrix,
    pub attn_key_projection: Matrix,
    pub frame_attn_hidden: Matrix,
    pub frame_attn_out: Matrix,
    pub frame_attn_bias: Matrix,
    pub rating_attn_hidden: Matrix,
    pub rating_attn_out: Matrix,
    pub rating_attn_bias: Matrix,
}

/// Gradients share the parameter layout.
pub type GradientSet = JifrParams;

impl JifrParams {
    pub fn zeros(cfg: &ModelConfig, dims: Dims) -> Self {
        let z = |id| {
            let (r, c) = Self::shape_of(id, cfg, dims);
            Matrix::zeros(r, c)
        };
        JifrParams {
            user_factors: z(ParamId::UserFactors),
            item_factors: z(ParamId::ItemFactors),
            user_visual: z(ParamId::UserVisual),
            visual_projection: z(ParamId::VisualProjection),
            attn_key_projection: z(ParamId::AttnKeyProjection),
            frame_attn_hidden: z(ParamId::FrameAttnHidden),
            frame_attn_out: z(ParamId::FrameAttnOut),
            frame_attn_bias: z(ParamId::FrameAttnBias),
            rating_attn_hidden: z(ParamId::RatingAttnHidden),
            rating_attn_out: z(ParamId::RatingAttnOut),
            rating_attn_bias: z(ParamId::RatingAttnBias),
        }
    }

    /// Same shapes as `self`, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for id in ParamId::ALL {
            out.get_mut(id).fill(0.0);
        }
        out
    }

    pub fn shape_of(id: ParamId, cfg: &ModelConfig, dims: Dims) -> (usize, usize) {
        let d0 = cfg.reduced_visual_dim;
        match id {
            ParamId::UserFactors => (dims.num_users, cfg.d1),
            ParamId::ItemFactors => (dims.num_items, cfg.d1),
            ParamId::UserVisual => (dims.num_users, cfg.d2),
            ParamId::VisualProjection => (cfg.d2, dims.feature_dim),
            ParamId::AttnKeyProjection => (d0, dims.feature_dim),
            ParamId::FrameAttnHidden => (cfg.attn_hidden_visual, cfg.d1 + cfg.key_dim()),
            ParamId::FrameAttnOut | ParamId::FrameAttnBias => (1, cfg.attn_hidden_visual),
            ParamId::RatingAttnHidden => (cfg.attn_hidden_rating, 2 * cfg.d1),
            ParamId::RatingAttnOut | ParamId::RatingAttnBias => (1, cfg.attn_hidden_rating),
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        match id {
            ParamId::UserFactors => &self.user_factors,
            ParamId::ItemFactors => &self.item_factors,
            ParamId::UserVisual => &self.user_visual,
            ParamId::VisualProjection => &self.visual_projection,
            ParamId::AttnKeyProjection => &self.attn_key_projection,
            ParamId::FrameAttnHidden => &self.frame_attn_hidden,
            ParamId::FrameAttnOut => &self.frame_attn_out,
            ParamId::FrameAttnBias => &self.frame_attn_bias,
            ParamId::RatingAttnHidden => &self.rating_attn_hidden,
            ParamId::RatingAttnOut => &self.rating_attn_out,
            ParamId::RatingAttnBias => &self.rating_attn_bias,
        }
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        match id {
            ParamId::UserFactors => &mut self.user_factors,
            ParamId::ItemFactors => &mut self.item_factors,
            ParamId::UserVisual => &mut self.user_visual,
            ParamId::VisualProjection => &mut self.visual_projection,
            ParamId::AttnKeyProjection => &mut self.attn_key_projection,
            ParamId::FrameAttnHidden => &mut self.frame_attn_hidden,
            ParamId::FrameAttnOut => &mut self.frame_attn_out,
            ParamId::FrameAttnBias => &mut self.frame_attn_bias,
            ParamId::RatingAttnHidden => &mut self.rating_attn_hidden,
            ParamId::RatingAttnOut => &mut self.rating_attn_out,
            ParamId::RatingAttnBias => &mut self.rating_attn_bias,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            num_users: self.user_factors.rows(),
            num_items: self.item_factors.rows(),
            feature_dim: self.visual_projection.cols(),
        }
    }

    pub fn is_finite(&self) -> bool {
        ParamId::ALL.iter().all(|&id| self.get(id).is_finite())
    }

    /// The key projection actually used by the frame attention.
    pub fn key_projection<'a>(&'a self, cfg: &ModelConfig) -> &'a Matrix {
        if cfg.share_visual_projection {
            &self.visual_projection
        } else {
            &self.attn_key_projection
        }
    }
}

/// Samples every weight tensor i.i.d. from N(0, init_scale²); biases start at zero.
///
/// All weight tensors are drawn in canonical order whatever the modes, so two
/// configs that differ only in their mode switches start from the same `U`, `V`, ...
pub fn init_params(cfg: &ModelConfig, dims: Dims) -> JifrParams {
    let mut rng = seed::rng(seed::derive(cfg.seed, "init"));
    let mut params = JifrParams::zeros(cfg, dims);
    for id in ParamId::ALL {
        if matches!(id, ParamId::FrameAttnBias | ParamId::RatingAttnBias) {
            continue;
        }
        let (r, c) = params.get(id).shape();
        *params.get_mut(id) = Matrix::normal(r, c, cfg.init_scale, &mut rng);
    }
    params
}
