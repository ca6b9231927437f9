use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How an item's visual embedding is pooled from its frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisualMode {
    /// No visual pathway: pure matrix-factorization scoring.
    Off,
    /// Uniform average of projected frame features.
    Avg,
    /// Frame-level attention network.
    Att,
}

/// How the collaborative and visual preferences are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Sum,
    Att,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative at `x`; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

macro_rules! impl_mode_str {
    ($ty:ty, $($variant:ident => $name:literal),+) => {
        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $(<$ty>::$variant => $name),+ })
            }
        }

        impl std::str::FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok(<$ty>::$variant),)+
                    other => Err(Error::Argument(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

impl_mode_str!(VisualMode, Off => "off", Avg => "avg", Att => "att");
impl_mode_str!(FusionMode, Sum => "sum", Att => "att");
impl_mode_str!(Activation, Relu => "relu");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Collaborative latent dimension.
    pub d1: usize,
    /// Visual latent dimension.
    pub d2: usize,
    /// Hidden width of the frame attention network.
    pub attn_hidden_visual: usize,
    /// Hidden width of the rating attention network.
    pub attn_hidden_rating: usize,
    /// Output dimension of the attention key projection.
    pub reduced_visual_dim: usize,
    pub visual_mode: VisualMode,
    pub fusion_mode: FusionMode,
    pub activation: Activation,
    /// Weight of the squared Frobenius penalty on user/item factors and user visual vectors.
    pub lambda1: f64,
    /// Standard deviation of the normal initializer.
    pub init_scale: f64,
    /// Ties the attention key projection to the value projection.
    pub share_visual_projection: bool,
    /// Adds hidden-layer biases to both attention networks.
    pub attention_bias: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d1: 32,
            d2: 32,
            attn_hidden_visual: 32,
            attn_hidden_rating: 32,
            reduced_visual_dim: 32,
            visual_mode: VisualMode::Att,
            fusion_mode: FusionMode::Att,
            activation: Activation::Relu,
            lambda1: 0.001,
            init_scale: 0.1,
            share_visual_projection: false,
            attention_bias: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_modes(mut self, visual: VisualMode, fusion: FusionMode) -> Self {
        self.visual_mode = visual;
        self.fusion_mode = fusion;
        self
    }

    pub fn visual_enabled(&self) -> bool {
        self.visual_mode != VisualMode::Off
    }

    /// Rating attention only exists when there is a visual preference to fuse.
    pub fn rating_attention_enabled(&self) -> bool {
        self.visual_enabled() && self.fusion_mode == FusionMode::Att
    }

    pub fn frame_attention_enabled(&self) -> bool {
        self.visual_mode == VisualMode::Att
    }

    /// Width of the attention keys `W⁰c`.
    pub fn key_dim(&self) -> usize {
        if self.share_visual_projection {
            self.d2
        } else {
            self.reduced_visual_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 {
            return Err(Error::Config("d1 must be at least 1".into()));
        }
        if self.visual_enabled() && self.d2 == 0 {
            return Err(Error::Config(
                "d2 must be at least 1 when the visual pathway is on".into(),
            ));
        }
        if self.frame_attention_enabled() {
            if self.attn_hidden_visual == 0 {
                return Err(Error::Config(
                    "frame attention hidden width must be at least 1".into(),
                ));
            }
            if self.key_dim() == 0 {
                return Err(Error::Config(
                    "reduced visual dimension must be at least 1".into(),
                ));
            }
        }
        if self.rating_attention_enabled() {
            if self.d1 != self.d2 {
                return Err(Error::Config(format!(
                    "rating attention shares one network across [u, v] and [w, x]; needs d1 == d2, got {} and {}",
                    self.d1, self.d2
                )));
            }
            if self.attn_hidden_rating == 0 {
                return Err(Error::Config(
                    "rating attention hidden width must be at least 1".into(),
                ));
            }
        }
        if !(self.lambda1.is_finite() && self.lambda1 >= 0.0) {
            return Err(Error::Config(format!(
                "lambda1 must be finite and >= 0, got {}",
                self.lambda1
            )));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::Config(format!(
                "init_scale must be finite and >= 0, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}
