//! Text + graph classifier: graph attention encoders per graph channel,
//! max/mean pooling, triple-selection gating of retrieved elements, and a
//! two-layer softmax head, with hand-derived gradients for every parameter.

mod checkpoint;
mod gat;
mod input;
mod net;
mod params;
mod ts;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use gat::{gat_forward, Adjacency, GatOutput};
pub use input::{Example, GraphInput};
pub use net::{
    apply_ts, forward, forward_with_gate, loss_and_grads, pool, predict, ForwardTrace, Gate,
};
pub use params::{GatLayerParams, HeadParams, ModelParams, TsParams};
pub use ts::{ts_score, ts_scores};

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TextOnly,
    Teg,
    Tegra,
}

impl Mode {
    /// Graphs an [`Example`] carries in this mode.
    pub fn graph_count(self) -> usize {
        match self {
            Mode::TextOnly => 0,
            Mode::Teg => 1,
            Mode::Tegra => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::TextOnly => "text_only",
            Mode::Teg => "teg",
            Mode::Tegra => "tegra",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text_only" => Ok(Mode::TextOnly),
            "teg" => Ok(Mode::Teg),
            "tegra" => Ok(Mode::Tegra),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: Mode,
    pub n_gat_layers: usize,
    pub d_out: usize,
    pub d_h: usize,
    pub d_hidden: usize,
    pub ts_enabled: bool,
    pub leaky_slope: f64,
    /// Width of node, edge and triple features.
    pub d_node: usize,
    /// Width of the text-channel vector.
    pub d_text: usize,
    /// Enriched channels left out of the classifier input (tegra ablation).
    #[serde(default)]
    pub dropped: Vec<Label>,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(mode: Mode, d_node: usize, d_text: usize) -> Self {
        ModelConfig {
            mode,
            n_gat_layers: 2,
            d_out: 64,
            d_h: 64,
            d_hidden: 128,
            ts_enabled: mode == Mode::Tegra,
            leaky_slope: 0.2,
            d_node,
            d_text,
            dropped: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_out", self.d_out),
            ("d_h", self.d_h),
            ("d_hidden", self.d_hidden),
            ("d_node", self.d_node),
            ("d_text", self.d_text),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.mode != Mode::TextOnly && self.n_gat_layers == 0 {
            return Err(Error::Config("graph modes need at least one GAT layer".into()));
        }
        if self.ts_enabled && self.mode != Mode::Tegra {
            return Err(Error::Config("triple selection requires tegra mode".into()));
        }
        if !self.dropped.is_empty() {
            if self.mode != Mode::Tegra {
                return Err(Error::Config("only tegra channels can be dropped".into()));
            }
            let mut d = self.dropped.clone();
            d.sort();
            d.dedup();
            if d.len() >= 2 {
                return Err(Error::Config(
                    "dropping both enriched graphs leaves the text-only model; run mode text_only instead"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    /// Indices into [`Example::graphs`] that feed the classifier.
    pub fn active_channels(&self) -> Vec<usize> {
        match self.mode {
            Mode::TextOnly => Vec::new(),
            Mode::Teg => vec![0],
            Mode::Tegra => Label::ALL
                .iter()
                .enumerate()
                .filter(|(_, l)| !self.dropped.contains(l))
                .map(|(i, _)| i)
                .collect(),
        }
    }

    pub fn pooled_width(&self) -> usize {
        2 * self.d_out
    }

    pub fn head_input_width(&self) -> usize {
        self.d_text + self.active_channels().len() * self.pooled_width()
    }

    pub fn gat_layer_param_count(&self, layer: usize) -> usize {
        let d_in = if layer == 0 { self.d_node } else { self.d_out };
        d_in * self.d_out + self.d_node * self.d_out + 3 * self.d_out
    }

    pub fn gat_param_count(&self) -> usize {
        (0..self.n_gat_layers).map(|l| self.gat_layer_param_count(l)).sum()
    }

    pub fn ts_param_count(&self) -> usize {
        self.d_text * self.d_h + self.d_node * self.d_h + self.d_h * self.d_h
    }

    pub fn head_param_count(&self) -> usize {
        self.head_input_width() * self.d_hidden + self.d_hidden + self.d_hidden * 2 + 2
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        let channels = self.active_channels().len();
        let ts = if self.ts_enabled { channels } else { 0 };
        channels * self.gat_param_count() + ts * self.ts_param_count() + self.head_param_count()
    }
}
