use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::EdgeToggles;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Hegcn,
    Cnn,
    Bilstm,
    BilstmCnn,
    Linkpath,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Hegcn,
        ModelKind::Cnn,
        ModelKind::Bilstm,
        ModelKind::BilstmCnn,
        ModelKind::Linkpath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hegcn => "hegcn",
            ModelKind::Cnn => "cnn",
            ModelKind::Bilstm => "bilstm",
            ModelKind::BilstmCnn => "bilstm_cnn",
            ModelKind::Linkpath => "linkpath",
        }
    }

    pub fn uses_lstm(self) -> bool {
        self != ModelKind::Cnn
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| {
                Error::Input(format!(
                    "unknown model {s:?} (hegcn, cnn, bilstm, bilstm_cnn, linkpath)"
                ))
            })
    }
}

/// Architecture hyperparameters shared by all model kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub d_w: usize,
    pub d_z: usize,
    /// Mention-level GCN layers.
    pub l1: usize,
    /// Entity-level GCN layers.
    pub l2: usize,
    pub edges: EdgeToggles,
    pub n_relations: usize,
    pub dropout: f64,
    pub cnn_filters: usize,
    pub cnn_widths: Vec<usize>,
    pub max_doc_len: usize,
    pub max_paths: usize,
    /// Seeds parameter init and path subsampling.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Hegcn,
            d_w: 300,
            d_z: 20,
            l1: 1,
            l2: 1,
            edges: EdgeToggles::all(),
            n_relations: 1,
            dropout: 0.5,
            cnn_filters: 500,
            cnn_widths: vec![3, 4, 5],
            max_doc_len: 512,
            max_paths: 512,
            seed: 1,
        }
    }
}

impl ModelConfig {
    /// Width of a token vector, also the hidden size of each LSTM direction.
    pub fn token_width(&self) -> usize {
        self.d_w + self.d_z
    }

    /// Node feature width of both GCNs.
    pub fn node_width(&self) -> usize {
        6 * self.token_width()
    }

    pub fn n_labels(&self) -> usize {
        self.n_relations + 1
    }

    /// Width of the vector fed to the output layer.
    pub fn classifier_input(&self) -> usize {
        let d = self.token_width();
        match self.kind {
            ModelKind::Hegcn => 12 * d,
            ModelKind::Cnn | ModelKind::BilstmCnn => self.cnn_filters * self.cnn_widths.len(),
            ModelKind::Bilstm => 8 * d,
            ModelKind::Linkpath => 16 * d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(format!("model config: {m}")));
        if self.d_w == 0 || self.d_z == 0 {
            return bad("d_w and d_z must be positive".into());
        }
        if self.l1 == 0 || self.l2 == 0 {
            return bad(format!(
                "layer counts must be at least 1, got l1={} l2={}",
                self.l1, self.l2
            ));
        }
        if self.n_relations == 0 {
            return bad("no relations".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.cnn_filters == 0 || self.cnn_widths.is_empty() || self.cnn_widths.contains(&0) {
            return bad("cnn needs filters and positive widths".into());
        }
        if self.max_doc_len == 0 || self.max_paths == 0 {
            return bad("max_doc_len and max_paths must be positive".into());
        }
        Ok(())
    }
}
