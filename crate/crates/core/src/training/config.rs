use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{EdgeKind, EdgeToggles, Emg2Wiring};
use crate::model::{DecisionRule, ModelConfig, ModelKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without a validation F1 improvement before stopping.
    pub patience: usize,
    /// The learning rate halves after this many stagnant epochs in a row.
    pub halve_after: usize,
    pub seed: u64,
    pub decision: DecisionRule,
    /// Words found in fewer training chains than this map to the unknown word.
    pub min_count: usize,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr: 0.01,
            max_epochs: 30,
            patience: 5,
            halve_after: 2,
            seed: 1,
            decision: DecisionRule::default(),
            min_count: 1,
            model: ModelConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Input(format!("{key}: cannot parse {value:?}")))
}

/// `all`, `none`, or a comma list of edge types to keep.
pub fn parse_edges(value: &str, wiring: Emg2Wiring) -> Result<EdgeToggles> {
    let mut t = match value.trim() {
        "all" => EdgeToggles::all(),
        "none" | "" => EdgeToggles::none(),
        list => {
            let mut t = EdgeToggles::none();
            for name in list.split(',') {
                t.set(EdgeKind::parse(name)?, true);
            }
            t
        }
    };
    t.emg2_wiring = wiring;
    Ok(t)
}

/// Keys accepted by [`TrainConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "model",
    "d_w",
    "d_z",
    "l1",
    "l2",
    "edges",
    "without",
    "emg2_wiring",
    "dropout",
    "cnn_filters",
    "cnn_widths",
    "max_doc_len",
    "max_paths",
    "batch_size",
    "lr",
    "max_epochs",
    "patience",
    "halve_after",
    "seed",
    "decision",
    "min_count",
];

impl TrainConfig {
    /// Sets one documented key. `without` removes a comma list of edge types.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let m = &mut self.model;
        match key.trim() {
            "model" => m.kind = v.parse::<ModelKind>()?,
            "d_w" => m.d_w = parse_num(key, v)?,
            "d_z" => m.d_z = parse_num(key, v)?,
            "l1" => m.l1 = parse_num(key, v)?,
            "l2" => m.l2 = parse_num(key, v)?,
            "edges" => m.edges = parse_edges(v, m.edges.emg2_wiring)?,
            "without" => {
                for name in v.split(',').filter(|s| !s.trim().is_empty()) {
                    m.edges.set(EdgeKind::parse(name)?, false);
                }
            }
            "emg2_wiring" => {
                m.edges.emg2_wiring = match v {
                    "pairwise" => Emg2Wiring::Pairwise,
                    "chain" => Emg2Wiring::Chain,
                    _ => {
                        return Err(Error::Input(format!(
                            "emg2_wiring: expected pairwise or chain, got {v:?}"
                        )))
                    }
                }
            }
            "dropout" => m.dropout = parse_num(key, v)?,
            "cnn_filters" => m.cnn_filters = parse_num(key, v)?,
            "cnn_widths" => {
                m.cnn_widths = v
                    .split(',')
                    .map(|w| parse_num(key, w.trim()))
                    .collect::<Result<_>>()?
            }
            "max_doc_len" => m.max_doc_len = parse_num(key, v)?,
            "max_paths" => m.max_paths = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "max_epochs" => self.max_epochs = parse_num(key, v)?,
            "patience" => self.patience = parse_num(key, v)?,
            "halve_after" => self.halve_after = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "decision" => self.decision = DecisionRule::parse(v)?,
            "min_count" => self.min_count = parse_num(key, v)?,
            other => {
                return Err(Error::Input(format!(
                    "unknown config key {other:?} (known: {})",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got {line:?}")))?;
            self.set(k, v).map_err(|e| parse_err(e.to_string()))?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Input("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Input(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Input("max_epochs must be at least 1".into()));
        }
        self.model.validate()
    }

    /// The config as `key = value` lines that [`apply_text`](Self::apply_text) reads back.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let edges: Vec<&str> = EdgeKind::ALL
            .iter()
            .filter(|&&k| m.edges.enabled(k))
            .map(|k| k.name())
            .collect();
        let widths: Vec<String> = m.cnn_widths.iter().map(ToString::to_string).collect();
        let wiring = match m.edges.emg2_wiring {
            Emg2Wiring::Pairwise => "pairwise",
            Emg2Wiring::Chain => "chain",
        };
        let lines = [
            ("model", m.kind.name().to_string()),
            ("d_w", m.d_w.to_string()),
            ("d_z", m.d_z.to_string()),
            ("l1", m.l1.to_string()),
            ("l2", m.l2.to_string()),
            (
                "edges",
                if edges.is_empty() {
                    "none".into()
                } else {
                    edges.join(",")
                },
            ),
            ("emg2_wiring", wiring.into()),
            ("dropout", m.dropout.to_string()),
            ("cnn_filters", m.cnn_filters.to_string()),
            ("cnn_widths", widths.join(",")),
            ("max_doc_len", m.max_doc_len.to_string()),
            ("max_paths", m.max_paths.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("halve_after", self.halve_after.to_string()),
            ("seed", self.seed.to_string()),
            ("decision", self.decision.name().into()),
            ("min_count", self.min_count.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
