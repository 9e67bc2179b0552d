use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use twohop::graphs::EdgeKind;
use twohop::model::ModelKind;
use twohop::training::experiment::median_of_five;
use twohop::training::{EvalReport, TrainConfig, RUNS_PER_CONFIG};

use crate::manifest::{digest_inputs, write_json, ManifestBuilder};
use crate::run::load_splits;
use crate::ConfigArgs;

const LAYER_PRESET: &[(usize, usize)] = &[(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (3, 3)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeSetting {
    Full,
    Without(EdgeKind),
}

impl EdgeSetting {
    fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "full" {
            return Ok(EdgeSetting::Full);
        }
        match s.strip_prefix('-') {
            Some(name) => Ok(EdgeSetting::Without(EdgeKind::parse(name)?)),
            None => bail!("edge toggle {s:?}: expected full or -<edge type>"),
        }
    }

    fn label(self) -> String {
        match self {
            EdgeSetting::Full => "full".into(),
            EdgeSetting::Without(k) => format!("-{}", k.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Axis {
    Layers(Vec<(usize, usize)>),
    Edges(Vec<EdgeSetting>),
}

/// `;`-separated axes, crossed in order: `layers` or `layers=1x1,2x1`,
/// `edges` or `edges=full,-emg1`.
pub fn parse_grid(spec: &str) -> Result<Vec<Axis>> {
    let mut axes = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, values) = match part.split_once('=') {
            Some((n, v)) => (n.trim(), Some(v)),
            None => (part, None),
        };
        let axis = match (name, values) {
            ("layers", None) => Axis::Layers(LAYER_PRESET.to_vec()),
            ("edges", None) => {
                let mut v = vec![EdgeSetting::Full];
                v.extend(EdgeKind::ALL.map(EdgeSetting::Without));
                Axis::Edges(v)
            }
            ("layers", Some(v)) => Axis::Layers(
                v.split(',')
                    .map(|p| {
                        let (a, b) = p
                            .trim()
                            .split_once('x')
                            .with_context(|| format!("layer pair {p:?}: expected L1xL2"))?;
                        Ok((a.trim().parse()?, b.trim().parse()?))
                    })
                    .collect::<Result<_>>()?,
            ),
            ("edges", Some(v)) => Axis::Edges(
                v.split(',')
                    .map(EdgeSetting::parse)
                    .collect::<Result<_>>()?,
            ),
            _ => bail!("grid axis {name:?}: expected layers or edges"),
        };
        axes.push(axis);
    }
    if axes.is_empty() {
        bail!("empty grid");
    }
    Ok(axes)
}

/// One grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub label: String,
    pub config: TrainConfig,
}

/// The cross product of `axes` over `base`, first axis outermost.
pub fn expand(axes: &[Axis], base: &TrainConfig) -> Vec<Cell> {
    let mut cells = vec![Cell {
        label: String::new(),
        config: base.clone(),
    }];
    for axis in axes {
        let mut next = Vec::new();
        for cell in &cells {
            let join = |s: String| {
                if cell.label.is_empty() {
                    s
                } else {
                    format!("{} {s}", cell.label)
                }
            };
            match axis {
                Axis::Layers(pairs) => {
                    for &(l1, l2) in pairs {
                        let mut config = cell.config.clone();
                        config.model.l1 = l1;
                        config.model.l2 = l2;
                        next.push(Cell {
                            label: join(format!("L1={l1} L2={l2}")),
                            config,
                        });
                    }
                }
                Axis::Edges(settings) => {
                    for &s in settings {
                        let mut config = cell.config.clone();
                        if let EdgeSetting::Without(k) = s {
                            config.model.edges.set(k, false);
                        }
                        next.push(Cell {
                            label: join(s.label()),
                            config,
                        });
                    }
                }
            }
        }
        cells = next;
    }
    cells
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Directory written by `build-dataset`.
    #[arg(long = "in")]
    pub data: PathBuf,
    /// Grid spec, e.g. `layers`, `edges` or `layers=1x1,2x1;edges=full,-eg2`.
    #[arg(long)]
    pub grid: String,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// First of the five seeds per row.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Row {
    pub label: String,
    pub l1: usize,
    pub l2: usize,
    pub edges: Vec<String>,
    pub f1s: Vec<f64>,
    pub median_seed: u64,
    pub median: EvalReport,
}

pub fn render_table(rows: &[Row]) -> String {
    let width = rows
        .iter()
        .map(|r| r.label.len())
        .chain(["config".len()])
        .max()
        .unwrap_or(0);
    let mut out = format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}\n",
        "config", "P", "R", "F1"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}",
            r.label, r.median.precision, r.median.recall, r.median.f1
        );
    }
    out
}

pub fn ablate(a: AblateArgs) -> Result<bool> {
    let mb = ManifestBuilder::start("ablate");
    let base = a.config.load()?;
    if base.model.kind != ModelKind::Hegcn {
        bail!(
            "ablation grids apply to hegcn, config has {}",
            base.model.kind.name()
        );
    }
    let cells = expand(&parse_grid(&a.grid)?, &base);
    for c in &cells {
        c.config
            .validate()
            .with_context(|| format!("grid point {}", c.label))?;
    }
    let splits = load_splits(&a.data)?;
    let mut rows = Vec::with_capacity(cells.len());
    for cell in &cells {
        log::info!("ablation row {}", cell.label);
        let (runs, agg) = median_of_five(&splits, &cell.config, a.seed, a.jobs)?;
        let m = &cell.config.model;
        rows.push(Row {
            label: cell.label.clone(),
            l1: m.l1,
            l2: m.l2,
            edges: EdgeKind::ALL
                .iter()
                .filter(|&&k| m.edges.enabled(k))
                .map(|k| k.name().to_string())
                .collect(),
            f1s: agg.runs.iter().map(|r| r.f1).collect(),
            median_seed: runs[agg.median_index].seed,
            median: agg.median,
        });
    }
    let table = render_table(&rows);
    print!("{table}");
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    fs::write(a.out.join("ablation.txt"), &table)?;
    write_json(&a.out.join("ablation.json"), &rows)?;
    let mut inputs: Vec<&Path> = vec![&a.data];
    if let Some(c) = &a.config.config {
        inputs.push(c);
    }
    let seeds = (a.seed..a.seed + RUNS_PER_CONFIG as u64).collect();
    mb.write(
        &a.out,
        serde_json::json!({ "grid": a.grid, "base": base }),
        seeds,
        digest_inputs(&inputs)?,
        &["ablation.txt", "ablation.json"],
    )?;
    Ok(true)
}
