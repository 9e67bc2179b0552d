use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use twohop::model::gradcheck::{check_model, toy_instance, toy_model};
use twohop::model::ModelKind;
use twohop::numerics::gradcheck::{check_ops, CheckOutcome, FdConfig};

use crate::manifest::{write_json, ManifestBuilder};

const D_W: usize = 4;
const D_Z: usize = 2;

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Random inputs per op.
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    /// Relative error bound.
    #[arg(long, default_value_t = FdConfig::default().tolerance)]
    pub tolerance: f64,
    /// Also write the outcomes and a manifest to this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Every op check followed by a full forward check of each model kind.
pub fn run_checks(seed: u64, trials: usize, cfg: &FdConfig) -> Result<Vec<CheckOutcome>> {
    let mut outcomes = check_ops(seed, trials, cfg)?;
    let chain = toy_instance();
    for kind in ModelKind::ALL {
        let mut model = toy_model(kind, D_W, D_Z, seed)?;
        outcomes.push(check_model(&mut model, &chain, cfg)?);
    }
    Ok(outcomes)
}

pub fn format_outcome(o: &CheckOutcome) -> String {
    let status = if o.passed { "PASS" } else { "FAIL" };
    match &o.worst {
        Some(w) => format!(
            "{status} {} coords={} worst={}[{}] analytic={:.6e} numeric={:.6e} rel_err={:.3e}",
            o.name, o.coords, w.param, w.coord, w.analytic, w.numeric, w.rel_err
        ),
        None => format!("{status} {} coords={}", o.name, o.coords),
    }
}

pub fn gradcheck(a: GradcheckArgs) -> Result<bool> {
    let mb = ManifestBuilder::start("gradcheck");
    let cfg = FdConfig {
        tolerance: a.tolerance,
        ..FdConfig::default()
    };
    let outcomes = run_checks(a.seed, a.trials, &cfg)?;
    for o in &outcomes {
        println!("{}", format_outcome(o));
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} checks, {failed} failed", outcomes.len());
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_json(&dir.join("gradcheck.json"), &outcomes)?;
        mb.write(
            dir,
            serde_json::json!({ "trials": a.trials, "fd": cfg }),
            vec![a.seed],
            vec![],
            &["gradcheck.json"],
        )?;
    }
    Ok(failed == 0)
}
