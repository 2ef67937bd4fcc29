use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use phdgn::autodiff::{Checkpoint, ModelConfig};
use phdgn::tasks::{
    best_constant, default_model, evaluate, generate, read_dataset, train, write_dataset, write_history_csv, Budget,
    Metrics, TaskSpec,
};

use crate::config::{config_error, echo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub data: TaskSpec,
    /// Existing dataset directory; generated from `data` when absent.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub budget: Option<Budget>,
}

impl TrainConfig {
    /// Fills every optional section so the echo is fully explicit.
    pub fn resolve(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.data.seed = s;
        }
        let kind = self.data.kind;
        self.data.splits = Some(self.data.splits());
        self.model.get_or_insert_with(|| default_model(kind, 16, 6, 0.5));
        let budget = self.budget.get_or_insert_with(|| Budget::for_task(kind));
        if let Some(s) = seed {
            budget.seed = s;
        }
        self
    }
}

#[derive(Debug, Clone, Serialize)]
struct TrainMetrics {
    train: Metrics,
    val: Metrics,
    test: Metrics,
    baseline_constant: f64,
    baseline_test: Metrics,
    best_epoch: usize,
    epochs_run: usize,
    skipped_steps: usize,
}

pub fn run_train(cfg: &TrainConfig, out: &Path) -> anyhow::Result<()> {
    let (Some(model), Some(budget)) = (&cfg.model, &cfg.budget) else {
        return Err(config_error("train config must be resolved before running"));
    };
    model.validate().map_err(|e| config_error(e.to_string()))?;
    echo(cfg, out)?;
    let dataset = match &cfg.dataset {
        Some(dir) => read_dataset(dir)?,
        None => generate(&cfg.data)?,
    };
    if dataset.spec.kind.input_dim() != model.input_dim {
        return Err(config_error(format!(
            "model input_dim {} but the task has {} features",
            model.input_dim,
            dataset.spec.kind.input_dim()
        )));
    }
    let report = train(model.clone(), &dataset, budget)?;
    let (c, baseline) = best_constant(&dataset.test);
    let metrics = TrainMetrics {
        train: evaluate(&report.model, &dataset.train)?,
        val: evaluate(&report.model, &dataset.val)?,
        test: evaluate(&report.model, &dataset.test)?,
        baseline_constant: c,
        baseline_test: baseline,
        best_epoch: report.best_epoch,
        epochs_run: report.history.len() - 1,
        skipped_steps: report.skipped_steps,
    };
    write_history_csv(&report.history, &out.join("history.csv"))?;
    let checkpoint = Checkpoint::capture(&report.model, Some(&report.optimizer));
    fs::write(out.join("checkpoint.json"), checkpoint.to_json()?)?;
    fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    println!(
        "test mse {:.4e} (log10 {:.3}), best constant {:.4e}, best epoch {}",
        metrics.test.mse, metrics.test.log10_mse, baseline.mse, report.best_epoch
    );
    Ok(())
}

pub fn run_data(spec: &TaskSpec, out: &Path) -> anyhow::Result<()> {
    let mut spec = spec.clone();
    spec.splits = Some(spec.splits());
    echo(&spec, out)?;
    let dataset = generate(&spec)?;
    let manifest = write_dataset(&dataset, out)?;
    println!(
        "wrote {} train / {} val / {} test samples to {}",
        manifest.counts["train"],
        manifest.counts["val"],
        manifest.counts["test"],
        out.display()
    );
    Ok(())
}
