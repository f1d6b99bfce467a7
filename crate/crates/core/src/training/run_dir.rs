//! Run directory: `manifest.json`, `history.csv`, and `checkpoint/` holding
//! the model blobs and `prompt.json`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::models::{load_checkpoint, save_checkpoint};
use crate::prompt::FeaturePrompt;

use super::{EpochStats, RunManifest, TrainedRun};

pub fn save_run(run: &TrainedRun, dir: &Path) -> Result<()> {
    write_atomic(
        &dir.join("manifest.json"),
        serde_json::to_string_pretty(&run.manifest)?.as_bytes(),
    )?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("history serialization: {e}"));
    w.write_record(["epoch", "train_loss", "val_metric"]).map_err(csv_err)?;
    for h in &run.history {
        w.write_record([h.epoch.to_string(), h.train_loss.to_string(), h.val_metric.to_string()])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_atomic(&dir.join("history.csv"), &bytes)?;
    let ckpt = dir.join("checkpoint");
    save_checkpoint(&run.model, run.manifest.config.seed, &ckpt)?;
    let prompt_path = ckpt.join("prompt.json");
    match &run.prompt {
        Some(p) => write_atomic(&prompt_path, p.to_json()?.as_bytes())?,
        None if prompt_path.exists() => fs::remove_file(&prompt_path).map_err(|e| Error::io(&prompt_path, e))?,
        None => {}
    }
    Ok(())
}

pub fn load_run(dir: &Path) -> Result<TrainedRun> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let manifest: RunManifest = serde_json::from_str(&read("manifest.json")?)?;
    let mut history = Vec::new();
    let text = read("history.csv")?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    for (i, rec) in r.records().enumerate() {
        let parse_err = |msg: String| Error::Parse {
            line: i as u64 + 2,
            msg,
        };
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let field = |k: usize| rec.get(k).ok_or_else(|| parse_err("missing column".into()));
        history.push(EpochStats {
            epoch: field(0)?.parse().map_err(|e| parse_err(format!("{e}")))?,
            train_loss: field(1)?.parse().map_err(|e| parse_err(format!("{e}")))?,
            val_metric: field(2)?.parse().map_err(|e| parse_err(format!("{e}")))?,
        });
    }
    let ckpt = dir.join("checkpoint");
    let (model, _) = load_checkpoint(&ckpt)?;
    let prompt_path = ckpt.join("prompt.json");
    let prompt = if prompt_path.exists() {
        let text = fs::read_to_string(&prompt_path).map_err(|e| Error::io(&prompt_path, e))?;
        Some(FeaturePrompt::from_json(&text)?.frozen())
    } else {
        None
    };
    Ok(TrainedRun {
        model,
        prompt,
        history,
        manifest,
    })
}
