//! One function per subcommand. Each resolves and validates the config,
//! creates a run directory and writes its artifacts there.

use std::path::{Path, PathBuf};

use srcid::data::{generate_phantom_dataset, load_phantom, save_phantom, Dataset, DatasetManifest, Split};
use srcid::eval::{
    self, config_hash, foreground_groups, overlap_distribution, save_histogram_png, save_panel_png, write_csv,
    write_json, ArmBudget, DataSplits, DiceResult, Group, Stamped, TransferBudget,
};
use srcid::model::{Checkpoint, HeadMeta, TrainState};
use srcid::training::{finetune, pretrain, FinetuneInit};
use srcid::seed;

use crate::config::{DatasetKind, ExperimentConfig};
use crate::error::{CliError, CliResult};

/// Every command works in single precision.
type Data = Dataset<f32>;

pub const SEGMENTATION_TASK: &str = "segmentation";

/// A run's output directory and the stamp shared by its reports.
pub struct Run {
    pub dir: PathBuf,
    pub hash: String,
    pub seed: u64,
}

impl Run {
    /// `<out>/<command>-<UTC timestamp>-<config hash>`, suffixed when the
    /// name is taken. The resolved config is written first.
    pub fn create(out: &Path, command: &str, cfg: &ExperimentConfig) -> CliResult<Self> {
        let run = Self::new(out, command, config_hash(cfg)?, cfg.seed.unwrap_or(cfg.training.seed))?;
        let path = run.path("config.toml");
        std::fs::write(&path, cfg.to_toml()?).map_err(|e| srcid::Error::io(&path, e))?;
        Ok(run)
    }

    pub fn new(out: &Path, command: &str, hash: String, seed: u64) -> CliResult<Self> {
        let stamp = time::OffsetDateTime::now_utc()
            .format(time::macros::format_description!("[year][month][day]T[hour][minute][second]"))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let base = format!("{command}-{stamp}-{hash}");
        let mut dir = out.join(&base);
        let mut k = 1;
        while dir.exists() {
            dir = out.join(format!("{base}-{k}"));
            k += 1;
        }
        std::fs::create_dir_all(&dir).map_err(|e| srcid::Error::io(&dir, e))?;
        Ok(Self { dir, hash, seed })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_report<T: serde::Serialize>(&self, name: &str, body: &T) -> CliResult<PathBuf> {
        let path = self.path(name);
        let stamped = Stamped {
            config_hash: &self.hash,
            seed: self.seed,
            body,
        };
        write_json(&path, &stamped)?;
        Ok(path)
    }
}

/// Loads (or generates) the dataset and its patient split.
pub fn load_data(cfg: &ExperimentConfig) -> CliResult<(Data, Split)> {
    let d = &cfg.dataset;
    let pre = d.preprocess();
    match d.kind {
        DatasetKind::Phantom => {
            let (params, patients) = match &d.path {
                Some(dir) => {
                    let (sidecar, patients) = load_phantom::<f32>(dir)?;
                    (sidecar.params, patients)
                }
                None => (d.phantom.clone(), generate_phantom_dataset::<f32>(&d.phantom)?),
            };
            let ds = Dataset::from_phantom(&patients, params.class_names(), &pre)?;
            let [a, b, c] = d.split;
            let split = Split::random(ds.len(), (a, b, c), d.split_seed)?;
            Ok((ds, split))
        }
        DatasetKind::Nifti => {
            let path = d.path.as_ref().ok_or_else(|| CliError::Config("dataset.path is required".into()))?;
            let manifest = DatasetManifest::load(path)?;
            Ok(manifest.load_dataset::<f32>(&pre)?)
        }
    }
}

fn groups(cfg: &ExperimentConfig, ds: &Data) -> CliResult<Vec<Group>> {
    if cfg.eval.groups.is_empty() {
        return Ok(foreground_groups(&ds.class_names));
    }
    let c = ds.classes();
    for g in &cfg.eval.groups {
        if let Some(l) = g.labels.iter().find(|&&l| l as usize >= c) {
            return Err(srcid::Error::config("eval.groups", format!("group {} uses undeclared label {l}", g.name)).into());
        }
    }
    Ok(cfg.eval.groups.clone())
}

fn splits(cfg: &ExperimentConfig) -> CliResult<DataSplits<f32>> {
    let (ds, split) = load_data(cfg)?;
    Ok(DataSplits::new(&ds, &split))
}

pub fn generate_phantom(cfg: &ExperimentConfig, out: &Path) -> CliResult<PathBuf> {
    cfg.dataset.phantom.validate()?;
    let run = Run::create(out, "generate-phantom", cfg)?;
    let patients = generate_phantom_dataset::<f32>(&cfg.dataset.phantom)?;
    let dir = run.path("dataset");
    save_phantom(&dir, &cfg.dataset.phantom, &patients)?;
    Ok(dir)
}

pub fn cmd_pretrain(cfg: &ExperimentConfig, out: &Path) -> CliResult<PathBuf> {
    cfg.validate()?;
    let run = Run::create(out, "pretrain", cfg)?;
    let s = splits(cfg)?;
    let result = pretrain(&cfg.training, &cfg.task, &s.train, &s.val, &cfg.model)?;
    result.record.save(&run.dir, "record")?;
    let path = run.path("pretrain.ckpt");
    result.checkpoint.save(&path)?;
    Ok(path)
}

pub fn cmd_finetune(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<&Path>) -> CliResult<PathBuf> {
    cfg.validate()?;
    let init = match checkpoint {
        None => FinetuneInit::Random,
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.meta.head.task == SEGMENTATION_TASK {
                FinetuneInit::Restart(ck)
            } else {
                FinetuneInit::Pretrained(ck)
            }
        }
    };
    let run = Run::create(out, "finetune", cfg)?;
    let s = splits(cfg)?;
    let ft = cfg.finetune_config();
    let result = finetune(ft, &s.train, &s.val, &init, &cfg.model)?;
    result.record.save(&run.dir, "record")?;
    run.write_report("labeled.json", &serde_json::json!({ "patients": result.labeled }))?;
    let ck = Checkpoint::from_network(
        &result.network,
        HeadMeta {
            task: SEGMENTATION_TASK.into(),
            in_channels: result.network.spec.in_channels,
            out_channels: result.network.spec.out_channels,
        },
        TrainState {
            epoch: result.record.best_epoch,
            seed: ft.seed,
            best_metric: Some(result.record.best_metric),
        },
        None,
    );
    let path = run.path("model.ckpt");
    ck.save(&path)?;
    Ok(path)
}

pub fn cmd_evaluate(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<&Path>) -> CliResult<PathBuf> {
    cfg.validate()?;
    let path = checkpoint.ok_or_else(|| CliError::Config("evaluate needs --checkpoint".into()))?;
    let ck = Checkpoint::load(path)?;
    if ck.meta.head.task != SEGMENTATION_TASK {
        return Err(CliError::Config(format!(
            "{} holds a `{}` model, not a segmentation model",
            path.display(),
            ck.meta.head.task
        )));
    }
    let net = ck.to_network::<f32>()?;
    let run = Run::create(out, "evaluate", cfg)?;
    let s = splits(cfg)?;
    let g = groups(cfg, &s.test)?;
    let result = eval::evaluate_segmentation(&net, &s.test, &g)?;
    let mut header = vec!["image"];
    header.extend(result.class_names.iter().map(String::as_str));
    let k = result.class_names.len();
    let rows: Vec<Vec<String>> = (0..result.n_images())
        .map(|i| {
            std::iter::once(i.to_string())
                .chain(result.scores[i * k..(i + 1) * k].iter().map(|v| format!("{v:.6}")))
                .collect()
        })
        .collect();
    write_csv(&run.path("dice.csv"), &header, &rows)?;
    run.write_report("report.json", &result)
}

pub fn cmd_solvability(cfg: &ExperimentConfig, out: &Path) -> CliResult<PathBuf> {
    cfg.validate()?;
    let run = Run::create(out, "solvability", cfg)?;
    let s = splits(cfg)?;
    let budget = ArmBudget {
        train: cfg.training.clone(),
        spec: cfg.model.clone(),
        test_samples: cfg.eval.test_samples,
    };
    let result = eval::solvability_experiment(&s, &cfg.eval.lambdas, &budget)?;
    let rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                r.lambda.to_string(),
                format!("{:.6}", r.error_mean),
                format!("{:.6}", r.error_std),
                r.n.to_string(),
                r.best_epoch.to_string(),
            ]
        })
        .collect();
    write_csv(
        &run.path("solvability.csv"),
        &["lambda", "error_mean", "error_std", "n", "best_epoch"],
        &rows,
    )?;
    for (lambda, (input, pred, target)) in &result.panels {
        save_panel_png(&run.path(&format!("panel_lambda_{lambda}.png")), &[input, pred, target], 0)?;
    }
    run.write_report("solvability.json", &serde_json::json!({ "rows": result.rows }))
}

pub fn cmd_ablate_sources(cfg: &ExperimentConfig, out: &Path) -> CliResult<PathBuf> {
    cfg.validate()?;
    let run = Run::create(out, "ablate-sources", cfg)?;
    let s = splits(cfg)?;
    let budget = TransferBudget {
        pretrain: cfg.training.clone(),
        finetune: cfg.finetune_config().clone(),
        spec: cfg.model.clone(),
    };
    let settings: Vec<(usize, usize)> = cfg.eval.ablation_settings.iter().map(|&[n, k]| (n, k)).collect();
    let rows = eval::sources_ablation(&s, &settings, &cfg.eval.variants, &budget)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                format!("{:?}", r.variant).to_lowercase(),
                r.n_pool.to_string(),
                r.n_per_mixture.to_string(),
                format!("{:.6}", r.dice_mean),
                format!("{:.6}", r.dice_std),
            ]
        })
        .collect();
    write_csv(
        &run.path("ablation.csv"),
        &["variant", "n_pool", "n_per_mixture", "dice_mean", "dice_std"],
        &table,
    )?;
    run.write_report("ablation.json", &serde_json::json!({ "rows": rows }))
}

pub fn cmd_overlap_stats(cfg: &ExperimentConfig, out: &Path) -> CliResult<PathBuf> {
    cfg.validate()?;
    let run = Run::create(out, "overlap-stats", cfg)?;
    let (ds, _) = load_data(cfg)?;
    let mut rng = seed::rng_for(run.seed, &[seed::tag("overlap")]);
    let h = overlap_distribution(&ds, cfg.eval.overlap_pairs, cfg.eval.overlap_bins, &cfg.training.augment, &mut rng)?;
    let rows: Vec<Vec<String>> = h
        .counts
        .iter()
        .enumerate()
        .map(|(i, c)| vec![format!("{:.3}", h.edges[i]), format!("{:.3}", h.edges[i + 1]), c.to_string()])
        .collect();
    write_csv(&run.path("overlap.csv"), &["lower", "upper", "count"], &rows)?;
    save_histogram_png(&run.path("overlap.png"), &h.counts)?;
    run.write_report("overlap.json", &h)
}

fn read_report(path: &Path) -> CliResult<DiceResult> {
    let text = std::fs::read_to_string(path).map_err(|e| srcid::Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{} is not an evaluation report: {e}", path.display())))
}

pub fn cmd_compare(a: &Path, b: &Path, out: &Path) -> CliResult<(PathBuf, eval::ComparisonReport)> {
    let (ra, rb) = (read_report(a)?, read_report(b)?);
    let report = eval::compare(&ra, &rb)?;
    let inputs = [a.display().to_string(), b.display().to_string()];
    let run = Run::new(out, "compare", config_hash(&inputs)?, 0)?;
    write_json(&run.path("inputs.json"), &inputs)?;
    let path = run.path("comparison.json");
    write_json(&path, &report)?;
    Ok((path, report))
}
