//! Subcommand bodies. Each takes a resolved configuration and an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use msecg::bench::{bench_scan as run_bench, linear_fit, BenchRow};
use msecg::data::{
    bank_at_rate, load_dataset, load_noise_bank, load_pair_dataset, make_pairs, read_raster_any, save_noise_bank,
    save_pair_dataset, split_folds, synth_noise_bank, synth_records, write_dataset, write_raster, PairDataset,
    SegmentPair,
};
use msecg::dsp::{linear_interp_upsample, CorruptionRecord, Signal};
use msecg::eval::{evaluate, mad, Method, MetricsReport};
use msecg::model::{infer as model_infer, ModelConfig, ModelParams};
use msecg::train::{load_checkpoint, save_checkpoint, train as run_train, Checkpoint, EpochLog};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::plot::{render_svg, Series};
use crate::SplitName;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const BENCH_FILE: &str = "bench.csv";
pub const BENCH_SUMMARY_FILE: &str = "bench_summary.json";

const GT_COLOR: &str = "#222222";
const LI_COLOR: &str = "#1f77b4";
const MODEL_COLOR: &str = "#d62728";

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{what} directory {} does not exist", path.display())))
    }
}

pub fn synth(cfg: &RunConfig, out: &Path, records: Option<usize>) -> CliResult<()> {
    let d = &cfg.data;
    let n = records.unwrap_or(d.records);
    let recs = synth_records(cfg.seed, n, d.leads, d.duration_s, d.sample_rate)?;
    write_dataset(&out.join(MANIFEST_FILE), &recs)?;
    let bank = synth_noise_bank(cfg.seed, d.noise_duration_s, d.noise_sample_rate)?;
    save_noise_bank(out, &bank)?;
    eprintln!("wrote {n} records and a {}-kind noise bank to {}", bank.kinds().len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct PairProvenance<'a> {
    id: &'a str,
    fold: u8,
    corruption: &'a CorruptionRecord,
}

#[derive(Serialize)]
struct Provenance<'a> {
    seed: u64,
    manifest: String,
    noise: String,
    config: &'a RunConfig,
    pairs: Vec<PairProvenance<'a>>,
}

pub fn prepare(cfg: &RunConfig, out: &Path, manifest: &Path, noise: Option<&Path>) -> CliResult<()> {
    let records = load_dataset(manifest, None)?;
    if records.is_empty() {
        return Err(CliError::Input(format!("manifest {} lists no records", manifest.display())));
    }
    if let Some(r) = records.iter().find(|r| r.meta.leads != cfg.model.leads) {
        return Err(CliError::Input(format!(
            "record `{}` has {} leads, model.leads is {}",
            r.meta.id, r.meta.leads, cfg.model.leads
        )));
    }
    let bank = match noise {
        Some(dir) => {
            require_dir(dir, "noise")?;
            load_noise_bank(dir)?
        }
        None => synth_noise_bank(cfg.seed, cfg.data.noise_duration_s, cfg.data.noise_sample_rate)?,
    };
    let pairs = make_pairs(&records, &bank, &cfg.dsp, cfg.seed)?;
    let lr_rate = pairs[0].lr.sample_rate();
    let ds = PairDataset { pairs, noise: bank_at_rate(&bank, lr_rate)? };
    save_pair_dataset(out, &ds)?;
    let prov = Provenance {
        seed: cfg.seed,
        manifest: manifest.display().to_string(),
        noise: noise.map_or_else(|| "synthetic".to_string(), |p| p.display().to_string()),
        config: cfg,
        pairs: ds.pairs.iter().map(|p| PairProvenance { id: &p.id, fold: p.fold, corruption: &p.corruption }).collect(),
    };
    write_json(&out.join(PROVENANCE_FILE), &prov)?;
    let noisy = ds.pairs.iter().filter(|p| p.corruption.is_noisy()).count();
    eprintln!("prepared {} pairs ({noisy} noisy) in {}", ds.pairs.len(), out.display());
    Ok(())
}

fn load_pairs(dir: &Path) -> CliResult<PairDataset> {
    require_dir(dir, "dataset")?;
    Ok(load_pair_dataset(dir)?)
}

fn check_leads(model: &ModelConfig, pairs: &[SegmentPair]) -> CliResult<()> {
    for p in pairs {
        if p.lr.channels() != model.leads {
            return Err(CliError::Input(format!(
                "pair `{}` has {} leads, the model expects {}",
                p.id,
                p.lr.channels(),
                model.leads
            )));
        }
        if p.ratio() != model.ratio {
            return Err(CliError::Input(format!(
                "pair `{}` has ratio {}, the model upsamples by {}",
                p.id,
                p.ratio(),
                model.ratio
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct LogRow {
    kind: &'static str,
    epoch: usize,
    stage: u8,
    lr: f64,
    train_loss: Option<f64>,
    val_mse: f64,
}

/// Writes the per-epoch log followed by a `best` row.
pub fn write_train_log(path: &Path, log: &[EpochLog], best: &Checkpoint) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    for r in log {
        w.serialize(LogRow {
            kind: "epoch",
            epoch: r.epoch,
            stage: r.stage,
            lr: r.lr,
            train_loss: r.train_loss,
            val_mse: r.val_mse,
        })?;
    }
    let lr = if best.stage == 1 { best.train.stage1.lr } else { best.train.stage2.lr };
    w.serialize(LogRow {
        kind: "best",
        epoch: best.epoch,
        stage: best.stage,
        lr,
        train_loss: None,
        val_mse: best.val_mse,
    })?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn train(cfg: &RunConfig, out: &Path, dataset: &Path) -> CliResult<()> {
    let ds = load_pairs(dataset)?;
    check_leads(&cfg.model, &ds.pairs)?;
    let splits = split_folds(ds.pairs);
    for w in &splits.warnings {
        eprintln!("warning: {w}");
    }
    let tc = cfg.train_config();
    let init = ModelParams::<f32>::init(&cfg.model, cfg.seed)?;
    eprintln!("training {} parameters on {} pairs", init.count(), splits.train.len());
    let outcome = run_train(&splits.train, &splits.val, &ds.noise, &cfg.dsp.protocol, &cfg.model, &tc, init, |row| {
        let loss = row.train_loss.map_or_else(|| "-".to_string(), |l| format!("{l:.4e}"));
        eprintln!("stage {} epoch {:>4}  loss {loss}  val {:.4e}", row.stage, row.epoch, row.val_mse);
    })?;
    save_checkpoint(&out.join(CHECKPOINT_FILE), &outcome.best)?;
    write_train_log(&out.join(TRAIN_LOG_FILE), &outcome.log, &outcome.best)?;
    eprintln!("best: stage {} epoch {} val MSE {:.4e}", outcome.best.stage, outcome.best.epoch, outcome.best.val_mse);
    Ok(())
}

fn load_ckpt(path: &Path) -> CliResult<Checkpoint> {
    Ok(load_checkpoint(path)?)
}

fn select_split(pairs: Vec<SegmentPair>, split: SplitName) -> Vec<SegmentPair> {
    if split == SplitName::All {
        return pairs;
    }
    let s = split_folds(pairs);
    match split {
        SplitName::Train => s.train,
        SplitName::Val => s.val,
        _ => s.test,
    }
}

/// Report file stem for a method name, e.g. `report_li`.
pub fn report_stem(method: &str) -> String {
    format!("report_{}", method.to_lowercase())
}

#[derive(Serialize)]
struct ComparisonRow<'a> {
    method: &'a str,
    subset: &'a str,
    count: usize,
    mse: f64,
    cos: f64,
    snr_db: f64,
    mad: f64,
}

fn comparison_rows(reports: &[&MetricsReport]) -> Vec<ComparisonRow<'static>> {
    let mut rows = Vec::new();
    for r in reports {
        let method: &'static str = if r.method == "LI" { "LI" } else { "MSECG" };
        let subsets = [("all", Some((*r).clone())), ("clean", r.subset(false)), ("noisy", r.subset(true))];
        for (subset, rep) in subsets {
            if let Some(rep) = rep {
                let s = &rep.summary;
                rows.push(ComparisonRow {
                    method,
                    subset,
                    count: s.count,
                    mse: s.mse.mean,
                    cos: s.cos.mean,
                    snr_db: s.snr_db.mean,
                    mad: s.mad.mean,
                });
            }
        }
    }
    rows
}

pub fn eval(out: &Path, dataset: &Path, checkpoint: Option<&Path>, split: SplitName) -> CliResult<()> {
    let ckpt = checkpoint.map(load_ckpt).transpose()?;
    let ds = load_pairs(dataset)?;
    let pairs = select_split(ds.pairs, split);
    if pairs.is_empty() {
        return Err(CliError::Input(format!("the {split:?} split of {} is empty", dataset.display())));
    }
    let li = evaluate(&Method::Li { ratio: pairs[0].ratio() }, &pairs)?;
    let mut reports = vec![];
    let model_report = match &ckpt {
        Some(c) => {
            check_leads(&c.model, &pairs)?;
            Some(evaluate(&Method::Model { params: &c.params, cfg: &c.model }, &pairs)?)
        }
        None => None,
    };
    reports.push(&li);
    if let Some(m) = &model_report {
        reports.push(m);
    }
    for r in &reports {
        let stem = report_stem(&r.method);
        r.write_csv(&out.join(format!("{stem}.csv")))?;
        r.write_json(&out.join(format!("{stem}.json")))?;
    }
    let rows = comparison_rows(&reports);
    if model_report.is_some() {
        let path = out.join(COMPARISON_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    println!("{:<6} {:<6} {:>5} {:>12} {:>8} {:>9} {:>8}", "method", "subset", "n", "MSE", "CoS", "SNR(dB)", "MAD");
    for r in &rows {
        println!(
            "{:<6} {:<6} {:>5} {:>12.4e} {:>8.4} {:>9.3} {:>8.4}",
            r.method, r.subset, r.count, r.mse, r.cos, r.snr_db, r.mad
        );
    }
    Ok(())
}

fn find_pair(ds: PairDataset, id: &str, dir: &Path) -> CliResult<SegmentPair> {
    ds.pairs
        .into_iter()
        .find(|p| p.id == id)
        .ok_or_else(|| CliError::Input(format!("no pair `{id}` in {}", dir.display())))
}

fn lead_of(s: &Signal, lead: usize) -> CliResult<&[f64]> {
    if lead >= s.channels() {
        return Err(CliError::Input(format!("lead {lead} out of range for a {}-lead signal", s.channels())));
    }
    Ok(s.channel(lead))
}

/// Figure with GT (when known), LI and a reconstruction; MAD annotations are
/// over all leads.
fn figure(
    title: &str,
    lr: &Signal,
    gt: Option<&Signal>,
    recon: &Signal,
    label: &str,
    lead: usize,
) -> CliResult<String> {
    let li = linear_interp_upsample(lr, recon.len() / lr.len().max(1))?;
    let mut series = Vec::new();
    if let Some(g) = gt {
        if g.channels() != recon.channels() || g.len() != recon.len() {
            return Err(CliError::Input(format!(
                "reference is {}x{}, reconstruction is {}x{}",
                g.channels(),
                g.len(),
                recon.channels(),
                recon.len()
            )));
        }
        series.push(Series { label: "GT", color: GT_COLOR, values: lead_of(g, lead)? });
    }
    series.push(Series { label: "LI", color: LI_COLOR, values: lead_of(&li, lead)? });
    series.push(Series { label, color: MODEL_COLOR, values: lead_of(recon, lead)? });
    let note = match gt {
        Some(g) => Some(format!(
            "MAD {label} vs GT = {:.4}   MAD LI vs GT = {:.4}",
            mad(recon.data(), g.data())?,
            mad(li.data(), g.data())?
        )),
        None => None,
    };
    Ok(render_svg(&format!("{title} (lead {lead})"), recon.sample_rate(), &series, note.as_deref()))
}

pub enum InferSource {
    Dataset { dir: PathBuf, id: String },
    Raster { path: PathBuf, sample_rate: f64, reference: Option<PathBuf> },
}

pub fn infer(out: &Path, checkpoint: &Path, source: InferSource, lead: usize) -> CliResult<()> {
    let ckpt = load_ckpt(checkpoint)?;
    let leads = ckpt.model.leads;
    let (stem, lr, gt) = match source {
        InferSource::Dataset { dir, id } => {
            let p = find_pair(load_pairs(&dir)?, &id, &dir)?;
            (id, p.lr, Some(p.hr_gt))
        }
        InferSource::Raster { path, sample_rate, reference } => {
            let lr = read_raster_any(&path, leads, sample_rate)?;
            let gt =
                reference.map(|r| read_raster_any(&r, leads, sample_rate * ckpt.model.ratio as f64)).transpose()?;
            let stem = path.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned());
            (stem.trim_end_matches(".lr").to_string(), lr, gt)
        }
    };
    if lr.channels() != leads {
        return Err(CliError::Input(format!("input has {} leads, the model expects {leads}", lr.channels())));
    }
    let y = model_infer(&ckpt.params, &ckpt.model, &lr)?;
    let raster = out.join(format!("{stem}.sr.f32"));
    write_raster(&raster, &y)?;
    let svg = figure(&stem, &lr, gt.as_ref(), &y, "MSECG", lead)?;
    write_text(&out.join(format!("{stem}.svg")), &svg)?;
    eprintln!("wrote {} ({} x {} samples at {} Hz)", raster.display(), y.channels(), y.len(), y.sample_rate());
    Ok(())
}

pub fn plot(
    out: &Path,
    dataset: &Path,
    id: &str,
    checkpoint: Option<&Path>,
    prediction: Option<&Path>,
    lead: usize,
) -> CliResult<()> {
    let pair = find_pair(load_pairs(dataset)?, id, dataset)?;
    let (recon, label) = match (checkpoint, prediction) {
        (Some(c), _) => {
            let ckpt = load_ckpt(c)?;
            (model_infer(&ckpt.params, &ckpt.model, &pair.lr)?, "MSECG")
        }
        (None, Some(p)) => (read_raster_any(p, pair.hr_gt.channels(), pair.hr_gt.sample_rate())?, "prediction"),
        (None, None) => return Err(CliError::Input("plot needs --checkpoint or --prediction".into())),
    };
    let svg = figure(id, &pair.lr, Some(&pair.hr_gt), &recon, label, lead)?;
    let path = out.join(format!("plot_{id}.svg"));
    write_text(&path, &svg)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct Fit {
    implementation: String,
    intercept_s: f64,
    slope_s_per_sample: f64,
    r2: f64,
}

pub fn bench_scan(
    cfg: &RunConfig,
    out: &Path,
    lengths: &[usize],
    reps: usize,
    d_inner: usize,
    d_state: usize,
) -> CliResult<()> {
    if lengths.is_empty() {
        return Err(CliError::Input("--lengths is empty".into()));
    }
    let rows: Vec<BenchRow> = run_bench(lengths, reps, d_inner, d_state, cfg.seed)?;
    let path = out.join(BENCH_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    let mut fits = Vec::new();
    for name in ["sequential", "parallel"] {
        let (x, y): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.implementation == name).map(|r| (r.len as f64, r.median_s)).unzip();
        let (a, b, r2) = if x.len() >= 2 { linear_fit(&x, &y) } else { (f64::NAN, f64::NAN, f64::NAN) };
        println!("{name:<10} R^2 = {r2:.4}  slope = {b:.3e} s/sample");
        fits.push(Fit { implementation: name.into(), intercept_s: a, slope_s_per_sample: b, r2 });
    }
    write_json(&out.join(BENCH_SUMMARY_FILE), &fits)
}
