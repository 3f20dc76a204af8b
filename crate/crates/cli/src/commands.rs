use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use colpo_core::dataset::{
    build_sample, generate_hidden_mask, split_corpus, synth_corpus, validate_hidden_mask, write_corpus, CorpusImage,
    HiddenRegionPolicy, Manifest, Sample, SplitRole, SplitSpec,
};
use colpo_core::detect::{detect_sr, DetectorConfig};
use colpo_core::eval::{evaluate_image, histogram_overlay_report, ErrorRanges, EvalReport, SrVerdict};
use colpo_core::imaging::{max_intensity, max_intensity_where, to_u8, to_unit, BinaryMask, ImageU8};
use colpo_core::net::{load_checkpoint, Model, ModelSpec};
use colpo_core::report::write_reports;
use colpo_core::restore::{composite, restore_hidden, restore_sr};
use colpo_core::train::{mse_loss, train, train_ensemble, EnsembleResult, TrainConfig};
use log::info;
use serde::Serialize;

use crate::config::data_path;
use crate::*;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Detect(a) => detect(a),
        Command::AnnotateServe(a) => annotate_serve(a),
        Command::BuildDataset(a) => build_dataset(a),
        Command::Train(a) => train_one(a),
        Command::TrainEnsemble(a) => ensemble(a),
        Command::Restore(a) => restore(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    }
}

impl DetectorArgs {
    fn config(&self) -> Result<DetectorConfig> {
        let cfg = DetectorConfig {
            threshold_factor: self.threshold_factor,
            dilation_radius: self.dilate,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let corpus = synth_corpus(a.count, (a.size, a.size), a.seed)?;
    let manifest = write_corpus(&corpus, data_path(&a.out))?;
    println!("{} images -> {}", corpus.len(), manifest.path.display());
    Ok(())
}

fn detect(a: DetectArgs) -> Result<()> {
    let input = data_path(&a.input);
    let img = ImageU8::load(&input).with_context(|| format!("reading {}", input.display()))?;
    let mask = detect_sr(&img, &a.detector.config()?)?;
    mask.save_png(data_path(&a.output))?;
    println!("{} specular pixels of {}", mask.count_zeros(), img.pixel_count());
    Ok(())
}

fn annotate_serve(a: ServeArgs) -> Result<()> {
    let manifest = data_path(&a.manifest);
    let session = colpo_annotate::Session::open(&manifest, a.ui_dir.as_deref().map(data_path))
        .with_context(|| format!("opening {}", manifest.display()))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(colpo_annotate::serve(session, a.addr))?;
    Ok(())
}

/// Resizes, re-detects the real masks at the working resolution, draws (or
/// keeps annotated) hidden masks and assigns patient-disjoint splits.
fn build_dataset(a: BuildArgs) -> Result<()> {
    let src = Manifest::load(data_path(&a.manifest)).with_context(|| format!("reading {}", a.manifest.display()))?;
    let mut policy = match &a.policy {
        Some(p) => {
            let p = data_path(p);
            serde_json::from_slice::<HiddenRegionPolicy>(&fs::read(&p).with_context(|| format!("reading {}", p.display()))?)?
        }
        None => HiddenRegionPolicy::default(),
    };
    policy.rng_seed = a.seed;
    policy.validate()?;
    let det = a.detector.config()?;

    let mut images = Vec::with_capacity(src.records.len());
    let mut hidden = Vec::with_capacity(src.records.len());
    for r in &src.records {
        let mut img = src.load_image(r)?;
        let mut annotated = src.load_hidden(r)?;
        if let Some(s) = a.size {
            img = img.resized(s, s)?;
            annotated = annotated.map(|m| m.resize(s, s)).transpose()?;
        }
        let real = detect_sr(&img.image, &det)?;
        let img = CorpusImage::new(&img.image_id, &img.patient_id, img.image, real)?;
        let mask = match annotated {
            Some(m) => {
                validate_hidden_mask(&m, &img).with_context(|| format!("annotated mask of {}", img.image_id))?;
                m
            }
            None => generate_hidden_mask(&img, &policy)?,
        };
        images.push(img);
        hidden.push(mask);
    }

    let spec = match (a.train, a.val, a.test) {
        (Some(train_count), Some(val_count), Some(test_count)) => SplitSpec {
            train_count,
            val_count,
            test_count,
            seed: a.seed,
        },
        _ => SplitSpec::scaled(images.len(), a.seed),
    };
    let split = split_corpus(&images, &spec)?;

    let out = data_path(&a.out);
    let mut manifest = write_corpus(&images, &out)?;
    fs::create_dir_all(out.join("hidden"))?;
    for (rec, mask) in manifest.records.iter_mut().zip(&hidden) {
        let rel = format!("hidden/{}.png", rec.image_id);
        mask.save_png(out.join(&rel))?;
        rec.hidden_mask_paths = vec![rel];
        rec.split = split.assignment.get(&rec.patient_id).copied();
    }
    manifest.save()?;
    write_json(&out.join("policy.json"), &policy)?;
    write_json(&out.join("split.json"), &spec)?;
    write_json(&out.join("detector.json"), &det)?;
    println!(
        "{} train / {} val / {} test -> {}",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        manifest.path.display()
    );
    Ok(())
}

struct Entry {
    image: CorpusImage,
    sample: Sample,
    split: Option<SplitRole>,
}

fn load_dataset(path: &Path) -> Result<Vec<Entry>> {
    let path = data_path(path);
    let m = Manifest::load(&path).with_context(|| format!("reading {}", path.display()))?;
    m.records
        .iter()
        .map(|r| {
            let image = m.load_image(r)?;
            let hidden = m
                .load_hidden(r)?
                .with_context(|| format!("{} has no hidden mask; run build-dataset first", r.image_id))?;
            let sample = build_sample(&image, &hidden)?;
            Ok(Entry {
                image,
                sample,
                split: r.split,
            })
        })
        .collect()
}

fn samples(entries: &[Entry], role: SplitRole) -> Result<Vec<Sample>> {
    let out: Vec<Sample> = entries.iter().filter(|e| e.split == Some(role)).map(|e| e.sample.clone()).collect();
    if out.is_empty() {
        bail!("the dataset has no {} images", role.name());
    }
    Ok(out)
}

impl TrainingArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            keep_best: self.keep_best,
            out_dir: Some(data_path(&self.out)),
            ..TrainConfig::default()
        }
    }
}

fn train_one(a: TrainArgs) -> Result<()> {
    let entries = load_dataset(&a.common.dataset)?;
    let (tr, va) = (samples(&entries, SplitRole::Train)?, samples(&entries, SplitRole::Val)?);
    let mut model = Model::build(ModelSpec::completion(a.common.width_multiplier), a.seed)?;
    let run = train(&mut model, &tr, &va, &a.common.config(a.seed))?;
    println!("{}: final validation error {:.6}", run.run_id, run.final_val_error);
    if let Some(p) = &run.checkpoint_path {
        println!("checkpoint: {}", p.display());
    }
    Ok(())
}

fn ensemble(a: EnsembleArgs) -> Result<()> {
    if a.runs == 0 {
        bail!("--runs must be positive");
    }
    let entries = load_dataset(&a.common.dataset)?;
    let (tr, va) = (samples(&entries, SplitRole::Train)?, samples(&entries, SplitRole::Val)?);
    let seeds: Vec<u64> = (0..a.runs as u64).map(|k| a.seed + k).collect();
    let spec = ModelSpec::completion(a.common.width_multiplier);
    let (result, _) = train_ensemble(&spec, &tr, &va, &seeds, &a.common.config(a.seed))?;
    for r in &result.runs {
        println!("{}\t{:.6}", r.run_id, r.final_val_error);
    }
    for f in &result.failures {
        println!("{}\tfailed: {}", f.run_id, f.error);
    }
    println!("selected: {}", result.selected);
    Ok(())
}

/// Accepts a checkpoint directory, a run directory holding `checkpoint/`, or
/// an ensemble directory (its selected run).
fn resolve_model(dir: &Path) -> Result<PathBuf> {
    let dir = data_path(dir);
    if dir.join("spec.json").exists() {
        return Ok(dir);
    }
    if dir.join("checkpoint/spec.json").exists() {
        return Ok(dir.join("checkpoint"));
    }
    let ens = dir.join("ensemble.json");
    if ens.exists() {
        let result: EnsembleResult = serde_json::from_slice(&fs::read(&ens)?)?;
        return Ok(dir.join(&result.selected).join("checkpoint"));
    }
    bail!("{} is not a checkpoint, run or ensemble directory", dir.display())
}

fn load_model(dir: &Path) -> Result<Model> {
    let ckpt = resolve_model(dir)?;
    load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))
}

#[derive(Debug, Serialize)]
struct RestoreSidecar {
    mode: &'static str,
    composite: bool,
    int_max_i: f64,
    int_max_prime: Option<f64>,
    int_max_r: f64,
    sr_removed: Option<bool>,
    sr_pixels: usize,
    hidden_pixels: Option<usize>,
    hidden_mse: Option<f64>,
}

fn restore(a: RestoreArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let input = data_path(&a.input);
    let img = ImageU8::load(&input).with_context(|| format!("reading {}", input.display()))?;
    let real = match &a.sr_mask {
        Some(p) => BinaryMask::load(data_path(p))?,
        None => detect_sr(&img, &a.detector.config()?)?,
    };
    let id = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let corpus = CorpusImage::new(id, "", img, real)?;
    let int_max_i = max_intensity(&corpus.image)?;
    let int_max_prime = max_intensity_where(&corpus.image, &corpus.real_mask)?;

    let (output, hidden_pixels, hidden_mse) = match a.mode {
        RestoreMode::Sr => {
            let raw = restore_sr(&model, &corpus)?;
            let out = if a.composite {
                composite(&raw, &to_unit(&corpus.image), &corpus.real_mask)?
            } else {
                raw
            };
            (out, None, None)
        }
        RestoreMode::Hidden => {
            let path = a.hidden_mask.as_deref().context("--mode hidden needs --hidden-mask")?;
            let hidden = BinaryMask::load(data_path(path))?;
            validate_hidden_mask(&hidden, &corpus)?;
            let sample = build_sample(&corpus, &hidden)?;
            let raw = restore_hidden(&model, &sample)?;
            let mse = mse_loss(&raw, &sample.target_image)?;
            let out = if a.composite {
                composite(&raw, &sample.input_image, &sample.restore_mask)?
            } else {
                raw
            };
            (out, Some(hidden.count_zeros()), Some(mse))
        }
    };
    let restored = to_u8(&output);
    let int_max_r = max_intensity(&restored)?;
    let out_path = data_path(&a.output);
    if let Some(dir) = out_path.parent() {
        fs::create_dir_all(dir)?;
    }
    restored.save_png(&out_path)?;
    let sidecar = RestoreSidecar {
        mode: match a.mode {
            RestoreMode::Sr => "sr",
            RestoreMode::Hidden => "hidden",
        },
        composite: a.composite,
        int_max_i,
        int_max_prime,
        int_max_r,
        sr_removed: match a.mode {
            RestoreMode::Sr => int_max_prime.map(|p| SrVerdict::from_intensities(int_max_i, p, int_max_r).removed),
            RestoreMode::Hidden => None,
        },
        sr_pixels: corpus.real_mask.count_zeros(),
        hidden_pixels,
        hidden_mse,
    };
    write_json(&out_path.with_extension("json"), &sidecar)?;
    println!("{}", out_path.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let role = match a.split {
        SplitArg::Train => SplitRole::Train,
        SplitArg::Val => SplitRole::Val,
        SplitArg::Test => SplitRole::Test,
    };
    let det = a.detector.config()?;
    let ranges = ErrorRanges {
        upper_bounds: a.ranges.clone(),
    };
    ranges.validate()?;
    let out = data_path(&a.out);
    let entries = load_dataset(&a.dataset)?;
    let chosen: Vec<&Entry> = entries.iter().filter(|e| e.split == Some(role)).collect();
    if chosen.is_empty() {
        bail!("the dataset has no {} images", role.name());
    }
    let mut reports = Vec::with_capacity(chosen.len());
    for e in chosen {
        let rep = evaluate_image(&model, &e.image, &e.sample, &det, &ranges)
            .with_context(|| format!("evaluating {}", e.image.image_id))?;
        info!("{}: sup {:?}, removed {}", rep.image_id, rep.sup_errors, rep.sr_removed);
        write_json(&out.join("reports").join(format!("{}.json", rep.image_id)), &rep)?;
        if a.histograms {
            let restored = to_u8(&restore_hidden(&model, &e.sample)?);
            histogram_overlay_report(&to_u8(&e.sample.target_image), &restored, out.join("histograms").join(&rep.image_id))?;
        }
        reports.push(rep);
    }
    let files = write_reports(&reports, None, &out)?;
    let removed = reports.iter().filter(|r| r.sr_removed).count();
    println!("{} images, SR removed in {removed}; tables in {}", reports.len(), files.table3.parent().unwrap_or(&out).display());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let dir = data_path(&a.reports);
    let mut by_id = BTreeMap::new();
    for entry in fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let rep: EvalReport =
                serde_json::from_slice(&fs::read(&path)?).with_context(|| format!("parsing {}", path.display()))?;
            by_id.insert(rep.image_id.clone(), rep);
        }
    }
    if by_id.is_empty() {
        bail!("no EvalReport JSON files in {}", dir.display());
    }
    let ensemble: Option<EnsembleResult> = match &a.ensemble {
        Some(p) => {
            let p = data_path(p);
            Some(serde_json::from_slice(&fs::read(&p).with_context(|| format!("reading {}", p.display()))?)?)
        }
        None => None,
    };
    let reports: Vec<EvalReport> = by_id.into_values().collect();
    let out = data_path(&a.out);
    write_reports(&reports, ensemble.as_ref(), &out)?;
    println!("{} reports -> {}", reports.len(), out.display());
    Ok(())
}
