//! One function per subcommand. Each returns the paths it wrote.

use std::io::Write;
use std::path::{Path, PathBuf};

use nextrate_core::denoiser::{ModelConfig, PromptVector};
use nextrate_core::inference::{continue_video, flop_count, parse_config, GenerationSpec, PromptTrack};
use nextrate_core::multimask::MultiMaskCondition;
use nextrate_core::temporal::{RateLevel, TemporalIndexPlan};
use nextrate_core::trainer::{run_stage1, run_stage2, Checkpoint, NoiseSchedule, Stage, StepRecord, TrainConfig};
use nextrate_core::world::{evaluate, held_out_scenes, make_dataset_with, render_scene, EvalReport, SceneParams, VideoSequence, DEFAULT_DURATION};
use serde::Serialize;

use crate::cli::{DatasetArgs, EvalArgs, FlopsArgs, GenerateArgs, ModelFlags, TrainArgs, VerifyArgs};
use crate::error::{CliError, CliResult};
use crate::format::{self, load_checkpoint, load_dataset, load_tmv, save_checkpoint, save_dataset, save_tmv, DatasetFile};
use crate::manifest::{hash_json, ManifestBuilder};
use crate::pool::{generate_parallel, WorkerPool};
use crate::settings::{pick, FileConfig, ModelOverrides, TrainOverrides};
use crate::verify;

pub const DEFAULT_PLAN: &str = "f(6,12,24)m(1,2,4)";
pub const DEFAULT_FRAMES: usize = 64;
pub const DEFAULT_CHECKPOINT_EVERY: u64 = 500;
pub const DATASET_FILE: &str = "dataset.tmds";
pub const CHECKPOINT_FILE: &str = "checkpoint.tmck";
pub const LOG_FILE: &str = "train_log.csv";
pub const OUTPUT_FILE: &str = "generated.tmv";

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn model_overrides(flags: &ModelFlags, file: &FileConfig) -> ModelOverrides {
    ModelOverrides {
        width: flags.width,
        layers: flags.layers,
        heads: flags.heads,
        max_t: flags.max_t,
    }
    .merged(&file.model)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    format::write_file(path, text.as_bytes())
}

pub fn read_scene(path: &Path) -> CliResult<SceneParams> {
    let text = format::read_file_text(path)?;
    let scene: SceneParams = serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
    scene.validate()?;
    Ok(scene)
}

#[derive(Serialize)]
struct DatasetSettings {
    scenes: usize,
    multi_shot: f64,
    duration: usize,
    embed: bool,
    held_out: usize,
}

pub fn cmd_dataset(a: &DatasetArgs) -> CliResult<Vec<PathBuf>> {
    let file = FileConfig::load(a.config_file.as_deref())?;
    let mut manifest = ManifestBuilder::start("dataset");
    if let Some(p) = &a.config_file {
        manifest.input(p)?;
    }
    let scenes = a
        .scenes
        .or(file.dataset.scenes)
        .ok_or_else(|| usage("--scenes is required (or [dataset] scenes in the config file)"))?;
    let settings = DatasetSettings {
        scenes,
        multi_shot: pick(a.multi_shot, file.dataset.multi_shot, 0.15),
        duration: pick(a.duration, file.dataset.duration, DEFAULT_DURATION),
        embed: a.embed,
        held_out: a.held_out,
    };
    let seed = pick(a.seed, file.seed, 0);
    let dataset = make_dataset_with(settings.scenes, settings.multi_shot, seed, settings.duration)?;
    let sequences = if a.embed {
        Some(
            dataset
                .scenes
                .iter()
                .map(|s| render_scene(s, RateLevel::FULL, 0.0))
                .collect::<nextrate_core::Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let path = a.out.join(DATASET_FILE);
    save_dataset(&path, &DatasetFile { dataset, sequences })?;
    let mut outputs = vec![path];
    for (k, scene) in held_out_scenes(a.held_out, seed, settings.duration).iter().enumerate() {
        let p = a.out.join("held_out").join(format!("scene-{k:04}.json"));
        write_json(&p, scene)?;
        outputs.push(p);
    }
    manifest.finish(&a.out, &settings, &serde_json::json!({ "seed": seed }), &outputs)?;
    Ok(outputs)
}

/// Settings hash used to decide whether a checkpoint may be resumed; the
/// step budget is left out so a run can be extended.
pub fn train_config_hash(cfg: &TrainConfig) -> String {
    let mut c = cfg.clone();
    c.steps = 0;
    hash_json(&c)
}

pub fn model_config_hash(cfg: &ModelConfig) -> String {
    hash_json(cfg)
}

#[derive(Serialize)]
struct TrainSettings<'a> {
    model: ModelConfig,
    train: &'a TrainConfig,
    checkpoint_every: u64,
}

struct TrainLog {
    writer: csv::Writer<std::fs::File>,
    levels: Vec<u32>,
}

impl TrainLog {
    fn create(path: &Path, cfg: &TrainConfig) -> CliResult<Self> {
        let levels: Vec<u32> = cfg.levels()?.iter().map(|l| l.level()).collect();
        let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut writer = csv::Writer::from_writer(f);
        let mut header: Vec<String> = ["step", "stage", "loss", "lr", "grad_norm"].iter().map(|s| s.to_string()).collect();
        header.extend(levels.iter().map(|l| format!("items_level{l}")));
        header.extend(["condition_fraction", "shot_dropped"].iter().map(|s| s.to_string()));
        writer.write_record(&header).map_err(|e| CliError::format(path, e.to_string()))?;
        Ok(Self { writer, levels })
    }

    fn row(&mut self, r: &StepRecord) -> csv::Result<()> {
        let n = r.condition_fractions.len();
        let mut row = vec![
            r.stats.step.to_string(),
            r.stage.number().to_string(),
            format!("{:.6}", r.stats.loss),
            format!("{:.6e}", r.stats.lr),
            format!("{:.6}", r.stats.grad_norm),
        ];
        row.extend(self.levels.iter().map(|&l| if l == r.level.level() { n } else { 0 }.to_string()));
        let frac = r.condition_fractions.iter().sum::<f64>() / n.max(1) as f64;
        row.push(format!("{frac:.4}"));
        row.push(r.shot_dropped.to_string());
        self.writer.write_record(&row)?;
        self.writer.flush()?;
        Ok(())
    }
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<Vec<PathBuf>> {
    let file = FileConfig::load(a.config_file.as_deref())?;
    let stage = if a.stage == 1 { Stage::SingleRate } else { Stage::MultiRate };
    if stage == Stage::MultiRate && a.init.is_none() && a.resume.is_none() {
        return Err(usage("stage 2 needs --init <stage-1 checkpoint> (or --resume)"));
    }
    if stage == Stage::SingleRate && a.init.is_some() {
        return Err(usage("--init only applies to stage 2; use --resume to continue stage 1"));
    }
    if a.init.is_some() && a.resume.is_some() {
        return Err(usage("give either --init or --resume, not both"));
    }
    let mut manifest = ManifestBuilder::start("train");
    manifest.input(&a.data)?;
    if let Some(p) = &a.config_file {
        manifest.input(p)?;
    }
    let data = load_dataset(&a.data)?;
    let overrides = model_overrides(&a.model, &file);
    let base = if stage == Stage::SingleRate { TrainConfig::stage1() } else { TrainConfig::stage2() };
    let mut cfg = TrainOverrides {
        steps: a.steps,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        warmup_steps: a.warmup,
        window: a.window,
    }
    .apply(&file.train, base);
    let checkpoint_every = pick(a.checkpoint_every, file.train.checkpoint_every, DEFAULT_CHECKPOINT_EVERY);

    let source = a.init.as_ref().or(a.resume.as_ref());
    let mut state = match source {
        None => {
            let seed = pick(a.seed, file.seed, 0);
            Checkpoint::<f32>::fresh(overrides.apply(ModelConfig::default()), seed)?
        }
        Some(path) => {
            manifest.input(path)?;
            let (state, meta) = load_checkpoint(path)?;
            let requested = overrides.apply(state.model);
            if !overrides.is_empty() && requested != state.model {
                return Err(CliError::Incompatible {
                    what: "model config",
                    found: model_config_hash(&state.model),
                    expected: model_config_hash(&requested),
                });
            }
            if let Some(seed) = a.seed.or(file.seed).filter(|&s| s != state.seed) {
                return Err(usage(format!(
                    "--seed {seed} conflicts with the checkpoint's seed {}; the seed is fixed at stage 1",
                    state.seed
                )));
            }
            if a.resume.is_some() {
                if state.stage != stage {
                    return Err(usage(format!(
                        "--resume needs a stage-{} checkpoint, got stage {}",
                        a.stage,
                        state.stage.number()
                    )));
                }
                let expected = train_config_hash(&TrainConfig { seed: state.seed, ..cfg.clone() });
                let found = meta.train.as_ref().map(train_config_hash).unwrap_or_else(|| "none".into());
                if found != expected {
                    return Err(CliError::Incompatible {
                        what: "training config",
                        found,
                        expected,
                    });
                }
            } else if state.stage != Stage::SingleRate {
                return Err(usage("--init needs a stage-1 checkpoint"));
            }
            state
        }
    };
    cfg.seed = state.seed;
    cfg.validate()?;
    state.model.validate()?;

    std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let log_path = a.out.join(LOG_FILE);
    let mut log = TrainLog::create(&log_path, &cfg)?;
    let mut outputs = vec![log_path.clone()];
    let mut periodic = Vec::new();
    let ckpt_dir = a.out.join("checkpoints");
    let mut observe = |r: &StepRecord, s: &Checkpoint<f32>| -> nextrate_core::Result<()> {
        log.row(r).map_err(|e| nextrate_core::Error::Training {
            step: r.stats.step,
            msg: format!("writing {}: {e}", log_path.display()),
        })?;
        if checkpoint_every > 0 && s.step % checkpoint_every == 0 && s.step < cfg.steps {
            let p = ckpt_dir.join(format!("stage{}-step{:06}.tmck", a.stage, s.step));
            save_checkpoint(&p, s, Some(&cfg)).map_err(|e| nextrate_core::Error::Training {
                step: s.step,
                msg: e.to_string(),
            })?;
            periodic.push(p);
        }
        Ok(())
    };
    let exec = nextrate_core::exec::Sequential;
    match stage {
        Stage::SingleRate => run_stage1(&mut state, &data.dataset.scenes, &cfg, &exec, &mut observe)?,
        Stage::MultiRate => run_stage2(&mut state, &data.dataset.scenes, &cfg, &exec, &mut observe)?,
    }
    let final_path = a.out.join(CHECKPOINT_FILE);
    save_checkpoint(&final_path, &state, Some(&cfg))?;
    outputs.extend(periodic);
    outputs.push(final_path);
    let settings = TrainSettings {
        model: state.model,
        train: &cfg,
        checkpoint_every,
    };
    manifest.finish(&a.out, &settings, &serde_json::json!({ "seed": state.seed }), &outputs)?;
    Ok(outputs)
}

#[derive(Serialize)]
struct GenerateSettings {
    plan: String,
    frames: usize,
    workers: usize,
    weights: &'static str,
    mode: String,
    model: ModelConfig,
    schedule: NoiseSchedule,
}

/// Level sequence of one stage, indexed by absolute position.
fn stage_sequence(frames: nextrate_core::Tensor<f32>, level: RateLevel, positions: &[usize]) -> CliResult<VideoSequence> {
    let plan = TemporalIndexPlan::from_positions(level, positions.iter().map(|&p| p as f64).collect());
    Ok(VideoSequence::new(frames, level, plan)?)
}

pub fn cmd_generate(a: &GenerateArgs) -> CliResult<Vec<PathBuf>> {
    let file = FileConfig::load(a.config_file.as_deref())?;
    let mut manifest = ManifestBuilder::start("generate");
    manifest.input(&a.checkpoint)?;
    for p in [&a.config_file, &a.scene, &a.image, &a.first_last, &a.continue_from].into_iter().flatten() {
        manifest.input(p)?;
    }
    let plan_text = a.config.clone().or(file.generate.config.clone()).unwrap_or_else(|| DEFAULT_PLAN.into());
    let parallel = parse_config(&plan_text)?;
    let n = pick(a.frames, file.generate.frames, DEFAULT_FRAMES);
    let workers = pick(a.workers, file.generate.workers, 1);
    let pool = WorkerPool::new(workers).map_err(|e| usage(e.to_string()))?;
    let seed = pick(a.seed, file.seed, 0);
    let (state, meta) = load_checkpoint(&a.checkpoint)?;
    let schedule = meta.train.as_ref().map(|t| t.schedule).unwrap_or_default();
    let params = if a.raw_weights { &state.params } else { &state.ema };
    let scene = a.scene.as_deref().map(read_scene).transpose()?;
    let prev = a.continue_from.as_deref().map(load_tmv).transpose()?;
    // scene time of the window's first frame
    let t0 = match (&prev, a.overlap) {
        (Some(p), Some(overlap)) => p.indices.t_start + p.len().saturating_sub(overlap) as f64,
        _ => 0.0,
    };
    let prompt = match &scene {
        Some(s) => s.prompt_track(t0, n),
        None => PromptTrack::Fixed(PromptVector::zeros(state.model.cond_dim)),
    };
    let spec = GenerationSpec {
        params,
        model: &state.model,
        parallel: &parallel,
        schedule: &schedule,
        prompt: &prompt,
    };
    let d = state.model.frame_dim;
    let mut outputs = Vec::new();
    let out_path = a.out.join(OUTPUT_FILE);
    let mode;
    if let Some(prev) = &prev {
        if prev.level != RateLevel::FULL {
            return Err(usage("--continue needs a full-rate .tmv"));
        }
        let overlap = a.overlap.expect("clap requires --overlap");
        let frames = continue_video(&spec, &prev.frames, overlap, n, seed, &pool)?;
        save_tmv(&out_path, &VideoSequence::full_rate(frames, prev.indices.t_start)?)?;
        outputs.push(out_path);
        mode = format!("continue overlap={overlap}");
    } else {
        let mut cond = MultiMaskCondition::empty(n, d);
        mode = if let Some(p) = &a.image {
            let img = load_tmv(p)?;
            cond.insert(0, img.frames.row(0).to_vec())?;
            "image".to_string()
        } else if let Some(p) = &a.first_last {
            let fl = load_tmv(p)?;
            if fl.len() < 2 {
                return Err(usage("--first-last needs a .tmv with at least two frames"));
            }
            cond.insert(0, fl.frames.row(0).to_vec())?;
            cond.insert(n - 1, fl.frames.row(fl.len() - 1).to_vec())?;
            "first-last".to_string()
        } else {
            "unconditional".to_string()
        };
        let (gen, trace) = generate_parallel(&spec, &cond, n, seed, workers)?;
        save_tmv(&out_path, &VideoSequence::full_rate(gen.frames.clone(), 0.0)?)?;
        outputs.push(out_path);
        if a.emit_stages {
            for (s, st) in gen.stages.iter().enumerate() {
                let p = a.out.join(format!("stage{s}-level{}.tmv", st.level.level()));
                save_tmv(&p, &stage_sequence(st.frames.clone(), st.level, &st.positions)?)?;
                outputs.push(p);
            }
        }
        // timing-dependent, so kept out of the hashed outputs
        write_json(&a.out.join("trace.json"), &trace)?;
    }
    let settings = GenerateSettings {
        plan: parallel.to_string(),
        frames: n,
        workers,
        weights: if a.raw_weights { "raw" } else { "ema" },
        mode,
        model: state.model,
        schedule,
    };
    manifest.finish(&a.out, &settings, &serde_json::json!({ "seed": seed }), &outputs)?;
    Ok(outputs)
}

/// Model dimensions for `flops`: checkpoint, else flags over defaults.
fn flops_model(a: &FlopsArgs) -> CliResult<ModelConfig> {
    let overrides = ModelOverrides {
        width: a.model.width,
        layers: a.model.layers,
        heads: a.model.heads,
        max_t: a.model.max_t,
    };
    let base = match &a.checkpoint {
        Some(p) => load_checkpoint(p)?.0.model,
        None => ModelConfig::default(),
    };
    let m = overrides.apply(base);
    m.validate()?;
    Ok(m)
}

pub fn flops_csv(a: &FlopsArgs) -> CliResult<String> {
    let model = flops_model(a)?;
    let cfg = parse_config(&a.config)?;
    let report = flop_count(&model, &cfg, a.frames)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Verify(e.to_string());
    w.write_record(["config", "frames", "stage", "level", "nodes", "frames_per_node", "steps", "flops"]).map_err(err)?;
    for s in &report.stages {
        w.write_record([
            report.config.clone(),
            report.n_frames.to_string(),
            s.stage.to_string(),
            s.level.to_string(),
            s.nodes.to_string(),
            s.frames_per_node.to_string(),
            s.steps.to_string(),
            s.flops.to_string(),
        ])
        .map_err(err)?;
    }
    let total = [report.config.clone(), report.n_frames.to_string(), "total".into(), String::new(), String::new(), String::new(), String::new(), report.total.to_string()];
    w.write_record(total).map_err(err)?;
    if let Some(b) = report.analytic_bound {
        w.write_record([report.config.clone(), report.n_frames.to_string(), "analytic_bound".into(), String::new(), String::new(), String::new(), String::new(), format!("{b}")])
            .map_err(err)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| CliError::Verify(e.to_string()))?).expect("csv is utf-8"))
}

pub fn cmd_flops(a: &FlopsArgs) -> CliResult<Vec<PathBuf>> {
    let text = flops_csv(a)?;
    print!("{text}");
    match &a.out {
        Some(p) => {
            format::write_file(p, text.as_bytes())?;
            Ok(vec![p.clone()])
        }
        None => Ok(Vec::new()),
    }
}

pub fn eval_report(a: &EvalArgs) -> CliResult<EvalReport> {
    let seq = load_tmv(&a.input)?;
    let scene = read_scene(&a.scene)?;
    let stages = a.stage_files.iter().map(|p| load_tmv(p)).collect::<CliResult<Vec<_>>>()?;
    Ok(evaluate(&seq, &scene, &stages)?)
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<Vec<PathBuf>> {
    let mut manifest = ManifestBuilder::start("eval");
    manifest.input(&a.input)?;
    manifest.input(&a.scene)?;
    for p in &a.stage_files {
        manifest.input(p)?;
    }
    let report = eval_report(a)?;
    println!("frames            {}", report.per_frame_mse.len());
    println!("mean_mse          {:.6}", report.mean_mse);
    println!("signal_variance   {:.6}", report.signal_variance);
    println!("mse_over_variance {:.4}", report.mean_mse / report.signal_variance);
    println!("drift_slope       {:.6e}", report.drift_slope);
    println!("anchor_violations {}", report.anchor_violations);
    let Some(out) = &a.out else {
        return Ok(Vec::new());
    };
    let p = out.join("eval.json");
    write_json(&p, &report)?;
    manifest.finish(out, &serde_json::json!({ "stage_files": a.stage_files.len() }), &serde_json::json!({}), &[p.clone()])?;
    Ok(vec![p])
}

/// Prints one line per check; fails when any check failed.
pub fn cmd_verify(a: &VerifyArgs) -> CliResult<Vec<PathBuf>> {
    let checks = verify::run(&a.suite)?;
    let mut stdout = std::io::stdout().lock();
    for c in &checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(stdout, "{mark} {:<12} {:<28} {}", c.suite, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let _ = writeln!(stdout, "{} checks, {failed} failed", checks.len());
    let mut outputs = Vec::new();
    if let Some(out) = &a.out {
        let p = out.join("verify.json");
        write_json(&p, &checks)?;
        outputs.push(p);
    }
    if failed > 0 {
        return Err(CliError::Verify(format!("{failed} verification checks failed")));
    }
    Ok(outputs)
}

