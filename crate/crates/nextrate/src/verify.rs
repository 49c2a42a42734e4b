//! Self-checks runnable from the command line. Each suite returns one
//! [`Check`] per property so a report shows exactly what failed.

use nextrate_core::autodiff::{gradcheck, Tape, Var};
use nextrate_core::denoiser::{forward, forward_on_tape, random_params, ModelConfig, ModelParams, PromptVector};
use nextrate_core::exec::Sequential;
use nextrate_core::inference::{
    analytic_bound, flop_count, generate, length_quantum, plan_tree, GenerationSpec, ParallelConfig, PromptTrack,
};
use nextrate_core::inference::sampler::gaussian;
use nextrate_core::multimask::{build_conditioned_input, MultiMaskCondition};
use nextrate_core::rng;
use nextrate_core::temporal::{sample_t_start, subsample_indices, RateLevel, TemporalIndexPlan};
use nextrate_core::trainer::{fm_item_on_tape, ItemNoise, NoiseSchedule, TrainingItem};
use nextrate_core::world::{held_out_scenes, render_level};
use nextrate_core::{Result, Tensor};
use rand::Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::pool::generate_parallel;

pub const SUITES: [&str; 5] = ["gradcheck", "rope", "subsampling", "anchor", "cost"];
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_INSTANCES: u64 = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(suite: &'static str, name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            suite,
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(suite: &'static str, name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((ok, detail)) => Self::new(suite, name, ok, detail),
            Err(e) => Self::new(suite, name, false, format!("error: {e}")),
        }
    }
}

pub fn run(suite: &str) -> CliResult<Vec<Check>> {
    let names: Vec<&str> = match suite {
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        s => {
            return Err(CliError::Usage(format!(
                "unknown suite {s:?}; choose all, {}",
                SUITES.join(", ")
            )))
        }
    };
    let mut out = Vec::new();
    for s in names {
        out.extend(match s {
            "gradcheck" => gradcheck_suite(),
            "rope" => rope_suite(),
            "subsampling" => subsampling_suite(),
            "anchor" => anchor_suite(),
            _ => cost_suite(),
        });
    }
    Ok(out)
}

fn g(r: usize, c: usize, seed: u64) -> Tensor<f64> {
    gaussian(r, c, seed).expect("valid shape")
}

/// `Σ w ⊙ out` with fixed random `w`, so every output element matters.
fn weigh(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(out).shape().to_vec();
    let w = Tensor::new(shape.clone(), gaussian::<f64>(1, shape.iter().product(), seed)?.into_data())?;
    let w = tape.constant(w);
    let m = tape.mul(out, w)?;
    Ok(tape.sum(m))
}

type OpCase = (&'static str, fn(u64) -> Result<gradcheck::GradCheckReport>);

fn dims(seed: u64) -> (usize, usize, usize) {
    let mut r = rng::stream(seed, &[0xD1]);
    (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5))
}

fn op_cases() -> Vec<OpCase> {
    vec![
        ("matmul", |s| {
            let (m, k, n) = dims(s);
            gradcheck::check(&[g(m, k, s), g(k, n, s + 1)], GRAD_STEP, |t, v| {
                let o = t.matmul(v[0], v[1])?;
                weigh(t, o, s)
            })
        }),
        ("add", |s| {
            let (m, n, _) = dims(s);
            gradcheck::check(&[g(m, n, s), g(m, n, s + 1)], GRAD_STEP, |t, v| {
                let o = t.add(v[0], v[1])?;
                weigh(t, o, s)
            })
        }),
        ("sub", |s| {
            let (m, n, _) = dims(s);
            gradcheck::check(&[g(m, n, s), g(m, n, s + 1)], GRAD_STEP, |t, v| {
                let o = t.sub(v[0], v[1])?;
                weigh(t, o, s)
            })
        }),
        ("mul", |s| {
            let (m, n, _) = dims(s);
            gradcheck::check(&[g(m, n, s), g(m, n, s + 1)], GRAD_STEP, |t, v| {
                let o = t.mul(v[0], v[1])?;
                weigh(t, o, s)
            })
        }),
        ("add_row", |s| {
            let (m, n, _) = dims(s);
            gradcheck::check(&[g(m, n, s), g(1, n, s + 1)], GRAD_STEP, |t, v| {
                let o = t.add_row(v[0], v[1])?;
                weigh(t, o, s)
            })
        }),
        ("scale", |s| {
            let (m, n, _) = dims(s);
            gradcheck::check(&[g(m, n, s)], GRAD_STEP, |t, v| {
                let o = t.scale(v[0], -1.7);
                weigh(t, o, s)
            })
        }),
        ("softmax_rows", |s| {
            let (m, n, _) = dims(s);
            gradcheck::check(&[g(m, n + 1, s)], GRAD_STEP, |t, v| {
                let o = t.softmax_rows(v[0]);
                weigh(t, o, s)
            })
        }),
        ("rms_norm", |s| {
            let (m, n, _) = dims(s);
            gradcheck::check(&[g(m, n + 1, s), g(1, n + 1, s + 1)], GRAD_STEP, |t, v| {
                let o = t.rms_norm(v[0], v[1])?;
                weigh(t, o, s)
            })
        }),
        ("silu", |s| {
            let (m, n, _) = dims(s);
            gradcheck::check(&[g(m, n, s)], GRAD_STEP, |t, v| {
                let o = t.silu(v[0]);
                weigh(t, o, s)
            })
        }),
        ("concat_cols", |s| {
            let (m, a, b) = dims(s);
            gradcheck::check(&[g(m, a, s), g(m, b, s + 1)], GRAD_STEP, |t, v| {
                let o = t.concat_cols(&[v[0], v[1]])?;
                weigh(t, o, s)
            })
        }),
        ("slice_cols", |s| {
            let (m, a, b) = dims(s);
            gradcheck::check(&[g(m, a + b, s)], GRAD_STEP, |t, v| {
                let o = t.slice_cols(v[0], a, b)?;
                weigh(t, o, s)
            })
        }),
        ("transpose", |s| {
            let (m, n, _) = dims(s);
            gradcheck::check(&[g(m, n, s)], GRAD_STEP, |t, v| {
                let o = t.transpose(v[0])?;
                weigh(t, o, s)
            })
        }),
        ("rope", |s| {
            let (m, heads, half) = dims(s);
            let params = nextrate_core::temporal::RopeParams::new(2 * half)?;
            let pos: Vec<f64> = (0..m).map(|j| 3.0 + 2.5 * j as f64).collect();
            gradcheck::check(&[g(m, heads * 2 * half, s)], GRAD_STEP, |t, v| {
                let o = t.rope(v[0], &pos, &params)?;
                weigh(t, o, s)
            })
        }),
        ("mse", |s| {
            let (m, n, _) = dims(s);
            gradcheck::check(&[g(m, n, s), g(m, n, s + 1)], GRAD_STEP, |t, v| t.mse(v[0], v[1]))
        }),
        ("sum", |s| {
            let (m, n, _) = dims(s);
            gradcheck::check(&[g(m, n, s)], GRAD_STEP, |t, v| Ok(t.sum(v[0])))
        }),
    ]
}

/// The model used by the end-to-end checks: small enough for finite
/// differences over every parameter.
pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        frame_dim: 4,
        width: 8,
        layers: 1,
        heads: 2,
        cond_dim: 3,
        max_t: 64,
    }
}

fn tiny_params(seed: u64) -> Result<ModelParams<f64>> {
    random_params(&tiny_model(), &mut rng::stream(seed, &[0xE2]))
}

/// One random flow-matching item on the tiny model.
fn fm_instance(seed: u64) -> Result<(ModelParams<f64>, TrainingItem<f64>, ItemNoise<f64>)> {
    let cfg = tiny_model();
    let params = tiny_params(seed)?;
    let mut r = rng::stream(seed, &[0xE3]);
    let n = r.random_range(2..6);
    let frames = g(n, cfg.frame_dim, seed + 7);
    let cond = MultiMaskCondition::from_frames(&frames, &[r.random_range(0..n)])?;
    let prompt = PromptVector::new((0..cfg.cond_dim).map(|_| r.random_range(-1.0..1.0)).collect())?;
    let level = RateLevel::new(r.random_range(0..3))?;
    let t0 = r.random_range(0.0..40.0);
    let indices = TemporalIndexPlan::from_positions(level, (0..n).map(|j| t0 + (j * level.stride()) as f64).collect());
    let noise = ItemNoise {
        t: r.random_range(0.05..0.95),
        z1: g(n, cfg.frame_dim, seed + 9),
    };
    let item = TrainingItem {
        frames,
        cond,
        prompt,
        indices,
    };
    Ok((params, item, noise))
}

pub fn fm_gradcheck(seed: u64) -> Result<gradcheck::GradCheckReport> {
    let cfg = tiny_model();
    let (params, item, noise) = fm_instance(seed)?;
    gradcheck::check(params.tensors(), GRAD_STEP, |t, v| fm_item_on_tape(t, v, &cfg, &item, &noise))
}

fn gradcheck_suite() -> Vec<Check> {
    let mut out = Vec::new();
    let mut cases = op_cases();
    cases.push(("fm_loss", fm_gradcheck));
    for (name, case) in cases {
        let r = (0..GRAD_INSTANCES).try_fold(None::<gradcheck::GradCheckReport>, |acc, i| {
            let rep = case(1000 + i * 17)?;
            Ok(Some(acc.map_or(rep, |a| a.merge(rep))))
        });
        out.push(Check::from_result(
            "gradcheck",
            name,
            r.map(|rep| {
                let rep = rep.expect("instances ran");
                (
                    rep.max_rel_err < GRAD_TOL,
                    format!(
                        "{GRAD_INSTANCES} instances, {} components, max rel err {:.2e}",
                        rep.checked, rep.max_rel_err
                    ),
                )
            }),
        ));
    }
    out
}

/// Max abs change of the denoiser output when every index moves by `delta`.
pub fn shift_gap(seed: u64, delta: f64) -> Result<f64> {
    let cfg = tiny_model();
    let (params, item, noise) = fm_instance(seed)?;
    let channels = build_conditioned_input(&noise.z1, &item.cond)?;
    let a = forward(&params, &cfg, &channels, noise.t, &item.prompt, &item.indices)?;
    let b = forward(&params, &cfg, &channels, noise.t, &item.prompt, &item.indices.shifted(delta))?;
    Ok(a.max_abs_diff(&b))
}

/// Kolmogorov-Smirnov distance of `xs` to Uniform(0, hi).
pub fn ks_uniform(xs: &mut [f64], hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (x / hi).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level 0.01.
pub fn ks_critical_01(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

fn rope_suite() -> Vec<Check> {
    let mut out = Vec::new();
    let shifts = [1.0, -3.0, 17.5, 250.0, 1e4 + 0.25];
    let r = (0..10u64).try_fold(0.0f64, |m, s| {
        shifts.iter().try_fold(m, |m, &d| Ok(m.max(shift_gap(300 + s, d)?)))
    });
    out.push(Check::from_result(
        "rope",
        "shift invariance",
        r.map(|gap| (gap <= 1e-9, format!("max output change {gap:.2e} over 50 shifts"))),
    ));
    let n = 100_000;
    let t_max = 64.0;
    let mut stream = rng::stream(5, &[rng::purpose::T_START]);
    let draws: Result<Vec<f64>> = (0..n).map(|_| sample_t_start(t_max, &mut stream)).collect();
    out.push(Check::from_result(
        "rope",
        "t_start uniformity",
        draws.map(|mut d| {
            let ks = ks_uniform(&mut d, t_max);
            let crit = ks_critical_01(n);
            (ks < crit, format!("KS {ks:.5} vs critical {crit:.5} at n={n}"))
        }),
    ));
    out
}

fn subsampling_suite() -> Vec<Check> {
    let mut r = rng::stream(9, &[0xA5]);
    let mut bad = Vec::new();
    for _ in 0..200 {
        let (i, j) = (r.random_range(0..5u32), r.random_range(0..5u32));
        let (lo, hi) = (i.min(j), i.max(j));
        let n = r.random_range(1..30usize) << hi;
        let fine = subsample_indices(n, RateLevel::new(lo).expect("small level")).expect("divisible");
        let coarse = subsample_indices(n, RateLevel::new(hi).expect("small level")).expect("divisible");
        let step = 1 << (hi - lo);
        let picked: Vec<usize> = fine.iter().copied().skip(step - 1).step_by(step).collect();
        if picked != coarse {
            bad.push(format!("N={n} levels {lo}->{hi}"));
        }
    }
    let mut out = vec![Check::new(
        "subsampling",
        "index identity",
        bad.is_empty(),
        if bad.is_empty() { "200 cases".to_string() } else { bad.join("; ") },
    )];
    let scenes = held_out_scenes(10, 21, 64);
    let r: Result<usize> = scenes.iter().enumerate().try_fold(0, |acc, (k, scene)| {
        let t0 = k as f64 * 3.5;
        let full = render_level(scene, RateLevel::FULL, t0, 64)?;
        let mut miss = 0;
        for l in 1..4 {
            let lvl = render_level(scene, RateLevel::new(l)?, t0, 64)?;
            let m = 1usize << l;
            for j in 0..lvl.len() {
                if lvl.frames.row(j) != full.frames.row((j + 1) * m - 1) {
                    miss += 1;
                }
            }
        }
        Ok(acc + miss)
    });
    out.push(Check::from_result(
        "subsampling",
        "render rate exactness",
        r.map(|miss| (miss == 0, format!("{miss} mismatched frames over 10 scenes, levels 1-3"))),
    ));
    out
}

/// A random valid parallel config with few denoise steps, and a length.
pub fn random_parallel_config(seed: u64) -> (ParallelConfig, usize) {
    let mut r = rng::stream(seed, &[0xC0]);
    loop {
        let k = r.random_range(1..=3usize);
        let mut fps = vec![6u32 << r.random_range(0..2)];
        let mut segs = vec![1usize];
        for _ in 1..k {
            let f = fps.last().expect("non-empty") << r.random_range(1..=2);
            fps.push(f);
            segs.push(1 << r.random_range(0..=2));
        }
        let steps = (0..k).map(|_| r.random_range(1..=3)).collect();
        let Ok(cfg) = ParallelConfig::new(fps, segs, steps) else { continue };
        let q = length_quantum(&cfg);
        let n = q * r.random_range(1..=2usize);
        if n <= 64 {
            return (cfg, n);
        }
    }
}

/// Anchor agreement of one random generation plus the level index sets.
/// Returns mismatch counts and whether the pool run matched.
pub fn anchor_case(seed: u64) -> Result<(usize, usize, bool)> {
    let cfg = tiny_model();
    let params: ModelParams<f32> = tiny_params(seed)?.cast();
    let (par, n) = random_parallel_config(seed);
    let prompt = PromptTrack::Fixed(PromptVector::zeros(cfg.cond_dim));
    let schedule = NoiseSchedule::default();
    let spec = GenerationSpec {
        params: &params,
        model: &cfg,
        parallel: &par,
        schedule: &schedule,
        prompt: &prompt,
    };
    let cond = MultiMaskCondition::empty(n, cfg.frame_dim);
    let gen = generate(&spec, &cond, n, seed, &Sequential)?;
    let mut mismatched = 0;
    for (s, fine) in gen.stages.iter().enumerate() {
        for coarse in &gen.stages[..s] {
            for (j, p) in coarse.positions.iter().enumerate() {
                let k = fine.positions.binary_search(p).map_err(|_| {
                    nextrate_core::Error::Contract(format!("position {p} missing from a finer stage"))
                })?;
                if fine.frames.row(k) != coarse.frames.row(j) {
                    mismatched += 1;
                }
            }
        }
    }
    let mut bad_sets = 0;
    for st in &gen.stages {
        let expect: Vec<usize> = subsample_indices(n, st.level)?.into_iter().map(|p| p - 1).collect();
        if st.positions != expect {
            bad_sets += 1;
        }
    }
    let (pooled, _) = generate_parallel(&spec, &cond, n, seed, 3)?;
    Ok((mismatched, bad_sets, pooled.frames == gen.frames))
}

fn anchor_suite() -> Vec<Check> {
    let cases = 50u64;
    let r: Result<(usize, usize, usize)> = (0..cases).try_fold((0, 0, 0), |(m, b, d), s| {
        let (mm, bb, same) = anchor_case(700 + s)?;
        Ok((m + mm, b + bb, d + usize::from(!same)))
    });
    match r {
        Ok((m, b, d)) => vec![
            Check::new("anchor", "anchor consistency", m == 0, format!("{m} mismatched anchors over {cases} configs")),
            Check::new("anchor", "level index sets", b == 0, format!("{b} stages off the subsample grid")),
            Check::new("anchor", "pool matches sequential", d == 0, format!("{d} of {cases} runs differ")),
        ],
        Err(e) => vec![Check::new("anchor", "anchor consistency", false, format!("error: {e}"))],
    }
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// `N²/4^K · Σ_{i<K} (4/b)^i`, adding one reduced fraction per term.
pub fn bound_by_summation(n: u64, k: u32, w: u64, intra: bool) -> (u128, u128) {
    let b = if intra { (w * w) as u128 } else { w as u128 };
    let (mut num, mut den) = (0u128, 1u128);
    let (mut tn, mut td) = (1u128, 1u128);
    for _ in 0..k {
        let l = den / gcd(den, td) * td;
        num = num * (l / den) + tn * (l / td);
        den = l;
        let c = gcd(num, den);
        (num, den) = (num / c, den / c);
        tn *= 4;
        td *= b;
        let c = gcd(tn, td);
        (tn, td) = (tn / c, td / c);
    }
    let (sn, sd) = ((n as u128) * (n as u128), 4u128.pow(k));
    let c1 = gcd(num, sd);
    let c2 = gcd(sn, den);
    let (rn, rd) = ((num / c1) * (sn / c2), (den / c2) * (sd / c1));
    let c = gcd(rn, rd);
    (rn / c, rd / c)
}

/// Multiply-adds counted by running the tape once per node, times steps.
pub fn instrumented_flops(model: &ModelConfig, par: &ParallelConfig, n: usize, seed: u64) -> Result<u64> {
    let params: ModelParams<f64> = random_params(model, &mut rng::stream(seed, &[0xF1]))?;
    let tree = plan_tree(par, n)?;
    let mut total = 0;
    for node in &tree.nodes {
        let t = node.window_len();
        let z = g(t, model.frame_dim, seed);
        let ch = build_conditioned_input(&z, &MultiMaskCondition::empty(t, model.frame_dim))?;
        let idx = TemporalIndexPlan::from_positions(node.level, node.positions.iter().map(|&p| p as f64).collect());
        let mut tape = Tape::new();
        let vars = params.load(&mut tape, false);
        forward_on_tape(&mut tape, &vars, model, &ch, 0.5, &PromptVector::zeros(model.cond_dim), &idx)?;
        total += tape.macs() * tree.steps[node.stage] as u64;
    }
    Ok(total)
}

fn cost_suite() -> Vec<Check> {
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for k in 1..=16u32 {
        for w in 2..=8u64 {
            for intra in [false, true] {
                for n in [64u64, 512, 1000] {
                    let got = analytic_bound(n, k, w, intra).map(|r| (r.num, r.den));
                    let want = bound_by_summation(n, k, w, intra);
                    if got.as_ref().ok() != Some(&want) {
                        bad.push(format!("N={n} K={k} W={w} intra={intra}: {got:?} vs {want:?}"));
                    }
                }
            }
        }
    }
    out.push(Check::new(
        "cost",
        "bound equals summation",
        bad.is_empty(),
        if bad.is_empty() { "K 1-16, W 2-8, both modes".into() } else { bad[..bad.len().min(3)].join("; ") },
    ));
    let r = analytic_bound(512, 3, 4, false);
    out.push(Check::from_result(
        "cost",
        "N=512 K=3 W=4",
        r.map(|r| (r.num == 12288 && r.den == 1, format!("{}/{}", r.num, r.den))),
    ));
    let mut worst = String::new();
    let mut ok = true;
    for w in 2..=8u64 {
        for k in 1..=16u32 {
            let scale = 4f64.powi(k as i32) / (1024.0 * 1024.0);
            let seq = analytic_bound(1024, k, w, false).map(|r| r.value() * scale).unwrap_or(f64::NAN);
            let par = analytic_bound(1024, k, w, true).map(|r| r.value() * scale).unwrap_or(f64::NAN);
            let wf = w as f64;
            let seq_ok = w < 4 || (seq <= k as f64 + 1e-12 && (w == 4 || seq <= 1.0 / (1.0 - 4.0 / wf) + 1e-12));
            let par_ok = w == 2 || par <= 1.0 / (1.0 - 4.0 / (wf * wf)) + 1e-12;
            if !(seq_ok && par_ok) {
                ok = false;
                worst = format!("W={w} K={k}: {seq} / {par}");
            }
        }
    }
    out.push(Check::new("cost", "geometric convergence", ok, if ok { "K 1-16, W 2-8".into() } else { worst }));
    let models = [
        ModelConfig { frame_dim: 4, width: 8, layers: 1, heads: 2, cond_dim: 3, max_t: 64 },
        ModelConfig { frame_dim: 6, width: 12, layers: 2, heads: 3, cond_dim: 5, max_t: 64 },
        ModelConfig { frame_dim: 16, width: 16, layers: 1, heads: 4, cond_dim: 14, max_t: 64 },
    ];
    let r = models.iter().enumerate().try_fold(0.0f64, |worst, (i, m)| {
        let par = ParallelConfig::new(vec![6, 12, 24], vec![1, 2, 4], vec![2, 1, 1])?;
        let counted = flop_count(m, &par, 32)?.total as f64;
        let measured = instrumented_flops(m, &par, 32, i as u64)? as f64;
        Ok(worst.max((counted - measured).abs() / measured))
    });
    out.push(Check::from_result(
        "cost",
        "flop_count vs tape counter",
        r.map(|e| (e <= 1e-3, format!("worst relative gap {e:.2e} over 3 models"))),
    ));
    out
}
