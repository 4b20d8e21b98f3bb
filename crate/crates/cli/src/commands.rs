use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use atune_core::bench::{emit_report, exemplar_bundles, run_plan, BenchPlan, Cache, Mode};
use atune_core::container::{self, content_hash, file_hash, hash_parts, BUNDLE_MAGIC, DATASET_MAGIC, PARAMS_MAGIC};
use atune_core::datagen::{Dataset, Experiment, NoiseSpec};
use atune_core::model::io::{load_model, save_model};
use atune_core::optim::AdamConfig;
use atune_core::train::{train_from, write_loss_csv, TrainConfig};
use atune_core::tuning::{init_stream, preset, step_stream, TuningConfig, TuningTarget};
use atune_core::{exec, Error, Parallelism, Precision, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::{BenchArgs, Cli, Command, GenArgs, TrainArgs, TuneArgs};

/// Seed offsets so stored noise and tuning-time noise never reuse a stream.
const GEN_NOISE_STREAM: u64 = 0x6765_6e6e;
const TUNE_NOISE_STREAM: u64 = 0x7475_6e65;

/// Settings shared by every subcommand after flags, env and file are merged.
struct Global {
    out: PathBuf,
    seed: u64,
    explicit_seed: Option<u64>,
    precision: Precision,
    mode: Parallelism,
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(w) = cli.workers.or(file.workers) {
        if w == 0 {
            return Err(Error::Validation("--workers must be at least 1".into()));
        }
        exec::set_worker_count(w);
    }
    let precision = match cli.precision.as_deref().or(file.precision.as_deref()) {
        Some(s) => Precision::parse(s)?,
        None => Precision::F64,
    };
    let g = Global {
        out: cli.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        seed: cli.seed.or(file.seed).unwrap_or(0),
        explicit_seed: cli.seed.or(file.seed),
        precision,
        mode: if cli.sequential { Parallelism::Sequential } else { Parallelism::Parallel },
    };
    match cli.command {
        Command::Gen(a) => gen(&g, &file, a),
        Command::Train(a) => train(&g, &file, a),
        Command::Tune(a) => tune(&g, &file, a),
        Command::Bench(a) => bench(&g, &file, a),
        Command::Inspect { file } => inspect(&file),
    }
}

fn experiment(flag: Option<&str>, file: Option<&str>) -> Result<Option<Experiment>> {
    flag.or(file).map(Experiment::parse).transpose()
}

fn gen(g: &Global, file: &RunConfig, a: GenArgs) -> Result<()> {
    let f = &file.gen;
    let exp = experiment(a.experiment.as_deref(), f.experiment.as_deref())?;
    let base = match (&f.generator, exp) {
        (Some(spec), Some(e)) if spec.experiment() != e => {
            return Err(Error::Validation(format!("[gen.generator] describes {} but the experiment is {e}", spec.experiment())))
        }
        (Some(spec), _) => spec.clone(),
        (None, Some(e)) => e.default_generator(),
        (None, None) => return Err(Error::Validation("gen needs --experiment".into())),
    };
    let exp = base.experiment();
    let (def_train, def_test) = if exp == Experiment::Wave { (200, 20) } else { (10_000, 1_000) };
    let train_count = a.train.or(f.train).unwrap_or(def_train);
    let test_count = a.test.or(f.test).unwrap_or(def_test);
    let steps = a.steps.or(f.steps).unwrap_or(base.steps());
    let test_steps = a.test_steps.or(f.test_steps).unwrap_or(if exp == Experiment::Wave { 400 } else { steps });
    if train_count == 0 || test_count == 0 {
        return Err(Error::Validation("dataset counts must be positive".into()));
    }
    let noise = a.noise.or(f.noise).map(|r| NoiseSpec::gaussian(r, g.seed ^ GEN_NOISE_STREAM));
    if let Some(n) = &noise {
        n.validate()?;
    }

    let train_gen = base.with_seed(g.seed).with_steps(steps);
    let test_gen = train_gen.test_split().with_steps(test_steps);
    let dir = g.out.join("data");
    for (split, spec, count) in [("train", &train_gen, train_count), ("test", &test_gen, test_count)] {
        let hash = content_hash(&json!({ "command": "gen", "generator": spec, "count": count, "noise": noise, "precision": g.precision }));
        let mut ds = Dataset::generate(spec, count, g.mode)?;
        if let Some(n) = &noise {
            ds.add_noise(n)?;
        }
        let path = dir.join(format!("{exp}_{split}.atds"));
        ds.save(&path, g.precision, &hash)?;
        println!("{}  {count} x {} steps x {} channels", path.display(), ds.steps(), ds.channels());
    }
    Ok(())
}

fn train(g: &Global, file: &RunConfig, a: TrainArgs) -> Result<()> {
    let f = &file.train;
    let exp = experiment(a.experiment.as_deref(), f.experiment.as_deref())?;
    let data_path = match (a.data.or_else(|| f.data.clone()), exp) {
        (Some(p), _) => p,
        (None, Some(e)) => g.out.join("data").join(format!("{e}_train.atds")),
        (None, None) => return Err(Error::Validation("train needs --data or --experiment".into())),
    };
    let (data, header) = Dataset::load(&data_path)?;
    if let Some(e) = exp {
        if e != header.experiment {
            return Err(Error::Validation(format!("{} holds {} data, not {e}", data_path.display(), header.experiment)));
        }
    }
    let exp = header.experiment;
    let data_hash = file_hash(&data_path)?;

    let mut template = TrainConfig::for_experiment(exp);
    template.epochs = a.epochs.or(f.epochs).unwrap_or(template.epochs);
    template.batch_size = a.batch_size.or(f.batch_size).unwrap_or(template.batch_size);
    template.hidden = a.hidden.or(f.hidden).unwrap_or(template.hidden);
    template.adam = AdamConfig {
        rate: a.rate.or(f.rate).unwrap_or(template.adam.rate),
        beta1: a.beta1.or(f.beta1).unwrap_or(template.adam.beta1),
        beta2: a.beta2.or(f.beta2).unwrap_or(template.adam.beta2),
        ..template.adam
    };
    let noises = a.noise.or_else(|| f.noise.clone()).unwrap_or_else(|| vec![0.0]);
    let seeds = a.seeds.or(f.seeds).unwrap_or(1);
    if seeds == 0 || noises.is_empty() {
        return Err(Error::Validation("train needs at least one seed and one noise ratio".into()));
    }
    let configs: Vec<TrainConfig> = noises
        .iter()
        .flat_map(|&noise| (0..seeds).map(move |s| (noise, s)))
        .map(|(noise, s)| TrainConfig { noise, seed: g.seed.wrapping_add(s as u64), ..template.clone() })
        .collect();
    // Reject the whole request before spending time on any model.
    for c in &configs {
        c.validate()?;
    }

    let dir = g.out.join("models");
    for (k, cfg) in configs.iter().enumerate() {
        let s = k % seeds;
        let hash = hash_parts(&[&content_hash(cfg), &data_hash]);
        let stem = format!("{exp}_n{}_s{s}", cfg.noise);
        eprintln!("training {stem} ({} epochs)", cfg.epochs);
        let model = cfg.init_model(&data)?;
        let outcome = train_from(model, cfg, &data, g.mode, |e, l| {
            if e == 1 || e % 10 == 0 {
                eprintln!("  epoch {e:>4}  mse {l:.6}");
            }
        })?;
        let meta = json!({ "experiment": exp, "training_noise": cfg.noise, "seed": cfg.seed, "epochs": cfg.epochs, "data": data_hash });
        let path = dir.join(format!("{stem}.atpm"));
        save_model(&path, &outcome.model, g.precision, &hash, meta)?;
        write_loss_csv(&dir.join(format!("{stem}_loss.csv")), &outcome.history, &hash)?;
        println!("{}  final mse {:.6}", path.display(), outcome.history.last().copied().unwrap_or(f64::NAN));
    }
    Ok(())
}

fn parse_preset(key: &str) -> Result<TuningConfig> {
    let bad = || Error::Validation(format!("preset `{key}` is not experiment:training_noise:signal_noise"));
    let parts: Vec<&str> = key.split(':').collect();
    let [e, t, s] = parts.as_slice() else { return Err(bad()) };
    let exp = Experiment::parse(e)?;
    let t: f64 = t.parse().map_err(|_| bad())?;
    let s: f64 = s.parse().map_err(|_| bad())?;
    let p = preset(exp, t, s).ok_or_else(|| Error::Validation(format!("no registered preset for {exp} with training noise {t} and signal noise {s}")))?;
    Ok(p.config())
}

fn parse_target(s: &str) -> Result<TuningTarget> {
    match s {
        "hidden" => Ok(TuningTarget::Hidden),
        "hidden_and_cell" | "hidden-and-cell" => Ok(TuningTarget::HiddenAndCell),
        other => Err(Error::Validation(format!("unknown tuning target `{other}`"))),
    }
}

fn tuning_config(a: &TuneArgs, file: &RunConfig) -> Result<TuningConfig> {
    let f = &file.tune;
    let mut cfg = match a.preset.as_deref().or(f.preset.as_deref()) {
        Some(key) => {
            let c = parse_preset(key)?;
            eprintln!("preset {key}: R={} C={} rate={} beta1={} beta2={}", c.horizon, c.cycles, c.adam.rate, c.adam.beta1, c.adam.beta2);
            c
        }
        None => match (a.horizon.or(f.horizon), a.cycles.or(f.cycles)) {
            (Some(h), Some(c)) => TuningConfig::new(h, c, AdamConfig::default()),
            _ => return Err(Error::Validation("tune needs --preset or both --horizon and --cycles".into())),
        },
    };
    cfg.horizon = a.horizon.or(f.horizon).unwrap_or(cfg.horizon);
    cfg.cycles = a.cycles.or(f.cycles).unwrap_or(cfg.cycles);
    cfg.adam.rate = a.rate.or(f.rate).unwrap_or(cfg.adam.rate);
    cfg.adam.beta1 = a.beta1.or(f.beta1).unwrap_or(cfg.adam.beta1);
    cfg.adam.beta2 = a.beta2.or(f.beta2).unwrap_or(cfg.adam.beta2);
    cfg.init_std = f.init_std.unwrap_or(cfg.init_std);
    if let Some(t) = a.target.as_deref() {
        cfg.target = parse_target(t)?;
    } else if let Some(t) = f.target {
        cfg.target = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_row(out: &mut String, values: &[f64]) {
    use std::fmt::Write as _;
    for v in values {
        write!(out, ",{v}").unwrap();
    }
}

fn record(sample: usize, step: usize, obs: &[f64], filtered: &[f64], norm: f64) -> String {
    let mut s = format!("{sample},{step}");
    fmt_row(&mut s, obs);
    fmt_row(&mut s, filtered);
    s.push_str(&format!(",{norm}\n"));
    s
}

fn header_row(width: usize) -> String {
    let mut s = String::from("sample,step");
    for prefix in ["observation", "filtered"] {
        for k in 0..width {
            s.push_str(&format!(",{prefix}_{k}"));
        }
    }
    s.push_str(",state_norm\n");
    s
}

fn tune(g: &Global, file: &RunConfig, a: TuneArgs) -> Result<()> {
    let f = &file.tune;
    let cfg = tuning_config(&a, file)?;
    let model_path = a.model.clone().or_else(|| f.model.clone()).ok_or_else(|| Error::Validation("tune needs --model".into()))?;
    let (model, _) = load_model(&model_path)?;
    let width = model.input_size();
    let mut sink: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };

    let data_path = if a.stdin { None } else { a.data.clone().or_else(|| f.data.clone()) };
    let signal = a.signal_noise.or(f.signal_noise);
    let source_hash = match &data_path {
        Some(p) => file_hash(p)?,
        None if a.stdin => "stdin".to_string(),
        None => return Err(Error::Validation("tune needs --data or --stdin".into())),
    };
    let hash = hash_parts(&[
        &file_hash(&model_path)?,
        &content_hash(&cfg),
        &source_hash,
        &format!("{signal:?}"),
        &g.seed.to_string(),
    ]);
    writeln!(sink, "# config_hash={hash}")?;
    sink.write_all(header_row(width).as_bytes())?;

    match data_path {
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
            let mut window = init_stream(&cfg, &model, &mut rng)?;
            let stdin = std::io::stdin();
            for (step, line) in stdin.lock().lines().enumerate() {
                let line = line?;
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let obs = line
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>().map_err(|_| Error::Validation(format!("input row {}: `{t}` is not a number", step + 1))))
                    .collect::<Result<Vec<f64>>>()?;
                let s = step_stream(&mut window, &model, &cfg, &obs)?;
                sink.write_all(record(0, window.steps_seen() - 1, &obs, &s.output, s.state.h.norm()).as_bytes())?;
                sink.flush()?;
            }
        }
        Some(p) => {
            let (mut data, _) = Dataset::load(&p)?;
            if data.channels() != width {
                return Err(Error::Validation(format!("model reads {width} channels, {} has {}", p.display(), data.channels())));
            }
            if let Some(r) = signal {
                data = data.with_noise(&NoiseSpec::gaussian(r, g.seed ^ TUNE_NOISE_STREAM))?;
            }
            let samples = a.samples.or(f.samples).unwrap_or(1).min(data.count());
            for i in 0..samples {
                let mut rng = ChaCha8Rng::seed_from_u64(g.seed.wrapping_add(i as u64));
                let mut window = init_stream(&cfg, &model, &mut rng)?;
                for (t, obs) in data.noisy(i).chunks(width).enumerate() {
                    let s = step_stream(&mut window, &model, &cfg, obs)?;
                    sink.write_all(record(i, t, obs, &s.output, s.state.h.norm()).as_bytes())?;
                }
            }
        }
    }
    sink.flush()?;
    Ok(())
}

fn bench(g: &Global, file: &RunConfig, a: BenchArgs) -> Result<()> {
    let f = &file.bench;
    let exp = experiment(a.experiment.as_deref(), f.experiment.as_deref())?;
    let mut plan = match (&f.plan, exp) {
        (Some(p), Some(e)) if p.experiment != e => {
            return Err(Error::Validation(format!("[bench.plan] is a {} plan but the experiment is {e}", p.experiment)))
        }
        (Some(p), _) => p.clone(),
        (None, Some(e)) => BenchPlan::desk(e),
        (None, None) => return Err(Error::Validation("bench needs --experiment".into())),
    };
    plan.seeds = a.seeds.or(f.seeds).unwrap_or(plan.seeds);
    plan.train_count = a.train_count.or(f.train_count).unwrap_or(plan.train_count);
    plan.test_count = a.test_count.or(f.test_count).unwrap_or(plan.test_count);
    plan.train.epochs = a.epochs.or(f.epochs).unwrap_or(plan.train.epochs);
    plan.exemplars = a.exemplars.or(f.exemplars).unwrap_or(plan.exemplars);
    plan.record_timing = a.timing || f.record_timing.unwrap_or(plan.record_timing);
    if let Some(v) = a.training_noise.or_else(|| f.training_noise.clone()) {
        plan.training_noise = v;
    }
    if let Some(v) = a.tuning_noise.or_else(|| f.tuning_noise.clone()) {
        plan.tuning_noise = v;
    }
    if let Some(v) = a.signal_noise.or_else(|| f.signal_noise.clone()) {
        plan.signal_noise = v;
    }
    // Only an explicitly requested seed replaces the plan's own.
    if let Some(s) = g.explicit_seed {
        plan.seed = s;
        plan.generator = plan.generator.clone().with_seed(s);
    }
    plan.validate()?;

    let hash = plan.config_hash();
    let cache = (!a.no_cache).then(|| Cache::new(g.out.join("cache")));
    eprintln!("bench {}: {} cells, {} seeds", plan.experiment, plan.expected_cells(), plan.seeds);
    let run = run_plan(&plan, cache.as_ref(), g.mode)?;
    eprintln!("cache: {} hits, {} misses", run.cache.hits, run.cache.misses);
    let bundles = exemplar_bundles(&plan, &run, &hash)?;
    let dir = g.out.join("bench").join(plan.experiment.name());
    let report = emit_report(&plan, &run.grid, &bundles, &dir, &hash)?;

    println!("{:<14} {:>9} {:>9} {:>11} {:>10}", "mode", "training", "signal", "rmse", "std");
    for c in &run.grid.cells {
        println!("{:<14} {:>9} {:>9} {:>11.6} {:>10.6}", c.mode.name(), c.training_noise, c.signal_noise, c.rmse_mean, c.rmse_std);
    }
    for (t, s) in plan.tuning_noise.iter().flat_map(|&t| plan.signal_noise.iter().map(move |&s| (t, s))) {
        if let (Some(r), Some(at)) = (run.grid.get(t, s, Mode::Regular), run.grid.get(t, s, Mode::ActiveTuning)) {
            if at.rmse_mean > 0.0 {
                println!("improvement {t}/{s}: {:.2}x", r.rmse_mean / at.rmse_mean);
            }
        }
    }
    println!("{}", report.csv.display());
    for b in &report.bundles {
        println!("{}", b.display());
    }
    Ok(())
}

fn inspect(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let magic = container::sniff(path)?.ok_or_else(|| Error::Format { path: path.to_path_buf(), reason: "unrecognized file type".into() })?;
    let kind = match magic {
        PARAMS_MAGIC => "parameters",
        DATASET_MAGIC => "dataset",
        BUNDLE_MAGIC => "trace bundle",
        _ => unreachable!("sniff only returns known magics"),
    };
    let (header, precision, payload) = container::read_raw(path, magic)?;
    println!("{}: {kind}, {} payload values ({precision:?})", path.display(), payload.len() / precision.bytes());
    println!("{}", serde_json::to_string_pretty(&header)?);
    Ok(())
}
