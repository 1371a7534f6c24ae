//! Command implementations. Every command is a pure function of
//! (config, seed, checkpoint bytes), so artifacts are reproducible.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use disco_core::config::DATA_DIR_ENV;
use disco_core::error::{DiscoError, Result};
use disco_core::evalviz::{
    direction_mean_variations, direction_similarity_matrix, encode_dataset,
    latent_scatter_export, read_png, save_similarity_csv, save_traversal_grid,
    similarity_heatmap, write_png,
};
use disco_core::gen_backend::GeneratorHandle;
use disco_core::metrics::{
    compute_report, read_factor_csv, read_image_list, MetricConfigEcho, MetricReport,
    MetricSelection,
};
use disco_core::rng::seed_stream;
use disco_core::trainer::checkpoint::load_checkpoint;
use disco_core::trainer::{fit, LogRecord, TrainState};
use disco_core::RunConfig;

fn data_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

fn load_state(checkpoint: &Path) -> Result<(GeneratorHandle, TrainState)> {
    let (manifest, _) = load_checkpoint(checkpoint)?;
    let gen = manifest.config.build_generator(data_dir().as_deref())?;
    let state = TrainState::from_checkpoint(checkpoint, &gen)?;
    Ok((gen, state))
}

pub fn cmd_train(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::from_path(config_path)?;
    if let Some(s) = seed {
        cfg.trainer.seed = Some(s);
    }
    let gen = cfg.build_generator(data_dir().as_deref())?;
    let resolved = cfg.resolve(&gen)?;
    fs::create_dir_all(out)?;
    let log_path = out.join("train_log.jsonl");
    let mut log = std::io::BufWriter::new(fs::File::create(&log_path)?);
    let checkpoint_dir = out.join("checkpoint");
    let state = fit(&resolved, &gen, Some(&checkpoint_dir), |step, report| {
        let line = serde_json::to_string(&LogRecord { step, report: *report })?;
        writeln!(log, "{line}")?;
        Ok(())
    })?;
    log.flush()?;
    let hash = disco_core::trainer::checkpoint::param_hash(&state.param_tensors());
    println!(
        "trained {} steps; checkpoint: {}; param_sha256: {hash}",
        state.step(),
        checkpoint_dir.display()
    );
    Ok(())
}

fn parse_metric_list(list: &str) -> Result<MetricSelection> {
    let mut sel = MetricSelection { mig: false, dci: false };
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "mig" => sel.mig = true,
            "dci" => sel.dci = true,
            other => {
                return Err(DiscoError::Config(format!(
                    "unknown metric `{other}` (expected mig or dci)"
                )))
            }
        }
    }
    if !sel.mig && !sel.dci {
        return Err(DiscoError::Config("metric list selects nothing".into()));
    }
    Ok(sel)
}

/// Codes + factors for evaluation: oracle backends sample and self-label;
/// external backends need the factor CSV / image list pair from the config.
fn eval_dataset(
    state: &TrainState,
    gen: &GeneratorHandle,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let cfg = state.config();
    if gen.factor_count().is_ok() {
        let mut rng = seed_stream(seed, "eval");
        return encode_dataset(&state.enc, gen, cfg.eval.samples, &mut rng);
    }
    let (csv, list) = match (&cfg.eval.factor_csv, &cfg.eval.image_list) {
        (Some(c), Some(l)) => (c.clone(), l.clone()),
        _ => {
            return Err(DiscoError::Metric(
                "external backend has no oracle factors; configure eval.factor_csv and eval.image_list".into(),
            ))
        }
    };
    let anchor = |p: PathBuf| -> PathBuf {
        if p.is_absolute() {
            p
        } else {
            match data_dir() {
                Some(base) => base.join(p),
                None => p,
            }
        }
    };
    let factors = read_factor_csv(&anchor(csv))?;
    let images = read_image_list(&anchor(list))?;
    if images.len() != factors.nrows() {
        return Err(DiscoError::Format(format!(
            "image list has {} entries but factor CSV has {} rows",
            images.len(),
            factors.nrows()
        )));
    }
    let (h, w, c) = state.enc.image_shape();
    let mut codes = Array2::zeros((images.len(), state.enc.out_dim()));
    for (i, path) in images.iter().enumerate() {
        let img = read_png(path, c)?;
        if img.dim() != (h, w, c) {
            return Err(DiscoError::Input(format!(
                "image {} has shape {:?}, encoder expects {:?}",
                path.display(),
                img.dim(),
                (h, w, c)
            )));
        }
        codes.row_mut(i).assign(&state.enc.encode(&img)?);
    }
    Ok((codes, factors))
}

fn eval_report(
    checkpoint: &Path,
    metrics: Option<&str>,
    seed: Option<u64>,
) -> Result<MetricReport> {
    let (gen, state) = load_state(checkpoint)?;
    let cfg = state.config().clone();
    let selection = match metrics {
        Some(list) => parse_metric_list(list)?,
        None => cfg.metric_selection(),
    };
    let seed = seed.unwrap_or(cfg.trainer.seed);
    let (codes, factors) = eval_dataset(&state, &gen, seed)?;
    let echo = MetricConfigEcho {
        bins: cfg.eval.bins,
        samples: codes.nrows(),
        seed,
        forest_trees: cfg.eval.forest_trees,
        forest_depth: cfg.eval.forest_depth,
    };
    compute_report(&codes, &factors, selection, echo)
}

pub fn cmd_eval(
    checkpoint: &Path,
    out: Option<&Path>,
    metrics: Option<&str>,
    seed: Option<u64>,
) -> Result<()> {
    let report = eval_report(checkpoint, metrics, seed)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = out {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, &json)?;
    }
    println!("{json}");
    Ok(())
}

fn parse_float_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| DiscoError::Config(format!("`{s}` is not a number")))
        })
        .collect()
}

pub fn cmd_traverse(
    checkpoint: &Path,
    out: &Path,
    direction: usize,
    steps: Option<&str>,
    rows: usize,
    seed: Option<u64>,
) -> Result<()> {
    if rows == 0 {
        return Err(DiscoError::Config("traversal grid needs >= 1 row".into()));
    }
    let (gen, state) = load_state(checkpoint)?;
    let cfg = state.config();
    let eps_steps = match steps {
        Some(text) => {
            let v = parse_float_list(text)?;
            if v.is_empty() {
                return Err(DiscoError::Config("empty step list".into()));
            }
            v
        }
        None => {
            let e = cfg.sampler.eps_max;
            (0..7).map(|i| -e + i as f64 * (2.0 * e / 6.0)).collect()
        }
    };
    let seed = seed.unwrap_or(cfg.trainer.seed);
    let mut rng = seed_stream(seed, "traverse");
    let z_rows = gen.sample_latent(rows, &mut rng)?;
    fs::create_dir_all(out)?;
    let path = out.join(format!("traversal_dir{direction}.png"));
    save_traversal_grid(&path, &gen, &state.nav, &z_rows, direction, &eps_steps)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_simmatrix(
    checkpoint: &Path,
    out: &Path,
    samples: usize,
    seed: Option<u64>,
) -> Result<()> {
    let (gen, state) = load_state(checkpoint)?;
    let cfg = state.config();
    let seed = seed.unwrap_or(cfg.trainer.seed);
    let mut rng = seed_stream(seed, "simmatrix");
    let means = direction_mean_variations(
        &state.enc,
        &gen,
        &state.nav,
        samples,
        cfg.sampler.eps_max,
        &mut rng,
    )?;
    let matrix = direction_similarity_matrix(&means)?;
    fs::create_dir_all(out)?;
    let csv_path = out.join("similarity.csv");
    let png_path = out.join("similarity.png");
    save_similarity_csv(&csv_path, &matrix)?;
    write_png(&png_path, &similarity_heatmap(&matrix))?;
    println!("wrote {} and {}", csv_path.display(), png_path.display());
    Ok(())
}

pub fn cmd_scatter(
    checkpoint: &Path,
    out: &Path,
    factors: &str,
    grid: usize,
    seed: Option<u64>,
) -> Result<()> {
    let triple = {
        let v = parse_float_list(factors)?;
        if v.len() != 3 || v.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
            return Err(DiscoError::Config(format!(
                "--factors expects three factor indices, got `{factors}`"
            )));
        }
        (v[0] as usize, v[1] as usize, v[2] as usize)
    };
    let (gen, state) = load_state(checkpoint)?;
    let cfg = state.config();
    let seed = seed.unwrap_or(cfg.trainer.seed);
    let mut rng = seed_stream(seed, "scatter");
    let mi_samples = cfg.eval.samples.min(2000);
    let csv = latent_scatter_export(
        &state.enc,
        &gen,
        triple,
        grid,
        cfg.eval.bins,
        mi_samples,
        &mut rng,
    )?;
    fs::create_dir_all(out)?;
    let path = out.join("scatter.csv");
    fs::write(&path, csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_sweep(config_path: &Path, out: &Path, seeds: &str) -> Result<()> {
    let seed_list: Vec<u64> = seeds
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u64>()
                .map_err(|_| DiscoError::Config(format!("`{s}` is not a seed")))
        })
        .collect::<Result<_>>()?;
    if seed_list.is_empty() {
        return Err(DiscoError::Config("sweep needs at least one seed".into()));
    }
    fs::create_dir_all(out)?;
    let mut rows: Vec<(u64, Option<f64>, Option<f64>)> = Vec::new();
    for &seed in &seed_list {
        let run_dir = out.join(format!("seed_{seed}"));
        cmd_train(config_path, &run_dir, Some(seed))?;
        let report = eval_report(&run_dir.join("checkpoint"), None, Some(seed))?;
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(run_dir.join("metrics.json"), json)?;
        rows.push((seed, report.mig, report.dci));
    }

    let mut text = String::from("seed,mig,dci\n");
    for (seed, mig, dci) in &rows {
        text.push_str(&format!("{seed},{},{}\n", opt_cell(*mig), opt_cell(*dci)));
    }
    let migs: Vec<f64> = rows.iter().filter_map(|r| r.1).collect();
    let dcis: Vec<f64> = rows.iter().filter_map(|r| r.2).collect();
    text.push_str(&format!("mean,{},{}\n", stat_cell(&migs, mean), stat_cell(&dcis, mean)));
    text.push_str(&format!(
        "variance,{},{}\n",
        stat_cell(&migs, variance),
        stat_cell(&dcis, variance)
    ));
    let path = out.join("sweep.csv");
    fs::write(&path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn stat_cell(values: &[f64], f: fn(&[f64]) -> f64) -> String {
    if values.is_empty() {
        String::new()
    } else {
        f(values).to_string()
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (0 for a single run).
fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}
