use std::fs;
use std::path::{Path, PathBuf};

use ssmp_core::align::{align_narrations, trailer_length_from_segments, AlignmentProblem};
use ssmp_core::corpus::{load_corpus, write_synthetic_corpus, Manifest, MovieTrailerPair};
use ssmp_core::decode::{decode_with, DecodeOptions, GeneratedTrailer, ModelPredictor, OraclePredictor, Predictor};
use ssmp_core::encoder::{init_params, load_checkpoint, save_checkpoint};
use ssmp_core::metrics::{EvaluationReport, MetricReport};
use ssmp_core::trainer::train_from;

use crate::config::{resolve_seed, RunConfig};
use crate::error::{flags, CliError, Result};
use crate::{AlignArgs, Command, Common, EvaluateArgs, GenerateArgs, SynthArgs, TrainArgs};

pub const SNAPSHOT: &str = "resolved-config.json";
const ORACLE_SHARPNESS: f64 = 10.0;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Align(a) => align(a),
    }
}

/// Loads the config file (if any), applies the shared flags and records the
/// command name.
fn base(name: &str, common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.command = name.to_string();
    cfg.seed = resolve_seed(common.seed, cfg.seed)?;
    if let Some(out) = &common.out {
        cfg.paths.out = Some(out.clone());
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| flags(format!("{flag} is required (flag or config paths)")))
}

fn existing<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    let p = required(path, flag)?;
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::MissingFile(p.to_path_buf()))
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Creates the output directory and writes the resolved config into it.
fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = required(&cfg.paths.out, "--out")?.to_path_buf();
    fs::create_dir_all(&out).map_err(|source| CliError::Write {
        path: out.clone(),
        source,
    })?;
    write(&out.join(SNAPSHOT), cfg.to_json())?;
    Ok(out)
}

fn load_pairs(cfg: &RunConfig) -> Result<(Manifest, Vec<MovieTrailerPair>)> {
    let path = existing(&cfg.paths.corpus, "--corpus")?;
    Ok(load_corpus(path)?)
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = base("synth", &a.common)?;
    set(&mut cfg.synth.movie_shots, a.movie_shots);
    set(&mut cfg.synth.trailer_shots, a.trailer_shots);
    set(&mut cfg.synth.dim, a.dim);
    set(&mut cfg.synth.noise, a.noise);
    cfg.pairs = Some(a.pairs.or(cfg.pairs).unwrap_or(200));
    cfg.seed = Some(cfg.seed.unwrap_or(0));
    cfg.synth.validate()?;
    let out = prepare_out(&cfg)?;
    let manifest = write_synthetic_corpus(&out, &cfg.synth, cfg.pairs.unwrap_or(0), cfg.seed.unwrap_or(0))?;
    println!("wrote {} pairs to {}", manifest.entries.len(), out.join("manifest.json").display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = base("train", &a.common)?;
    set(&mut cfg.paths.corpus, a.corpus.map(Some));
    set(&mut cfg.train.scheduler, a.scheduler);
    set(&mut cfg.train.loss, a.loss);
    set(&mut cfg.train.learning_rate, a.learning_rate);
    set(&mut cfg.train.epochs, a.epochs);
    set(&mut cfg.train.max_steps, a.max_steps.map(Some));
    set(&mut cfg.train.batch_size, a.batch_size);
    set(&mut cfg.encoder.dim, a.dim);
    set(&mut cfg.encoder.layers, a.layers);
    set(&mut cfg.encoder.heads, a.heads);
    set(&mut cfg.encoder.ffn_width, a.ffn_width);
    if let Some(s) = cfg.seed {
        cfg.train.seed = s;
        cfg.encoder.seed = s;
    }
    cfg.train.validate()?;
    cfg.encoder.validate()?;

    let (_, pairs) = load_pairs(&cfg)?;
    let width = pairs.first().map(|p| p.movie.cols()).unwrap_or(cfg.encoder.dim);
    if width != cfg.encoder.dim {
        return Err(flags(format!(
            "encoder dim {} does not match corpus feature width {width}",
            cfg.encoder.dim
        )));
    }
    let out = prepare_out(&cfg)?;

    let total = cfg.train.total_steps(pairs.len());
    let every = (total / 20).max(1);
    let quiet = a.quiet;
    let outcome = train_from(init_params(&cfg.encoder)?, &pairs, &cfg.train, |row| {
        if !quiet && (row.step % every == 0 || row.step == total) {
            eprintln!(
                "step {:>6}/{total}  loss {:>9.4}  acc {:.3}  t {:.3}  lr {:.2e}",
                row.step, row.loss, row.accuracy, row.mask_ratio, row.lr
            );
        }
    })?;

    save_checkpoint(out.join("model.ckpt"), &outcome.params)?;
    write(&out.join("curves.csv"), outcome.curves.to_csv())?;
    write(&out.join("schedule.csv"), outcome.schedule.to_csv())?;
    let reached = outcome.curves.steps_to_accuracy(0.95, 50);
    println!(
        "trained {} steps; tail accuracy {:.3}; accuracy 0.95 reached at {}",
        outcome.curves.len(),
        outcome.curves.tail_accuracy(100),
        reached.map_or("never".to_string(), |s| format!("step {s}")),
    );
    Ok(())
}

/// `--j`, then the music track's segment count, then the reference length.
fn trailer_len(cfg: &RunConfig, manifest: &Manifest, pair: &MovieTrailerPair) -> Result<usize> {
    if let Some(j) = cfg.decode.trailer_len {
        return Ok(j);
    }
    let boundaries = manifest.get(&pair.id).and_then(|e| e.music_boundaries.as_deref());
    match boundaries {
        Some(b) => Ok(trailer_length_from_segments(b)?),
        None => Ok(pair.trailer.rows()),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg = base("generate", &a.common)?;
    set(&mut cfg.paths.corpus, a.corpus.map(Some));
    set(&mut cfg.paths.checkpoint, a.checkpoint.map(Some));
    set(&mut cfg.decode.trailer_len, a.trailer_len.map(Some));
    set(&mut cfg.decode.mode, a.mode);
    set(&mut cfg.decode.k_max, a.k_max);
    cfg.decode.oracle |= a.oracle;
    cfg.seed = Some(cfg.seed.unwrap_or(0));

    match (cfg.decode.oracle, cfg.paths.checkpoint.is_some()) {
        (true, true) => return Err(flags("--oracle and --checkpoint are mutually exclusive")),
        (false, false) => return Err(flags("one of --checkpoint or --oracle is required")),
        _ => {}
    }
    if cfg.decode.trailer_len == Some(0) {
        return Err(flags("--j must be at least 1"));
    }
    if cfg.decode.k_max == 0 {
        return Err(flags("--k-max must be at least 1"));
    }
    let params = match &cfg.paths.checkpoint {
        Some(_) => Some(load_checkpoint(existing(&cfg.paths.checkpoint, "--checkpoint")?)?),
        None => None,
    };
    let (manifest, pairs) = load_pairs(&cfg)?;
    let options = DecodeOptions {
        mode: cfg.decode.mode,
        seed: cfg.seed.unwrap_or(0),
        k_max: cfg.decode.k_max,
    };
    let out = prepare_out(&cfg)?;

    for pair in &pairs {
        let j = trailer_len(&cfg, &manifest, pair)?;
        let predictor: Box<dyn Predictor> = match &params {
            Some(p) => Box::new(ModelPredictor::new(p, pair.movie.to_matrix())?),
            None => {
                if j != pair.truth.len() {
                    return Err(flags(format!(
                        "--oracle needs J equal to the reference length {} for `{}`, got {j}",
                        pair.truth.len(),
                        pair.id
                    )));
                }
                Box::new(OraclePredictor::new(
                    pair.truth.labels().to_vec(),
                    pair.movie.rows(),
                    ORACLE_SHARPNESS,
                )?)
            }
        };
        let result = decode_with(predictor.as_ref(), j, &options)?;
        let generated = GeneratedTrailer::new(pair.id.clone(), &options, &result);
        write(&out.join(format!("{}.json", pair.id)), generated.to_json()?)?;
    }
    println!("generated {} trailers in {}", pairs.len(), out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut cfg = base("evaluate", &a.common)?;
    set(&mut cfg.paths.corpus, a.corpus.map(Some));
    set(&mut cfg.paths.generated, a.generated.map(Some));
    set(&mut cfg.radius, a.radius);
    let generated_dir = existing(&cfg.paths.generated, "--generated")?.to_path_buf();
    let (_, pairs) = load_pairs(&cfg)?;
    let out = prepare_out(&cfg)?;

    let mut report = EvaluationReport { pairs: Vec::new() };
    for pair in &pairs {
        let path = generated_dir.join(format!("{}.json", pair.id));
        if !path.is_file() {
            return Err(CliError::MissingFile(path));
        }
        let text = fs::read_to_string(&path).map_err(ssmp_core::Error::from)?;
        let generated = GeneratedTrailer::from_json(&text)?;
        report.pairs.push(MetricReport::compute(
            pair.id.clone(),
            &generated.indices,
            pair.truth.labels(),
            cfg.radius,
        ));
    }
    write(&out.join("metrics.json"), report.to_json()?)?;
    write(&out.join("metrics.csv"), report.to_csv()?)?;
    let mean = report.mean()?;
    println!(
        "{} pairs at R={}: precision {:.4} recall {:.4} F1 {:.4} LD {:.3} AA {:.4}",
        report.pairs.len(),
        cfg.radius,
        mean.precision,
        mean.recall,
        mean.f1,
        report.mean_levenshtein(),
        mean.agreement
    );
    Ok(())
}

fn align(a: AlignArgs) -> Result<()> {
    let mut cfg = base("align", &a.common)?;
    set(&mut cfg.paths.problem, a.problem.map(Some));
    let path = existing(&cfg.paths.problem, "--problem")?;
    let text = fs::read_to_string(path).map_err(ssmp_core::Error::from)?;
    let problem = AlignmentProblem::from_json(&text)?;
    let out = prepare_out(&cfg)?;
    let alignment = align_narrations(&problem)?;
    write(&out.join("alignment.json"), alignment.to_json()?)?;
    let unassigned = alignment.unassigned(problem.narration_durations.len());
    println!(
        "placed {} narrations, score {:.6}, unassigned {:?}",
        alignment.assignments.len(),
        alignment.score,
        unassigned
    );
    Ok(())
}
