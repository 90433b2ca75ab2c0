use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use affectforge::augment::{make_quadruplet, Quadruplet, QuadrupletConfig};
use affectforge::corruption::{corrupt, sample_lambda, Intensity, NoiseSource, NoiseSpec};
use affectforge::experiment::{
    checkpoint_hash, explain_audio, featurize, gen_fixtures, run_ablation, run_grid, train_model, training_examples,
    ExperimentConfig, ExplainMethod, ExplainOptions, GridSpec, Manifest, ManifestRow, Split,
};
use affectforge::explain::MaskOrder;
use affectforge::features::{map_index, FeatureExtractor};
use affectforge::fusion::{evaluate, FusionModel};
use affectforge::signal::{read_wav, write_wav};
use affectforge::{Error, NoiseColor, Result, RngSeed};
use serde::Serialize;

use crate::{Cli, Command, ExplainArgs};

const CHECKPOINT_NAME: &str = "model.afrg";

struct Context {
    seed: RngSeed,
    config: ExperimentConfig,
    out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Param(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "clip".into())
}

fn noise_source(spec: &str) -> Result<NoiseSource> {
    match spec.parse::<NoiseColor>() {
        Ok(color) => Ok(NoiseSource::Color(color)),
        Err(_) if Path::new(spec).is_file() => Ok(NoiseSource::Clip {
            name: stem(Path::new(spec)),
            audio: read_wav(spec)?,
        }),
        Err(_) => Err(Error::Param(format!("'{spec}' is neither a noise color nor a WAV file"))),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(Error::Param("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| Error::Param(e.to_string()))?;
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            ExperimentConfig::from_kv(&text)?
        }
        None => ExperimentConfig::default(),
    };
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::Io { path: cli.out.clone(), source: e })?;
    let ctx = Context { seed: RngSeed(cli.seed), config, out: cli.out };

    match cli.command {
        Command::SynthNoise { color, seconds, sample_rate } => {
            let color: NoiseColor = color.parse()?;
            if !(seconds > 0.0 && seconds.is_finite()) {
                return Err(Error::Param("--seconds must be positive".into()));
            }
            let len = (seconds * sample_rate as f64).round() as usize;
            let w = color.generate(len, sample_rate, ctx.seed)?;
            write_wav(&w, ctx.path(&format!("noise_{color}.wav")))
        }
        Command::Inject { input, noise, alpha, lambda } => {
            let clean = read_wav(&input)?;
            let source = noise_source(&noise)?;
            let name = format!("{}_{}.wav", stem(&input), source.label());
            let (noisy, report) = match alpha {
                Some(a) => {
                    let spec = NoiseSpec { source, intensity: Intensity::discrete(a)?, seed: ctx.seed };
                    corrupt(&clean, &spec)?
                }
                None => {
                    let l = lambda.unwrap_or_else(|| sample_lambda(ctx.seed.derive(1)));
                    let spec = NoiseSpec { source, intensity: Intensity::stochastic(l)?, seed: ctx.seed };
                    corrupt(&clean, &spec)?
                }
            };
            write_wav(&noisy, ctx.path(&name))?;
            ctx.write_json("inject.json", &report)?;
            Ok(())
        }
        Command::Augment { input, label, manifest, noise, semitones } => {
            let cfg = QuadrupletConfig { semitones, ..QuadrupletConfig::default() };
            let source = noise_source(&noise)?;
            match (input, label, manifest) {
                (Some(input), Some(label), _) => {
                    let w = read_wav(&input)?;
                    let q = make_quadruplet(&w, label.parse()?, &source, &cfg, ctx.seed)?;
                    write_quadruplet(&ctx, &stem(&input), &q).map(|_| ())
                }
                (None, _, Some(manifest)) => {
                    let manifest = Manifest::load(&manifest)?;
                    manifest.check_files()?;
                    let mut rows = Vec::with_capacity(manifest.rows.len() * 4);
                    for (i, row) in manifest.rows.iter().enumerate() {
                        let w = read_wav(manifest.resolve(row))?;
                        let q = make_quadruplet(&w, row.label, &source, &cfg, ctx.seed.derive(i as u64))?;
                        for name in write_quadruplet(&ctx, &format!("{i:05}_{}", stem(&row.path)), &q)? {
                            rows.push(ManifestRow { path: name.into(), label: row.label, split: row.split });
                        }
                    }
                    let augmented = Manifest { rows, base_dir: ctx.out.clone() };
                    ctx.write("manifest.csv", &augmented.to_csv()).map(|_| ())
                }
                _ => Err(Error::Param("augment needs --input with --label, or --manifest".into())),
            }
        }
        Command::Features { input, manifest } => match (input, manifest) {
            (Some(input), _) => {
                let w = read_wav(&input)?;
                let cfg = ctx.config.model.features;
                let fv = FeatureExtractor::new(cfg)?.extract(&w)?;
                let mut csv = String::from("index,kind,frame,coeff,value\n");
                for (i, v) in fv.values.iter().enumerate() {
                    let k = map_index(i, &cfg)?;
                    let coeff = k.coeff().map(|c| c.to_string()).unwrap_or_default();
                    writeln!(csv, "{i},{},{},{coeff},{v}", k.kind_name(), k.frame()).expect("string write");
                }
                ctx.write(&format!("{}_features.csv", stem(&input)), &csv)?;
                Ok(())
            }
            (None, Some(manifest)) => {
                let csv = manifest_features(&ctx, &Manifest::load(&manifest)?)?;
                ctx.write("features.csv", &csv)?;
                Ok(())
            }
            (None, None) => Err(Error::Param("features needs --input or --manifest".into())),
        },
        Command::GenFixtures { per_class } => gen_fixtures(&ctx.out, per_class, ctx.seed).map(|_| ()),
        Command::Train { data } => {
            let manifest = Manifest::load(&data.manifest)?;
            let model = train_and_save(&ctx, &manifest)?;
            let test = manifest.load_split(Split::Test)?;
            if !test.is_empty() {
                let metrics = evaluate(&model, &featurize(&test, &model.config().features)?)?;
                ctx.write_json("metrics.json", &metrics)?;
            }
            Ok(())
        }
        Command::Eval { data, checkpoint } => {
            let manifest = Manifest::load(&data.manifest)?;
            let model = FusionModel::load(&checkpoint)?;
            let test = manifest.load_split(Split::Test)?;
            let metrics = evaluate(&model, &featurize(&test, &model.config().features)?)?;
            ctx.write_json("metrics.json", &metrics)?;
            Ok(())
        }
        Command::Grid { data, checkpoint, noises, intensities, repeats } => {
            let started = unix_now();
            let manifest = Manifest::load(&data.manifest)?;
            let grid = GridSpec {
                noises: noises.iter().map(|n| n.parse()).collect::<Result<_>>()?,
                intensities,
                seeds: (0..repeats as u64).map(|r| ctx.seed.derive(0x6D1D).derive(r).0).collect(),
            };
            grid.validate()?;
            let model = match checkpoint {
                Some(path) => FusionModel::load(path)?,
                None => train_and_save(&ctx, &manifest)?,
            };
            let test = manifest.load_split(Split::Test)?;
            let report = run_grid(&model, &test, &grid)?;
            ctx.write("grid.csv", &report.to_csv())?;
            ctx.write_json(
                "grid.json",
                &RunReport {
                    command: "grid",
                    seed: ctx.seed.0,
                    config: &ctx.config,
                    grid: Some(&grid),
                    checkpoint_sha256: checkpoint_hash(&model.to_checkpoint()),
                    started_unix: started,
                    finished_unix: unix_now(),
                    results: &report,
                },
            )?;
            Ok(())
        }
        Command::Ablate { data, repeats } => {
            let started = unix_now();
            let manifest = Manifest::load(&data.manifest)?;
            let train = manifest.load_split(Split::Train)?;
            let test = manifest.load_split(Split::Test)?;
            let examples = training_examples(&train, &ctx.config, ctx.seed.derive(1))?;
            let report = run_ablation(&examples, &test, &ctx.config, ctx.seed, repeats)?;
            ctx.write("ablation.csv", &report.to_csv())?;
            ctx.write_json(
                "ablation.json",
                &RunReport {
                    command: "ablate",
                    seed: ctx.seed.0,
                    config: &ctx.config,
                    grid: None,
                    checkpoint_sha256: String::new(),
                    started_unix: started,
                    finished_unix: unix_now(),
                    results: &report,
                },
            )?;
            Ok(())
        }
        Command::Explain(args) => explain(&ctx, args),
    }
}

#[derive(Serialize)]
struct RunReport<'a, T: Serialize> {
    command: &'static str,
    seed: u64,
    config: &'a ExperimentConfig,
    grid: Option<&'a GridSpec>,
    checkpoint_sha256: String,
    started_unix: u64,
    finished_unix: u64,
    results: &'a T,
}

fn train_and_save(ctx: &Context, manifest: &Manifest) -> Result<FusionModel> {
    let train = manifest.load_split(Split::Train)?;
    let test = manifest.load_split(Split::Test)?;
    let examples = training_examples(&train, &ctx.config, ctx.seed.derive(1))?;
    let validation = featurize(&test, &ctx.config.model.features)?;
    let validation = (!validation.is_empty()).then_some(validation.as_slice());
    let (model, history) = train_model(&examples, validation, &ctx.config, ctx.seed)?;
    model.save(ctx.path(CHECKPOINT_NAME))?;
    ctx.write_json("history.json", &history)?;
    Ok(model)
}

/// Writes the four members as `<base>_<member>.wav`; returns the file names.
fn write_quadruplet(ctx: &Context, base: &str, q: &Quadruplet) -> Result<Vec<String>> {
    let mut names = Vec::with_capacity(4);
    for (suffix, member) in ["original", "noisy", "pitched", "pitched_noisy"].iter().zip(q.members()) {
        let name = format!("{base}_{suffix}.wav");
        write_wav(member, ctx.path(&name))?;
        names.push(name);
    }
    Ok(names)
}

/// Wide feature table: a `#` line with the extraction settings, a header of
/// column names, then `path,label,v0..v(L-1)` per manifest row.
fn manifest_features(ctx: &Context, manifest: &Manifest) -> Result<String> {
    manifest.check_files()?;
    let cfg = ctx.config.model.features;
    let extractor = FeatureExtractor::new(cfg)?;
    let mut csv = format!(
        "# frame_length={} hop={} num_mel={} num_mfcc={} target_frames={} sample_rate={}\npath,label",
        cfg.frame_length, cfg.hop, cfg.num_mel, cfg.num_mfcc, cfg.target_frames, cfg.sample_rate
    );
    for i in 0..cfg.vector_len() {
        write!(csv, ",{}", map_index(i, &cfg)?).expect("string write");
    }
    csv.push('\n');
    for row in &manifest.rows {
        let fv = extractor.extract(&read_wav(manifest.resolve(row))?)?;
        write!(csv, "{},{}", row.path.display(), row.label).expect("string write");
        for v in &fv.values {
            write!(csv, ",{v}").expect("string write");
        }
        csv.push('\n');
    }
    Ok(csv)
}

fn explain(ctx: &Context, args: ExplainArgs) -> Result<()> {
    let method: ExplainMethod = args.method.parse()?;
    let model = FusionModel::load(&args.checkpoint)?;
    let audio = read_wav(&args.audio)?;
    let options = ExplainOptions {
        target: args.target.as_deref().map(str::parse).transpose()?,
        exact: args.exact,
        segments: args.segments,
        permutations: args.permutations,
        window: args.window,
        stride: args.stride,
        fraction: args.fraction,
        order: if args.bottom { MaskOrder::Bottom } else { MaskOrder::Top },
        seed: ctx.seed,
        ..ExplainOptions::default()
    };
    let output = explain_audio(&model, &audio, method, &options)?;
    for (name, contents) in &output.files {
        ctx.write(name, contents)?;
    }
    Ok(())
}
