use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use touchleak::emsim::trace_io::{read_trace, write_trace};
use touchleak::harness::attack::{attack_trace, fitted_mask, scripted_trace, templates};
use touchleak::harness::dataset::DatasetManifest;
use touchleak::harness::report::confusion_csv;
use touchleak::harness::run::{provenance, DATASET_DIR, MODEL_FILE};
use touchleak::harness::{
    attack_character, emit_report, run_pipeline, run_training, split_dataset,
    sweep_distance, synth_dataset, Environment, ExperimentConfig, Report,
};
use touchleak::posnet::{evaluate, load_model, Parameters};
use touchleak::{Error, Result};

#[derive(Parser)]
#[command(name = "touchleak", version, about = "Touchscreen EM leakage simulator and attack pipeline")]
struct Cli {
    /// Experiment config (TOML). Defaults to the desk-scale preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Start from the 32x15, 480k-sample preset instead of the desk one.
    #[arg(long, global = true, conflicts_with = "config")]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the effective config to OUT/config.toml.
    InitConfig,
    /// Synthesize per-zone feature batches and a manifest.
    Synth,
    /// Add a stratified train/test split to the manifest.
    Split {
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Train the zone classifier on the split dataset.
    Train,
    /// Evaluate the saved model on the test split.
    Eval,
    /// Reconstruct handwriting from a recorded trace or scripted characters.
    Attack {
        /// EMT1 trace to attack.
        #[arg(long, conflicts_with = "text")]
        trace: Option<PathBuf>,
        /// Characters to script, synthesize and attack.
        #[arg(long)]
        text: Option<String>,
        /// Recording conditions for scripted characters.
        #[arg(long, value_enum)]
        environment: Option<Env>,
        /// Also save each scripted trace as EMT1.
        #[arg(long)]
        save_traces: bool,
    },
    /// Re-render OUT/report.json as text and CSVs.
    Report,
    /// Mean Jaccard over the configured probe distances.
    SweepDistance,
    /// Run every stage in order.
    Run,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Env {
    Private,
    Public,
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if cli.full_scale => ExperimentConfig::full_scale(),
        None => ExperimentConfig::desk(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_report(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let path = out.join("report.json");
    if path.exists() {
        return Report::from_json(&fs::read_to_string(path)?);
    }
    Ok(Report {
        provenance: provenance(cfg)?,
        config: cfg.to_toml()?,
        raster: Some(cfg.raster),
        ..Report::default()
    })
}

fn manifest_path(out: &Path) -> PathBuf {
    out.join(DATASET_DIR).join("manifest.json")
}

fn load_params(cfg: &ExperimentConfig, out: &Path) -> Result<Parameters<f32>> {
    load_model(&out.join(MODEL_FILE), Some(&cfg.model))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out)?;
    match cli.command {
        Command::InitConfig => {
            cfg.save(&out.join("config.toml"))?;
            println!("wrote {}", out.join("config.toml").display());
        }
        Command::Synth => {
            let t = Instant::now();
            let m = synth_dataset(&cfg, &out.join(DATASET_DIR))?;
            println!(
                "{} vectors over {} zones in {:.1} s, manifest {}",
                m.total_samples(),
                m.zones.len(),
                t.elapsed().as_secs_f64(),
                m.digest()?
            );
        }
        Command::Split { ratio } => {
            let path = manifest_path(&out);
            let m = DatasetManifest::read(&path)?;
            let m = split_dataset(&m, ratio.unwrap_or(cfg.dataset.split_ratio), cfg.seed)?;
            m.write(&path)?;
            let s = m.split.as_ref().expect("split just added");
            let n_train: usize = s.train.iter().map(Vec::len).sum();
            let n_test: usize = s.test.iter().map(Vec::len).sum();
            println!("{n_train} train / {n_test} test");
        }
        Command::Train => {
            let m = DatasetManifest::read(&manifest_path(&out))?;
            let t = Instant::now();
            let trained = run_training(&cfg, &m, &out.join(DATASET_DIR), &out, |e| {
                println!(
                    "epoch {:>3}  loss {:.4}  train {:.4}  test {:.4}",
                    e.epoch,
                    e.loss,
                    e.train_acc,
                    e.test_acc.unwrap_or(f64::NAN)
                )
            })?;
            println!("test accuracy {:.4}", trained.summary.test_accuracy);
            let mut report = load_report(&cfg, &out)?;
            report.provenance.manifest_digest = Some(m.digest()?);
            report.provenance.checkpoint_digest = Some(trained.checkpoint_digest);
            report.training = Some(trained.summary);
            report.runtime_s.insert("train".into(), t.elapsed().as_secs_f64());
            emit_report(&report, &out)?;
        }
        Command::Eval => {
            let m = DatasetManifest::read(&manifest_path(&out))?;
            let params = load_params(&cfg, &out)?;
            let (_, test) = touchleak::harness::load_split(&m, &out.join(DATASET_DIR))?;
            let e = evaluate(&params, &test, cfg.train.exec)?;
            fs::write(out.join("confusion.csv"), confusion_csv(&e.confusion))?;
            println!("test accuracy {:.4} over {} vectors", e.accuracy, test.len());
        }
        Command::Attack {
            trace,
            text,
            environment,
            save_traces,
        } => {
            let params = load_params(&cfg, &out)?;
            let dir = out.join("attack");
            fs::create_dir_all(&dir)?;
            let tpl = templates(&cfg)?;
            if let Some(path) = trace {
                let tr = read_trace(&path)?;
                let res = attack_trace(&cfg, &params, &tr, &tpl)?;
                fs::write(dir.join("trajectory.txt"), res.trajectory.to_text())?;
                fs::write(dir.join("mask.pbm"), res.mask.to_pbm())?;
                match &res.note {
                    Some(n) => println!("{n}"),
                    None => {
                        let top: Vec<String> = res.ranking.iter().take(3).map(|(c, s)| format!("{c}:{s:.3}")).collect();
                        println!("{} strokes, best matches {}", res.trajectory.strokes.len(), top.join(" "));
                    }
                }
                return Ok(());
            }
            let mut cfg = cfg;
            if let Some(env) = environment {
                cfg.attack.noise = match env {
                    Env::Private => Environment::Private,
                    Env::Public => Environment::Public,
                }
                .noise();
            }
            let sim = cfg.simulator()?;
            let chars: Vec<char> = text.unwrap_or_else(|| cfg.attack.characters.clone()).chars().collect();
            let mut results = Vec::new();
            for (i, &c) in chars.iter().enumerate() {
                let r = attack_character(&cfg, &sim, &params, &tpl, c, &cfg.attack.noise, 0)?;
                let stem = format!("{i:02}_u{:04x}", c as u32);
                fs::write(dir.join(format!("{stem}.txt")), r.reconstruction.to_text())?;
                fs::write(dir.join(format!("{stem}.pbm")), fitted_mask(&cfg, &r.reconstruction)?.to_pbm())?;
                if save_traces {
                    let (_, tr) = scripted_trace(&cfg, &sim, c, &cfg.attack.noise, 0)?;
                    write_trace(&dir.join(format!("{stem}.emt")), &tr)?;
                }
                let top: Vec<String> = r.top_matches.iter().take(3).map(|(m, s)| format!("{m}:{s:.3}")).collect();
                println!(
                    "{c:?}  jaccard {:.4}  top3 [{}]  {}",
                    r.jaccard,
                    top.join(" "),
                    r.note.as_deref().unwrap_or(if r.top3_hit { "hit" } else { "miss" })
                );
                results.push(r);
            }
            let mut report = load_report(&cfg, &out)?;
            report.characters = results;
            report.summarize_characters();
            if let (Some(j), Some(r)) = (report.mean_jaccard, report.top3_rate) {
                println!("mean jaccard {j:.4}, top-3 rate {r:.3}");
            }
            emit_report(&report, &out)?;
        }
        Command::Report => {
            let path = out.join("report.json");
            if !path.exists() {
                return Err(Error::InvalidInput(format!("{} not found; run a stage first", path.display())));
            }
            let report = Report::from_json(&fs::read_to_string(&path)?)?;
            emit_report(&report, &out)?;
            print!("{}", report.to_text());
        }
        Command::SweepDistance => {
            let params = load_params(&cfg, &out)?;
            let t = Instant::now();
            let points = sweep_distance(&cfg, &params)?;
            for p in &points {
                println!(
                    "{:>5.1} cm  mean jaccard {:.4}  top-3 rate {:.3}",
                    p.distance_cm, p.mean_jaccard, p.top3_rate
                );
            }
            let mut report = load_report(&cfg, &out)?;
            report.distance_sweep = points;
            report.runtime_s.insert("sweep".into(), t.elapsed().as_secs_f64());
            emit_report(&report, &out)?;
        }
        Command::Run => {
            let report = run_pipeline(&cfg, &out, |m| println!("{m}"))?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
