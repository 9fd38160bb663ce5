use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use esnevo::classify::ClassifierKind;
use esnevo::mopso::Mode;
use esnevo::pipeline::front::write_json;
use esnevo::pipeline::{stages, DatasetSpec, RunConfig};
use esnevo::rae::Pooling;
use esnevo::{Error, Result};

#[derive(Parser)]
#[command(name = "esnevo", version, about = "Evolved echo state network autoencoders for time-series classification")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Opts {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Preset name (coffee, ecg200, ecgfivedays, breast_cancer) or data file.
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// Directory holding the preset dataset files.
    #[arg(long, global = true, env = "ESNEVO_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    /// Objectives: `bi` (RMSE, connectivity) or `tri` (adds reservoir size).
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Independent runs, each with its own derived seed.
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Add Gaussian noise at this signal-to-noise ratio.
    #[arg(long, global = true, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// State pooling over time: `last`, `mean` or `concat`.
    #[arg(long, global = true)]
    pooling: Option<Pooling>,
    /// `svm` (linear, one-vs-all) or `ridge`.
    #[arg(long, global = true)]
    classifier: Option<ClassifierKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Both optimisation levels, classification and statistics over runs.
    Run,
    /// Architecture search only; writes front.json and trace.jsonl.
    EvolveArch,
    /// Weight refinement of every member of a stored front.
    EvolveWeights {
        /// Defaults to <out>/front.json.
        #[arg(long)]
        front: Option<PathBuf>,
    },
    /// Reservoir features of one stored network.
    Extract {
        /// Defaults to <out>/networks.json.
        #[arg(long)]
        networks: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        network: usize,
    },
    /// Classify stored features.
    Classify {
        /// Defaults to <out>/features.json.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Raw-input and unevolved-reservoir accuracies.
    Baseline,
    /// Evolved and baseline accuracies at several noise levels.
    NoiseSweep {
        /// SNR levels in dB; `clean` for no noise.
        #[arg(long, value_delimiter = ',', default_value = "clean,50,10")]
        levels: Vec<String>,
    },
    /// Plot-ready CSV tables from the artifacts of a previous command.
    ExportPlots {
        /// Directory with the artifacts; defaults to <out>.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

impl Opts {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.dataset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(d)) => RunConfig::new(DatasetSpec::resolve(d, &self.data_dir)?),
            (None, None) => return Err(Error::Config("either --config or --dataset is required".into())),
        };
        if let (Some(_), Some(d)) = (&self.config, &self.dataset) {
            cfg.dataset = DatasetSpec::resolve(d, &self.data_dir)?;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(r) = self.runs {
            cfg.num_runs = r;
        }
        if self.snr_db.is_some() {
            cfg.noise_snr_db = self.snr_db;
        }
        if let Some(p) = self.pooling {
            cfg.pooling = p;
        }
        if let Some(k) = self.classifier {
            cfg.classifier.kind = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn path_or(&self, given: &Option<PathBuf>, name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out.join(name))
    }
}

fn parse_level(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("clean") {
        return Ok(None);
    }
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Config(format!("noise level `{s}` is neither `clean` nor a finite number"))),
    }
}

fn fmt_ca(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn execute(cli: &Cli) -> Result<()> {
    let o = &cli.opts;
    let out: &Path = &o.out;
    match &cli.command {
        Command::Run => {
            let cfg = o.config()?;
            let report = esnevo::pipeline::run_and_write(&cfg, out)?;
            for r in &report.runs {
                match &r.error {
                    None => println!("run {}: best CA {} over {} solutions", r.run, fmt_ca(r.best_ca), r.solutions.len()),
                    Some(e) => println!("run {}: failed: {e}", r.run),
                }
            }
            if let Some(s) = report.summary {
                println!(
                    "{}: CA {:.4} ± {:.4} (min {:.4}, max {:.4}, {} runs)",
                    report.dataset.name, s.mean, s.std, s.min, s.max, s.count
                );
            }
            if report.summary.is_none() {
                return Err(Error::Numerical("no run completed".into()));
            }
        }
        Command::EvolveArch => {
            let front = stages::evolve_arch(&o.config()?, out)?;
            println!("front with {} solutions written to {}", front.entries.len(), out.display());
        }
        Command::EvolveWeights { front } => {
            let path = o.path_or(front, stages::FRONT_JSON);
            let f = stages::evolve_weights(&o.config()?, &path, out)?;
            for (j, e) in f.entries.iter().enumerate() {
                let post = e.objectives_post.as_deref().map_or(f64::NAN, |p| p[0]);
                println!("solution {j}: RMSE {:.6e} -> {:.6e}", e.objectives_pre[0], post);
            }
        }
        Command::Extract { networks, network } => {
            let path = o.path_or(networks, stages::NETWORKS);
            let f = stages::extract(&o.config()?, &path, *network, out)?;
            println!(
                "{} train / {} test feature vectors of dimension {}",
                f.train.len(),
                f.test.len(),
                f.train.dim()
            );
        }
        Command::Classify { features } => {
            let path = o.path_or(features, stages::FEATURES);
            let r = stages::classify(&o.config()?, &path, out)?;
            println!("{}: CA {:.4} ({})", r.dataset, r.ca, r.classifier);
        }
        Command::Baseline => {
            let cfg = o.config()?;
            let r = esnevo::pipeline::run_baselines(&cfg)?;
            write_json(&out.join("baseline.json"), &r)?;
            println!("raw: CA {:.4}", r.raw);
            for (name, rows) in [("basic", &r.basic), ("ml", &r.ml)] {
                for p in rows {
                    println!("{name} ({}): CA {:.4} ± {:.4}", p.pooling, p.summary.mean, p.summary.std);
                }
            }
        }
        Command::NoiseSweep { levels } => {
            let cfg = o.config()?;
            let levels = levels.iter().map(|s| parse_level(s)).collect::<Result<Vec<_>>>()?;
            let r = esnevo::pipeline::noise_sweep(&cfg, &levels, Some(out))?;
            write_json(&out.join("noise_sweep.json"), &r)?;
            for l in &r.levels {
                let name = l.snr_db.map_or_else(|| "clean".into(), |db| format!("{db} dB"));
                let evolved = l.evolved.first().map(|p| p.summary.mean);
                let ml = l.baselines.ml.first().map(|p| p.summary.mean);
                println!("{name}: evolved {} ml {} raw {:.4}", fmt_ca(evolved), fmt_ca(ml), l.baselines.raw);
            }
        }
        Command::ExportPlots { from } => {
            let dir = from.clone().unwrap_or_else(|| out.to_path_buf());
            let target = out.join("plots");
            for name in stages::export_plots(&dir, &target)? {
                println!("{}", target.join(name).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
