use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use regionrec::explain::lime_explain;
use regionrec::ingest::{
    anchor_centroids, filter_tourists, generate_synthetic, load_regions, load_reviews, synthesize_reviews, RegionData,
    SyntheticSpec,
};
use regionrec::interest::{build_dataset, build_profiles, examples_to_csv};
use regionrec::recsys::{load_bundle, save_bundle, sweep, sweep_to_csv, sweep_to_text, train_level};
use regionrec::{EngineConfig, Level};
use regionrec_server::{AppState, Engine, ServerConfig, CITY_MODEL_FILE, NEIGHBORHOOD_MODEL_FILE};

#[derive(Parser)]
#[command(name = "regionrec", version, about = "Explainable city and neighborhood recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate raw region and review files, drop tourists, write a data directory.
    Ingest {
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        reviews: PathBuf,
        #[arg(long, default_value_t = 6)]
        min_cbsas: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic data directory with planted user archetypes.
    Synth {
        /// JSON synthetic spec; omitted fields take their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Draw reviews over this region table instead of generating regions.
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the labeled train/test feature tables for one level.
    Dataset {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        level: LevelArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train model bundles into a models directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "both")]
        level: LevelArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the model with the popularity and ICF baselines over a range of k.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "both")]
        level: LevelArg,
        /// A single k, a range `2..5` (inclusive) or a list `2,3,5`.
        #[arg(long = "ks", default_value = "2..5")]
        ks: String,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Explain one feature vector with a trained bundle; prints JSON.
    Explain {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated feature values in the bundle's feature order.
        #[arg(long, allow_hyphen_values = true)]
        instance: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "REGIONREC_DATA")]
        data: PathBuf,
        #[arg(long, env = "REGIONREC_MODELS")]
        models: PathBuf,
        #[arg(long, env = "REGIONREC_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "REGIONREC_HOST", default_value = "127.0.0.1")]
        host: String,
        /// Allowed browser origin; repeat for several. Default: any.
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Data directory with regions.csv and reviews.csv.
    #[arg(long)]
    data: PathBuf,
    /// JSON engine configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_cbsas: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    City,
    Neighborhood,
    Both,
}

impl LevelArg {
    fn levels(self) -> Vec<Level> {
        match self {
            LevelArg::City => vec![Level::City],
            LevelArg::Neighborhood => vec![Level::Neighborhood],
            LevelArg::Both => vec![Level::City, Level::Neighborhood],
        }
    }

    fn single(self) -> Result<Level> {
        match self {
            LevelArg::City => Ok(Level::City),
            LevelArg::Neighborhood => Ok(Level::Neighborhood),
            LevelArg::Both => bail!("this command needs --level city or --level neighborhood"),
        }
    }
}

fn read_config(path: Option<&Path>) -> Result<EngineConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(EngineConfig::default()),
    }
}

impl Common {
    fn config(&self) -> Result<EngineConfig> {
        let mut cfg = read_config(self.config.as_deref())?;
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
            cfg.gbdt.rng_seed = seed;
            cfg.lime.rng_seed = seed;
        }
        if let Some(min) = self.min_cbsas {
            cfg.min_cbsas_per_user = min;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn data(&self, cfg: &EngineConfig) -> Result<RegionData> {
        RegionData::load_dir(&self.data, cfg.include_employment)
            .with_context(|| format!("loading data directory {}", self.data.display()))
    }
}

/// Parses `2`, `2..5` (inclusive) or `2,3,5`.
fn parse_ks(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    let ks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().trim_start_matches('=').parse()?);
        if a > b {
            bail!("empty k range `{s}`");
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        bail!("k values must be positive: `{s}`");
    }
    Ok(ks)
}

fn parse_instance(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad feature value `{x}`")))
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn model_file(level: Level) -> &'static str {
    match level {
        Level::City => CITY_MODEL_FILE,
        Level::Neighborhood => NEIGHBORHOOD_MODEL_FILE,
    }
}

#[derive(Serialize)]
struct GroundTruth<'a> {
    user_archetypes: &'a std::collections::BTreeMap<String, usize>,
    city_clusters: &'a std::collections::BTreeMap<String, usize>,
    neighborhood_clusters: &'a std::collections::BTreeMap<String, usize>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            regions,
            reviews,
            min_cbsas,
            out,
        } => {
            let (table, registry) = load_regions(&regions, false)?;
            let log = load_reviews(&reviews, &table)?;
            let kept = filter_tourists(&log, min_cbsas);
            tracing::info!(
                users = log.user_count(),
                kept = kept.user_count(),
                events = kept.len(),
                "filtered tourists"
            );
            for path in RegionData::new(table, registry, kept).write_dir(&out)? {
                println!("{}", path.display());
            }
        }
        Command::Synth { spec, regions, out } => {
            let spec: SyntheticSpec = match spec {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => SyntheticSpec::default(),
            };
            if let Some(path) = regions {
                let (table, registry) = load_regions(&path, false)?;
                let centroids = anchor_centroids(&table, spec.n_archetypes)?;
                let (log, archetypes) = synthesize_reviews(&table, &centroids, &spec)?;
                let mut written = RegionData::new(table, registry, log).write_dir(&out)?;
                let truth = out.join("ground_truth.json");
                write_json(&truth, &serde_json::json!({ "user_archetypes": archetypes }))?;
                written.push(truth);
                for path in written {
                    println!("{}", path.display());
                }
                return Ok(());
            }
            let s = generate_synthetic(&spec)?;
            let data = RegionData::new(s.table.clone(), s.registry.clone(), s.log.clone());
            let mut written = data.write_dir(&out)?;
            let truth = out.join("ground_truth.json");
            write_json(
                &truth,
                &GroundTruth {
                    user_archetypes: &s.user_archetypes,
                    city_clusters: &s.city_clusters,
                    neighborhood_clusters: &s.neighborhood_clusters,
                },
            )?;
            written.push(truth);
            for path in written {
                println!("{}", path.display());
            }
        }
        Command::Dataset { common, level, out } => {
            let cfg = common.config()?;
            let data = common.data(&cfg)?;
            let level = level.single()?;
            let profiles = build_profiles(&filter_tourists(&data.log, cfg.min_cbsas_per_user));
            let ds = build_dataset(&profiles, &data.table, &data.registry, level, &cfg)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (name, rows) in [("train", &ds.train), ("test", &ds.test)] {
                let path = out.join(format!("{}_{name}.csv", level.as_str()));
                fs::write(&path, examples_to_csv(&ds.feature_names, rows)?)
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("{}", path.display());
            }
        }
        Command::Train { common, level, out } => {
            let cfg = common.config()?;
            let data = common.data(&cfg)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for level in level.levels() {
                let outcome = train_level(&data, level, &cfg)?;
                if outcome.single_class {
                    tracing::warn!(%level, "training labels have a single class; the model is constant");
                }
                let path = out.join(model_file(level));
                save_bundle(&outcome.bundle, &path)?;
                tracing::info!(
                    %level,
                    train = outcome.dataset.train.len(),
                    test = outcome.dataset.test.len(),
                    final_loss = outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
                    "trained"
                );
                println!("{}", path.display());
            }
        }
        Command::Evaluate { common, level, ks, csv } => {
            let cfg = common.config()?;
            let data = common.data(&cfg)?;
            let ks = parse_ks(&ks)?;
            let mut rows = Vec::new();
            for level in level.levels() {
                rows.extend(sweep(&data, level, ks.iter().copied(), &cfg)?);
            }
            print!("{}", sweep_to_text(&rows));
            if let Some(path) = csv {
                fs::write(&path, sweep_to_csv(&rows)?).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Explain {
            model,
            instance,
            seed,
            samples,
        } => {
            let bundle = load_bundle(&model)?;
            let x = parse_instance(&instance)?;
            if x.len() != bundle.feature_names.len() {
                bail!(
                    "instance has {} values, the model expects {} ({})",
                    x.len(),
                    bundle.feature_names.len(),
                    bundle.feature_names.join(",")
                );
            }
            let mut lime = EngineConfig::default().lime;
            lime.rng_seed = seed;
            if let Some(n) = samples {
                lime.n_samples = n;
            }
            let expl = lime_explain(
                |v: &[f64]| bundle.model.predict_proba(v),
                &x,
                &bundle.feature_names,
                &bundle.background,
                &lime,
            )?;
            println!("{}", serde_json::to_string_pretty(&expl)?);
        }
        Command::Serve {
            data,
            models,
            port,
            host,
            cors_origins,
            config,
        } => {
            let cfg = read_config(config.as_deref())?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .with_context(|| format!("bad listen address {host}:{port}"))?;
            let state = AppState::starting();
            let loader = state.clone();
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                tokio::task::spawn_blocking(move || match Engine::load(&data, &models, cfg) {
                    Ok(engine) => {
                        loader.install(engine);
                        tracing::info!("engine ready");
                    }
                    Err(e) => tracing::error!(error = %e, "engine failed to load"),
                });
                regionrec_server::serve(addr, state, &ServerConfig { cors_origins }).await
            })?;
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
