//! `rah` command line: synthesize worlds, prepare interaction logs, learn
//! personalities, emit proxy feedback, replay control scenarios, and run
//! the full experiment suite.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use rah_core::alignment::{learn_set, proxy_actions, LoopConfig, WorldResponder};
use rah_core::domain::{SplitSet, UserId};
use rah_core::experiments::{config as expconfig, control, runner};
use rah_core::gateway::remote::{HttpTransport, TemplateSet};
use rah_core::gateway::{Backend, OracleBackend, SyntheticWorld};
use rah_core::pipeline;
use rah_core::store;

#[derive(Parser)]
#[command(name = "rah", version, about = "RecSys-Assistant-Human framework runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendChoice {
    /// Deterministic rule-based oracle over a synthetic world file.
    Oracle,
    /// OpenAI-compatible chat endpoint from RAH_LLM_* environment variables.
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a world and its interaction log from an experiment config.
    Synth {
        /// Experiment config file ([world] section drives generation).
        #[arg(long)]
        config: PathBuf,
        /// Seed override for the world.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for world.json and interactions.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Ingest raw review files (JSON lines) into an interaction log.
    Ingest {
        /// Raw review files.
        #[arg(required = true)]
        reviews: Vec<PathBuf>,
        /// Keep only the k-core of the user-item graph (0 = off).
        #[arg(long, default_value_t = 0)]
        k_core: usize,
        /// Keep only users active in at least two domains.
        #[arg(long)]
        cross_domain: bool,
        /// Output interaction log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition an interaction log into Learn/Proxy/Unseen per user.
    Split {
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn one user's personality from their Learn-Set interactions.
    Learn {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long, value_enum, default_value_t = BackendChoice::Oracle)]
        backend: BackendChoice,
        /// Prompt template directory for the remote backend.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        max_iters: usize,
        #[arg(long)]
        no_critic: bool,
        #[arg(long)]
        no_reflect: bool,
        /// Output personality file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit assistant proxy feedback on a user's Proxy-Set items.
    Proxy {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        user: String,
        /// Personality file from `rah learn`.
        #[arg(long)]
        personality: PathBuf,
        #[arg(long, value_enum, default_value_t = BackendChoice::Oracle)]
        backend: BackendChoice,
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Output proxy interaction log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a control or privacy scenario and print its event log.
    Control {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run the full experiment suite and write CSV reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn make_backend<'w>(
    choice: BackendChoice,
    world: Option<&'w SyntheticWorld>,
    templates: Option<&PathBuf>,
) -> anyhow::Result<Box<dyn Backend + 'w>> {
    match choice {
        BackendChoice::Oracle => {
            let world = world.context("the oracle backend needs a world file")?;
            Ok(Box::new(OracleBackend::new(world)))
        }
        BackendChoice::Remote => {
            let templates = match templates {
                Some(dir) => TemplateSet::load_dir(dir)?,
                None => TemplateSet::default(),
            };
            Ok(Box::new(HttpTransport::backend_from_env(templates)?))
        }
    }
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { config, seed, out } => {
            let config = expconfig::parse_file(&config)?;
            let mut world_config = config.world;
            if let Some(seed) = seed {
                world_config.seed = seed;
            }
            let (world, interactions) = pipeline::make_world(&world_config)?;
            std::fs::create_dir_all(&out)?;
            pipeline::save_world(&world, &out.join("world.json"))?;
            pipeline::save_interactions(&interactions, &out.join("interactions.jsonl"))?;
            println!(
                "wrote {} items, {} users, {} interactions to {}",
                world.catalog.len(),
                world.users.len(),
                interactions.len(),
                out.display()
            );
        }
        Command::Ingest {
            reviews,
            k_core,
            cross_domain,
            out,
        } => {
            let paths: Vec<&std::path::Path> = reviews.iter().map(PathBuf::as_path).collect();
            let result = pipeline::ingest(&paths)?;
            let mut interactions = result.interactions;
            if cross_domain {
                interactions = pipeline::retain_cross_domain(&interactions, &result.item_domains)?;
            }
            if k_core > 0 {
                interactions = pipeline::kcore_filter(&interactions, k_core)?;
            }
            let stats = pipeline::stats(&interactions, &result.item_domains)?;
            pipeline::save_interactions(&interactions, &out)?;
            println!(
                "kept {} interactions ({} malformed skipped, {} neutral dropped)",
                interactions.len(),
                result.skipped,
                result.dropped_neutral
            );
            for (domain, s) in &stats.per_domain {
                println!(
                    "  {domain}: {} users, {} items, {} interactions",
                    s.users, s.items, s.interactions
                );
            }
        }
        Command::Split {
            interactions,
            seed,
            out,
        } => {
            let log = pipeline::load_interactions(&interactions)?;
            let split = pipeline::split_lpu(&log, seed)?;
            pipeline::save_split(&split, &out)?;
            println!("split {} interactions", split.assignment.len());
        }
        Command::Learn {
            world,
            interactions,
            split,
            user,
            backend,
            templates,
            max_iters,
            no_critic,
            no_reflect,
            out,
        } => {
            let world = pipeline::load_world(&world)?;
            let log = pipeline::load_interactions(&interactions)?;
            let split = pipeline::load_split(&split)?;
            let user = UserId::new(user);
            let learn: Vec<_> = log
                .iter()
                .filter(|i| i.user == user)
                .filter(|i| split.set_of(&i.id) == Some(SplitSet::Learn))
                .cloned()
                .collect();
            if learn.is_empty() {
                bail!("user {user} has no Learn-Set interactions");
            }
            let loop_config = LoopConfig {
                max_iters,
                use_critic: !no_critic,
                use_reflect: !no_reflect,
            };
            let backend = make_backend(backend, Some(&world), templates.as_ref())?;
            let responder = WorldResponder::new(&world);
            let personality = learn_set(
                &user,
                &learn,
                &world.catalog,
                &loop_config,
                backend.as_ref(),
                Some(&responder),
            )?;
            store::save(&personality, &out)?;
            println!(
                "learned {} trait entries from {} interactions",
                personality.entries.len(),
                learn.len()
            );
        }
        Command::Proxy {
            world,
            interactions,
            split,
            user,
            personality,
            backend,
            templates,
            out,
        } => {
            let world = pipeline::load_world(&world)?;
            let log = pipeline::load_interactions(&interactions)?;
            let split = pipeline::load_split(&split)?;
            let user = UserId::new(user);
            let personality = store::load(&personality)?;
            if personality.user != user {
                bail!(
                    "personality file belongs to {}, not {user}",
                    personality.user
                );
            }
            let mut items = Vec::new();
            let mut seen = BTreeMap::new();
            for inter in &log {
                if inter.user == user
                    && split.set_of(&inter.id) == Some(SplitSet::Proxy)
                    && seen.insert(inter.item.clone(), ()).is_none()
                {
                    items.push(
                        world
                            .catalog
                            .get(&inter.item)
                            .with_context(|| format!("unknown item {}", inter.item))?,
                    );
                }
            }
            if items.is_empty() {
                bail!("user {user} has no Proxy-Set items");
            }
            let backend = make_backend(backend, Some(&world), templates.as_ref())?;
            let feedback = proxy_actions(&user, &personality, &items, backend.as_ref())?;
            pipeline::save_interactions(&feedback, &out)?;
            println!("wrote {} proxy interactions", feedback.len());
        }
        Command::Control { scenario } => {
            let scenario = control::parse_scenario_file(&scenario)?;
            print!("{}", control::run_scenario(&scenario)?);
        }
        Command::Run { config, out } => {
            let config = expconfig::parse_file(&config)?;
            runner::run_to_dir(&config, &out)?;
            println!("wrote e1.csv, e2.csv, e3.csv, summary.txt to {}", out.display());
        }
    }
    Ok(())
}
