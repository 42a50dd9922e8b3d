use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mimic::config::{Config, ENV_LISTEN, ENV_STORE};
use mimic::gateway::{serve, ServeOptions, Source};
use mimic::openpose::parse_openpose_frame;
use mimic::replay::{export_directory, replay_directory};
use mimic::report::{report, row, Report};
use mimic::runner::{run_session, script_events};
use mimic::scenario::Scenario;
use mimic::simulate::simulate;
use mimic::store::{ParticipantProfile, Store};

#[derive(Parser)]
#[command(name = "mimic", version, about = "Imitation-game session engine")]
struct Cli {
    /// Configuration file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Score a recorded OpenPose directory against an operator script.
    Replay {
        #[arg(long)]
        dir: PathBuf,
        /// Frame rate of the recording; defaults to the configured one.
        #[arg(long)]
        fps: Option<f64>,
        /// Scenario whose observe and command entries drive the session.
        #[arg(long)]
        script: PathBuf,
        /// Keep the session in this store instead of a throwaway one.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run a scripted scenario through the simulator and score it.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        store: Option<PathBuf>,
        /// Also write the generated frames as OpenPose JSON.
        #[arg(long)]
        export_frames: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run a live session with the console gateway.
    Serve {
        /// Console WebSocket address.
        #[arg(long, env = ENV_LISTEN)]
        listen: Option<String>,
        /// `live` or `simulate:<scenario.json>`.
        #[arg(long, default_value = "live")]
        source: String,
        #[arg(long)]
        participant: Option<String>,
        #[arg(long, env = ENV_STORE)]
        store: Option<PathBuf>,
        /// Seed for a simulated source.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Playback speed for a simulated source.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// Print the results of every closed session in a store.
    Report {
        #[arg(long, env = ENV_STORE)]
        store: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Check an OpenPose frame, a scenario or a configuration file.
    Validate {
        #[arg(long)]
        file: PathBuf,
    },
    /// Configuration helpers.
    Config {
        /// Print the effective configuration as TOML.
        #[arg(long)]
        dump: bool,
    },
    /// Add a participant profile to a store.
    Register {
        #[arg(long)]
        id: String,
        #[arg(long)]
        age: f64,
        #[arg(long)]
        nd_age: f64,
        #[arg(long)]
        cars: f64,
        #[arg(long)]
        verbal: Option<bool>,
        #[arg(long, default_value = "")]
        notes: String,
        #[arg(long, env = ENV_STORE)]
        store: Option<PathBuf>,
    },
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_env_filter(filter()).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mimic: {e}");
            ExitCode::from(1)
        }
    }
}

fn filter() -> tracing_subscriber::EnvFilter {
    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into())
}

/// Opens a store with the reference participants registered.
fn open_store(path: &Path) -> Result<Store> {
    let mut store = Store::open(path)?;
    store.ensure_reference_participants()?;
    Ok(store)
}

/// A named store, or a throwaway one that lives as long as the guard.
fn store_or_temp(path: Option<&Path>) -> Result<(Store, Option<tempfile::TempDir>)> {
    match path {
        Some(p) => Ok((open_store(p)?, None)),
        None => {
            let dir = tempfile::tempdir()?;
            Ok((open_store(dir.path())?, Some(dir)))
        }
    }
}

fn print_rows(store: &Store, id: &str, json: bool) {
    let meta = store.session(id).expect("session was just stored");
    let r = Report { rows: vec![row(store, meta)] };
    print!("{}", if json { r.to_json() } else { r.to_text() });
}

fn run(cli: Cli) -> Result<()> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Cmd::Replay { dir, fps, script, store, json } => {
            let scenario = Scenario::load(&script)?;
            let frames = replay_directory(&dir, fps.unwrap_or(config.fps))?;
            let (mut store, _guard) = store_or_temp(store.as_deref())?;
            let id = run_session(&mut store, &config, &scenario, frames, &script_events(&scenario))?;
            print_rows(&store, &id, json);
        }
        Cmd::Simulate { scenario, seed, store, export_frames, json } => {
            let scenario = Scenario::load(&scenario)?;
            let sim = simulate(&scenario, seed)?;
            if let Some(out) = export_frames {
                std::fs::create_dir_all(&out)?;
                export_directory(&out, &scenario.name, &sim.frames)?;
            }
            let (mut store, _guard) = store_or_temp(store.as_deref())?;
            let id = run_session(&mut store, &config, &scenario, sim.frames.into_iter().map(Ok), &sim.events)?;
            print_rows(&store, &id, json);
        }
        Cmd::Serve { listen, source, participant, store, seed, speed } => {
            let mut config = config;
            if let Some(l) = listen {
                config.gateway.listen = l;
            }
            let store = open_store(store.as_deref().unwrap_or(&config.store))?;
            let source = match source.as_str() {
                "live" => Source::Live,
                s => match s.strip_prefix("simulate:") {
                    Some(path) => Source::Simulate { scenario: Scenario::load(Path::new(path))?, seed, speed },
                    None => return Err(format!("unknown source {s:?}; use live or simulate:<file>").into()),
                },
            };
            let participant = match (&participant, &source) {
                (Some(p), _) => p.clone(),
                (None, Source::Simulate { scenario, .. }) => scenario.participant.clone(),
                (None, _) => return Err("--participant is required with a live source".into()),
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let mut gw = serve(ServeOptions { config, participant, source }, store).await?;
                eprintln!("session {} on ws://{}/ws", gw.session_id, gw.addr);
                if let Some(a) = gw.live_addr {
                    eprintln!("waiting for pose stream on {a}");
                }
                let interrupted = tokio::signal::ctrl_c();
                tokio::pin!(interrupted);
                tokio::select! {
                    r = gw.wait() => { r?; }
                    _ = &mut interrupted => {
                        gw.shutdown();
                        gw.wait().await?;
                    }
                }
                Ok::<_, Box<dyn std::error::Error>>(())
            })?;
        }
        Cmd::Report { store, json } => {
            let store = open_store(store.as_deref().unwrap_or(&config.store))?;
            let r = report(&store);
            print!("{}", if json { r.to_json() } else { r.to_text() });
        }
        Cmd::Validate { file } => println!("{}", validate(&file)?),
        Cmd::Config { dump } => {
            if dump {
                print!("{}", config.to_toml());
            } else {
                println!("configuration ok");
            }
        }
        Cmd::Register { id, age, nd_age, cars, verbal, notes, store } => {
            let mut store = open_store(store.as_deref().unwrap_or(&config.store))?;
            let profile = ParticipantProfile { id: id.clone(), biological_age: age, nd_age, cars_score: cars, verbal, notes };
            store.register_participant(profile)?;
            println!("registered {id}");
        }
    }
    Ok(())
}

/// Works out what kind of file this is and checks it.
fn validate(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "toml") {
        let cfg = Config::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.validate()?;
        return Ok(format!("{}: valid configuration", path.display()));
    }
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: malformed JSON: {e}", path.display()))?;
    if value.get("entries").is_some() {
        let s = Scenario::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        s.validate()?;
        return Ok(format!("{}: valid scenario, {} entries", path.display(), s.entries.len()));
    }
    let people = parse_openpose_frame(text.as_bytes()).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(format!("{}: valid frame, {} people", path.display(), people.len()))
}
