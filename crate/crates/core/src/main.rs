use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lora_ncml::channel::noise_variance_from_snr_db;
use lora_ncml::harness::bench::benchmark_detectors;
use lora_ncml::harness::checks::{self, CheckOutcome};
use lora_ncml::harness::engine::{estimate_from_packets, PacketSimulator};
use lora_ncml::harness::recipes::{recipe, recipe_file, Recipe, RecipeId};
use lora_ncml::harness::rng::StreamKey;
use lora_ncml::harness::{read_csv, run_scenario_with, write_csv, RunOptions, Scenario, SerRecord};

#[derive(Parser)]
#[command(name = "lora-ncml", version, about = "LoRa SER simulation over Rician multipath fading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Exec {
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Per-point progress on stderr.
    #[arg(long)]
    progress: bool,
    /// Add a wall_time_s column to the CSV.
    #[arg(long)]
    timing: bool,
}

impl Exec {
    fn options(&self) -> RunOptions {
        RunOptions {
            workers: self.workers,
            progress: self.progress,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write SER records as CSV.
    Run {
        scenario: PathBuf,
        /// Output CSV (stdout if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        exec: Exec,
    },
    /// Run built-in figure recipes.
    Figures {
        /// Recipes to run: fig1, fig2, fig3, fig1-extended (default: fig1 fig2 fig3).
        #[arg(long = "recipe", value_name = "ID")]
        recipes: Vec<String>,
        #[arg(short, long, default_value = "results")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Only write the scenario files and the recipe file.
        #[arg(long)]
        dry_run: bool,
        /// Exit nonzero if any acceptance threshold is violated.
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        exec: Exec,
    },
    /// Time per-symbol detection across spreading factors.
    Bench {
        #[arg(long, default_value_t = 7)]
        sf_min: u32,
        #[arg(long, default_value_t = 11)]
        sf_max: u32,
        /// Received symbols per spreading factor.
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long)]
        check: bool,
    },
    /// Estimate channel statistics from simulated preambles and save them.
    Estimate {
        /// Scenario describing the channel (defaults if omitted).
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        packets: usize,
        #[arg(long, default_value_t = 10.0)]
        snr_db: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            output,
            seed,
            exec,
        } => {
            let mut sc = Scenario::load(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            if let Some(s) = seed {
                sc.seed = s;
            }
            let records = run_scenario_with(&sc, &exec.options())?;
            match output {
                Some(p) => write_csv(&records, create(&p)?, exec.timing)?,
                None => write_csv(&records, io::stdout().lock(), exec.timing)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Figures {
            recipes,
            out_dir,
            seed,
            dry_run,
            check,
            exec,
        } => figures(recipes, &out_dir, seed, dry_run, check, &exec),
        Command::Bench {
            sf_min,
            sf_max,
            trials,
            check,
        } => {
            let table = benchmark_detectors(sf_min..=sf_max, trials)?;
            print!("{}", table.to_text());
            if check {
                return Ok(report(&checks::complexity_checks(&table)));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate {
            scenario,
            packets,
            snr_db,
            output,
        } => {
            let sc = match scenario {
                Some(p) => Scenario::load(&p)?,
                None => Scenario::default(),
            };
            if packets == 0 {
                bail!("need at least one packet");
            }
            let sim = PacketSimulator::new(&sc)?;
            let key = StreamKey::derive("estimate-cli", &format!("{}/{}", sc.seed, sc.name));
            let est = estimate_from_packets(&sim, &key, packets, noise_variance_from_snr_db(snr_db))?;
            if est.degenerate {
                eprintln!("warning: moment estimator had no real solution; K0 set to 0");
            }
            let text = est.stats.to_toml_string();
            match output {
                Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn figures(ids: Vec<String>, out_dir: &Path, seed: Option<u64>, dry_run: bool, check: bool, exec: &Exec) -> Result<ExitCode> {
    let ids: Vec<RecipeId> = if ids.is_empty() {
        RecipeId::DESK.to_vec()
    } else {
        ids.iter().map(|s| s.parse()).collect::<lora_ncml::Result<_>>()?
    };
    let recipes: Vec<Recipe> = ids
        .iter()
        .map(|&id| {
            let r = recipe(id);
            match seed {
                Some(s) => r.with_seed(s),
                None => r,
            }
        })
        .collect();
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("recipes.toml"), recipe_file(&recipes))?;
    for r in &recipes {
        let dir = out_dir.join("scenarios");
        fs::create_dir_all(&dir)?;
        for sc in &r.scenarios {
            fs::write(dir.join(format!("{}.toml", sc.name)), sc.to_toml_string())?;
        }
    }
    if dry_run {
        return Ok(ExitCode::SUCCESS);
    }
    let mut results: Vec<(RecipeId, Vec<SerRecord>)> = Vec::new();
    for r in &recipes {
        let mut records = Vec::new();
        for sc in &r.scenarios {
            records.extend(run_scenario_with(sc, &exec.options())?);
        }
        let path = out_dir.join(r.csv_name());
        let mut w = create(&path)?;
        write_csv(&records, &mut w, exec.timing)?;
        w.flush()?;
        eprintln!("wrote {}", path.display());
        results.push((r.id, records));
    }
    if !check {
        return Ok(ExitCode::SUCCESS);
    }
    let find = |id: RecipeId| results.iter().find(|(i, _)| *i == id).map(|(_, r)| r.clone());
    let mut outcomes = Vec::new();
    for (id, records) in &results {
        match id {
            RecipeId::Fig1 => outcomes.extend(checks::fig1_checks(records)),
            RecipeId::Fig2 => {
                let fig1 = match find(RecipeId::Fig1) {
                    Some(r) => r,
                    None => fig1_reference(out_dir, seed, exec)?,
                };
                outcomes.extend(checks::fig2_checks(records, &fig1));
            }
            RecipeId::Fig3 => outcomes.extend(checks::fig3_checks(records)),
            RecipeId::Fig1Extended => outcomes.extend(checks::fig1_extended_checks(records)),
        }
    }
    Ok(report(&outcomes))
}

/// Time-invariant NC-ML curves for the Doppler comparison: reuse an
/// existing fig1.csv or simulate them.
fn fig1_reference(out_dir: &Path, seed: Option<u64>, exec: &Exec) -> Result<Vec<SerRecord>> {
    let path = out_dir.join("fig1.csv");
    if path.exists() {
        return Ok(read_csv(File::open(&path)?)?);
    }
    let mut r = recipe(RecipeId::Fig1);
    if let Some(s) = seed {
        r = r.with_seed(s);
    }
    let mut records = Vec::new();
    for sc in &r.scenarios {
        records.extend(run_scenario_with(sc, &exec.options())?);
    }
    Ok(records)
}

fn report(outcomes: &[CheckOutcome]) -> ExitCode {
    for o in outcomes {
        println!("{o}");
    }
    if outcomes.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
