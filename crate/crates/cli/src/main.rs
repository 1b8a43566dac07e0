use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use petube::config::{Builtin, ScenarioConfig};
use petube::experiments::{self, Criterion};
use petube::sets::TubeIngredients;
use petube::simulator::{CsvSink, RunLog, RunOptions, Simulation};
use petube::sysid;

#[derive(Parser)]
#[command(
    name = "petube",
    version,
    about = "Persistently exciting tube MPC with RLS identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario config against the design assumptions.
    Validate { config: PathBuf },
    /// Run a scenario and write logs, a summary and plot data.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Stop at the first step where a monitor fails.
        #[arg(long)]
        fail_fast: bool,
        /// Override the seed of the initial excitation buffer.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Precompute the tube ingredients into a cache file.
    Sets {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a built-in scenario and compare against its targets.
    Reproduce {
        target: Target,
        /// Also write the run outputs here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    /// Parameter errors at the reference steps against the reference values.
    #[value(name = "table1")]
    Errors,
    Identification,
    Regulation,
}

/// On-disk tube ingredients keyed by the hash of the inputs they depend on.
#[derive(Serialize, Deserialize)]
struct IngredientsCache {
    hash: String,
    ingredients: TubeIngredients,
}

const CACHE_FILE: &str = "ingredients.json";

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Validate { config } => validate(&config),
        Command::Run {
            config,
            out,
            fail_fast,
            seed,
        } => {
            let mut cfg = load(&config)?;
            if let Some(seed) = seed {
                cfg.simulation.seed = seed;
            }
            let log = run_to_dir(&cfg, &out, RunOptions { fail_fast })?;
            print_summary(&log);
            Ok(log.summary.all_monitors_passed)
        }
        Command::Sets { config, out } => {
            let cfg = load(&config)?;
            let cache = IngredientsCache {
                hash: cfg.ingredients_hash()?,
                ingredients: cfg.build_ingredients()?,
            };
            write_json(&out, &cache)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Reproduce { target, out } => reproduce(target, out.as_deref()),
    }
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path).with_context(|| format!("reading {}", path.display()))
}

fn validate(path: &Path) -> Result<bool> {
    let cfg = load(path)?;
    let report = cfg.validate();
    for check in &report.checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        match &check.detail {
            Some(d) => println!("{status}  {}: {d}", check.name),
            None => println!("{status}  {}", check.name),
        }
    }
    Ok(report.all_passed())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reuses `out/ingredients.json` when its hash matches the config.
fn ingredients(cfg: &ScenarioConfig, out: &Path) -> Result<TubeIngredients> {
    let hash = cfg.ingredients_hash()?;
    let path = out.join(CACHE_FILE);
    if let Ok(text) = fs::read_to_string(&path) {
        match serde_json::from_str::<IngredientsCache>(&text) {
            Ok(cache) if cache.hash == hash => {
                log::info!("using cached tube ingredients from {}", path.display());
                return Ok(cache.ingredients);
            }
            Ok(_) => log::info!("cached tube ingredients are stale; rebuilding"),
            Err(err) => log::warn!("ignoring unreadable cache {}: {err}", path.display()),
        }
    }
    let ingredients = cfg.build_ingredients()?;
    write_json(
        &path,
        &IngredientsCache {
            hash,
            ingredients: ingredients.clone(),
        },
    )?;
    Ok(ingredients)
}

fn run_to_dir(cfg: &ScenarioConfig, out: &Path, opts: RunOptions) -> Result<RunLog> {
    fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let ingredients = ingredients(cfg, out)?;
    let mut sim = Simulation::with_ingredients(cfg, ingredients)?;
    let csv_path = out.join("trajectory.csv");
    let file =
        File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    let mut sink = CsvSink::new(BufWriter::new(file), cfg.n_states(), cfg.n_inputs());
    let log = sim.run(opts, &mut sink)?;
    sink.into_inner()?.flush()?;
    write_json(&out.join("summary.json"), &log.summary)?;
    write_plot_data(&log, out)?;
    Ok(log)
}

/// Whitespace-separated column files for gnuplot.
fn write_plot_data(log: &RunLog, out: &Path) -> Result<()> {
    let Some(first) = log.records.first() else {
        return Ok(());
    };
    let (n, m) = (first.x.len(), first.u.len());
    let cols = |prefix: &str, k: usize| {
        (1..=k)
            .map(|j| format!("{prefix}{j}"))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut states = BufWriter::new(File::create(out.join("states.dat"))?);
    writeln!(
        states,
        "# i {} {} {}",
        cols("x", n),
        cols("z", n),
        cols("e", n)
    )?;
    let mut inputs = BufWriter::new(File::create(out.join("inputs.dat"))?);
    writeln!(
        inputs,
        "# i {} {} {}",
        cols("u", m),
        cols("v", m),
        cols("w", m)
    )?;
    let mut params = BufWriter::new(File::create(out.join("parameters.dat"))?);
    writeln!(params, "# i {}", sysid::parameter_labels(n, m).join(" "))?;

    let join = |vals: &[&Vec<f64>]| {
        vals.iter()
            .flat_map(|v| v.iter())
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    for r in &log.records {
        writeln!(states, "{} {}", r.i, join(&[&r.x, &r.z, &r.e]))?;
        writeln!(inputs, "{} {}", r.i, join(&[&r.u, &r.v, &r.w]))?;
        writeln!(params, "{} {}", r.i, join(&[&r.param_err_pct]))?;
    }
    for mut w in [states, inputs, params] {
        w.flush()?;
    }
    Ok(())
}

fn print_summary(log: &RunLog) {
    let s = &log.summary;
    println!("steps: {}/{}", s.steps_completed, s.steps_requested);
    if let Some(t) = &s.terminated {
        println!("terminated: {t}");
    }
    for (name, count) in &s.monitor_failures {
        println!(
            "monitor {name}: {}",
            if *count == 0 {
                "pass".to_string()
            } else {
                format!("{count} failures")
            }
        );
    }
    println!("min eigenvalue of M: {:.3e}", s.min_eig_m);
    let errs: Vec<String> = s
        .parameter_labels
        .iter()
        .zip(&s.final_param_err_pct)
        .map(|(l, e)| format!("{l}={e:.2e}"))
        .collect();
    println!("final parameter errors [%]: {}", errs.join(" "));
}

fn print_criteria(criteria: &[Criterion]) -> bool {
    for c in criteria {
        println!(
            "{}  {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    criteria.iter().all(|c| c.passed)
}

fn reproduce(target: Target, out: Option<&Path>) -> Result<bool> {
    let builtin = match target {
        Target::Errors | Target::Identification => Builtin::Identification,
        Target::Regulation => Builtin::Regulation,
    };
    let cfg = builtin.config();
    let log = match out {
        Some(dir) => run_to_dir(&cfg, dir, RunOptions::default())?,
        None => petube::simulator::run(&cfg, RunOptions::default())?,
    };
    let mut criteria = vec![experiments::monitors(&log)];
    match target {
        Target::Errors => {
            print_error_table(&log)?;
            criteria.extend(experiments::initial_error_criteria(&log));
        }
        Target::Identification => {
            criteria.push(experiments::converged_by(
                &log,
                experiments::CONVERGED_BY_STEP,
            ));
            let lp = cfg.excitation.lp;
            criteria.push(experiments::periodicity(&log, lp, 3 * lp));
        }
        Target::Regulation => {
            let s = cfg.build_ingredients()?.s;
            criteria.extend(experiments::settled(&log, &s, cfg.tolerances.monitor)?);
        }
    }
    Ok(print_criteria(&criteria))
}

fn print_error_table(log: &RunLog) -> Result<()> {
    let steps = experiments::REFERENCE_STEPS;
    if log.records.len() <= steps[steps.len() - 1] {
        bail!("run too short for the comparison table");
    }
    print!("{:<6}", "param");
    for i in steps {
        print!(" | {:>10} {:>10}", format!("i={i}"), "ref");
    }
    println!();
    for (k, label) in log.summary.parameter_labels.iter().enumerate() {
        print!("{label:<6}");
        for (c, &i) in steps.iter().enumerate() {
            print!(
                " | {:>10.3e} {:>10.3e}",
                log.records[i].param_err_pct[k],
                experiments::REFERENCE_ERRORS[k][c]
            );
        }
        println!();
    }
    Ok(())
}
