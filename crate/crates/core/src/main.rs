use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ctrl_landscape::harness::{
    aggregate, read_records_csv, read_spec_json, run_sweep_to_dir, write_aggregate_csv, AggregateRow,
    RunSpec, Scale, SweepSpec,
};
use ctrl_landscape::optimizer::classify_termination;
use ctrl_landscape::presets::{preset, PRESET_NAMES};

#[derive(Parser)]
#[command(name = "ctrl-landscape", version, about = "Gradient-flow quantum control searches and constraint sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one search described by a JSON problem file.
    Run {
        problem: PathBuf,
        /// Directory for trace.json, trace.csv and field.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed in the problem file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a preset sweep (or `all`), or a sweep read from a JSON spec.
    Sweep {
        #[arg(long, required_unless_present = "spec", conflicts_with = "spec")]
        preset: Option<String>,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "desk")]
        scale: Scale,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        base_seed: Option<u64>,
        /// Overrides the runs per grid point.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// List the built-in sweeps.
    Presets {
        #[arg(long, default_value = "desk")]
        scale: Scale,
        /// Print the full specs as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Aggregate a records CSV and print the table as CSV.
    Aggregate {
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize every sweep directory below `dir` and write report-<name>.csv files.
    Report { dir: PathBuf },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { problem, out, seed } => run(&problem, out.as_deref(), seed),
        Command::Sweep {
            preset: name,
            spec,
            scale,
            out,
            workers,
            base_seed,
            runs,
        } => {
            let specs = match (name, spec) {
                (Some(name), _) if name == "all" => PRESET_NAMES
                    .iter()
                    .map(|n| preset(n, scale))
                    .collect::<ctrl_landscape::Result<Vec<_>>>()?,
                (Some(name), _) => vec![preset(&name, scale)?],
                (None, Some(path)) => vec![read_spec_json(open(&path)?)?],
                (None, None) => bail!("either --preset or --spec is required"),
            };
            let nested = specs.len() > 1;
            for mut spec in specs {
                spec.workers = workers;
                if let Some(seed) = base_seed {
                    spec.base_seed = seed;
                }
                if let Some(r) = runs {
                    spec.runs_per_point = r;
                }
                let dir = if nested { out.join(&spec.name) } else { out.clone() };
                sweep(&spec, &dir)?;
            }
            Ok(())
        }
        Command::Presets { scale, json } => {
            for name in PRESET_NAMES {
                let spec = preset(name, scale)?;
                if json {
                    println!("{}", serde_json::to_string_pretty(&spec)?);
                } else {
                    println!(
                        "{name:<16} {:?}, {} points × {} runs, grid {:?}",
                        spec.experiment,
                        spec.constraint_grid.len(),
                        spec.runs_per_point,
                        spec.constraint_grid
                    );
                }
            }
            Ok(())
        }
        Command::Aggregate { records, out } => {
            let rows = aggregate(&read_records_csv(open(&records)?)?)?;
            match out {
                Some(path) => write_aggregate_csv(&rows, create(&path)?)?,
                None => write_aggregate_csv(&rows, std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::Report { dir } => report(&dir),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn run(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut spec: RunSpec =
        serde_json::from_reader(open(path)?).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let (problem, trace) = spec.run()?;
    println!("termination      {}", trace.termination_reason.as_str());
    println!("converged        {}", trace.converged);
    println!("final J          {:.12}", trace.final_j);
    println!("iterations       {}", trace.iterations_used);
    println!("final s          {:.6e}", trace.s_history.last().copied().unwrap_or(0.0));
    println!("final fluence    {:.6e}", trace.final_fluence);
    println!("gradient norm    {:.3e}", trace.final_gradient_norm);
    println!(
        "diagnosis        {:?}",
        classify_termination(&trace, &problem.extrema, 1e-6)
    );
    if let Some(failure) = &trace.failure {
        println!("failure          {failure}");
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        trace.write_json(create(&dir.join("trace.json"))?)?;
        trace.write_csv(create(&dir.join("trace.csv"))?)?;
        trace.final_field.write_csv(create(&dir.join("field.csv"))?)?;
        println!("wrote trace.json, trace.csv, field.csv to {}", dir.display());
    }
    Ok(())
}

fn sweep(spec: &SweepSpec, dir: &Path) -> Result<()> {
    eprintln!(
        "{}: {} points × {} runs -> {}",
        spec.name,
        spec.constraint_grid.len(),
        spec.runs_per_point,
        dir.display()
    );
    let records = run_sweep_to_dir(spec, dir)?;
    print_table(&spec.name, &aggregate(&records)?);
    Ok(())
}

fn print_table(name: &str, rows: &[AggregateRow]) {
    println!("{name}");
    println!("{:>14} {:>9} {:>12} {:>14} {:>6}", "constraint", "success", "mean J", "mean F_opt", "runs");
    for r in rows {
        let fluence = r.mean_opt_fluence.map_or_else(|| "-".to_owned(), |f| format!("{f:.4e}"));
        println!(
            "{:>14.6e} {:>9.3} {:>12.6} {:>14} {:>6}",
            r.constraint_value, r.fraction_success, r.mean_final_j, fluence, r.n_runs
        );
    }
}

fn report(dir: &Path) -> Result<()> {
    let mut found = Vec::new();
    if dir.join("records.csv").is_file() {
        found.push(dir.to_path_buf());
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("records.csv").is_file())
        .collect();
    subdirs.sort();
    found.extend(subdirs);
    if found.is_empty() {
        bail!("no records.csv in {} or its subdirectories", dir.display());
    }
    for sweep_dir in found {
        let records = read_records_csv(open(&sweep_dir.join("records.csv"))?)?;
        if records.is_empty() {
            continue;
        }
        let name = records[0].experiment.clone();
        let rows = aggregate(&records)?;
        let path = dir.join(format!("report-{name}.csv"));
        write_aggregate_csv(&rows, create(&path)?)?;
        print_table(&name, &rows);
        println!("  -> {}\n", path.display());
    }
    Ok(())
}
