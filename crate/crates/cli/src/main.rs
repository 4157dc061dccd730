use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use ucfem::mesh::Mesh;
use ucfem::solver::Method;
use ucfem_cli::config::{Overrides, RunConfig};
use ucfem_cli::output::{mesh_dump, write_file};
use ucfem_cli::presets::{self, PresetKind};
use ucfem_cli::runner::{run_necessity, run_preset, run_study, summarize, write_preset_csvs};
use ucfem_cli::{exit, CliError};

/// Stabilized finite elements for unique continuation with finite-dimensional Neumann data.
#[derive(Parser, Debug)]
#[command(name = "ucfem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run a preset, or a single study from a config file and flags.
    Run(RunArgs),
    /// List the presets with the figure each reproduces.
    ListPresets,
    /// Build the ghost function on an n × n mesh and check its properties.
    Necessity {
        #[arg(long, default_value_t = 8)]
        n: usize,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    preset: Option<String>,
    /// Flat `key = value` config (ignored with --preset).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for presets, CSV file for single studies.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    n_levels: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    trace_n: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// two_field or three_field.
    #[arg(long)]
    method: Option<String>,
    /// Run the levels of each study concurrently.
    #[arg(long)]
    parallel: bool,
    /// Also write the finest mesh of a single study in plain text.
    #[arg(long)]
    mesh_dump: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Overrides, CliError> {
        let method = match &self.method {
            None => None,
            Some(m) => Some(
                Method::parse(m)
                    .ok_or_else(|| CliError::Config(format!("unknown method {m:?}")))?,
            ),
        };
        Ok(Overrides {
            degree: self.degree,
            n_levels: self.n_levels,
            gamma: self.gamma,
            trace_n: self.trace_n,
            eps: self.eps,
            seed: self.seed,
            method,
        })
    }
}

fn cli_exit(e: &anyhow::Error) -> i32 {
    e.downcast_ref::<CliError>()
        .map_or(exit::IO, CliError::exit_code)
}

fn run(args: RunArgs) -> anyhow::Result<i32> {
    let overrides = args.overrides()?;
    if let Some(name) = &args.preset {
        let preset = presets::find(name)
            .ok_or_else(|| CliError::Config(format!("unknown preset {name:?}")))?;
        if let PresetKind::Necessity { sizes, tol } = &preset.kind {
            let mut ok = true;
            for &n in sizes {
                let r = run_necessity(n, *tol)?;
                print!("{}", r.render());
                ok &= r.passed();
            }
            return Ok(if ok { exit::PASS } else { exit::EXPECTATION });
        }
        let outcome = run_preset(&preset, &overrides, args.parallel, None)?;
        for (label, t) in &outcome.tables {
            print!("{}", summarize(label, t));
        }
        if let Some(dir) = &args.out {
            for p in write_preset_csvs(dir, preset.name, &outcome.tables)? {
                println!("wrote {}", p.display());
            }
        }
        for c in &outcome.checks {
            println!("{c}");
        }
        return Ok(if outcome.passed() {
            exit::PASS
        } else {
            exit::EXPECTATION
        });
    }

    let mut config = RunConfig::default();
    if let Some(path) = &args.config {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.apply_text(&text)?;
    }
    overrides.apply(&mut config);
    config.validate()?;
    let table = run_study(&config, args.parallel)?;
    print!("{}", summarize(&config.solution.to_string(), &table));
    match &args.out {
        Some(path) => write_file(path, &table.to_csv())?,
        None => print!("{}", table.to_csv()),
    }
    if let Some(path) = &args.mesh_dump {
        let n = *config.level_sizes().last().expect("at least one level");
        write_file(path, &mesh_dump(&Mesh::unit_square(n)?))?;
    }
    Ok(exit::PASS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::CONFIG
            } else {
                exit::PASS
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::ListPresets => {
            for p in presets::presets() {
                println!("{:<18} {:<28} {}", p.name, p.figure, p.description);
            }
            Ok(exit::PASS)
        }
        Command::Necessity { n } if n <= 3 => {
            Err(CliError::Config(format!("--n must be greater than 3, got {n}")).into())
        }
        Command::Necessity { n } => run_necessity(n, 1e-10).map_err(Into::into).map(|r| {
            print!("{}", r.render());
            if r.passed() {
                exit::PASS
            } else {
                exit::EXPECTATION
            }
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(cli_exit(&e) as u8)
        }
    }
}
