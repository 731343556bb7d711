use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use seutest::data_io::{load_design, read_choices_path, ParseOptions};
use seutest::exec::Execution;
use seutest::lp::SolverOptions;
use seutest::metrics::CornerPolicy;
use seutest::report::{evaluate_all, AnalysisOptions, AnalysisReport, TestSelection};
use seutest::seu_meu::{build_meu_system, build_seu_system};
use seutest::simulate::{
    classify_state, run_power_study, simulate_gbm_path, subject_rng, BootstrapPool, Dgp, GbmParams,
    SimConfig,
};

/// Exit status when the input is malformed or fails validation.
const EXIT_VALIDATION: u8 = 2;
/// Exit status when some solver verdicts are indeterminate.
const EXIT_INDETERMINATE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "seutest",
    version,
    about = "Revealed-preference tests for portfolio choices under uncertainty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum DgpArg {
    Uniform,
    Bootstrap,
}

#[derive(Clone, Copy, ValueEnum)]
enum Corners {
    Clamp,
    Drop,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tests on a choices file.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        /// builtin:lab, builtin:panel, or a design CSV.
        #[arg(long, default_value = "builtin:lab")]
        design: String,
        /// Comma-separated subset of garp,ccei,ps,seu,meu,estar,dsd.
        #[arg(long, default_value = "all")]
        tests: String,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Solver residual tolerance.
        #[arg(long, default_value_t = seutest::lp::DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        allow_partial: bool,
        /// Skip checking types and exchange values against the design.
        #[arg(long)]
        no_design_check: bool,
        /// Re-verify borderline verdicts in rational arithmetic.
        #[arg(long)]
        exact: bool,
        #[arg(long, value_enum, default_value = "clamp")]
        dsd_corners: Corners,
        /// Write each subject's SEU and MEU systems in LP format here.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Power study on synthetic subjects.
    Power {
        #[arg(long, default_value = "builtin:lab")]
        design: String,
        #[arg(long, value_enum, default_value = "uniform")]
        dgp: DgpArg,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Choices file to bootstrap from.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Output directory for power.json, pass_rates.csv and distances.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Shorthand for 2,000 subjects.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value = "all")]
        tests: String,
        #[arg(long)]
        sequential: bool,
    },
    /// Simulate geometric Brownian motion price paths.
    Gbm {
        #[arg(long)]
        s0: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        n_paths: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Return threshold R separating the three states.
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

#[allow(clippy::too_many_arguments)]
fn analyze(
    input: &Path,
    design_spec: &str,
    tests: &str,
    out: Option<&Path>,
    format: Format,
    tol: f64,
    parse: ParseOptions,
    exact: bool,
    corners: Corners,
    dump_lp: Option<&Path>,
    exec: Execution,
) -> Result<u8> {
    let design = load_design(design_spec)?;
    let datasets = read_choices_path(input, &design, parse)?;
    if let Some(dir) = dump_lp {
        fs::create_dir_all(dir)?;
        for ds in &datasets {
            let stem = format!("{}_{}", ds.subject_id, ds.task);
            fs::write(
                dir.join(format!("{stem}_seu.lp")),
                build_seu_system(ds).to_lp_format(),
            )?;
            fs::write(
                dir.join(format!("{stem}_meu.lp")),
                build_meu_system(ds).to_lp_format(),
            )?;
        }
    }
    let opts = AnalysisOptions {
        tests: TestSelection::parse(tests)?,
        solver: SolverOptions {
            tol,
            exact,
            ..SolverOptions::default()
        },
        corner_policy: match corners {
            Corners::Clamp => CornerPolicy::Clamp,
            Corners::Drop => CornerPolicy::Drop,
        },
        ..AnalysisOptions::default()
    };
    let reports = evaluate_all(&datasets, &opts, exec);
    let report = AnalysisReport::new(design_spec, reports, &opts);
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => report.subjects_csv()?,
    };
    write_output(out, &text)?;
    Ok(if report.aggregate.subjects_with_indeterminate > 0 {
        EXIT_INDETERMINATE
    } else {
        0
    })
}

#[allow(clippy::too_many_arguments)]
fn power(
    design_spec: &str,
    dgp: DgpArg,
    n: usize,
    seed: u64,
    source: Option<&Path>,
    out: Option<&Path>,
    tests: &str,
    exec: Execution,
) -> Result<u8> {
    let design = load_design(design_spec)?;
    let dgp = match (dgp, source) {
        (DgpArg::Uniform, _) => Dgp::Uniform,
        (DgpArg::Bootstrap, None) => bail!(seutest::Error::validation(
            "--dgp bootstrap requires --source"
        )),
        (DgpArg::Bootstrap, Some(path)) => {
            let parse = ParseOptions {
                check_design: true,
                allow_partial: true,
            };
            let source = read_choices_path(path, &design, parse)?;
            Dgp::Bootstrap(Arc::new(BootstrapPool::new(&design, &source)?))
        }
    };
    let mut config = SimConfig::new(design, dgp, n, seed);
    config.analysis.tests = TestSelection::parse(tests)?;
    config.execution = exec;
    let table = run_power_study(&config)?;
    let json = serde_json::to_string_pretty(&table)? + "\n";
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("power.json"), &json)?;
            fs::write(dir.join("pass_rates.csv"), table.pass_rates_csv())?;
            fs::write(dir.join("distances.csv"), table.distances_csv())?;
            print!("{}\n{}", table.pass_rates_csv(), table.distances_csv());
        }
        None => print!("{json}"),
    }
    Ok(if table.aggregate.subjects_with_indeterminate > 0 {
        EXIT_INDETERMINATE
    } else {
        0
    })
}

fn gbm(
    params: GbmParams,
    n_paths: u64,
    seed: u64,
    out: Option<&Path>,
    format: Format,
) -> Result<u8> {
    params.validate()?;
    let paths: Vec<Vec<f64>> = (0..n_paths)
        .map(|i| simulate_gbm_path(&params, &mut subject_rng(seed, i)))
        .collect();
    let text = match format {
        Format::Csv => {
            let mut s = String::from("path,terminal_return,state");
            for k in 0..=params.n_steps {
                s.push_str(&format!(",s{k}"));
            }
            s.push('\n');
            for (i, p) in paths.iter().enumerate() {
                let last = *p.last().expect("non-empty path");
                s.push_str(&format!(
                    "{i},{},{}",
                    (last - params.s0) / params.s0,
                    classify_state(params.s0, last, params.threshold)
                ));
                for v in p {
                    s.push_str(&format!(",{v}"));
                }
                s.push('\n');
            }
            s
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = paths
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let last = *p.last().expect("non-empty path");
                    serde_json::json!({
                        "path": i,
                        "terminal_return": (last - params.s0) / params.s0,
                        "state": classify_state(params.s0, last, params.threshold).to_string(),
                        "prices": p,
                    })
                })
                .collect();
            serde_json::to_string_pretty(
                &serde_json::json!({ "params": params, "seed": seed, "paths": rows }),
            )? + "\n"
        }
    };
    write_output(out, &text)?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Analyze {
            input,
            design,
            tests,
            out,
            format,
            tol,
            allow_partial,
            no_design_check,
            exact,
            dsd_corners,
            dump_lp,
            sequential,
        } => analyze(
            &input,
            &design,
            &tests,
            out.as_deref(),
            format,
            tol,
            ParseOptions {
                check_design: !no_design_check,
                allow_partial,
            },
            exact,
            dsd_corners,
            dump_lp.as_deref(),
            execution(sequential),
        ),
        Command::Power {
            design,
            dgp,
            n,
            seed,
            source,
            out,
            quick,
            tests,
            sequential,
        } => {
            let n = if quick { 2_000 } else { n as usize };
            power(
                &design,
                dgp,
                n,
                seed,
                source.as_deref(),
                out.as_deref(),
                &tests,
                execution(sequential),
            )
        }
        Command::Gbm {
            s0,
            mu,
            sigma,
            h,
            steps,
            n_paths,
            seed,
            threshold,
            out,
            format,
        } => {
            let params = GbmParams {
                s0,
                mu,
                sigma,
                h,
                n_steps: steps,
                threshold,
            };
            gbm(params, n_paths, seed, out.as_deref(), format)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e
                .downcast_ref::<seutest::Error>()
                .is_some_and(seutest::Error::is_validation);
            ExitCode::from(if validation { EXIT_VALIDATION } else { 1 })
        }
    }
}
