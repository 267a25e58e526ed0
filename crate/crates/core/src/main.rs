use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use jstod::orchestrate::RunConfig;
use jstod::permute::Level;
use jstod::pipeline::{self, JestOptions};
use jstod::report::{self, ProjectReport};
use jstod::simharness::Scenario;
use jstod::testmodel::{enumerate_level, ItemLevel};

#[derive(Parser)]
#[command(
    name = "jstod",
    version,
    about = "Detect order-dependent flaky tests in Jest projects"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args, Clone)]
struct Detection {
    /// Orders sampled per group (all orders when fewer exist).
    #[arg(long, default_value_t = 10)]
    reorders: u64,
    /// Reruns of every order.
    #[arg(long, default_value_t = 10)]
    reruns: u32,
    #[arg(long, default_value_t = RunConfig::default().seed)]
    seed: u64,
    /// Comma-separated subset of test,describe,suite.
    #[arg(long, value_delimiter = ',', default_values_t = Level::ALL.to_vec())]
    levels: Vec<Level>,
}

impl Detection {
    fn config(&self, timeout: Option<u64>) -> RunConfig {
        RunConfig {
            reorders: self.reorders,
            reruns: self.reruns,
            seed: self.seed,
            levels: self.levels.clone(),
            timeout_per_run: timeout.map(Duration::from_secs),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
    Diff,
}

#[derive(Subcommand)]
enum Cmd {
    /// Detect the runner and count suites, describes and tests.
    Scan {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the detection protocol on one or more projects.
    Run {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[command(flatten)]
        detection: Detection,
        /// Directory for result files and raw runner reports.
        #[arg(long, default_value = "jstod-results")]
        out: PathBuf,
        /// Projects processed in parallel; each project runs serially.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Per-invocation timeout in seconds; derived from the baseline if unset.
        #[arg(long)]
        timeout: Option<u64>,
        /// Command used to invoke the runner.
        #[arg(long, default_value = "npx jest")]
        runner: String,
    },
    /// Print results from a directory written by `run`.
    Report {
        results: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Run the protocol against a simulated scenario.
    Sim {
        scenario: PathBuf,
        #[command(flatten)]
        detection: Detection,
        #[arg(long)]
        json: bool,
    },
}

fn scan(path: &Path, json: bool) -> Result<(), String> {
    let project = pipeline::scan_project(path).map_err(|e| e.to_string())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&project).map_err(|e| e.to_string())?);
        return Ok(());
    }
    println!("project:    {}", project.root_path.display());
    println!(
        "runner:     jest {}",
        project.runner_version.as_deref().unwrap_or("(unversioned)")
    );
    println!(
        "sequencer:  {}",
        if project.sequencer_supported {
            "supported"
        } else {
            "unsupported"
        }
    );
    if let Some(src) = project.listing {
        println!("listing:    {src:?}");
    }
    let c = project.counts;
    println!("suites:     {}", c.n_suites);
    println!("describes:  {}", c.n_describes);
    println!("tests:      {}", c.n_tests);
    for level in [ItemLevel::Describe, ItemLevel::Test] {
        let groups: usize = project.trees.iter().map(|t| enumerate_level(t, level).len()).sum();
        println!("{:<11} {groups}", format!("{} groups:", level.as_str()));
    }
    let levels: Vec<&str> = project.levels_enabled().iter().map(|l| l.as_str()).collect();
    println!("levels:     {}", levels.join(","));
    for f in &project.parse_failures {
        println!("unparsed:   {} ({})", f.path.display(), f.error);
    }
    Ok(())
}

fn print_reports(reports: &[ProjectReport], format: Format) -> Result<(), String> {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(reports).map_err(|e| e.to_string())?),
        Format::Table => {
            print!("{}", report::summary_table(reports));
            for r in reports {
                for line in report::verdict_lines(r) {
                    println!("  {line}");
                }
            }
        }
        Format::Diff => print!("{}", report::patch_diffs(reports)),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Scan { path, json } => scan(&path, json),
        Cmd::Run {
            paths,
            detection,
            out,
            workers,
            timeout,
            runner,
        } => {
            let cfg = detection.config(timeout);
            let opts = JestOptions {
                runner: runner.split_whitespace().map(str::to_string).collect(),
                reports_dir: Some(out.join("raw")),
            };
            let mut reports = Vec::new();
            let mut failed = false;
            for (path, res) in paths.iter().zip(pipeline::run_projects(&paths, &cfg, &opts, workers)) {
                match res.and_then(|r| report::emit_report(&out, &r).map(|_| r).map_err(Into::into)) {
                    Ok(r) => reports.push(r),
                    Err(e) => {
                        eprintln!("jstod: {}: {e}", path.display());
                        failed = true;
                    }
                }
            }
            print_reports(&reports, Format::Table).and(if failed {
                Err("some projects failed".into())
            } else {
                Ok(())
            })
        }
        Cmd::Report { results, format } => report::load_reports(&results)
            .map_err(|e| e.to_string())
            .and_then(|r| print_reports(&r, format)),
        Cmd::Sim {
            scenario,
            detection,
            json,
        } => Scenario::load(&scenario)
            .map_err(|e| e.to_string())
            .and_then(|s| pipeline::detect_scenario(&s, &detection.config(None)).map_err(|e| e.to_string()))
            .and_then(|r| {
                if json {
                    print_reports(&[r], Format::Json)
                } else {
                    for v in r.verdicts() {
                        println!("{:<24} {:?}", v.subject, v.classification);
                    }
                    for line in report::verdict_lines(&r) {
                        println!("  {line}");
                    }
                    Ok(())
                }
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jstod: {e}");
            ExitCode::FAILURE
        }
    }
}
