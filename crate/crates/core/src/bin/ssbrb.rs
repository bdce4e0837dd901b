use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssbrb::scenario::{parse_seeds, replay, Scenario};
use ssbrb::verify::{summary, Check, PropertyReport, Verdict};

#[derive(Parser)]
#[command(name = "ssbrb", about = "Simulate and check self-stabilizing reliable broadcast")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario over its seeds, or re-check a saved trace.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// `A..B` (exclusive) or a comma list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        horizon: Option<u64>,
        /// Write `seed-N.trace`, `seed-N.report` and witness slices here.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        /// Comma list of checks: brb, irc, muteness, consistency, differential, fifo.
        #[arg(long)]
        check: Option<String>,
        /// Check an existing trace instead of simulating.
        #[arg(long, conflicts_with_all = ["seed", "seeds", "horizon"])]
        replay: Option<PathBuf>,
    },
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn print_reports(reports: &[PropertyReport]) {
    for r in reports {
        println!("{r}");
    }
}

fn save(dir: &Path, name: &str, body: &str) -> Result<(), String> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))
}

fn report_text(reports: &[PropertyReport]) -> String {
    reports.iter().map(|r| format!("{r}\n")).collect()
}

fn main() -> ExitCode {
    let Cmd::Run { config, seed, seeds, horizon, trace_dir, check, replay: replay_path } = Cli::parse().cmd;

    let checks = match check.as_deref().map(|s| s.split(',').map(|c| Check::parse(c.trim())).collect()) {
        None => None,
        Some(None) => return usage(format!("unknown check in {:?}", check.unwrap_or_default())),
        Some(Some(c)) => Some(c),
    };
    let checks: Option<BTreeSet<Check>> = checks;
    if let Some(dir) = &trace_dir {
        if let Err(e) = fs::create_dir_all(dir) {
            return usage(format!("{}: {e}", dir.display()));
        }
    }

    let mut all = Vec::new();
    if let Some(path) = replay_path {
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => return usage(format!("{}: {e}", path.display())),
        };
        let (mut scenario, trace, mut reports) = match replay(&text) {
            Ok(r) => r,
            Err(e) => return usage(format!("{}: {e}", path.display())),
        };
        if let Some(c) = checks {
            scenario.checks = c;
            reports = scenario.check(&trace);
        }
        print_reports(&reports);
        all = reports;
    } else {
        let Some(path) = config else {
            return usage("--config is required unless --replay is given");
        };
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => return usage(format!("{}: {e}", path.display())),
        };
        let mut scenario = match Scenario::parse(&text) {
            Ok(s) => s,
            Err(e) => return usage(format!("{}: {e}", path.display())),
        };
        if let Some(s) = seed {
            scenario.seeds = vec![s];
        }
        if let Some(s) = &seeds {
            match parse_seeds(s) {
                Some(v) => scenario.seeds = v,
                None => return usage(format!("bad --seeds {s:?}")),
            }
        }
        if let Some(h) = horizon {
            scenario.world.network.horizon = h;
        }
        if let Some(c) = checks {
            scenario.checks = c;
        }
        for &seed in &scenario.seeds.clone() {
            let trace = scenario.simulate(seed);
            let reports = scenario.check(&trace);
            println!("# seed {seed}");
            print_reports(&reports);
            if let Some(dir) = &trace_dir {
                let mut writes = vec![
                    (format!("seed-{seed}.trace"), trace.render()),
                    (format!("seed-{seed}.report"), report_text(&reports)),
                ];
                for r in reports.iter().filter(|r| r.verdict == Verdict::Violated) {
                    let mut slice = trace.slice(&r.witness);
                    slice.header = trace.header.clone();
                    writes.push((format!("seed-{seed}.{}.witness.trace", r.property), slice.render()));
                }
                for (name, body) in writes {
                    if let Err(e) = save(dir, &name, &body) {
                        return usage(e);
                    }
                }
            }
            all.extend(reports);
        }
    }

    print!("{}", summary(&all));
    if all.iter().any(|r| r.verdict == Verdict::Violated) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
