mod config;
mod output;
mod tasks;

use std::process::ExitCode;

use clap::Parser;
use finlap_core::metric::MetricRegistry;
use finlap_core::verify::SuiteRegistry;
use finlap_core::Error;

use config::Cli;
use output::{csv_path, table_bytes, write_atomic};

const EXIT_VERIFY: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::InvalidMetric(_) | Error::Domain(_) => {
            EXIT_CONFIG
        }
        Error::Numeric(_) | Error::DegenerateContact(_) | Error::Construction(_) => EXIT_NUMERIC,
    }
}

fn list() {
    println!("metrics:");
    for (name, summary) in MetricRegistry::with_builtins().names() {
        println!("  {name:<14} {summary}");
    }
    println!("suites:");
    for (name, summary) in SuiteRegistry::with_builtins().names() {
        println!("  {name:<16} {summary}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list {
        list();
        return ExitCode::SUCCESS;
    }
    let cfg = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("finlap: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let mut outcome = match tasks::run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("finlap: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    outcome.doc.stamp();
    let mut text = serde_json::to_string_pretty(&outcome.doc).expect("result document serializes");
    text.push('\n');
    match &cfg.output {
        Some(path) => {
            if let Err(e) = write_atomic(path, text.as_bytes()) {
                eprintln!("finlap: cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_CONFIG);
            }
            if let (true, Some(table)) = (cfg.csv, &outcome.table) {
                let p = csv_path(path);
                let written = table_bytes(table)
                    .map_err(|e| e.to_string())
                    .and_then(|b| write_atomic(&p, &b).map_err(|e| e.to_string()));
                if let Err(e) = written {
                    eprintln!("finlap: cannot write {}: {e}", p.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
        }
        None => print!("{text}"),
    }
    for c in outcome.doc.report.iter().filter(|c| !c.passed()) {
        eprintln!(
            "FAIL {}: defect {:e} > tolerance {:e}",
            c.check, c.defect, c.tolerance
        );
    }
    if outcome.doc.failed() {
        ExitCode::from(EXIT_VERIFY)
    } else {
        ExitCode::SUCCESS
    }
}
