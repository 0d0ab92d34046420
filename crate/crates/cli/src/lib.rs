//! The `randlora` command line: argument types, text parsers and the
//! subcommand implementations. Every artifact carries the resolved run
//! configuration, and identical arguments give byte-identical artifacts.

pub mod args;
mod commands;
pub mod parse;

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use randlora::BasisSet;
use serde::Serialize;
use serde_json::{json, Value};

pub use args::{Cli, Command, Format};

/// A CSV table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: ToString>(headers: &[S]) -> Self {
        Self {
            headers: headers.iter().map(ToString::to_string).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if !self.headers.is_empty() {
            w.write_record(&self.headers)?;
        }
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(String::from_utf8(w.into_inner().context("flushing CSV")?)?)
    }
}

/// What a subcommand produced, before rendering.
pub struct Report {
    pub result: Value,
    /// Values derived from the arguments (defaults filled in, seeds, optimizer).
    pub resolved: Value,
    pub table: Table,
    /// A CSV written beside a JSON `--out` artifact (the landscape loss matrix).
    pub side_csv: Option<String>,
    /// A basis set to persist as a tensor container at `--out`.
    pub bases: Option<BasisSet>,
}

impl Report {
    fn new(result: impl Serialize, resolved: Value, table: Table) -> Result<Self> {
        Ok(Self {
            result: serde_json::to_value(result)?,
            resolved,
            table,
            side_csv: None,
            bases: None,
        })
    }
}

/// Rendered artifacts: the main document and any side files.
pub struct Rendered {
    pub main: String,
    pub files: Vec<(PathBuf, String)>,
    pub bases: Option<BasisSet>,
    pub config: Value,
}

pub fn config_value(cli: &Cli, resolved: &Value) -> Result<Value> {
    Ok(json!({ "cli": serde_json::to_value(cli)?, "resolved": resolved }))
}

pub fn render(cli: &Cli, report: Report) -> Result<Rendered> {
    let config = config_value(cli, &report.resolved)?;
    let main = match cli.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&json!({ "config": config, "result": report.result }))?;
            s.push('\n');
            s
        }
        Format::Csv => format!("# config: {}\n{}", serde_json::to_string(&config)?, report.table.render()?),
    };
    let mut files = Vec::new();
    if let (Some(out), Some(side), Format::Json) = (&cli.out, report.side_csv, cli.format) {
        files.push((out.with_extension("csv"), side));
    }
    Ok(Rendered {
        main,
        files,
        bases: report.bases,
        config,
    })
}

/// Run the subcommand without touching the filesystem for output.
pub fn execute(cli: &Cli) -> Result<Rendered> {
    let report = commands::dispatch(cli)?;
    render(cli, report)
}

pub fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        // Ignore the error raised when a pool already exists (repeated calls in-process).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let rendered = execute(cli)?;
    match (&cli.out, rendered.bases) {
        (Some(out), Some(set)) => {
            randlora::io::save_basis_set(out, &set, rendered.config)
                .with_context(|| format!("writing {}", out.display()))?;
            print!("{}", rendered.main);
        }
        (Some(out), None) => {
            fs::write(out, &rendered.main).with_context(|| format!("writing {}", out.display()))?;
        }
        (None, _) => print!("{}", rendered.main),
    }
    for (path, text) in rendered.files {
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
