use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use mementos::report::{self, DatasetSummary};

use super::write_file;
use crate::Exit;

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Memento manifest (TSV).
    pub manifest: PathBuf,

    /// URI-R table, for the per-source and status tables.
    #[arg(long, value_name = "FILE")]
    pub urirs: Option<PathBuf>,

    /// Directory for the CSV files; without it the per-year table goes to stdout.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// CSV reports keyed by file name.
#[derive(Debug, Clone, Default)]
pub struct Reports {
    pub summary: DatasetSummary,
    pub files: Vec<(&'static str, String)>,
}

impl Reports {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.as_str())
    }
}

/// Builds every report from manifest text and an optional URI-R table.
pub fn build(manifest: &str, urir_table: Option<&str>) -> Result<Reports> {
    let rows = report::parse_manifest(manifest).context("manifest")?;
    let summary = report::finalize(&rows);
    let mut files = vec![
        ("urims-per-year.csv", report::urims_per_year_csv(&summary)),
        ("archive-totals.csv", report::archive_totals_csv(&summary)),
        ("year-histogram.csv", report::year_histogram_csv(&summary)),
        ("path-histogram.csv", report::path_histogram_csv(&summary)),
    ];
    if let Some(table) = urir_table {
        let resources = report::parse_urir_table(table).context("URI-R table")?;
        files.push(("source-path.csv", report::source_bucket_csv(&resources)));
        files.push(("status.csv", report::status_csv(&resources)));
    }
    Ok(Reports { summary, files })
}

pub fn run(args: &StatsArgs) -> Result<Exit> {
    let manifest = std::fs::read_to_string(&args.manifest)
        .with_context(|| format!("reading {}", args.manifest.display()))?;
    let table = args
        .urirs
        .as_ref()
        .map(|p| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let reports = build(&manifest, table.as_deref())?;
    match &args.out {
        Some(dir) => {
            for (name, text) in &reports.files {
                write_file(&dir.join(name), text)?;
            }
        }
        None => print!("{}", reports.get("urims-per-year.csv").unwrap_or_default()),
    }
    Ok(Exit::Ok)
}
