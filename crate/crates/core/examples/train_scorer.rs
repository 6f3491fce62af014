//! Ingests a ChemFluor-format file, cross-validates the three MLP
//! predictors and reports metrics. Defaults to the bundled 50-row fixture.
//!
//! `cargo run --release --example train_scorer -- path/to/chemfluor.csv`

use std::path::PathBuf;

use anyhow::Result;
use fluorogen::dataset::{curate_task, ingest_chemfluor, ColumnMap, Task};
use fluorogen::scorers::{cross_validate, TrainConfig, CV_REPORT_HEADER};

fn main() -> Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/chemfluor_fixture.csv"));
    let ingested = ingest_chemfluor(&path, &ColumnMap::default())?;
    println!("{} rows, {} records, {} rejected", ingested.rows_read, ingested.records.len(), ingested.rejections.len());
    for r in &ingested.rejections {
        println!("  line {}: {}", r.line, r.reason);
    }

    let small = ingested.records.len() < 500;
    let config = if small { TrainConfig { hidden_dim: 32, epochs: 30, ..TrainConfig::default() } } else { TrainConfig::default() };
    let folds = if small { 5 } else { 10 };
    println!("\n{CV_REPORT_HEADER}");
    for task in Task::ALL {
        let data = curate_task(&ingested.records, task)?;
        let report = cross_validate(&data, folds, &config)?;
        println!("{report}");
    }
    Ok(())
}
