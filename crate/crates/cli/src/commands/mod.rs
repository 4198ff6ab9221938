pub mod diagnostics;
pub mod layers;
pub mod property;
pub mod synth;
pub mod theory;
pub mod wordvec;

use std::path::Path;

use repgeo::ingest::{read_bundle, ReprBundle};
use repgeo::property::BatchSummary;

use crate::failure::{CmdResult, Context};
use crate::report::{Cell, Report, Table};

pub(crate) fn load_bundle(flag: &str, path: &Path) -> CmdResult<ReprBundle> {
    read_bundle(path).file(flag, path)
}

pub(crate) fn summary_table() -> Table {
    Table::new("", &["scenario", "average", "min", "n_tests", "skipped"])
}

pub(crate) fn summary_row(s: &BatchSummary) -> Vec<Cell> {
    vec![
        s.scenario.clone().into(),
        s.average.into(),
        s.min.into(),
        s.n_tests.into(),
        s.skipped.into(),
    ]
}

/// Records a batch summary in the report and as a row of `table`.
pub(crate) fn add_batch(report: &mut Report, table: &mut Table, s: &BatchSummary) -> CmdResult<()> {
    report.summary("batch_summary", s)?;
    report.degenerate_skipped += s.skipped;
    table.push(summary_row(s));
    Ok(())
}
