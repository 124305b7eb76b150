use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use tfr_core::metrics::{read_summary, Aggregate, MetricsReport, ReportMeta};

use crate::manifest::ManifestBuilder;
use crate::render::{bars_svg, lines_svg};
use crate::resolve_out;

#[derive(Args, Debug, Clone, Serialize)]
pub struct CompareArgs {
    /// Eval output directories (each holding report.csv and summary.json).
    #[arg(required = true, num_args = 2..)]
    pub reports: Vec<PathBuf>,
    /// Output directory (table.txt, table.csv, bars.svg, per_sample_mae.svg).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One loaded eval run.
pub struct Entry {
    pub dir: PathBuf,
    pub meta: ReportMeta,
    pub aggregate: Aggregate,
    pub report: MetricsReport,
}

pub fn load_entry(dir: &Path) -> Result<Entry> {
    let summary = read_summary(dir.join("summary.json")).with_context(|| format!("reading {}/summary.json", dir.display()))?;
    let report = MetricsReport::read_csv(dir.join("report.csv"), summary.meta.clone())
        .with_context(|| format!("reading {}/report.csv", dir.display()))?;
    if report.records.len() != summary.aggregate.samples {
        bail!(
            "{}: report.csv has {} rows but summary.json counts {}",
            dir.display(),
            report.records.len(),
            summary.aggregate.samples
        );
    }
    Ok(Entry {
        dir: dir.to_path_buf(),
        meta: summary.meta,
        aggregate: summary.aggregate,
        report,
    })
}

/// Reports are only comparable on the same samples scored with the same mask.
pub fn check_comparable(entries: &[Entry]) -> Result<()> {
    let first = &entries[0];
    let first_idx: Vec<usize> = first.report.records.iter().map(|r| r.index).collect();
    for e in &entries[1..] {
        if e.meta.dataset_id != first.meta.dataset_id {
            bail!(
                "refusing to compare reports on different datasets: {} ({}) vs {} ({})",
                first.dir.display(),
                first.meta.dataset_id,
                e.dir.display(),
                e.meta.dataset_id
            );
        }
        if e.meta.mask_hash != first.meta.mask_hash {
            bail!("{} and {} were scored with different component masks", first.dir.display(), e.dir.display());
        }
        if !e.report.records.iter().map(|r| r.index).eq(first_idx.iter().copied()) {
            bail!("{} and {} cover different samples", first.dir.display(), e.dir.display());
        }
    }
    Ok(())
}

const METRICS: [&str; 5] = ["MAE", "CMAE", "MaxAE", "MaxAE (set max)", "MT-AE"];

fn row(a: &Aggregate) -> [f64; 5] {
    [a.mae, a.cmae, a.maxae, a.maxae_set_max, a.mtae]
}

fn labels(entries: &[Entry]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for e in entries {
        let base = format!("{} [{}]", e.meta.model_id, e.meta.plan_id);
        let mut name = base.clone();
        let mut k = 2;
        while out.contains(&name) {
            name = format!("{base} #{k}");
            k += 1;
        }
        out.push(name);
    }
    out
}

/// Metrics down the side, one column per report.
pub fn render_table(entries: &[Entry]) -> String {
    let names = labels(entries);
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(12);
    let mut s = String::new();
    let _ = writeln!(s, "dataset {}, {} samples", entries[0].meta.dataset_id, entries[0].aggregate.samples);
    let _ = write!(s, "{:<16}", "metric (K)");
    for n in &names {
        let _ = write!(s, "  {n:>width$}");
    }
    s.push('\n');
    for (i, m) in METRICS.iter().enumerate() {
        let _ = write!(s, "{m:<16}");
        for e in entries {
            let _ = write!(s, "  {:>width$.4}", row(&e.aggregate)[i]);
        }
        s.push('\n');
    }
    s
}

fn write_csv(entries: &[Entry], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["metric".to_string()];
    header.extend(labels(entries));
    w.write_record(&header)?;
    for (i, m) in METRICS.iter().enumerate() {
        let mut rec = vec![m.to_string()];
        rec.extend(entries.iter().map(|e| format!("{:.9}", row(&e.aggregate)[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn compare(args: &CompareArgs) -> Result<PathBuf> {
    let mut man = ManifestBuilder::start("compare", false);
    man.config(args)?;
    let entries = args.reports.iter().map(|d| load_entry(d)).collect::<Result<Vec<_>>>()?;
    for e in &entries {
        man.input("report", &e.dir.join("report.csv"))?;
        man.input("summary", &e.dir.join("summary.json"))?;
    }
    check_comparable(&entries)?;

    let dir = resolve_out(args.out.as_deref(), &format!("compare-{}", entries[0].meta.dataset_id))?;
    crate::ensure_dir(&dir)?;
    let table = render_table(&entries);
    print!("{table}");
    let txt = dir.join("table.txt");
    std::fs::write(&txt, &table).with_context(|| format!("writing {}", txt.display()))?;
    let csv_path = dir.join("table.csv");
    write_csv(&entries, &csv_path)?;

    let names = labels(&entries);
    let bars = dir.join("bars.svg");
    let series: Vec<(String, Vec<f64>)> =
        names.iter().cloned().zip(entries.iter().map(|e| row(&e.aggregate).to_vec())).collect();
    bars_svg(&bars, &METRICS, &series)?;

    let per_sample = dir.join("per_sample_mae.svg");
    let xs: Vec<f64> = entries[0].report.records.iter().map(|r| r.index as f64).collect();
    let lines: Vec<(String, Vec<f64>)> = names
        .iter()
        .cloned()
        .zip(entries.iter().map(|e| e.report.records.iter().map(|r| r.mae).collect()))
        .collect();
    if xs.len() >= 2 {
        lines_svg(&per_sample, "per-sample MAE", ("sample index", "MAE (K)"), &xs, &lines)?;
    } else {
        man.note("a single sample per report: per-sample plot skipped");
    }

    for p in [&txt, &csv_path, &bars] {
        man.output("table", p)?;
    }
    if per_sample.exists() {
        man.output("plot", &per_sample)?;
    }
    man.finish(&dir.join("manifest.json"))?;
    Ok(dir)
}
