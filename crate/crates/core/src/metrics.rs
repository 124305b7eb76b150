//! MAE, CMAE, MaxAE and MT-AE, per sample and aggregated over a test split.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::Grid;
use crate::hashing;
use crate::layout::Layout;
use crate::observation::{extract_observations, ObservationPlan, ObservationSet};

/// Nodes covered by any heat source.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentMask {
    pub n: usize,
    pub cells: Vec<bool>,
}

impl ComponentMask {
    pub fn from_layout(layout: &Layout) -> Self {
        ComponentMask {
            n: layout.grid_n,
            cells: layout.component_mask(),
        }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn hash(&self) -> [u8; 64] {
        let mut bytes = (self.n as u64).to_le_bytes().to_vec();
        bytes.extend(self.cells.iter().map(|&c| c as u8));
        hashing::sha512(&bytes)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMetrics {
    pub mae: f64,
    pub cmae: f64,
    pub maxae: f64,
    pub mtae: f64,
}

pub fn compute_metrics(pred: &Grid, truth: &Grid, mask: &ComponentMask) -> Result<FieldMetrics> {
    pred.ensure_same_shape(truth)?;
    if mask.n != pred.n() {
        return Err(Error::Shape(format!(
            "mask side {} vs field side {}",
            mask.n,
            pred.n()
        )));
    }
    let covered = mask.count();
    if covered == 0 {
        return Err(Error::EmptyMask);
    }
    let mut sum = 0.0;
    let mut csum = 0.0;
    let mut maxae: f64 = 0.0;
    for ((&p, &t), &m) in pred.values().iter().zip(truth.values()).zip(&mask.cells) {
        let e = (p - t).abs();
        sum += e;
        maxae = maxae.max(e);
        if m {
            csum += e;
        }
    }
    Ok(FieldMetrics {
        mae: sum / pred.values().len() as f64,
        cmae: csum / covered as f64,
        maxae,
        mtae: (pred.max() - truth.max()).abs(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub mae: f64,
    pub cmae: f64,
    pub maxae: f64,
    pub mtae: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model_id: String,
    pub plan_id: String,
    pub dataset_id: String,
    pub mask_hash: String,
}

/// Means over samples; MaxAE is reported both as mean-of-max and set maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub samples: usize,
    pub mae: f64,
    pub cmae: f64,
    pub maxae: f64,
    pub maxae_set_max: f64,
    pub mtae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub meta: ReportMeta,
    pub records: Vec<SampleRecord>,
}

#[derive(Serialize, Deserialize)]
pub struct ReportSummary {
    pub meta: ReportMeta,
    pub aggregate: Aggregate,
}

impl MetricsReport {
    pub fn aggregate(&self) -> Aggregate {
        let k = self.records.len().max(1) as f64;
        let mean = |f: fn(&SampleRecord) -> f64| self.records.iter().map(f).sum::<f64>() / k;
        Aggregate {
            samples: self.records.len(),
            mae: mean(|r| r.mae),
            cmae: mean(|r| r.cmae),
            maxae: mean(|r| r.maxae),
            maxae_set_max: self.records.iter().map(|r| r.maxae).fold(0.0, f64::max),
            mtae: mean(|r| r.mtae),
        }
    }

    /// Recompute aggregates by plain summation and compare.
    fn verify_aggregate(&self, agg: &Aggregate) -> Result<()> {
        let k = self.records.len() as f64;
        let mut sums = [0.0f64; 4];
        let mut set_max = 0.0f64;
        for r in &self.records {
            sums[0] += r.mae;
            sums[1] += r.cmae;
            sums[2] += r.maxae;
            sums[3] += r.mtae;
            set_max = set_max.max(r.maxae);
        }
        let want = [agg.mae, agg.cmae, agg.maxae, agg.mtae];
        for (s, w) in sums.iter().zip(want) {
            let s = if k > 0.0 { s / k } else { 0.0 };
            if (s - w).abs() > 1e-9 * (1.0 + s.abs()) {
                return Err(Error::InvalidArgument(format!(
                    "aggregate {w} disagrees with recomputed {s}"
                )));
            }
        }
        if set_max != agg.maxae_set_max {
            return Err(Error::InvalidArgument("set maximum disagrees".into()));
        }
        Ok(())
    }

    /// Per-sample rows followed by `mean` and `max` footer rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let agg = self.aggregate();
        self.verify_aggregate(&agg)?;
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["index", "mae", "cmae", "maxae", "mtae"])?;
        for r in &self.records {
            w.write_record([
                r.index.to_string(),
                format!("{:.9}", r.mae),
                format!("{:.9}", r.cmae),
                format!("{:.9}", r.maxae),
                format!("{:.9}", r.mtae),
            ])?;
        }
        w.write_record([
            "mean".to_string(),
            format!("{:.9}", agg.mae),
            format!("{:.9}", agg.cmae),
            format!("{:.9}", agg.maxae),
            format!("{:.9}", agg.mtae),
        ])?;
        w.write_record([
            "max".to_string(),
            String::new(),
            String::new(),
            format!("{:.9}", agg.maxae_set_max),
            String::new(),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            meta: self.meta.clone(),
            aggregate: self.aggregate(),
        }
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let agg = self.aggregate();
        self.verify_aggregate(&agg)?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, &self.summary())?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Read back per-sample rows written by [`MetricsReport::write_csv`].
    pub fn read_csv(path: impl AsRef<Path>, meta: ReportMeta) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let Ok(index) = row[0].parse::<usize>() else {
                continue; // footer rows
            };
            let num = |i: usize| -> Result<f64> {
                row[i]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad number `{}`", &row[i])))
            };
            records.push(SampleRecord {
                index,
                mae: num(1)?,
                cmae: num(2)?,
                maxae: num(3)?,
                mtae: num(4)?,
            });
        }
        Ok(MetricsReport { meta, records })
    }
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<ReportSummary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Anything that maps sensor readings to a full field.
pub trait Reconstructor: Sync {
    fn name(&self) -> String;
    fn reconstruct(&self, obs: &ObservationSet) -> Result<Grid>;
}

/// Evaluate a reconstruction function over `samples`. `first_index` is the
/// dataset index of `samples[0]` and is what the report rows carry.
pub fn evaluate_with<F>(
    samples: &[Sample],
    first_index: usize,
    plan: &ObservationPlan,
    mask: &ComponentMask,
    meta: ReportMeta,
    exec: Exec,
    reconstruct: F,
) -> Result<MetricsReport>
where
    F: Fn(&ObservationSet, &Sample) -> Result<Grid> + Sync + Send,
{
    let records = exec.try_map_range(samples.len(), |i| {
        let s = &samples[i];
        let obs = extract_observations(&s.field, plan)?;
        let pred = reconstruct(&obs, s)?;
        let m = compute_metrics(&pred, &s.field.grid, mask)?;
        Ok::<_, Error>(SampleRecord {
            index: first_index + i,
            mae: m.mae,
            cmae: m.cmae,
            maxae: m.maxae,
            mtae: m.mtae,
        })
    })?;
    Ok(MetricsReport { meta, records })
}

pub fn evaluate<R: Reconstructor + ?Sized>(
    model: &R,
    samples: &[Sample],
    first_index: usize,
    plan: &ObservationPlan,
    mask: &ComponentMask,
    mut meta: ReportMeta,
    exec: Exec,
) -> Result<MetricsReport> {
    if meta.model_id.is_empty() {
        meta.model_id = model.name();
    }
    evaluate_with(samples, first_index, plan, mask, meta, exec, |obs, _| {
        model.reconstruct(obs)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(v: [f64; 4]) -> Grid {
        Grid::from_vec(2, v.to_vec()).unwrap()
    }

    #[test]
    fn hand_enumerated_two_by_two() {
        // rows listed bottom row first: [[1,2],[3,4]] vs [[1,2],[3,6]]
        let pred = g([1.0, 2.0, 3.0, 4.0]);
        let truth = g([1.0, 2.0, 3.0, 6.0]);
        let mask = ComponentMask {
            n: 2,
            cells: vec![true, true, false, false],
        };
        let m = compute_metrics(&pred, &truth, &mask).unwrap();
        assert!((m.mae - 0.5).abs() < 1e-12);
        assert_eq!(m.cmae, 0.0);
        assert_eq!(m.maxae, 2.0);
        assert_eq!(m.mtae, 2.0);
    }

    #[test]
    fn identical_fields_score_zero() {
        let a = g([300.0, 301.0, 302.0, 303.0]);
        let mask = ComponentMask {
            n: 2,
            cells: vec![true; 4],
        };
        assert_eq!(compute_metrics(&a, &a, &mask).unwrap(), FieldMetrics::default());
    }

    #[test]
    fn empty_mask_is_an_error() {
        let a = g([0.0; 4]);
        let mask = ComponentMask {
            n: 2,
            cells: vec![false; 4],
        };
        assert!(matches!(compute_metrics(&a, &a, &mask), Err(Error::EmptyMask)));
    }

    #[test]
    fn aggregate_is_mean_and_set_max() {
        let report = MetricsReport {
            meta: ReportMeta::default(),
            records: vec![
                SampleRecord { index: 0, mae: 1.0, cmae: 2.0, maxae: 3.0, mtae: 0.5 },
                SampleRecord { index: 1, mae: 3.0, cmae: 4.0, maxae: 5.0, mtae: 1.5 },
            ],
        };
        let a = report.aggregate();
        assert_eq!((a.mae, a.cmae, a.maxae, a.mtae), (2.0, 3.0, 4.0, 1.0));
        assert_eq!(a.maxae_set_max, 5.0);
        assert_eq!(a.samples, 2);
    }

    #[test]
    fn csv_round_trip_keeps_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let report = MetricsReport {
            meta: ReportMeta::default(),
            records: vec![SampleRecord { index: 7, mae: 0.25, cmae: 0.125, maxae: 1.0, mtae: 0.5 }],
        };
        report.write_csv(&path).unwrap();
        let back = MetricsReport::read_csv(&path, ReportMeta::default()).unwrap();
        assert_eq!(back.records, report.records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("index,mae,cmae,maxae,mtae"));
        assert!(text.contains("\nmean,"));
    }
}
