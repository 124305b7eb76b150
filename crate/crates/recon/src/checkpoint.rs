//! Checkpoint container: `TFRM` magic, u32 version, u64 header length, a JSON
//! header (configs, plan, patch, normalization, training record, tensor
//! table), then every parameter as little-endian f32 in table order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tfr_core::observation::Normalization;
use tfr_core::ObservationPlan;

use crate::error::{Error, Result};
use crate::mlp::{MlpConfig, NnBaselineConfig};
use crate::nn::ParamEntry;
use crate::patch::PatchSpec;
use crate::train::{LossHistory, TrainConfig};
use crate::unet::UNetConfig;

pub const MAGIC: &[u8; 4] = b"TFRM";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Unet,
    Mlp,
    NnBaseline,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Unet => "unet",
            ModelKind::Mlp => "mlp",
            ModelKind::NnBaseline => "nn-baseline",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    #[serde(default)]
    pub unet: Option<UNetConfig>,
    #[serde(default)]
    pub mlp: Option<MlpConfig>,
    #[serde(default)]
    pub nn_baseline: Option<NnBaselineConfig>,
    #[serde(default)]
    pub patch: Option<PatchSpec>,
    pub train: TrainConfig,
    pub normalization: Normalization,
    /// The observation plan in its text form.
    pub plan: String,
    /// Identifier of the dataset the model was trained on.
    #[serde(default)]
    pub dataset_id: String,
    pub history: LossHistory,
    pub tensors: Vec<ParamEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f32>,
}

impl Checkpoint {
    pub fn plan(&self) -> Result<ObservationPlan> {
        Ok(ObservationPlan::parse(&self.header.plan)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_reader(r: &mut impl Read) -> Result<Self> {
        let mut fixed = [0u8; 16];
        r.read_exact(&mut fixed)
            .map_err(|_| Error::Checkpoint("file shorter than the fixed header".into()))?;
        if &fixed[..4] != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(fixed[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(fixed[8..16].try_into().expect("8 bytes")) as usize;
        let mut hbytes = vec![0u8; hlen];
        r.read_exact(&mut hbytes)
            .map_err(|_| Error::Checkpoint("truncated header".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&hbytes)?;
        let total: usize = header.tensors.iter().map(|t| t.len()).sum();
        let mut raw = vec![0u8; 4 * total];
        r.read_exact(&mut raw)
            .map_err(|_| Error::Checkpoint(format!("truncated tensors: expected {total} values")))?;
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map_err(|e| Error::Checkpoint(e.to_string()))? != 0 {
            return Err(Error::Checkpoint("trailing bytes after tensors".into()));
        }
        let params = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        Ok(Checkpoint { header, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(&self.to_bytes()?)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(&mut BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tfr_core::observation::{select_points, Strategy};
    use tfr_core::Layout;

    fn sample() -> Checkpoint {
        let l = Layout::builtin("case1").unwrap().with_grid_n(32).unwrap();
        let plan = select_points(Strategy::Uniform, 4, &l, 0).unwrap();
        Checkpoint {
            header: CheckpointHeader {
                kind: ModelKind::Mlp,
                unet: None,
                mlp: Some(MlpConfig::patch(4, 3)),
                nn_baseline: None,
                patch: None,
                train: TrainConfig::default(),
                normalization: Normalization::default(),
                plan: plan.to_toml(),
                dataset_id: "x".into(),
                history: LossHistory::default(),
                tensors: vec![ParamEntry {
                    name: "w".into(),
                    offset: 0,
                    shape: vec![2, 3],
                }],
            },
            params: vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE, 0.0, -0.0],
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_reader(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.header, c.header);
    }

    #[test]
    fn truncation_and_bad_magic_are_reported() {
        let bytes = sample().to_bytes().unwrap();
        let cut = &bytes[..bytes.len() - 3];
        assert!(Checkpoint::from_reader(&mut &cut[..]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Checkpoint::from_reader(&mut bad.as_slice()),
            Err(Error::Checkpoint(_))
        ));
    }
}
