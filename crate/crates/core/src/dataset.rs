//! Sample generation and the `TFR1` binary container.
//!
//! Layout of a file (all little-endian):
//!
//! ```text
//! magic "TFR1" | u32 version | u32 grid_n | u32 n_sources | u64 n_samples
//! | u64 rng_seed | u8 kind | [u8; 64] layout hash
//! then per sample: n_sources × f32 powers, grid_n² × f32 field (kelvin)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::Grid;
use crate::layout::{Layout, LayoutHash};
use crate::solver::{SteadySolver, TemperatureField};

pub const MAGIC: &[u8; 4] = b"TFR1";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8 + 1 + 64;
/// Largest source count the exhaustive on/off set is generated for.
pub const MAX_SPECIAL_SOURCES: usize = 16;
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    General = 0,
    Special = 1,
}

impl DatasetKind {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(DatasetKind::General),
            1 => Ok(DatasetKind::Special),
            other => Err(Error::Format(format!("unknown dataset kind {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u32,
    pub grid_n: u32,
    pub n_sources: u32,
    pub n_samples: u64,
    pub rng_seed: u64,
    pub kind: DatasetKind,
    pub layout_hash: LayoutHash,
}

impl DatasetHeader {
    /// Short identifier: kind, size, grid, seed and layout hash prefix.
    pub fn id(&self) -> String {
        let kind = match self.kind {
            DatasetKind::General => "general",
            DatasetKind::Special => "special",
        };
        format!(
            "{kind}-{}x{}-seed{}-{}",
            self.n_samples,
            self.grid_n,
            self.rng_seed,
            self.layout_hash.short()
        )
    }

    pub fn sample_bytes(&self) -> usize {
        4 * (self.n_sources as usize + (self.grid_n as usize).pow(2))
    }

    fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(MAGIC);
        b[4..8].copy_from_slice(&self.version.to_le_bytes());
        b[8..12].copy_from_slice(&self.grid_n.to_le_bytes());
        b[12..16].copy_from_slice(&self.n_sources.to_le_bytes());
        b[16..24].copy_from_slice(&self.n_samples.to_le_bytes());
        b[24..32].copy_from_slice(&self.rng_seed.to_le_bytes());
        b[32] = self.kind as u8;
        b[33..97].copy_from_slice(&self.layout_hash.0);
        b
    }

    fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if &b[0..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &b[0..4])));
        }
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported version {version} (expected {FORMAT_VERSION})"
            )));
        }
        Ok(DatasetHeader {
            version,
            grid_n: u32_at(8),
            n_sources: u32_at(12),
            n_samples: u64_at(16),
            rng_seed: u64_at(24),
            kind: DatasetKind::from_byte(b[32])?,
            layout_hash: LayoutHash(b[33..97].try_into().unwrap()),
        })
    }
}

/// One (power vector, steady field) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub powers: Vec<f64>,
    pub field: TemperatureField,
}

/// Draw each intensity independently and uniformly on [0, phi_max].
pub fn sample_powers<R: Rng + ?Sized>(layout: &Layout, rng: &mut R) -> Vec<f64> {
    layout
        .sources
        .iter()
        .map(|s| rng.gen_range(0.0..=s.phi_max))
        .collect()
}

/// Deterministic RNG substream for one sample of a seeded dataset.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Powers are rounded to f32 before solving so that a stored sample
/// reproduces its own field exactly.
fn storable(powers: Vec<f64>) -> Vec<f64> {
    powers.into_iter().map(|p| p as f32 as f64).collect()
}

/// The `index`-th general sample of a seeded dataset.
pub fn general_powers(layout: &Layout, seed: u64, index: u64) -> Vec<f64> {
    storable(sample_powers(layout, &mut sample_rng(seed, index)))
}

/// On/off powers for special-set sample `index`; source 0 is the least
/// significant bit.
pub fn special_powers(layout: &Layout, index: u64) -> Vec<f64> {
    layout
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| if index >> i & 1 == 1 { s.phi_max } else { 0.0 })
        .collect()
}

/// In-memory dataset: header plus samples.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Index of the first test sample: the first ⌊0.8·n⌋ samples train.
    pub fn split_index(&self) -> usize {
        split_index(self.samples.len())
    }

    pub fn train(&self) -> &[Sample] {
        &self.samples[..self.split_index()]
    }

    pub fn test(&self) -> &[Sample] {
        &self.samples[self.split_index()..]
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = DatasetWriter::create(path, self.header.clone())?;
        for s in &self.samples {
            w.push(s)?;
        }
        w.finish()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Dataset> {
        let reader = DatasetReader::open(path)?;
        let header = reader.header().clone();
        let samples = reader.collect::<Result<Vec<_>>>()?;
        Ok(Dataset { header, samples })
    }
}

pub fn split_index(n: usize) -> usize {
    (n as f64 * TRAIN_FRACTION).floor() as usize
}

fn header_for(layout: &Layout, n_samples: u64, seed: u64, kind: DatasetKind) -> DatasetHeader {
    DatasetHeader {
        version: FORMAT_VERSION,
        grid_n: layout.grid_n as u32,
        n_sources: layout.n_sources() as u32,
        n_samples,
        rng_seed: seed,
        kind,
        layout_hash: layout.hash(),
    }
}

fn solve_all(
    solver: &SteadySolver,
    count: u64,
    exec: Exec,
    powers_of: impl Fn(u64) -> Vec<f64> + Sync + Send,
) -> Result<Vec<Sample>> {
    exec.try_map_range(count as usize, |i| {
        let powers = powers_of(i as u64);
        let mut field = solver.solve(&powers).map_err(|e| Error::SampleFailed {
            index: i as u64,
            message: e.to_string(),
        })?;
        // keep in-memory samples identical to what the container stores
        field
            .grid
            .values_mut()
            .iter_mut()
            .for_each(|t| *t = *t as f32 as f64);
        Ok(Sample { powers, field })
    })
}

/// Generate `n_samples` general samples. Parallel and sequential runs give
/// identical samples because each one draws from its own (seed, index) stream.
pub fn generate_dataset(layout: &Layout, n_samples: u64, seed: u64, exec: Exec) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let solver = SteadySolver::new(layout)?;
    let samples = solve_all(&solver, n_samples, exec, |i| general_powers(layout, seed, i))?;
    Ok(Dataset {
        header: header_for(layout, n_samples, seed, DatasetKind::General),
        samples,
    })
}

/// All 2^n on/off power assignments, in binary counting order.
pub fn generate_special_set(layout: &Layout, exec: Exec) -> Result<Dataset> {
    let n = layout.n_sources();
    if n > MAX_SPECIAL_SOURCES {
        return Err(Error::InvalidArgument(format!(
            "special set needs 2^{n} samples; at most {MAX_SPECIAL_SOURCES} sources are supported"
        )));
    }
    let count = 1u64 << n;
    let solver = SteadySolver::new(layout)?;
    let samples = solve_all(&solver, count, exec, |i| special_powers(layout, i))?;
    Ok(Dataset {
        header: header_for(layout, count, 0, DatasetKind::Special),
        samples,
    })
}

/// Streaming writer; the header's `n_samples` must match what is pushed.
pub struct DatasetWriter {
    out: BufWriter<File>,
    header: DatasetHeader,
    written: u64,
    path: PathBuf,
}

impl DatasetWriter {
    pub fn create(path: impl AsRef<Path>, header: DatasetHeader) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(&header.to_bytes())
            .map_err(|e| Error::io(&path, e))?;
        Ok(DatasetWriter {
            out,
            header,
            written: 0,
            path,
        })
    }

    pub fn push(&mut self, sample: &Sample) -> Result<()> {
        let h = &self.header;
        if sample.powers.len() != h.n_sources as usize || sample.field.n() != h.grid_n as usize {
            return Err(Error::Shape("sample does not match dataset header".into()));
        }
        if sample.field.layout_hash != h.layout_hash {
            return Err(Error::LayoutMismatch(
                "sample field was solved on a different layout".into(),
            ));
        }
        if self.written == h.n_samples {
            return Err(Error::InvalidArgument(format!(
                "header declares {} samples",
                h.n_samples
            )));
        }
        let mut buf = Vec::with_capacity(h.sample_bytes());
        for &p in &sample.powers {
            buf.extend_from_slice(&(p as f32).to_le_bytes());
        }
        for &t in sample.field.grid.values() {
            buf.extend_from_slice(&(t as f32).to_le_bytes());
        }
        self.out
            .write_all(&buf)
            .map_err(|e| Error::io(&self.path, e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.header.n_samples {
            return Err(Error::InvalidArgument(format!(
                "wrote {} samples but header declares {}",
                self.written, self.header.n_samples
            )));
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Streaming reader yielding one sample at a time.
pub struct DatasetReader {
    input: BufReader<File>,
    header: DatasetHeader,
    read: u64,
    buf: Vec<u8>,
}

impl DatasetReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut input = BufReader::new(file);
        let mut hb = [0u8; HEADER_LEN];
        input
            .read_exact(&mut hb)
            .map_err(|_| Error::Format("file shorter than the header".into()))?;
        let header = DatasetHeader::from_bytes(&hb)?;
        let buf = vec![0u8; header.sample_bytes()];
        Ok(DatasetReader {
            input,
            header,
            read: 0,
            buf,
        })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    /// `Err(LayoutMismatch)` when the file was generated for another layout.
    /// Callers may treat this as a warning and keep reading.
    pub fn check_layout(&self, layout: &Layout) -> Result<()> {
        if self.header.layout_hash != layout.hash() {
            return Err(Error::LayoutMismatch(format!(
                "file {} vs layout {}",
                self.header.layout_hash.short(),
                layout.hash().short()
            )));
        }
        Ok(())
    }

    fn next_sample(&mut self) -> Result<Sample> {
        if let Err(e) = self.input.read_exact(&mut self.buf) {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                return Err(Error::Truncated {
                    expected: self.header.n_samples,
                    found: self.read,
                });
            }
            return Err(e.into());
        }
        let floats: Vec<f32> = self
            .buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let ns = self.header.n_sources as usize;
        let n = self.header.grid_n as usize;
        let powers = floats[..ns].iter().map(|&p| p as f64).collect();
        let grid = Grid::from_vec(n, floats[ns..].iter().map(|&t| t as f64).collect())?;
        self.read += 1;
        Ok(Sample {
            powers,
            field: TemperatureField {
                grid,
                layout_hash: self.header.layout_hash,
            },
        })
    }
}

impl Iterator for DatasetReader {
    type Item = Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read >= self.header.n_samples {
            return None;
        }
        let r = self.next_sample();
        if r.is_err() {
            // stop after the first error
            self.read = self.header.n_samples;
        }
        Some(r)
    }
}

/// Sink nodes at T0 and every value finite; used to spot-check loaded data.
pub fn check_field_invariants(layout: &Layout, field: &TemperatureField) -> Result<()> {
    if field.grid.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite temperature in field".into()));
    }
    let t0 = layout.sink_temperature() as f32 as f64;
    for col in layout.sink_columns() {
        if field.grid.get(0, col) != t0 {
            return Err(Error::Format(format!(
                "sink node (0, {col}) is {} instead of {t0}",
                field.grid.get(0, col)
            )));
        }
    }
    Ok(())
}
