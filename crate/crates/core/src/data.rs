//! Sequence datasets: JSON-lines storage and a synthetic generator.
//!
//! One record per line:
//!
//! ```text
//! {"id":"s0","label":2,"days":[0.0,13.0,...],"payload_kind":"pixel_sets","payload":[[[...C...],...N...],...T...]}
//! ```
//!
//! `embeddings` payloads hold `T` vectors of size `E`; `pixel_sets` payloads
//! hold `T` sets of `N` pixels with `C` channels each.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, DataError, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// `[E × T]` matrix, column `t` being the embedding of step `t`.
    Embeddings(Tensor),
    /// One `[N × C]` pixel matrix per step.
    PixelSets(Vec<Tensor>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Embeddings,
    PixelSets,
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Embeddings(_) => PayloadKind::Embeddings,
            Payload::PixelSets(_) => PayloadKind::PixelSets,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            Payload::Embeddings(e) => e.cols(),
            Payload::PixelSets(sets) => sets.len(),
        }
    }

    /// Embedding size `E` or channel count `C`.
    pub fn width(&self) -> usize {
        match self {
            Payload::Embeddings(e) => e.rows(),
            Payload::PixelSets(sets) => sets.first().map(Tensor::cols).unwrap_or(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample {
    pub id: String,
    pub label: usize,
    pub days: Vec<f64>,
    pub payload: Payload,
}

impl SequenceSample {
    pub fn seq_len(&self) -> usize {
        self.days.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| -> Error {
            DataError::Invariant {
                id: self.id.clone(),
                message,
            }
            .into()
        };
        if self.days.is_empty() {
            return Err(bad("sequence has no observations".into()));
        }
        if self.days.iter().any(|d| !d.is_finite()) {
            return Err(bad("non-finite day stamp".into()));
        }
        if let Some(i) = self.days.windows(2).position(|w| w[1] < w[0]) {
            return Err(bad(format!(
                "days decrease at step {}: {} after {}",
                i + 1,
                self.days[i + 1],
                self.days[i]
            )));
        }
        if self.payload.steps() != self.days.len() {
            return Err(bad(format!(
                "payload has {} steps but {} days",
                self.payload.steps(),
                self.days.len()
            )));
        }
        match &self.payload {
            Payload::Embeddings(e) => {
                if !e.all_finite() {
                    return Err(bad("non-finite embedding value".into()));
                }
            }
            Payload::PixelSets(sets) => {
                let c = self.payload.width();
                for (t, set) in sets.iter().enumerate() {
                    if set.cols() != c {
                        return Err(bad(format!(
                            "step {t} has {} channels, expected {c}",
                            set.cols()
                        )));
                    }
                    if !set.all_finite() {
                        return Err(bad(format!("non-finite pixel value at step {t}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Shape shared by every sample of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetShape {
    pub kind: PayloadKind,
    pub seq_len: usize,
    pub width: usize,
    pub n_labels: usize,
}

/// Validates every sample and checks that kind, `T` and `E`/`C` agree.
pub fn dataset_shape(samples: &[SequenceSample]) -> Result<DatasetShape> {
    let first = samples.first().ok_or(DataError::Empty)?;
    let shape = DatasetShape {
        kind: first.payload.kind(),
        seq_len: first.seq_len(),
        width: first.payload.width(),
        n_labels: samples.iter().map(|s| s.label + 1).max().unwrap_or(0),
    };
    for s in samples {
        s.validate()?;
        let found = (s.payload.kind(), s.seq_len(), s.payload.width());
        if found != (shape.kind, shape.seq_len, shape.width) {
            return Err(DataError::Inconsistent {
                id: s.id.clone(),
                message: format!(
                    "(kind, T, width) = {found:?}, dataset has {:?}",
                    (shape.kind, shape.seq_len, shape.width)
                ),
            }
            .into());
        }
    }
    Ok(shape)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawPayload {
    Embeddings(Vec<Vec<f64>>),
    PixelSets(Vec<Vec<Vec<f64>>>),
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    label: usize,
    days: Vec<f64>,
    payload_kind: PayloadKind,
    payload: RawPayload,
}

fn to_record(s: &SequenceSample) -> Record {
    let payload = match &s.payload {
        Payload::Embeddings(e) => {
            let t = e.transposed().expect("embeddings are a matrix");
            RawPayload::Embeddings(t.data().chunks(t.cols()).map(<[f64]>::to_vec).collect())
        }
        Payload::PixelSets(sets) => RawPayload::PixelSets(
            sets.iter()
                .map(|m| m.data().chunks(m.cols()).map(<[f64]>::to_vec).collect())
                .collect(),
        ),
    };
    Record {
        id: s.id.clone(),
        label: s.label,
        days: s.days.clone(),
        payload_kind: s.payload.kind(),
        payload,
    }
}

fn from_record(r: Record) -> std::result::Result<SequenceSample, String> {
    let payload = match (r.payload_kind, r.payload) {
        (PayloadKind::Embeddings, RawPayload::Embeddings(steps)) => {
            let per_step = Tensor::from_rows(&steps).map_err(|e| format!("embeddings: {e}"))?;
            Payload::Embeddings(per_step.transposed().map_err(|e| e.to_string())?)
        }
        (PayloadKind::PixelSets, RawPayload::PixelSets(sets)) => {
            let mut out = Vec::with_capacity(sets.len());
            for (t, pixels) in sets.iter().enumerate() {
                if pixels.is_empty() {
                    return Err(format!("empty pixel set at step {t}"));
                }
                out.push(Tensor::from_rows(pixels).map_err(|e| format!("pixel set {t}: {e}"))?);
            }
            Payload::PixelSets(out)
        }
        (kind, _) => return Err(format!("payload does not match payload_kind {kind:?}")),
    };
    Ok(SequenceSample {
        id: r.id,
        label: r.label,
        days: r.days,
        payload,
    })
}

/// Parses JSON-lines text. Days are shifted so the first observation is day 0.
pub fn parse_dataset(text: &str) -> Result<Vec<SequenceSample>> {
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| -> Error {
            DataError::Parse {
                line: i + 1,
                message,
            }
            .into()
        };
        let record: Record = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let mut sample = from_record(record).map_err(parse_err)?;
        sample.validate()?;
        let start = sample.days[0];
        sample.days.iter_mut().for_each(|d| *d -= start);
        samples.push(sample);
    }
    if samples.is_empty() {
        warn!("dataset contains no samples");
    } else {
        dataset_shape(&samples)?;
    }
    Ok(samples)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<SequenceSample>> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn write_dataset(mut out: impl Write, samples: &[SequenceSample]) -> Result<()> {
    for s in samples {
        let line =
            serde_json::to_string(&to_record(s)).map_err(|e| Error::Contract(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, samples: &[SequenceSample]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_dataset(&mut w, samples)?;
    w.flush()?;
    Ok(())
}

fn default_horizon() -> f64 {
    300.0
}

fn default_pixels() -> usize {
    16
}

fn default_payload() -> PayloadKind {
    PayloadKind::PixelSets
}

/// Parameters of the synthetic event-bump dataset.
///
/// Class `c` carries a unit-amplitude Gaussian bump in time, centred on
/// `centers[c]` (days) with standard deviation `widths[c]`, on every channel
/// listed in `event_channels`. All values get i.i.d. Gaussian noise of
/// standard deviation `noise`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub seq_len: usize,
    pub channels: usize,
    pub samples_per_class: usize,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub noise: f64,
    pub seed: u64,
    /// Last acquisition day; stamps are spread uniformly over `[0, horizon]`.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_pixels")]
    pub pixels: usize,
    #[serde(default = "default_payload")]
    pub payload: PayloadKind,
    /// Channels carrying the bump; defaults to the first half.
    #[serde(default)]
    pub event_channels: Option<Vec<usize>>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0
            || self.channels == 0
            || self.samples_per_class == 0
            || self.pixels == 0
        {
            return Err(config_err(
                "class, channel, sample and pixel counts must be positive",
            ));
        }
        if self.seq_len < 2 {
            return Err(config_err("synthetic sequences need at least 2 steps"));
        }
        if self.centers.len() != self.n_classes || self.widths.len() != self.n_classes {
            return Err(config_err(format!(
                "expected {} centers and widths, got {} and {}",
                self.n_classes,
                self.centers.len(),
                self.widths.len()
            )));
        }
        for (i, a) in self.centers.iter().enumerate() {
            if self.centers[i + 1..].contains(a) {
                return Err(config_err(format!(
                    "event center {a} is used by two classes"
                )));
            }
        }
        if self.widths.iter().any(|w| !(*w > 0.0)) || !(self.noise >= 0.0) || !(self.horizon > 0.0)
        {
            return Err(config_err(
                "widths and horizon must be positive, noise non-negative",
            ));
        }
        if self.event_channels().iter().any(|&c| c >= self.channels) {
            return Err(config_err("event channel out of range"));
        }
        Ok(())
    }

    pub fn event_channels(&self) -> Vec<usize> {
        self.event_channels
            .clone()
            .unwrap_or_else(|| (0..self.channels.div_ceil(2)).collect())
    }

    pub fn days(&self) -> Vec<f64> {
        let last = (self.seq_len - 1) as f64;
        (0..self.seq_len)
            .map(|t| self.horizon * t as f64 / last)
            .collect()
    }

    /// Noise-free value of an event channel for class `c` on `day`.
    pub fn bump(&self, class: usize, day: f64) -> f64 {
        let z = (day - self.centers[class]) / self.widths[class];
        (-0.5 * z * z).exp()
    }
}

/// Generates `samples_per_class` samples per class, classes interleaved.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Vec<SequenceSample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| config_err(e.to_string()))?;
    let days = spec.days();
    let mut event = vec![false; spec.channels];
    for c in spec.event_channels() {
        event[c] = true;
    }
    let (t_len, c_len) = (spec.seq_len, spec.channels);

    let mut samples = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    for i in 0..spec.samples_per_class {
        for class in 0..spec.n_classes {
            let clean: Vec<f64> = days.iter().map(|&d| spec.bump(class, d)).collect();
            let payload = match spec.payload {
                PayloadKind::Embeddings => {
                    let mut data = vec![0.0; c_len * t_len];
                    for c in 0..c_len {
                        for t in 0..t_len {
                            let signal = if event[c] { clean[t] } else { 0.0 };
                            data[c * t_len + t] = signal + noise.sample(&mut rng);
                        }
                    }
                    Payload::Embeddings(Tensor::matrix(c_len, t_len, data)?)
                }
                PayloadKind::PixelSets => {
                    let sets = (0..t_len)
                        .map(|t| {
                            let data = (0..spec.pixels * c_len)
                                .map(|j| {
                                    let signal = if event[j % c_len] { clean[t] } else { 0.0 };
                                    signal + noise.sample(&mut rng)
                                })
                                .collect();
                            Tensor::matrix(spec.pixels, c_len, data)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Payload::PixelSets(sets)
                }
            };
            samples.push(SequenceSample {
                id: format!("s{}", i * spec.n_classes + class),
                label: class,
                days: days.clone(),
                payload,
            });
        }
    }
    Ok(samples)
}
