//! End-to-end classifier: set encoder per acquisition, temporal encoder over
//! the sequence, MLP decoder to class logits.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Payload, PayloadKind, SequenceSample};
use crate::encoders::{AttentionRecord, EncoderTrace, TemporalConfig, TemporalEncoder};
use crate::error::{config_err, ConfigError, DataError, Error, Result};
use crate::nn::{mlp_param_count, validate_widths, Bound, Mlp, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Simplified pixel-set encoder: a shared per-pixel MLP, mean and standard
/// deviation pooling over pixels, then a second MLP to the embedding size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialConfig {
    pub in_channels: usize,
    /// Per-pixel MLP widths, starting with `in_channels`.
    pub pixel_mlp: Vec<usize>,
    /// Pooled MLP widths, starting with twice the per-pixel output width.
    pub pooled_mlp: Vec<usize>,
}

impl SpatialConfig {
    pub fn validate(&self) -> Result<()> {
        validate_widths(&self.pixel_mlp, "pixel_mlp")?;
        validate_widths(&self.pooled_mlp, "pooled_mlp")?;
        if self.pixel_mlp[0] != self.in_channels {
            return Err(ConfigError::MlpInputMismatch {
                expected: self.in_channels,
                found: self.pixel_mlp[0],
            }
            .into());
        }
        let pooled = 2 * self.pixel_mlp.last().unwrap();
        if self.pooled_mlp[0] != pooled {
            return Err(ConfigError::MlpInputMismatch {
                expected: pooled,
                found: self.pooled_mlp[0],
            }
            .into());
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        *self.pooled_mlp.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        mlp_param_count(&self.pixel_mlp) + mlp_param_count(&self.pooled_mlp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Absent when samples already carry embeddings.
    #[serde(default)]
    pub spatial: Option<SpatialConfig>,
    pub temporal: TemporalConfig,
    /// Decoder widths, from the temporal output width to `n_classes`.
    pub decoder: Vec<usize>,
    pub n_classes: usize,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.temporal.validate()?;
        if let Some(s) = &self.spatial {
            s.validate()?;
            if s.output_dim() != self.temporal.embed_dim() {
                return Err(ConfigError::MlpInputMismatch {
                    expected: self.temporal.embed_dim(),
                    found: s.output_dim(),
                }
                .into());
            }
        }
        validate_widths(&self.decoder, "decoder")?;
        if self.decoder[0] != self.temporal.output_dim() {
            return Err(ConfigError::MlpInputMismatch {
                expected: self.temporal.output_dim(),
                found: self.decoder[0],
            }
            .into());
        }
        if self.n_classes == 0 || *self.decoder.last().unwrap() != self.n_classes {
            return Err(config_err(format!(
                "decoder must end at the class count {}, got {:?}",
                self.n_classes, self.decoder
            )));
        }
        Ok(())
    }

    /// Payload kind the pipeline consumes.
    pub fn input_kind(&self) -> PayloadKind {
        if self.spatial.is_some() {
            PayloadKind::PixelSets
        } else {
            PayloadKind::Embeddings
        }
    }

    /// Channel count (pixel sets) or embedding size the input must have.
    pub fn input_width(&self) -> usize {
        match &self.spatial {
            Some(s) => s.in_channels,
            None => self.temporal.embed_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.spatial.as_ref().map_or(0, SpatialConfig::param_count)
            + self.temporal.param_count()
            + mlp_param_count(&self.decoder)
    }
}

#[derive(Clone, Debug)]
pub struct SpatialEncoder {
    pixel_mlp: Mlp,
    pooled_mlp: Mlp,
}

impl SpatialEncoder {
    fn new(config: &SpatialConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            pixel_mlp: Mlp::new(store, "spatial.pixel", &config.pixel_mlp, true, rng)?,
            pooled_mlp: Mlp::new(store, "spatial.pooled", &config.pooled_mlp, false, rng)?,
        })
    }

    /// Encodes every pixel set independently; returns `[E × T]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, sets: &[Tensor]) -> Result<Var> {
        if sets.is_empty() {
            return Err(Error::Contract("no observations to encode".into()));
        }
        let channels = sets[0].cols();
        let lens: Vec<usize> = sets.iter().map(Tensor::rows).collect();
        if let Some(step) = lens.iter().position(|&n| n == 0) {
            return Err(DataError::EmptyPixelSet { step }.into());
        }
        let mut stacked = Vec::with_capacity(lens.iter().sum::<usize>() * channels);
        for (t, s) in sets.iter().enumerate() {
            if s.rank() != 2 || s.cols() != channels {
                return Err(Error::Dimension {
                    op: "pixel set",
                    lhs: s.shape().to_vec(),
                    rhs: vec![lens[t], channels],
                });
            }
            stacked.extend_from_slice(s.data());
        }
        let pixels = tape.constant(Tensor::matrix(lens.iter().sum(), channels, stacked)?);
        let features = self.pixel_mlp.forward(tape, bound, pixels)?;
        let mean = tape.segment_mean(features, &lens)?;
        let spread = tape.repeat_rows(mean, &lens)?;
        let centered = tape.sub(features, spread)?;
        let squared = tape.mul(centered, centered)?;
        let var = tape.segment_mean(squared, &lens)?;
        let std = tape.sqrt(var);
        let pooled = tape.concat(&[mean, std], 1)?;
        let embedded = self.pooled_mlp.forward(tape, bound, pooled)?;
        tape.transpose(embedded)
    }
}

/// Tape handles of one classified sample.
#[derive(Clone, Debug)]
pub struct Forward {
    pub embeddings: Var,
    pub temporal: EncoderTrace,
    pub logits: Var,
}

/// A pipeline together with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: PipelineConfig,
    seed: u64,
    spatial: Option<SpatialEncoder>,
    temporal: TemporalEncoder,
    decoder: Mlp,
    params: ParamStore,
}

impl Model {
    /// Builds and initializes a model; identical `(config, seed)` give
    /// identical parameters.
    pub fn new(config: PipelineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let spatial = config
            .spatial
            .as_ref()
            .map(|s| SpatialEncoder::new(s, &mut params, &mut rng))
            .transpose()?;
        let temporal = TemporalEncoder::new(&config.temporal, &mut params, "temporal", &mut rng)?;
        let decoder = Mlp::new(&mut params, "decoder", &config.decoder, false, &mut rng)?;
        Ok(Self {
            config,
            seed,
            spatial,
            temporal,
            decoder,
            params,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn temporal(&self) -> &TemporalEncoder {
        &self.temporal
    }

    fn check_sample(&self, sample: &SequenceSample) -> Result<()> {
        let kind = sample.payload.kind();
        let width = sample.payload.width();
        if kind != self.config.input_kind() || width != self.config.input_width() {
            return Err(DataError::Inconsistent {
                id: sample.id.clone(),
                message: format!(
                    "model expects {:?} of width {}, sample has {kind:?} of width {width}",
                    self.config.input_kind(),
                    self.config.input_width()
                ),
            }
            .into());
        }
        if sample.seq_len() != self.config.temporal.seq_len() {
            return Err(DataError::Inconsistent {
                id: sample.id.clone(),
                message: format!(
                    "model expects {} steps, sample has {}",
                    self.config.temporal.seq_len(),
                    sample.seq_len()
                ),
            }
            .into());
        }
        Ok(())
    }

    /// Spatial stage only: `[E × T]` embeddings on the tape.
    pub fn embed(&self, tape: &mut Tape, bound: &Bound, sample: &SequenceSample) -> Result<Var> {
        self.check_sample(sample)?;
        match (&self.spatial, &sample.payload) {
            (Some(s), Payload::PixelSets(sets)) => s.forward(tape, bound, sets),
            (None, Payload::Embeddings(e)) => Ok(tape.constant(e.clone())),
            _ => unreachable!("payload kind checked above"),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        sample: &SequenceSample,
    ) -> Result<Forward> {
        let embeddings = self.embed(tape, bound, sample)?;
        let temporal = self
            .temporal
            .forward(tape, bound, embeddings, &sample.days)?;
        let width = tape.value(temporal.output).len();
        let row = tape.reshape(temporal.output, &[1, width])?;
        let decoded = self.decoder.forward(tape, bound, row)?;
        let logits = tape.reshape(decoded, &[self.config.n_classes])?;
        Ok(Forward {
            embeddings,
            temporal,
            logits,
        })
    }

    pub fn logits(&self, sample: &SequenceSample) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let fwd = self.forward(&mut tape, &bound, sample)?;
        Ok(tape.value(fwd.logits).clone())
    }

    pub fn predict(&self, sample: &SequenceSample) -> Result<usize> {
        Ok(argmax(self.logits(sample)?.data()))
    }

    /// Spatial embedding of a single `[N × C]` pixel set, as an `E`-vector.
    pub fn spatial_encode(&self, pixels: &Tensor) -> Result<Tensor> {
        let spatial = self
            .spatial
            .as_ref()
            .ok_or_else(|| Error::Contract("model has no spatial encoder".into()))?;
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let e = spatial.forward(&mut tape, &bound, std::slice::from_ref(pixels))?;
        tape.value(e).reshaped(&[tape.value(e).rows()])
    }

    /// Attention masks and outputs of the temporal encoder for one sample.
    pub fn attention(&self, sample: &SequenceSample) -> Result<AttentionRecord> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let fwd = self.forward(&mut tape, &bound, sample)?;
        Ok(fwd.temporal.record(&tape))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let params = self
            .params
            .iter()
            .map(|(name, t)| {
                if !t.all_finite() {
                    return Err(Error::Contract(format!("parameter {name} is not finite")));
                }
                Ok(NamedTensor {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            seed: self.seed,
            config: self.config.clone(),
            params,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(DataError::Checkpoint(format!(
                "unknown checkpoint format {:?}",
                ck.format
            ))
            .into());
        }
        let mut model = Model::new(ck.config.clone(), ck.seed)?;
        let mut store = ParamStore::new();
        for p in &ck.params {
            let t = Tensor::new(p.shape.clone(), p.values.clone())
                .map_err(|e| DataError::Checkpoint(format!("parameter {}: {e}", p.name)))?;
            store.add(p.name.clone(), t);
        }
        model.params.load_from(&store)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_checkpoint()?.to_text()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::from_text(&fs::read_to_string(path)?)?)
    }
}

pub const CHECKPOINT_FORMAT: &str = "ltae-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Model configuration plus every named parameter tensor, shape and
/// row-major values. Values are written in shortest round-trip decimal form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn to_text(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Contract(e.to_string()))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            DataError::Parse {
                line: e.line(),
                message: e.to_string(),
            }
            .into()
        })
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
