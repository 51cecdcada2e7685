//! Pitch predictor.
//!
//! Per frame, predicts a voicing logit and the speaker-normalized F0 from
//! full-length units, a speaker vector, and a two-channel positional code
//! telling each frame how far it sits from the start and end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignio::Utterance;
use crate::durmodel::mask_units;
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::layers::{receptive_field, ConvLayer1D, EmbeddingTable};
use crate::nn::tape::sigmoid;
use crate::nn::train::{fit, split_validation, EpochLog, LoopConfig, MaskSpec, TrainSummary, Trainable};
use crate::nn::{grad_check, mix_seed, AdamConfig, GradCheckOptions, GradCheckReport, Params, Tape, Tensor, Var};
use crate::pipeline::{SpeakerEntry, SpeakerTable};
use crate::scalar::Scalar;
use crate::unitseq::{
    denormalize_pitch, normalize_pitch, NormPitchContour, PitchContour, SpeakerStats, UnitId, MASK_ID, VOCAB_SIZE,
};

pub const CHECKPOINT_KIND: &str = "pitch";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PitchArch {
    pub unit_dim: usize,
    pub speaker_dim: usize,
    /// Width of the summed speaker and position projections.
    pub cond_dim: usize,
    pub channels: usize,
    pub layers: usize,
    pub kernel: usize,
}

impl Default for PitchArch {
    fn default() -> Self {
        PitchArch {
            unit_dim: 64,
            speaker_dim: 64,
            cond_dim: 64,
            channels: 128,
            layers: 3,
            kernel: 3,
        }
    }
}

impl PitchArch {
    pub fn validate(&self) -> Result<()> {
        if [self.unit_dim, self.speaker_dim, self.cond_dim, self.channels, self.layers].contains(&0) {
            return Err(Error::invalid("pitch model dimensions must be positive"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::invalid(format!("kernel width {} must be odd", self.kernel)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PitchTrainConfig {
    pub mask_prob: f64,
    /// Weight of the voiced-frame MSE term relative to BCE.
    pub mse_weight: f64,
    pub voicing_threshold: f64,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for PitchTrainConfig {
    fn default() -> Self {
        PitchTrainConfig {
            mask_prob: 0.1,
            mse_weight: 1.0,
            voicing_threshold: 0.5,
            adam: AdamConfig::default(),
            epochs: 30,
            batch_size: 8,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StoredArch {
    #[serde(flatten)]
    arch: PitchArch,
    voicing_threshold: f64,
}

#[derive(Clone, Debug)]
pub struct PitchPredictor<T: Scalar> {
    arch: PitchArch,
    speakers: SpeakerTable,
    voicing_threshold: f64,
    params: Params<T>,
    unit_emb: EmbeddingTable,
    spk_emb: EmbeddingTable,
    spk_proj: ConvLayer1D,
    pos_proj: ConvLayer1D,
    convs: Vec<ConvLayer1D>,
    voicing_head: ConvLayer1D,
    f0_head: ConvLayer1D,
}

/// Raw per-frame outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct PitchOutput<T> {
    pub logits: Vec<T>,
    pub f0_norm: Vec<T>,
}

/// `[2, len]` channels `i/(len−1)` and `1 − i/(len−1)`; both zero when `len == 1`.
pub fn positional_channels<T: Scalar>(len: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); 2 * len];
    if len >= 2 {
        let denom = (len - 1) as f64;
        for i in 0..len {
            let t = i as f64 / denom;
            data[i] = T::lit(t);
            data[len + i] = T::lit(1.0 - t);
        }
    }
    Tensor::new(2, len, data).expect("shape matches")
}

impl<T: Scalar> PitchPredictor<T> {
    pub fn new(arch: PitchArch, speakers: SpeakerTable, seed: u64) -> Result<Self> {
        arch.validate()?;
        if speakers.is_empty() {
            return Err(Error::invalid("speaker table is empty"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let unit_emb = EmbeddingTable::new(&mut params, "unit_emb", VOCAB_SIZE + 1, arch.unit_dim, &mut rng);
        let spk_emb = EmbeddingTable::new(&mut params, "speaker_emb", speakers.len(), arch.speaker_dim, &mut rng);
        let spk_proj = ConvLayer1D::new(&mut params, "speaker_proj", arch.speaker_dim, arch.cond_dim, 1, &mut rng)?;
        let pos_proj = ConvLayer1D::new(&mut params, "position_proj", 2, arch.cond_dim, 1, &mut rng)?;
        let mut convs = Vec::with_capacity(arch.layers);
        let mut cin = arch.unit_dim + arch.cond_dim;
        for i in 0..arch.layers {
            convs.push(ConvLayer1D::new(&mut params, &format!("conv{i}"), cin, arch.channels, arch.kernel, &mut rng)?);
            cin = arch.channels;
        }
        let voicing_head = ConvLayer1D::new(&mut params, "voicing_head", cin, 1, 1, &mut rng)?;
        let f0_head = ConvLayer1D::new(&mut params, "f0_head", cin, 1, 1, &mut rng)?;
        Ok(PitchPredictor {
            arch,
            speakers,
            voicing_threshold: 0.5,
            params,
            unit_emb,
            spk_emb,
            spk_proj,
            pos_proj,
            convs,
            voicing_head,
            f0_head,
        })
    }

    pub fn arch(&self) -> &PitchArch {
        &self.arch
    }

    pub fn speakers(&self) -> &SpeakerTable {
        &self.speakers
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    pub fn voicing_threshold(&self) -> f64 {
        self.voicing_threshold
    }

    pub fn set_voicing_threshold(&mut self, t: f64) -> Result<()> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::invalid(format!("voicing threshold {t} not in (0, 1)")));
        }
        self.voicing_threshold = t;
        Ok(())
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.arch.layers, self.arch.kernel)
    }

    /// Zeroes both heads so every frame outputs the given biases.
    pub fn zero_heads(&mut self, logit: T, f0_norm: T) {
        self.voicing_head.zero_init(&mut self.params, logit);
        self.f0_head.zero_init(&mut self.params, f0_norm);
    }

    /// Records the forward pass; returns `(logits, normalized f0)`, each `[1, len]`.
    pub fn forward(&self, tape: &mut Tape<'_, T>, units: &[UnitId], speaker: usize) -> Result<(Var, Var)> {
        if speaker >= self.speakers.len() {
            return Err(Error::UnknownSpeaker(format!("#{speaker}")));
        }
        let len = units.len();
        let idx: Vec<usize> = units.iter().map(|&u| usize::from(u)).collect();
        let u = self.unit_emb.forward(tape, &idx)?;
        let s = self.spk_emb.forward(tape, &vec![speaker; len])?;
        let s = self.spk_proj.forward(tape, s)?;
        let pos = tape.constant(positional_channels(len));
        let pos = self.pos_proj.forward(tape, pos)?;
        let cond = tape.add(s, pos)?;
        let mut h = tape.concat(u, cond)?;
        for conv in &self.convs {
            let z = conv.forward(tape, h)?;
            h = tape.relu(z);
        }
        let logits = self.voicing_head.forward(tape, h)?;
        let f0 = self.f0_head.forward(tape, h)?;
        Ok((logits, f0))
    }

    pub fn predict_raw(&self, units: &[UnitId], speaker: usize) -> Result<PitchOutput<T>> {
        if let Some(u) = units.iter().find(|&&u| u > MASK_ID) {
            return Err(Error::invalid(format!("unit id {u} outside the vocabulary")));
        }
        let mut tape = Tape::new(&self.params);
        let (l, f) = self.forward(&mut tape, units, speaker)?;
        Ok(PitchOutput {
            logits: tape.value(l).data.clone(),
            f0_norm: tape.value(f).data.clone(),
        })
    }

    /// Contour in Hz for `speaker`, denormalized with `stats`.
    pub fn predict_pitch(&self, units: &[UnitId], speaker: usize, stats: &SpeakerStats<f64>) -> Result<PitchContour<f64>> {
        let stats = SpeakerStats::new(stats.mean, stats.std)?;
        let out = self.predict_raw(units, speaker)?;
        let voiced = out
            .logits
            .iter()
            .map(|&z| sigmoid(z).as_f64() >= self.voicing_threshold)
            .collect();
        let norm = NormPitchContour::new(out.f0_norm.iter().map(|v| v.as_f64()).collect(), voiced)?;
        Ok(denormalize_pitch(&norm, &stats))
    }

    /// As [`predict_pitch`](Self::predict_pitch), using the table's stats for `speaker`.
    pub fn predict_for(&self, units: &[UnitId], speaker: &str) -> Result<PitchContour<f64>> {
        let i = self.speakers.index(speaker)?;
        self.predict_pitch(units, i, &self.speakers.stats(i))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let stored = StoredArch {
            arch: self.arch,
            voicing_threshold: self.voicing_threshold,
        };
        Checkpoint::new(
            CHECKPOINT_KIND,
            serde_json::to_value(stored).expect("arch serializes"),
            self.speakers.to_records(),
            &self.params,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let stored: StoredArch =
            serde_json::from_value(ck.arch.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let speakers = SpeakerTable::from_records(&ck.speakers)?;
        let mut model = PitchPredictor::new(stored.arch, speakers, 0)?;
        model
            .set_voicing_threshold(stored.voicing_threshold)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        ck.fill_params(&mut model.params)?;
        Ok(model)
    }
}

/// Records BCE over all frames plus `mse_weight` times MSE over voiced frames.
pub fn record_pitch_loss<T: Scalar>(
    tape: &mut Tape<'_, T>,
    logits: Var,
    f0: Var,
    labels: &NormPitchContour<T>,
    mse_weight: T,
) -> Result<Var> {
    let n = labels.len();
    if tape.value(logits).data.len() != n || tape.value(f0).data.len() != n {
        return Err(Error::shape(format!(
            "{} logits and {} f0 predictions for {n} labelled frames",
            tape.value(logits).data.len(),
            tape.value(f0).data.len()
        )));
    }
    let targets: Vec<T> = labels.voiced.iter().map(|&v| if v { T::one() } else { T::zero() }).collect();
    let bce = tape.bce_with_logits(logits, &targets)?;
    let mse = tape.mse(f0, &labels.values, Some(&labels.voiced))?;
    let mse = tape.scale(mse, mse_weight);
    tape.add(bce, mse)
}

pub fn pitch_loss<T: Scalar>(logits: &[T], f0: &[T], labels: &NormPitchContour<T>, mse_weight: T) -> Result<T> {
    let p = Params::new();
    let mut tape = Tape::new(&p);
    let l = tape.constant(Tensor::new(1, logits.len(), logits.to_vec())?);
    let f = tape.constant(Tensor::new(1, f0.len(), f0.to_vec())?);
    let loss = record_pitch_loss(&mut tape, l, f, labels, mse_weight)?;
    Ok(tape.value(loss).scalar())
}

#[derive(Clone, Debug)]
pub struct PitchExample<T> {
    pub units: Vec<UnitId>,
    pub labels: NormPitchContour<T>,
    pub speaker: usize,
}

struct PitchObjective<'m, T: Scalar> {
    model: &'m mut PitchPredictor<T>,
    mse_weight: T,
}

impl<T: Scalar> Trainable<T> for PitchObjective<'_, T> {
    type Example = PitchExample<T>;

    fn params(&self) -> &Params<T> {
        &self.model.params
    }

    fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.model.params
    }

    fn example_loss(&self, tape: &mut Tape<'_, T>, ex: &PitchExample<T>, mask: Option<MaskSpec>) -> Result<Var> {
        let units = match mask {
            Some(m) => mask_units(&ex.units, m.prob, m.seed),
            None => ex.units.clone(),
        };
        let (l, f) = self.model.forward(tape, &units, ex.speaker)?;
        record_pitch_loss(tape, l, f, &ex.labels, self.mse_weight)
    }
}

/// Full-length examples with labels normalized by each speaker's table stats.
pub fn pitch_examples<T: Scalar>(corpus: &[Utterance], speakers: &SpeakerTable) -> Result<Vec<PitchExample<T>>> {
    corpus
        .iter()
        .filter(|u| !u.units.is_empty())
        .map(|u| {
            let speaker = speakers.index(&u.speaker)?;
            let norm = normalize_pitch(&u.f0, &speakers.stats(speaker));
            Ok(PitchExample {
                units: u.units.as_slice().to_vec(),
                labels: NormPitchContour {
                    values: norm.values.iter().map(|&v| T::lit(v)).collect(),
                    voiced: norm.voiced,
                },
                speaker,
            })
        })
        .collect()
}

pub fn train_pitch<T: Scalar>(
    corpus: &[Utterance],
    arch: PitchArch,
    cfg: &PitchTrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(PitchPredictor<T>, TrainSummary)> {
    if corpus.is_empty() {
        return Err(Error::InsufficientData("training corpus is empty".into()));
    }
    let speakers = SpeakerTable::from_corpus(corpus)?;
    if speakers.len() < 2 {
        log::warn!("training on a single speaker; pitch conversion will be an identity mapping");
    }
    let examples = pitch_examples::<T>(corpus, &speakers)?;
    let (train, val) = split_validation(&examples, cfg.val_fraction);

    let mut model = PitchPredictor::new(arch, speakers, cfg.seed)?;
    model.set_voicing_threshold(cfg.voicing_threshold)?;
    let frames = train.iter().map(|e| e.labels.len()).sum::<usize>();
    let voiced = train.iter().flat_map(|e| &e.labels.voiced).filter(|&&v| v).count();
    if frames > 0 {
        // Start the voicing head at the log-odds of the voiced fraction.
        let p = (voiced as f64 / frames as f64).clamp(1e-3, 1.0 - 1e-3);
        model.zero_heads(T::lit((p / (1.0 - p)).ln()), T::zero());
    }

    let loop_cfg = LoopConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        mask_prob: cfg.mask_prob,
        adam: cfg.adam,
    };
    let mut objective = PitchObjective {
        model: &mut model,
        mse_weight: T::lit(cfg.mse_weight),
    };
    let summary = fit(&mut objective, &train, &val, &loop_cfg, on_epoch)?;
    Ok((model, summary))
}

/// Finite-difference check of the full pitch objective on a random
/// two-speaker model and a random 48-frame example.
pub fn grad_check_arch(arch: PitchArch, seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let speakers = SpeakerTable::new(
        ["a", "b"]
            .iter()
            .map(|id| SpeakerEntry {
                id: id.to_string(),
                stats: SpeakerStats { mean: 150.0, std: 30.0 },
            })
            .collect(),
    )?;
    let model = PitchPredictor::<f64>::new(arch, speakers, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1, 0));
    let units: Vec<UnitId> = (0..48).map(|_| rng.gen_range(0..=MASK_ID)).collect();
    let voiced: Vec<bool> = (0..48).map(|_| rng.gen_bool(0.7)).collect();
    let values = voiced.iter().map(|&v| if v { rng.gen_range(-2.0..2.0) } else { 0.0 }).collect();
    let labels = NormPitchContour { values, voiced };
    let mse_weight = PitchTrainConfig::default().mse_weight;
    grad_check(
        &model.params,
        |tape| {
            let (l, f) = model.forward(tape, &units, 1)?;
            record_pitch_loss(tape, l, f, &labels, mse_weight)
        },
        opts,
    )
}
