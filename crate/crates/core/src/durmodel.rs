//! Rhythm predictor.
//!
//! Regresses one duration (in frames) per deduplicated unit from a short
//! window of neighbouring units plus a speaker vector. The speaker vector is
//! concatenated to the unit embedding at every position, so swapping it at
//! inference re-times the same content in another speaker's rhythm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignio::Utterance;
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::layers::{receptive_field, ConvLayer1D, EmbeddingTable};
use crate::nn::train::{fit, split_validation, EpochLog, LoopConfig, MaskSpec, TrainSummary, Trainable};
use crate::nn::{grad_check, mix_seed, AdamConfig, GradCheckOptions, GradCheckReport, Params, Tape, Tensor, Var};
use crate::pipeline::{SpeakerEntry, SpeakerTable};
use crate::scalar::Scalar;
use crate::unitseq::{dedup, SpeakerStats, UnitId, MASK_ID, VOCAB_SIZE};

pub const CHECKPOINT_KIND: &str = "duration";
/// Upper bound on how many neighbouring units one prediction may see.
pub const MAX_RECEPTIVE_FIELD: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurArch {
    pub unit_dim: usize,
    pub speaker_dim: usize,
    pub channels: usize,
    pub layers: usize,
    pub kernel: usize,
}

impl Default for DurArch {
    fn default() -> Self {
        DurArch {
            unit_dim: 64,
            speaker_dim: 64,
            channels: 128,
            layers: 3,
            kernel: 3,
        }
    }
}

impl DurArch {
    pub fn validate(&self) -> Result<()> {
        if self.unit_dim == 0 || self.speaker_dim == 0 || self.channels == 0 || self.layers == 0 {
            return Err(Error::invalid("duration model dimensions must be positive"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::invalid(format!("kernel width {} must be odd", self.kernel)));
        }
        let rf = receptive_field(self.layers, self.kernel);
        if rf > MAX_RECEPTIVE_FIELD {
            return Err(Error::invalid(format!(
                "receptive field {rf} exceeds {MAX_RECEPTIVE_FIELD} units"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DurTrainConfig {
    pub mask_prob: f64,
    pub group_size: usize,
    pub group_loss_weight: f64,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for DurTrainConfig {
    fn default() -> Self {
        DurTrainConfig {
            mask_prob: 0.1,
            group_size: 4,
            group_loss_weight: 1.0,
            adam: AdamConfig::default(),
            epochs: 30,
            batch_size: 8,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DurPredictor<T: Scalar> {
    arch: DurArch,
    speakers: SpeakerTable,
    params: Params<T>,
    unit_emb: EmbeddingTable,
    spk_emb: EmbeddingTable,
    convs: Vec<ConvLayer1D>,
    head: ConvLayer1D,
}

impl<T: Scalar> DurPredictor<T> {
    /// Randomly initialized model for the given closed speaker set.
    pub fn new(arch: DurArch, speakers: SpeakerTable, seed: u64) -> Result<Self> {
        arch.validate()?;
        if speakers.is_empty() {
            return Err(Error::invalid("speaker table is empty"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let unit_emb = EmbeddingTable::new(&mut params, "unit_emb", VOCAB_SIZE + 1, arch.unit_dim, &mut rng);
        let spk_emb = EmbeddingTable::new(&mut params, "speaker_emb", speakers.len(), arch.speaker_dim, &mut rng);
        let mut convs = Vec::with_capacity(arch.layers);
        let mut cin = arch.unit_dim + arch.speaker_dim;
        for i in 0..arch.layers {
            convs.push(ConvLayer1D::new(&mut params, &format!("conv{i}"), cin, arch.channels, arch.kernel, &mut rng)?);
            cin = arch.channels;
        }
        let head = ConvLayer1D::new(&mut params, "head", cin, 1, 1, &mut rng)?;
        Ok(DurPredictor {
            arch,
            speakers,
            params,
            unit_emb,
            spk_emb,
            convs,
            head,
        })
    }

    pub fn arch(&self) -> &DurArch {
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

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.arch.layers, self.arch.kernel)
    }

    pub fn speaker_embedding(&self, speaker: usize) -> &[T] {
        self.spk_emb.row(&self.params, speaker)
    }

    /// Zeroes the regression head so every prediction equals `bias`.
    pub fn zero_head(&mut self, bias: T) {
        self.head.zero_init(&mut self.params, bias);
    }

    /// Records the forward pass; returns a `[1, len]` node of durations.
    pub fn forward(&self, tape: &mut Tape<'_, T>, units: &[UnitId], speaker: usize) -> Result<Var> {
        if speaker >= self.speakers.len() {
            return Err(Error::UnknownSpeaker(format!("#{speaker}")));
        }
        let idx: Vec<usize> = units.iter().map(|&u| usize::from(u)).collect();
        let u = self.unit_emb.forward(tape, &idx)?;
        let s = self.spk_emb.forward(tape, &vec![speaker; idx.len()])?;
        let mut h = tape.concat(u, s)?;
        for conv in &self.convs {
            let z = conv.forward(tape, h)?;
            h = tape.relu(z);
        }
        self.head.forward(tape, h)
    }

    /// Real-valued duration per deduplicated unit.
    pub fn predict(&self, units: &[UnitId], speaker: usize) -> Result<Vec<T>> {
        if let Some(u) = units.iter().find(|&&u| u > MASK_ID) {
            return Err(Error::invalid(format!("unit id {u} outside the vocabulary")));
        }
        let mut tape = Tape::new(&self.params);
        let y = self.forward(&mut tape, units, speaker)?;
        Ok(tape.value(y).data.clone())
    }

    pub fn predict_for(&self, units: &[UnitId], speaker: &str) -> Result<Vec<T>> {
        self.predict(units, self.speakers.index(speaker)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            CHECKPOINT_KIND,
            serde_json::to_value(self.arch).expect("arch serializes"),
            self.speakers.to_records(),
            &self.params,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let arch: DurArch =
            serde_json::from_value(ck.arch.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let speakers = SpeakerTable::from_records(&ck.speakers)?;
        let mut model = DurPredictor::new(arch, speakers, 0)?;
        ck.fill_params(&mut model.params)?;
        Ok(model)
    }
}

/// Replaces each unit by [`MASK_ID`] independently with probability `p`.
pub fn mask_units(units: &[UnitId], p: f64, seed: u64) -> Vec<UnitId> {
    if p <= 0.0 {
        return units.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units
        .iter()
        .map(|&u| if rng.gen::<f64>() < p { MASK_ID } else { u })
        .collect()
}

/// Records per-unit MSE plus `weight` times the MSE between sums of
/// consecutive groups of `group_size` units (trailing partial group included).
pub fn record_dur_loss<T: Scalar>(
    tape: &mut Tape<'_, T>,
    pred: Var,
    target: &[T],
    group_size: usize,
    weight: T,
) -> Result<Var> {
    if tape.value(pred).data.len() != target.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} target durations",
            tape.value(pred).data.len(),
            target.len()
        )));
    }
    if group_size == 0 {
        return Err(Error::invalid("group size must be at least 1"));
    }
    let unit_term = tape.mse(pred, target, None)?;
    let sums = tape.group_sum(pred, group_size)?;
    let target_sums: Vec<T> = target.chunks(group_size).map(|c| c.iter().copied().sum()).collect();
    let group_term = tape.mse(sums, &target_sums, None)?;
    let weighted = tape.scale(group_term, weight);
    tape.add(unit_term, weighted)
}

pub fn dur_loss<T: Scalar>(pred: &[T], target: &[T], group_size: usize, weight: T) -> Result<T> {
    let p = Params::new();
    let mut tape = Tape::new(&p);
    let x = tape.constant(Tensor::new(1, pred.len(), pred.to_vec())?);
    let l = record_dur_loss(&mut tape, x, target, group_size, weight)?;
    Ok(tape.value(l).scalar())
}

/// Integer durations from real predictions, with the left-to-right rounding
/// remainder carried forward.
#[derive(Clone, Debug, PartialEq)]
pub struct CarryoverRounding {
    pub durations: Vec<usize>,
    /// Final accumulator `Σ p − Σ durations`; negative after clamping to 1.
    pub residual: f64,
}

pub fn round_carryover<T: Scalar>(preds: &[T]) -> Result<CarryoverRounding> {
    let mut acc = 0.0f64;
    let mut durations = Vec::with_capacity(preds.len());
    for (i, p) in preds.iter().enumerate() {
        let p = p.as_f64();
        if !p.is_finite() {
            return Err(Error::invalid(format!("duration prediction {i} is {p}")));
        }
        // f64::round rounds half away from zero.
        let v = (p + acc).round().max(1.0);
        acc = p + acc - v;
        durations.push(v as usize);
    }
    Ok(CarryoverRounding {
        durations,
        residual: acc,
    })
}

#[derive(Clone, Debug)]
pub struct DurExample<T> {
    pub units: Vec<UnitId>,
    pub durations: Vec<T>,
    pub speaker: usize,
}

struct DurObjective<'m, T: Scalar> {
    model: &'m mut DurPredictor<T>,
    group_size: usize,
    weight: T,
}

impl<T: Scalar> Trainable<T> for DurObjective<'_, T> {
    type Example = DurExample<T>;

    fn params(&self) -> &Params<T> {
        &self.model.params
    }

    fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.model.params
    }

    fn example_loss(&self, tape: &mut Tape<'_, T>, ex: &DurExample<T>, mask: Option<MaskSpec>) -> Result<Var> {
        let units = match mask {
            Some(m) => mask_units(&ex.units, m.prob, m.seed),
            None => ex.units.clone(),
        };
        let pred = self.model.forward(tape, &units, ex.speaker)?;
        record_dur_loss(tape, pred, &ex.durations, self.group_size, self.weight)
    }
}

/// Deduplicated training examples; empty utterances are skipped.
pub fn duration_examples<T: Scalar>(corpus: &[Utterance], speakers: &SpeakerTable) -> Result<Vec<DurExample<T>>> {
    corpus
        .iter()
        .filter(|u| !u.units.is_empty())
        .map(|u| {
            let rle = dedup(&u.units);
            Ok(DurExample {
                units: rle.units(),
                durations: rle
                    .durations()
                    .into_iter()
                    .map(|d| T::from_usize(d).expect("duration fits"))
                    .collect(),
                speaker: speakers.index(&u.speaker)?,
            })
        })
        .collect()
}

/// Trains a duration predictor on every speaker present in `corpus`.
pub fn train_duration<T: Scalar>(
    corpus: &[Utterance],
    arch: DurArch,
    cfg: &DurTrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(DurPredictor<T>, TrainSummary)> {
    if corpus.is_empty() {
        return Err(Error::InsufficientData("training corpus is empty".into()));
    }
    if cfg.group_size == 0 {
        return Err(Error::invalid("group_size must be at least 1"));
    }
    let speakers = SpeakerTable::from_corpus(corpus)?;
    if speakers.len() < 2 {
        log::warn!("training on a single speaker; rhythm conversion will be an identity mapping");
    }
    let examples = duration_examples::<T>(corpus, &speakers)?;
    let (train, val) = split_validation(&examples, cfg.val_fraction);

    let mut model = DurPredictor::new(arch, speakers, cfg.seed)?;
    let frames: f64 = train.iter().flat_map(|e| &e.durations).map(|d| d.as_f64()).sum();
    let count = train.iter().map(|e| e.durations.len()).sum::<usize>().max(1);
    // Start from the constant mean-duration predictor.
    model.zero_head(T::lit(frames / count as f64));

    let loop_cfg = LoopConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        mask_prob: cfg.mask_prob,
        adam: cfg.adam,
    };
    let mut objective = DurObjective {
        model: &mut model,
        group_size: cfg.group_size,
        weight: T::lit(cfg.group_loss_weight),
    };
    let summary = fit(&mut objective, &train, &val, &loop_cfg, on_epoch)?;
    Ok((model, summary))
}

/// Loss of `model` on a full example (no masking), with the same objective as training.
pub fn example_loss<T: Scalar>(model: &DurPredictor<T>, ex: &DurExample<T>, cfg: &DurTrainConfig) -> Result<T> {
    let mut tape = Tape::new(&model.params);
    let pred = model.forward(&mut tape, &ex.units, ex.speaker)?;
    let l = record_dur_loss(&mut tape, pred, &ex.durations, cfg.group_size, T::lit(cfg.group_loss_weight))?;
    Ok(tape.value(l).scalar())
}

/// Finite-difference check of the full duration objective on a random
/// two-speaker model and a random 32-unit example.
pub fn grad_check_arch(arch: DurArch, seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let speakers = SpeakerTable::new(
        ["a", "b"]
            .iter()
            .map(|id| SpeakerEntry {
                id: id.to_string(),
                stats: SpeakerStats { mean: 150.0, std: 30.0 },
            })
            .collect(),
    )?;
    let model = DurPredictor::<f64>::new(arch, speakers, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1, 0));
    let units: Vec<UnitId> = (0..32).map(|_| rng.gen_range(0..=MASK_ID)).collect();
    let durations: Vec<f64> = (0..32).map(|_| rng.gen_range(1..=8) as f64).collect();
    let cfg = DurTrainConfig::default();
    grad_check(
        &model.params,
        |tape| {
            let pred = model.forward(tape, &units, 1)?;
            record_dur_loss(tape, pred, &durations, cfg.group_size, cfg.group_loss_weight)
        },
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::speakers::SpeakerEntry;
    use crate::unitseq::SpeakerStats;
    use proptest::prelude::*;

    pub(crate) fn table(n: usize) -> SpeakerTable {
        SpeakerTable::new(
            (0..n)
                .map(|i| SpeakerEntry {
                    id: format!("s{i}"),
                    stats: SpeakerStats { mean: 100.0, std: 10.0 },
                })
                .collect(),
        )
        .unwrap()
    }

    fn small() -> DurArch {
        DurArch {
            unit_dim: 4,
            speaker_dim: 3,
            channels: 5,
            layers: 2,
            kernel: 3,
        }
    }

    #[test]
    fn mask_examples() {
        let u: Vec<UnitId> = (0..50).collect();
        assert_eq!(mask_units(&u, 0.0, 1), u);
        let almost = mask_units(&u, 1.0 - 1e-12, 1);
        assert!(almost.iter().all(|&x| x == MASK_ID));
        assert_eq!(mask_units(&u, 0.5, 42), mask_units(&u, 0.5, 42));
        let half = mask_units(&u, 0.5, 42);
        let masked = half.iter().filter(|&&x| x == MASK_ID).count();
        assert!((10..=40).contains(&masked));
    }

    #[test]
    fn dur_loss_examples() {
        assert_eq!(dur_loss(&[1.0f64, 2.0, 3.0], &[1.0, 2.0, 3.0], 4, 1.0).unwrap(), 0.0);
        let w = 0.7;
        assert_eq!(dur_loss(&[2.0f64; 4], &[1.0, 3.0, 1.0, 3.0], 4, w).unwrap(), 1.0);
        assert_eq!(dur_loss(&[2.0f64; 4], &[1.0; 4], 4, w).unwrap(), 1.0 + w * 16.0);
        assert!(dur_loss(&[1.0f64], &[1.0, 2.0], 4, 1.0).is_err());
    }

    #[test]
    fn dur_loss_partial_group() {
        // Groups [0..4) and [4..6): sums (4 vs 4) and (2 vs 0) -> group MSE = (0 + 4)/2.
        let l = dur_loss(&[1.0f64; 6], &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0], 4, 1.0).unwrap();
        assert!((l - (2.0 / 6.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn carryover_examples() {
        assert_eq!(round_carryover(&[2.0f64, 3.0, 1.0]).unwrap().durations, vec![2, 3, 1]);
        let r = round_carryover(&[1.51f64; 4]).unwrap();
        assert_eq!(r.durations, vec![2, 1, 2, 1]);
        assert_eq!(r.durations.iter().sum::<usize>(), (6.04f64).round() as usize);
        let r = round_carryover(&[0.2f64, 0.2]).unwrap();
        assert_eq!(r.durations, vec![1, 1]);
        assert!((r.residual + 1.6).abs() < 1e-12);
        let r = round_carryover(&[2.5f64]).unwrap();
        assert_eq!(r.durations, vec![3]);
        assert!(round_carryover(&[f64::NAN]).is_err());
    }

    #[test]
    fn forward_shape_and_zero_head() {
        let mut m = DurPredictor::<f64>::new(small(), table(2), 5).unwrap();
        for len in [0usize, 1, 2, 9] {
            let units: Vec<UnitId> = (0..len as u16).map(|i| i * 7 % 100).collect();
            assert_eq!(m.predict(&units, 1).unwrap().len(), len);
        }
        m.zero_head(2.5);
        assert!(m.predict(&[3, 9, 27, 81], 0).unwrap().iter().all(|&v| v == 2.5));
        assert!(matches!(m.predict(&[1], 2), Err(Error::UnknownSpeaker(_))));
        assert!(m.predict_for(&[1], "nobody").is_err());
        assert!(m.predict(&[MASK_ID + 1], 0).is_err());
    }

    #[test]
    fn receptive_field_limited() {
        assert_eq!(DurPredictor::<f32>::new(DurArch::default(), table(1), 0).unwrap().receptive_field(), 7);
        let wide = DurArch { layers: 4, ..DurArch::default() };
        assert!(DurPredictor::<f32>::new(wide, table(1), 0).is_err());
        // A unit outside the receptive field cannot change a prediction.
        let m = DurPredictor::<f64>::new(small(), table(1), 1).unwrap();
        let a = m.predict(&[1, 2, 3, 4, 5, 6, 7, 8], 0).unwrap();
        let b = m.predict(&[1, 2, 3, 4, 5, 6, 7, 99], 0).unwrap();
        assert_eq!(a[..5], b[..5]);
        assert_ne!(a[7], b[7]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = DurPredictor::<f32>::new(small(), table(3), 8).unwrap();
        let ck = Checkpoint::from_json(&m.to_checkpoint().to_json().unwrap()).unwrap();
        let back = DurPredictor::<f32>::from_checkpoint(&ck).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.speakers(), m.speakers());
        assert_eq!(back.predict(&[4, 5, 6], 2).unwrap(), m.predict(&[4, 5, 6], 2).unwrap());
    }

    proptest! {
        #[test]
        fn carryover_preserves_total(p in prop::collection::vec(1.5f64..12.0, 0..300)) {
            let r = round_carryover(&p).unwrap();
            let raw: f64 = p.iter().sum();
            let got: usize = r.durations.iter().sum();
            prop_assert!((got as f64 - raw).abs() <= 0.5 + 1e-9);
            prop_assert!(r.durations.iter().all(|&d| d >= 1));
        }

        #[test]
        fn dur_loss_nonnegative_zero_iff_equal(
            t in prop::collection::vec(0.0f64..10.0, 1..20),
            d in prop::collection::vec(-3.0f64..3.0, 20),
        ) {
            let p: Vec<f64> = t.iter().zip(&d).map(|(a, b)| a + b).collect();
            let l = dur_loss(&p, &t, 4, 1.0).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l == 0.0, p == t);
        }

        #[test]
        fn group_term_ignores_within_group_permutations(
            t in prop::collection::vec(0.0f64..10.0, 8),
            e in prop::collection::vec(-3.0f64..3.0, 8),
            rot in 0usize..4,
        ) {
            let mut e2 = e.clone();
            e2[..4].rotate_left(rot);
            e2[4..].reverse();
            let group = |err: &[f64]| {
                let p: Vec<f64> = t.iter().zip(err).map(|(a, b)| a + b).collect();
                dur_loss(&p, &t, 4, 1.0).unwrap() - dur_loss(&p, &t, 4, 0.0).unwrap()
            };
            prop_assert!((group(&e) - group(&e2)).abs() < 1e-9);
        }
    }
}
