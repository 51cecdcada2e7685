use unitstyle::alignio::Utterance;
use unitstyle::durmodel::{round_carryover, train_duration, DurArch, DurTrainConfig};
use unitstyle::pitchmodel::{train_pitch, PitchArch, PitchTrainConfig};
use unitstyle::syncorpus::{gen_corpus, SynCorpusConfig};
use unitstyle::unitseq::{dedup, inflate, PitchContour};

fn small_dur() -> DurArch {
    DurArch {
        unit_dim: 16,
        speaker_dim: 8,
        channels: 32,
        layers: 3,
        kernel: 3,
    }
}

/// Every run in every utterance lasts `dur` frames.
fn constant_duration_corpus(dur: usize) -> Vec<Utterance> {
    (0..40)
        .map(|i| {
            let runs: Vec<(u16, usize)> = (0..12).map(|j| (((i * 7 + j * 13) % 100) as u16, dur)).collect();
            // Neighbouring ids differ because 13 is not a multiple of 100.
            let units = inflate(&runs).unwrap();
            let n = units.len();
            let spk = if i % 2 == 0 { "x" } else { "y" };
            let f0 = PitchContour::new((0..n).map(|t| 100.0 + (t % 5) as f64).collect()).unwrap();
            Utterance::new(format!("u{i}"), spk, units, f0).unwrap()
        })
        .collect()
}

#[test]
fn constant_durations_are_learned() {
    let corpus = constant_duration_corpus(3);
    let cfg = DurTrainConfig {
        epochs: 60,
        ..Default::default()
    };
    let (model, _) = train_duration::<f32>(&corpus, small_dur(), &cfg, |_| {}).unwrap();
    for u in &corpus {
        let rle = dedup(&u.units);
        let pred = model.predict_for(&rle.units(), &u.speaker).unwrap();
        assert!(pred.iter().all(|&p| (p - 3.0).abs() < 0.1), "{pred:?}");
        assert!(round_carryover(&pred).unwrap().durations.iter().all(|&d| d == 3));
    }
}

fn strictly_decreasing(l: &[f64]) -> bool {
    l.windows(2).all(|w| w[1] < w[0])
}

#[test]
fn duration_epoch_loss_decreases_monotonically() {
    let corpus = gen_corpus(&SynCorpusConfig::default()).unwrap();
    let cfg = DurTrainConfig {
        epochs: 12,
        batch_size: 32,
        ..Default::default()
    };
    let (_, s) = train_duration::<f32>(&corpus.train, DurArch::default(), &cfg, |_| {}).unwrap();
    let losses: Vec<f64> = s.epochs.iter().map(|e| e.train_loss).collect();
    assert!(strictly_decreasing(&losses), "{losses:?}");
    assert!(s.final_loss < s.initial_loss);
}

#[test]
fn pitch_epoch_loss_decreases_over_five_epoch_windows() {
    let corpus = gen_corpus(&SynCorpusConfig {
        dur_noise: 0.0,
        pitch_noise: 0.0,
        ..Default::default()
    })
    .unwrap();
    let cfg = PitchTrainConfig {
        epochs: 10,
        mask_prob: 0.0,
        ..Default::default()
    };
    let (_, s) = train_pitch::<f32>(&corpus.train, PitchArch::default(), &cfg, |_| {}).unwrap();
    let losses: Vec<f64> = s.epochs.iter().map(|e| e.train_loss).collect();
    assert!(losses.windows(6).all(|w| w[5] < w[0]), "{losses:?}");
    assert!(s.final_loss < s.initial_loss);
}

#[test]
fn faster_speaker_gets_double_durations() {
    let cfg = SynCorpusConfig {
        dur_noise: 0.0,
        ..Default::default()
    };
    let corpus = gen_corpus(&cfg).unwrap();
    let tcfg = DurTrainConfig {
        epochs: 15,
        ..Default::default()
    };
    let (model, _) = train_duration::<f32>(&corpus.train, small_dur(), &tcfg, |_| {}).unwrap();
    let (mut a, mut b) = (0.0, 0.0);
    for u in corpus.test.iter().filter(|u| u.speaker == "spk_a") {
        let units = dedup(&u.units).units();
        a += model.predict_for(&units, "spk_a").unwrap().iter().map(|&x| x as f64).sum::<f64>();
        b += model.predict_for(&units, "spk_b").unwrap().iter().map(|&x| x as f64).sum::<f64>();
    }
    let ratio = b / a;
    assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn voicing_is_predicted_from_units() {
    // Voicing is a deterministic function of the unit class in this corpus.
    let corpus = gen_corpus(&SynCorpusConfig::three_speakers()).unwrap();
    let cfg = PitchTrainConfig {
        epochs: 10,
        ..Default::default()
    };
    let (model, _) = train_pitch::<f32>(&corpus.train, PitchArch::default(), &cfg, |_| {}).unwrap();
    let (mut right, mut total) = (0usize, 0usize);
    for u in &corpus.train {
        let pred = model.predict_for(u.units.as_slice(), &u.speaker).unwrap();
        right += pred.voiced().iter().zip(u.f0.voiced()).filter(|(a, b)| **a == *b).count();
        total += u.units.len();
    }
    let acc = right as f64 / total as f64;
    assert!(acc > 0.99, "voicing accuracy {acc}");
}
