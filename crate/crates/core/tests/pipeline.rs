use ssmp_core::align::trailer_length_from_segments;
use ssmp_core::corpus::{load_corpus, write_synthetic_corpus, SynthConfig};
use ssmp_core::decode::{decode, DecodeMode, DecodeOptions};
use ssmp_core::encoder::{load_checkpoint, save_checkpoint, EncoderConfig};
use ssmp_core::metrics::{EvaluationReport, MetricReport};
use ssmp_core::schedule::SchedulerMode;
use ssmp_core::trainer::{train, LossMode, TrainConfig};
use tempfile::TempDir;

fn small() -> (SynthConfig, EncoderConfig) {
    let synth = SynthConfig {
        movie_shots: 16,
        trailer_shots: 4,
        dim: 8,
        clusters: 3,
        ..SynthConfig::default()
    };
    let enc = EncoderConfig {
        layers: 1,
        heads: 2,
        dim: 8,
        ffn_width: 16,
        ..EncoderConfig::default()
    };
    (synth, enc)
}

#[test]
fn corpus_to_metrics_through_files() {
    let dir = TempDir::new().unwrap();
    let (synth, enc) = small();
    write_synthetic_corpus(dir.path(), &synth, 6, 11).unwrap();
    let (manifest, pairs) = load_corpus(dir.path().join("manifest.json")).unwrap();
    assert_eq!(pairs.len(), 6);

    let cfg = TrainConfig {
        max_steps: Some(20),
        batch_size: 2,
        ..TrainConfig::default()
    };
    let outcome = train(&pairs, &enc, &cfg).unwrap();
    assert_eq!(outcome.curves.len(), 20);
    assert_eq!(outcome.schedule.rows.len(), 21);

    let ckpt = dir.path().join("model.ckpt");
    save_checkpoint(&ckpt, &outcome.params).unwrap();
    let params = load_checkpoint(&ckpt).unwrap();
    assert_eq!(params.config, enc);

    let mut report = EvaluationReport { pairs: Vec::new() };
    for (entry, pair) in manifest.entries.iter().zip(&pairs) {
        let j = trailer_length_from_segments(entry.music_boundaries.as_deref().unwrap()).unwrap();
        assert_eq!(j, synth.trailer_shots);
        for mode in [DecodeMode::SelfCorrective, DecodeMode::Greedy] {
            let opts = DecodeOptions {
                mode,
                seed: 3,
                k_max: 16,
            };
            let r = decode(&params, &pair.movie.to_matrix(), j, &opts).unwrap();
            report
                .pairs
                .push(MetricReport::compute(pair.id.clone(), &r.indices, pair.truth.labels(), 1));
        }
    }
    let mean = report.mean().unwrap();
    assert!((0.0..=1.0).contains(&mean.f1));
    assert!(report.mean_levenshtein() <= synth.trailer_shots as f64);
}

#[test]
fn every_scheduler_and_loss_trains_deterministically() {
    let dir = TempDir::new().unwrap();
    let (synth, enc) = small();
    write_synthetic_corpus(dir.path(), &synth, 4, 5).unwrap();
    let (_, pairs) = load_corpus(dir.path().join("manifest.json")).unwrap();
    for scheduler in SchedulerMode::ALL {
        for loss in [LossMode::Ce, LossMode::Mse] {
            let cfg = TrainConfig {
                max_steps: Some(8),
                batch_size: 2,
                scheduler,
                loss,
                seed: 9,
                ..TrainConfig::default()
            };
            let a = train(&pairs, &enc, &cfg).unwrap();
            let b = train(&pairs, &enc, &cfg).unwrap();
            assert_eq!(a.params, b.params, "{scheduler} {loss}");
            assert_eq!(a.curves, b.curves);
            let hyper = &cfg.scheduler_hyper;
            assert!(a.curves.rows.iter().all(|r| r.mask_ratio >= hyper.t_min && r.mask_ratio <= hyper.t_max));
        }
    }
}
