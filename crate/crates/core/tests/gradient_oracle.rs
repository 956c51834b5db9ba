mod common;

use common::{check_case, oracle_cases};
use wal_core::model::{AttentionKind, InputMode};
use wal_core::training::{LossKind, Phase};

#[test]
fn cases_span_every_variant() {
    let cases = oracle_cases();
    assert!(cases.len() >= 50);
    for kind in [
        AttentionKind::Dot,
        AttentionKind::Multiplicative,
        AttentionKind::Additive,
    ] {
        assert!(cases.iter().any(|c| c.attention == kind));
    }
    for mode in [InputMode::Residual, InputMode::Concat, InputMode::AdvOnly] {
        assert!(cases.iter().any(|c| c.input_mode == mode));
    }
    for loss in [LossKind::Bce, LossKind::Triplet] {
        assert!(cases.iter().any(|c| c.loss_kind == loss));
    }
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut failures = Vec::new();
    for case in oracle_cases() {
        let r = check_case(&case);
        assert!(r.coordinates > 0);
        failures.extend(r.failures);
    }
    assert!(
        failures.is_empty(),
        "{} mismatches:\n{}",
        failures.len(),
        failures.join("\n")
    );
}

#[test]
fn freeze_phase_leaves_discriminator_without_gradient() {
    use wal_core::model::DISCRIMINATOR_TENSORS;
    for case in oracle_cases().into_iter().filter(|c| c.phase == Phase::Freeze) {
        let data = common::oracle_data(&case);
        let batch: Vec<_> = (0..data.sentences.len())
            .map(|i| wal_core::training::PairSample {
                id: "p",
                sentence: &data.sentences[i],
                frames: data.frames[i].iter().map(Vec::as_slice).collect(),
                label: data.labels[i],
                tag: wal_core::corpus::Tag::Clean,
                noise: data.noise[i],
            })
            .collect();
        let obj = wal_core::training::Objective {
            loss_kind: case.loss_kind,
            sampler: case.sampler,
            tau: 1.0,
            triplet_margin: 0.2,
            gate_enabled: true,
        };
        let g = wal_core::training::compute_gradients(&data.params, &batch, &obj, Phase::Freeze).unwrap();
        let tensors = g.grads.tensors();
        for t in DISCRIMINATOR_TENSORS {
            assert!(tensors[t].iter().all(|&x| x == 0.0), "{case:?} tensor {t}");
        }
    }
}
