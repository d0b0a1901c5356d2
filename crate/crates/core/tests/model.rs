use kinegraph::model::{
    aux_loss, batch_loss, ensemble_scores, forward_batch, init_params, micro_train, pcac_logits,
    read_dataset, softmax, synthetic_dataset, synthetic_templates, write_dataset, BnMode,
    MicroTrainConfig, ModelFile, PeKind,
};
use kinegraph::{FloatFormat, Matrix, ModelConfig, SkeletonSequence};
use proptest::prelude::*;

fn micro() -> MicroTrainConfig {
    MicroTrainConfig::default()
}

#[test]
fn batch_order_does_not_matter() {
    let cfg = micro();
    let data = synthetic_dataset(&cfg.model, &cfg.data, 5).unwrap();
    let params = init_params(&cfg.model, 5).unwrap();
    let seqs: Vec<&SkeletonSequence> = data.iter().map(|s| &s.sequence).collect();
    let order = [4, 0, 5, 2, 1, 3];
    let permuted: Vec<&SkeletonSequence> = order.iter().map(|&i| seqs[i]).collect();

    let a = forward_batch(&params, &cfg.model, &seqs, BnMode::Frozen).unwrap();
    let b = forward_batch(&params, &cfg.model, &permuted, BnMode::Frozen).unwrap();
    for (k, &i) in order.iter().enumerate() {
        assert_eq!(a.logits[i], b.logits[k]);
        assert_eq!(a.theta[i], b.theta[k]);
    }

    // Batch statistics are order independent up to summation order.
    let a = forward_batch(&params, &cfg.model, &seqs, BnMode::Batch).unwrap();
    let b = forward_batch(&params, &cfg.model, &permuted, BnMode::Batch).unwrap();
    for (k, &i) in order.iter().enumerate() {
        for (x, y) in a.logits[i].iter().zip(&b.logits[k]) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn frozen_forward_is_per_sample() {
    let cfg = micro();
    let data = synthetic_dataset(&cfg.model, &cfg.data, 6).unwrap();
    let params = init_params(&cfg.model, 6).unwrap();
    let seqs: Vec<&SkeletonSequence> = data.iter().map(|s| &s.sequence).collect();
    let all = forward_batch(&params, &cfg.model, &seqs, BnMode::Frozen).unwrap();
    for (i, s) in seqs.iter().enumerate() {
        let one = forward_batch(&params, &cfg.model, &[*s], BnMode::Frozen).unwrap();
        assert_eq!(one.logits[0], all.logits[i]);
    }
}

#[test]
fn zero_learning_rate_keeps_the_loss() {
    let mut cfg = micro();
    cfg.steps = 3;
    cfg.lr = 0.0;
    let data = synthetic_dataset(&cfg.model, &cfg.data, 8).unwrap();
    let t = synthetic_templates(&cfg.model, 8).unwrap();
    let (trace, params) = micro_train(&cfg, &data, &t, 8).unwrap();
    let first = trace.steps[0].loss;
    assert!(trace.steps.iter().all(|s| s.loss == first));
    assert_eq!(trace.final_loss, first);
    let fresh = init_params(&cfg.model, 8).unwrap();
    assert_eq!(params.to_flat(), fresh.to_flat());
}

#[test]
fn loss_matches_an_independent_cross_entropy() {
    let cfg = micro();
    let data = synthetic_dataset(&cfg.model, &cfg.data, 9).unwrap();
    let t = synthetic_templates(&cfg.model, 9).unwrap();
    let params = init_params(&cfg.model, 9).unwrap();
    let seqs: Vec<&SkeletonSequence> = data.iter().map(|s| &s.sequence).collect();
    let out = forward_batch(&params, &cfg.model, &seqs, BnMode::Batch).unwrap();

    let ce = |z: &[f64], y: usize| -> f64 {
        let s: f64 = z.iter().map(|x| x.exp()).sum();
        -(z[y].exp() / s).ln()
    };
    let n = data.len() as f64;
    let mut primary = 0.0;
    let mut aux = 0.0;
    for ((z, theta), s) in out.logits.iter().zip(&out.theta).zip(&data) {
        primary += ce(z, s.label);
        let za = pcac_logits(theta, &t, &params.aux_w, params.aux_b).unwrap();
        aux += ce(&za, s.label);
    }
    let (loss, _) = batch_loss(&params, &cfg.model, &data, &t, BnMode::Batch).unwrap();
    assert!((loss.primary - primary / n).abs() < 1e-12);
    assert!((loss.aux - aux / n).abs() < 1e-12);
    assert_eq!(loss.total, loss.primary + cfg.model.lambda * loss.aux);
}

#[test]
fn disabled_positional_encoding_is_zero() {
    let mut cfg = micro().model;
    cfg.pe_kind = PeKind::Disabled;
    let p = init_params(&cfg, 1).unwrap();
    assert!(p.pe.as_slice().iter().all(|&x| x == 0.0));
}

#[test]
fn invalid_configs_are_rejected() {
    let base = ModelConfig::default();
    let mut c = base.clone();
    c.aux_tap = 10;
    assert!(c.validate().is_err());
    let mut c = base.clone();
    c.frames = 4;
    assert!(c.validate().is_err());
    let mut c = base;
    c.strides.pop();
    assert!(c.validate().is_err());
}

#[test]
fn dataset_file_round_trip() {
    let cfg = micro();
    let data = synthetic_dataset(&cfg.model, &cfg.data, 3).unwrap();
    let text = write_dataset(&data, FloatFormat::Full);
    assert_eq!(read_dataset(&text).unwrap(), data);
    assert!(read_dataset(r#"{"samples":[{"version":1,"frames":1,"joints":2,"dims":1,"label":null,"data":[[[0.0],[1.0]]]}]}"#).is_err());
}

#[test]
fn model_file_round_trip() {
    let cfg = micro().model;
    let params = init_params(&cfg, 4).unwrap();
    let file = ModelFile {
        config: cfg,
        params,
    };
    let text = serde_json::to_string(&file).unwrap();
    let back: ModelFile = serde_json::from_str(&text).unwrap();
    assert_eq!(back, file);
}

#[test]
fn init_is_seeded() {
    let cfg = micro().model;
    assert_eq!(init_params(&cfg, 1).unwrap(), init_params(&cfg, 1).unwrap());
    assert_ne!(
        init_params(&cfg, 1).unwrap().to_flat(),
        init_params(&cfg, 2).unwrap().to_flat()
    );
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-700.0f64..700.0, 1..20)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn cross_entropy_is_shift_invariant(
        z in prop::collection::vec(-20.0f64..20.0, 2..10),
        c in -100.0f64..100.0,
        y in 0usize..10,
    ) {
        let y = y % z.len();
        let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
        prop_assert!(aux_loss(&z, y) >= 0.0);
        prop_assert!((aux_loss(&z, y) - aux_loss(&shifted, y)).abs() <= 1e-9);
    }

    #[test]
    fn self_fusion_keeps_argmax(
        rows in prop::collection::vec(prop::collection::vec(-30.0f64..30.0, 4), 1..8),
        copies in 1usize..4,
    ) {
        let single = ensemble_scores(std::slice::from_ref(&rows)).unwrap();
        let many = ensemble_scores(&vec![rows.clone(); copies]).unwrap();
        prop_assert_eq!(single.predictions, many.predictions);
    }

    #[test]
    fn fused_scores_sum_to_stream_count(
        a in prop::collection::vec(-10.0f64..10.0, 5),
        b in prop::collection::vec(-10.0f64..10.0, 5),
    ) {
        let e = ensemble_scores(&[vec![a], vec![b]]).unwrap();
        prop_assert!((e.fused[0].iter().sum::<f64>() - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn pcac_is_linear_in_theta(
        vals in prop::collection::vec(-1.0f64..1.0, 6 * 4 * 2),
        a in -2.0f64..2.0,
    ) {
        let cfg = micro().model;
        let t = synthetic_templates(&cfg, 1).unwrap();
        let x = Matrix::from_vec(6, 4, vals[..24].to_vec()).unwrap();
        let y = Matrix::from_vec(6, 4, vals[24..].to_vec()).unwrap();
        let w = [0.3, -0.7, 1.1, 0.2];
        let mut xy = x.scale(a);
        xy.axpy(1.0, &y).unwrap();
        let lhs = pcac_logits(&xy, &t, &w, 0.0).unwrap();
        let zx = pcac_logits(&x, &t, &w, 0.0).unwrap();
        let zy = pcac_logits(&y, &t, &w, 0.0).unwrap();
        for c in 0..lhs.len() {
            prop_assert!((lhs[c] - (a * zx[c] + zy[c])).abs() <= 1e-12);
        }
    }
}
