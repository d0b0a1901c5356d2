use kinegraph::skeleton_io::{
    motion_stream, parse_ntu_text, preprocess, read_canonical, write_canonical, PreprocessConfig,
    SkeletonError,
};
use kinegraph::{FloatFormat, SkeletonSequence};
use proptest::prelude::*;

fn seq_strategy() -> impl Strategy<Value = SkeletonSequence> {
    (1usize..5, 2usize..5, 1usize..4).prop_flat_map(|(t, v, d)| {
        (
            prop::collection::vec(
                prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
                t * v * d,
            ),
            prop::option::of(0usize..200),
        )
            .prop_map(move |(data, label)| {
                SkeletonSequence::new(t, v, d, data)
                    .unwrap()
                    .with_label(label)
            })
    })
}

fn bits(s: &SkeletonSequence) -> Vec<u64> {
    s.data().iter().map(|x| x.to_bits()).collect()
}

#[test]
fn ramp_motion() {
    // x advances by 0.5 per frame.
    let data = (0..4)
        .flat_map(|t| [0.5 * t as f64, 1.0, 2.0, 0.5 * t as f64 + 3.0, 0.0, 0.0])
        .collect();
    let seq = SkeletonSequence::new(4, 2, 3, data).unwrap();
    let m = motion_stream(&seq);
    for t in 0..4 {
        for j in 0..2 {
            let want = if t < 3 { [0.5, 0.0, 0.0] } else { [0.0; 3] };
            assert_eq!(m.point(t, j), want);
        }
    }
}

#[test]
fn single_frame_is_repeated_with_a_warning() {
    let seq = SkeletonSequence::new(1, 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let cfg = PreprocessConfig {
        target_frames: 3,
        ..Default::default()
    };
    let out = preprocess(&seq, &cfg).unwrap();
    assert_eq!(out.frames(), 3);
    for t in 0..3 {
        assert_eq!(out.point(t, 0), [0.0, 0.0, 0.0]);
        assert_eq!(out.point(t, 1), [3.0, 3.0, 3.0]);
    }
    assert!(!out.warnings.is_empty());
}

#[test]
fn bad_preprocess_config() {
    let seq = SkeletonSequence::new(2, 2, 1, vec![0.0; 4]).unwrap();
    let cfg = PreprocessConfig {
        target_frames: 0,
        ..Default::default()
    };
    assert!(matches!(
        preprocess(&seq, &cfg),
        Err(SkeletonError::InvalidConfig(_))
    ));
}

#[test]
fn ntu_text_without_bodies_in_a_frame() {
    // Two frames; the first has no body at all.
    let src =
        "2\n0\n1\n7 0 1 1 1 1 0 0.1 0.2 2\n2\n1 2 3 0 0 0 0 0 0 0 0 2\n4 5 6 0 0 0 0 0 0 0 0 2\n";
    let bodies = parse_ntu_text(src).unwrap();
    assert_eq!(bodies.len(), 1);
    let b = &bodies[0];
    assert_eq!(b.frames(), 2);
    assert_eq!(b.point(0, 0), [0.0, 0.0, 0.0]);
    assert_eq!(b.point(1, 1), [4.0, 5.0, 6.0]);
}

proptest! {
    #[test]
    fn full_precision_round_trip_is_bit_exact(seq in seq_strategy()) {
        let text = write_canonical(&seq, FloatFormat::Full);
        let back = read_canonical(&text).unwrap();
        prop_assert_eq!(bits(&back), bits(&seq));
        prop_assert_eq!(back.label, seq.label);
        prop_assert_eq!(write_canonical(&back, FloatFormat::Full), text);
    }

    #[test]
    fn nine_digit_output_is_close(seq in seq_strategy()) {
        let back = read_canonical(&write_canonical(&seq, FloatFormat::Sig9)).unwrap();
        for (a, b) in seq.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 1e-8 * a.abs());
        }
    }

    #[test]
    fn preprocess_ignores_translation(
        t in 1usize..6,
        target in 1usize..9,
        data in prop::collection::vec(-5.0f64..5.0, 6 * 3 * 3),
        shift in prop::array::uniform3(-100.0f64..100.0),
    ) {
        let data = data[..t * 3 * 3].to_vec();
        let seq = SkeletonSequence::new(t, 3, 3, data.clone()).unwrap();
        let moved: Vec<f64> = data.iter().enumerate().map(|(i, x)| x + shift[i % 3]).collect();
        let moved = SkeletonSequence::new(t, 3, 3, moved).unwrap();
        let cfg = PreprocessConfig { target_frames: target, center_joint: 1, ..Default::default() };
        let a = preprocess(&seq, &cfg).unwrap();
        let b = preprocess(&moved, &cfg).unwrap();
        prop_assert_eq!(a.frames(), target);
        prop_assert_eq!(a.point(0, 1), &[0.0, 0.0, 0.0][..]);
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        // Endpoints are kept exactly (up to the translation).
        let o = seq.point(0, 1);
        let last = seq.point(t - 1, 2);
        if target > 1 {
            for c in 0..3 {
                prop_assert!((a.point(target - 1, 2)[c] - (last[c] - o[c])).abs() <= 1e-12);
            }
        }
    }
}
