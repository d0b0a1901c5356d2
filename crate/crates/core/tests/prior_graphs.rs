use std::path::Path;

use kinegraph::bone_select::{dataset_scores, select_min_assignment};
use kinegraph::model::pcac_logits;
use kinegraph::prior_graphs::{build_gpr, build_templates, class_centroids, weight_skeleton};
use kinegraph::{EmbeddingTable, Matrix, PromptId, SkeletonSequence};
use proptest::prelude::*;

fn table_strategy() -> impl Strategy<Value = EmbeddingTable> {
    (1usize..4, 2usize..6, 1usize..6).prop_flat_map(|(m, v, d)| {
        prop::collection::vec(-2.0f64..2.0, m * v * d).prop_map(move |mut vals| {
            // Keep every vector away from zero.
            for chunk in vals.chunks_mut(d) {
                chunk[0] += if chunk[0] >= 0.0 { 0.5 } else { -0.5 };
            }
            EmbeddingTable::new(m, v, d, vals, PromptId::P3).unwrap()
        })
    })
}

fn scaled(t: &EmbeddingTable, k: f64) -> EmbeddingTable {
    let mut vals = Vec::new();
    for c in 0..t.classes() {
        for j in 0..t.joints() {
            vals.extend(t.vector(c, j).iter().map(|x| x * k));
        }
    }
    EmbeddingTable::new(t.classes(), t.joints(), t.dim(), vals, t.prompt).unwrap()
}

fn fixture_table() -> EmbeddingTable {
    let path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/embeddings/table_3x6.json");
    EmbeddingTable::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fixture_round_trips_through_json() {
    let t = fixture_table();
    assert_eq!((t.classes(), t.joints(), t.dim()), (3, 6, 8));
    let back = EmbeddingTable::from_json(&t.to_json_value().to_string()).unwrap();
    assert_eq!(back, t);
}

/// Embeddings → GPR → bone selection → templates → auxiliary logits.
#[test]
fn embedding_pipeline_end_to_end() {
    let table = fixture_table();
    let gpr = build_gpr(&class_centroids(&table)).unwrap();
    assert_eq!(gpr.joints(), 6);

    let seqs: Vec<SkeletonSequence> = (0..3)
        .map(|s| {
            let data = (0..4 * 6 * 3)
                .map(|i| ((i * 7 + s * 13) % 17) as f64 / 10.0)
                .collect();
            SkeletonSequence::new(4, 6, 3, data).unwrap()
        })
        .collect();
    let scores = dataset_scores(&seqs, Some(&gpr)).unwrap();
    let bones = select_min_assignment(&scores, 0).unwrap();
    assert!(bones.is_complete());
    let weighted = weight_skeleton(&seqs[0], &bones).unwrap();
    assert_eq!(weighted.joints(), 6);

    let templates = build_templates(&table).unwrap();
    assert_eq!(templates.classes(), 3);
    for t in templates.templates() {
        for j in 0..6 {
            assert!((t[(j, j)] - 1.0).abs() < 1e-12);
        }
        assert_eq!(t.asymmetry(), 0.0);
    }
    let theta = Matrix::filled(6, 4, 0.5);
    let z = pcac_logits(&theta, &templates, &[1.0, -1.0, 0.5, 0.25], 0.1).unwrap();
    assert_eq!(z.len(), 3);

    // Independent evaluation of mean_j((T θ w)_j + b).
    for (c, t) in templates.templates().iter().enumerate() {
        let mut want = 0.0;
        for i in 0..6 {
            let mut s = 0.0;
            for j in 0..6 {
                s += t[(i, j)] * (0.5 * (1.0 - 1.0 + 0.5 + 0.25));
            }
            want += s + 0.1;
        }
        assert!((z[c] - want / 6.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn gpr_is_a_metric(t in table_strategy()) {
        let g = build_gpr(&class_centroids(&t)).unwrap();
        let d = g.dist();
        let v = g.joints();
        for i in 0..v {
            prop_assert_eq!(d[(i, i)], 0.0);
            for j in 0..v {
                prop_assert!(d[(i, j)] >= 0.0);
                prop_assert_eq!(d[(i, j)], d[(j, i)]);
                for k in 0..v {
                    prop_assert!(d[(i, k)] <= d[(i, j)] + d[(j, k)] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn cosine_templates_ignore_scale(t in table_strategy(), k in 0.01f64..50.0) {
        let a = build_templates(&t).unwrap();
        let b = build_templates(&scaled(&t, k)).unwrap();
        for (x, y) in a.templates().iter().zip(b.templates()) {
            prop_assert!(x.max_abs_diff(y).unwrap() <= 1e-12);
            prop_assert!(x.as_slice().iter().all(|s| (-1.0..=1.0).contains(s)));
        }
    }

    #[test]
    fn gpr_scales_linearly(t in table_strategy(), k in 0.01f64..50.0) {
        let a = build_gpr(&class_centroids(&t)).unwrap();
        let b = build_gpr(&class_centroids(&scaled(&t, k))).unwrap();
        prop_assert!(a.dist().scale(k).max_abs_diff(b.dist()).unwrap() <= 1e-9 * (1.0 + k));
    }
}
