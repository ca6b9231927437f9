use super::*;
use crate::data::IdMap;

/// One user; item `i` owns the frames listed in `items[i]`, given as feature rows.
fn dataset(num_users: usize, items: &[Vec<Vec<f64>>]) -> Dataset {
    let f = items.iter().flatten().next().map_or(1, Vec::len);
    let mut frame_item = Vec::new();
    let mut feats = Vec::new();
    for (i, frames) in items.iter().enumerate() {
        for c in frames {
            frame_item.push(i);
            feats.extend_from_slice(c);
        }
    }
    let l = frame_item.len();
    Dataset::new(
        IdMap::from_ids((0..num_users).map(|a| format!("u{a:03}"))),
        IdMap::from_ids((0..items.len()).map(|i| format!("i{i:03}"))),
        IdMap::from_ids((0..l).map(|k| format!("f{k:03}"))),
        vec![],
        frame_item,
        Matrix::from_vec(l, f, feats).unwrap(),
        vec![],
    )
    .unwrap()
}

fn cfg(d: usize, visual: VisualMode, fusion: FusionMode) -> ModelConfig {
    ModelConfig {
        d1: d,
        d2: d,
        attn_hidden_visual: d,
        attn_hidden_rating: d,
        reduced_visual_dim: d,
        init_scale: 0.0,
        ..ModelConfig::default()
    }
    .with_modes(visual, fusion)
}

fn zero_model(config: ModelConfig, d: &Dataset) -> Model {
    let dims = Dims {
        num_users: d.num_users(),
        num_items: d.num_items(),
        feature_dim: d.feature_dim(),
    };
    Model::new(config, dims).unwrap()
}

fn set(m: &mut Matrix, values: &[f64]) {
    m.as_mut_slice().copy_from_slice(values);
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn avg_single_frame_is_projection() {
    let d = dataset(1, &[vec![vec![1.0, -2.0]]]);
    let mut m = zero_model(cfg(2, VisualMode::Avg, FusionMode::Sum), &d);
    set(&mut m.params.visual_projection, &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m.item_visual_avg(0, &d).unwrap(), m.project_frame(0, &d));
    assert_eq!(m.project_frame(0, &d), vec![-3.0, -5.0]);
}

#[test]
fn avg_of_opposite_frames_is_zero() {
    let d = dataset(1, &[vec![vec![0.3, -1.2], vec![-0.3, 1.2]]]);
    let mut m = zero_model(cfg(2, VisualMode::Avg, FusionMode::Sum), &d);
    set(&mut m.params.visual_projection, &[0.7, -0.1, 2.0, 0.4]);
    assert!(close(
        &m.item_visual_avg(0, &d).unwrap(),
        &[0.0, 0.0],
        1e-15
    ));
}

#[test]
fn avg_with_identity_projection() {
    let d = dataset(1, &[vec![vec![1.0, 0.0], vec![0.0, 1.0]]]);
    let mut m = zero_model(cfg(2, VisualMode::Avg, FusionMode::Sum), &d);
    set(&mut m.params.visual_projection, &[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(m.item_visual_avg(0, &d).unwrap(), vec![0.5, 0.5]);
}

#[test]
fn frameless_item_is_an_error() {
    let d = dataset(1, &[vec![vec![1.0]], vec![]]);
    let m = zero_model(cfg(1, VisualMode::Att, FusionMode::Att), &d);
    assert!(matches!(
        m.item_visual_avg(1, &d),
        Err(Error::MissingFrames { item: 1 })
    ));
    assert!(matches!(
        m.frame_attention_logits(1, &d),
        Err(Error::MissingFrames { .. })
    ));
    assert!(matches!(
        m.predict_item_score(0, 1, &d),
        Err(Error::MissingFrames { .. })
    ));
}

#[test]
fn zero_output_weights_give_zero_logits() {
    let d = dataset(1, &[vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 3.0]]]);
    let mut m = zero_model(
        ModelConfig {
            init_scale: 0.5,
            ..cfg(2, VisualMode::Att, FusionMode::Sum)
        },
        &d,
    );
    m.params.frame_attn_out.fill(0.0);
    assert_eq!(m.frame_attention_logits(0, &d).unwrap(), vec![0.0; 3]);
    assert_eq!(
        m.frame_attention_weights(0, &d).unwrap(),
        vec![1.0 / 3.0; 3]
    );
}

#[test]
fn identical_frames_give_equal_logits() {
    let d = dataset(1, &[vec![vec![0.4, -0.9]; 4]]);
    let m = zero_model(
        ModelConfig {
            init_scale: 0.8,
            ..cfg(3, VisualMode::Att, FusionMode::Sum)
        },
        &d,
    );
    let logits = m.frame_attention_logits(0, &d).unwrap();
    assert!(logits.iter().all(|&l| l == logits[0]));
    assert_eq!(
        m.item_visual_att(0, &d).unwrap(),
        m.item_visual_avg(0, &d).unwrap()
    );
}

/// d1 = d0 = h_c = 1, v_i = 1, W⁰ c_j = 2, W¹ = [[1, 1]], w¹ = [1].
fn hand_attention_model(features: Vec<Vec<f64>>) -> (Model, Dataset) {
    let d = dataset(1, &[features]);
    let mut m = zero_model(cfg(1, VisualMode::Att, FusionMode::Sum), &d);
    set(&mut m.params.item_factors, &[1.0]);
    set(&mut m.params.attn_key_projection, &[2.0]);
    set(&mut m.params.frame_attn_hidden, &[1.0, 1.0]);
    set(&mut m.params.frame_attn_out, &[1.0]);
    (m, d)
}

#[test]
fn hand_forward_logit() {
    let (m, d) = hand_attention_model(vec![vec![1.0]]);
    assert_eq!(m.frame_attention_logits(0, &d).unwrap(), vec![3.0]);
    assert_eq!(m.frame_attention_weights(0, &d).unwrap(), vec![1.0]);
}

#[test]
fn softmax_of_ln2_and_zero() {
    // Second frame drives the hidden unit negative so its logit is 0.
    let (mut m, d) = hand_attention_model(vec![vec![1.0], vec![-1.0]]);
    set(&mut m.params.item_factors, &[0.0]);
    set(&mut m.params.attn_key_projection, &[1.0]);
    set(&mut m.params.frame_attn_hidden, &[0.0, 2f64.ln()]);
    let logits = m.frame_attention_logits(0, &d).unwrap();
    assert_eq!(logits, vec![2f64.ln(), 0.0]);
    let w = m.frame_attention_weights(0, &d).unwrap();
    assert!(close(&w, &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
}

#[test]
fn attention_weighted_sum_by_hand() {
    // Weights (2/3, 1/3) as above; P c_1 = (3, 0), P c_2 = (0, 3).
    let d = dataset(1, &[vec![vec![1.0, 0.0], vec![0.0, 1.0]]]);
    let mut m = zero_model(
        ModelConfig {
            attn_hidden_visual: 1,
            reduced_visual_dim: 1,
            ..cfg(2, VisualMode::Att, FusionMode::Sum)
        },
        &d,
    );
    set(&mut m.params.visual_projection, &[3.0, 0.0, 0.0, 3.0]);
    set(&mut m.params.attn_key_projection, &[1.0, 0.0]);
    set(&mut m.params.frame_attn_hidden, &[0.0, 0.0, 2f64.ln()]);
    set(&mut m.params.frame_attn_out, &[1.0]);
    let w = m.frame_attention_weights(0, &d).unwrap();
    assert!(close(&w, &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
    assert!(close(
        &m.item_visual_att(0, &d).unwrap(),
        &[2.0, 1.0],
        1e-14
    ));
}

#[test]
fn single_frame_att_ignores_attention_params() {
    let d = dataset(1, &[vec![vec![0.2, -0.7, 1.1]]]);
    let m = zero_model(
        ModelConfig {
            init_scale: 1.0,
            ..cfg(2, VisualMode::Att, FusionMode::Sum)
        },
        &d,
    );
    assert!(close(
        &m.item_visual_att(0, &d).unwrap(),
        &m.project_frame(0, &d),
        1e-15
    ));
}

#[test]
fn att_functions_need_att_mode() {
    let d = dataset(1, &[vec![vec![1.0]]]);
    let m = zero_model(cfg(1, VisualMode::Avg, FusionMode::Sum), &d);
    assert!(matches!(
        m.frame_attention_logits(0, &d),
        Err(Error::Unsupported(_))
    ));
    assert!(matches!(
        m.rating_attention(0, 0, &[0.0]),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn rating_attention_symmetric_inputs() {
    let d = dataset(1, &[vec![vec![1.0, 0.0]]]);
    let mut m = zero_model(
        ModelConfig {
            init_scale: 0.7,
            ..cfg(2, VisualMode::Avg, FusionMode::Att)
        },
        &d,
    );
    let same = [0.3, -0.4];
    set(&mut m.params.user_factors, &same);
    set(&mut m.params.item_factors, &same);
    set(&mut m.params.user_visual, &same);
    assert_eq!(m.rating_attention(0, 0, &same).unwrap(), (0.5, 0.5));
}

#[test]
fn rating_attention_zero_output_is_uniform() {
    let d = dataset(1, &[vec![vec![1.0, 0.0]]]);
    let mut m = zero_model(
        ModelConfig {
            init_scale: 0.7,
            ..cfg(2, VisualMode::Avg, FusionMode::Att)
        },
        &d,
    );
    m.params.rating_attn_out.fill(0.0);
    assert_eq!(m.rating_attention(0, 0, &[5.0, -1.0]).unwrap(), (0.5, 0.5));
}

#[test]
fn rating_attention_ln3() {
    // h_r = 1: hidden = relu([1, 0] · [u, v]) = u; w² = [1]; u = ln 3, w = 0.
    let d = dataset(1, &[vec![vec![1.0]]]);
    let mut m = zero_model(
        ModelConfig {
            attn_hidden_rating: 1,
            ..cfg(1, VisualMode::Avg, FusionMode::Att)
        },
        &d,
    );
    set(&mut m.params.user_factors, &[3f64.ln()]);
    set(&mut m.params.rating_attn_hidden, &[1.0, 0.0]);
    set(&mut m.params.rating_attn_out, &[1.0]);
    let (b1, b2) = m.rating_attention(0, 0, &[0.0]).unwrap();
    assert!((b1 - 0.75).abs() < 1e-15 && (b2 - 0.25).abs() < 1e-15);
}

#[test]
fn rating_attention_rejects_wrong_visual_len() {
    let d = dataset(1, &[vec![vec![1.0]]]);
    let m = zero_model(cfg(2, VisualMode::Avg, FusionMode::Att), &d);
    assert!(matches!(
        m.rating_attention(0, 0, &[0.0]),
        Err(Error::Config(_))
    ));
}

#[test]
fn zero_params_score_zero() {
    let d = dataset(2, &[vec![vec![1.0, 2.0], vec![3.0, 4.0]]]);
    for (v, f) in [
        (VisualMode::Off, FusionMode::Sum),
        (VisualMode::Avg, FusionMode::Sum),
        (VisualMode::Att, FusionMode::Att),
    ] {
        let m = zero_model(cfg(2, v, f), &d);
        assert_eq!(m.predict_item_score(1, 0, &d).unwrap(), 0.0);
    }
}

/// u·v = 0.2, w·x = 0.3 with a single frame and identity projection.
fn planted_sum_instance(fusion: FusionMode) -> (Model, Dataset) {
    let d = dataset(1, &[vec![vec![0.6, 0.0]], vec![vec![0.0, 0.1]]]);
    let mut m = zero_model(cfg(2, VisualMode::Avg, fusion), &d);
    set(&mut m.params.user_factors, &[0.5, 0.5]);
    set(&mut m.params.item_factors, &[0.2, 0.2, 0.4, -0.2]);
    set(&mut m.params.user_visual, &[0.5, 1.0]);
    set(&mut m.params.visual_projection, &[1.0, 0.0, 0.0, 1.0]);
    (m, d)
}

#[test]
fn sum_mode_adds_both_preferences() {
    let (m, d) = planted_sum_instance(FusionMode::Sum);
    assert!((m.predict_item_score(0, 0, &d).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn att_mode_with_uniform_beta_halves_score() {
    let (sum, d) = planted_sum_instance(FusionMode::Sum);
    let (att, _) = planted_sum_instance(FusionMode::Att);
    assert_eq!(att.rating_attention(0, 0, &[0.6, 0.0]).unwrap(), (0.5, 0.5));
    assert!((att.predict_item_score(0, 0, &d).unwrap() - 0.25).abs() < 1e-15);
    // Item 1: u·v = 0.1, w·x = 0.1. Ranking agrees across modes.
    let s: Vec<f64> = (0..2)
        .map(|i| sum.predict_item_score(0, i, &d).unwrap())
        .collect();
    let a: Vec<f64> = (0..2)
        .map(|i| att.predict_item_score(0, i, &d).unwrap())
        .collect();
    assert_eq!(s[0] > s[1], a[0] > a[1]);
}

#[test]
fn frame_score_cases() {
    let d = dataset(1, &[vec![vec![0.3, 0.7], vec![0.3, 0.7], vec![1.0, 1.0]]]);
    let mut m = zero_model(cfg(2, VisualMode::Avg, FusionMode::Sum), &d);
    set(&mut m.params.visual_projection, &[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(m.predict_frame_score(0, 2, &d).unwrap(), 0.0);
    set(&mut m.params.user_visual, &[1.0, 0.0]);
    assert_eq!(m.predict_frame_score(0, 0, &d).unwrap(), 0.3);
    assert_eq!(
        m.predict_frame_score(0, 0, &d).unwrap(),
        m.predict_frame_score(0, 1, &d).unwrap()
    );
    let off = zero_model(cfg(2, VisualMode::Off, FusionMode::Sum), &d);
    assert!(matches!(
        off.predict_frame_score(0, 0, &d),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn from_parts_checks_shapes() {
    let d = dataset(1, &[vec![vec![1.0]]]);
    let m = zero_model(cfg(2, VisualMode::Att, FusionMode::Att), &d);
    let mut bad = m.params.clone();
    bad.frame_attn_out = Matrix::zeros(1, 3);
    assert!(Model::from_parts(m.config.clone(), bad).is_err());
    assert!(Model::from_parts(m.config.clone(), m.params.clone()).is_ok());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn random_model(
        seed: u64,
        visual: VisualMode,
        fusion: FusionMode,
        frames: usize,
    ) -> (Model, Dataset) {
        let mut rng = crate::seed::rng(seed);
        let feats = Matrix::normal(frames, 3, 1.0, &mut rng);
        let items = vec![(0..frames)
            .map(|k| feats.row(k).to_vec())
            .collect::<Vec<_>>()];
        let d = dataset(1, &items);
        let m = zero_model(
            ModelConfig {
                init_scale: 1.0,
                seed,
                ..cfg(3, visual, fusion)
            },
            &d,
        );
        (m, d)
    }

    proptest! {
        #[test]
        fn frame_weights_normalized_and_shift_invariant(seed in 0u64..10_000, frames in 1usize..8, shift in -50.0f64..50.0) {
            let (m, d) = random_model(seed, VisualMode::Att, FusionMode::Sum, frames);
            let logits = m.frame_attention_logits(0, &d).unwrap();
            let w = m.frame_attention_weights(0, &d).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0));
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            prop_assert!(close(&softmax(&shifted), &w, 1e-9));
        }

        #[test]
        fn att_embedding_is_convex_combination(seed in 0u64..10_000, frames in 1usize..8) {
            let (m, d) = random_model(seed, VisualMode::Att, FusionMode::Sum, frames);
            let w = m.frame_attention_weights(0, &d).unwrap();
            let mut hull_point = vec![0.0; 3];
            for (k, wk) in w.iter().enumerate() {
                axpy(*wk, &m.project_frame(k, &d), &mut hull_point);
            }
            prop_assert!(close(&m.item_visual_att(0, &d).unwrap(), &hull_point, 1e-12));
        }

        #[test]
        fn rating_weights_normalized(seed in 0u64..10_000, frames in 1usize..5) {
            let (m, d) = random_model(seed, VisualMode::Att, FusionMode::Att, frames);
            let x = m.item_visual_att(0, &d).unwrap();
            let (b1, b2) = m.rating_attention(0, 0, &x).unwrap();
            prop_assert!(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0);
            prop_assert!((b1 + b2 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn avg_sum_is_vbpr_formula(seed in 0u64..10_000, frames in 1usize..6) {
            let (m, d) = random_model(seed, VisualMode::Avg, FusionMode::Sum, frames);
            let p = &m.params;
            let mut x = vec![0.0; 3];
            for k in 0..frames {
                axpy(1.0, &m.project_frame(k, &d), &mut x);
            }
            x.iter_mut().for_each(|v| *v /= frames as f64);
            let vbpr = dot(p.user_factors.row(0), p.item_factors.row(0)) + dot(p.user_visual.row(0), &x);
            prop_assert_eq!(m.predict_item_score(0, 0, &d).unwrap(), vbpr);
        }

        #[test]
        fn off_is_matrix_factorization(seed in 0u64..10_000) {
            let (m, d) = random_model(seed, VisualMode::Off, FusionMode::Att, 3);
            let p = &m.params;
            prop_assert_eq!(
                m.predict_item_score(0, 0, &d).unwrap(),
                dot(p.user_factors.row(0), p.item_factors.row(0))
            );
        }
    }
}
