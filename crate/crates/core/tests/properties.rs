use crossing_intent::autodiff::Tensor;
use crossing_intent::graph::{build_adjacency, normalize_adjacency};
use crossing_intent::metrics::{ade, classification_metrics, fde, Confusion};
use crossing_intent::net::{Model, ModelConfig, ModelParams};
use crossing_intent::scene::{ObjectKind, SignalState};
use crossing_intent::synth::{final_signal, generate_dataset, generate_scene, scene_seed, SignalFsm, WorldConfig};
use proptest::prelude::*;

fn world_config() -> impl Strategy<Value = WorldConfig> {
    (1usize..20, 1usize..20, 0usize..3, 0usize..3, 0.0f64..0.49, 1u32..30, 1u32..10, 1u32..30).prop_map(
        |(frames, horizon, byst, veh, noise, g, y, r)| WorldConfig {
            frames,
            horizon,
            max_bystanders: byst,
            max_vehicles: veh,
            noise,
            signal_durations: [g, y, r],
            ..WorldConfig::default()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn generated_boxes_stay_inside_the_image(cfg in world_config(), seed in any::<u64>()) {
        let seq = generate_scene(&cfg, seed).unwrap();
        prop_assert!(seq.validate().is_ok());
        prop_assert_eq!(seq.len(), cfg.frames);
        prop_assert_eq!(seq.label_future.len(), cfg.horizon);
        for f in &seq.frames {
            prop_assert!(f.objects.len() <= cfg.max_nodes);
            for o in &f.objects {
                prop_assert!(o.bbox.validate(seq.image_dims).is_ok());
                prop_assert!(o.appearance.iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert_eq!(o.kind == ObjectKind::TrafficLight, o.signal != SignalState::NotApplicable);
            }
        }
    }
}

proptest! {
    #[test]
    fn signal_fsm_is_periodic(g in 1u32..100, y in 1u32..100, r in 1u32..100, offset in 0u32..500, t in 0u64..1_000_000) {
        let fsm = SignalFsm { green: g, yellow: y, red: r, offset };
        prop_assert_eq!(fsm.state(t), fsm.state(t + u64::from(fsm.cycle())));
        let window: Vec<_> = (t..t + u64::from(fsm.cycle())).map(|s| fsm.state(s)).collect();
        let count = |s| window.iter().filter(|&&w| w == s).count() as u32;
        prop_assert_eq!((count(SignalState::Green), count(SignalState::Yellow), count(SignalState::Red)), (g, y, r));
    }

    #[test]
    fn confusion_matches_a_brute_force_recount(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let (preds, labels): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
        let c = Confusion::from_predictions(&preds, &labels).unwrap();
        let count = |p: bool, l: bool| pairs.iter().filter(|&&x| x == (p, l)).count();
        prop_assert_eq!((c.tp, c.fp, c.fn_, c.tn), (count(true, true), count(true, false), count(false, true), count(false, false)));
        prop_assert_eq!(c.total(), pairs.len());

        let m = classification_metrics(&preds, &labels).unwrap();
        let correct = pairs.iter().filter(|(p, l)| p == l).count();
        prop_assert!((m.accuracy - correct as f64 / pairs.len() as f64).abs() < 1e-15);
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if m.precision + m.recall > 0.0 {
            let h = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            prop_assert!((m.f1 - h).abs() < 1e-12);
            prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-15);
            prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-15);
        }
    }

    #[test]
    fn displacement_errors_are_bounded_and_translation_invariant(
        pts in prop::collection::vec(((-500.0f64..500.0, -500.0f64..500.0), (-500.0f64..500.0, -500.0f64..500.0)), 1..30),
        shift in (-1e3f64..1e3, -1e3f64..1e3),
    ) {
        let pred: Vec<[f64; 2]> = pts.iter().map(|&((a, b), _)| [a, b]).collect();
        let truth: Vec<[f64; 2]> = pts.iter().map(|&(_, (a, b))| [a, b]).collect();
        let d: Vec<f64> = pred.iter().zip(&truth).map(|(p, t)| (p[0] - t[0]).hypot(p[1] - t[1])).collect();
        let a = ade(&pred, &truth).unwrap();
        let f = fde(&pred, &truth).unwrap();
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(0.0, f64::max);
        prop_assert!(lo - 1e-9 <= a && a <= hi + 1e-9);
        prop_assert_eq!(f, *d.last().unwrap());
        prop_assert_eq!(ade(&truth, &truth).unwrap(), 0.0);

        let mv = |v: &[[f64; 2]]| v.iter().map(|p| [p[0] + shift.0, p[1] + shift.1]).collect::<Vec<_>>();
        prop_assert!((ade(&mv(&pred), &mv(&truth)).unwrap() - a).abs() < 1e-9);
        prop_assert!((fde(&mv(&pred), &mv(&truth)).unwrap() - f).abs() < 1e-9);
        prop_assert!((ade(&truth, &pred).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn normalized_adjacency_is_symmetric_and_bounded(mask in prop::collection::vec(any::<bool>(), 1..9), edges in any::<u64>()) {
        let n = mask.len();
        let mut a = build_adjacency(&mask, false);
        // Drop a seeded subset of edges to cover sparse graphs too.
        for i in 0..n {
            for j in i + 1..n {
                if edges >> ((i * 8 + j) % 64) & 1 == 1 {
                    a.data_mut()[i * n + j] = 0.0;
                    a.data_mut()[j * n + i] = 0.0;
                }
            }
        }
        let s = normalize_adjacency(&a, &mask).unwrap();
        let v = s.data();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(v[i * n + j], v[j * n + i]);
                prop_assert!((0.0..=1.0).contains(&v[i * n + j]));
                if !mask[i] || !mask[j] {
                    prop_assert_eq!(v[i * n + j], 0.0);
                }
            }
            // Rows of D^-1/2 (A + I) D^-1/2 have absolute sum at most sqrt(n).
            let row: f64 = (0..n).map(|j| v[i * n + j]).sum();
            prop_assert!(row <= (n as f64).sqrt() + 1e-12);
        }
    }

    #[test]
    fn scene_seeds_do_not_collide(seed in any::<u64>(), i in 0u64..1_000_000, j in 0u64..1_000_000) {
        prop_assume!(i != j);
        prop_assert_ne!(scene_seed(seed, i), scene_seed(seed, j));
    }
}

#[test]
fn noiseless_labels_follow_the_final_light_and_balance() {
    let cfg = WorldConfig {
        noise: 0.0,
        ..WorldConfig::default()
    };
    let data = generate_dataset(&cfg, 1000, 42).unwrap();
    let red = data.iter().filter(|s| final_signal(s) == Some(SignalState::Red)).count();
    let positive = data.iter().filter(|s| s.label_crossing == 1).count();
    assert_eq!(red, 500);
    assert_eq!(positive, 500);
    for s in &data {
        assert_eq!(s.label_crossing == 1, final_signal(s) == Some(SignalState::Red));
    }
}

#[test]
fn label_noise_flips_about_epsilon() {
    let eps = 0.2;
    let cfg = WorldConfig {
        noise: eps,
        ..WorldConfig::default()
    };
    let n = 1000;
    let data = generate_dataset(&cfg, n, 7).unwrap();
    let flipped = data
        .iter()
        .filter(|s| (s.label_crossing == 1) != (final_signal(s) == Some(SignalState::Red)))
        .count() as f64;
    let sd = (n as f64 * eps * (1.0 - eps)).sqrt();
    assert!((flipped - n as f64 * eps).abs() < 5.0 * sd, "{flipped} flips");
}

#[test]
fn datasets_from_different_seeds_share_no_scene() {
    let cfg = WorldConfig::default();
    let a = generate_dataset(&cfg, 200, 1).unwrap();
    let b = generate_dataset(&cfg, 200, 2).unwrap();
    for s in &a {
        assert!(!b.contains(s));
    }
    assert_eq!(a, generate_dataset(&cfg, 200, 1).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// With every importance weight equal, the complete-graph layers cannot
    /// tell bystanders apart, so listing them in another order leaves the
    /// prediction unchanged up to summation order.
    #[test]
    fn reordering_non_target_objects_is_harmless(scene in any::<u64>(), params in any::<u64>(), rot in 1usize..8) {
        let cfg = ModelConfig::default();
        let model = Model::new(cfg.clone(), ModelParams::init(&cfg, params).unwrap()).unwrap();
        let seq = generate_scene(&WorldConfig::default(), scene).unwrap();
        let mut shuffled = seq.clone();
        for f in &mut shuffled.frames {
            let t = f.objects.iter().position(|o| o.id == seq.target_id).unwrap();
            let target = f.objects.remove(t);
            let k = rot % f.objects.len().max(1);
            f.objects.rotate_left(k);
            f.objects.reverse();
            f.objects.push(target);
        }
        let a = model.forward(&seq).unwrap();
        let b = model.forward(&shuffled).unwrap();
        prop_assert!((a.probability - b.probability).abs() < 1e-9);
        for (p, q) in a.trajectory.iter().zip(&b.trajectory) {
            prop_assert!((p[0] - q[0]).abs() < 1e-6 && (p[1] - q[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn probabilities_are_valid(scene in any::<u64>(), params in any::<u64>()) {
        let cfg = ModelConfig::default();
        let model = Model::new(cfg.clone(), ModelParams::init(&cfg, params).unwrap()).unwrap();
        let p = model.forward(&generate_scene(&WorldConfig::default(), scene).unwrap()).unwrap();
        prop_assert!(p.probability > 0.0 && p.probability < 1.0);
        prop_assert_eq!(p.crossing, p.probability > 0.5);
        prop_assert!(p.trajectory.iter().all(|q| q[0].is_finite() && q[1].is_finite()));
    }
}

#[test]
fn tensor_shape_must_match_data() {
    assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
}
