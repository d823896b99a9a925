use dexfm_core::dein::{attention_weights, dein_forward, diversity, weighted_diversity, AttentionParams, HiddenState};
use dexfm_core::init::stream_rng;
use dexfm_core::tape::softmax;
use dexfm_core::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn random(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Centroid, per-row distances and their mean, written out directly.
fn oracle(x: &Tensor) -> f64 {
    let (e, d) = (x.rows(), x.cols());
    let centroid: Vec<f64> = (0..d).map(|c| (0..e).map(|l| x.get2(l, c)).sum::<f64>() / e as f64).collect();
    let mut total = 0.0;
    for l in 0..e {
        let sq: f64 = (0..d).map(|c| (x.get2(l, c) - centroid[c]).powi(2)).sum();
        total += (sq + 1e-12).sqrt();
    }
    total / e as f64
}

fn map_rows(x: &Tensor, f: impl Fn(usize, f64) -> f64) -> Tensor {
    let d = x.cols();
    let data = x.data().iter().enumerate().map(|(i, &v)| f(i % d, v)).collect();
    Tensor::new(x.shape().to_vec(), data).unwrap()
}

#[test]
fn two_row_example() {
    let x = Tensor::from_rows(&[&[0.0, 0.0], &[2.0, 0.0]]).unwrap();
    assert!((diversity(&x).unwrap() - 1.0).abs() < 1e-11);
}

#[test]
fn identical_rows_hit_the_floor() {
    let row: &[f64] = &[0.3, -1.0, 2.0];
    let x = Tensor::from_rows(&[row; 5]).unwrap();
    let d = diversity(&x).unwrap();
    assert!((0.0..=1e-6).contains(&d), "{d}");
}

#[test]
fn matches_direct_oracle() {
    let mut rng = stream_rng(9, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let e = rng.random_range(1..8);
        let d = rng.random_range(1..8);
        let x = random(&mut rng, &[e, d], 3.0);
        worst = worst.max((diversity(&x).unwrap() - oracle(&x)).abs());
    }
    assert!(worst <= 1e-12, "{worst}");
}

#[test]
fn weighted_totals() {
    let state = HiddenState {
        layers: vec![
            Tensor::zeros(&[1, 2]),
            Tensor::from_rows(&[&[0.0, 0.0], &[4.0, 0.0]]).unwrap(),
            Tensor::from_rows(&[&[0.0, 0.0], &[8.0, 0.0]]).unwrap(),
        ],
        pooled: vec![],
    };
    let half = weighted_diversity(&state, Some(&[0.5, 0.5])).unwrap();
    assert!((half.total - 3.0).abs() < 1e-9);
    let unit = weighted_diversity(&state, None).unwrap();
    assert!((unit.total - 6.0).abs() < 1e-9);
    assert_eq!(unit.attention, vec![1.0, 1.0]);
    assert!(weighted_diversity(&state, Some(&[1.0])).is_err());
}

fn params(rng: &mut impl Rng, a: usize, e: usize) -> AttentionParams {
    AttentionParams {
        h: random(rng, &[a], 1.0),
        w: random(rng, &[a, e], 1.0),
        b: random(rng, &[a], 1.0),
    }
}

#[test]
fn equal_pooled_vectors_give_uniform_weights() {
    let mut rng = stream_rng(3, 0);
    let p = params(&mut rng, 4, 3);
    let s = random(&mut rng, &[3], 2.0);
    let a = attention_weights(&[s.clone(), s.clone(), s], &p).unwrap();
    for w in a {
        assert!((w - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn zero_h_gives_uniform_weights() {
    let mut rng = stream_rng(4, 0);
    let mut p = params(&mut rng, 4, 3);
    p.h = Tensor::zeros(&[4]);
    let pooled: Vec<Tensor> = (0..4).map(|_| random(&mut rng, &[3], 2.0)).collect();
    for w in attention_weights(&pooled, &p).unwrap() {
        assert!((w - 0.25).abs() < 1e-12);
    }
}

#[test]
fn single_layer_weight_is_one() {
    let mut rng = stream_rng(5, 0);
    let p = params(&mut rng, 2, 3);
    assert_eq!(attention_weights(&[random(&mut rng, &[3], 1.0)], &p).unwrap(), vec![1.0]);
}

#[test]
fn closed_form_softmax() {
    let a = softmax(&[3f64.ln(), 0.0]);
    assert!((a[0] - 0.75).abs() < 1e-15 && (a[1] - 0.25).abs() < 1e-15);
}

#[test]
fn pooled_width_must_match_shared_weight() {
    let mut rng = stream_rng(6, 0);
    let p = params(&mut rng, 2, 3);
    assert!(attention_weights(&[Tensor::zeros(&[3]), Tensor::zeros(&[4])], &p).is_err());
}

#[test]
fn layers_from_a_forward_pass_are_scored() {
    let mut rng = stream_rng(8, 0);
    let x0 = random(&mut rng, &[3, 4], 1.0);
    let w1 = random(&mut rng, &[3, 9], 1.0);
    let w2 = random(&mut rng, &[3, 9], 1.0);
    let (_, state) = dein_forward(&x0, &[w1, w2]).unwrap();
    let r = weighted_diversity(&state, None).unwrap();
    assert_eq!(r.raw.len(), 2);
    for (k, d) in r.raw.iter().enumerate() {
        assert!((d - oracle(&state.layers[k + 1])).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn non_negative(seed in any::<u64>(), e in 1usize..6, d in 1usize..6) {
        let x = random(&mut stream_rng(seed, 1), &[e, d], 5.0);
        prop_assert!(diversity(&x).unwrap() >= 0.0);
    }

    #[test]
    fn translation_invariant(seed in any::<u64>(), e in 1usize..6, d in 1usize..6) {
        let mut rng = stream_rng(seed, 2);
        let x = random(&mut rng, &[e, d], 3.0);
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
        let moved = map_rows(&x, |c, v| v + shift[c]);
        prop_assert!((diversity(&x).unwrap() - diversity(&moved).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn positively_homogeneous(seed in any::<u64>(), c in prop_oneof![-20.0f64..-0.1, 0.1f64..20.0]) {
        let mut rng = stream_rng(seed, 3);
        let x = random(&mut rng, &[4, 3], 3.0);
        let base = diversity(&x).unwrap();
        let scaled = diversity(&map_rows(&x, |_, v| c * v)).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-8, "{} vs {}", scaled, c.abs() * base);
    }

    #[test]
    fn zero_only_for_equal_maps(seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 4);
        let x = random(&mut rng, &[3, 3], 1.0);
        // distinct random rows are far from the floor
        prop_assert!(diversity(&x).unwrap() > 1e-3);
    }

    #[test]
    fn attention_is_a_distribution(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = stream_rng(seed, 5);
        let p = params(&mut rng, 4, 3);
        let pooled: Vec<Tensor> = (0..k).map(|_| random(&mut rng, &[3], 50.0)).collect();
        let a = attention_weights(&pooled, &p).unwrap();
        prop_assert!(a.iter().all(|&w| w >= 0.0));
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn softmax_shift_invariant(xs in proptest::collection::vec(-30.0f64..30.0, 1..8), c in -100.0f64..100.0) {
        let a = softmax(&xs);
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let b = softmax(&shifted);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_handles_extreme_inputs(xs in proptest::collection::vec(-1e300f64..1e300, 1..8)) {
        let a = softmax(&xs);
        prop_assert!(a.iter().all(|&w| w >= 0.0 && w.is_finite()));
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}
