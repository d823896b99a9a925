use dexfm_core::dein::{cin_layer, dein_forward, sum_pool};
use dexfm_core::init::stream_rng;
use dexfm_core::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn random(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

/// Literal per-map evaluation: every Hadamard product `X^k_i ∘ X^0_j` is
/// formed on its own and weighted by `W^{l}_{i,j}`, with the weight block of
/// map `l` read as an `e_k x m` matrix.
fn brute_force(xk: &Tensor, x0: &Tensor, weight: &Tensor) -> Vec<Vec<f64>> {
    let (ek, d) = (xk.rows(), xk.cols());
    let m = x0.rows();
    let maps = weight.rows();
    let mut out = vec![vec![0.0; d]; maps];
    for (l, row) in out.iter_mut().enumerate() {
        for i in 0..ek {
            for j in 0..m {
                let w = weight.get2(l, i * m + j);
                let product: Vec<f64> = (0..d).map(|c| xk.get2(i, c) * x0.get2(j, c)).collect();
                for c in 0..d {
                    row[c] += w * product[c];
                }
            }
        }
    }
    out
}

#[test]
fn cin_matches_brute_force_on_100_random_shapes() {
    let mut rng = stream_rng(42, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(1..6);
        let d = rng.random_range(1..6);
        let ek = rng.random_range(1..6);
        let next = rng.random_range(1..6);
        let x0 = random(&mut rng, &[m, d]);
        let xk = random(&mut rng, &[ek, d]);
        let w = random(&mut rng, &[next, ek * m]);
        let fast = cin_layer(&xk, &x0, &w).unwrap();
        assert_eq!(fast.shape(), &[next, d]);
        let slow = brute_force(&xk, &x0, &w);
        for l in 0..next {
            for c in 0..d {
                worst = worst.max((fast.get2(l, c) - slow[l][c]).abs());
            }
        }
    }
    assert!(worst <= 1e-12, "max abs difference {worst}");
}

#[test]
fn single_field_example() {
    let x0 = Tensor::from_rows(&[&[1.0, 2.0]]).unwrap();
    let w = Tensor::from_rows(&[&[1.0]]).unwrap();
    let x1 = cin_layer(&x0, &x0, &w).unwrap();
    assert_eq!(x1.data(), &[1.0, 4.0]);
    assert_eq!(sum_pool(&x1).unwrap().data(), &[5.0]);
    let (out, state) = dein_forward(&x0, &[w]).unwrap();
    assert_eq!(out.data(), &[5.0]);
    assert_eq!(state.layers.len(), 2);
}

#[test]
fn zero_second_layer_pads_output() {
    let x0 = Tensor::from_rows(&[&[1.0, 2.0], &[0.5, -1.0]]).unwrap();
    let w1 = Tensor::full(&[2, 4], 0.25);
    let w2 = Tensor::zeros(&[3, 4]);
    let (out, state) = dein_forward(&x0, &[w1, w2]).unwrap();
    assert_eq!(out.len(), 5);
    assert_eq!(&out.data()[2..], &[0.0; 3]);
    assert_eq!(&out.data()[..2], state.pooled[0].data());
}

#[test]
fn mismatched_weights_are_rejected() {
    let x0 = Tensor::zeros(&[2, 3]);
    assert!(cin_layer(&x0, &x0, &Tensor::zeros(&[2, 5])).is_err());
}

proptest! {
    #[test]
    fn bilinear_in_x0(seed in any::<u64>(), c in -3.0f64..3.0) {
        let mut rng = stream_rng(seed, 1);
        let x0 = random(&mut rng, &[3, 4]);
        let w = random(&mut rng, &[2, 9]);
        let scaled = Tensor::new(vec![3, 4], x0.data().iter().map(|v| c * v).collect()).unwrap();
        let a = cin_layer(&x0, &x0, &w).unwrap();
        let b = cin_layer(&scaled, &scaled, &w).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            prop_assert!((c * c * p - q).abs() <= 1e-10 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn pooled_entries_are_row_sums(seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 2);
        let x0 = random(&mut rng, &[3, 5]);
        let w = random(&mut rng, &[4, 9]);
        let (_, state) = dein_forward(&x0, &[w]).unwrap();
        for l in 0..4 {
            let s: f64 = state.layers[1].row(l).iter().sum();
            prop_assert_eq!(state.pooled[0].data()[l], s);
        }
    }

    #[test]
    fn output_length_is_total_maps(maps in proptest::collection::vec(1usize..5, 1..4)) {
        let mut rng = stream_rng(7, 3);
        let m = 3;
        let x0 = random(&mut rng, &[m, 2]);
        let mut prev = m;
        let weights: Vec<Tensor> = maps.iter().map(|&e| {
            let w = random(&mut rng, &[e, prev * m]);
            prev = e;
            w
        }).collect();
        let (out, _) = dein_forward(&x0, &weights).unwrap();
        prop_assert_eq!(out.len(), maps.iter().sum::<usize>());
    }
}
