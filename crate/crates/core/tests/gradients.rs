use dexfm_core::check::{check_model_gradients, corruption_target, tiny_batch, tiny_spec};
use dexfm_core::embedding::{embed_backward, embed_instance, record_embedding};
use dexfm_core::gradcheck::{grad_check, GradCheckOptions};
use dexfm_core::init::stream_rng;
use dexfm_core::model::ParamGroup;
use dexfm_core::{EncodedInstance, NumericsError, Tape, Tensor, TrainConfig, Var, Variant};
use rand::Rng;

type Build = fn(&mut Tape<'_>, &[Var]) -> Result<Var, NumericsError>;

fn random(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Scalarizes `build` with a fixed random projection and returns the max
/// relative error of the tape gradient against central differences.
fn primitive_error(inputs: Vec<Tensor>, build: Build, seed: u64) -> f64 {
    let eval = |params: &[Tensor], grads: Option<&mut Vec<Tensor>>| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().enumerate().map(|(i, t)| tape.param(i, t).unwrap()).collect();
        let out = build(&mut tape, &vars).unwrap();
        let n = tape.value(out).len();
        let w = random(&mut stream_rng(seed, 99), &[n], -1.0, 1.0);
        let w = tape.constant(w).unwrap();
        let s = tape.dot(w, out).unwrap();
        if let Some(g) = grads {
            tape.backward_into(s, g).unwrap();
        }
        tape.scalar(s)
    };
    let mut grads: Vec<Tensor> = inputs.iter().map(|t| Tensor::zeros(t.shape())).collect();
    eval(&inputs, Some(&mut grads));
    let mut params = inputs;
    grad_check(&mut params, &grads, |p| eval(p, None), GradCheckOptions::default())
        .unwrap()
        .max_rel_error
}

fn away_from_zero(t: Tensor) -> Tensor {
    let data = t.data().iter().map(|&v| v.signum() * (v.abs() + 0.1)).collect();
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

#[test]
fn every_primitive_matches_finite_differences() {
    let cases: Vec<(&str, Build, Vec<Vec<usize>>)> = vec![
        ("matvec", |t, v| t.matvec(v[0], v[1]), vec![vec![3, 4], vec![4]]),
        ("matmul", |t, v| t.matmul(v[0], v[1]), vec![vec![3, 4], vec![4, 2]]),
        ("hadamard", |t, v| t.hadamard(v[0], v[1]), vec![vec![2, 3], vec![2, 3]]),
        ("add", |t, v| t.add(v[0], v[1]), vec![vec![5], vec![5]]),
        ("sub", |t, v| t.sub(v[0], v[1]), vec![vec![5], vec![5]]),
        ("scale", |t, v| t.scale(v[0], -1.7), vec![vec![2, 2]]),
        ("concat", |t, v| t.concat(&[v[0], v[1]]), vec![vec![3], vec![2]]),
        ("sum", |t, v| t.sum(v[0]), vec![vec![3, 3]]),
        ("row_sums", |t, v| t.row_sums(v[0]), vec![vec![3, 4]]),
        ("sigmoid", |t, v| t.sigmoid(v[0]), vec![vec![6]]),
        ("softmax", |t, v| t.softmax(v[0]), vec![vec![5]]),
        ("mean_rows", |t, v| t.mean_rows(v[0]), vec![vec![4, 3]]),
        ("row_distances", |t, v| t.row_distances(v[0], v[1]), vec![vec![4, 3], vec![3]]),
        ("outer_hadamard", |t, v| t.outer_hadamard(v[0], v[1]), vec![vec![2, 3], vec![4, 3]]),
        ("gather", |t, v| t.gather(v[0], vec![vec![0, 2], vec![1], vec![2, 3, 0]]), vec![vec![4, 3]]),
        ("dot", |t, v| t.dot(v[0], v[1]), vec![vec![4], vec![4]]),
        ("reshape", |t, v| t.reshape(v[0], &[6]), vec![vec![2, 3]]),
        ("index", |t, v| t.index(v[0], 2), vec![vec![4]]),
    ];
    for (k, (name, build, shapes)) in cases.into_iter().enumerate() {
        let mut rng = stream_rng(11, k as u64);
        let inputs = shapes.iter().map(|s| random(&mut rng, s, -2.0, 2.0)).collect();
        let err = primitive_error(inputs, build, k as u64);
        assert!(err <= 1e-7, "{name}: {err}");
    }
}

#[test]
fn kinked_and_restricted_primitives() {
    let mut rng = stream_rng(12, 0);
    let x = away_from_zero(random(&mut rng, &[8], -2.0, 2.0));
    assert!(primitive_error(vec![x], |t, v| t.relu(v[0]), 1) <= 1e-7);
    let x = random(&mut rng, &[6], 0.5, 2.0);
    assert!(primitive_error(vec![x], |t, v| t.sqrt_eps(v[0]), 2) <= 1e-7);
    let x = random(&mut rng, &[1], -1.0, 1.0).reshape(&[]).unwrap();
    let loss: Build = |t, v| {
        let p = t.sigmoid(v[0])?;
        t.log_loss(p, 1.0, 1e-7)
    };
    assert!(primitive_error(vec![x.clone()], loss, 3) <= 1e-7);
    let loss0: Build = |t, v| {
        let p = t.sigmoid(v[0])?;
        t.log_loss(p, 0.0, 1e-7)
    };
    assert!(primitive_error(vec![x], loss0, 4) <= 1e-7);
}

#[test]
fn full_model_gradient_check() {
    let start = std::time::Instant::now();
    let report =
        check_model_gradients(&tiny_spec(), &tiny_batch(), &TrainConfig::default(), GradCheckOptions::default(), None)
            .unwrap();
    let names: Vec<ParamGroup> = report.groups.iter().map(|g| g.group).collect();
    assert_eq!(names, ParamGroup::ALL.to_vec());
    for g in &report.groups {
        assert!(g.max_rel_error <= 1e-4, "{:?}", g);
        assert!(g.coords > 0);
    }
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn ablation_variants_pass_the_check() {
    for variant in [Variant::NoDiversity, Variant::NoAttention, Variant::NoDeep] {
        let cfg = TrainConfig {
            variant,
            ..TrainConfig::default()
        };
        let r = check_model_gradients(&tiny_spec(), &tiny_batch(), &cfg, GradCheckOptions::default(), None).unwrap();
        assert!(r.max_rel_error <= 1e-4, "{variant}: {r:?}");
        let has_attention = r.groups.iter().any(|g| g.group == ParamGroup::Attention);
        let has_mlp = r.groups.iter().any(|g| g.group == ParamGroup::Mlp);
        assert_eq!(has_attention, variant == Variant::NoDeep);
        assert_eq!(has_mlp, variant != Variant::NoDeep);
    }
}

#[test]
fn corrupted_backward_rules_are_detected() {
    let cfg = TrainConfig::default();
    for target in ["dein", "diversity", "attention", "mlp", "embedding", "output"] {
        let kind = corruption_target(target).unwrap();
        let r = check_model_gradients(&tiny_spec(), &tiny_batch(), &cfg, GradCheckOptions::default(), Some((kind, 1.1)))
            .unwrap();
        assert!(r.max_rel_error > 1e-2, "{target}: {}", r.max_rel_error);
    }
    assert_eq!(corruption_target("nothing"), None);
}

fn instance(fields: Vec<Vec<u32>>) -> EncodedInstance {
    EncodedInstance { fields, label: 1 }
}

#[test]
fn embedding_gradients() {
    let mut rng = stream_rng(13, 0);
    let table = random(&mut rng, &[6, 3], -1.0, 1.0);
    let inst = instance(vec![vec![0, 1], vec![3], vec![1]]);
    let g = random(&mut rng, &[3, 3], -1.0, 1.0);

    // tape oracle: gradient of <g, X0> with respect to the table
    let mut tape = Tape::new();
    let t = tape.param(0, &table).unwrap();
    let (x0, _) = record_embedding(&mut tape, t, &inst).unwrap();
    let gc = tape.constant(g.clone()).unwrap();
    let s = tape.dot(gc, x0).unwrap();
    let dense = tape.backward(s, &[&[6, 3]]).unwrap().remove(0);

    let sparse = embed_backward(&inst, &g).unwrap();
    for row in 0..6u32 {
        let expected = dense.row(row as usize);
        match sparse.get(&row) {
            Some(v) => assert_eq!(v.as_slice(), expected),
            None => assert!(expected.iter().all(|&x| x == 0.0), "row {row} should be untouched"),
        }
    }
    // id 1 is active in fields 0 and 2
    let shared: Vec<f64> = (0..3).map(|c| g.get2(0, c) + g.get2(2, c)).collect();
    assert_eq!(sparse[&1], shared);
    assert_eq!(sparse[&0], g.row(0));

    let err = primitive_error(
        vec![table],
        |t, v| {
            let inst = EncodedInstance {
                fields: vec![vec![0, 1], vec![3], vec![1]],
                label: 0,
            };
            let (x0, _) = record_embedding(t, v[0], &inst)?;
            let sq = t.hadamard(x0, x0)?;
            t.sigmoid(sq)
        },
        7,
    );
    assert!(err <= 1e-7, "{err}");
}

#[test]
fn embedding_is_linear_in_the_table() {
    let mut rng = stream_rng(14, 0);
    let a = random(&mut rng, &[5, 2], -1.0, 1.0);
    let b = random(&mut rng, &[5, 2], -1.0, 1.0);
    let sum = Tensor::new(vec![5, 2], a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()).unwrap();
    let inst = instance(vec![vec![0, 4], vec![2]]);
    let (xa, _) = embed_instance(&inst, &a).unwrap();
    let (xb, _) = embed_instance(&inst, &b).unwrap();
    let (xs, flat) = embed_instance(&inst, &sum).unwrap();
    for i in 0..xs.len() {
        assert!((xs.data()[i] - xa.data()[i] - xb.data()[i]).abs() < 1e-15);
    }
    assert_eq!(flat.data(), xs.data());
}
