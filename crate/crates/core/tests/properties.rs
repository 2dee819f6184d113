//! Property tests for the invariants of ops, layers, models, data and
//! training.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resoformer::autograd::{grad_check, Tape, Var, SHADOW_EPS};
use resoformer::data::{
    window_count, window_offsets, window_pairs, MotorPosition, NormStats, SeriesRecord, SimParams,
};
use resoformer::model::{Checkpoint, Forecaster, Model, ModelConfig, ModelKind};
use resoformer::nn::{multi_head_attention_with_weights, AttentionParams};
use resoformer::tensor::{Scalar, Tensor};
use resoformer::train::{mae, mse, train, TrainConfig, WindowSet};
use resoformer::Result;

#[derive(Clone, Copy, Debug)]
enum Op {
    Matmul,
    AddBroadcast,
    Sub,
    Mul,
    Scale,
    Sigmoid,
    Tanh,
    Relu,
    Abs,
    Softmax,
    LayerNorm,
    Conv,
    SumAxis,
    Mean,
    Permute,
    Slice,
    Concat,
}

const OPS: [Op; 17] = [
    Op::Matmul,
    Op::AddBroadcast,
    Op::Sub,
    Op::Mul,
    Op::Scale,
    Op::Sigmoid,
    Op::Tanh,
    Op::Relu,
    Op::Abs,
    Op::Softmax,
    Op::LayerNorm,
    Op::Conv,
    Op::SumAxis,
    Op::Mean,
    Op::Permute,
    Op::Slice,
    Op::Concat,
];

/// Input shapes for `op` given small dimensions `(a, b, c)`.
fn shapes(op: Op, a: usize, b: usize, c: usize) -> Vec<Vec<usize>> {
    match op {
        Op::Matmul => vec![vec![a, b], vec![b, c]],
        Op::AddBroadcast => vec![vec![a, b], vec![b]],
        Op::Sub | Op::Mul | Op::Concat => vec![vec![a, b], vec![a, b]],
        Op::LayerNorm => vec![vec![a, b + 1], vec![b + 1], vec![b + 1]],
        Op::Conv => vec![vec![a, b + 2, c], vec![2, c, b]],
        _ => vec![vec![a, b, c]],
    }
}

fn apply<F: Scalar>(op: Op, tape: &mut Tape<F>, v: &[Var]) -> Result<Var> {
    match op {
        Op::Matmul => tape.matmul(v[0], v[1]),
        Op::AddBroadcast => tape.add(v[0], v[1]),
        Op::Sub => tape.sub(v[0], v[1]),
        Op::Mul => tape.mul(v[0], v[1]),
        Op::Scale => Ok(tape.scale(v[0], F::of(-1.7))),
        Op::Sigmoid => Ok(tape.sigmoid(v[0])),
        Op::Tanh => Ok(tape.tanh(v[0])),
        Op::Relu => Ok(tape.relu(v[0])),
        Op::Abs => Ok(tape.abs(v[0])),
        Op::Softmax => tape.softmax(v[0], 1),
        Op::LayerNorm => tape.layer_norm(v[0], v[1], v[2], 1e-5),
        Op::Conv => tape.conv1d_causal(v[0], v[1], 2),
        Op::SumAxis => tape.sum(v[0], Some(1)),
        Op::Mean => tape.mean(v[0], Some(2)),
        Op::Permute => tape.permute(v[0], &[2, 0, 1]),
        Op::Slice => {
            let len = tape.shape(v[0])[2];
            tape.slice(v[0], 2, len / 2, len - len / 2)
        }
        Op::Concat => tape.concat(&[v[0], v[1]], 0),
    }
}

/// `Σ w ⊙ op(inputs)` with fixed pseudo-random weights.
fn objective<F: Scalar>(op: Op, tape: &mut Tape<F>, v: &[Var]) -> Result<Var> {
    let y = apply(op, tape, v)?;
    let w = Tensor::from_fn(tape.shape(y), |i| F::of((i as f64 * 1.37 + 0.2).cos()));
    let wv = tape.constant(w);
    let p = tape.mul(y, wv)?;
    tape.sum(p, None)
}

/// Values bounded away from zero so ReLU and |·| kinks are never straddled.
fn inputs(op: Op, dims: (usize, usize, usize), seed: u64) -> Vec<Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shapes(op, dims.0, dims.1, dims.2)
        .iter()
        .map(|s| {
            Tensor::from_fn(s, |_| {
                let m = rng.random_range(0.1..1.5);
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            })
        })
        .collect()
}

/// f32 reverse-mode gradients against f64 central differences. The
/// denominator is floored at 1% of the largest gradient entry, since f32
/// cannot resolve entries that cancel to ~0.
fn f32_check(op: Op, xs: &[Tensor<f64>]) -> f64 {
    let mut tape = Tape::<f32>::new();
    let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.cast(), true)).collect();
    let loss = objective(op, &mut tape, &vars).unwrap();
    tape.backward(loss).unwrap();
    let eval = |xs: &[Tensor<f64>]| {
        let mut t = Tape::<f64>::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let l = objective(op, &mut t, &vs).unwrap();
        t.value(l).data()[0]
    };
    let mut work = xs.to_vec();
    let mut pairs = Vec::new();
    for (i, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).unwrap();
        for j in 0..xs[i].numel() {
            let orig = xs[i].data()[j];
            work[i].data_mut()[j] = orig + SHADOW_EPS;
            let plus = eval(&work);
            work[i].data_mut()[j] = orig - SHADOW_EPS;
            let minus = eval(&work);
            work[i].data_mut()[j] = orig;
            pairs.push((analytic[j] as f64, (plus - minus) / (2.0 * SHADOW_EPS)));
        }
    }
    let floor = 1e-2 * pairs.iter().fold(0.0f64, |m, (_, n)| m.max(n.abs()));
    let worst = pairs
        .iter()
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(floor).max(1e-12))
        .fold(0.0, f64::max);
    worst
}

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..4, 1usize..4, 1usize..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn every_op_passes_grad_check(d in dims(), seed in any::<u64>()) {
        for op in OPS {
            let xs = inputs(op, d, seed);
            let err64 = grad_check(&xs, SHADOW_EPS, |t, v| objective(op, t, v)).unwrap();
            prop_assert!(err64 < 1e-4, "{op:?} {d:?}: f64 relative error {err64:e}");
            let err32 = f32_check(op, &xs);
            prop_assert!(err32 < 1e-3, "{op:?} {d:?}: f32 relative error {err32:e}");
        }
    }
}

proptest! {
    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(
        rows in 1usize..5,
        cols in 1usize..9,
        seed in any::<u64>(),
        shift in -50.0f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn(&[rows, cols], |_| rng.random_range(-30.0..30.0));
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let s = tape.softmax(xv, 1).unwrap();
        let shifted = tape.constant(Tensor::from_fn(&[rows, cols], |i| x.data()[i] + shift));
        let s2 = tape.softmax(shifted, 1).unwrap();
        let (a, b) = (tape.value(s).data(), tape.value(s2).data());
        prop_assert!(a.iter().all(|&p| p > 0.0 || p == 0.0 && cols > 1));
        prop_assert!(a.iter().all(|&p| p <= 1.0));
        for row in a.chunks(cols) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
        prop_assert!(a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-6));
    }

    #[test]
    fn causal_conv_matches_oracle_and_ignores_the_future(
        len in 2usize..24,
        c_in in 1usize..3,
        c_out in 1usize..3,
        taps in 1usize..4,
        dilation in 1usize..5,
        seed in any::<u64>(),
        cut in any::<prop::sample::Index>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..len).map(|_| (0..c_in).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let w: Vec<Vec<Vec<f64>>> = (0..taps)
            .map(|_| (0..c_in).map(|_| (0..c_out).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
            .collect();
        let run = |x: &[Vec<f64>]| {
            let mut tape = Tape::new();
            let xv = tape.constant(Tensor::new(vec![len, c_in], x.concat()).unwrap());
            let wv = tape.constant(Tensor::new(vec![taps, c_in, c_out], w.concat().concat()).unwrap());
            let y = tape.conv1d_causal(xv, wv, dilation).unwrap();
            tape.value(y).data().to_vec()
        };
        let got = run(&x);
        let want: Vec<f64> = common::causal_conv_oracle(&x, &w, dilation).concat();
        prop_assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));

        let t = cut.index(len - 1);
        let mut later = x.clone();
        for row in &mut later[t + 1..] {
            row.iter_mut().for_each(|v| *v += rng.random_range(-9.0..9.0));
        }
        let y2 = run(&later);
        prop_assert_eq!(&got[..(t + 1) * c_out], &y2[..(t + 1) * c_out]);
    }

    #[test]
    fn identity_matmul_is_exact(n in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::from_fn(&[n, cols], |_| rng.random_range(-1e3..1e3));
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::<f64>::eye(n));
        let av = tape.constant(a.clone());
        let y = tape.matmul(i, av).unwrap();
        prop_assert_eq!(tape.value(y), &a);
    }

    #[test]
    fn attention_weight_rows_sum_to_one(
        heads in 1usize..3,
        head_dim in 1usize..4,
        lq in 1usize..5,
        lk in 1usize..6,
        seed in any::<u64>(),
    ) {
        let width = heads * head_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = AttentionParams::<f64>::new("att", width, heads, &mut rng).unwrap();
        let mut tape = Tape::new();
        let q = tape.constant(Tensor::from_fn(&[2, lq, width], |_| rng.random_range(-3.0..3.0)));
        let kv = tape.constant(Tensor::from_fn(&[2, lk, width], |_| rng.random_range(-3.0..3.0)));
        let (_, w) = multi_head_attention_with_weights(&mut tape, q, kv, kv, &p).unwrap();
        for row in tape.value(w).data().chunks(lk) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }
}

fn toy(kind_seed: u64) -> ModelConfig {
    ModelConfig {
        input_len: 16,
        horizon: 8,
        width: 8,
        heads: 2,
        dropout: 0.2,
        dilations: vec![1, 2, 4],
        kernel: 3,
        head_hidden: 12 + (kind_seed % 2) as usize * 4,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn resoformer_output_is_finite_for_bounded_inputs(seed in any::<u64>(), xs in prop::collection::vec(-10.0f32..10.0, 16)) {
        let m = Model::<f32>::init(ModelKind::Resoformer, &toy(seed), seed).unwrap();
        let y = m.predict(&Tensor::new(vec![16], xs).unwrap()).unwrap();
        prop_assert!(y.all_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn backward_is_bit_deterministic(seed in any::<u64>()) {
        let m = Model::<f32>::init(ModelKind::Resoformer, &toy(seed), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn(&[3, 16], |_| rng.random_range(-2.0f32..2.0));
        let grads = || {
            let mut tape = Tape::training(ChaCha8Rng::seed_from_u64(seed));
            let xv = tape.constant(x.clone());
            let y = m.forward(&mut tape, xv).unwrap();
            let loss = tape.mean(y, None).unwrap();
            tape.backward(loss).unwrap()
        };
        let (a, b) = (grads(), grads());
        prop_assert_eq!(a.by_name.len(), b.by_name.len());
        for ((na, ga), (nb, gb)) in a.by_name.iter().zip(&b.by_name) {
            prop_assert_eq!(na, nb);
            prop_assert!(ga.iter().zip(gb).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions(seed in any::<u64>(), kind in 0usize..4) {
        let kind = ModelKind::ALL[kind];
        let model = Model::<f32>::init(kind, &toy(seed), seed).unwrap();
        let stats = NormStats::fit(&[series(0, 50, (seed % 997) as f64)]).unwrap();
        let bytes = Checkpoint::from_model(&model, stats.clone()).to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back.stats, &stats);
        let restored = back.to_model().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn(&[4, 16], |_| rng.random_range(-3.0f32..3.0));
        let (a, b) = (model.predict(&x).unwrap(), restored.predict(&x).unwrap());
        prop_assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        prop_assert_eq!(model.predict(&x).unwrap(), a);
    }
}

fn series(id: usize, len: usize, phase: f64) -> SeriesRecord {
    SeriesRecord {
        series_id: format!("s{id}"),
        params: SimParams {
            stiffness: 2662.0,
            brake_time: 1.0,
            road_friction: 1.0,
            motor_position: MotorPosition::Front,
            seed: id as u64,
        },
        sample_rate: 100.0,
        mg_rpm: (0..len)
            .map(|i| 2000.0 + 300.0 * ((i as f64 + phase) * 0.21).sin())
            .collect(),
        ds_torque: (0..len)
            .map(|i| 4.0 * ((i as f64 + phase) * 0.37).cos() + (id as f64))
            .collect(),
    }
}

proptest! {
    #[test]
    fn windows_are_adjacent_and_counted_in_closed_form(
        len in 0usize..200,
        l in 1usize..40,
        t in 1usize..40,
        stride in 1usize..20,
    ) {
        let s = series(0, len, 0.0);
        let pairs = window_pairs(&s, l, t, stride).unwrap();
        let want = if len >= l + t { (len - l - t) / stride + 1 } else { 0 };
        prop_assert_eq!(pairs.len(), want);
        prop_assert_eq!(window_count(len, l, t, stride), want);
        prop_assert_eq!(window_offsets(len, l, t, stride).unwrap().len(), want);
        for (k, p) in pairs.iter().enumerate() {
            prop_assert_eq!(p.offset, k * stride);
            prop_assert_eq!(p.x.len(), l);
            prop_assert_eq!(p.y.len(), t);
            prop_assert_eq!(&p.x[..], &s.mg_rpm[p.offset..p.offset + l]);
            prop_assert_eq!(&p.y[..], &s.ds_torque[p.offset + l..p.offset + l + t]);
        }
    }

    #[test]
    fn normalization_round_trips_and_standardizes(n in 1usize..5, len in 2usize..80, phase in 0.0f64..10.0) {
        let data: Vec<SeriesRecord> = (0..n).map(|i| series(i, len, phase + i as f64)).collect();
        let stats = NormStats::fit(&data).unwrap();
        for s in &data {
            let back = stats.invert(&stats.apply(s));
            for (a, b) in s.mg_rpm.iter().zip(&back.mg_rpm).chain(s.ds_torque.iter().zip(&back.ds_torque)) {
                prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
            }
        }
        let z: Vec<f64> = data.iter().flat_map(|s| stats.apply(s).ds_torque).collect();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64;
        prop_assert!(mean.abs() < 1e-3 && (var.sqrt() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn metrics_are_order_invariant(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..50), seed in any::<u64>()) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let mut idx: Vec<usize> = (0..y.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let ps: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        let tol = |a: f64| 1e-12 * a.abs().max(1.0);
        let (m1, m2) = (mae(&y, &p).unwrap(), mae(&ys, &ps).unwrap());
        prop_assert!((m1 - m2).abs() <= tol(m1));
        let (s1, s2) = (mse(&y, &p).unwrap(), mse(&ys, &ps).unwrap());
        prop_assert!((s1 - s2).abs() <= tol(s1));
    }
}

#[test]
fn zero_model_training_changes_nothing() {
    let data: Vec<SeriesRecord> = (0..3).map(|i| series(i, 60, i as f64)).collect();
    let stats = NormStats::fit(&data).unwrap();
    let ws = WindowSet::new(&data, &stats, 16, 8, 5).unwrap();
    let model = Model::<f32>::init(ModelKind::Zero, &toy(0), 0).unwrap();
    let out = train(
        model.clone(),
        &ws,
        &TrainConfig {
            epochs: 2,
            learning_rate: 1.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(out.model, model);
    let (x, _) = ws.batch(&[0, 1, 2]);
    assert!(out
        .model
        .predict(&x)
        .unwrap()
        .data()
        .iter()
        .all(|&v| v == 0.0));
}
