use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graphs;
use crate::gtn::ActivationKind;
use crate::par::Exec;
use crate::tensor::DenseTensor;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn samples(model: &ModelSpec, n: usize, r: &mut ChaCha8Rng) -> Vec<Sample> {
    (0..n)
        .map(|_| Sample {
            x: DenseTensor::random_normal(model.input_dims().to_vec(), r).unwrap(),
            t: DenseTensor::random_uniform(model.output_dims().to_vec(), 0.05, 0.95, r).unwrap(),
        })
        .collect()
}

fn check(model: &ModelSpec, kind: LossKind, seed: u64) -> FdReport {
    let mut r = rng(seed);
    let batch = samples(model, 3, &mut r);
    let report = fd_check(model, &batch, kind, 1e-5, 1e-5, Exec::Parallel).unwrap();
    assert!(report.passed, "{report:#?}");
    report
}

#[test]
fn dense_gradient_closed_form() {
    let mut r = rng(1);
    let mut b = ModelBuilder::new(vec![3], &mut r).unwrap();
    b.dense("d", 2, false, ActivationKind::Identity).unwrap();
    let model = b.finish().unwrap();
    let x = DenseTensor::vector(vec![0.5, -1.0, 2.0]).unwrap();
    let t = DenseTensor::vector(vec![0.2, 0.1]).unwrap();
    let sample = Sample { x: x.clone(), t: t.clone() };
    let (_, g) = batch_loss_and_grad(&model, &model.params, &[sample], LossKind::Mse, Exec::Sequential).unwrap();
    let y = model.forward(&x).unwrap();
    // dL/dW = (2/n)(y − t) xᵀ
    for k in 0..2 {
        for j in 0..3 {
            let expect = (y.data()[k] - t.data()[k]) * x.data()[j];
            assert!((g.0[0].at(k, j) - expect).abs() < 1e-10);
        }
    }
}

#[test]
fn linear_model_fd_is_tight() {
    let mut r = rng(2);
    let mut b = ModelBuilder::new(vec![4], &mut r).unwrap();
    b.dense("d", 3, true, ActivationKind::Identity).unwrap();
    let model = b.finish().unwrap();
    let report = check(&model, LossKind::Mse, 3);
    assert!(report.max_rel_error < 1e-9, "{}", report.max_rel_error);
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut r = rng(4);
    let mut b = ModelBuilder::new(vec![3, 4, 2], &mut r).unwrap();
    b.gtn(
        "g",
        vec![DomainInit::Attention { d_k: 2 }, DomainInit::Circulant { kernel_len: 2 }],
        &[3],
        true,
        ActivationKind::Tanh,
    )
    .unwrap();
    let model = b.finish().unwrap();
    let x = DenseTensor::random_normal(vec![3, 4, 2], &mut r).unwrap();
    let trace = model.forward_traced(&model.params, &x).unwrap();
    let zero = DenseTensor::zeros(model.output_dims().to_vec()).unwrap();
    let (g, dx) = model.backward(&model.params, &trace, &zero).unwrap();
    assert_eq!(g.max_abs(), 0.0);
    assert!(dx.data().iter().all(|&v| v == 0.0));
}

#[test]
fn gtn_layer_fixed_gsos_fd() {
    let mut r = rng(5);
    let adj = crate::gtn::equiv::random_adjacency(4, &mut r);
    let mut b = ModelBuilder::new(vec![3, 4, 2], &mut r).unwrap();
    b.gtn(
        "g",
        vec![
            DomainInit::Fixed(graphs::gso_time_decay(3, 0.8).unwrap()),
            DomainInit::Fixed(graphs::gso_gcn(&adj).unwrap()),
        ],
        &[3],
        true,
        ActivationKind::Tanh,
    )
    .unwrap();
    check(&b.finish().unwrap(), LossKind::Mse, 6);
}

#[test]
fn attention_and_circulant_fd() {
    let mut r = rng(7);
    let mut b = ModelBuilder::new(vec![4, 5, 2], &mut r).unwrap();
    b.gtn(
        "g",
        vec![DomainInit::Attention { d_k: 3 }, DomainInit::Circulant { kernel_len: 3 }],
        &[2],
        false,
        ActivationKind::Sigmoid,
    )
    .unwrap();
    check(&b.finish().unwrap(), LossKind::Mse, 8);
}

#[test]
fn attention_feeds_input_gradient() {
    let mut r = rng(9);
    let mut b = ModelBuilder::new(vec![3, 2], &mut r).unwrap();
    b.gtn("a", vec![DomainInit::Fixed(graphs::GraphShiftOperator::identity(3).unwrap())], &[2], true, ActivationKind::Tanh)
        .unwrap();
    b.gtn("b", vec![DomainInit::Attention { d_k: 2 }], &[2], false, ActivationKind::Identity).unwrap();
    check(&b.finish().unwrap(), LossKind::Mse, 10);
}

#[test]
fn tt_dense_fd() {
    let mut r = rng(11);
    let mut b = ModelBuilder::new(vec![2, 3, 2], &mut r).unwrap();
    b.tt_dense("tt", &[2, 2, 2], &[2, 3, 2], &[2, 2], true, ActivationKind::Relu).unwrap();
    b.vectorize();
    b.dense("out", 2, true, ActivationKind::Identity).unwrap();
    check(&b.finish().unwrap(), LossKind::Mse, 12);
}

#[test]
fn rnn_fd() {
    let mut r = rng(13);
    let mut b = ModelBuilder::new(vec![5, 3, 2], &mut r).unwrap();
    b.matricize(1).unwrap();
    b.rnn("rnn", 3, true).unwrap();
    b.activation(ActivationKind::Tanh);
    b.vectorize();
    b.dense("out", 2, true, ActivationKind::Identity).unwrap();
    let model = b.finish().unwrap();
    assert_eq!(model.input_dims(), &[5, 3, 2]);
    check(&model, LossKind::Mse, 14);
}

#[test]
fn softmax_and_bce_fd() {
    let mut r = rng(15);
    let mut b = ModelBuilder::new(vec![2, 3], &mut r).unwrap();
    b.matricize(2).unwrap();
    b.gtn("g", vec![DomainInit::Fixed(graphs::GraphShiftOperator::identity(3).unwrap())], &[4], true, ActivationKind::SoftmaxLastMode)
        .unwrap();
    b.vectorize();
    b.dense("out", 1, true, ActivationKind::Sigmoid).unwrap();
    check(&b.finish().unwrap(), LossKind::BinaryCrossEntropy, 16);
}

#[test]
fn corrupted_gradient_fails() {
    let mut r = rng(17);
    let mut b = ModelBuilder::new(vec![3], &mut r).unwrap();
    b.dense("d", 2, true, ActivationKind::Tanh).unwrap();
    let model = b.finish().unwrap();
    let batch = samples(&model, 2, &mut r);
    let (_, mut g) = batch_loss_and_grad(&model, &model.params, &batch, LossKind::Mse, Exec::Sequential).unwrap();
    g.0[0].data_mut()[0] += 0.1;
    let report = fd_compare(&model, &batch, LossKind::Mse, &g, 1e-5, 1e-5, Exec::Sequential).unwrap();
    assert!(!report.passed);
}

#[test]
fn parallel_matches_sequential() {
    let mut r = rng(19);
    let mut b = ModelBuilder::new(vec![4, 3, 2], &mut r).unwrap();
    b.gtn("g", vec![DomainInit::Attention { d_k: 2 }, DomainInit::Circulant { kernel_len: 2 }], &[2], true, ActivationKind::Tanh)
        .unwrap();
    b.vectorize();
    b.dense("out", 1, true, ActivationKind::Identity).unwrap();
    let model = b.finish().unwrap();
    let batch = samples(&model, 16, &mut r);
    let a = batch_loss_and_grad(&model, &model.params, &batch, LossKind::Mse, Exec::Sequential).unwrap();
    let p = batch_loss_and_grad(&model, &model.params, &batch, LossKind::Mse, Exec::Parallel).unwrap();
    assert_eq!(a, p);
}

fn teacher_student(seed: u64) -> (ModelSpec, Vec<Sample>) {
    let mut r = rng(seed);
    let adj = crate::gtn::equiv::random_adjacency(4, &mut r);
    let domain = vec![
        DomainInit::Fixed(graphs::gso_time_decay(3, 0.9).unwrap()),
        DomainInit::Fixed(graphs::gso_gcn(&adj).unwrap()),
    ];
    let build = |r: &mut ChaCha8Rng| {
        let mut b = ModelBuilder::new(vec![3, 4, 2], r).unwrap();
        b.gtn("g", domain.clone(), &[3], false, ActivationKind::Identity).unwrap();
        b.finish().unwrap()
    };
    let teacher = build(&mut r);
    let student = build(&mut r);
    let data = (0..24)
        .map(|_| {
            let x = DenseTensor::random_normal(vec![3, 4, 2], &mut r).unwrap();
            let t = teacher.forward(&x).unwrap();
            Sample { x, t }
        })
        .collect();
    (student, data)
}

#[test]
fn linear_teacher_is_learned() {
    let (student, data) = teacher_student(21);
    let out = fit(&student, &data, &TrainConfig::default(), 0, Exec::Parallel).unwrap();
    let last = *out.loss_curve.last().unwrap();
    assert!(last < 1e-6, "final loss {last}");
}

#[test]
fn loss_non_increasing_over_windows() {
    let (student, data) = teacher_student(23);
    let out = fit(&student, &data, &TrainConfig::default(), 0, Exec::Parallel).unwrap();
    let c = &out.loss_curve;
    for s in 0..c.len().saturating_sub(50) {
        assert!(c[s + 50] <= c[s], "window at {s}: {} -> {}", c[s], c[s + 50]);
    }
}

#[test]
fn fit_is_deterministic() {
    let (student, data) = teacher_student(25);
    let cfg = TrainConfig {
        steps: 100,
        batch_size: Some(5),
        ..TrainConfig::default()
    };
    let a = fit(&student, &data, &cfg, 3, Exec::Parallel).unwrap();
    let b = fit(&student, &data, &cfg, 3, Exec::Sequential).unwrap();
    assert_eq!(a, b);
}

#[test]
fn non_finite_input_is_reported() {
    let mut r = rng(27);
    let mut b = ModelBuilder::new(vec![2], &mut r).unwrap();
    b.dense("d", 1, false, ActivationKind::Identity).unwrap();
    let mut model = b.finish().unwrap();
    model.params.set(0, DenseTensor::new(vec![1, 2], vec![1e308, 1e308]).unwrap()).unwrap();
    let data = vec![Sample {
        x: DenseTensor::vector(vec![1e308, 1e308]).unwrap(),
        t: DenseTensor::vector(vec![0.0]).unwrap(),
    }];
    let err = fit(&model, &data, &TrainConfig::default(), 0, Exec::Sequential).unwrap_err();
    assert!(matches!(err, TrainError::NonFiniteLoss { step: 0 }));
}

#[test]
fn builder_rejects_bad_shapes() {
    let mut r = rng(29);
    let mut b = ModelBuilder::new(vec![3, 2], &mut r).unwrap();
    assert!(b.gtn("g", vec![], &[2], false, ActivationKind::Identity).is_err());
    assert!(b.tt_dense("t", &[2, 2], &[2, 2], &[1], false, ActivationKind::Identity).is_err());
    assert!(b.rnn("r", 2, false).is_ok());
    let model = b.finish().unwrap();
    assert!(model.forward(&DenseTensor::zeros(vec![2, 3]).unwrap()).is_err());
    let trace = model.forward_traced(&model.params, &DenseTensor::zeros(vec![3, 2]).unwrap()).unwrap();
    assert!(model.backward(&model.params, &trace, &DenseTensor::zeros(vec![5]).unwrap()).is_err());
}

#[test]
fn backtracking_never_raises_loss() {
    let (student, data) = teacher_student(31);
    let cfg = TrainConfig {
        steps: 300,
        learning_rate: 0.5,
        ..TrainConfig::default()
    };
    let out = fit(&student, &data, &cfg, 0, Exec::Sequential).unwrap();
    assert!(out.loss_curve.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.lr_halvings > 0);
    let best = out.loss_curve.iter().copied().fold(f64::INFINITY, f64::min);
    let final_loss = batch_loss(&student, &out.params, &data, LossKind::Mse, Exec::Sequential).unwrap();
    assert_eq!(final_loss, best);
}
