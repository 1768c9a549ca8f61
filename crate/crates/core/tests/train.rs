use gwt_core::data::{generate_synthetic, make_windows, FrameSeries, SyntheticConfig, Windows};
use gwt_core::models::{ModelConfig, ModelKind};
use gwt_core::params::ParamStore;
use gwt_core::rng::seeded;
use gwt_core::spatial::{CenterOrigin, SpatialKind};
use gwt_core::train::*;
use gwt_core::{Error, Tape, Tensor};
use proptest::prelude::*;
use rand::RngExt;

fn small_data() -> Windows {
    let fs = generate_synthetic(6, 90, 1, &SyntheticConfig::default()).unwrap();
    make_windows(&fs, 4, 3).unwrap()
}

fn small_model(spatial: SpatialKind) -> ModelConfig {
    let mut m = ModelConfig::new(ModelKind::AgcrnLite, spatial, 6, 1, 4, 1, 3);
    m.set_horizons(4, 3);
    m
}

fn quick(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig { epochs, batch_size: 16, adam: AdamConfig { lr, ..Default::default() }, early_stop_patience: 5, seed: 3 }
}

fn loss_of(p: &Tensor, t: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let (a, b) = (tape.leaf(p.clone()), tape.constant(t.clone()));
    let l = mae_loss(&mut tape, a, b).unwrap();
    tape.value(l).item().unwrap()
}

#[test]
fn mae_loss_examples() {
    let t = Tensor::new(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap();
    assert_eq!(loss_of(&t, &t), 0.0);
    assert_eq!(loss_of(&t.map(|v| v + 1.0), &t), 1.0);
    let mut tape = Tape::new();
    let (a, b) = (tape.leaf(t.clone()), tape.constant(Tensor::zeros(&[3, 2])));
    assert!(matches!(mae_loss(&mut tape, a, b), Err(Error::Shape { .. })));
}

#[test]
fn mae_loss_subgradient_is_zero_at_ties() {
    let t = Tensor::new(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
    let p = Tensor::new(&[1, 3], vec![1.0, 2.5, 2.0]).unwrap();
    let mut tape = Tape::new();
    let (a, b) = (tape.leaf(p), tape.constant(t));
    let l = mae_loss(&mut tape, a, b).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get(a).unwrap().data(), &[0.0, 1.0 / 3.0, -1.0 / 3.0]);
}

#[test]
fn metrics_examples() {
    let y = Tensor::new(&[2], vec![100.0, 200.0]).unwrap();
    let m = metrics(&y, &y).unwrap();
    assert_eq!((m.mae, m.rmse, m.mape, m.horizon), (0.0, 0.0, 0.0, Horizon::All));
    let p = Tensor::new(&[2], vec![103.0, 204.0]).unwrap();
    let m = metrics(&p, &y).unwrap();
    assert_eq!(m.mae, 3.5);
    assert!((m.rmse - 12.5f64.sqrt()).abs() < 1e-15);
    assert!((m.mape - 100.0 * (0.03 + 0.02) / 2.0).abs() < 1e-12);

    let y = Tensor::new(&[3], vec![0.0, 2.0, 4.0]).unwrap();
    let p = Tensor::new(&[3], vec![1.0, 3.0, 4.0]).unwrap();
    let m = metrics(&p, &y).unwrap();
    assert!((m.mae - 2.0 / 3.0).abs() < 1e-15);
    assert!((m.mape - 25.0).abs() < 1e-12, "zero target excluded from MAPE only");

    let z = Tensor::zeros(&[4]);
    assert!(metrics(&z.map(|v| v + 1.0), &z).unwrap().mape.is_nan());
    assert!(metrics(&z, &Tensor::zeros(&[5])).is_err());
}

#[test]
fn per_horizon_metrics_pick_one_step() {
    let y = Tensor::from_fn(&[2, 3, 2, 1], |i| 10.0 + i as f64);
    let p = Tensor::from_fn(&[2, 3, 2, 1], |i| 10.0 + i as f64 + if (i / 2) % 3 == 1 { 2.0 } else { 0.0 });
    assert_eq!(metrics_at(&p, &y, 0).unwrap().mae, 0.0);
    let m = metrics_at(&p, &y, 1).unwrap();
    assert_eq!((m.mae, m.horizon), (2.0, Horizon::Step(1)));
    assert!(metrics_at(&p, &y, 3).is_err());
}

proptest! {
    #[test]
    fn metrics_match_scalar_loop(vals in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..64)) {
        let p = Tensor::new(&[vals.len()], vals.iter().map(|v| v.0).collect()).unwrap();
        let y = Tensor::new(&[vals.len()], vals.iter().map(|v| v.1).collect()).unwrap();
        let m = metrics(&p, &y).unwrap();
        let k = vals.len() as f64;
        let mut mae = 0.0;
        let mut mse = 0.0;
        for &(a, b) in &vals {
            mae += (a - b).abs() / k;
            mse += (a - b) * (a - b) / k;
        }
        let kept: Vec<_> = vals.iter().filter(|v| v.1.abs() >= 1e-3).collect();
        prop_assert!((m.mae - mae).abs() < 1e-12);
        prop_assert!((m.rmse - mse.sqrt()).abs() < 1e-12);
        if !kept.is_empty() {
            let mape = 100.0 * kept.iter().map(|v| (v.0 - v.1).abs() / v.1.abs()).sum::<f64>() / kept.len() as f64;
            prop_assert!((m.mape - mape).abs() < 1e-9 * mape.max(1.0));
        }
        prop_assert!((loss_of(&p, &y) - mae).abs() < 1e-12);
    }
}

fn toy_store() -> ParamStore<f64> {
    let mut s = ParamStore::new();
    s.add("a", Tensor::new(&[2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap());
    s.add("b", Tensor::new(&[1, 3], vec![0.1, 0.2, 0.3]).unwrap());
    s
}

#[test]
fn adam_zero_grads_leave_params_unchanged() {
    let mut s = toy_store();
    let before = s.flatten();
    let mut st = AdamState::new(&s);
    let g = vec![Tensor::zeros(&[2, 2]), Tensor::zeros(&[1, 3])];
    for _ in 0..3 {
        adam_step(&mut s, &g, &mut st, &AdamConfig::default());
    }
    assert_eq!(s.flatten(), before);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut s = toy_store();
    let before = s.flatten();
    let mut st = AdamState::new(&s);
    let cfg = AdamConfig { lr: 0.01, ..Default::default() };
    let g = vec![Tensor::full(&[2, 2], 0.7), Tensor::full(&[1, 3], -3.0)];
    adam_step(&mut s, &g, &mut st, &cfg);
    for (i, (a, b)) in before.iter().zip(s.flatten()).enumerate() {
        let expected = if i < 4 { -0.01 } else { 0.01 };
        assert!((b - a - expected).abs() < 1e-9, "coordinate {i}: {}", b - a);
    }
}

#[test]
fn adam_is_deterministic() {
    let mut rng = seeded(5);
    let grads: Vec<Vec<Tensor>> = (0..5)
        .map(|_| vec![Tensor::from_fn(&[2, 2], |_| rng.random::<f64>() - 0.5), Tensor::from_fn(&[1, 3], |_| rng.random::<f64>())])
        .collect();
    let run = || {
        let mut s = toy_store();
        let mut st = AdamState::new(&s);
        for g in &grads {
            adam_step(&mut s, g, &mut st, &AdamConfig::default());
        }
        (s.flatten(), st)
    };
    let (a, sa) = run();
    let (b, sb) = run();
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(sa, sb);
}

#[test]
fn zero_learning_rate_gives_flat_curve() {
    let data = small_data();
    let out = train(&small_model(SpatialKind::GwtFactored), &data, &quick(3, 0.0)).unwrap();
    assert_eq!(out.curve.len(), 3);
    for r in &out.curve {
        assert!((r.train_loss - out.initial.train_loss).abs() < 1e-12);
        assert_eq!(r.val_mae, out.initial.val_mae);
    }
}

#[test]
fn training_is_reproducible_and_learns() {
    let data = small_data();
    let m = small_model(SpatialKind::DenseAgcn);
    let cfg = TrainConfig { adam: AdamConfig { lr: 1e-2, ..Default::default() }, ..quick(8, 0.0) };
    let a = train(&m, &data, &cfg).unwrap();
    let b = train(&m, &data, &cfg).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.test, b.test);
    assert_eq!(a.best_params.flatten(), b.best_params.flatten());
    assert!(a.best_val_mae < a.initial.val_mae);
    assert_eq!(a.test_per_horizon.len(), 3);
}

#[test]
fn early_stopping_keeps_first_best_epoch() {
    let data = small_data();
    let cfg = TrainConfig { early_stop_patience: 2, adam: AdamConfig { lr: 5e-2, ..Default::default() }, ..quick(12, 0.0) };
    let out = train(&small_model(SpatialKind::GwtFactored), &data, &cfg).unwrap();
    let best = out.curve.iter().map(|r| r.val_mae).fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_val_mae, best);
    assert_eq!(out.best_epoch, out.curve.iter().position(|r| r.val_mae == best).unwrap());
    let test_again = {
        let (p, t) = predict(&out.model, &out.best_params, &data, &data.split.test().collect::<Vec<_>>()).unwrap();
        metrics(&p, &t).unwrap()
    };
    assert_eq!(test_again, out.test);
}

#[test]
fn non_finite_loss_aborts() {
    let mut v: Vec<f64> = (0..60 * 6).map(|i| (i as f64 * 0.1).sin()).collect();
    v[200] = f64::NAN;
    let fs = FrameSeries::new(Tensor::new(&[60, 6, 1], v).unwrap(), "x").unwrap();
    let data = make_windows(&fs, 4, 3).unwrap();
    assert!(matches!(train(&small_model(SpatialKind::DenseAgcn), &data, &quick(2, 1e-3)), Err(Error::Diverged { .. })));
}

#[test]
fn mismatched_model_and_data_are_rejected() {
    let data = small_data();
    let m = ModelConfig::new(ModelKind::AgcrnLite, SpatialKind::DenseAgcn, 6, 1, 4, 1, 3);
    assert!(matches!(train(&m, &data, &quick(1, 1e-3)), Err(Error::Invalid(_))));
    assert!(train(&small_model(SpatialKind::DenseAgcn), &data, &TrainConfig { epochs: 0, ..quick(1, 1e-3) }).is_err());
}

#[test]
fn curve_csv_has_expected_header() {
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &[EpochRecord { epoch: 0, train_loss: 0.5, val_mae: 0.25 }]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_loss,val_mae\n0,0.5,0.25\n");
}

#[test]
fn perturb_sweep_bookkeeping_and_p0_reproduction() {
    let data = small_data();
    let base = SweepBase { model: small_model(SpatialKind::TwoLayerStar), data: &data, train: quick(2, 1e-2) };
    let table = perturb_sweep(&[0.0, 0.5], &[1, 2], &base).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.rows.iter().map(|r| r.runs.len()).sum::<usize>(), 4);
    let plain = train(&base.model, &data, &TrainConfig { seed: 2, ..base.train }).unwrap();
    assert_eq!(table.rows[0].runs[1].test_mae, plain.test.mae);

    assert!(perturb_sweep(&[0.6], &[1], &base).is_err());
    assert!(perturb_sweep(&[0.0], &[], &base).is_err());
    let wrong = SweepBase { model: small_model(SpatialKind::GwtFactored), ..base.clone() };
    assert!(perturb_sweep(&[0.0], &[1], &wrong).is_err());
}

#[test]
fn init_ablation_has_two_controlled_arms() {
    let data = small_data();
    let base = SweepBase { model: small_model(SpatialKind::GwtFactored), data: &data, train: quick(2, 1e-2) };
    let table = init_ablation(&[4, 5], &base).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.rows[0].origin, CenterOrigin::Averaged);
    assert_eq!(table.rows[1].origin, CenterOrigin::Random);
    assert_eq!(table.rows[0].runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![4, 5]);
    assert_ne!(table.rows[0].runs[0].test_mae, table.rows[1].runs[0].test_mae);
    let wrong = SweepBase { model: small_model(SpatialKind::DenseAgcn), ..base };
    assert!(init_ablation(&[1], &wrong).is_err());
}
