mod common;

use common::*;
use quadrom_core::neural::*;
use quadrom_core::pod::PodBasis;
use quadrom_core::quadls::pairwise_products;
use quadrom_core::synthetic::{generate_synthetic, SyntheticKind, SyntheticSpec};
use quadrom_core::{DenseMatrix, Error};
use rand::Rng;

/// Straight-line re-implementation: tanh on hidden layers, identity (or the
/// stored activation) on the last.
fn scalar_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let n = net.n_layers();
    for l in 0..n {
        let w = &net.weights()[l];
        let b = &net.biases()[l];
        let mut next = vec![0.0; w.rows()];
        for o in 0..w.rows() {
            let mut acc = b[o];
            for i in 0..w.cols() {
                acc += w[(o, i)] * h[i];
            }
            let last = l + 1 == n;
            next[o] = if !last || net.output_activation() == Activation::Tanh {
                acc.tanh()
            } else {
                acc
            };
        }
        h = next;
    }
    h
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

struct Toy {
    points: DenseMatrix,
    modes: DenseMatrix,
    params: DenseMatrix,
    data: CorrectionData,
}

/// Random small problem with `n_pts` points, `r` modes and 3 snapshots.
fn toy(seed: u64, n_pts: usize, r: usize, d_field: usize) -> Toy {
    let mut g = rng(seed);
    let points = DenseMatrix::from_fn(n_pts, 2, |_, _| g.gen_range(0.0..1.0));
    let modes = DenseMatrix::from_fn(n_pts, r * d_field, |_, _| g.gen_range(-1.0..1.0));
    let params = DenseMatrix::from_fn(3, 1, |j, _| j as f64 * 0.4 + 0.1);
    let coeffs = DenseMatrix::from_fn(3, r, |_, _| g.gen_range(-2.0..2.0));
    let corr = DenseMatrix::from_fn(3, n_pts * d_field, |_, _| g.gen_range(-1.0..1.0));
    let data = CorrectionData::new(modes.clone(), points.clone(), params.clone(), coeffs, corr).unwrap();
    Toy {
        points,
        modes,
        params,
        data,
    }
}

fn small_cfg() -> QuadNetConfig {
    QuadNetConfig {
        hidden_layers: 2,
        hidden_width: 5,
        ..QuadNetConfig::default()
    }
}

#[test]
fn mlp_init_examples() {
    let mut sizes = vec![3];
    sizes.extend([20; 7]);
    sizes.push(6);
    let a = mlp_init(&sizes, 4).unwrap();
    assert_eq!(a, mlp_init(&sizes, 4).unwrap());
    assert_eq!(a.param_count(), 2726);
    assert!(a.biases().iter().flatten().all(|&b| b == 0.0));
    for w in a.weights() {
        let bound = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
        assert!(w.as_slice().iter().all(|v| v.abs() <= bound));
    }
    assert!(mlp_init(&[3], 0).is_err());
    assert!(mlp_init(&[3, 0, 2], 0).is_err());
}

#[test]
fn mlp_matches_scalar_oracle() {
    let net = mlp_init(&[4, 9, 9, 3], 11).unwrap();
    let mut g = rng(11);
    for _ in 0..20 {
        let x: Vec<f64> = (0..4).map(|_| g.gen_range(-2.0..2.0)).collect();
        assert!(close(&mlp_forward(&net, &x).unwrap(), &scalar_forward(&net, &x), 1e-12));
    }
    assert!(mlp_forward(&net, &[1.0]).is_err());
}

/// Manual composition from sub-network evaluations and the stored scalings.
fn composed(net: &OperatorNet, modes: &[f64], x: &[f64], mu: Option<&[f64]>) -> Vec<f64> {
    let nz = net.normalizer();
    let df = net.d_field();
    let mf: Vec<f64> = (0..modes.len()).map(|k| modes[k] / nz.mode_scale[k / df]).collect();
    let xf: Vec<f64> = (0..x.len())
        .map(|k| 2.0 * (x[k] - nz.coord_lo[k]) / (nz.coord_hi[k] - nz.coord_lo[k]) - 1.0)
        .collect();
    let b = scalar_forward(net.branch(), &mf);
    let t = scalar_forward(net.trunk(), &xf);
    let mut h: Vec<f64> = b.iter().zip(&t).map(|(p, q)| p * q).collect();
    if let (Some(pb), Some(mu)) = (net.param_branch(), mu) {
        let pf: Vec<f64> = (0..mu.len())
            .map(|k| 2.0 * (mu[k] - nz.param_lo[k]) / (nz.param_hi[k] - nz.param_lo[k]) - 1.0)
            .collect();
        let pv = scalar_forward(pb, &pf);
        h.iter_mut().zip(&pv).for_each(|(a, b)| *a *= b);
    }
    scalar_forward(net.combiner(), &h)
}

#[test]
fn quadnet_matches_composition() {
    let t = toy(5, 12, 3, 2);
    let m = QuadNetModel::new(&small_cfg(), 3, 2, &t.points, &t.modes, 5).unwrap();
    for i in 0..12 {
        let got = quadnet_eval(&m, t.modes.row(i), t.points.row(i)).unwrap();
        assert_eq!(got.len(), 12);
        assert!(close(&got, &composed(m.net(), t.modes.row(i), t.points.row(i), None), 1e-12));
    }
    assert!(quadnet_eval(&m, &[0.0; 5], t.points.row(0)).is_err());
    assert!(quadnet_eval(&m, t.modes.row(0), &[0.0]).is_err());
}

#[test]
fn quadnet_mu_matches_composition() {
    let t = toy(5, 12, 3, 2);
    let m = QuadNetMuModel::new(&small_cfg(), 3, 2, &t.points, &t.modes, &t.params, 5).unwrap();
    for i in 0..12 {
        let mu = [0.37];
        let got = quadnet_mu_eval(&m, t.modes.row(i), t.points.row(i), &mu).unwrap();
        assert!(close(&got, &composed(m.net(), t.modes.row(i), t.points.row(i), Some(&mu)), 1e-12));
    }
    assert!(quadnet_mu_eval(&m, t.modes.row(0), t.points.row(0), &[0.1, 0.2]).is_err());
}

/// Zeroes the weights and sets the output bias of `net`.
fn constant_output(net: &mut Mlp, value: f64) {
    for w in net.weights_mut() {
        w.as_mut_slice().fill(0.0);
    }
    let n = net.n_layers();
    for (l, b) in net.biases_mut().iter_mut().enumerate() {
        b.fill(if l + 1 == n { value } else { 0.0 });
    }
}

#[test]
fn ones_parameter_branch_reduces_to_quadnet() {
    let t = toy(6, 8, 2, 2);
    let cfg = small_cfg();
    let mut mu_model = QuadNetMuModel::new(&cfg, 2, 2, &t.points, &t.modes, &t.params, 9).unwrap();
    constant_output(mu_model.net_mut().param_branch_mut().unwrap(), 1.0);
    let net = mu_model.net();
    let plain = OperatorNet::from_parts(
        2,
        2,
        net.mode_input(),
        net.branch().clone(),
        None,
        net.trunk().clone(),
        net.combiner().clone(),
        Normalizer {
            param_lo: vec![],
            param_hi: vec![],
            ..net.normalizer().clone()
        },
    )
    .unwrap();
    let plain = QuadNetModel::from_net(plain).unwrap();
    for i in 0..8 {
        assert_eq!(
            quadnet_mu_eval(&mu_model, t.modes.row(i), t.points.row(i), &[0.8]).unwrap(),
            quadnet_eval(&plain, t.modes.row(i), t.points.row(i)).unwrap()
        );
    }
}

#[test]
fn zero_subnetwork_annihilates_inputs() {
    let t = toy(7, 8, 2, 1);
    let mut m = QuadNetMuModel::new(&small_cfg(), 2, 1, &t.points, &t.modes, &t.params, 1).unwrap();
    constant_output(m.net_mut().trunk_mut(), 0.0);
    let bias = m.net().combiner().biases()[0].clone();
    for i in 0..8 {
        let row = quadnet_mu_eval(&m, t.modes.row(i), t.points.row(i), &[0.3]).unwrap();
        assert_eq!(row, bias);
    }
    let other = [5.0, -3.0];
    assert_eq!(quadnet_mu_eval(&m, &other, t.points.row(0), &[0.9]).unwrap(), bias);
}

fn finite_difference(net: &mut OperatorNet, data: &CorrectionData, k: usize, h: f64) -> f64 {
    let base = net.params();
    let mut p = base.clone();
    p[k] = base[k] + h;
    net.set_params(&p).unwrap();
    let plus = training_loss(&AnyNet(net), data).unwrap();
    p[k] = base[k] - h;
    net.set_params(&p).unwrap();
    let minus = training_loss(&AnyNet(net), data).unwrap();
    net.set_params(&base).unwrap();
    (plus - minus) / (2.0 * h)
}

/// Borrowing adapter so the helpers work on either model kind.
struct AnyNet<'a>(&'a mut OperatorNet);

impl CorrectionModel for AnyNet<'_> {
    fn net(&self) -> &OperatorNet {
        self.0
    }
    fn net_mut(&mut self) -> &mut OperatorNet {
        self.0
    }
}

fn gradient_defect(net: &mut OperatorNet, data: &CorrectionData) -> f64 {
    let (_, g) = gradients(&AnyNet(net), data).unwrap();
    let fd: Vec<f64> = (0..g.len()).map(|k| finite_difference(net, data, k, 1e-6)).collect();
    diff_norm(&g, &fd) / norm(&fd)
}

#[test]
fn gradients_match_finite_differences_20_seeds() {
    for seed in 0..20u64 {
        let t = toy(100 + seed, 7, 2, 2);
        let mut q = QuadNetModel::new(&small_cfg(), 2, 2, &t.points, &t.modes, seed).unwrap();
        let e = gradient_defect(q.net_mut(), &t.data);
        assert!(e <= 1e-5, "QuadNet seed {seed}: {e}");
        let mut m = QuadNetMuModel::new(&small_cfg(), 2, 2, &t.points, &t.modes, &t.params, seed).unwrap();
        let e = gradient_defect(m.net_mut(), &t.data);
        assert!(e <= 1e-5, "QuadNet-μ seed {seed}: {e}");
    }
}

#[test]
fn toy_model_every_parameter_gradient() {
    let t = toy(1, 5, 1, 1);
    let cfg = QuadNetConfig {
        hidden_layers: 1,
        hidden_width: 2,
        output_tanh: true,
        ..QuadNetConfig::default()
    };
    let mut m = QuadNetMuModel::new(&cfg, 1, 1, &t.points, &t.modes, &t.params, 3).unwrap();
    assert!((18..=30).contains(&m.net().param_count()));
    let (_, g) = gradients(&m, &t.data).unwrap();
    let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (k, &gk) in g.iter().enumerate() {
        let fd = finite_difference(m.net_mut(), &t.data, k, 1e-6);
        assert!((gk - fd).abs() <= 1e-5 * gk.abs().max(1e-3 * scale), "param {k}: {gk} vs {fd}");
    }
}

#[test]
fn adam_first_step_and_determinism() {
    let cfg = AdamConfig::default();
    let g = [0.5, -2.0, 1e-9, 0.0];
    let mut p = [1.0; 4];
    let mut st = AdamState::new(4);
    adam_step(&mut p, &g, &mut st, 0.1, &cfg).unwrap();
    assert_eq!(st.step, 1);
    for k in 0..4 {
        let expect = 1.0 - 0.1 * g[k] / (g[k].abs() + 1e-8);
        assert!((p[k] - expect).abs() <= 1e-12, "{k}: {} vs {expect}", p[k]);
    }
    let mut z = [3.0; 2];
    let mut st = AdamState::new(2);
    adam_step(&mut z, &[0.0, 0.0], &mut st, 0.1, &cfg).unwrap();
    assert_eq!((z, st.step), ([3.0; 2], 1));
    assert!(adam_step(&mut z, &[0.0], &mut st, 0.1, &cfg).is_err());

    let run = || {
        let mut p = vec![0.3, -0.2, 0.9];
        let mut st = AdamState::new(3);
        for i in 0..50 {
            let g: Vec<f64> = p.iter().map(|v| (v * i as f64).sin()).collect();
            adam_step(&mut p, &g, &mut st, 1e-2, &cfg).unwrap();
        }
        p
    };
    assert_eq!(run(), run());
}

#[test]
fn relative_loss_examples() {
    let exact = DenseMatrix::from_rows(&[[3.0, 4.0], [1.0, 0.0]]).unwrap();
    assert_eq!(relative_loss(&exact, &exact).unwrap(), 0.0);
    assert_eq!(relative_loss(&DenseMatrix::zeros(2, 2), &exact).unwrap(), 1.0);
    let pred = DenseMatrix::from_rows(&[[2.0, 4.0], [1.0, 0.5]]).unwrap();
    // (1/25 + 0.25/1) / 2
    assert!((relative_loss(&pred, &exact).unwrap() - 0.145).abs() <= 1e-15);
    let twice = DenseMatrix::from_fn(2, 2, |i, j| 2.0 * exact[(i, j)]);
    let pred2 = DenseMatrix::from_fn(2, 2, |i, j| 2.0 * pred[(i, j)]);
    assert_eq!(relative_loss(&pred2, &twice).unwrap(), relative_loss(&pred, &exact).unwrap());
    assert!(matches!(
        relative_loss(&DenseMatrix::zeros(2, 2), &DenseMatrix::zeros(2, 2)),
        Err(Error::DegenerateTarget { .. })
    ));
}

#[test]
fn gradient_vanishes_at_exact_fit() {
    let t = toy(8, 6, 2, 1);
    let m = QuadNetModel::new(&small_cfg(), 2, 1, &t.points, &t.modes, 2).unwrap();
    // Targets equal to the model's own predictions.
    let mut rows = Vec::new();
    for j in 0..3 {
        rows.push(predict_correction_at(&m, &t.modes, &t.points, t.data.coefficients.row(j), None).unwrap());
    }
    let mut data = t.data.clone();
    data.corrections = DenseMatrix::from_rows(&rows).unwrap();
    let (loss, g) = gradients(&m, &data).unwrap();
    // Equal up to the summation order of the two evaluation paths.
    assert!(loss <= 1e-28);
    assert!(norm(&g) <= 1e-12);

    // Doubling targets and the combiner (hence predictions) leaves the loss
    // and its gradient with respect to the untouched sub-networks unchanged.
    let (l1, g1) = gradients(&m, &t.data).unwrap();
    let mut m2 = m.clone();
    let c = m2.net_mut().combiner_mut();
    c.weights_mut()[0].as_mut_slice().iter_mut().for_each(|v| *v *= 2.0);
    c.biases_mut()[0].iter_mut().for_each(|v| *v *= 2.0);
    let mut d2 = t.data.clone();
    d2.corrections.as_mut_slice().iter_mut().for_each(|v| *v *= 2.0);
    let (l2, g2) = gradients(&m2, &d2).unwrap();
    assert!((l1 - l2).abs() <= 1e-14 * l1);
    let n_front = m.net().param_count() - m.net().combiner().param_count();
    assert!(diff_norm(&g1[..n_front], &g2[..n_front]) <= 1e-12 * norm(&g1[..n_front]));
}

fn generic_problem(nx: usize, n_mu: usize) -> (quadrom_core::SnapshotSet, PodBasis) {
    let spec = SyntheticSpec::new(SyntheticKind::GenericNonlinear, nx, nx, 6, 3, n_mu);
    let set = generate_synthetic(&spec).unwrap();
    let basis = PodBasis::from_snapshots(&set, 3).unwrap();
    (set, basis)
}

#[test]
fn predict_examples() {
    let (set, basis) = generic_problem(10, 12);
    let data = CorrectionData::from_snapshots(&set, &basis, None).unwrap();
    let m = QuadNetMuModel::new(&small_cfg(), 3, 2, &data.points, &data.mode_values, &data.params, 4).unwrap();
    let mu = [0.4];
    assert!(predict_correction(&m, &basis, &[0.0; 3], Some(&mu)).unwrap().iter().all(|v| *v == 0.0));

    let a = [0.7, -0.3, 1.2];
    let full = predict_correction(&m, &basis, &a, Some(&mu)).unwrap();
    assert_eq!(full.len(), 200);

    let row = quadnet_mu_eval(&m, data.mode_values.row(17), data.points.row(17), &mu).unwrap();
    let q = pairwise_products(&a).unwrap();
    for c in 0..2 {
        let direct: f64 = row[c * 6..(c + 1) * 6].iter().zip(q.values()).map(|(x, y)| x * y).sum();
        assert_eq!(full[17 * 2 + c], direct);
    }

    let nodes: Vec<usize> = (0..100).filter(|i| i % 2 == 1).collect();
    let sub = predict_correction_at(&m, &data.mode_values.select_rows(&nodes), &data.points.select_rows(&nodes), &a, Some(&mu)).unwrap();
    for (k, &i) in nodes.iter().enumerate() {
        assert_eq!(&sub[k * 2..k * 2 + 2], &full[i * 2..i * 2 + 2]);
    }

    let lam: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
    let scaled = predict_correction(&m, &basis, &lam, Some(&mu)).unwrap();
    for (s, f) in scaled.iter().zip(&full) {
        assert_eq!(*s, 4.0 * f);
    }

    assert!(predict_correction(&m, &basis, &a, None).is_err());
    let wrong = PodBasis::from_snapshots(&set, 2).unwrap();
    assert!(predict_correction(&m, &wrong, &[1.0, 1.0], Some(&mu)).is_err());
}

#[test]
fn checkpoint_reload_is_bit_exact() {
    let (set, basis) = generic_problem(8, 10);
    let data = CorrectionData::from_snapshots(&set, &basis, None).unwrap();
    let m = QuadNetMuModel::new(&small_cfg(), 3, 2, &data.points, &data.mode_values, &data.params, 12).unwrap();
    let back = decode_checkpoint(&encode_checkpoint(&m)).unwrap();
    let a = [0.1, 0.2, -0.5];
    for mu in [0.0, 0.33, 1.0] {
        let x = predict_correction(&m, &basis, &a, Some(&[mu])).unwrap();
        let y = predict_correction(&back, &basis, &a, Some(&[mu])).unwrap();
        assert_eq!(x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
    let q = QuadNetModel::new(&small_cfg(), 3, 2, &data.points, &data.mode_values, 12).unwrap();
    assert!(matches!(decode_checkpoint(&encode_checkpoint(&q)).unwrap(), AnyCorrectionModel::QuadNet(_)));
}

fn spectral_bound(m: &Mlp) -> f64 {
    m.weights().iter().map(|w| w.frobenius_norm()).product()
}

#[test]
fn space_continuity_within_lipschitz_bound() {
    let (set, basis) = generic_problem(8, 10);
    let data = CorrectionData::from_snapshots(&set, &basis, None).unwrap();
    let m = QuadNetMuModel::new(&small_cfg(), 3, 2, &data.points, &data.mode_values, &data.params, 21).unwrap();
    let net = m.net();
    let a = [0.4, 1.1, -0.6];
    let mu = [0.5];
    let nz = net.normalizer();
    let coord_gain = (0..2).map(|k| 2.0 / (nz.coord_hi[k] - nz.coord_lo[k])).fold(0.0, f64::max);
    let mut g = rng(2);
    for i in 0..data.n_points() {
        let modes = DenseMatrix::new(1, 6, data.mode_values.row(i).to_vec()).unwrap();
        let b = composed_branch(net, data.mode_values.row(i));
        let p = composed_param(net, &mu);
        let k = norm(pairwise_products(&a).unwrap().values())
            * spectral_bound(net.combiner())
            * b.iter().zip(&p).map(|(x, y)| (x * y).abs()).fold(0.0, f64::max)
            * (net.latent_dim() as f64).sqrt()
            * spectral_bound(net.trunk())
            * coord_gain;
        let x0 = data.points.row(i).to_vec();
        let delta: Vec<f64> = (0..2).map(|_| g.gen_range(-1e-3..1e-3)).collect();
        let x1: Vec<f64> = x0.iter().zip(&delta).map(|(x, d)| x + d).collect();
        let t0 = predict_correction_at(&m, &modes, &DenseMatrix::new(1, 2, x0).unwrap(), &a, Some(&mu)).unwrap();
        let t1 = predict_correction_at(&m, &modes, &DenseMatrix::new(1, 2, x1).unwrap(), &a, Some(&mu)).unwrap();
        assert!(diff_norm(&t0, &t1) <= k * norm(&delta) * (1.0 + 1e-9));
    }
}

fn composed_branch(net: &OperatorNet, modes: &[f64]) -> Vec<f64> {
    let nz = net.normalizer();
    let mf: Vec<f64> = (0..modes.len()).map(|k| modes[k] / nz.mode_scale[k / net.d_field()]).collect();
    scalar_forward(net.branch(), &mf)
}

fn composed_param(net: &OperatorNet, mu: &[f64]) -> Vec<f64> {
    let nz = net.normalizer();
    let pf: Vec<f64> = (0..mu.len())
        .map(|k| 2.0 * (mu[k] - nz.param_lo[k]) / (nz.param_hi[k] - nz.param_lo[k]) - 1.0)
        .collect();
    scalar_forward(net.param_branch().unwrap(), &pf)
}

#[test]
fn one_epoch_records_two_losses() {
    let t = toy(3, 6, 2, 2);
    let mut m = QuadNetModel::new(&small_cfg(), 2, 2, &t.points, &t.modes, 0).unwrap();
    let cfg = TrainConfig {
        max_epochs: 1,
        min_loss: 0.0,
        ..TrainConfig::default()
    };
    let rep = train(&mut m, &t.data, &cfg).unwrap();
    assert_eq!(rep.history.len(), 2);
    assert!(rep.best_loss <= rep.history[0]);
    assert_eq!(training_loss(&m, &t.data).unwrap(), rep.best_loss);
    let bad = TrainConfig {
        max_epochs: 0,
        ..TrainConfig::default()
    };
    assert!(train(&mut m, &t.data, &bad).is_err());
}

#[test]
fn generic_history_is_finite() {
    let (set, basis) = generic_problem(10, 20);
    let data = CorrectionData::from_snapshots(&set, &basis, None).unwrap();
    let mut m = QuadNetMuModel::new(&QuadNetConfig::default(), 3, 2, &data.points, &data.mode_values, &data.params, 0).unwrap();
    let cfg = TrainConfig {
        max_epochs: 300,
        min_loss: 0.0,
        ..TrainConfig::default()
    };
    let rep = train(&mut m, &data, &cfg).unwrap();
    assert_eq!(rep.history.len(), 301);
    assert!(rep.history.iter().all(|v| v.is_finite()));
    assert!(rep.best_loss < rep.history[0]);
}

#[test]
fn training_is_deterministic() {
    let t = toy(4, 6, 2, 2);
    let run = || {
        let mut m = QuadNetMuModel::new(&small_cfg(), 2, 2, &t.points, &t.modes, &t.params, 7).unwrap();
        let cfg = TrainConfig {
            max_epochs: 40,
            min_loss: 0.0,
            ..TrainConfig::default()
        };
        (train(&mut m, &t.data, &cfg).unwrap(), m.net().params())
    };
    assert_eq!(run(), run());
}

#[test]
fn exact_quadratic_training_reaches_min_loss() {
    let mut reached = Vec::new();
    for seed in 0..3u64 {
        let mut spec = SyntheticSpec::new(SyntheticKind::ExactQuadratic, 12, 12, 5, 3, 50);
        spec.seed = 1;
        let set = generate_synthetic(&spec).unwrap();
        let basis = PodBasis::from_snapshots(&set, 3).unwrap();
        let data = CorrectionData::from_snapshots(&set, &basis, None).unwrap();
        let mut m =
            QuadNetMuModel::new(&QuadNetConfig::default(), 3, 2, &data.points, &data.mode_values, &data.params, seed).unwrap();
        let rep = train(&mut m, &data, &TrainConfig::default()).unwrap();
        reached.push(rep.best_loss);
        if rep.converged {
            assert!(rep.best_loss <= 1e-2);
            return;
        }
    }
    panic!("no seed reached 1e-2: {reached:?}");
}
