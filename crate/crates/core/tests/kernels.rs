//! Numerical kernels checked against independent dense oracles (nalgebra
//! eigen/SVD decompositions).

use esnevo::esn::{self, build_network, spectral_radius, EsnConfig};
use esnevo::linalg::Mat;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mat(rows: usize, cols: usize, density: f64, rng: &mut ChaCha8Rng) -> Mat {
    let data = (0..rows * cols)
        .map(|_| {
            if rng.random::<f64>() < density {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        })
        .collect();
    Mat::from_vec(rows, cols, data).unwrap()
}

fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn eigen_oracle(m: &Mat) -> f64 {
    to_na(m)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Ridge readout via SVD: W = Y V diag(s / (s² + λ)) Uᵀ for X = U S Vᵀ with
/// states as columns of X.
fn ridge_oracle(states_rows: &Mat, targets_rows: &Mat, lambda: f64) -> DMatrix<f64> {
    let x = to_na(states_rows).transpose();
    let y = to_na(targets_rows).transpose();
    let svd = x.clone().svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let s = svd.singular_values;
    let mut mid = DMatrix::zeros(s.len(), s.len());
    for i in 0..s.len() {
        mid[(i, i)] = s[i] / (s[i] * s[i] + lambda);
    }
    y * v_t.transpose() * mid * u.transpose()
}

#[test]
fn spectral_radius_matches_eigen_oracle_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..50 {
        let n = 2 + trial % 9;
        let m = random_mat(n, n, 0.7, &mut rng);
        let got = spectral_radius(&m).unwrap();
        let want = eigen_oracle(&m);
        assert!(
            (got - want).abs() <= 1e-9 * want.max(1.0),
            "trial {trial}: {got} vs {want}"
        );
    }
}

#[test]
fn spectral_radius_matches_eigen_oracle_random_8x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let m = random_mat(8, 8, 1.0, &mut rng);
        let got = spectral_radius(&m).unwrap();
        let want = eigen_oracle(&m);
        assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
    }
}

#[test]
fn spectral_radius_matches_eigen_oracle_sparse_large() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for &(n, density) in &[(60, 0.02), (120, 0.05), (150, 0.3)] {
        let m = random_mat(n, n, density, &mut rng);
        let got = spectral_radius(&m).unwrap();
        let want = eigen_oracle(&m);
        assert!(
            (got - want).abs() <= 1e-8 * want.max(1e-300),
            "n={n}: {got} vs {want}"
        );
    }
}

#[test]
fn scaled_layers_hit_target_radius() {
    for seed in 0..6 {
        let cfg = EsnConfig {
            layer_sizes: vec![40, 25],
            input_connectivity: 0.5,
            layer_connectivities: vec![0.2, 0.6],
            inter_connectivities: vec![0.3],
            rng_seed: seed,
            ..EsnConfig::basic(1, 1.0, seed)
        };
        let net = build_network(&cfg).unwrap();
        for w in net.layer_weights() {
            let rho = eigen_oracle(&w.to_dense());
            assert!((rho - 0.9).abs() <= 1e-6 * 0.9, "rho = {rho}");
        }
    }
}

#[test]
fn masks_respect_connectivity_and_zero_elsewhere() {
    let cfg = EsnConfig {
        layer_sizes: vec![30, 17],
        input_connectivity: 0.4,
        layer_connectivities: vec![0.13, 0.77],
        inter_connectivities: vec![0.05],
        input_dim: 3,
        ..EsnConfig::basic(1, 1.0, 5)
    };
    let net = build_network(&cfg).unwrap();
    let expected = [0.4, 0.13, 0.77, 0.05];
    let mats = std::iter::once(net.input_weights())
        .chain(net.layer_weights())
        .chain(net.inter_weights());
    for (w, &c) in mats.zip(&expected) {
        let total = (w.rows() * w.cols()) as f64;
        assert!((w.density() - c).abs() <= 1.0 / total + 1e-12);
        let dense = w.to_dense();
        for (v, m) in dense.as_slice().iter().zip(w.mask()) {
            if !m {
                assert_eq!(*v, 0.0);
            }
        }
    }
}

#[test]
fn ridge_matches_pseudo_inverse_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cfg = EsnConfig::basic(5, 1.0, 1);
    let net = build_network(&cfg).unwrap();
    for _ in 0..5 {
        let x = random_mat(20, 5, 1.0, &mut rng);
        let y = random_mat(20, 1, 1.0, &mut rng);
        let trained = esn::train_readout(&net, &x, &y, 1e-6).unwrap();
        let got = trained.readout_weights().unwrap();
        let want = ridge_oracle(&x, &y, 1e-6);
        let scale = want.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for j in 0..5 {
            let diff = (got[(0, j)] - want[(0, j)]).abs();
            assert!(diff <= 1e-8 * scale, "{} vs {}", got[(0, j)], want[(0, j)]);
        }
    }
}

#[test]
fn ridge_residual_never_exceeds_zero_predictor() {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let cfg = EsnConfig::basic(6, 1.0, 1);
    let net = build_network(&cfg).unwrap();
    for &lambda in &[0.0, 1e-6, 1e-2, 1.0, 100.0] {
        let x = random_mat(30, 6, 1.0, &mut rng);
        let y = random_mat(30, 1, 1.0, &mut rng);
        let trained = esn::train_readout(&net, &x, &y, lambda).unwrap();
        let mut fit = 0.0;
        let mut zero = 0.0;
        for i in 0..30 {
            let yhat = esn::readout(&trained, x.row(i)).unwrap()[0];
            fit += (yhat - y[(i, 0)]).powi(2);
            zero += y[(i, 0)].powi(2);
        }
        assert!(fit <= zero + 1e-12, "lambda {lambda}: {fit} > {zero}");
    }
}

#[test]
fn states_stay_in_tanh_range() {
    let cfg = EsnConfig {
        layer_sizes: vec![25, 25],
        input_connectivity: 1.0,
        layer_connectivities: vec![0.5, 0.5],
        inter_connectivities: vec![1.0],
        spectral_radius_target: 3.0,
        ..EsnConfig::basic(1, 1.0, 12)
    };
    let net = build_network(&cfg).unwrap();
    let u: Vec<f64> = (0..200).map(|t| 50.0 * ((t as f64) * 0.37).sin()).collect();
    let traj = esn::run_sequence(&net, &Mat::from_vec(200, 1, u).unwrap()).unwrap();
    assert!(traj.layers.iter().flatten().flatten().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn batch_states_follow_the_dense_recursion() {
    // one dense and one sparse layer so both product kernels are exercised
    let cfg = EsnConfig {
        layer_sizes: vec![30, 40],
        input_connectivity: 1.0,
        layer_connectivities: vec![0.6, 0.05],
        inter_connectivities: vec![0.3],
        input_dim: 2,
        output_dim: 2,
        ..EsnConfig::basic(30, 1.0, 21)
    };
    let net = build_network(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let u = random_mat(25, 2, 1.0, &mut rng);
    let traj = esn::run_sequence(&net, &u).unwrap();

    let w_in = to_na(&net.input_weights().to_dense());
    let w: Vec<_> = net.layer_weights().iter().map(|m| to_na(&m.to_dense())).collect();
    let w_inter = to_na(&net.inter_weights()[0].to_dense());
    let mut x1 = nalgebra::DVector::zeros(30);
    let mut x2 = nalgebra::DVector::zeros(40);
    for t in 0..25 {
        let ut = nalgebra::DVector::from_row_slice(u.row(t));
        x1 = (&w_in * ut + &w[0] * &x1).map(f64::tanh);
        x2 = (&w_inter * &x1 + &w[1] * &x2).map(f64::tanh);
        for (got, want) in [(&traj.layers[0][t], &x1), (&traj.layers[1][t], &x2)] {
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() < 1e-12, "step {t}: {g} vs {w}");
            }
        }
    }
}
