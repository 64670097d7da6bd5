use nalgebra::{DMatrix, DVector};
use nlgcs::rng::StreamRng;
use nlgcs::{
    generalized_lasso, linalg, DenseLayer, random_generator, relative_l2, sample_ensemble, LatentVector, LinkSpec,
    MlpGenerator, SimLink, SolverOptions,
};

fn identity_link() -> LinkSpec {
    LinkSpec::sim(SimLink::Identity, 0.0).unwrap()
}

/// Noisy linear measurements through a linear generator: the constrained
/// minimizer equals the unconstrained least-squares solution whenever the
/// latter lies inside the latent ball.
#[test]
fn matches_least_squares_for_linear_generator() {
    let (k, n, m) = (4, 12, 60);
    let mut rng = StreamRng::new(21, 0);
    let w: Vec<f64> = (0..n * k).map(|_| rng.gaussian() / (k as f64).sqrt()).collect();
    let gen = MlpGenerator::new(vec![DenseLayer::new(k, n, w.clone(), vec![0.0; n]).unwrap()], 10.0).unwrap();
    let ens = sample_ensemble(m, n, identity_link(), 0.05, 3).unwrap();
    let x_star = gen.forward(&LatentVector::new(vec![0.5, -1.0, 0.3, 0.8])).unwrap();
    let y = ens.observe(&x_star, 0).unwrap();

    let a = DMatrix::from_row_slice(m, n, ens.a_matrix());
    let wm = DMatrix::from_row_slice(n, k, &w);
    let design = &a * &wm;
    let z_ls = design.svd(true, true).solve(&DVector::from_vec(y.y.clone()), 1e-12).unwrap();
    assert!(z_ls.norm() < 10.0);

    let opts = SolverOptions {
        restarts: 3,
        steps: 3000,
        t_scale: 1.0,
        ..Default::default()
    };
    let res = generalized_lasso(&ens, &y, &gen, &opts).unwrap();
    let x_ls = (&wm * &z_ls).as_slice().to_vec();
    assert!(relative_l2(&res.x_hat, &x_ls).unwrap() <= 1e-6, "{:?} vs {:?}", res.z_hat, z_ls);
}

#[test]
fn latent_iterates_stay_in_ball() {
    let gen = random_generator(&[3, 12, 20], Some(0.7), 2).unwrap();
    for seed in 0..5 {
        let ens = sample_ensemble(30, 20, LinkSpec::Sign, 0.0, seed).unwrap();
        let x = gen.forward(&LatentVector::new(vec![0.3, 0.1, -0.2])).unwrap();
        let y = ens.observe(&x, 0).unwrap();
        let opts = SolverOptions {
            restarts: 3,
            steps: 200,
            step_size: Some(10.0),
            t_scale: 0.8,
            seed,
            ..Default::default()
        };
        let res = generalized_lasso(&ens, &y, &gen, &opts).unwrap();
        assert!(res.z_hat.norm() <= 0.7);
        let x_hat_expected = linalg::scale(&gen.forward(&res.z_hat).unwrap(), 0.8);
        assert_eq!(res.x_hat, x_hat_expected);
        let min = res.restart_losses.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(res.best_loss, min);
    }
}
