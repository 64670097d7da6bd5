use nalgebra::DMatrix;
use nlgcs::rng::StreamRng;
use nlgcs::{linalg, random_generator, DenseLayer, LatentVector, MlpGenerator};

fn fixture() -> MlpGenerator {
    MlpGenerator::load_weights(concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample_weights.txt")).unwrap()
}

#[test]
fn sample_weights_fixture() {
    let gen = fixture();
    assert_eq!(gen.layer_dims(), vec![2, 3, 2]);
    assert_eq!(gen.latent_radius(), 2f64.sqrt());
    // relu(b₁) = (0.1, 0, 0.3); W₂ relu(b₁) + b₂ = (−0.15, 0.25).
    let out = gen.forward(&LatentVector::new(vec![0.0, 0.0])).unwrap();
    assert!((out[0] + 0.15).abs() < 1e-15 && (out[1] - 0.25).abs() < 1e-15, "{out:?}");
    let again = MlpGenerator::from_weights_text(&gen.to_weights_text()).unwrap();
    assert_eq!(again, gen);
}

#[test]
fn backward_matches_central_differences() {
    let gen = random_generator(&[4, 16, 16, 8], None, 11).unwrap();
    let mut rng = StreamRng::new(5, 0);
    let h = 1e-6;
    let mut checked = 0;
    while checked < 100 {
        let z = rng.gaussian_vec(4);
        let d = rng.gaussian_vec(4);
        let c = rng.gaussian_vec(8);
        let shifted = |s: f64| {
            let zs: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + s * b).collect();
            linalg::dot(&c, &gen.forward(&LatentVector::new(zs)).unwrap())
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        let grad = gen.backward(&LatentVector::new(z.clone()), &c).unwrap();
        let an = linalg::dot(&grad, &d);
        // Skip the rare triples whose difference stencil straddles a ReLU kink.
        let kink = (shifted(h) - 2.0 * shifted(0.0) + shifted(-h)).abs() > 1e-9;
        if kink {
            continue;
        }
        let rel = (fd - an).abs() / an.abs().max(1e-3);
        assert!(rel <= 1e-5, "fd {fd} vs backward {an}");
        checked += 1;
    }
}

#[test]
fn lipschitz_bound_holds_on_random_pairs() {
    let gen = random_generator(&[10, 50, 100, 200], None, 1).unwrap();
    let lip = gen.lipschitz_upper_bound();
    let mut rng = StreamRng::new(9, 0);
    for _ in 0..1000 {
        let z1 = rng.uniform_in_ball(10, gen.latent_radius());
        let z2 = rng.uniform_in_ball(10, gen.latent_radius());
        let d_out = linalg::norm(&linalg::sub(
            &gen.forward(&LatentVector::new(z1.clone())).unwrap(),
            &gen.forward(&LatentVector::new(z2.clone())).unwrap(),
        ));
        assert!(d_out <= lip * linalg::norm(&linalg::sub(&z1, &z2)) * (1.0 + 1e-9));
    }
}

fn orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = StreamRng::new(seed, 0);
    let m = DMatrix::from_fn(n, n, |_, _| rng.gaussian());
    m.qr().q()
}

fn layer_from(m: &DMatrix<f64>) -> DenseLayer {
    let (rows, cols) = m.shape();
    let weights = (0..rows).flat_map(|i| (0..cols).map(move |j| m[(i, j)])).collect();
    DenseLayer::new(cols, rows, weights, vec![0.0; rows]).unwrap()
}

#[test]
fn spectral_norms_match_svd() {
    let mut rng = StreamRng::new(3, 0);
    let m = DMatrix::from_fn(30, 20, |_, _| rng.gaussian());
    let svd_max = m.singular_values().max();
    let layer = layer_from(&m);
    assert!((layer.spectral_norm() - svd_max).abs() <= 1e-6 * svd_max);

    let w1 = orthogonal(6, 1) * 2.0;
    let w2 = orthogonal(6, 2) * 3.0;
    let gen = MlpGenerator::new(vec![layer_from(&w1), layer_from(&w2)], 1.0).unwrap();
    assert!((gen.lipschitz_upper_bound() - 6.0).abs() <= 1e-5);
}
