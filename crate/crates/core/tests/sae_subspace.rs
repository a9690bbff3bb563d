use featlearn::pca::pca_fit;
use featlearn::sae::{ae_fit, Activation, AeLayer, TrainConfig};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Principal angles between the column spans of `a` and `b` (both p×k).
fn principal_angles(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    let qa = to_na(a).qr().q();
    let qb = to_na(b).qr().q();
    (qa.transpose() * qb)
        .singular_values()
        .iter()
        .map(|&s| s.clamp(-1.0, 1.0).acos())
        .collect()
}

fn sample(seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = [3.0, 2.0, 1.0, 0.5, 0.3];
    // random rotation mixes the axes so the subspace is not coordinate-aligned
    let g = DMatrix::from_fn(5, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let z = Array2::from_shape_fn((50, 5), |(_, j)| scales[j] * rng.sample::<f64, _>(StandardNormal));
    Array2::from_shape_fn((50, 5), |(i, j)| (0..5).map(|k| z[[i, k]] * q[(j, k)]).sum::<f64>() + 1.5)
}

#[test]
fn linear_tied_autoencoder_spans_pca_subspace() {
    for seed in 0..3 {
        let x = sample(seed);
        let cfg = TrainConfig { learning_rate: 0.01, iterations: 20_000, l2: 0.0, seed };
        let init = AeLayer::init(5, 2, Activation::Identity, seed).unwrap();
        let (layer, losses) = ae_fit(init, x.view(), &cfg).unwrap();
        let pca = pca_fit(x.view(), 2).unwrap();
        let angles = principal_angles(&layer.w.t().to_owned(), &pca.components);
        eprintln!("seed {seed}: angles {angles:?} loss {} -> {}", losses[0], losses.last().unwrap());
        assert!(angles.iter().all(|&a| a < 0.05), "{angles:?}");
    }
}
