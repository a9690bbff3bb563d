use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{default_feature_names, Dataset, Label};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parameters of the equicorrelated Gaussian two-class generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n0: usize,
    pub n1: usize,
    pub n_unlabeled: usize,
    pub p: usize,
    /// Number of leading features whose class-1 mean is shifted.
    pub s: usize,
    /// Class-1 mean shift on each informative feature, in standard deviations.
    pub delta: f64,
    /// Common off-diagonal correlation, in [0, 1).
    pub rho: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 144 / 179 labeled rows, 309 unlabeled rows, 56 features, 6 informative.
    pub fn adni_like(seed: u64) -> Self {
        SyntheticSpec {
            n0: 144,
            n1: 179,
            n_unlabeled: 309,
            p: 56,
            s: 6,
            delta: 0.8,
            rho: 0.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("p must be at least 1"));
        }
        if self.s > self.p {
            return Err(Error::invalid(format!("s = {} exceeds p = {}", self.s, self.p)));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::invalid(format!("delta must be finite and >= 0, got {}", self.delta)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.n0 + self.n1 + self.n_unlabeled == 0 {
            return Err(Error::invalid("at least one row must be requested"));
        }
        Ok(())
    }
}

/// Draws `n0` class-0 rows, then `n1` class-1 rows, then `n_unlabeled` rows whose
/// source class alternates 0, 1, 0, … with the label erased.
///
/// Each row is `sqrt(rho)·z₀ + sqrt(1 − rho)·zⱼ` plus `delta` on the first `s`
/// coordinates for class-1 sources, giving unit variances and correlation `rho`.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n0 + spec.n1 + spec.n_unlabeled;
    let common = spec.rho.sqrt();
    let own = (1.0 - spec.rho).sqrt();
    let mut x = Array2::<T>::zeros((n, spec.p));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        let (source, label) = if i < spec.n0 {
            (Label::Class0, Label::Class0)
        } else if i < spec.n0 + spec.n1 {
            (Label::Class1, Label::Class1)
        } else if (i - spec.n0 - spec.n1) % 2 == 0 {
            (Label::Class0, Label::Unlabeled)
        } else {
            (Label::Class1, Label::Unlabeled)
        };
        let z0: f64 = rng.sample(StandardNormal);
        for (j, v) in row.iter_mut().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            let shift = if source == Label::Class1 && j < spec.s { spec.delta } else { 0.0 };
            *v = T::lit(common * z0 + own * e + shift);
        }
        labels.push(label);
    }
    Dataset::new(x, labels, default_feature_names(spec.p))
}

/// Appends `count` independent standard-normal columns named `noise{k}`.
pub fn append_noise_features<T: Scalar>(ds: &Dataset<T>, count: usize, seed: u64) -> Result<Dataset<T>> {
    if count == 0 {
        return Ok(ds.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Array2::from_shape_simple_fn((ds.n_rows(), count), || T::lit(rng.sample::<f64, _>(StandardNormal)));
    let features =
        concatenate(Axis(1), &[ds.features(), noise.view()]).map_err(|e| Error::dim(e.to_string()))?;
    let mut names = ds.feature_names().to_vec();
    names.extend((0..count).map(|k| format!("noise{k}")));
    ds.with_features(features, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n0: usize, n1: usize, nu: usize, p: usize, s: usize, delta: f64, rho: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n0,
            n1,
            n_unlabeled: nu,
            p,
            s,
            delta,
            rho,
            seed,
        }
    }

    #[test]
    fn counts_are_exact() {
        let ds: Dataset<f64> = generate_synthetic(&SyntheticSpec::adni_like(1)).unwrap();
        assert_eq!(ds.n_rows(), 632);
        assert_eq!(ds.n_features(), 56);
        assert_eq!(ds.class_counts(), (144, 179, 309));
    }

    #[test]
    fn deterministic_in_seed() {
        let a: Dataset<f64> = generate_synthetic(&spec(5, 5, 2, 3, 1, 1.0, 0.3, 9)).unwrap();
        let b: Dataset<f64> = generate_synthetic(&spec(5, 5, 2, 3, 1, 1.0, 0.3, 9)).unwrap();
        let c: Dataset<f64> = generate_synthetic(&spec(5, 5, 2, 3, 1, 1.0, 0.3, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_synthetic::<f64>(&spec(5, 5, 0, 3, 4, 1.0, 0.0, 0)).is_err());
        assert!(generate_synthetic::<f64>(&spec(5, 5, 0, 0, 0, 1.0, 0.0, 0)).is_err());
        assert!(generate_synthetic::<f64>(&spec(5, 5, 0, 3, 1, -1.0, 0.0, 0)).is_err());
        assert!(generate_synthetic::<f64>(&spec(5, 5, 0, 3, 1, 1.0, 1.0, 0)).is_err());
    }

    #[test]
    fn null_shift_means_agree() {
        let n = 4000;
        let ds: Dataset<f64> = generate_synthetic(&spec(n, n, 0, 4, 4, 0.0, 0.3, 5)).unwrap();
        let x = ds.features();
        for j in 0..4 {
            let m0 = x.column(j).iter().take(n).sum::<f64>() / n as f64;
            let m1 = x.column(j).iter().skip(n).sum::<f64>() / n as f64;
            assert!((m0 - m1).abs() < 4.0 / (n as f64).sqrt(), "feature {j}: {m0} vs {m1}");
        }
    }

    #[test]
    fn independent_features_are_uncorrelated() {
        let n = 5000;
        let ds: Dataset<f64> = generate_synthetic(&spec(n, 0, 0, 5, 0, 0.0, 0.0, 11)).unwrap();
        let x = ds.features();
        let bound = 4.0 / (n as f64).sqrt();
        for a in 0..5 {
            for b in (a + 1)..5 {
                let (ca, cb) = (x.column(a), x.column(b));
                let (ma, mb) = (ca.mean().unwrap(), cb.mean().unwrap());
                let cov: f64 = ca.iter().zip(cb).map(|(u, v)| (u - ma) * (v - mb)).sum();
                let va: f64 = ca.iter().map(|u| (u - ma).powi(2)).sum();
                let vb: f64 = cb.iter().map(|v| (v - mb).powi(2)).sum();
                let r = cov / (va * vb).sqrt();
                assert!(r.abs() < bound, "r({a},{b}) = {r}");
            }
        }
    }

    #[test]
    fn noise_columns_appended() {
        let ds: Dataset<f64> = generate_synthetic(&spec(4, 4, 0, 3, 1, 1.0, 0.0, 0)).unwrap();
        let wide = append_noise_features(&ds, 2, 1).unwrap();
        assert_eq!(wide.n_features(), 5);
        assert_eq!(wide.feature_names()[4], "noise1");
        assert_eq!(wide.features().column(0), ds.features().column(0));
    }
}
