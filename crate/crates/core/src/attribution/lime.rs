//! Local surrogate attribution: Gaussian perturbations around the instance
//! are scored by the model, weighted by proximity, and fitted with a ridge
//! regression. Slopes of the local linear fit are the factor contributions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::attribution::{Attribution, AttributionMethod, Scorer};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, Mat};

/// Knobs for the local surrogate fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LimeConfig {
    /// Number of perturbed samples scored around the instance.
    pub n_perturbations: usize,
    /// Width of the Gaussian proximity kernel exp(−d²/width²).
    pub kernel_width: f64,
    /// Standard deviation of the perturbation noise per factor.
    pub perturbation_scale: f64,
    /// L2 penalty on the surrogate slopes (the intercept is unpenalized).
    pub ridge: f64,
}

impl LimeConfig {
    /// Defaults scaled to the factor count: 5000 samples and a kernel
    /// width of 0.75·√f, matching the usual tabular setup.
    pub fn default_for(n_factors: usize) -> Self {
        LimeConfig {
            n_perturbations: 5000,
            kernel_width: 0.75 * (n_factors as f64).sqrt(),
            perturbation_scale: 1.0,
            ridge: 1e-3,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_perturbations == 0 {
            return Err(Error::InvalidArgument(
                "at least one perturbation is required".into(),
            ));
        }
        for (value, what) in [
            (self.kernel_width, "kernel width"),
            (self.perturbation_scale, "perturbation scale"),
            (self.ridge, "ridge penalty"),
        ] {
            if !(value > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{what} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Fits a weighted ridge surrogate in coordinates centered on `x` and
/// returns its slopes as contributions; the intercept — the proximity-
/// weighted local prediction — is the baseline.
pub fn lime_explain(
    model: &dyn Scorer,
    x: &[f64],
    config: &LimeConfig,
    seed: u64,
) -> Result<Attribution> {
    let f = model.n_factors();
    if x.len() != f {
        return Err(Error::DimensionMismatch {
            expected: f,
            actual: x.len(),
        });
    }
    config.validate()?;

    let n = config.n_perturbations;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut design = Mat::zeros(n + f, f + 1);
    let mut target = vec![0.0; n + f];
    let mut z = vec![0.0; f];
    let mut u = vec![0.0; f];
    for k in 0..n {
        let mut dist_sq = 0.0;
        for j in 0..f {
            let noise: f64 = StandardNormal.sample(&mut rng);
            u[j] = config.perturbation_scale * noise;
            z[j] = x[j] + u[j];
            dist_sq += u[j] * u[j];
        }
        let weight = (-dist_sq / (config.kernel_width * config.kernel_width)).exp();
        let sqrt_w = weight.sqrt();
        design.data[k * (f + 1)] = sqrt_w;
        for j in 0..f {
            design.data[k * (f + 1) + 1 + j] = sqrt_w * u[j];
        }
        target[k] = sqrt_w * model.score(&z);
    }
    // Ridge rows pin each slope toward zero; the intercept column stays free.
    let sqrt_ridge = config.ridge.sqrt();
    for j in 0..f {
        design.data[(n + j) * (f + 1) + 1 + j] = sqrt_ridge;
    }

    let names: Vec<String> = std::iter::once("intercept".to_string())
        .chain((0..f).map(|j| format!("factor {j}")))
        .collect();
    let fit = lstsq(&design, &target, &names)?;
    Ok(Attribution {
        method: AttributionMethod::Lime,
        phi: fit.coeffs[1..].to_vec(),
        baseline: fit.coeffs[0],
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        w: Vec<f64>,
        b: f64,
    }

    impl Scorer for Linear {
        fn n_factors(&self) -> usize {
            self.w.len()
        }
        fn score(&self, sample: &[f64]) -> f64 {
            self.b + self.w.iter().zip(sample).map(|(w, x)| w * x).sum::<f64>()
        }
    }

    /// On an exactly linear model the surrogate recovers the slopes and
    /// the intercept equals the model value at the instance.
    #[test]
    fn recovers_linear_coefficients() {
        let model = Linear {
            w: vec![2.0, 3.0],
            b: 1.0,
        };
        let x = [0.5, -1.0];
        let config = LimeConfig::default_for(2);
        let attribution = lime_explain(&model, &x, &config, 7).unwrap();
        assert!((attribution.phi[0] - 2.0).abs() < 0.05, "{:?}", attribution.phi);
        assert!((attribution.phi[1] - 3.0).abs() < 0.05, "{:?}", attribution.phi);
        let at_x = model.score(&x);
        assert!((attribution.baseline - at_x).abs() < 0.05);
        assert_eq!(attribution.method, AttributionMethod::Lime);
        assert_eq!(attribution.seed, Some(7));
    }

    /// A narrow kernel reads the slope of the local piece; a wide kernel
    /// and noisier samples blend in the far regime.
    #[test]
    fn kernel_width_controls_locality() {
        struct Piecewise;
        impl Scorer for Piecewise {
            fn n_factors(&self) -> usize {
                1
            }
            fn score(&self, s: &[f64]) -> f64 {
                if s[0] > 2.0 {
                    10.0 * s[0]
                } else {
                    s[0]
                }
            }
        }
        let narrow = lime_explain(
            &Piecewise,
            &[0.0],
            &LimeConfig {
                n_perturbations: 4000,
                kernel_width: 0.5,
                perturbation_scale: 1.0,
                ridge: 1e-3,
            },
            11,
        )
        .unwrap();
        let wide = lime_explain(
            &Piecewise,
            &[0.0],
            &LimeConfig {
                n_perturbations: 4000,
                kernel_width: 10.0,
                perturbation_scale: 3.0,
                ridge: 1e-3,
            },
            11,
        )
        .unwrap();
        assert!(
            (narrow.phi[0] - 1.0).abs() < 0.15,
            "narrow kernel should see the local unit slope, got {}",
            narrow.phi[0]
        );
        assert!(
            wide.phi[0] > narrow.phi[0] + 0.5,
            "wide kernel should blend in the steep regime: {} vs {}",
            wide.phi[0],
            narrow.phi[0]
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let model = Linear {
            w: vec![1.0, -2.0, 0.5],
            b: 0.0,
        };
        let config = LimeConfig::default_for(3);
        let a = lime_explain(&model, &[0.1, 0.2, 0.3], &config, 5).unwrap();
        let b = lime_explain(&model, &[0.1, 0.2, 0.3], &config, 5).unwrap();
        let c = lime_explain(&model, &[0.1, 0.2, 0.3], &config, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.phi, c.phi);
    }

    #[test]
    fn rejects_bad_configs_and_dims() {
        let model = Linear {
            w: vec![1.0],
            b: 0.0,
        };
        let good = LimeConfig::default_for(1);
        assert!(lime_explain(&model, &[0.0, 0.0], &good, 0).is_err());
        for bad in [
            LimeConfig {
                n_perturbations: 0,
                ..good.clone()
            },
            LimeConfig {
                kernel_width: 0.0,
                ..good.clone()
            },
            LimeConfig {
                perturbation_scale: -1.0,
                ..good.clone()
            },
            LimeConfig {
                ridge: 0.0,
                ..good.clone()
            },
        ] {
            assert!(lime_explain(&model, &[0.0], &bad, 0).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn default_config_tracks_factor_count() {
        let config = LimeConfig::default_for(16);
        assert_eq!(config.n_perturbations, 5000);
        assert!((config.kernel_width - 3.0).abs() < 1e-12);
        assert_eq!(config.perturbation_scale, 1.0);
        assert_eq!(config.ridge, 1e-3);
    }
}
