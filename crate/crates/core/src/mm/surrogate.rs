//! The majorizing surrogate
//! `Q(lambda, lambda') = (phi(u') + lambdaᵀpsi(u'))^(gamma + p) / prod_i lambda_i`
//! and the function `Phi_gamma(lambda) = F(lambda)^(gamma + p) / prod_i lambda_i`
//! it majorizes, both evaluated in scaled logarithmic form.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mm::LambdaVector;

/// Largest `p` for which `Phi_gamma` is evaluated in direct form.
pub const DIRECT_FORM_MAX_P: usize = 8;

/// Logarithmic pieces of a surrogate value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateValue {
    /// `ln f` with `f = phi(u') + lambdaᵀpsi(u')`.
    pub log_f: f64,
    /// `sum_i ln lambda_i`.
    pub log_prod_lambda: f64,
    pub p: usize,
}

impl SurrogateValue {
    pub fn new(f: f64, lambda: &LambdaVector) -> Result<Self> {
        if !(f > 0.0 && f.is_finite()) {
            return Err(invalid("f", format!("must be positive and finite, got {f}")));
        }
        if !lambda.is_strictly_positive() {
            return Err(invalid("lambda", "surrogate needs strictly positive parameters"));
        }
        Ok(Self {
            log_f: f.ln(),
            log_prod_lambda: lambda.log_product(),
            p: lambda.p(),
        })
    }

    /// `ln Q / p` for the exponent `2p`: `2 ln f - (1/p) sum_i ln lambda_i`.
    pub fn scaled_log(&self) -> f64 {
        self.scaled_log_with_gamma(self.p as f64)
    }

    /// `ln Q / p` for the exponent `gamma + p`.
    pub fn scaled_log_with_gamma(&self, gamma: f64) -> f64 {
        let p = self.p as f64;
        (gamma + p) / p * self.log_f - self.log_prod_lambda / p
    }
}

/// `2 ln f - (1/p) sum_i ln lambda_i`.
pub fn surrogate_scaled_log(f: f64, lambda: &LambdaVector) -> Result<f64> {
    Ok(SurrogateValue::new(f, lambda)?.scaled_log())
}

/// Scaled log surrogate for an arbitrary exponent `gamma + p`.
pub fn surrogate_scaled_log_gamma(f: f64, lambda: &LambdaVector, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    Ok(SurrogateValue::new(f, lambda)?.scaled_log_with_gamma(gamma))
}

/// `F^(gamma + p) / prod_i lambda_i` evaluated literally.
pub fn phi_gamma_direct(value: f64, lambda: &LambdaVector, gamma: f64) -> Result<f64> {
    if lambda.p() > DIRECT_FORM_MAX_P {
        return Err(invalid(
            "lambda",
            format!("direct form limited to p <= {DIRECT_FORM_MAX_P}, got {}", lambda.p()),
        ));
    }
    if !(value > 0.0) || !lambda.is_strictly_positive() {
        return Err(invalid("value", "needs a positive value and positive parameters"));
    }
    let prod: f64 = lambda.as_slice().iter().product();
    Ok(value.powf(gamma + lambda.p() as f64) / prod)
}

/// `ln Phi_gamma(lambda)`.
pub fn phi_gamma_log(value: f64, lambda: &LambdaVector, gamma: f64) -> Result<f64> {
    let s = SurrogateValue::new(value, lambda)?;
    Ok((gamma + s.p as f64) * s.log_f - s.log_prod_lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_identity() {
        let l = LambdaVector::new(vec![1.0]).unwrap();
        let v = surrogate_scaled_log(std::f64::consts::E, &l).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_direct_form_for_small_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = rng.random_range(1..=5);
            let l = LambdaVector::new((0..p).map(|_| rng.random_range(0.1..3.0)).collect()).unwrap();
            let f = rng.random_range(0.2..4.0);
            let direct = phi_gamma_direct(f, &l, p as f64).unwrap();
            let scaled = surrogate_scaled_log(f, &l).unwrap();
            assert!((direct.ln() / p as f64 - scaled).abs() <= 1e-12 * scaled.abs().max(1.0));
            let gamma = rng.random_range(0.5..6.0);
            let lg = phi_gamma_log(f, &l, gamma).unwrap();
            assert!((phi_gamma_direct(f, &l, gamma).unwrap().ln() - lg).abs() <= 1e-12 * lg.abs().max(1.0));
        }
    }

    #[test]
    fn large_p_is_finite() {
        let l = LambdaVector::uniform(6400, 1e-4).unwrap();
        let v = surrogate_scaled_log(1e3, &l).unwrap();
        assert!(v.is_finite());
        assert!(phi_gamma_direct(1e3, &l, 6400.0).is_err());
    }

    #[test]
    fn rejects_nonpositive_inputs() {
        let l = LambdaVector::uniform(2, 1.0).unwrap();
        assert!(surrogate_scaled_log(0.0, &l).is_err());
        assert!(surrogate_scaled_log(-1.0, &l).is_err());
        assert!(surrogate_scaled_log(f64::NAN, &l).is_err());
        let zero = LambdaVector::nonnegative(vec![0.0, 1.0]);
        assert!(surrogate_scaled_log(1.0, &zero).is_err());
    }
}
