use super::VerifyError;
use crate::scalar::Real;

/// Closed-form perpetual American put on a geometric Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PutOracle<T> {
    pub strike: T,
    /// Negative root of `½σ²β(β−1) + μβ − r = 0`.
    pub beta: T,
    /// Exercise boundary `x* = Kβ/(β−1)`.
    pub boundary: T,
}

impl<T: Real> PutOracle<T> {
    pub fn new(mu: T, sigma: T, r0: T, strike: T) -> Result<Self, VerifyError> {
        if !(sigma > T::zero() && strike > T::zero() && r0 > mu.max(T::zero())) {
            return Err(VerifyError::Oracle(format!(
                "perpetual put needs sigma > 0, K > 0 and r > max(mu, 0); got mu={mu}, sigma={sigma}, r={r0}, K={strike}"
            )));
        }
        let half = T::lit(0.5);
        let s2 = sigma * sigma;
        // ½σ²β² + (μ − ½σ²)β − r = 0
        let (a, b, c) = (half * s2, mu - half * s2, -r0);
        let disc = b * b - T::lit(4.0) * a * c;
        if !(disc > T::zero()) {
            return Err(VerifyError::Oracle("quadratic has no real roots".into()));
        }
        let beta = (-b - disc.sqrt()) / (T::lit(2.0) * a);
        if !(beta < T::zero()) {
            return Err(VerifyError::Oracle(format!("no negative root (beta = {beta})")));
        }
        Ok(Self {
            strike,
            beta,
            boundary: strike * beta / (beta - T::one()),
        })
    }

    pub fn value(&self, x: T) -> T {
        if x <= self.boundary {
            self.strike - x
        } else {
            (self.strike - self.boundary) * (x / self.boundary).powf(self.beta)
        }
    }
}

/// Value and boundary at `x` in one call.
pub fn perpetual_put_oracle<T: Real>(mu: T, sigma: T, r0: T, strike: T, x: T) -> Result<(T, T), VerifyError> {
    let o = PutOracle::new(mu, sigma, r0, strike)?;
    Ok((o.value(x), o.boundary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parameters() {
        let o = PutOracle::<f64>::new(0.02, 0.3, 0.05, 1.0).unwrap();
        let residual = 0.5 * 0.09 * o.beta * (o.beta - 1.0) + 0.02 * o.beta - 0.05;
        assert!(residual.abs() < 1e-14);
        assert!((o.boundary - o.beta / (o.beta - 1.0)).abs() < 1e-15);
        assert!((o.value(o.boundary) - (1.0 - o.boundary)).abs() < 1e-15);
    }

    #[test]
    fn boundary_decreases_with_volatility() {
        let b: Vec<f64> = [0.1, 0.2, 0.4]
            .iter()
            .map(|&s| PutOracle::new(0.0, s, 0.05, 1.0).unwrap().boundary)
            .collect();
        assert!(b[0] > b[1] && b[1] > b[2], "{b:?}");
    }

    #[test]
    fn smooth_pasting_and_decay() {
        let o = PutOracle::<f64>::new(0.02, 0.3, 0.05, 1.0).unwrap();
        let h = 1e-6;
        let right = (o.value(o.boundary + h) - o.value(o.boundary)) / h;
        assert!((right + 1.0).abs() < 1e-4);
        assert!(o.value(1e8) < 1e-5);
        assert!(PutOracle::new(0.06, 0.3, 0.05, 1.0).is_err());
        assert!(PutOracle::new(0.0, 0.0, 0.05, 1.0).is_err());
    }

    #[test]
    fn single_precision() {
        let o64 = PutOracle::new(0.02, 0.3, 0.05, 1.0).unwrap();
        let o32 = PutOracle::new(0.02f32, 0.3, 0.05, 1.0).unwrap();
        assert!((o32.boundary as f64 - o64.boundary).abs() < 1e-5);
    }
}
