use super::{DiffusionPath, PayoffSpec, SdeError, StoppingRule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffOutcome {
    pub value: f64,
    /// Mesh index where the path was stopped, forced stops included.
    pub stop_index: Option<usize>,
    /// No stop happened before the end of the simulated mesh.
    pub censored: bool,
}

/// Realised payoff of `policy` along `path`.
///
/// The running integral uses the trapezoidal rule on the path mesh with the
/// pre-jump regime on each interval. The policy is consulted at every mesh
/// point; reaching the computational boundary forces a stop.
pub fn evaluate_payoff(
    path: &DiffusionPath,
    policy: &dyn StoppingRule,
    payoff: &PayoffSpec,
) -> Result<PayoffOutcome, SdeError> {
    let mut integral = 0.0;
    let n_points = path.len();
    if n_points == 0 {
        return Err(SdeError::InvalidArgument("empty path".into()));
    }
    let mut left = (-path.discount_integral[0]).exp() * payoff.running(path.x[0], path.regime[0])?;
    for n in 0..n_points {
        let point = path.point(n);
        let forced = path.exit.filter(|e| e.index == n);
        if forced.is_some() || policy.should_stop(&point) {
            let reward = match forced {
                Some(e) => payoff.exit_reward(e.end, point.x, point.regime)?,
                None => payoff.stop_reward(point.x, point.regime)?,
            };
            return Ok(PayoffOutcome {
                value: integral + (-point.rho).exp() * reward,
                stop_index: Some(n),
                censored: false,
            });
        }
        if n + 1 < n_points {
            let h = path.mesh[n + 1] - path.mesh[n];
            let regime = path.regime[n];
            let right = (-path.discount_integral[n + 1]).exp() * payoff.running(path.x[n + 1], regime)?;
            integral += 0.5 * h * (left + right);
            left = if path.regime[n + 1] == regime {
                right
            } else {
                (-path.discount_integral[n + 1]).exp() * payoff.running(path.x[n + 1], path.regime[n + 1])?
            };
        }
    }
    Ok(PayoffOutcome {
        value: integral,
        stop_index: None,
        censored: true,
    })
}
