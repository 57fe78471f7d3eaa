use super::{PathPoint, SdeError};

/// Feedback stopping rule evaluated at every mesh point.
pub trait StoppingRule: Sync {
    fn should_stop(&self, state: &PathPoint) -> bool;
}

impl<F> StoppingRule for F
where
    F: Fn(&PathPoint) -> bool + Sync,
{
    fn should_stop(&self, state: &PathPoint) -> bool {
        self(state)
    }
}

/// `τ = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Immediate;

impl StoppingRule for Immediate {
    fn should_stop(&self, _: &PathPoint) -> bool {
        true
    }
}

/// Never stops voluntarily; only the region boundary ends the path.
#[derive(Debug, Clone, Copy, Default)]
pub struct Never;

impl StoppingRule for Never {
    fn should_stop(&self, _: &PathPoint) -> bool {
        false
    }
}

/// Stops at the first mesh point at or after a fixed elapsed time.
#[derive(Debug, Clone, Copy)]
pub struct StopAtTime(pub f64);

impl StoppingRule for StopAtTime {
    fn should_stop(&self, state: &PathPoint) -> bool {
        state.s >= self.0
    }
}

/// Per-regime continuation intervals: the rule continues while `x` lies
/// strictly inside one of the intervals of the current regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRule {
    pub continuation: Vec<Vec<(f64, f64)>>,
}

impl ThresholdRule {
    pub fn new(continuation: Vec<Vec<(f64, f64)>>) -> Self {
        Self { continuation }
    }

    /// Parses `a,b:c,...`: one entry per regime, `a` meaning "stop when
    /// `x ≤ a`" and `b:c` meaning "continue only on `(b, c)`".
    pub fn parse(text: &str, k: usize) -> Result<Self, SdeError> {
        let entries: Vec<&str> = text.split(',').map(str::trim).collect();
        if entries.len() != k {
            return Err(SdeError::InvalidArgument(format!(
                "threshold policy needs {k} entries, got {}",
                entries.len()
            )));
        }
        let num = |s: &str| -> Result<f64, SdeError> {
            match s.trim() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                v => v
                    .parse::<f64>()
                    .map_err(|_| SdeError::InvalidArgument(format!("bad threshold `{v}`"))),
            }
        };
        let continuation = entries
            .iter()
            .map(|entry| {
                let interval = match entry.split_once(':') {
                    Some((a, b)) => (num(a)?, num(b)?),
                    None => (num(entry)?, f64::INFINITY),
                };
                Ok(vec![interval])
            })
            .collect::<Result<_, SdeError>>()?;
        Ok(Self { continuation })
    }

    /// Every finite interval endpoint multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |v: f64| if v.is_finite() { v * factor } else { v };
        Self {
            continuation: self
                .continuation
                .iter()
                .map(|ivs| ivs.iter().map(|&(a, b)| (scale(a), scale(b))).collect())
                .collect(),
        }
    }
}

impl StoppingRule for ThresholdRule {
    fn should_stop(&self, state: &PathPoint) -> bool {
        !self.continuation[state.regime]
            .iter()
            .any(|&(a, b)| state.x > a && state.x < b)
    }
}
