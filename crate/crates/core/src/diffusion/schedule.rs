use alloc::vec::Vec;
use rand::Rng;

use super::DiffusionError;

/// Discrete DDPM schedule over steps `1..=T`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseSchedule {
    /// `alpha_bar[t - 1]` is the cumulative product `ᾱ_t`.
    alpha_bar: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(1e-4, 2e-2, 1000)
    }
}

impl NoiseSchedule {
    /// Linear-β schedule: `β_t` evenly spaced from `beta_start` to `beta_end`.
    pub fn linear(beta_start: f64, beta_end: f64, steps: usize) -> Self {
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut prod = 1.0;
        for i in 0..steps {
            let beta = if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            };
            prod *= 1.0 - beta;
            alpha_bar.push(prod);
        }
        Self { alpha_bar }
    }

    /// Wraps explicit cumulative products; they must lie in `(0, 1)` and
    /// strictly decrease.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self, DiffusionError> {
        let ok = !alpha_bar.is_empty()
            && alpha_bar.iter().all(|&a| a > 0.0 && a < 1.0)
            && alpha_bar.windows(2).all(|w| w[1] < w[0]);
        if ok {
            Ok(Self { alpha_bar })
        } else {
            Err(DiffusionError::InvalidSchedule)
        }
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn check(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.steps() {
            Err(DiffusionError::InvalidTimestep { t, max: self.steps() })
        } else {
            Ok(())
        }
    }

    /// `√ᾱ_t`. Panics outside `1..=T`; use [`check`](Self::check) first.
    #[inline]
    pub fn alpha(&self, t: usize) -> f64 {
        libm::sqrt(self.alpha_bar[t - 1])
    }

    /// `√(1 − ᾱ_t)`.
    #[inline]
    pub fn sigma(&self, t: usize) -> f64 {
        libm::sqrt(1.0 - self.alpha_bar[t - 1])
    }

    /// Uniform step in `[lo·T, hi·T]` (rounded, clamped to `1..=T`).
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R, lo: f64, hi: f64) -> usize {
        let t_max = self.steps() as f64;
        let a = libm::round(lo * t_max).clamp(1.0, t_max) as usize;
        let b = libm::round(hi * t_max).clamp(1.0, t_max) as usize;
        rng.random_range(a.min(b)..=b.max(a))
    }
}
