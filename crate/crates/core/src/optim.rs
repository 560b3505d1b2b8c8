//! First-order Adam updates shared by the body optimizer and atlas training.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Sub};

/// Floating-point element an [`Adam`] state can update.
pub trait AdamScalar:
    Copy + Default + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn sqrt(self) -> Self;
}

impl AdamScalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
}

impl AdamScalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrtf(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    config: AdamConfig,
    step: i32,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: AdamScalar> Adam<T> {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![T::default(); len],
            v: vec![T::default(); len],
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// One bias-corrected update; a zero gradient on fresh state is a no-op.
    pub fn update(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len(), "adam parameter length");
        assert_eq!(grads.len(), self.m.len(), "adam gradient length");
        self.step += 1;
        let c = self.config;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one = T::from_f64(1.0);
        let bc1 = 1.0 - libm::pow(c.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.step as f64);
        let step_size = T::from_f64(c.lr * libm::sqrt(bc2) / bc1);
        let eps = T::from_f64(c.eps * libm::sqrt(bc2));
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let g = *g;
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p = *p - step_size * *m / (v.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut adam = Adam::<f64>::new(AdamConfig::with_lr(0.1), 3);
        let mut p = [1.0, -2.0, 3.0];
        adam.update(&mut p, &[0.0; 3]);
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::<f32>::new(AdamConfig::with_lr(0.01), 2);
        let mut p = [0.0f32, 0.0];
        adam.update(&mut p, &[4.0, -0.5]);
        assert!((p[0] + 0.01).abs() < 1e-6 && (p[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut adam = Adam::<f64>::new(AdamConfig::with_lr(0.05), 1);
        let mut p = [3.0];
        for _ in 0..500 {
            let g = [2.0 * (p[0] - 1.0)];
            adam.update(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
    }
}
