//! Logistic helpers shared by the ranking losses.

use crate::matrix::Real;

/// Logits are clamped to this magnitude before `ln sigma`.
pub const LOGIT_CLAMP: f64 = 40.0;

#[inline]
pub fn clamp_logit<T: Real>(x: T) -> T {
    let c = T::from_f64(LOGIT_CLAMP);
    x.max(-c).min(c)
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln sigma(x)` on the clamped logit, without overflow for either sign.
#[inline]
pub fn log_sigmoid<T: Real>(x: T) -> T {
    let x = clamp_logit(x);
    if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Derivative of [`log_sigmoid`]: `1 - sigma(x)` inside the clamp, zero outside.
#[inline]
pub fn log_sigmoid_grad<T: Real>(x: T) -> T {
    if x.abs() > T::from_f64(LOGIT_CLAMP) {
        T::zero()
    } else {
        sigmoid(-x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!((log_sigmoid(0.0f64) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sigmoid(-1e6f64).is_finite());
        assert_eq!(log_sigmoid(-1e6f64), -40.0 - (-40.0f64).exp().ln_1p());
        assert!(log_sigmoid(100.0f32) <= 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-6;
        for k in -300..=300 {
            let x = k as f64 / 10.0;
            let fd = (log_sigmoid(x + h) - log_sigmoid(x - h)) / (2.0 * h);
            assert!((fd - log_sigmoid_grad(x)).abs() < 1e-8, "x={x}");
        }
    }
}
