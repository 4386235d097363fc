//! Float helpers for `no_std` builds, backed by `libm`.

/// Method-syntax wrappers around `libm` for the handful of transcendental
/// functions the crate needs without `std`.
pub trait F64Ext {
    fn abs(self) -> f64;
    fn sqrt(self) -> f64;
    fn exp(self) -> f64;
    fn ln(self) -> f64;
    fn ln_1p(self) -> f64;
    fn tanh(self) -> f64;
    fn powi(self, n: i32) -> f64;
    fn powf(self, p: f64) -> f64;
    fn signum_or_zero(self) -> f64;
}

impl F64Ext for f64 {
    #[inline]
    fn abs(self) -> f64 {
        libm::fabs(self)
    }
    #[inline]
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    #[inline]
    fn exp(self) -> f64 {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> f64 {
        libm::log(self)
    }
    #[inline]
    fn ln_1p(self) -> f64 {
        libm::log1p(self)
    }
    #[inline]
    fn tanh(self) -> f64 {
        libm::tanh(self)
    }
    #[inline]
    fn powi(self, n: i32) -> f64 {
        libm::pow(self, n as f64)
    }
    #[inline]
    fn powf(self, p: f64) -> f64 {
        libm::pow(self, p)
    }
    /// Sign of `self`, returning 0 for exactly zero. The Laplace inverse-CDF
    /// sampler and the nu-clip gradient both want this convention.
    #[inline]
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// log-gamma, needed by the fractional-order Renyi accountant.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Complementary error function.
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Numerically stable log(exp(a) + exp(b)).
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + F64Ext::ln_1p((lo - hi).exp())
}

/// Numerically stable log(exp(a) - exp(b)); requires a >= b.
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    debug_assert!(a >= b);
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a == b {
        return f64::NEG_INFINITY;
    }
    a + F64Ext::ln_1p(-((b - a).exp()))
}

/// Compensated (Kahan-Neumaier) sum of an iterator of terms.
pub fn kahan_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for t in terms {
        let s = sum + t;
        if F64Ext::abs(sum) >= F64Ext::abs(t) {
            carry += (sum - s) + t;
        } else {
            carry += (t - s) + sum;
        }
        sum = s;
    }
    sum + carry
}
