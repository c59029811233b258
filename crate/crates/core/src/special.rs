//! Standard normal density, distribution and the inverse Mills ratio.

use core::f64::consts::{FRAC_1_SQRT_2, PI};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density φ(z).
pub fn norm_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * libm::exp(-0.5 * z * z)
}

/// Standard normal distribution function Φ(z).
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

// Below this Φ(z) is computed from the asymptotic series of φ/Φ.
const TAIL: f64 = -30.0;

/// φ(z)/Φ(z), accurate far into the lower tail where both factors underflow.
pub fn inverse_mills(z: f64) -> f64 {
    if z > TAIL {
        norm_pdf(z) / norm_cdf(z)
    } else {
        // Φ(z) ≈ φ(z)/(-z) · (1 - 1/z² + 3/z⁴ - 15/z⁶)
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -z / series
    }
}

/// log Φ(z) without underflow.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z > TAIL {
        libm::log(norm_cdf(z))
    } else {
        -0.5 * z * z - 0.5 * libm::log(2.0 * PI) - libm::log(inverse_mills(z))
    }
}
