//! Float intrinsics that work with and without `std`.
//!
//! `f64::exp` and friends live in `std`, not `core`; the `libm` ports are
//! used when the `std` feature is off.

#[cfg(feature = "std")]
pub fn exp(x: f64) -> f64 {
    x.exp()
}

#[cfg(not(feature = "std"))]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[cfg(feature = "std")]
pub fn ln(x: f64) -> f64 {
    x.ln()
}

#[cfg(not(feature = "std"))]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[cfg(feature = "std")]
pub fn sqrt(x: f64) -> f64 {
    x.sqrt()
}

#[cfg(not(feature = "std"))]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Nonnegative integer power by squaring (`f64::powi` lives in `std`).
pub fn powi(x: f64, mut n: i32) -> f64 {
    debug_assert!(n >= 0);
    let mut base = x;
    let mut acc = 1.0;
    while n > 0 {
        if n & 1 == 1 {
            acc *= base;
        }
        base *= base;
        n >>= 1;
    }
    acc
}
