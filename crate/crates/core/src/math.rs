//! Small numeric helpers shared across modules.

use alloc::vec::Vec;

pub use num_traits::Float;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Median of an unordered slice; the mean of the two middle values for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn hz_to_cents(hz: f64) -> f64 {
    1200.0 * (hz / crate::features::CENTS_REFERENCE_HZ).log2()
}

pub fn cents_to_hz(cents: f64) -> f64 {
    crate::features::CENTS_REFERENCE_HZ * (cents / 1200.0).exp2()
}

pub fn db_from_amplitude(a: f64) -> f64 {
    20.0 * a.log10()
}

pub fn amplitude_from_db(db: f64) -> f64 {
    (10.0f64).powf(db / 20.0)
}
