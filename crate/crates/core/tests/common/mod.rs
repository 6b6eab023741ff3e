//! Shared helpers for the integration suites: an independent scalar oracle
//! for the detection statistics and small statistical utilities.
//!
//! The oracle recurses directly on the two-arm amplitude structure with no
//! modes, routings, or stage machinery, so it exercises none of the code
//! paths it is used to check.

use std::f64::consts::PI;

/// `(d0, d1, d3, absorbed)` by direct scalar recursion.
pub fn reference_probs(p: f64, m: u32, blocking: bool) -> (f64, f64, f64, f64) {
    let alpha = p.sqrt().asin();
    let theta = PI / (2.0 * m as f64);
    let mut h = 0.0f64;
    let mut v = alpha.sin();
    let mut absorbed = 0.0f64;
    for _ in 0..m {
        let (hn, vn) = (
            h * theta.cos() - v * theta.sin(),
            h * theta.sin() + v * theta.cos(),
        );
        h = hn;
        v = vn;
        if blocking {
            absorbed += h * h;
            h = 0.0;
        }
    }
    (alpha.cos().powi(2), v * v, h * h, absorbed)
}

/// Three binomial standard deviations for a frequency estimate.
pub fn binomial_3sigma(p: f64, n: u64) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}
