//! Scalar losses and their derivatives.

use serde::{Deserialize, Serialize};

use super::special::{digamma, ln_gamma};
use crate::error::{Error, Result};

/// Negative-binomial prediction in (mean, dispersion) form, with
/// `p = mu / (mu + dispersion)` and variance `mu + mu^2 / dispersion`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountPrediction {
    pub mu: f64,
    pub dispersion: f64,
}

impl CountPrediction {
    pub fn new(mu: f64, dispersion: f64) -> Result<Self> {
        let pred = Self { mu, dispersion };
        pred.validate()?;
        Ok(pred)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Domain(format!("mean must be finite and > 0, got {}", self.mu)));
        }
        if !(self.dispersion > 0.0 && self.dispersion.is_finite()) {
            return Err(Error::Domain(format!(
                "dispersion must be finite and > 0, got {}",
                self.dispersion
            )));
        }
        Ok(())
    }
}

/// ln P(K = k) under NB(mu, r).
pub fn nb_log_likelihood(k: u64, pred: CountPrediction) -> Result<f64> {
    pred.validate()?;
    let (mu, r) = (pred.mu, pred.dispersion);
    let kf = k as f64;
    let coeff = ln_gamma(kf + r) - ln_gamma(r) - ln_gamma(kf + 1.0);
    // r ln(r/(r+mu)) + k ln(mu/(r+mu)), written to stay accurate for extreme ratios
    let tail = -r * (mu / r).ln_1p() - if k == 0 { 0.0 } else { kf * (r / mu).ln_1p() };
    Ok((coeff + tail).min(0.0))
}

/// Partial derivatives of [`nb_log_likelihood`] with respect to `(mu, r)`.
pub fn nb_log_likelihood_grad(k: u64, pred: CountPrediction) -> Result<(f64, f64)> {
    pred.validate()?;
    let (mu, r) = (pred.mu, pred.dispersion);
    let kf = k as f64;
    let d_mu = kf / mu - (kf + r) / (mu + r);
    let d_r = digamma(kf + r) - digamma(r) - (mu / r).ln_1p() + (mu - kf) / (mu + r);
    Ok((d_mu, d_r))
}

/// Binary cross-entropy on a probability. Returns `(loss, d loss / d p)`.
pub fn bce_loss(p: f64, label: bool) -> Result<(f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {p}")));
    }
    Ok(if label {
        (-p.ln(), -1.0 / p)
    } else {
        (-(-p).ln_1p(), 1.0 / (1.0 - p))
    })
}

/// BCE evaluated on a logit, stable for any finite input.
/// Returns `(loss, d loss / d logit)`.
pub fn bce_with_logit(logit: f64, label: bool) -> (f64, f64) {
    let y = if label { 1.0 } else { 0.0 };
    (softplus(logit) - y * logit, sigmoid(logit) - y)
}

/// `-ln σ(pos - neg)`.
pub fn bpr_loss(score_pos: f64, score_neg: f64) -> f64 {
    softplus(score_neg - score_pos)
}

/// Derivative of [`bpr_loss`] with respect to `score_pos`; the derivative
/// with respect to `score_neg` is its negation.
pub fn bpr_loss_grad(score_pos: f64, score_neg: f64) -> f64 {
    -sigmoid(score_neg - score_pos)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x)
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(mu: f64, r: f64) -> CountPrediction {
        CountPrediction::new(mu, r).unwrap()
    }

    #[test]
    fn geometric_closed_form() {
        // mu = r = 1 gives P(k) = 2^-(k+1)
        for k in 0..20u64 {
            let expected = -((k + 1) as f64) * 2f64.ln();
            let got = nb_log_likelihood(k, pred(1.0, 1.0)).unwrap();
            assert!((got - expected).abs() < 1e-9, "k={k}: {got} vs {expected}");
        }
        assert!((nb_log_likelihood(0, pred(1.0, 1.0)).unwrap() + 0.693_147_180_559_945).abs() < 1e-12);
        assert!((nb_log_likelihood(2, pred(1.0, 1.0)).unwrap() + 2.079_441_541_679_836).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(CountPrediction::new(0.0, 1.0).is_err());
        assert!(CountPrediction::new(1.0, -1.0).is_err());
        let bad = CountPrediction { mu: -1.0, dispersion: 1.0 };
        assert!(matches!(nb_log_likelihood(1, bad), Err(Error::Domain(_))));
        assert!(matches!(nb_log_likelihood_grad(1, bad), Err(Error::Domain(_))));
    }

    #[test]
    fn mean_gradient_closed_form() {
        let (d_mu, _) = nb_log_likelihood_grad(1, pred(1.0, 1.0)).unwrap();
        assert_eq!(d_mu, 0.0);
        let (d_mu, _) = nb_log_likelihood_grad(0, pred(2.0, 1.0)).unwrap();
        assert!((d_mu + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences_on_grid() {
        let ks = [0u64, 1, 3, 7, 20];
        let mus = [0.1, 0.8, 2.5, 6.0, 15.0];
        let rs = [0.2, 0.9, 1.7, 4.0, 12.0];
        for &k in &ks {
            for &mu in &mus {
                for &r in &rs {
                    let (g_mu, g_r) = nb_log_likelihood_grad(k, pred(mu, r)).unwrap();
                    let f = |m: f64, d: f64| nb_log_likelihood(k, pred(m, d)).unwrap();
                    let h_mu = 1e-5 * mu;
                    let h_r = 1e-5 * r;
                    let fd_mu = (f(mu + h_mu, r) - f(mu - h_mu, r)) / (2.0 * h_mu);
                    let fd_r = (f(mu, r + h_r) - f(mu, r - h_r)) / (2.0 * h_r);
                    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
                    assert!(rel(g_mu, fd_mu) < 1e-6, "k={k} mu={mu} r={r}: {g_mu} vs {fd_mu}");
                    assert!(rel(g_r, fd_r) < 1e-6, "k={k} mu={mu} r={r}: {g_r} vs {fd_r}");
                }
            }
        }
    }

    #[test]
    fn pmf_normalizes() {
        for &mu in &[0.05, 0.5, 1.0, 3.0, 7.5, 10.0] {
            for &r in &[0.1, 0.5, 1.0, 2.5, 10.0] {
                // k <= 500 leaves ~1.5e-4 of mass in the tail at mu = 10, r = 0.1
                let total: f64 = (0..=2000u64)
                    .map(|k| nb_log_likelihood(k, pred(mu, r)).unwrap().exp())
                    .sum();
                assert!(total <= 1.0 + 1e-12 && total >= 1.0 - 1e-6, "mu={mu} r={r}: {total}");
            }
        }
    }

    #[test]
    fn likelihood_peaks_at_mean_equal_count() {
        for k in 1..10u64 {
            for &r in &[0.3, 1.0, 5.0] {
                let best = (1..=2000)
                    .map(|i| i as f64 * 0.01)
                    .max_by(|&a, &b| {
                        let fa = nb_log_likelihood(k, pred(a, r)).unwrap();
                        let fb = nb_log_likelihood(k, pred(b, r)).unwrap();
                        fa.total_cmp(&fb)
                    })
                    .unwrap();
                assert!((best - k as f64).abs() < 0.011, "k={k} r={r} best={best}");
            }
        }
    }

    #[test]
    fn bce_values() {
        let (l, _) = bce_loss(0.5, true).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let (l, _) = bce_loss(0.5, false).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let (l, _) = bce_loss(0.8, true).unwrap();
        assert!((l - 0.223_143_551_314_209_7).abs() < 1e-12);
        assert!(bce_loss(0.0, true).is_err());
        assert!(bce_loss(1.0, false).is_err());
        let mut prev = f64::INFINITY;
        for i in 1..=100 {
            let p = 0.5 + 0.4999 * i as f64 / 100.0;
            let (l, _) = bce_loss(p, true).unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn bce_logit_agrees_with_probability_form() {
        for &z in &[-8.0, -1.0, 0.0, 0.3, 4.0] {
            for label in [false, true] {
                let p = sigmoid(z);
                let (lp, dp) = bce_loss(p, label).unwrap();
                let (lz, dz) = bce_with_logit(z, label);
                assert!((lp - lz).abs() < 1e-12);
                assert!((dp * p * (1.0 - p) - dz).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bpr_values() {
        assert!((bpr_loss(0.7, 0.7) - 2f64.ln()).abs() < 1e-15);
        assert!((bpr_loss(1.0, 0.0) - 0.313_261_687_518_222_8).abs() < 1e-12);
        assert!(bpr_loss(1000.0, 0.0) < 1e-300);
        assert!((bpr_loss(-1000.0, 0.0) - 1000.0).abs() < 1e-9);
        assert!(bpr_loss(500.0, -500.0).is_finite());
    }

    #[test]
    fn bpr_gradient_matches_fd() {
        for &(a, b) in &[(0.0, 0.0), (1.5, -0.3), (-2.0, 3.0)] {
            let h = 1e-6;
            let fd = (bpr_loss(a + h, b) - bpr_loss(a - h, b)) / (2.0 * h);
            assert!((fd - bpr_loss_grad(a, b)).abs() < 1e-8);
        }
    }
}
