//! Spectral diagnostics derived from a singular value spectrum: singular
//! entropy (KL divergence of the normalized spectrum to uniform, in nats),
//! W-error curves, and max-normalized spectra.

use crate::error::{Error, Result};
use serde::Serialize;

/// One point of a W-error curve.
///
/// `lower_bound` is set when the spectrum was truncated at k < min(rows,
/// cols): the tail sum then misses the unretained singular values, so the
/// reported value only bounds the true error from below (increasingly so as
/// d approaches k).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WErrorPoint {
    pub d: usize,
    pub value: f64,
    pub lower_bound: bool,
}

/// Spectrum plus the derived metrics the reports are built from.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub sigma: Vec<f64>,
    pub fro_norm: f64,
    pub singular_entropy: f64,
    pub w_error: Vec<WErrorPoint>,
    /// True when sigma holds only the top of the spectrum.
    pub truncated: bool,
}

impl SpectralSummary {
    pub fn from_spectrum(sigma: Vec<f64>, fro_norm: f64, truncated: bool) -> Result<Self> {
        let entropy = singular_entropy(&sigma)?;
        let w_error = w_error_curve(&sigma, fro_norm, truncated)?;
        Ok(SpectralSummary {
            sigma,
            fro_norm,
            singular_entropy: entropy,
            w_error,
            truncated,
        })
    }
}

fn check_descending(sigma: &[f64]) -> Result<()> {
    if sigma.is_empty() {
        return Err(Error::InvalidInput("empty spectrum".into()));
    }
    if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidInput(
            "singular values must be finite and non-negative".into(),
        ));
    }
    if sigma.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidInput("spectrum not descending".into()));
    }
    Ok(())
}

/// KL divergence from the normalized spectrum to the uniform distribution,
/// in nats: log(n) - H(p) with p_i = sigma_i / sum(sigma) and 0 log 0 = 0.
pub fn singular_entropy(sigma: &[f64]) -> Result<f64> {
    check_descending(sigma)?;
    let total: f64 = sigma.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput(
            "all-zero spectrum: normalized distribution undefined".into(),
        ));
    }
    let n = sigma.len() as f64;
    let mut h = 0.0;
    for &s in sigma {
        let p = s / total;
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    // Clamp tiny negative rounding; KL(p || uniform) = log n - H(p) >= 0.
    Ok((n.ln() - h).max(0.0))
}

/// W-error(d) = ||sigma_{d+1:}||_2 / fro_norm for d in [0, len(sigma)].
pub fn w_error_curve(sigma: &[f64], fro_norm: f64, truncated: bool) -> Result<Vec<WErrorPoint>> {
    check_descending(sigma)?;
    if !(fro_norm > 0.0) {
        return Err(Error::InvalidInput("fro_norm must be positive".into()));
    }
    let mass: f64 = sigma.iter().map(|s| s * s).sum::<f64>().sqrt();
    if mass > fro_norm * (1.0 + 1e-6) {
        return Err(Error::InvalidInput(format!(
            "spectrum mass {mass} exceeds fro_norm {fro_norm}"
        )));
    }
    // Suffix sums of sigma^2, accumulated from the tail for accuracy.
    let k = sigma.len();
    let mut tail = vec![0.0; k + 1];
    for d in (0..k).rev() {
        tail[d] = tail[d + 1] + sigma[d] * sigma[d];
    }
    Ok((0..=k)
        .map(|d| WErrorPoint {
            d,
            value: tail[d].sqrt() / fro_norm,
            lower_bound: truncated,
        })
        .collect())
}

/// Spectrum divided by its maximum singular value; first entry exactly 1.
pub fn spectrum_normalize(sigma: &[f64]) -> Result<Vec<f64>> {
    check_descending(sigma)?;
    let top = sigma[0];
    if top <= 0.0 {
        return Err(Error::InvalidInput("zero leading singular value".into()));
    }
    let mut out: Vec<f64> = sigma.iter().map(|s| s / top).collect();
    out[0] = 1.0;
    Ok(out)
}
