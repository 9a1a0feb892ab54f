use crate::error::{Error, Result};

/// Default Gaussian width, in cosine-similarity units.
pub const DEFAULT_SIGMA: f64 = 0.02;
/// Likelihoods at or below this fraction of the peak are set to zero.
pub const DEFAULT_FLOOR: f64 = 1e-4;

/// Unnormalized Gaussian of each similarity around `center` (the largest
/// similarity seen this frame): `exp(−(x − center)² / 2σ²)`, truncated to 0
/// at or below `floor` (relative to the peak value 1).
pub fn likelihoods(similarities: &[f64], center: f64, sigma: f64, floor: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let k = -0.5 / (sigma * sigma);
    Ok(similarities
        .iter()
        .map(|&x| {
            let d = x - center;
            let l = (k * d * d).exp();
            if l <= floor {
                0.0
            } else {
                l
            }
        })
        .collect())
}
