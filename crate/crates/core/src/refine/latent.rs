use nalgebra::Vector3;

use super::{check_points, RefineConfig};
use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud};
use crate::shape::{ShapeBasis, ShapeLatent};

const ARMIJO: f64 = 1e-4;

/// Element SDF values at fixed points, so the latent objective is cheap.
struct Table {
    values: Vec<f64>,
    b: usize,
}

impl Table {
    fn new(points: &[Vector3<f64>], basis: &ShapeBasis) -> Self {
        let b = basis.len();
        let mut values = vec![0.0; points.len() * b];
        let mut grads = vec![Vector3::zeros(); b];
        for (p, row) in points.iter().zip(values.chunks_mut(b)) {
            basis.element_evals(p, row, &mut grads);
        }
        Self { values, b }
    }

    fn objective(&self, latent: &ShapeLatent, reg: f64) -> f64 {
        let w = latent.weights();
        let data: f64 = self
            .values
            .chunks(self.b)
            .map(|row| row.iter().zip(w).map(|(d, wk)| d * wk).sum::<f64>().abs())
            .sum();
        data + reg * latent.raw_norm_sq()
    }

    fn gradient(&self, latent: &ShapeLatent, reg: f64) -> Vec<f64> {
        let w = latent.weights();
        let mut g: Vec<f64> = latent.raw().iter().map(|r| 2.0 * reg * r).collect();
        for row in self.values.chunks(self.b) {
            let sdf: f64 = row.iter().zip(w).map(|(d, wk)| d * wk).sum();
            let sign = if sdf > 0.0 { 1.0 } else if sdf < 0.0 { -1.0 } else { 0.0 };
            for k in 0..self.b {
                g[k] += sign * w[k] * (row[k] - sdf);
            }
        }
        g
    }
}

/// Latent-fit objective `Σᵢ |sdf(z, p̄ᵢ)| + λ‖raw‖²` on object-normalized
/// points.
pub fn latent_objective(points: &PointCloud, basis: &ShapeBasis, latent: &ShapeLatent, reg: f64) -> f64 {
    Table::new(points.points(), basis).objective(latent, reg)
}

/// Fit the shape latent to object-normalized points by gradient descent
/// with Armijo backtracking, starting from `init`. The returned objective
/// never exceeds the initial one.
pub fn fit_latent(
    points: &PointCloud,
    init: &ShapeLatent,
    basis: &ShapeBasis,
    cfg: &RefineConfig,
) -> Result<ShapeLatent> {
    check_points(points.len())?;
    if points.frame() != Frame::ObjectNormalized {
        return Err(Error::invalid("fit_latent expects object-normalized points"));
    }
    if init.len() != basis.len() {
        return Err(Error::invalid("latent dimension does not match the basis"));
    }
    let table = Table::new(points.points(), basis);
    let reg = cfg.latent_reg;
    let mut z = init.clone();
    let mut f = table.objective(&z, reg);
    if !f.is_finite() {
        return Err(Error::RefinementDiverged);
    }
    let mut alpha = None;
    for _ in 0..cfg.latent_iters {
        let g = table.gradient(&z, reg);
        let gn2: f64 = g.iter().map(|x| x * x).sum();
        if gn2.sqrt() < 1e-6 {
            break;
        }
        let mut a = alpha.unwrap_or(cfg.step_latent / gn2.sqrt());
        let mut accepted = None;
        for _ in 0..50 {
            let raw: Vec<f64> = z.raw().iter().zip(&g).map(|(r, gk)| r - a * gk).collect();
            let cand = ShapeLatent::new(raw);
            let fc = table.objective(&cand, reg);
            if fc <= f - ARMIJO * a * gn2 {
                accepted = Some((cand, fc));
                break;
            }
            a *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                z = cand;
                f = fc;
                alpha = Some(a * 2.0);
            }
            None => break,
        }
    }
    Ok(z)
}
