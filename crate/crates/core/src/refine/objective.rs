use nalgebra::Vector3;

use super::Loss;
use crate::geometry::Pose;
use crate::shape::{ShapeBasis, ShapeLatent};

type V3 = Vector3<f64>;

/// Gradient of [`pose_objective`] with respect to translation, a
/// left-multiplied axis-angle rotation increment, size, and the raw latent.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseGradient {
    pub translation: V3,
    pub rotation: V3,
    pub size: f64,
    pub latent: Vec<f64>,
}

pub(crate) fn rho(r: f64, delta: f64, loss: Loss) -> (f64, f64) {
    match loss {
        Loss::L1 => (r.abs(), if r > 0.0 { 1.0 } else if r < 0.0 { -1.0 } else { 0.0 }),
        Loss::Huber => {
            if r.abs() <= delta {
                (r * r / (2.0 * delta), r / delta)
            } else {
                (r.abs() - delta / 2.0, r.signum())
            }
        }
    }
}

/// Mean robust SDF residual of camera-frame points:
/// `(1/n) Σ ρ(s · sdf(Rᵀ(p − T)/s))` with `ρ` Huber(`delta`, meters) or L1.
pub fn pose_objective(
    points: &[V3],
    basis: &ShapeBasis,
    latent: &ShapeLatent,
    pose: &Pose,
    size: f64,
    delta: f64,
    loss: Loss,
) -> f64 {
    let inv = 1.0 / size;
    let total: f64 = points
        .iter()
        .map(|p| {
            let q = pose.inverse_transform_point(p) * inv;
            rho(size * basis.sdf(latent, &q), delta, loss).0
        })
        .sum();
    total / points.len() as f64
}

/// [`pose_objective`] and its full gradient.
///
/// With `v = p − T`, `g` the object-frame SDF gradient and `g_c = R g`, the
/// residual `r = s · sdf(q)` has `∂r/∂T = −g_c`, `∂r/∂ω = g_c × v`,
/// `∂r/∂s = sdf − g·q` and `∂r/∂rawₖ = s wₖ (sdfₖ − sdf)`.
pub fn pose_objective_grad(
    points: &[V3],
    basis: &ShapeBasis,
    latent: &ShapeLatent,
    pose: &Pose,
    size: f64,
    delta: f64,
    loss: Loss,
) -> (f64, PoseGradient) {
    let b = basis.len();
    let w = latent.weights();
    let inv = 1.0 / size;
    let mut values = vec![0.0; b];
    let mut grads = vec![V3::zeros(); b];
    let mut f = 0.0;
    let mut out = PoseGradient {
        translation: V3::zeros(),
        rotation: V3::zeros(),
        size: 0.0,
        latent: vec![0.0; b],
    };
    for p in points {
        let v = p - pose.translation;
        let q = pose.rotation.inverse_transform_vector(&v) * inv;
        basis.element_evals(&q, &mut values, &mut grads);
        let sdf: f64 = values.iter().zip(w).map(|(d, wk)| d * wk).sum();
        let g: V3 = grads.iter().zip(w).fold(V3::zeros(), |acc, (gk, wk)| acc + gk * *wk);
        let (r_loss, dr) = rho(size * sdf, delta, loss);
        f += r_loss;
        let gc = pose.rotation * g;
        out.translation -= gc * dr;
        out.rotation += gc.cross(&v) * dr;
        out.size += (sdf - g.dot(&q)) * dr;
        for k in 0..b {
            out.latent[k] += size * w[k] * (values[k] - sdf) * dr;
        }
    }
    let n = points.len() as f64;
    out.translation /= n;
    out.rotation /= n;
    out.size /= n;
    out.latent.iter_mut().for_each(|x| *x /= n);
    (f / n, out)
}
