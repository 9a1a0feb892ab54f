use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, UnitBall, UnitSphere};

use super::basis::{ShapeBasis, ShapeLatent};
use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud};
use crate::rng;

type V3 = Vector3<f64>;

const SURFACE_TOL: f64 = 1e-4;
const MAX_MARCH: usize = 256;

/// Sample `n` points on the zero level set of the blended field.
///
/// Rays start on the radius-1 sphere enclosing every element and aim at a
/// random point near the origin; each ray is sphere-traced to the surface and
/// the hit is polished with Newton projections along the gradient. Rays that
/// miss are redrawn.
pub fn decode_surface(
    basis: &ShapeBasis,
    latent: &ShapeLatent,
    n: usize,
    seed: u64,
) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("point count must be positive"));
    }
    let mut rng = rng::stream(seed, 0x5afe);
    let mut points = Vec::with_capacity(n);
    let budget = 200 * n + 1000;
    for _ in 0..budget {
        if points.len() == n {
            break;
        }
        let origin = V3::from(UnitSphere.sample(&mut rng));
        let target = V3::from(UnitBall.sample(&mut rng)) * rng.random_range(0.0..0.3);
        let dir = (target - origin).normalize();
        if let Some(p) = trace(basis, latent, &origin, &dir).and_then(|p| polish(basis, latent, p)) {
            points.push(p);
        }
    }
    if points.len() < n {
        return Err(Error::SurfaceExtraction {
            found: points.len(),
            wanted: n,
        });
    }
    Ok(PointCloud::new(points, Frame::ObjectNormalized))
}

fn trace(basis: &ShapeBasis, latent: &ShapeLatent, origin: &V3, dir: &V3) -> Option<V3> {
    let mut t = 0.0;
    for _ in 0..MAX_MARCH {
        let p = origin + dir * t;
        let d = basis.sdf(latent, &p);
        if d.abs() < 1e-7 {
            return Some(p);
        }
        t += d;
        if t > 2.0 || t < -0.5 {
            return None;
        }
    }
    None
}

fn polish(basis: &ShapeBasis, latent: &ShapeLatent, mut p: V3) -> Option<V3> {
    for _ in 0..20 {
        let (d, g) = basis.sdf_grad(latent, &p);
        if d.abs() < 1e-10 {
            break;
        }
        let gg = g.norm_squared();
        if gg < 1e-12 {
            return None;
        }
        p -= g * (d / gg);
    }
    (basis.sdf(latent, &p).abs() < SURFACE_TOL && p.norm() < 1.0).then_some(p)
}
