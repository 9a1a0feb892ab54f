use nalgebra::{UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::raster::DepthImage;
use crate::shape::{ShapeBasis, ShapeLatent};

type V3 = Vector3<f64>;

/// Sphere-tracing step budget per pixel.
pub const MAX_STEPS: usize = 128;
/// Hit threshold as a fraction of the object size.
const HIT_TOL: f64 = 1e-4;
/// Over-relaxation factor of the sphere tracer.
const OMEGA: f64 = 1.6;
/// Closest allowed approach of the object to the camera center, meters.
const NEAR_PLANE: f64 = 0.01;

/// Render the depth of a posed, scaled latent shape.
///
/// Pixels whose ray never comes within `1e-4 · size` of the surface inside
/// the step budget are left at 0. Only pixels under the projection of the
/// object's bounding sphere are traced.
pub fn render_depth(
    basis: &ShapeBasis,
    latent: &ShapeLatent,
    pose: &Pose,
    size: f64,
    intr: &CameraIntrinsics,
) -> Result<DepthImage> {
    if !(size > 0.0) {
        return Err(Error::invalid(format!("size must be positive, got {size}")));
    }
    let t = pose.translation;
    if !(t.z - size / 2.0 > NEAR_PLANE) {
        return Err(Error::ObjectBehindCamera);
    }
    // Every element lies inside the radius-0.5 ball in normalized units.
    let radius = 0.5 * size * 1.001;
    let mut img = DepthImage::zeros(intr.width, intr.height);
    let Some((u0, u1, v0, v1)) = pixel_window(&t, radius, intr) else {
        return Ok(img);
    };
    let inv_rot = pose.rotation.inverse();
    for v in v0..=v1 {
        for u in u0..=u1 {
            let ray = intr.ray(u as f64, v as f64);
            let dir = ray.normalize();
            let Some((t0, t1)) = sphere_hit(&dir, &t, radius) else {
                continue;
            };
            if let Some(s) = trace(basis, latent, &dir, &t, &inv_rot, size, t0.max(0.0), t1) {
                img.set(u, v, (s * dir.z) as f32);
            }
        }
    }
    Ok(img)
}

/// Over-relaxed sphere tracing: steps are stretched by `OMEGA` and undone
/// whenever the two unbounding spheres stop overlapping, which keeps the
/// plain tracer's guarantee of finding the first hit.
#[allow(clippy::too_many_arguments)]
fn trace(
    basis: &ShapeBasis,
    latent: &ShapeLatent,
    dir: &V3,
    t: &V3,
    inv_rot: &UnitQuaternion<f64>,
    size: f64,
    start: f64,
    end: f64,
) -> Option<f64> {
    let field = |s: f64| size * basis.sdf(latent, &(inv_rot * (dir * s - t) / size));
    let tol = HIT_TOL * size;
    let mut omega = OMEGA;
    let (mut s, mut step, mut prev) = (start, 0.0, 0.0f64);
    for _ in 0..MAX_STEPS {
        let d = field(s);
        let failed = omega > 1.0 && d.abs() + prev < step;
        if failed {
            s -= step;
            omega = 1.0;
            step = 0.0;
            prev = 0.0;
            continue;
        }
        if d.abs() < tol {
            return Some(polish(&field, s, d, size));
        }
        step = d * omega;
        prev = d.abs();
        s += step;
        if s > end {
            return None;
        }
    }
    None
}

/// Secant iterations past the hit threshold so stored depths sit on the
/// surface to float precision.
fn polish(field: &impl Fn(f64) -> f64, mut s: f64, mut d: f64, size: f64) -> f64 {
    let mut next = s + d;
    for _ in 0..8 {
        if d.abs() < 1e-10 * size {
            break;
        }
        let nd = field(next);
        if !(nd.abs() < d.abs()) {
            break;
        }
        let slope = (nd - d) / (next - s);
        s = next;
        d = nd;
        next = if slope.abs() > 1e-3 { s - d / slope } else { s + d };
    }
    s
}

/// Entry and exit distances of a unit ray from the origin through a sphere.
fn sphere_hit(dir: &V3, center: &V3, radius: f64) -> Option<(f64, f64)> {
    let b = dir.dot(center);
    let c = center.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let r = disc.sqrt();
    let t1 = b + r;
    (t1 > 0.0).then_some((b - r, t1))
}

/// Conservative pixel bounds of a sphere in front of the camera.
fn pixel_window(t: &V3, radius: f64, intr: &CameraIntrinsics) -> Option<(usize, usize, usize, usize)> {
    let (zn, zf) = (t.z - radius, t.z + radius);
    let ext = |c: f64, f: f64, pc: f64| {
        let cands = [(c - radius) / zn, (c - radius) / zf, (c + radius) / zn, (c + radius) / zf];
        let lo = cands.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = cands.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (f * lo + pc, f * hi + pc)
    };
    let (ul, uh) = ext(t.x, intr.fx, intr.cx);
    let (vl, vh) = ext(t.y, intr.fy, intr.cy);
    let clamp = |lo: f64, hi: f64, n: usize| -> Option<(usize, usize)> {
        let lo = lo.floor().max(0.0);
        let hi = hi.ceil().min(n as f64 - 1.0);
        (lo <= hi).then(|| (lo as usize, hi as usize))
    };
    let (u0, u1) = clamp(ul, uh, intr.width)?;
    let (v0, v1) = clamp(vl, vh, intr.height)?;
    Some((u0, u1, v0, v1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{backproject, normalize_points};
    use crate::shape::{Part, Primitive};

    fn sphere_basis() -> ShapeBasis {
        ShapeBasis::from_parts(
            "spheres",
            vec![
                Part::new(Primitive::Sphere { radius: 1.0 }),
                Part::new(Primitive::Box {
                    half_extents: [1.0, 1.0, 1.0],
                }),
            ],
        )
        .unwrap()
    }

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn principal_point_depth_matches_ray_sphere_intersection() {
        let b = sphere_basis();
        let l = ShapeLatent::one_hot(2, 0, 60.0);
        let s = 0.3;
        let pose = Pose::from_translation(V3::new(0.0, 0.0, 1.0));
        let img = render_depth(&b, &l, &pose, s, &intr()).unwrap();
        let expected = 1.0 - s / (2.0 * 3f64.sqrt());
        let got = img.get(320, 240) as f64;
        assert!((got - expected).abs() < 1e-4 * s + 1e-6, "{got} vs {expected}");
        // Corner rays miss.
        assert_eq!(img.get(0, 0), 0.0);
    }

    #[test]
    fn silhouette_shrinks_with_distance() {
        let b = ShapeBasis::category("camera").unwrap();
        let l = b.canonical_latent();
        let counts: Vec<usize> = [0.8, 1.0, 1.2]
            .iter()
            .map(|&z| {
                let pose = Pose::from_translation(V3::new(0.02, -0.01, z));
                render_depth(&b, &l, &pose, 0.2, &intr()).unwrap().valid_mask().count()
            })
            .collect();
        assert!(counts[0] > counts[1] && counts[1] > counts[2], "{counts:?}");
    }

    #[test]
    fn rejects_objects_at_the_camera() {
        let b = sphere_basis();
        let l = b.canonical_latent();
        let pose = Pose::from_translation(V3::new(0.0, 0.0, 0.1));
        assert!(matches!(
            render_depth(&b, &l, &pose, 0.2, &intr()),
            Err(Error::ObjectBehindCamera)
        ));
    }

    #[test]
    fn hits_lie_on_the_surface() {
        let b = ShapeBasis::category("mug").unwrap();
        let l = crate::shape::ShapeLatent::new(vec![0.5, 0.1, -0.2, 0.3]);
        let pose = Pose::new(
            nalgebra::UnitQuaternion::from_euler_angles(0.4, -0.3, 1.1),
            V3::new(0.05, 0.03, 0.9),
        );
        let s = 0.17;
        let img = render_depth(&b, &l, &pose, s, &intr()).unwrap();
        let cloud = backproject(&img, &img.valid_mask(), &intr()).unwrap();
        assert!(cloud.len() > 1000);
        let norm = normalize_points(&cloud, &pose, s).unwrap();
        for q in norm.points() {
            assert!((s * b.sdf(&l, q)).abs() < 1e-3 * s);
        }
    }
}
