//! Exact signed distance functions with closed-form gradients.
//!
//! Every primitive is defined in its own local frame with its axis (for
//! cylinders and capsules) along `+z`. [`Part`] places a primitive with a
//! rigid transform; [`Primitive::Union`] combines parts with `min`.

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

type V3 = Vector3<f64>;

/// Returned as the kink distance where a field is smooth.
const SMOOTH: f64 = f64::INFINITY;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Sphere {
        radius: f64,
    },
    Box {
        half_extents: [f64; 3],
    },
    /// Outer half extents; edges rounded with `radius`.
    RoundedBox {
        half_extents: [f64; 3],
        radius: f64,
    },
    /// Capped cylinder along `z`.
    Cylinder {
        radius: f64,
        half_height: f64,
    },
    /// Segment `z ∈ [-half_height, half_height]` inflated by `radius`.
    Capsule {
        radius: f64,
        half_height: f64,
    },
    Union {
        parts: Vec<Part>,
    },
}

/// A primitive placed in its parent frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Part {
    #[serde(flatten)]
    pub primitive: Primitive,
    #[serde(default)]
    pub center: [f64; 3],
    /// Roll, pitch, yaw in degrees (nalgebra's `from_euler_angles` order).
    #[serde(default)]
    pub rotation_deg: [f64; 3],
}

impl Part {
    pub fn new(primitive: Primitive) -> Self {
        Self {
            primitive,
            center: [0.0; 3],
            rotation_deg: [0.0; 3],
        }
    }

    pub fn at(mut self, x: f64, y: f64, z: f64) -> Self {
        self.center = [x, y, z];
        self
    }

    pub fn rotated(mut self, roll: f64, pitch: f64, yaw: f64) -> Self {
        self.rotation_deg = [roll, pitch, yaw];
        self
    }

    pub(crate) fn rotation(&self) -> UnitQuaternion<f64> {
        let [r, p, y] = self.rotation_deg;
        UnitQuaternion::from_euler_angles(r.to_radians(), p.to_radians(), y.to_radians())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.primitive.validate()
    }
}

impl Primitive {
    pub fn validate(&self) -> Result<(), String> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let ok = match self {
            Primitive::Sphere { radius } => pos(*radius),
            Primitive::Box { half_extents } => half_extents.iter().all(|h| pos(*h)),
            Primitive::RoundedBox {
                half_extents,
                radius,
            } => pos(*radius) && half_extents.iter().all(|h| pos(*h) && h > radius),
            Primitive::Cylinder {
                radius,
                half_height,
            } => pos(*radius) && pos(*half_height),
            Primitive::Capsule {
                radius,
                half_height,
            } => pos(*radius) && half_height.is_finite() && *half_height >= 0.0,
            Primitive::Union { parts } => {
                if parts.is_empty() {
                    return Err("union needs at least one part".into());
                }
                return parts.iter().try_for_each(Part::validate);
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid primitive parameters: {self:?}"))
        }
    }

    /// Signed distance and its gradient at `p`.
    pub fn eval(&self, p: &V3) -> (f64, V3) {
        match self {
            Primitive::Sphere { radius } => sphere(p, *radius),
            Primitive::Box { half_extents } => box_sdf(p, &V3::from(*half_extents), 0.0),
            Primitive::RoundedBox {
                half_extents,
                radius,
            } => box_sdf(p, &V3::from(*half_extents), *radius),
            Primitive::Cylinder {
                radius,
                half_height,
            } => cylinder(p, *radius, *half_height),
            Primitive::Capsule {
                radius,
                half_height,
            } => capsule(p, *radius, *half_height),
            Primitive::Union { parts } => {
                let mut best = (f64::INFINITY, V3::z());
                for part in parts {
                    let (d, g) = part.eval(p);
                    if d < best.0 {
                        best = (d, g);
                    }
                }
                best
            }
        }
    }

    /// Signed distance only.
    pub fn value(&self, p: &V3) -> f64 {
        match self {
            Primitive::Sphere { radius } => p.norm() - radius,
            Primitive::Box { half_extents } => box_value(p, &V3::from(*half_extents), 0.0),
            Primitive::RoundedBox {
                half_extents,
                radius,
            } => box_value(p, &V3::from(*half_extents), *radius),
            Primitive::Cylinder {
                radius,
                half_height,
            } => {
                let dr = p.xy().norm() - radius;
                let dz = p.z.abs() - half_height;
                dr.max(dz).min(0.0) + (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt()
            }
            Primitive::Capsule {
                radius,
                half_height,
            } => {
                let c = p.z.clamp(-half_height, *half_height);
                (p - V3::new(0.0, 0.0, c)).norm() - radius
            }
            Primitive::Union { parts } => parts
                .iter()
                .map(|part| part.value(p))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Lower bound on how far `p` is from a locus where the gradient is
    /// discontinuous (medial surfaces of boxes and cylinders, sphere
    /// centers, capsule spines, union seams). Infinite where the field is
    /// smooth everywhere nearby.
    pub fn kink_distance(&self, p: &V3) -> f64 {
        match self {
            Primitive::Sphere { .. } => p.norm(),
            Primitive::Box { half_extents } => box_kink(p, &V3::from(*half_extents), 0.0),
            Primitive::RoundedBox {
                half_extents,
                radius,
            } => box_kink(p, &V3::from(*half_extents), *radius),
            Primitive::Cylinder {
                radius,
                half_height,
            } => {
                let r = p.xy().norm();
                let dr = r - radius;
                let dz = p.z.abs() - half_height;
                if dr > 0.0 || dz > 0.0 {
                    SMOOTH
                } else if dr > dz {
                    (dr - dz).min(r) / std::f64::consts::SQRT_2
                } else {
                    ((dz - dr) / std::f64::consts::SQRT_2).min(p.z.abs())
                }
            }
            Primitive::Capsule {
                radius: _,
                half_height,
            } => {
                let c = p.z.clamp(-half_height, *half_height);
                (p - V3::new(0.0, 0.0, c)).norm()
            }
            Primitive::Union { parts } => {
                let mut vals: Vec<(f64, &Part)> = parts.iter().map(|q| (q.value(p), q)).collect();
                vals.sort_by(|a, b| a.0.total_cmp(&b.0));
                let seam = if vals.len() > 1 {
                    (vals[1].0 - vals[0].0) / 2.0
                } else {
                    SMOOTH
                };
                seam.min(vals[0].1.kink_distance(p))
            }
        }
    }

    /// Support function `max_{x ∈ shape} d·x` for a unit direction `d`.
    pub fn support(&self, d: &V3) -> f64 {
        match self {
            Primitive::Sphere { radius } => radius * d.norm(),
            Primitive::Box { half_extents } => V3::from(*half_extents).dot(&d.abs()),
            Primitive::RoundedBox {
                half_extents,
                radius,
            } => (V3::from(*half_extents) - V3::repeat(*radius)).dot(&d.abs()) + radius * d.norm(),
            Primitive::Cylinder {
                radius,
                half_height,
            } => radius * d.xy().norm() + half_height * d.z.abs(),
            Primitive::Capsule {
                radius,
                half_height,
            } => half_height * d.z.abs() + radius * d.norm(),
            Primitive::Union { parts } => parts
                .iter()
                .map(|q| q.support(d))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Axis-aligned bounding box `(min, max)` from the support function.
    pub fn bounds(&self) -> (V3, V3) {
        let mut lo = V3::zeros();
        let mut hi = V3::zeros();
        for i in 0..3 {
            let mut e = V3::zeros();
            e[i] = 1.0;
            hi[i] = self.support(&e);
            lo[i] = -self.support(&(-e));
        }
        (lo, hi)
    }
}

impl Part {
    fn to_local(&self, p: &V3) -> (UnitQuaternion<f64>, V3) {
        let r = self.rotation();
        (r, r.inverse_transform_vector(&(p - V3::from(self.center))))
    }

    pub fn eval(&self, p: &V3) -> (f64, V3) {
        let (r, local) = self.to_local(p);
        let (d, g) = self.primitive.eval(&local);
        (d, r * g)
    }

    pub fn value(&self, p: &V3) -> f64 {
        self.primitive.value(&self.to_local(p).1)
    }

    pub fn kink_distance(&self, p: &V3) -> f64 {
        self.primitive.kink_distance(&self.to_local(p).1)
    }

    pub fn support(&self, d: &V3) -> f64 {
        let r = self.rotation();
        V3::from(self.center).dot(d) + self.primitive.support(&r.inverse_transform_vector(d))
    }
}

fn sphere(p: &V3, r: f64) -> (f64, V3) {
    let n = p.norm();
    let g = if n > 0.0 { p / n } else { V3::z() };
    (n - r, g)
}

#[inline]
fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn box_value(p: &V3, h: &V3, r: f64) -> f64 {
    let q = p.abs() - h + V3::repeat(r);
    let outside = q.map(|c| c.max(0.0)).norm();
    let inside = q.max().min(0.0);
    outside + inside - r
}

fn box_sdf(p: &V3, h: &V3, r: f64) -> (f64, V3) {
    let q = p.abs() - h + V3::repeat(r);
    let qp = q.map(|c| c.max(0.0));
    let outside = qp.norm();
    if outside > 0.0 {
        let g = V3::new(sign(p.x) * qp.x, sign(p.y) * qp.y, sign(p.z) * qp.z) / outside;
        (outside - r, g)
    } else {
        let i = q.imax();
        let mut g = V3::zeros();
        g[i] = sign(p[i]);
        (q[i] - r, g)
    }
}

fn box_kink(p: &V3, h: &V3, r: f64) -> f64 {
    let q = p.abs() - h + V3::repeat(r);
    if q.iter().any(|&c| c > 0.0) {
        return SMOOTH;
    }
    let mut s = [q.x, q.y, q.z];
    s.sort_by(|a, b| b.total_cmp(a));
    let i = q.imax();
    ((s[0] - s[1]) / std::f64::consts::SQRT_2).min(p[i].abs())
}

fn cylinder(p: &V3, radius: f64, half_height: f64) -> (f64, V3) {
    let rxy = p.xy().norm();
    let n = if rxy > 0.0 {
        V3::new(p.x / rxy, p.y / rxy, 0.0)
    } else {
        V3::x()
    };
    let dr = rxy - radius;
    let dz = p.z.abs() - half_height;
    let sz = sign(p.z);
    if dr > 0.0 || dz > 0.0 {
        let a = dr.max(0.0);
        let b = dz.max(0.0);
        let len = (a * a + b * b).sqrt();
        (len, (n * a + V3::new(0.0, 0.0, sz * b)) / len)
    } else if dr > dz {
        (dr, n)
    } else {
        (dz, V3::new(0.0, 0.0, sz))
    }
}

fn capsule(p: &V3, radius: f64, half_height: f64) -> (f64, V3) {
    let c = p.z.clamp(-half_height, half_height);
    let v = p - V3::new(0.0, 0.0, c);
    let n = v.norm();
    let g = if n > 0.0 { v / n } else { V3::z() };
    (n - radius, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn all() -> Vec<Primitive> {
        vec![
            Primitive::Sphere { radius: 0.4 },
            Primitive::Box {
                half_extents: [0.3, 0.2, 0.5],
            },
            Primitive::RoundedBox {
                half_extents: [0.3, 0.2, 0.5],
                radius: 0.05,
            },
            Primitive::Cylinder {
                radius: 0.25,
                half_height: 0.4,
            },
            Primitive::Capsule {
                radius: 0.2,
                half_height: 0.3,
            },
            Primitive::Union {
                parts: vec![
                    Part::new(Primitive::Box {
                        half_extents: [0.3, 0.2, 0.2],
                    }),
                    Part::new(Primitive::Cylinder {
                        radius: 0.1,
                        half_height: 0.2,
                    })
                    .at(0.4, 0.05, 0.0)
                    .rotated(0.0, 90.0, 0.0),
                ],
            },
        ]
    }

    #[test]
    fn value_matches_eval_and_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for prim in all() {
            let mut checked = 0;
            while checked < 300 {
                let p = V3::new(
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                );
                let (d, g) = prim.eval(&p);
                assert!((d - prim.value(&p)).abs() < 1e-12, "{prim:?}");
                if prim.kink_distance(&p) < 1e-3 {
                    continue;
                }
                let mut fd = V3::zeros();
                for i in 0..3 {
                    let mut e = V3::zeros();
                    e[i] = h;
                    fd[i] = (prim.value(&(p + e)) - prim.value(&(p - e))) / (2.0 * h);
                }
                assert!((fd - g).norm() < 1e-5, "{prim:?} at {p:?}: {g:?} vs {fd:?}");
                assert!((g.norm() - 1.0).abs() < 1e-9);
                checked += 1;
            }
        }
    }

    #[test]
    fn exact_distance_is_one_lipschitz() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for prim in all() {
            for _ in 0..500 {
                let a = V3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                let b = V3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                assert!((prim.value(&a) - prim.value(&b)).abs() <= (a - b).norm() + 1e-12);
            }
        }
    }

    #[test]
    fn bounds_are_tight_for_axis_aligned_shapes() {
        let (lo, hi) = Primitive::Capsule {
            radius: 0.2,
            half_height: 0.3,
        }
        .bounds();
        assert!((lo - V3::new(-0.2, -0.2, -0.5)).norm() < 1e-12);
        assert!((hi - V3::new(0.2, 0.2, 0.5)).norm() < 1e-12);
        // A cylinder lying along x.
        let part = Part::new(Primitive::Cylinder {
            radius: 0.1,
            half_height: 0.3,
        })
        .at(1.0, 0.0, 0.0)
        .rotated(0.0, 90.0, 0.0);
        let u = Primitive::Union { parts: vec![part] };
        let (lo, hi) = u.bounds();
        assert!((lo - V3::new(0.7, -0.1, -0.1)).norm() < 1e-12, "{lo:?}");
        assert!((hi - V3::new(1.3, 0.1, 0.1)).norm() < 1e-12, "{hi:?}");
    }

    #[test]
    fn validation() {
        assert!(Primitive::Sphere { radius: -1.0 }.validate().is_err());
        assert!(Primitive::Union { parts: vec![] }.validate().is_err());
        assert!(Primitive::RoundedBox {
            half_extents: [0.1, 0.1, 0.1],
            radius: 0.2
        }
        .validate()
        .is_err());
        for p in all() {
            p.validate().unwrap();
        }
    }
}

/// A part tree with rotations precomputed, used on hot paths.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Node {
    Leaf {
        primitive: Primitive,
        center: V3,
        rotation: Option<Rotation3<f64>>,
    },
    Union(Vec<Node>),
}

impl Node {
    pub(crate) fn compile(part: &Part) -> Node {
        let center = V3::from(part.center);
        let rotation = (part.rotation_deg != [0.0; 3]).then(|| part.rotation().to_rotation_matrix());
        match &part.primitive {
            Primitive::Union { parts } if center == V3::zeros() && rotation.is_none() => {
                Node::Union(parts.iter().map(Node::compile).collect())
            }
            Primitive::Union { parts } => {
                // Push the outer transform down to the children.
                let outer = Pose3 { center, rotation };
                Node::Union(parts.iter().map(|p| outer.apply(Node::compile(p))).collect())
            }
            primitive => Node::Leaf {
                primitive: primitive.clone(),
                center,
                rotation,
            },
        }
    }

    #[inline]
    fn local(center: &V3, rotation: &Option<Rotation3<f64>>, p: &V3) -> V3 {
        let v = p - center;
        match rotation {
            Some(r) => r.inverse_transform_vector(&v),
            None => v,
        }
    }

    #[inline]
    pub(crate) fn value(&self, p: &V3) -> f64 {
        match self {
            Node::Leaf {
                primitive,
                center,
                rotation,
            } => primitive.value(&Self::local(center, rotation, p)),
            Node::Union(children) => children
                .iter()
                .map(|c| c.value(p))
                .fold(f64::INFINITY, f64::min),
        }
    }

    #[inline]
    pub(crate) fn eval(&self, p: &V3) -> (f64, V3) {
        match self {
            Node::Leaf {
                primitive,
                center,
                rotation,
            } => {
                let (d, g) = primitive.eval(&Self::local(center, rotation, p));
                match rotation {
                    Some(r) => (d, r * g),
                    None => (d, g),
                }
            }
            Node::Union(children) => {
                let mut best = (f64::INFINITY, V3::z());
                for c in children {
                    let (d, g) = c.eval(p);
                    if d < best.0 {
                        best = (d, g);
                    }
                }
                best
            }
        }
    }

    pub(crate) fn kink_distance(&self, p: &V3) -> f64 {
        match self {
            Node::Leaf {
                primitive,
                center,
                rotation,
            } => primitive.kink_distance(&Self::local(center, rotation, p)),
            Node::Union(children) => {
                let mut vals: Vec<(f64, &Node)> = children.iter().map(|c| (c.value(p), c)).collect();
                vals.sort_by(|a, b| a.0.total_cmp(&b.0));
                let seam = if vals.len() > 1 {
                    (vals[1].0 - vals[0].0) / 2.0
                } else {
                    SMOOTH
                };
                seam.min(vals[0].1.kink_distance(p))
            }
        }
    }
}

struct Pose3 {
    center: V3,
    rotation: Option<Rotation3<f64>>,
}

impl Pose3 {
    fn apply(&self, node: Node) -> Node {
        let r = self.rotation.unwrap_or_else(Rotation3::identity);
        match node {
            Node::Leaf {
                primitive,
                center,
                rotation,
            } => {
                let combined = r * rotation.unwrap_or_else(Rotation3::identity);
                Node::Leaf {
                    primitive,
                    center: r * center + self.center,
                    rotation: (combined.angle() != 0.0).then_some(combined),
                }
            }
            Node::Union(children) => Node::Union(children.into_iter().map(|c| self.apply(c)).collect()),
        }
    }
}
