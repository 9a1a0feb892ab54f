use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::primitive::{Node, Part};
use crate::error::{Error, Result};

type V3 = Vector3<f64>;

/// A basis element: a placed primitive rescaled so that its axis-aligned
/// bounding box is centered on the origin with a diagonal of exactly 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeElement {
    name: String,
    part: Part,
    node: Node,
    /// Bounding-box center of the raw part.
    center: V3,
    /// Raw bounding-box diagonal; normalized coordinates are `raw / diag`.
    diag: f64,
}

impl ShapeElement {
    pub fn new(name: impl Into<String>, part: Part) -> Result<Self> {
        part.validate().map_err(Error::InvalidArgument)?;
        let (lo, hi) = (
            -V3::from_fn(|i, _| part.support(&-unit(i))),
            V3::from_fn(|i, _| part.support(&unit(i))),
        );
        let diag = (hi - lo).norm();
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::invalid("degenerate primitive bounds"));
        }
        Ok(Self {
            name: name.into(),
            node: Node::compile(&part),
            part,
            center: (lo + hi) / 2.0,
            diag,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn part(&self) -> &Part {
        &self.part
    }

    #[inline]
    fn to_raw(&self, x: &V3) -> V3 {
        x * self.diag + self.center
    }

    #[inline]
    pub fn value(&self, x: &V3) -> f64 {
        self.node.value(&self.to_raw(x)) / self.diag
    }

    #[inline]
    pub fn eval(&self, x: &V3) -> (f64, V3) {
        let (d, g) = self.node.eval(&self.to_raw(x));
        (d / self.diag, g)
    }

    pub fn kink_distance(&self, x: &V3) -> f64 {
        self.node.kink_distance(&self.to_raw(x)) / self.diag
    }

    /// Normalized axis-aligned bounds; the diagonal is 1 by construction.
    pub fn bounds(&self) -> (V3, V3) {
        let lo = -V3::from_fn(|i, _| self.part.support(&-unit(i)));
        let hi = V3::from_fn(|i, _| self.part.support(&unit(i)));
        ((lo - self.center) / self.diag, (hi - self.center) / self.diag)
    }
}

fn unit(i: usize) -> V3 {
    let mut e = V3::zeros();
    e[i] = 1.0;
    e
}

/// Serializable description of one category: its primitive list plus the
/// priors the tracker needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    /// Size prior `s0` (bounding-box diagonal), meters.
    pub size_prior: f64,
    /// Width `Δs` of the uniform size prior, meters.
    pub size_range: f64,
    /// Object-frame axis of rotational symmetry, if any.
    #[serde(default)]
    pub symmetry_axis: Option<[f64; 3]>,
    pub elements: Vec<ElementSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementSpec {
    pub name: String,
    #[serde(flatten)]
    pub part: Part,
}

/// A category's shape space: `B ≥ 2` normalized elements blended by a
/// softmax-weighted latent.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeBasis {
    spec: CategorySpec,
    elements: Vec<ShapeElement>,
}

const SHIPPED: &str = include_str!("../../assets/categories.json");

impl ShapeBasis {
    pub fn from_spec(spec: CategorySpec) -> Result<Self> {
        if spec.elements.len() < 2 {
            return Err(Error::invalid(format!(
                "category {} needs at least two elements",
                spec.name
            )));
        }
        if !(spec.size_prior > 0.0 && spec.size_range > 0.0) {
            return Err(Error::invalid("size prior and range must be positive"));
        }
        let elements = spec
            .elements
            .iter()
            .map(|e| ShapeElement::new(e.name.clone(), e.part.clone()))
            .collect::<Result<_>>()?;
        Ok(Self { spec, elements })
    }

    /// Build from bare parts with default priors (handy in tests).
    pub fn from_parts(category: &str, parts: Vec<Part>) -> Result<Self> {
        let elements = parts
            .into_iter()
            .enumerate()
            .map(|(i, part)| ElementSpec {
                name: format!("{category}-{i}"),
                part,
            })
            .collect();
        Self::from_spec(CategorySpec {
            name: category.to_string(),
            size_prior: 0.2,
            size_range: 0.1,
            symmetry_axis: None,
            elements,
        })
    }

    /// All shipped category specs.
    pub fn shipped_specs() -> Vec<CategorySpec> {
        serde_json::from_str(SHIPPED).expect("shipped category file is valid")
    }

    pub fn shipped_categories() -> Vec<String> {
        Self::shipped_specs().into_iter().map(|s| s.name).collect()
    }

    /// One of the shipped categories: bottle, bowl, camera, can, laptop, mug.
    pub fn category(name: &str) -> Result<Self> {
        let spec = Self::shipped_specs()
            .into_iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::invalid(format!("unknown category {name:?}")))?;
        Self::from_spec(spec)
    }

    /// Load every category from a JSON file holding an array of specs.
    pub fn load_all(path: &std::path::Path) -> Result<Vec<Self>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let specs: Vec<CategorySpec> = serde_json::from_str(&text)?;
        specs.into_iter().map(Self::from_spec).collect()
    }

    pub fn spec(&self) -> &CategorySpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[ShapeElement] {
        &self.elements
    }

    pub fn symmetry_axis(&self) -> Option<V3> {
        self.spec.symmetry_axis.map(V3::from)
    }

    fn check(&self, latent: &ShapeLatent) {
        assert_eq!(
            latent.len(),
            self.elements.len(),
            "latent dimension does not match the basis"
        );
    }

    /// Blended signed distance `Σ wᵢ SDFᵢ(x)`.
    #[inline]
    pub fn sdf(&self, latent: &ShapeLatent, x: &V3) -> f64 {
        self.check(latent);
        self.elements
            .iter()
            .zip(latent.weights())
            .map(|(e, w)| w * e.value(x))
            .sum()
    }

    /// Blended signed distance and its spatial gradient.
    #[inline]
    pub fn sdf_grad(&self, latent: &ShapeLatent, x: &V3) -> (f64, V3) {
        self.check(latent);
        let mut d = 0.0;
        let mut g = V3::zeros();
        for (e, w) in self.elements.iter().zip(latent.weights()) {
            let (di, gi) = e.eval(x);
            d += w * di;
            g += gi * *w;
        }
        (d, g)
    }

    /// Per-element values and gradients at `x`, written into the buffers.
    pub fn element_evals(&self, x: &V3, values: &mut [f64], grads: &mut [V3]) {
        for (i, e) in self.elements.iter().enumerate() {
            let (d, g) = e.eval(x);
            values[i] = d;
            grads[i] = g;
        }
    }

    /// Distance from `x` to the nearest gradient discontinuity of any element.
    pub fn kink_distance(&self, x: &V3) -> f64 {
        self.elements
            .iter()
            .map(|e| e.kink_distance(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Latent that puts almost all weight on element 0, the category's
    /// designated canonical shape.
    pub fn canonical_latent(&self) -> ShapeLatent {
        ShapeLatent::one_hot(self.len(), 0, 10.0)
    }

    /// Uniform weights.
    pub fn uniform_latent(&self) -> ShapeLatent {
        ShapeLatent::new(vec![0.0; self.len()])
    }
}

/// Unconstrained shape code; the blend weights are `softmax(raw)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "LatentRepr", into = "LatentRepr")]
pub struct ShapeLatent {
    raw: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LatentRepr {
    raw: Vec<f64>,
}

impl From<LatentRepr> for ShapeLatent {
    fn from(r: LatentRepr) -> Self {
        ShapeLatent::new(r.raw)
    }
}

impl From<ShapeLatent> for LatentRepr {
    fn from(l: ShapeLatent) -> Self {
        LatentRepr { raw: l.raw }
    }
}

impl ShapeLatent {
    pub fn new(raw: Vec<f64>) -> Self {
        let weights = softmax(&raw);
        Self { raw, weights }
    }

    /// `raw = scale · e_index`.
    pub fn one_hot(len: usize, index: usize, scale: f64) -> Self {
        let mut raw = vec![0.0; len];
        raw[index] = scale;
        Self::new(raw)
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw_norm_sq(&self) -> f64 {
        self.raw.iter().map(|r| r * r).sum()
    }
}

fn softmax(raw: &[f64]) -> Vec<f64> {
    let m = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = raw.iter().map(|r| (r - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}
