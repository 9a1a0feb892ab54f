//! Rotation codebook: depth-map descriptors for every grid bin, cosine
//! queries and the Gaussian observation likelihood built on them.

mod encode;
mod io;
mod likelihood;

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use encode::{encode, Code, ENCODER_CELLS};
pub use likelihood::{likelihoods, DEFAULT_FLOOR, DEFAULT_SIGMA};

use crate::error::{Error, Result};
use crate::geometry::RotationGrid;
use crate::render::{render_normalized, NormalizedDepthMap, RenderConfig};
use crate::shape::{ShapeBasis, ShapeLatent};

/// What a codebook was built from; persisted as the file trailer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookMeta {
    pub category: String,
    pub latent: ShapeLatent,
    pub render: RenderConfig,
    pub grid_step_deg: u32,
    pub encoder_cells: usize,
}

/// One unit descriptor (or the zero code) per rotation-grid bin.
#[derive(Clone, Debug)]
pub struct Codebook {
    grid: RotationGrid,
    codes: Array2<f64>,
    meta: CodebookMeta,
}

/// Render and encode the canonical shape at every bin of `grid`.
pub fn build_codebook(
    basis: &ShapeBasis,
    latent: &ShapeLatent,
    grid: &RotationGrid,
    render: &RenderConfig,
) -> Result<Codebook> {
    if grid.is_empty() {
        return Err(Error::invalid("rotation grid is empty"));
    }
    render.validate()?;
    let dim = ENCODER_CELLS * ENCODER_CELLS;
    let render_bin = |j: usize| {
        render_normalized(basis, latent, grid.rotation(j), render).map_err(|e| Error::CodebookBin {
            bin: j,
            source: Box::new(e),
        })
    };
    let encode_bin = |j: usize, m: &NormalizedDepthMap| {
        encode(m).map_err(|e| Error::CodebookBin {
            bin: j,
            source: Box::new(e),
        })
    };
    let rows: Vec<Code> = if quarter_turns_exact(grid, render) {
        // Bins a quarter turn apart in-plane see the same image rotated by
        // 90° about the crop center, which permutes pixels exactly.
        let (n_az, n_el, n_ip) = grid.shape();
        let quarter = n_ip / 4;
        let bases: Vec<(usize, usize, usize)> = (0..n_az)
            .flat_map(|a| (0..n_el).flat_map(move |e| (0..quarter).map(move |i| (a, e, i))))
            .collect();
        let groups = bases
            .par_iter()
            .map(|&(a, e, i)| {
                let mut map = render_bin(grid.index_of(a, e, i).expect("in range"))?;
                let mut out = Vec::with_capacity(4);
                for r in 0..4 {
                    let j = grid.index_of(a, e, i + r * quarter).expect("in range");
                    if r > 0 {
                        map = rotate_quarter(&map);
                    }
                    out.push((j, encode_bin(j, &map)?));
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rows = vec![Code::zeros(dim); grid.len()];
        for (j, code) in groups.into_iter().flatten() {
            rows[j] = code;
        }
        rows
    } else {
        (0..grid.len())
            .into_par_iter()
            .map(|j| encode_bin(j, &render_bin(j)?))
            .collect::<Result<_>>()?
    };
    let mut codes = Array2::zeros((rows.len(), dim));
    for (mut row, code) in codes.axis_iter_mut(Axis(0)).zip(&rows) {
        row.assign(&ArrayView1::from(code.as_slice()));
    }
    Ok(Codebook {
        grid: grid.clone(),
        codes,
        meta: CodebookMeta {
            category: basis.name().to_string(),
            latent: latent.clone(),
            render: *render,
            grid_step_deg: grid.step_deg(),
            encoder_cells: ENCODER_CELLS,
        },
    })
}

/// Whether an in-plane quarter turn maps the canonical crop onto itself
/// pixel for pixel: the crop is the whole square reference image, sampled
/// once per pixel, and the grid has in-plane bins at multiples of 90°.
fn quarter_turns_exact(grid: &RotationGrid, render: &RenderConfig) -> bool {
    let intr = render.reference_intrinsics();
    90 % grid.step_deg() == 0
        && render.crop_px.fract() == 0.0
        && intr.width == render.resolution
        && intr.fx == intr.fy
}

/// The map of an object turned 90° about the optical axis.
fn rotate_quarter(m: &NormalizedDepthMap) -> NormalizedDepthMap {
    let n = m.resolution();
    let data = (0..n * n).map(|k| m.get(k / n, n - 1 - k % n)).collect();
    NormalizedDepthMap::from_vec(n, data).expect("same resolution")
}

impl Codebook {
    pub(crate) fn from_parts(grid: RotationGrid, codes: Array2<f64>, meta: CodebookMeta) -> Result<Self> {
        if codes.nrows() != grid.len() {
            return Err(Error::Format {
                what: "codebook",
                detail: format!("{} rows for a {}-bin grid", codes.nrows(), grid.len()),
            });
        }
        Ok(Self { grid, codes, meta })
    }

    pub fn grid(&self) -> &RotationGrid {
        &self.grid
    }

    pub fn meta(&self) -> &CodebookMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.codes.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.codes.ncols()
    }

    pub fn codes(&self) -> &Array2<f64> {
        &self.codes
    }

    pub fn code(&self, j: usize) -> Code {
        Code::from_unit(self.codes.row(j).to_vec())
    }

    /// Cosine similarity of `code` against every row.
    pub fn query(&self, code: &Code) -> Result<Vec<f64>> {
        self.check_dim(code)?;
        if code.is_zero() {
            return Ok(vec![0.0; self.len()]);
        }
        let v = ArrayView1::from(code.as_slice());
        Ok(self.codes.dot(&v).iter().map(|s| s.clamp(-1.0, 1.0)).collect())
    }

    /// Similarities for many codes at once; row `i` answers `codes[i]`.
    pub fn query_batch(&self, codes: &[Code]) -> Result<Array2<f64>> {
        let mut q = Array2::zeros((codes.len(), self.dim()));
        for (mut row, c) in q.axis_iter_mut(Axis(0)).zip(codes) {
            self.check_dim(c)?;
            row.assign(&ArrayView1::from(c.as_slice()));
        }
        let mut sims = q.dot(&self.codes.t());
        sims.mapv_inplace(|s| s.clamp(-1.0, 1.0));
        Ok(sims)
    }

    fn check_dim(&self, code: &Code) -> Result<()> {
        if code.dim() != self.dim() {
            return Err(Error::invalid(format!(
                "code has {} dimensions, codebook has {}",
                code.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}
