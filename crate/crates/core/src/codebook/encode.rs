use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::NormalizedDepthMap;

/// Descriptor grid side; codes have `ENCODER_CELLS²` dimensions.
pub const ENCODER_CELLS: usize = 16;

/// Unit-norm descriptor, or all zeros for a featureless map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Code(Vec<f64>);

impl Code {
    pub(crate) fn from_unit(v: Vec<f64>) -> Self {
        Code(v)
    }

    pub fn zeros(dim: usize) -> Self {
        Code(vec![0.0; dim])
    }

    /// Normalize an arbitrary vector; vectors with norm below `1e-8` become
    /// the zero code.
    pub fn normalized(mut v: Vec<f64>) -> Self {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-8 {
            v.iter_mut().for_each(|x| *x = 0.0);
        } else {
            v.iter_mut().for_each(|x| *x /= n);
        }
        Code(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &Code) -> f64 {
        if self.is_zero() || other.is_zero() {
            return 0.0;
        }
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0)
    }
}

impl std::ops::Neg for Code {
    type Output = Code;
    fn neg(self) -> Code {
        Code(self.0.into_iter().map(|x| -x).collect())
    }
}

/// Block means over a `16 × 16` grid, centered and L2-normalized.
pub fn encode(map: &NormalizedDepthMap) -> Result<Code> {
    encode_values(map.data(), map.resolution())
}

pub(crate) fn encode_values(data: &[f64], res: usize) -> Result<Code> {
    let cells = ENCODER_CELLS;
    if res < cells {
        return Err(Error::invalid(format!(
            "map resolution {res} is below the {cells}x{cells} descriptor"
        )));
    }
    let bounds: Vec<usize> = (0..=cells).map(|b| b * res / cells).collect();
    let mut v = Vec::with_capacity(cells * cells);
    for by in 0..cells {
        for bx in 0..cells {
            let (r0, r1) = (bounds[by], bounds[by + 1]);
            let (c0, c1) = (bounds[bx], bounds[bx + 1]);
            let mut sum = 0.0;
            for r in r0..r1 {
                sum += data[r * res + c0..r * res + c1].iter().sum::<f64>();
            }
            v.push(sum / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    Ok(Code::normalized(v))
}
