use std::sync::Arc;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::pano_box::PanoBox;

/// Default appearance embedding dimension.
pub const DEFAULT_EMBEDDING_DIM: usize = 128;

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// 3D position in meters.
pub type Location = Point3<f64>;

/// L2-normalized appearance feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Arc<[f64]>);

impl Embedding {
    /// Wrap a vector that is already unit length (within 1e-6).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidEmbedding("empty vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding("non-finite component".into()));
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::InvalidEmbedding(format!("norm {norm} is not 1")));
        }
        Ok(Self(values.into()))
    }

    /// Scale `values` to unit length.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&values);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidEmbedding(format!("cannot normalize norm {norm}")));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Self::new(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Cosine similarity; a plain dot product since both sides are unit length.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One detection in one frame: the unit that is matched against trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: PanoBox,
    pub embedding: Embedding,
    pub location: Option<Location>,
    pub frame: u64,
}

impl Detection {
    pub fn new(
        bbox: PanoBox,
        embedding: Embedding,
        location: Option<Location>,
        frame: u64,
    ) -> Result<Self> {
        if let Some(loc) = &location {
            check_location(loc)?;
        }
        Ok(Self {
            bbox,
            embedding,
            location,
            frame,
        })
    }

    pub fn with_location(mut self, location: Option<Location>) -> Result<Self> {
        if let Some(loc) = &location {
            check_location(loc)?;
        }
        self.location = location;
        Ok(self)
    }
}

fn check_location(loc: &Location) -> Result<()> {
    if loc.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidLocation(format!("{loc:?}")))
    }
}
