//! Axis-aligned boxes used for state, input and specification sets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim("region bounds", lo.len(), hi.len())?;
        if lo.is_empty() {
            return Err(Error::invalid("region must have at least one dimension"));
        }
        for (j, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() || l > h {
                return Err(Error::invalid(format!(
                    "region dimension {j} has invalid bounds [{l}, {h}]"
                )));
            }
        }
        Ok(Region { lo, hi })
    }

    /// The box `[lo, hi]` repeated in every dimension.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Region::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn extent(&self, j: usize) -> f64 {
        self.hi[j] - self.lo[j]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    /// Grows every face outward by `margin`.
    pub fn inflate(&self, margin: f64) -> Region {
        Region {
            lo: self.lo.iter().map(|l| l - margin).collect(),
            hi: self.hi.iter().map(|h| h + margin).collect(),
        }
    }

    /// Shrinks every face inward by `margin`; `None` if the box vanishes.
    pub fn deflate(&self, margin: f64) -> Option<Region> {
        let lo: Vec<f64> = self.lo.iter().map(|l| l + margin).collect();
        let hi: Vec<f64> = self.hi.iter().map(|h| h - margin).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            None
        } else {
            Some(Region { lo, hi })
        }
    }

    /// Scales the box about its center.
    pub fn scaled(&self, factor: f64) -> Region {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| {
                let c = 0.5 * (l + h);
                let r = 0.5 * (h - l) * factor;
                (c - r, c + r)
            })
            .unzip();
        Region { lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| if l == h { *l } else { rng.gen_range(*l..=*h) })
            .collect()
    }

    /// Largest Euclidean norm attained on the box (at a vertex).
    pub fn max_norm(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l.abs().max(h.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
