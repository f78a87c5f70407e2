//! The "unknown" polynomial system `x⁺ = A·M(x) + B·u`.
//!
//! Production code only ever sees a [`Plant`] through [`StepOracle`]; the
//! true matrices stay private unless the `oracle` feature is enabled for
//! ground-truth tests.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::linalg::{from_rows, to_rows};
use crate::poly::MonomialDictionary;
use crate::region::Region;
use crate::{Error, Result};

/// Black-box access to the one-step transition of a control system.
pub trait StepOracle: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug)]
pub struct Plant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    dict: MonomialDictionary,
    state_box: Region,
    input_box: Region,
}

/// Which of the two benchmark set-ups to instantiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStudy {
    Safety,
    ReachAvoid,
}

/// Sampling time of the benchmark system.
pub const CASE_STUDY_TAU: f64 = 0.2;

impl Plant {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        dict: MonomialDictionary,
        state_box: Region,
        input_box: Region,
    ) -> Result<Self> {
        let n = dict.nvars();
        check_dim("rows of A", n, a.nrows())?;
        check_dim("columns of A", dict.len(), a.ncols())?;
        check_dim("rows of B", n, b.nrows())?;
        check_dim("state box dimension", n, state_box.dim())?;
        check_dim("columns of B", input_box.dim(), b.ncols())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("plant matrices must be finite"));
        }
        Ok(Plant {
            a,
            b,
            dict,
            state_box,
            input_box,
        })
    }

    /// `x₁⁺ = x₁ + τx₂`, `x₂⁺ = x₂ + τ(x₁² + u)` with `τ = 0.2`.
    pub fn case_study(which: CaseStudy) -> Self {
        let tau = CASE_STUDY_TAU;
        let dict = MonomialDictionary::from_exponents(2, &[vec![1, 0], vec![0, 1], vec![2, 0]])
            .expect("valid dictionary");
        let a = DMatrix::from_row_slice(2, 3, &[1.0, tau, 0.0, 0.0, 1.0, tau]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, tau]);
        let half = match which {
            CaseStudy::Safety => 0.5,
            CaseStudy::ReachAvoid => 1.0,
        };
        let state_box = Region::cube(2, -half, half).expect("valid box");
        let input_box = Region::cube(1, -2.5, 2.5).expect("valid box");
        Plant::new(a, b, dict, state_box, input_box).expect("consistent case-study plant")
    }

    pub fn state_box(&self) -> &Region {
        &self.state_box
    }

    pub fn input_box(&self) -> &Region {
        &self.input_box
    }

    /// Ground truth `(A, B, M)`, for tests that check data identities.
    #[cfg(feature = "oracle")]
    pub fn ground_truth(&self) -> (&DMatrix<f64>, &DMatrix<f64>, &MonomialDictionary) {
        (&self.a, &self.b, &self.dict)
    }

    pub fn to_file(&self) -> PlantFile {
        PlantFile {
            n: self.dict.nvars(),
            m: self.b.ncols(),
            monomials: self.dict.exponents(),
            a: to_rows(&self.a),
            b: to_rows(&self.b),
            state_box: self.state_box.clone(),
            input_box: self.input_box.clone(),
        }
    }

    pub fn from_file(f: &PlantFile) -> Result<Self> {
        let dict = MonomialDictionary::from_exponents(f.n, &f.monomials)?;
        let a = from_rows(&f.a, f.n, dict.len(), "A")?;
        let b = from_rows(&f.b, f.n, f.m, "B")?;
        Plant::new(a, b, dict, f.state_box.clone(), f.input_box.clone())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: PlantFile =
            serde_json::from_str(&text).map_err(|e| Error::artifact(path, e.to_string()))?;
        Plant::from_file(&file).map_err(|e| Error::artifact(path, e.to_string()))
    }
}

impl StepOracle for Plant {
    fn state_dim(&self) -> usize {
        self.dict.nvars()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim("plant state", self.state_dim(), x.len())?;
        check_dim("plant input", self.input_dim(), u.len())?;
        if x.iter().chain(u).any(|v| !v.is_finite()) {
            return Err(Error::invalid("plant step called with non-finite values"));
        }
        let next = &self.a * self.dict.eval(x)? + &self.b * DVector::from_column_slice(u);
        Ok(next.iter().copied().collect())
    }
}

/// On-disk plant definition; matrices are row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlantFile {
    pub n: usize,
    pub m: usize,
    pub monomials: Vec<Vec<u32>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub state_box: Region,
    pub input_box: Region,
}
