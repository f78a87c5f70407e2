//! Monomial dictionaries, the factorization `M(x) = Υ(x)·x`, and
//! matrix-valued polynomials over a monomial basis.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::linalg::{from_rows, to_rows};
use crate::{Error, Result};

/// A monomial `x₁^e₁ ⋯ xₙ^eₙ`. Degree zero (the constant 1) is representable
/// so the same type can index polynomial-matrix bases; dictionaries reject it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Monomial {
    exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial { exponents }
    }

    pub fn constant(n: usize) -> Self {
        Monomial {
            exponents: vec![0; n],
        }
    }

    /// The degree-one monomial `x_j`.
    pub fn variable(n: usize, j: usize) -> Self {
        let mut exponents = vec![0; n];
        exponents[j] = 1;
        Monomial { exponents }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn nvars(&self) -> usize {
        self.exponents.len()
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .filter(|(e, _)| **e > 0)
            .map(|(e, v)| v.powi(*e as i32))
            .product()
    }

    /// Graded-lexicographic comparison: lower degree first, then larger
    /// exponent on earlier variables first (`x₁² < x₁x₂ < x₂²`).
    pub fn grlex_cmp(&self, other: &Monomial) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exponents.cmp(&self.exponents))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_constant() {
            return write!(f, "1");
        }
        let mut first = true;
        for (j, e) in self.exponents.iter().enumerate() {
            if *e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            write!(f, "x{}", j + 1)?;
            if *e > 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

/// All monomials in `n` variables of total degree exactly `d`, in
/// graded-lex order.
fn monomials_of_degree(n: usize, d: u32) -> Vec<Monomial> {
    fn rec(n: usize, j: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
        if j + 1 == n {
            cur[j] = left;
            out.push(Monomial::new(cur.clone()));
            return;
        }
        for e in (0..=left).rev() {
            cur[j] = e;
            rec(n, j + 1, left - e, cur, out);
        }
        cur[j] = 0;
    }
    let mut out = Vec::new();
    rec(n, 0, d, &mut vec![0; n], &mut out);
    out
}

/// Ordered list of non-constant monomials defining the lift `M(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialDictionary {
    n: usize,
    monos: Vec<Monomial>,
}

impl MonomialDictionary {
    /// Every monomial of degree `1..=dmax` in `n` variables.
    pub fn full(n: usize, dmax: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("dictionary needs at least one variable"));
        }
        if dmax == 0 {
            return Err(Error::invalid(
                "maximum degree must be at least 1 (a degree-0 dictionary is empty)",
            ));
        }
        let monos = (1..=dmax).flat_map(|d| monomials_of_degree(n, d)).collect();
        Ok(MonomialDictionary { n, monos })
    }

    /// A user-supplied dictionary. It must be non-empty, free of constants and
    /// duplicates, and listed in graded-lex order.
    pub fn new(n: usize, monos: Vec<Monomial>) -> Result<Self> {
        if n == 0 || monos.is_empty() {
            return Err(Error::invalid("dictionary must be non-empty"));
        }
        for m in &monos {
            check_dim("monomial exponent vector", n, m.nvars())?;
            if m.is_constant() {
                return Err(Error::invalid(
                    "dictionary may not contain a constant monomial",
                ));
            }
        }
        for w in monos.windows(2) {
            match w[0].grlex_cmp(&w[1]) {
                Ordering::Less => {}
                Ordering::Equal => {
                    return Err(Error::invalid(format!("duplicate monomial {}", w[0])))
                }
                Ordering::Greater => {
                    return Err(Error::invalid(format!(
                        "dictionary not in graded-lex order: {} before {}",
                        w[0], w[1]
                    )))
                }
            }
        }
        Ok(MonomialDictionary { n, monos })
    }

    pub fn from_exponents(n: usize, exps: &[Vec<u32>]) -> Result<Self> {
        Self::new(n, exps.iter().cloned().map(Monomial::new).collect())
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monos
    }

    pub fn max_degree(&self) -> u32 {
        self.monos.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn position(&self, m: &Monomial) -> Option<usize> {
        self.monos.iter().position(|x| x == m)
    }

    pub fn exponents(&self) -> Vec<Vec<u32>> {
        self.monos.iter().map(|m| m.exponents.clone()).collect()
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim("dictionary evaluation", self.n, x.len())?;
        Ok(DVector::from_iterator(
            self.monos.len(),
            self.monos.iter().map(|m| m.eval(x)),
        ))
    }
}

/// `Σₖ coeffs[k] · basisₖ(x)` with a fixed matrix shape.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialMatrix {
    rows: usize,
    cols: usize,
    basis: Vec<Monomial>,
    coeffs: Vec<DMatrix<f64>>,
}

impl PolynomialMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        basis: Vec<Monomial>,
        coeffs: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        check_dim("polynomial matrix coefficients", basis.len(), coeffs.len())?;
        if let Some(n) = basis.first().map(Monomial::nvars) {
            if basis.iter().any(|b| b.nvars() != n) {
                return Err(Error::invalid("basis monomials disagree on variable count"));
            }
        }
        for (i, b) in basis.iter().enumerate() {
            if basis[..i].contains(b) {
                return Err(Error::invalid(format!("duplicate basis element {b}")));
            }
        }
        if coeffs.iter().any(|c| c.shape() != (rows, cols)) {
            return Err(Error::invalid(format!(
                "every coefficient must be {rows}x{cols}"
            )));
        }
        Ok(PolynomialMatrix {
            rows,
            cols,
            basis,
            coeffs,
        })
    }

    /// The constant polynomial matrix `C`.
    pub fn constant(n: usize, c: DMatrix<f64>) -> Self {
        PolynomialMatrix {
            rows: c.nrows(),
            cols: c.ncols(),
            basis: vec![Monomial::constant(n)],
            coeffs: vec![c],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nvars(&self) -> usize {
        self.basis.first().map_or(0, Monomial::nvars)
    }

    pub fn basis(&self) -> &[Monomial] {
        &self.basis
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    pub fn coefficient(&self, m: &Monomial) -> Option<&DMatrix<f64>> {
        self.basis
            .iter()
            .position(|b| b == m)
            .map(|k| &self.coeffs[k])
    }

    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim("polynomial matrix evaluation", self.nvars(), x.len())?;
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (b, c) in self.basis.iter().zip(&self.coeffs) {
            let w = b.eval(x);
            if w != 0.0 {
                out += c * w;
            }
        }
        Ok(out)
    }

    /// Left- and right-multiplies every coefficient by constant matrices.
    pub fn sandwich(&self, left: &DMatrix<f64>, right: &DMatrix<f64>) -> Result<Self> {
        check_dim("left factor columns", self.rows, left.ncols())?;
        check_dim("right factor rows", self.cols, right.nrows())?;
        Ok(PolynomialMatrix {
            rows: left.nrows(),
            cols: right.ncols(),
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|c| left * c * right).collect(),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PolynomialMatrix {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }

    pub fn to_file(&self) -> PolynomialMatrixFile {
        PolynomialMatrixFile {
            rows: self.rows,
            cols: self.cols,
            basis: self.basis.iter().map(|b| b.exponents.clone()).collect(),
            coeffs: self.coeffs.iter().map(to_rows).collect(),
        }
    }

    pub fn from_file(f: &PolynomialMatrixFile) -> Result<Self> {
        let coeffs = f
            .coeffs
            .iter()
            .map(|c| from_rows(c, f.rows, f.cols, "polynomial coefficient"))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            f.rows,
            f.cols,
            f.basis.iter().cloned().map(Monomial::new).collect(),
            coeffs,
        )
    }
}

/// Serialized form of a [`PolynomialMatrix`]: basis exponent vectors and
/// row-major coefficient matrices in matching order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolynomialMatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub basis: Vec<Vec<u32>>,
    pub coeffs: Vec<Vec<Vec<f64>>>,
}

/// Builds `Υ(x)` (M×n) with `Υ(x)·x = M(x)`: each monomial is divided by its
/// lowest-index variable with positive exponent, placing the quotient in that
/// variable's column.
pub fn build_upsilon(dict: &MonomialDictionary) -> PolynomialMatrix {
    let n = dict.nvars();
    let rows: Vec<(usize, Monomial)> = dict
        .monomials()
        .iter()
        .map(|m| {
            let j = m
                .exponents
                .iter()
                .position(|e| *e > 0)
                .expect("dictionary monomials have positive degree");
            let mut q = m.exponents.clone();
            q[j] -= 1;
            (j, Monomial::new(q))
        })
        .collect();
    let mut basis: Vec<Monomial> = Vec::new();
    for (_, q) in &rows {
        if !basis.contains(q) {
            basis.push(q.clone());
        }
    }
    basis.sort_by(|a, b| a.grlex_cmp(b));
    let mut coeffs = vec![DMatrix::zeros(dict.len(), n); basis.len()];
    for (i, (j, q)) in rows.iter().enumerate() {
        let k = basis
            .iter()
            .position(|b| b == q)
            .expect("quotient in basis");
        coeffs[k][(i, *j)] = 1.0;
    }
    PolynomialMatrix {
        rows: dict.len(),
        cols: n,
        basis,
        coeffs,
    }
}

/// Basis for the decision polynomials `Y₁(x)`, `Y₂(x̂)`: the constant plus
/// every monomial of degree at most `dmax − 1`.
pub fn interface_basis(n: usize, dmax: u32) -> Vec<Monomial> {
    let mut basis = vec![Monomial::constant(n)];
    if dmax >= 2 {
        basis.extend(
            MonomialDictionary::full(n, dmax - 1)
                .expect("n ≥ 1 and degree ≥ 1")
                .monos,
        );
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binomial(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn full_dictionary_two_vars_degree_two() {
        let d = MonomialDictionary::full(2, 2).unwrap();
        let exps: Vec<Vec<u32>> = d.exponents();
        assert_eq!(
            exps,
            vec![vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        assert_eq!(d.len(), 5);
    }

    #[test]
    fn small_dictionaries() {
        let d = MonomialDictionary::full(1, 1).unwrap();
        assert_eq!(d.exponents(), vec![vec![1]]);
        let d = MonomialDictionary::full(3, 1).unwrap();
        assert_eq!(
            d.exponents(),
            vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]
        );
        assert!(MonomialDictionary::full(2, 0).is_err());
    }

    #[test]
    fn dictionary_size_is_binomial() {
        for n in 1..=4 {
            for d in 1..=4 {
                let dict = MonomialDictionary::full(n, d).unwrap();
                assert_eq!(
                    dict.len() as u64,
                    binomial(n as u64 + d as u64, d as u64) - 1
                );
            }
        }
    }

    #[test]
    fn hand_dictionary_validation() {
        assert!(
            MonomialDictionary::from_exponents(2, &[vec![1, 0], vec![0, 1], vec![2, 0]]).is_ok()
        );
        assert!(MonomialDictionary::from_exponents(2, &[vec![0, 1], vec![1, 0]]).is_err());
        assert!(MonomialDictionary::from_exponents(2, &[vec![1, 0], vec![1, 0]]).is_err());
        assert!(MonomialDictionary::from_exponents(2, &[vec![0, 0]]).is_err());
        assert!(MonomialDictionary::from_exponents(2, &[vec![1, 0, 0]]).is_err());
    }

    #[test]
    fn dictionary_evaluation() {
        let d = MonomialDictionary::full(2, 2).unwrap();
        assert_eq!(d.eval(&[0.0, 0.0]).unwrap().as_slice(), &[0.0; 5]);
        let v = d.eval(&[0.1, 0.2]).unwrap();
        let expect = [0.1, 0.2, 0.1 * 0.1, 0.1 * 0.2, 0.2 * 0.2];
        for (a, b) in v.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let d1 = MonomialDictionary::full(1, 2).unwrap();
        assert_eq!(d1.eval(&[3.0]).unwrap().as_slice(), &[3.0, 9.0]);
        assert!(d.eval(&[1.0]).is_err());
    }

    #[test]
    fn upsilon_for_two_vars_degree_two() {
        let d = MonomialDictionary::full(2, 2).unwrap();
        let u = build_upsilon(&d);
        assert_eq!(u.shape(), (5, 2));
        let e = u.eval(&[0.1, 0.2]).unwrap();
        let expect =
            DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 0.0, 1.0, 0.1, 0.0, 0.2, 0.0, 0.0, 0.2]);
        assert_eq!(e, expect);
        assert_eq!(
            u.basis()
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>(),
            vec!["1", "x1", "x2"]
        );
    }

    #[test]
    fn upsilon_degree_one_is_identity() {
        let u = build_upsilon(&MonomialDictionary::full(1, 1).unwrap());
        assert_eq!(u.eval(&[7.0]).unwrap(), DMatrix::from_element(1, 1, 1.0));
        let u = build_upsilon(&MonomialDictionary::full(2, 1).unwrap());
        assert_eq!(u.basis().len(), 1);
        assert_eq!(u.eval(&[3.0, -2.0]).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn polynomial_matrix_constant_term() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let pm = PolynomialMatrix::constant(3, c.clone());
        assert_eq!(pm.eval(&[5.0, -1.0, 2.0]).unwrap(), c);
        let u = build_upsilon(&MonomialDictionary::full(2, 3).unwrap());
        let at_zero = u.eval(&[0.0, 0.0]).unwrap();
        assert_eq!(&at_zero, u.coefficient(&Monomial::constant(2)).unwrap());
        assert!(pm.eval(&[1.0]).is_err());
    }

    #[test]
    fn interface_basis_degrees() {
        let b = interface_basis(2, 2);
        assert_eq!(
            b.iter().map(ToString::to_string).collect::<Vec<_>>(),
            vec!["1", "x1", "x2"]
        );
        assert_eq!(interface_basis(3, 1).len(), 1);
    }

    #[test]
    fn polynomial_matrix_file_round_trip() {
        let u = build_upsilon(&MonomialDictionary::full(3, 3).unwrap());
        let back = PolynomialMatrix::from_file(&u.to_file()).unwrap();
        assert_eq!(u, back);
    }

    proptest! {
        #[test]
        fn upsilon_factorizes_dictionary(
            n in 1usize..=3,
            d in 1u32..=4,
            seed in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let dict = MonomialDictionary::full(n, d).unwrap();
            let ups = build_upsilon(&dict);
            let x = &seed[..n];
            let lhs = ups.eval(x).unwrap() * DVector::from_column_slice(x);
            let rhs = dict.eval(x).unwrap();
            prop_assert!((lhs - rhs).amax() <= 1e-12);
        }

        #[test]
        fn dictionary_is_prefix_of_next_degree(n in 1usize..=4, d in 1u32..=4) {
            let a = MonomialDictionary::full(n, d).unwrap();
            let b = MonomialDictionary::full(n, d + 1).unwrap();
            prop_assert_eq!(a.monomials(), &b.monomials()[..a.len()]);
        }
    }
}
