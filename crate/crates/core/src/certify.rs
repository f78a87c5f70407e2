//! Synthesis and independent verification of quadratic alternating
//! simulation functions from two trajectories, plus the closeness bound.
//!
//! Decision variables are a symmetric `Ξ`, a square `Θ`, and polynomial
//! matrices `Y₁(x)`, `Y₂(x̂)` (each `T×n`) over a fixed monomial basis. The
//! polynomial identities
//!
//! ```text
//!     𝕄 Y₁(x) = Υ(x) Ξ      𝕄̂ Y₂(x̂) = Υ(x̂) Ξ
//!     O⁺ Y₁(x) = Θ          Ô⁺ Y₂(x̂) = Θ
//! ```
//!
//! hold for all states iff they hold coefficient-wise, so they become a
//! finite linear system. Its solution space is parameterized explicitly and
//! the block inequality `[[Ξ/(1+μ), Θ], [Θᵀ, γΞ]] ⪰ 0` is solved over it
//! with `Ξ ⪰ I` while minimizing `λ_max(Ξ)`.

use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{check_rank, DataMatrices, TrajectoryBatch};
use crate::error::check_dim;
use crate::linalg::{
    from_rows, jacobi_eigenvalues, lambda_max, lambda_min, max_abs, null_space, range_and_pinv,
    symmetrize, to_rows, vec_from,
};
use crate::poly::{Monomial, MonomialDictionary, PolynomialMatrix, PolynomialMatrixFile};
use crate::region::Region;
use crate::sdp::{LmiProgram, SdpOptions};
use crate::{Error, Result};

/// One trajectory together with its lifted data matrix.
#[derive(Clone, Copy, Debug)]
pub struct Dataset<'a> {
    pub batch: &'a TrajectoryBatch,
    pub data: &'a DataMatrices,
}

/// Index map from structured unknowns to the flat decision vector:
/// upper triangle of `Ξ`, then `Θ` row-major, then `Y₁` and `Y₂`
/// coefficient blocks (basis-major, each `T×n` row-major).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariableLayout {
    pub n: usize,
    pub horizon: usize,
    pub basis_len: usize,
}

impl VariableLayout {
    pub fn xi_len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn theta_len(&self) -> usize {
        self.n * self.n
    }

    pub fn y_block_len(&self) -> usize {
        self.basis_len * self.horizon * self.n
    }

    pub fn len(&self) -> usize {
        self.xi_len() + self.theta_len() + 2 * self.y_block_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn xi(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // Row-major upper triangle.
        i * self.n - i * (i + 1) / 2 + j
    }

    pub fn theta(&self, i: usize, j: usize) -> usize {
        self.xi_len() + i * self.n + j
    }

    pub fn y(&self, traj: usize, k: usize, t: usize, j: usize) -> usize {
        self.xi_len()
            + self.theta_len()
            + traj * self.y_block_len()
            + (k * self.horizon + t) * self.n
            + j
    }

    fn unpack_xi(&self, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| v[self.xi(i, j)])
    }

    fn unpack_theta(&self, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| v[self.theta(i, j)])
    }

    fn unpack_y(&self, v: &DVector<f64>, traj: usize, basis: &[Monomial]) -> PolynomialMatrix {
        let coeffs = (0..self.basis_len)
            .map(|k| DMatrix::from_fn(self.horizon, self.n, |t, j| v[self.y(traj, k, t, j)]))
            .collect();
        PolynomialMatrix::new(self.horizon, self.n, basis.to_vec(), coeffs)
            .expect("layout matches basis")
    }
}

/// The four coefficient-matching blocks: lift and successor conditions for
/// each trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    LiftFirst,
    LiftSecond,
    SuccessorFirst,
    SuccessorSecond,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::LiftFirst,
        Condition::LiftSecond,
        Condition::SuccessorFirst,
        Condition::SuccessorSecond,
    ];
}

/// Linear equalities `E·v = 0` over the decision vector.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    layout: VariableLayout,
    dict: MonomialDictionary,
    basis: Vec<Monomial>,
    equalities: DMatrix<f64>,
    groups: [Range<usize>; 4],
}

impl ConstraintSystem {
    pub fn layout(&self) -> VariableLayout {
        self.layout
    }

    pub fn variable_count(&self) -> usize {
        self.layout.len()
    }

    pub fn equality_count(&self) -> usize {
        self.equalities.nrows()
    }

    pub fn basis(&self) -> &[Monomial] {
        &self.basis
    }

    pub fn equalities(&self) -> &DMatrix<f64> {
        &self.equalities
    }

    /// Max absolute residual of each condition block at `v`.
    pub fn residuals(&self, v: &DVector<f64>) -> Residuals {
        let r = &self.equalities * v;
        let block = |g: &Range<usize>| r.rows(g.start, g.len()).amax();
        Residuals {
            lift_first: block(&self.groups[0]),
            lift_second: block(&self.groups[1]),
            successor_first: block(&self.groups[2]),
            successor_second: block(&self.groups[3]),
        }
    }
}

pub fn assemble_constraints(
    dict: &MonomialDictionary,
    upsilon: &PolynomialMatrix,
    first: Dataset<'_>,
    second: Dataset<'_>,
    basis: &[Monomial],
) -> Result<ConstraintSystem> {
    let n = dict.nvars();
    let horizon = first.batch.horizon();
    check_dim("second trajectory horizon", horizon, second.batch.horizon())?;
    for (name, d) in [("first", first), ("second", second)] {
        check_dim("trajectory state dimension", n, d.batch.state_dim())?;
        check_dim("lifted data rows", dict.len(), d.data.lifted().nrows())?;
        check_dim("lifted data columns", horizon, d.data.lifted().ncols())?;
        let rep = check_rank(d.data, dict.len(), horizon);
        if !rep.pass {
            return Err(Error::invalid(format!(
                "{name} trajectory fails the rank condition (rank {} of {}, horizon {} < {} or rank deficient)",
                rep.rank, rep.required_rank, rep.horizon, rep.min_horizon
            )));
        }
    }
    check_dim("Υ rows", dict.len(), upsilon.shape().0)?;
    check_dim("Υ columns", n, upsilon.shape().1)?;
    for m in upsilon.basis() {
        if !basis.contains(m) {
            return Err(Error::MissingBasisMonomial(m.to_string()));
        }
    }
    if !basis.iter().any(Monomial::is_constant) {
        return Err(Error::MissingBasisMonomial("1".into()));
    }
    let layout = VariableLayout {
        n,
        horizon,
        basis_len: basis.len(),
    };
    let big_m = dict.len();
    let lifted = [first.data.lifted().clone(), second.data.lifted().clone()];
    let successors = [
        first.batch.successors().clone(),
        second.batch.successors().clone(),
    ];

    let lift_rows = basis.len() * big_m * n;
    let succ_rows = basis.len() * n * n;
    let total = 2 * lift_rows + 2 * succ_rows;
    let mut e = DMatrix::zeros(total, layout.len());
    let groups = [
        0..lift_rows,
        lift_rows..2 * lift_rows,
        2 * lift_rows..2 * lift_rows + succ_rows,
        2 * lift_rows + succ_rows..total,
    ];
    let zero = DMatrix::zeros(big_m, n);
    for traj in 0..2 {
        let mut row = groups[traj].start;
        for (k, b) in basis.iter().enumerate() {
            let ups_k = upsilon.coefficient(b).unwrap_or(&zero);
            for i in 0..big_m {
                for j in 0..n {
                    for t in 0..horizon {
                        e[(row, layout.y(traj, k, t, j))] += lifted[traj][(i, t)];
                    }
                    for l in 0..n {
                        e[(row, layout.xi(l, j))] -= ups_k[(i, l)];
                    }
                    row += 1;
                }
            }
        }
        let mut row = groups[2 + traj].start;
        for (k, b) in basis.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    for t in 0..horizon {
                        e[(row, layout.y(traj, k, t, j))] += successors[traj][(i, t)];
                    }
                    if b.is_constant() {
                        e[(row, layout.theta(i, j))] -= 1.0;
                    }
                    row += 1;
                }
            }
        }
    }
    Ok(ConstraintSystem {
        layout,
        dict: dict.clone(),
        basis: basis.to_vec(),
        equalities: e,
        groups,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub lift_first: f64,
    pub lift_second: f64,
    pub successor_first: f64,
    pub successor_second: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.lift_first
            .max(self.lift_second)
            .max(self.successor_first)
            .max(self.successor_second)
    }

    pub fn get(&self, c: Condition) -> f64 {
        match c {
            Condition::LiftFirst => self.lift_first,
            Condition::LiftSecond => self.lift_second,
            Condition::SuccessorFirst => self.successor_first,
            Condition::SuccessorSecond => self.successor_second,
        }
    }

    fn scaled(&self, c: f64) -> Self {
        Residuals {
            lift_first: self.lift_first * c,
            lift_second: self.lift_second * c,
            successor_first: self.successor_first * c,
            successor_second: self.successor_second * c,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub sdp: SdpOptions,
    /// Relative singular-value cutoff for the equality null space.
    pub null_space_tolerance: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            sdp: SdpOptions::default(),
            null_space_tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsfCertificate {
    pub n: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub mu: f64,
    pub xi: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub y1: PolynomialMatrix,
    pub y2: PolynomialMatrix,
    pub residuals: Residuals,
    pub lmi_margin: f64,
    pub dict: MonomialDictionary,
}

/// The `2n×2n` block of the contraction inequality.
pub fn lmi_block(xi: &DMatrix<f64>, theta: &DMatrix<f64>, gamma: f64, mu: f64) -> DMatrix<f64> {
    let n = xi.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(xi / (1.0 + mu)));
    m.view_mut((0, n), (n, n)).copy_from(theta);
    m.view_mut((n, 0), (n, n)).copy_from(&theta.transpose());
    m.view_mut((n, n), (n, n)).copy_from(&(xi * gamma));
    symmetrize(&m)
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let size: usize = blocks.iter().map(DMatrix::nrows).sum();
    let mut out = DMatrix::zeros(size, size);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, at), b.shape()).copy_from(b);
        at += b.nrows();
    }
    out
}

pub fn solve_asf(
    cs: &ConstraintSystem,
    gamma: f64,
    mu: f64,
    opts: &SolveOptions,
) -> Result<AsfCertificate> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be positive, got {mu}")));
    }
    let layout = cs.layout;
    let n = layout.n;
    let null = null_space(&cs.equalities, opts.null_space_tolerance);
    let infeasible = |reason: &str| Error::Infeasible {
        reason: reason.into(),
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        gap: f64::NAN,
    };
    if null.ncols() == 0 {
        return Err(infeasible(
            "the equality constraints admit only the zero solution",
        ));
    }
    let key = layout.xi_len() + layout.theta_len();
    let key_rows = null.rows(0, key).into_owned();
    let (range, pinv) = range_and_pinv(&key_rows, opts.null_space_tolerance);
    let r = range.ncols();
    if r == 0 {
        return Err(infeasible("the equalities force Ξ = 0 and Θ = 0"));
    }

    let unpack = |w: &DVector<f64>| {
        let mut v = DVector::zeros(layout.len());
        v.rows_mut(0, key).copy_from(w);
        (layout.unpack_xi(&v), layout.unpack_theta(&v))
    };
    let id = DMatrix::identity(n, n);
    let zero_lmi = DMatrix::zeros(2 * n, 2 * n);
    let zero_n = DMatrix::zeros(n, n);
    let mut coefficients = Vec::with_capacity(r + 1);
    for q in 0..r {
        let (xi_q, theta_q) = unpack(&range.column(q).into_owned());
        coefficients.push(block_diag(&[
            lmi_block(&xi_q, &theta_q, gamma, mu),
            xi_q.clone(),
            -xi_q,
        ]));
    }
    coefficients.push(block_diag(&[zero_lmi.clone(), zero_n.clone(), id.clone()]));
    let constant = block_diag(&[zero_lmi, -id.clone(), zero_n]);
    let mut objective = DVector::zeros(r + 1);
    objective[r] = 1.0;
    let prog = LmiProgram::new(objective, constant, coefficients)?;
    let sol = prog.solve(&opts.sdp)?;

    let w = &range * sol.y.rows(0, r);
    let v = &null * (&pinv * w);
    let mut xi = symmetrize(&layout.unpack_xi(&v));
    let mut theta = layout.unpack_theta(&v);
    let mut y1 = layout.unpack_y(&v, 0, &cs.basis);
    let mut y2 = layout.unpack_y(&v, 1, &cs.basis);
    let mut residuals = cs.residuals(&v);

    // Restore Ξ ⪰ I exactly; the program is invariant under positive scaling.
    let lmin = lambda_min(&xi);
    if lmin <= 0.0 {
        return Err(infeasible("solver returned a non-positive-definite Ξ"));
    }
    if lmin < 1.0 {
        let c = 1.0 / lmin;
        xi *= c;
        theta *= c;
        y1 = y1.scaled(c);
        y2 = y2.scaled(c);
        residuals = residuals.scaled(c);
    }
    let p = symmetrize(
        &xi.clone()
            .try_inverse()
            .ok_or_else(|| infeasible("Ξ is singular"))?,
    );
    let lmi_margin = lambda_min(&lmi_block(&xi, &theta, gamma, mu));
    Ok(AsfCertificate {
        n,
        horizon: layout.horizon,
        gamma,
        mu,
        xi,
        p,
        theta,
        y1,
        y2,
        residuals,
        lmi_margin,
        dict: cs.dict.clone(),
    })
}

/// Smallest feasible `γ` (to `tol`) by bisection, with its certificate.
pub fn minimal_gamma(
    cs: &ConstraintSystem,
    mu: f64,
    opts: &SolveOptions,
    tol: f64,
) -> Result<(f64, AsfCertificate)> {
    let mut hi = 1.0 - 1e-6;
    let mut best = solve_asf(cs, hi, mu, opts)?;
    let mut lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match solve_asf(cs, mid, mu, opts) {
            Ok(c) if c.lmi_margin >= -1e-8 => {
                hi = mid;
                best = c;
            }
            Ok(_) | Err(Error::Infeasible { .. }) => lo = mid,
            Err(e) => return Err(e),
        }
    }
    Ok((hi, best))
}

impl AsfCertificate {
    /// `(cΞ, cΘ, cY₁, cY₂)` with `P/c`: an equally valid certificate.
    pub fn scaled(&self, c: f64) -> AsfCertificate {
        AsfCertificate {
            xi: &self.xi * c,
            p: &self.p / c,
            theta: &self.theta * c,
            y1: self.y1.scaled(c),
            y2: self.y2.scaled(c),
            residuals: self.residuals.scaled(c),
            lmi_margin: self.lmi_margin * c,
            ..self.clone()
        }
    }

    pub fn condition_number(&self) -> f64 {
        lambda_max(&self.p) / lambda_min(&self.p)
    }

    pub fn eval_asf(&self, x: &[f64], xhat: &[f64]) -> Result<f64> {
        eval_asf(&self.p, x, xhat)
    }

    pub fn to_file(&self) -> CertificateFile {
        CertificateFile {
            n: self.n,
            horizon: self.horizon,
            gamma: self.gamma,
            mu: self.mu,
            xi: to_rows(&self.xi),
            p: to_rows(&self.p),
            theta: to_rows(&self.theta),
            y1: self.y1.to_file(),
            y2: self.y2.to_file(),
            residuals: self.residuals,
            lmi_margin: self.lmi_margin,
            dict: self.dict.exponents(),
        }
    }

    pub fn from_file(f: &CertificateFile) -> Result<Self> {
        let n = f.n;
        let y1 = PolynomialMatrix::from_file(&f.y1)?;
        let y2 = PolynomialMatrix::from_file(&f.y2)?;
        for y in [&y1, &y2] {
            if y.shape() != (f.horizon, n) {
                return Err(Error::invalid("Y blocks must be T×n"));
            }
        }
        Ok(AsfCertificate {
            n,
            horizon: f.horizon,
            gamma: f.gamma,
            mu: f.mu,
            xi: from_rows(&f.xi, n, n, "Xi")?,
            p: from_rows(&f.p, n, n, "P")?,
            theta: from_rows(&f.theta, n, n, "Theta")?,
            y1,
            y2,
            residuals: f.residuals,
            lmi_margin: f.lmi_margin,
            dict: MonomialDictionary::from_exponents(n, &f.dict)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: CertificateFile =
            serde_json::from_str(&text).map_err(|e| Error::artifact(path, e.to_string()))?;
        Self::from_file(&f).map_err(|e| Error::artifact(path, e.to_string()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateFile {
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub gamma: f64,
    pub mu: f64,
    #[serde(rename = "Xi")]
    pub xi: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "Theta")]
    pub theta: Vec<Vec<f64>>,
    #[serde(rename = "Y1")]
    pub y1: PolynomialMatrixFile,
    #[serde(rename = "Y2")]
    pub y2: PolynomialMatrixFile,
    pub residuals: Residuals,
    pub lmi_margin: f64,
    pub dict: Vec<Vec<u32>>,
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    /// Region the sampled states are drawn from.
    pub region: Region,
    pub equality_tolerance: f64,
    pub lmi_tolerance: f64,
    pub inverse_tolerance: f64,
}

impl VerifyOptions {
    pub fn new(region: Region) -> Self {
        VerifyOptions {
            samples: 10_000,
            seed: 0,
            region,
            equality_tolerance: 1e-6,
            lmi_tolerance: 1e-8,
            inverse_tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Max violation of each condition over the sampled states.
    pub sampled: [f64; 4],
    /// Max violation of each condition coefficient by coefficient.
    pub coefficient: [f64; 4],
    pub lmi_min_eigenvalue: f64,
    pub schur_min_eigenvalue: f64,
    pub xi_min_eigenvalue: f64,
    pub inverse_error: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Re-checks every hypothesis of the certificate against the raw data.
/// Uses Jacobi eigenvalues, independently of the solver's eigensolver.
pub fn verify_certificate(
    cert: &AsfCertificate,
    upsilon: &PolynomialMatrix,
    first: Dataset<'_>,
    second: Dataset<'_>,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    let n = cert.n;
    check_dim("verification region", n, opts.region.dim())?;
    check_dim("certificate horizon", cert.horizon, first.batch.horizon())?;
    check_dim("certificate horizon", cert.horizon, second.batch.horizon())?;
    let lifted = [first.data.lifted(), second.data.lifted()];
    let succ = [first.batch.successors(), second.batch.successors()];
    let ys = [&cert.y1, &cert.y2];

    let mut sampled = [0.0f64; 4];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.samples {
        let x = opts.region.sample(&mut rng);
        let ups_xi = upsilon.eval(&x)? * &cert.xi;
        for traj in 0..2 {
            let y = ys[traj].eval(&x)?;
            sampled[traj] = sampled[traj].max(max_abs(&(lifted[traj] * &y - &ups_xi)));
            sampled[2 + traj] = sampled[2 + traj].max(max_abs(&(succ[traj] * &y - &cert.theta)));
        }
    }

    let mut monos: Vec<Monomial> = upsilon.basis().to_vec();
    for y in ys {
        for b in y.basis() {
            if !monos.contains(b) {
                monos.push(b.clone());
            }
        }
    }
    let mut coefficient = [0.0f64; 4];
    let zero_ups = DMatrix::zeros(upsilon.shape().0, n);
    let zero_y = DMatrix::zeros(cert.horizon, n);
    for b in &monos {
        let ups_xi = upsilon.coefficient(b).unwrap_or(&zero_ups) * &cert.xi;
        let theta_k = if b.is_constant() {
            cert.theta.clone()
        } else {
            DMatrix::zeros(n, n)
        };
        for traj in 0..2 {
            let yk = ys[traj].coefficient(b).unwrap_or(&zero_y);
            coefficient[traj] = coefficient[traj].max(max_abs(&(lifted[traj] * yk - &ups_xi)));
            coefficient[2 + traj] =
                coefficient[2 + traj].max(max_abs(&(succ[traj] * yk - &theta_k)));
        }
    }

    let lmi_min = jacobi_eigenvalues(&lmi_block(&cert.xi, &cert.theta, cert.gamma, cert.mu))[0];
    let xi_min = jacobi_eigenvalues(&cert.xi)[0];
    let schur_min = match nalgebra::Cholesky::new(symmetrize(&cert.xi)) {
        Some(ch) => {
            let xinv_theta = ch.solve(&cert.theta);
            let comp =
                &cert.xi * cert.gamma - cert.theta.transpose() * xinv_theta * (1.0 + cert.mu);
            jacobi_eigenvalues(&comp)[0]
        }
        None => f64::NEG_INFINITY,
    };
    let inverse_error = max_abs(&(&cert.p * &cert.xi - DMatrix::identity(n, n)));
    let worst = sampled
        .iter()
        .chain(&coefficient)
        .fold(0.0f64, |a, b| a.max(*b));
    let passed = worst <= opts.equality_tolerance
        && lmi_min >= -opts.lmi_tolerance
        && xi_min > 0.0
        && inverse_error <= opts.inverse_tolerance
        && cert.gamma > 0.0
        && cert.gamma < 1.0
        && cert.mu > 0.0;
    Ok(VerificationReport {
        sampled,
        coefficient,
        lmi_min_eigenvalue: lmi_min,
        schur_min_eigenvalue: schur_min,
        xi_min_eigenvalue: xi_min,
        inverse_error,
        samples: opts.samples,
        passed,
    })
}

/// `S(x, x̂) = (x − x̂)ᵀ P (x − x̂)`.
pub fn eval_asf(p: &DMatrix<f64>, x: &[f64], xhat: &[f64]) -> Result<f64> {
    check_dim("ASF state", p.nrows(), x.len())?;
    check_dim("ASF abstract state", p.nrows(), xhat.len())?;
    let d = vec_from(x) - vec_from(xhat);
    Ok((d.transpose() * p * &d)[(0, 0)])
}

fn require_pd(p: &DMatrix<f64>) -> Result<(f64, f64)> {
    if p.nrows() != p.ncols() || p.nrows() == 0 {
        return Err(Error::invalid("P must be a non-empty square matrix"));
    }
    let lmin = lambda_min(p);
    if !(lmin > 0.0) {
        return Err(Error::invalid(format!(
            "P must be positive definite (λ_min = {lmin})"
        )));
    }
    Ok((lmin, lambda_max(p)))
}

/// `α = λ_min(P)` and `ψ = (1 + 1/μ)·λ_max(P)·δ²`.
pub fn compute_alpha_psi(p: &DMatrix<f64>, mu: f64, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0) {
        return Err(Error::invalid("quantization bound delta must be positive"));
    }
    if !(mu > 0.0) {
        return Err(Error::invalid("mu must be positive"));
    }
    let (lmin, lmax) = require_pd(p)?;
    Ok((lmin, (1.0 + 1.0 / mu) * lmax * delta * delta))
}

/// `ψ = (1 + 1/μ)·λ_max(P)·(β₁²β₂² + δ²)` for the bisimulation direction,
/// with `β₁` the input quantization bound and `β₂ ≥ ‖B‖`.
pub fn compute_bisim_psi(
    p: &DMatrix<f64>,
    mu: f64,
    delta: f64,
    beta1: f64,
    beta2: f64,
) -> Result<f64> {
    if delta < 0.0 || beta1 < 0.0 || beta2 < 0.0 {
        return Err(Error::invalid(
            "delta, beta1 and beta2 must be non-negative",
        ));
    }
    if !(mu > 0.0) {
        return Err(Error::invalid("mu must be positive"));
    }
    let (_, lmax) = require_pd(p)?;
    Ok((1.0 + 1.0 / mu) * lmax * (beta1 * beta1 * beta2 * beta2 + delta * delta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub alpha: f64,
    pub gamma: f64,
    pub psi: f64,
    pub rho: f64,
    pub nu: f64,
    pub eta1: f64,
    pub eta2: Option<f64>,
    pub eta3: Option<f64>,
    pub rho_bar: f64,
    pub psi_bar: f64,
    pub epsilon: f64,
}

impl EpsilonReport {
    /// Level set `max(ρ̄ν, ψ̄)` defining the simulation relation.
    pub fn relation_level(&self) -> f64 {
        (self.rho_bar * self.nu).max(self.psi_bar)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosenessParams {
    pub alpha: f64,
    pub gamma: f64,
    pub rho: f64,
    pub psi: f64,
    pub nu: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
}

fn open_interval(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v > lo && v < hi {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must lie in ({lo}, {hi}), got {v}"
        )))
    }
}

pub fn compute_epsilon_general(p: &ClosenessParams) -> Result<EpsilonReport> {
    if !(p.alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    open_interval("gamma", p.gamma, 0.0, 1.0)?;
    open_interval("eta1", p.eta1, 0.0, 1.0)?;
    open_interval("eta2", p.eta2, 0.0, 1.0)?;
    open_interval("eta3", p.eta3, 1.0, 2.0)?;
    if p.rho < 0.0 || p.psi < 0.0 || p.nu < 0.0 {
        return Err(Error::invalid("rho, psi and nu must be non-negative"));
    }
    let common = (1.0 + p.eta2) * p.eta3;
    let rho_bar = common * p.rho / ((1.0 - p.gamma) * p.eta1);
    let psi_bar = common * p.psi / ((1.0 - p.gamma) * (p.eta3 - 1.0) * p.eta1 * p.eta2);
    let epsilon = ((rho_bar * p.nu).max(psi_bar) / p.alpha).sqrt();
    Ok(EpsilonReport {
        alpha: p.alpha,
        gamma: p.gamma,
        psi: p.psi,
        rho: p.rho,
        nu: p.nu,
        eta1: p.eta1,
        eta2: Some(p.eta2),
        eta3: Some(p.eta3),
        rho_bar,
        psi_bar,
        epsilon,
    })
}

/// The `ρ ≡ 0` specialization: `ψ̄ = ψ / ((1 − γ)η₁)`, `ε = √(ψ̄/α)`.
pub fn compute_epsilon_rho0(alpha: f64, gamma: f64, psi: f64, eta1: f64) -> Result<EpsilonReport> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    open_interval("gamma", gamma, 0.0, 1.0)?;
    open_interval("eta1", eta1, 0.0, 1.0)?;
    if psi < 0.0 {
        return Err(Error::invalid("psi must be non-negative"));
    }
    let psi_bar = psi / ((1.0 - gamma) * eta1);
    Ok(EpsilonReport {
        alpha,
        gamma,
        psi,
        rho: 0.0,
        nu: 0.0,
        eta1,
        eta2: None,
        eta3: None,
        rho_bar: 0.0,
        psi_bar,
        epsilon: (psi_bar / alpha).sqrt(),
    })
}
