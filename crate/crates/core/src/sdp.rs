//! Dense primal-dual interior-point solver for small linear matrix
//! inequality programs
//!
//! ```text
//!     minimize   cᵀy
//!     subject to F₀ + Σᵢ yᵢ Fᵢ ⪰ 0
//! ```
//!
//! The program is treated as the dual of the standard-form pair
//! `min ⟨C, X⟩ s.t. ⟨Aᵢ, X⟩ = bᵢ, X ⪰ 0` with `C = F₀`, `Aᵢ = −Fᵢ`,
//! `b = −c`, and solved with infeasible-start Mehrotra predictor-corrector
//! steps along the HKM search direction.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::check_dim;
use crate::linalg::{jacobi_eigenvalues, symmetrize};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct LmiProgram {
    pub objective: DVector<f64>,
    pub constant: DMatrix<f64>,
    pub coefficients: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct SdpOptions {
    pub max_iterations: usize,
    /// Relative duality gap.
    pub gap_tolerance: f64,
    /// Relative primal and dual residual norms.
    pub feasibility_tolerance: f64,
    /// Looser gap and primal-residual bounds accepted when the iteration
    /// breaks down numerically near the optimum; the LMI residual must still
    /// meet `feasibility_tolerance`.
    pub fallback_tolerance: f64,
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            max_iterations: 150,
            gap_tolerance: 1e-8,
            feasibility_tolerance: 1e-9,
            fallback_tolerance: 1e-6,
            step_fraction: 0.95,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub y: DVector<f64>,
    /// `F₀ + Σ yᵢFᵢ` evaluated at the returned point.
    pub slack: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Clone, Debug)]
pub struct SdpFailure {
    pub reason: String,
    pub iterations: usize,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl From<SdpFailure> for Error {
    fn from(f: SdpFailure) -> Self {
        Error::Infeasible {
            reason: format!("{} after {} iterations", f.reason, f.iterations),
            primal_residual: f.primal_residual,
            dual_residual: f.dual_residual,
            gap: f.gap,
        }
    }
}

impl LmiProgram {
    pub fn new(
        objective: DVector<f64>,
        constant: DMatrix<f64>,
        coefficients: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        check_dim("LMI coefficient count", objective.len(), coefficients.len())?;
        let n = constant.nrows();
        check_dim("LMI constant (square)", n, constant.ncols())?;
        for f in &coefficients {
            if f.shape() != (n, n) {
                return Err(Error::invalid(
                    "LMI coefficients must match the constant's shape",
                ));
            }
        }
        Ok(LmiProgram {
            objective,
            constant: symmetrize(&constant),
            coefficients: coefficients.iter().map(symmetrize).collect(),
        })
    }

    pub fn eval(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (yi, f) in y.iter().zip(&self.coefficients) {
            out += f * *yi;
        }
        out
    }

    pub fn solve(&self, opts: &SdpOptions) -> std::result::Result<SdpSolution, SdpFailure> {
        Solver::new(self).run(opts)
    }
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Trace of `A·G` for symmetric `A` and arbitrary `G`.
fn trace_prod(a: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    a.dot(&g.transpose())
}

/// Largest `α ≤ 1` keeping `M + α·D` positive definite, scaled by `fraction`.
fn max_step(m: &DMatrix<f64>, d: &DMatrix<f64>, fraction: f64) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse()?;
    let w = symmetrize(&(&l_inv * d * l_inv.transpose()));
    let lam = jacobi_eigenvalues(&w)[0];
    Some(if lam >= 0.0 {
        1.0
    } else {
        (-fraction / lam).min(1.0)
    })
}

struct Solver<'a> {
    prog: &'a LmiProgram,
    c: DMatrix<f64>,
    a: Vec<DMatrix<f64>>,
    b: DVector<f64>,
    dim: usize,
}

struct Direction {
    dx: DMatrix<f64>,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
}

impl<'a> Solver<'a> {
    fn new(prog: &'a LmiProgram) -> Self {
        Solver {
            prog,
            c: prog.constant.clone(),
            a: prog.coefficients.iter().map(|f| -f).collect(),
            b: -&prog.objective,
            dim: prog.constant.nrows(),
        }
    }

    fn a_op(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|ai| inner(ai, x)))
    }

    fn at_op(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (yi, ai) in y.iter().zip(&self.a) {
            out += ai * *yi;
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        schur: &Cholesky<f64, Dyn>,
        x: &DMatrix<f64>,
        z_inv: &DMatrix<f64>,
        rp: &DVector<f64>,
        rd: &DMatrix<f64>,
        rc: &DMatrix<f64>,
    ) -> Direction {
        let g = (rc - x * rd) * z_inv;
        let rhs = DVector::from_iterator(
            self.a.len(),
            self.a
                .iter()
                .zip(rp.iter())
                .map(|(ai, r)| r - trace_prod(ai, &g)),
        );
        let dy = schur.solve(&rhs);
        let dz = rd - self.at_op(&dy);
        let dx = symmetrize(&((rc - x * &dz) * z_inv));
        Direction { dx, dy, dz }
    }

    fn run(&self, opts: &SdpOptions) -> std::result::Result<SdpSolution, SdpFailure> {
        let n = self.dim as f64;
        let m = self.a.len();
        let norm_c = self.c.norm();
        let norm_b = self.b.norm();
        let max_a = self.a.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let xi_x = 10f64.max(n.sqrt()).max(
            (0..m)
                .map(|i| n * (1.0 + self.b[i].abs()) / (1.0 + self.a[i].norm()))
                .fold(0.0, f64::max),
        );
        let xi_z = 10f64.max(n.sqrt()).max(max_a).max(norm_c);
        let mut x = DMatrix::identity(self.dim, self.dim) * xi_x;
        let mut z = DMatrix::identity(self.dim, self.dim) * xi_z;
        let mut y = DVector::zeros(m);

        let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for it in 0..opts.max_iterations {
            let rp = &self.b - self.a_op(&x);
            let rd = &self.c - &z - self.at_op(&y);
            let pobj = inner(&self.c, &x);
            let dobj = self.b.dot(&y);
            let mu = inner(&x, &z) / n;
            let gap = (pobj - dobj).abs().max(inner(&x, &z)) / (1.0 + pobj.abs() + dobj.abs());
            let pinf = rp.norm() / (1.0 + norm_b);
            let dinf = rd.norm() / (1.0 + norm_c);
            last = (gap, pinf, dinf);

            let solution = || {
                let slack = self.prog.eval(&y);
                SdpSolution {
                    objective: self.prog.objective.dot(&y),
                    y: y.clone(),
                    slack,
                    iterations: it,
                    gap,
                    primal_residual: pinf,
                    dual_residual: dinf,
                }
            };
            if gap <= opts.gap_tolerance
                && pinf <= opts.feasibility_tolerance
                && dinf <= opts.feasibility_tolerance
            {
                return Ok(solution());
            }
            let near_optimal = gap <= opts.fallback_tolerance
                && pinf <= opts.fallback_tolerance
                && dinf <= opts.feasibility_tolerance;

            // A primal ray with A(X) ≈ 0 and ⟨C, X⟩ < 0 certifies that the
            // LMI has no solution.
            let tr_x = x.trace();
            if tr_x > 1e8 * xi_x {
                let ray_res = self.a_op(&x).norm() / tr_x;
                let ray_obj = pobj / tr_x;
                if ray_res < 1e-6 && ray_obj < -1e-8 {
                    return Err(SdpFailure {
                        reason: "LMI is infeasible (primal improving ray found)".into(),
                        iterations: it,
                        gap,
                        primal_residual: pinf,
                        dual_residual: dinf,
                    });
                }
            }

            let fail = |reason: &str| SdpFailure {
                reason: reason.into(),
                iterations: it,
                gap,
                primal_residual: pinf,
                dual_residual: dinf,
            };
            macro_rules! or_stop {
                ($e:expr, $why:expr) => {
                    match $e {
                        Some(v) => v,
                        None if near_optimal => return Ok(solution()),
                        None => return Err(fail($why)),
                    }
                };
            }
            let z_chol = or_stop!(Cholesky::new(z.clone()), "slack lost definiteness");
            let z_inv = z_chol.inverse();
            let g: Vec<DMatrix<f64>> = self.a.iter().map(|aj| &x * aj * &z_inv).collect();
            let mut schur = DMatrix::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let v = trace_prod(&self.a[i], &g[j]);
                    schur[(i, j)] = v;
                    schur[(j, i)] = v;
                }
            }
            let schur = or_stop!(
                Cholesky::new(schur.clone()).or_else(|| {
                    let bump = 1e-13 * schur.diagonal().amax().max(f64::MIN_POSITIVE);
                    Cholesky::new(schur + DMatrix::identity(m, m) * bump)
                }),
                "Schur complement is singular"
            );

            let xz = &x * &z;
            let pred = self.direction(&schur, &x, &z_inv, &rp, &rd, &(-&xz));
            let ap = or_stop!(
                max_step(&x, &pred.dx, 1.0),
                "primal iterate lost definiteness"
            );
            let ad = or_stop!(
                max_step(&z, &pred.dz, 1.0),
                "dual iterate lost definiteness"
            );
            let mu_aff = inner(&(&x + &pred.dx * ap), &(&z + &pred.dz * ad)) / n;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let rc =
                DMatrix::identity(self.dim, self.dim) * (sigma * mu) - &xz - &pred.dx * &pred.dz;
            let corr = self.direction(&schur, &x, &z_inv, &rp, &rd, &rc);
            let ap = or_stop!(
                max_step(&x, &corr.dx, opts.step_fraction),
                "primal step failed"
            );
            let ad = or_stop!(
                max_step(&z, &corr.dz, opts.step_fraction),
                "dual step failed"
            );
            x += &corr.dx * ap;
            y += &corr.dy * ad;
            z += &corr.dz * ad;
            x = symmetrize(&x);
            z = symmetrize(&z);
        }
        Err(SdpFailure {
            reason: "interior-point iterations stalled".into(),
            iterations: opts.max_iterations,
            gap: last.0,
            primal_residual: last.1,
            dual_residual: last.2,
        })
    }
}
