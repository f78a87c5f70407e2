//! The hybrid interface map and closed-loop simulation of the concrete
//! plant driven by an abstract controller.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::abstraction::SymbolicModel;
use crate::certify::{eval_asf, AsfCertificate, VerificationReport};
use crate::data::{fmt_f64, TrajectoryBatch};
use crate::error::check_dim;
use crate::linalg::vec_from;
use crate::plant::StepOracle;
use crate::poly::PolynomialMatrix;
use crate::synthesis::{Specification, SymbolicController};
use crate::{Error, Result};

/// `u = K₁(x)·x − K₂(x̂)·x̂ + û` with `Kᵢ = 𝓘ᵢ·Yᵢ·P`.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridInterface {
    k1: PolynomialMatrix,
    k2: PolynomialMatrix,
    g: Option<(PolynomialMatrix, PolynomialMatrix)>,
}

impl HybridInterface {
    /// Requires a passing verification report for `cert`.
    pub fn new(
        cert: &AsfCertificate,
        report: &VerificationReport,
        first: &TrajectoryBatch,
        second: &TrajectoryBatch,
    ) -> Result<Self> {
        if !report.passed {
            return Err(Error::Unverified(
                "certificate failed verification; refusing to build an interface".into(),
            ));
        }
        check_dim("first trajectory horizon", cert.horizon, first.horizon())?;
        check_dim("second trajectory horizon", cert.horizon, second.horizon())?;
        check_dim(
            "trajectory input dimensions",
            first.input_dim(),
            second.input_dim(),
        )?;
        let id = DMatrix::identity(cert.horizon, cert.horizon);
        let g1 = cert.y1.sandwich(&id, &cert.p)?;
        let g2 = cert.y2.sandwich(&id, &cert.p)?;
        let k1 = g1.sandwich(first.inputs(), &DMatrix::identity(cert.n, cert.n))?;
        let k2 = g2.sandwich(second.inputs(), &DMatrix::identity(cert.n, cert.n))?;
        Ok(HybridInterface {
            k1,
            k2,
            g: Some((g1, g2)),
        })
    }

    /// An interface given directly by its state-feedback gains.
    pub fn from_gain_polynomials(k1: PolynomialMatrix, k2: PolynomialMatrix) -> Result<Self> {
        if k1.shape() != k2.shape() || k1.shape().1 != k1.nvars() {
            return Err(Error::invalid(
                "interface gains must both be m×n in n variables",
            ));
        }
        Ok(HybridInterface { k1, k2, g: None })
    }

    pub fn state_dim(&self) -> usize {
        self.k1.shape().1
    }

    pub fn input_dim(&self) -> usize {
        self.k1.shape().0
    }

    pub fn gains(&self) -> (&PolynomialMatrix, &PolynomialMatrix) {
        (&self.k1, &self.k2)
    }

    /// `Gᵢ = Yᵢ·P` (`T×n`), when built from a certificate.
    pub fn data_gains(&self) -> Option<(&PolynomialMatrix, &PolynomialMatrix)> {
        self.g.as_ref().map(|(a, b)| (a, b))
    }

    pub fn input(&self, x: &[f64], xhat: &[f64], uhat: &[f64]) -> Result<Vec<f64>> {
        check_dim("interface abstract input", self.input_dim(), uhat.len())?;
        let u =
            self.k1.eval(x)? * vec_from(x) - self.k2.eval(xhat)? * vec_from(xhat) + vec_from(uhat);
        Ok(u.iter().copied().collect())
    }
}

/// How the abstract state advances during simulation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstractUpdate {
    /// Follow the stored transition table.
    #[default]
    Table,
    /// Re-quantize the concrete state each step.
    Requantize,
}

#[derive(Clone, Debug)]
pub struct SimulationOptions {
    pub max_steps: usize,
    pub update: AbstractUpdate,
    /// Clamp interface inputs to the input box instead of only logging them.
    pub clamp_input: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            max_steps: 100,
            update: AbstractUpdate::Table,
            clamp_input: false,
        }
    }
}

/// Closeness data used to monitor a run.
#[derive(Clone, Debug)]
pub struct Monitor {
    pub p: DMatrix<f64>,
    pub epsilon: f64,
    /// Level `max(ρ̄ν, ψ̄)` of the simulation relation.
    pub relation_level: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub k: usize,
    pub x: Vec<f64>,
    pub xhat: Vec<f64>,
    /// NaN on the terminal row.
    pub uhat: Vec<f64>,
    pub u: Vec<f64>,
    pub error: f64,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub stayed_safe: bool,
    pub reached_target: bool,
    pub hit_avoid: bool,
    pub eps_violated: bool,
    pub max_error: f64,
    pub steps: usize,
    pub epsilon: f64,
    pub input_violations: usize,
    pub relation_violations: usize,
    /// The abstract successor left the controller domain.
    pub domain_exit: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTrace {
    pub steps: Vec<TraceStep>,
    pub epsilon: f64,
    pub verdicts: Verdicts,
}

fn nearest_in_domain(ctrl: &SymbolicController, x: &[f64]) -> Option<Vec<f64>> {
    let g = ctrl.state_grid();
    ctrl.domain()
        .into_iter()
        .map(|s| g.point(s))
        .min_by(|a, b| dist2(a, x).total_cmp(&dist2(b, x)))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Runs the concrete plant under `ctrl` refined through `iface`.
///
/// Starts at `x̂₀ = Π(x₀)`; stops after `max_steps`, when the plant state
/// enters the target or an avoid box, or when no abstract action is defined.
pub fn simulate_closed_loop(
    plant: &dyn StepOracle,
    model: &SymbolicModel,
    ctrl: &SymbolicController,
    iface: &HybridInterface,
    monitor: &Monitor,
    x0: &[f64],
    opts: &SimulationOptions,
) -> Result<SimulationTrace> {
    let n = plant.state_dim();
    check_dim("initial state", n, x0.len())?;
    check_dim("interface state dimension", n, iface.state_dim())?;
    check_dim(
        "interface input dimension",
        plant.input_dim(),
        iface.input_dim(),
    )?;
    if ctrl.state_grid() != model.state_grid() || ctrl.input_grid() != model.input_grid() {
        return Err(Error::invalid(
            "controller and symbolic model use different grids",
        ));
    }
    let spec = &ctrl
        .spec()
        .ok_or_else(|| Error::invalid("controller carries no specification"))?
        .boxes;
    let sg = model.state_grid();
    let ig = model.input_grid();
    let ubox = ig.bounds();
    let q0 = sg.quantize(x0);
    if !q0.inside || !ctrl.in_domain(q0.index) {
        return Err(Error::OutsideDomain {
            state: x0.to_vec(),
            suggestion: nearest_in_domain(ctrl, x0),
        });
    }

    let (safe_box, target_box, avoid) = match spec {
        Specification::Safety { safe } => (Some(safe), None, &[][..]),
        Specification::ReachAvoid { target, avoid } => (None, Some(target), &avoid[..]),
    };
    let mut v = Verdicts {
        stayed_safe: true,
        reached_target: false,
        hit_avoid: false,
        eps_violated: false,
        max_error: 0.0,
        steps: 0,
        epsilon: monitor.epsilon,
        input_violations: 0,
        relation_violations: 0,
        domain_exit: false,
    };
    let observe = |v: &mut Verdicts, k: usize, x: &[f64], xhat: &[f64]| -> Result<(f64, f64)> {
        let error = dist2(x, xhat).sqrt();
        let sval = eval_asf(&monitor.p, x, xhat)?;
        // NaN comparisons are false: a missing abstract state counts as a violation.
        if !(error <= v.max_error) {
            v.max_error = error;
        }
        v.eps_violated |= !(error <= monitor.epsilon);
        if !(sval <= monitor.relation_level) {
            v.relation_violations += 1;
        }
        v.stayed_safe &= safe_box.unwrap_or(sg.bounds()).contains(x);
        v.hit_avoid |= avoid.iter().any(|a| a.contains(x));
        v.reached_target |= target_box.is_some_and(|t| t.contains(x));
        v.steps = k;
        Ok((error, sval))
    };
    let nan_m = vec![f64::NAN; ig.dim()];
    let mut x = x0.to_vec();
    let mut xhat = q0.point;
    let mut s = Some(q0.index);
    let mut steps = Vec::with_capacity(opts.max_steps + 1);
    for k in 0..=opts.max_steps {
        let (error, sval) = observe(&mut v, k, &x, &xhat)?;
        let action = match s {
            Some(cell) if k < opts.max_steps && !v.hit_avoid && !v.reached_target => {
                ctrl.choice(cell).map(|ui| (cell, ui))
            }
            _ => None,
        };
        let Some((cell, ui)) = action else {
            steps.push(TraceStep {
                k,
                x,
                xhat,
                uhat: nan_m.clone(),
                u: nan_m.clone(),
                error,
                s: sval,
            });
            break;
        };
        let uhat = ig.point(ui);
        let mut u = iface.input(&x, &xhat, &uhat)?;
        if !ubox.contains(&u) {
            v.input_violations += 1;
            if opts.clamp_input {
                for (j, uj) in u.iter_mut().enumerate() {
                    *uj = uj.clamp(ubox.lo()[j], ubox.hi()[j]);
                }
            }
        }
        let x_next = plant.step(&x, &u)?;
        steps.push(TraceStep {
            k,
            x,
            xhat,
            uhat,
            u,
            error,
            s: sval,
        });
        x = x_next;
        s = match opts.update {
            AbstractUpdate::Table => model.successor(cell, ui),
            AbstractUpdate::Requantize => Some(sg.quantize(&x).index),
        };
        xhat = s.map_or_else(|| vec![f64::NAN; n], |c| sg.point(c));
        if !s.is_some_and(|c| ctrl.in_domain(c)) {
            v.domain_exit = true;
            s = None;
        }
    }
    Ok(SimulationTrace {
        steps,
        epsilon: monitor.epsilon,
        verdicts: v,
    })
}

fn header(n: usize, m: usize) -> String {
    let mut cols = vec!["k".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=n).map(|i| format!("xh{i}")));
    cols.extend((1..=m).map(|i| format!("uh{i}")));
    cols.extend((1..=m).map(|i| format!("u{i}")));
    cols.push("err".into());
    cols.push("S".into());
    cols.join(",")
}

pub fn trace_to_csv(steps: &[TraceStep], n: usize, m: usize) -> String {
    let mut out = header(n, m);
    out.push('\n');
    for st in steps {
        let mut row = vec![st.k.to_string()];
        for v in st.x.iter().chain(&st.xhat).chain(&st.uhat).chain(&st.u) {
            row.push(fmt_f64(*v));
        }
        row.push(fmt_f64(st.error));
        row.push(fmt_f64(st.s));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn export_trace(trace: &SimulationTrace, n: usize, m: usize, path: &Path) -> Result<()> {
    std::fs::write(path, trace_to_csv(&trace.steps, n, m)).map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceStep>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text).map_err(|r| Error::artifact(path, r))
}

fn parse_trace(text: &str) -> std::result::Result<Vec<TraceStep>, String> {
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().ok_or("empty file")?.split(',').collect();
    let count = |p: &str| {
        head.iter()
            .filter(|h| {
                h.strip_prefix(p)
                    .is_some_and(|r| r.parse::<usize>().is_ok())
            })
            .count()
    };
    let (n, m) = (count("x"), count("u"));
    if head.len() != 3 + 2 * n + 2 * m || head.join(",") != header(n, m) {
        return Err("unexpected trace header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != head.len() {
                return Err(format!("row {} has {} fields", i + 1, f.len()));
            }
            let k = f[0].parse().map_err(|e| format!("row {}: {e}", i + 1))?;
            let vals = f[1..]
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| format!("row {}: {e}", i + 1))?;
            Ok(TraceStep {
                k,
                x: vals[..n].to_vec(),
                xhat: vals[n..2 * n].to_vec(),
                uhat: vals[2 * n..2 * n + m].to_vec(),
                u: vals[2 * n + m..2 * n + 2 * m].to_vec(),
                error: vals[2 * n + 2 * m],
                s: vals[2 * n + 2 * m + 1],
            })
        })
        .collect()
}
