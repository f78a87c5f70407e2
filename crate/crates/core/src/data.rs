//! Input-state trajectory collection, the lifted data matrix and the rank
//! condition that makes two trajectories informative enough for synthesis.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::plant::StepOracle;
use crate::poly::MonomialDictionary;
use crate::region::Region;
use crate::{Error, Result};

/// Source of excitation inputs during data collection.
pub trait Excitation {
    fn next_input(&mut self, t: usize, x: &[f64]) -> Vec<f64>;
}

/// i.i.d. inputs drawn uniformly from a box.
pub struct UniformExcitation {
    region: Region,
    rng: ChaCha8Rng,
}

impl UniformExcitation {
    pub fn new(region: Region, seed: u64) -> Self {
        UniformExcitation {
            region,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn from_rng(region: Region, rng: ChaCha8Rng) -> Self {
        UniformExcitation { region, rng }
    }
}

impl Excitation for UniformExcitation {
    fn next_input(&mut self, _t: usize, _x: &[f64]) -> Vec<f64> {
        self.region.sample(&mut self.rng)
    }
}

/// The same input at every step.
pub struct ConstantExcitation(pub Vec<f64>);

impl Excitation for ConstantExcitation {
    fn next_input(&mut self, _t: usize, _x: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

/// Samples `(O, I, O⁺)` of one trajectory; column `t` of each matrix belongs
/// to the same time step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    states: DMatrix<f64>,
    inputs: DMatrix<f64>,
    successors: DMatrix<f64>,
}

impl TrajectoryBatch {
    pub fn new(
        states: DMatrix<f64>,
        inputs: DMatrix<f64>,
        successors: DMatrix<f64>,
    ) -> Result<Self> {
        let t = states.ncols();
        if t == 0 {
            return Err(Error::invalid(
                "trajectory must contain at least one sample",
            ));
        }
        check_dim("input samples", t, inputs.ncols())?;
        check_dim("successor samples", t, successors.ncols())?;
        check_dim(
            "successor state dimension",
            states.nrows(),
            successors.nrows(),
        )?;
        Ok(TrajectoryBatch {
            states,
            inputs,
            successors,
        })
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn successors(&self) -> &DMatrix<f64> {
        &self.successors
    }

    pub fn horizon(&self) -> usize {
        self.states.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    /// Checks every recorded successor against the oracle.
    pub fn verify_against(&self, oracle: &dyn StepOracle, tol: f64) -> Result<()> {
        for t in 0..self.horizon() {
            let x: Vec<f64> = self.states.column(t).iter().copied().collect();
            let u: Vec<f64> = self.inputs.column(t).iter().copied().collect();
            let next = oracle.step(&x, &u)?;
            let dev = next
                .iter()
                .zip(self.successors.column(t).iter())
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            if dev > tol {
                return Err(Error::invalid(format!(
                    "sample {t} disagrees with the plant by {dev:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// Reorders samples; rank and all data identities are unaffected.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        check_dim("permutation length", self.horizon(), order.len())?;
        let pick = |m: &DMatrix<f64>| m.select_columns(order.iter());
        TrajectoryBatch::new(
            pick(&self.states),
            pick(&self.inputs),
            pick(&self.successors),
        )
    }

    pub fn to_csv(&self) -> String {
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut out = String::from("t");
        for j in 1..=n {
            let _ = write!(out, ",x{j}");
        }
        for j in 1..=m {
            let _ = write!(out, ",u{j}");
        }
        for j in 1..=n {
            let _ = write!(out, ",xp{j}");
        }
        out.push('\n');
        for t in 0..self.horizon() {
            out.push_str(&t.to_string());
            let cols = self
                .states
                .column(t)
                .iter()
                .chain(self.inputs.column(t).iter())
                .chain(self.successors.column(t).iter())
                .copied()
                .collect::<Vec<_>>();
            for v in cols {
                let _ = write!(out, ",{}", fmt_f64(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::invalid("empty trajectory file"))?
            .split(',')
            .map(str::trim)
            .collect();
        let n = header.iter().filter(|h| h.starts_with("xp")).count();
        let m = header.iter().filter(|h| h.starts_with('u')).count();
        if header.first() != Some(&"t") || header.len() != 1 + 2 * n + m || n == 0 {
            return Err(Error::invalid(
                "trajectory header must be t,x1..xn,u1..um,xp1..xpn",
            ));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != header.len() {
                return Err(Error::invalid(format!(
                    "row {i} has {} fields",
                    cells.len()
                )));
            }
            let t: usize = cells[0]
                .parse()
                .map_err(|_| Error::invalid(format!("row {i}: bad step index")))?;
            if t != i {
                return Err(Error::invalid(format!(
                    "row {i}: step index {t} out of order"
                )));
            }
            rows.push(
                cells[1..]
                    .iter()
                    .map(|c| c.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::invalid(format!("row {i}: bad number")))?,
            );
        }
        let horizon = rows.len();
        let states = DMatrix::from_fn(n, horizon, |j, t| rows[t][j]);
        let inputs = DMatrix::from_fn(m, horizon, |j, t| rows[t][n + j]);
        let successors = DMatrix::from_fn(n, horizon, |j, t| rows[t][n + m + j]);
        TrajectoryBatch::new(states, inputs, successors)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text).map_err(|e| Error::artifact(path, e.to_string()))
    }
}

/// Seventeen significant digits: enough for an exact `f64` round trip.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Simulates `horizon` steps from `x0`. The optional guard box aborts runs
/// whose excitation is too aggressive for the system.
pub fn collect_trajectory(
    oracle: &dyn StepOracle,
    x0: &[f64],
    policy: &mut dyn Excitation,
    horizon: usize,
    guard: Option<&Region>,
) -> Result<TrajectoryBatch> {
    let (n, m) = (oracle.state_dim(), oracle.input_dim());
    check_dim("initial state", n, x0.len())?;
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut states = DMatrix::zeros(n, horizon);
    let mut inputs = DMatrix::zeros(m, horizon);
    let mut successors = DMatrix::zeros(n, horizon);
    let mut x = x0.to_vec();
    for t in 0..horizon {
        let u = policy.next_input(t, &x);
        check_dim("excitation input", m, u.len())?;
        let next = oracle.step(&x, &u)?;
        if let Some(g) = guard {
            if !g.contains(&next) || next.iter().any(|v| !v.is_finite()) {
                return Err(Error::GuardExceeded {
                    step: t + 1,
                    state: next,
                });
            }
        }
        states.set_column(t, &nalgebra::DVector::from_column_slice(&x));
        inputs.set_column(t, &nalgebra::DVector::from_column_slice(&u));
        successors.set_column(t, &nalgebra::DVector::from_column_slice(&next));
        x = next;
    }
    TrajectoryBatch::new(states, inputs, successors)
}

/// The lifted matrix `𝕄 = [M(x(0)) … M(x(T−1))]` with its spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrices {
    lifted: DMatrix<f64>,
    rank: usize,
    singular_values: Vec<f64>,
    rank_threshold: f64,
}

impl DataMatrices {
    pub fn lifted(&self) -> &DMatrix<f64> {
        &self.lifted
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn rank_threshold(&self) -> f64 {
        self.rank_threshold
    }
}

pub fn build_data_matrix(
    dict: &MonomialDictionary,
    batch: &TrajectoryBatch,
) -> Result<DataMatrices> {
    check_dim("dictionary variables", batch.state_dim(), dict.nvars())?;
    let t = batch.horizon();
    let mut lifted = DMatrix::zeros(dict.len(), t);
    for k in 0..t {
        let x: Vec<f64> = batch.states().column(k).iter().copied().collect();
        lifted.set_column(k, &dict.eval(&x)?);
    }
    let mut singular_values: Vec<f64> = lifted.singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let sigma1 = singular_values.first().copied().unwrap_or(0.0);
    let rank_threshold = sigma1 * t as f64 * f64::EPSILON * 1e3;
    let rank = singular_values
        .iter()
        .filter(|s| **s > rank_threshold && **s > 0.0)
        .count();
    Ok(DataMatrices {
        lifted,
        rank,
        singular_values,
        rank_threshold,
    })
}

/// Outcome of the full-row-rank test on `𝕄`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub pass: bool,
    pub rank: usize,
    pub required_rank: usize,
    pub horizon: usize,
    pub min_horizon: usize,
    pub singular_values: Vec<f64>,
    pub smallest_singular_value: f64,
    pub threshold: f64,
}

/// Passes iff `T ≥ M + 1` and the numerical rank equals `M`.
pub fn check_rank(dm: &DataMatrices, dict_len: usize, horizon: usize) -> RankReport {
    let smallest = dm.singular_values.last().copied().unwrap_or(0.0);
    RankReport {
        pass: horizon > dict_len && dm.rank == dict_len,
        rank: dm.rank,
        required_rank: dict_len,
        horizon,
        min_horizon: dict_len + 1,
        singular_values: dm.singular_values.clone(),
        smallest_singular_value: smallest,
        threshold: dm.rank_threshold,
    }
}

/// Uniform excitation over a state box (initial state) and an input box.
#[derive(Clone, Debug)]
pub struct ExcitationPlan {
    pub initial_region: Region,
    pub input_region: Region,
    pub guard: Option<Region>,
}

#[derive(Clone, Debug)]
pub struct Collected {
    pub batch: TrajectoryBatch,
    pub data: DataMatrices,
    pub report: RankReport,
    pub attempts: usize,
}

/// Repeats collection with fresh initial states and inputs until the rank
/// condition holds.
pub fn collect_with_retry(
    oracle: &dyn StepOracle,
    dict: &MonomialDictionary,
    plan: &ExcitationPlan,
    horizon: usize,
    max_attempts: usize,
    seed: u64,
) -> Result<Collected> {
    if max_attempts == 0 {
        return Err(Error::invalid("max_attempts must be at least 1"));
    }
    let mut best_rank = 0;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=max_attempts {
        let x0 = plan.initial_region.sample(&mut master);
        let stream = ChaCha8Rng::from_rng(&mut master).expect("seeding from ChaCha never fails");
        let mut policy = UniformExcitation::from_rng(plan.input_region.clone(), stream);
        let batch = match collect_trajectory(oracle, &x0, &mut policy, horizon, plan.guard.as_ref())
        {
            Ok(b) => b,
            Err(Error::GuardExceeded { .. }) => continue,
            Err(e) => return Err(e),
        };
        let data = build_data_matrix(dict, &batch)?;
        let report = check_rank(&data, dict.len(), horizon);
        best_rank = best_rank.max(report.rank);
        if report.pass {
            return Ok(Collected {
                batch,
                data,
                report,
                attempts: attempt,
            });
        }
    }
    Err(Error::Excitation {
        attempts: max_attempts,
        best_rank,
        required: dict.len(),
    })
}
