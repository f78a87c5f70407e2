//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use ddabs_core::abstraction::{Grid, SymbolicModel, OUT_OF_DOMAIN};
use ddabs_core::certify::{
    assemble_constraints, solve_asf, verify_certificate, AsfCertificate, Dataset, SolveOptions,
    VerificationReport, VerifyOptions,
};
use ddabs_core::data::{collect_with_retry, Collected, ExcitationPlan};
use ddabs_core::plant::{CaseStudy, Plant};
use ddabs_core::poly::{build_upsilon, interface_basis, MonomialDictionary, PolynomialMatrix};
use ddabs_core::region::Region;
use ddabs_core::runtime::HybridInterface;
use rand::Rng;

pub const GAMMA: f64 = 0.99;
pub const MU: f64 = 0.01;

pub struct Fixture {
    pub plant: Plant,
    pub dict: MonomialDictionary,
    pub upsilon: PolynomialMatrix,
    pub first: Collected,
    pub second: Collected,
    pub cert: AsfCertificate,
    pub report: VerificationReport,
    pub iface: HybridInterface,
}

impl Fixture {
    pub fn first(&self) -> Dataset<'_> {
        ds(&self.first)
    }

    pub fn second(&self) -> Dataset<'_> {
        ds(&self.second)
    }

    pub fn verify(&self, cert: &AsfCertificate) -> VerificationReport {
        let opts = VerifyOptions::new(self.plant.state_box().clone());
        verify_certificate(cert, &self.upsilon, self.first(), self.second(), &opts).unwrap()
    }
}

/// Two trajectories of length `horizon` from the benchmark plant and the
/// certificate solved from them.
pub fn fixture(which: CaseStudy, horizon: usize, seed: u64) -> Fixture {
    let plant = Plant::case_study(which);
    let dict = MonomialDictionary::full(2, 2).unwrap();
    let upsilon = build_upsilon(&dict);
    let plan = ExcitationPlan {
        initial_region: plant.state_box().clone(),
        input_region: plant.input_box().clone(),
        guard: None,
    };
    let first = collect_with_retry(&plant, &dict, &plan, horizon, 20, 2 * seed).unwrap();
    let second = collect_with_retry(&plant, &dict, &plan, horizon, 20, 2 * seed + 1).unwrap();
    let cs = assemble_constraints(
        &dict,
        &upsilon,
        ds(&first),
        ds(&second),
        &interface_basis(2, 2),
    )
    .unwrap();
    let cert = solve_asf(&cs, GAMMA, MU, &SolveOptions::default()).unwrap();
    let opts = VerifyOptions::new(plant.state_box().clone());
    let report = verify_certificate(&cert, &upsilon, ds(&first), ds(&second), &opts).unwrap();
    let iface = HybridInterface::new(&cert, &report, &first.batch, &second.batch).unwrap();
    Fixture {
        plant,
        dict,
        upsilon,
        first,
        second,
        cert,
        report,
        iface,
    }
}

pub fn ds(c: &Collected) -> Dataset<'_> {
    Dataset {
        batch: &c.batch,
        data: &c.data,
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

pub fn line_grid(n: usize) -> Grid {
    Grid::from_counts(Region::cube(1, 0.0, n as f64).unwrap(), vec![n]).unwrap()
}

/// A random deterministic model with some transitions leaving the domain.
pub fn random_model<R: Rng>(rng: &mut R, max_states: usize, max_inputs: usize) -> SymbolicModel {
    let ns = rng.gen_range(1..=max_states);
    let nu = rng.gen_range(1..=max_inputs);
    let trans = (0..ns * nu)
        .map(|_| {
            if rng.gen_bool(0.15) {
                OUT_OF_DOMAIN
            } else {
                rng.gen_range(0..ns as u32)
            }
        })
        .collect();
    SymbolicModel::from_table(line_grid(ns), line_grid(nu), trans).unwrap()
}

pub fn random_mask<R: Rng>(rng: &mut R, n: usize, p: f64) -> Vec<bool> {
    (0..n).map(|_| rng.gen_bool(p)).collect()
}

/// States from which some input sequence keeps the run in `safe` for
/// `|X̂|` steps. By pigeonhole such a run revisits a state, so it can be
/// extended forever: this is exactly the maximal controlled-invariant set.
pub fn safety_oracle(m: &SymbolicModel, safe: &[bool]) -> Vec<bool> {
    let ns = m.num_states();
    let mut ok = safe.to_vec();
    for _ in 0..ns {
        ok = (0..ns)
            .map(|s| {
                safe[s] && (0..m.num_inputs()).any(|u| m.successor(s, u).is_some_and(|t| ok[t]))
            })
            .collect();
    }
    ok
}

/// Forward search per state over non-avoid states.
pub fn reach_avoid_oracle(m: &SymbolicModel, target: &[bool], avoid: &[bool]) -> Vec<bool> {
    let ns = m.num_states();
    (0..ns)
        .map(|start| {
            if avoid[start] {
                return false;
            }
            let mut seen = vec![false; ns];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(s) = stack.pop() {
                if target[s] {
                    return true;
                }
                for u in 0..m.num_inputs() {
                    if let Some(t) = m.successor(s, u) {
                        if !seen[t] && !avoid[t] {
                            seen[t] = true;
                            stack.push(t);
                        }
                    }
                }
            }
            false
        })
        .collect()
}
