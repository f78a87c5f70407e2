//! Fixed-point controller synthesis on a deterministic symbolic model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abstraction::{
    decode_table, encode_table, sidecar_path, write_json, Grid, SymbolicModel, CONTROLLER_MAGIC,
    OUT_OF_DOMAIN,
};
use crate::error::check_dim;
use crate::region::Region;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    Safety,
    ReachAvoid,
}

/// Target sets in concrete coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Specification {
    Safety { safe: Region },
    ReachAvoid { target: Region, avoid: Vec<Region> },
}

impl Specification {
    pub fn kind(&self) -> SpecKind {
        match self {
            Specification::Safety { .. } => SpecKind::Safety,
            Specification::ReachAvoid { .. } => SpecKind::ReachAvoid,
        }
    }
}

/// How boxes are mapped to grid cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMode {
    /// A cell belongs to a box iff its center does.
    #[default]
    Nominal,
    /// Safe and target boxes shrink by `ε`, avoid boxes grow by `ε`.
    Robust,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StatePredicates {
    Safety { safe: Vec<bool> },
    ReachAvoid { target: Vec<bool>, avoid: Vec<bool> },
}

pub fn spec_predicates(
    grid: &Grid,
    spec: &Specification,
    mode: MarginMode,
    epsilon: f64,
) -> Result<StatePredicates> {
    if mode == MarginMode::Robust && !(epsilon >= 0.0) {
        return Err(Error::invalid("robust mode needs a non-negative epsilon"));
    }
    let margin = if mode == MarginMode::Robust {
        epsilon
    } else {
        0.0
    };
    let shrink = |name: &str, r: &Region| -> Result<Region> {
        check_dim("specification box", grid.dim(), r.dim())?;
        r.deflate(margin)
            .ok_or_else(|| Error::EmptySpec { name: name.into() })
    };
    let label = |r: &Region| -> Vec<bool> { grid.points().map(|p| r.contains(&p)).collect() };
    Ok(match spec {
        Specification::Safety { safe } => StatePredicates::Safety {
            safe: label(&shrink("safe", safe)?),
        },
        Specification::ReachAvoid { target, avoid } => {
            let target = label(&shrink("target", target)?);
            let mut hit = vec![false; grid.len()];
            for a in avoid {
                check_dim("avoid box", grid.dim(), a.dim())?;
                for (h, l) in hit.iter_mut().zip(label(&a.inflate(margin))) {
                    *h |= l;
                }
            }
            StatePredicates::ReachAvoid { target, avoid: hit }
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisMetadata {
    pub iterations: usize,
    /// Size of the candidate set after each sweep.
    pub set_sizes: Vec<usize>,
    /// Number of admissible inputs per domain state (0 elsewhere).
    pub admissible_inputs: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicController {
    kind: SpecKind,
    state_grid: Grid,
    input_grid: Grid,
    choice: Vec<u32>,
    rank: Option<Vec<u32>>,
    metadata: SynthesisMetadata,
    spec: Option<SpecRecord>,
}

/// Specification the controller was synthesized against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecRecord {
    pub boxes: Specification,
    pub mode: MarginMode,
    pub epsilon: f64,
}

impl SymbolicController {
    pub fn kind(&self) -> SpecKind {
        self.kind
    }

    pub fn state_grid(&self) -> &Grid {
        &self.state_grid
    }

    pub fn input_grid(&self) -> &Grid {
        &self.input_grid
    }

    pub fn choice(&self, state: usize) -> Option<usize> {
        let c = self.choice[state];
        (c != OUT_OF_DOMAIN).then_some(c as usize)
    }

    pub fn in_domain(&self, state: usize) -> bool {
        self.choice[state] != OUT_OF_DOMAIN
    }

    pub fn domain(&self) -> Vec<usize> {
        (0..self.choice.len())
            .filter(|s| self.in_domain(*s))
            .collect()
    }

    pub fn domain_mask(&self) -> Vec<bool> {
        self.choice.iter().map(|c| *c != OUT_OF_DOMAIN).collect()
    }

    pub fn domain_size(&self) -> usize {
        self.choice.iter().filter(|c| **c != OUT_OF_DOMAIN).count()
    }

    /// Steps-to-target of a reach-avoid domain state.
    pub fn rank(&self, state: usize) -> Option<u32> {
        self.rank
            .as_ref()
            .map(|r| r[state])
            .filter(|r| *r != OUT_OF_DOMAIN)
    }

    pub fn metadata(&self) -> &SynthesisMetadata {
        &self.metadata
    }

    pub fn spec(&self) -> Option<&SpecRecord> {
        self.spec.as_ref()
    }

    pub fn with_spec(mut self, spec: SpecRecord) -> Self {
        self.spec = Some(spec);
        self
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = encode_table(
            CONTROLLER_MAGIC,
            &self.state_grid,
            &self.input_grid,
            &self.choice,
        );
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let sidecar = ControllerSidecar {
            spec_kind: self.kind,
            spec: self.spec.clone(),
            iterations: self.metadata.iterations,
            domain_size: self.domain_size(),
            set_sizes: self.metadata.set_sizes.clone(),
            admissible_inputs: self.metadata.admissible_inputs.clone(),
            rank: self.rank.clone(),
        };
        write_json(&sidecar_path(path), &sidecar)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (state_grid, input_grid, choice) =
            decode_table(CONTROLLER_MAGIC, &bytes, |sg, _| sg.len())
                .map_err(|r| Error::artifact(path, r))?;
        let side = sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let s: ControllerSidecar =
            serde_json::from_str(&text).map_err(|e| Error::artifact(&side, e.to_string()))?;
        let nu = input_grid.len() as u32;
        let ns = state_grid.len();
        if choice.iter().any(|c| *c != OUT_OF_DOMAIN && *c >= nu)
            || s.admissible_inputs.len() != ns
            || s.rank.as_ref().is_some_and(|r| r.len() != ns)
        {
            return Err(Error::artifact(
                path,
                "controller table inconsistent with its grids",
            ));
        }
        Ok(SymbolicController {
            kind: s.spec_kind,
            state_grid,
            input_grid,
            choice,
            rank: s.rank,
            metadata: SynthesisMetadata {
                iterations: s.iterations,
                set_sizes: s.set_sizes,
                admissible_inputs: s.admissible_inputs,
            },
            spec: s.spec,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ControllerSidecar {
    spec_kind: SpecKind,
    spec: Option<SpecRecord>,
    iterations: usize,
    domain_size: usize,
    set_sizes: Vec<usize>,
    admissible_inputs: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rank: Option<Vec<u32>>,
}

/// Maximal controlled-invariant subset of `safe`.
pub fn synth_safety(model: &SymbolicModel, safe: &[bool]) -> Result<SymbolicController> {
    let ns = model.num_states();
    let nu = model.num_inputs();
    check_dim("safe predicate", ns, safe.len())?;
    let mut set = safe.to_vec();
    let mut size = set.iter().filter(|b| **b).count();
    let mut set_sizes = vec![];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        for s in 0..ns {
            if set[s] && !(0..nu).any(|u| model.successor(s, u).is_some_and(|t| set[t])) {
                set[s] = false;
                size -= 1;
                changed = true;
            }
        }
        set_sizes.push(size);
        if !changed {
            break;
        }
    }
    let mut choice = vec![OUT_OF_DOMAIN; ns];
    let mut admissible_inputs = vec![0u32; ns];
    for s in (0..ns).filter(|s| set[*s]) {
        let ok = |u: &usize| model.successor(s, *u).is_some_and(|t| set[t]);
        choice[s] = (0..nu).find(ok).expect("invariant state has an input") as u32;
        admissible_inputs[s] = (0..nu).filter(ok).count() as u32;
    }
    Ok(SymbolicController {
        kind: SpecKind::Safety,
        state_grid: model.state_grid().clone(),
        input_grid: model.input_grid().clone(),
        choice,
        rank: None,
        metadata: SynthesisMetadata {
            iterations,
            set_sizes,
            admissible_inputs,
        },
        spec: None,
    })
}

/// States that can be steered into `target` without touching `avoid`.
pub fn synth_reach_avoid(
    model: &SymbolicModel,
    target: &[bool],
    avoid: &[bool],
) -> Result<SymbolicController> {
    let ns = model.num_states();
    let nu = model.num_inputs();
    check_dim("target predicate", ns, target.len())?;
    check_dim("avoid predicate", ns, avoid.len())?;
    let mut rank = vec![OUT_OF_DOMAIN; ns];
    let mut choice = vec![OUT_OF_DOMAIN; ns];
    let mut size = 0;
    for s in 0..ns {
        if target[s] && !avoid[s] {
            rank[s] = 0;
            size += 1;
        }
    }
    let mut set_sizes = vec![size];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        for s in 0..ns {
            if avoid[s] || rank[s] != OUT_OF_DOMAIN {
                continue;
            }
            let hit = (0..nu).find_map(|u| {
                model
                    .successor(s, u)
                    .filter(|t| rank[*t] != OUT_OF_DOMAIN)
                    .map(|t| (u, rank[t]))
            });
            if let Some((u, r)) = hit {
                rank[s] = r + 1;
                choice[s] = u as u32;
                size += 1;
                changed = true;
            }
        }
        set_sizes.push(size);
        if !changed {
            break;
        }
    }
    let in_set = |t: usize| rank[t] != OUT_OF_DOMAIN;
    let mut admissible_inputs = vec![0u32; ns];
    for s in (0..ns).filter(|s| in_set(*s)) {
        let ok = |u: &usize| match model.successor(s, *u) {
            Some(t) if rank[s] == 0 => in_set(t),
            Some(t) => in_set(t) && rank[t] < rank[s],
            None => false,
        };
        admissible_inputs[s] = (0..nu).filter(ok).count() as u32;
        if rank[s] == 0 {
            // Target cells: keep the run inside the winning set, if possible.
            choice[s] = (0..nu).find(ok).unwrap_or(0) as u32;
        }
    }
    Ok(SymbolicController {
        kind: SpecKind::ReachAvoid,
        state_grid: model.state_grid().clone(),
        input_grid: model.input_grid().clone(),
        choice,
        rank: Some(rank),
        metadata: SynthesisMetadata {
            iterations,
            set_sizes,
            admissible_inputs,
        },
        spec: None,
    })
}

/// Labels the grid, synthesizes, and records the specification.
pub fn synthesize(
    model: &SymbolicModel,
    spec: &Specification,
    mode: MarginMode,
    epsilon: f64,
) -> Result<SymbolicController> {
    let ctrl = match spec_predicates(model.state_grid(), spec, mode, epsilon)? {
        StatePredicates::Safety { safe } => synth_safety(model, &safe)?,
        StatePredicates::ReachAvoid { target, avoid } => synth_reach_avoid(model, &target, &avoid)?,
    };
    Ok(ctrl.with_spec(SpecRecord {
        boxes: spec.clone(),
        mode,
        epsilon,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Grid {
        Grid::from_counts(Region::cube(1, 0.0, n as f64).unwrap(), vec![n]).unwrap()
    }

    fn model(trans: Vec<u32>, ns: usize, nu: usize) -> SymbolicModel {
        SymbolicModel::from_table(line(ns), line(nu), trans).unwrap()
    }

    const OUT: u32 = OUT_OF_DOMAIN;

    #[test]
    fn two_state_safety() {
        let m = model(vec![0, OUT, OUT, OUT], 2, 2);
        let c = synth_safety(&m, &[true, true]).unwrap();
        assert_eq!(c.domain(), vec![0]);
        assert_eq!(c.choice(0), Some(0));
        assert_eq!(c.choice(1), None);
    }

    #[test]
    fn identity_safety_converges_at_once() {
        let m = model(vec![0, 0, 1, 1, 2, 2], 3, 2);
        let c = synth_safety(&m, &[true; 3]).unwrap();
        assert_eq!(c.domain_size(), 3);
        assert_eq!(c.metadata().iterations, 1);
        assert_eq!(c.metadata().admissible_inputs, vec![2, 2, 2]);
        assert_eq!(synth_safety(&m, &[false; 3]).unwrap().domain_size(), 0);
    }

    #[test]
    fn chain_reach_ranks() {
        let m = model(vec![1, 2, 2], 3, 1);
        let c = synth_reach_avoid(&m, &[false, false, true], &[false; 3]).unwrap();
        assert_eq!(c.domain(), vec![0, 1, 2]);
        assert_eq!(
            (c.rank(0), c.rank(1), c.rank(2)),
            (Some(2), Some(1), Some(0))
        );
        let none = synth_reach_avoid(&m, &[false, false, true], &[false, false, true]).unwrap();
        assert_eq!(none.domain_size(), 0);
    }

    #[test]
    fn target_only_reachable_through_obstacle() {
        // s0 → s1 → s3 and s2 → s1; s1 is an obstacle, s3 the target.
        let m = model(vec![1, 3, 1, 3], 4, 1);
        let c = synth_reach_avoid(
            &m,
            &[false, false, false, true],
            &[false, true, false, false],
        )
        .unwrap();
        assert_eq!(c.domain(), vec![3]);
    }

    #[test]
    fn predicates_nominal_and_robust() {
        let g = Grid::new(Region::cube(2, -0.5, 0.5).unwrap(), &[0.1, 0.1]).unwrap();
        let safe = Region::cube(2, -0.5, 0.5).unwrap();
        let spec = Specification::Safety { safe: safe.clone() };
        let StatePredicates::Safety { safe: nominal } =
            spec_predicates(&g, &spec, MarginMode::Nominal, 0.0).unwrap()
        else {
            unreachable!()
        };
        assert!(nominal.iter().all(|b| *b));
        let StatePredicates::Safety { safe: robust } =
            spec_predicates(&g, &spec, MarginMode::Robust, 0.1831).unwrap()
        else {
            unreachable!()
        };
        let shrunk = safe.deflate(0.1831).unwrap();
        assert!((shrunk.hi()[0] - 0.3169).abs() < 1e-12);
        for (i, b) in robust.iter().enumerate() {
            assert_eq!(*b, shrunk.contains(&g.point(i)));
        }
        assert_eq!(
            spec_predicates(&g, &spec, MarginMode::Robust, 0.0).unwrap(),
            spec_predicates(&g, &spec, MarginMode::Nominal, 0.4).unwrap()
        );
        assert!(matches!(
            spec_predicates(&g, &spec, MarginMode::Robust, 0.6),
            Err(Error::EmptySpec { .. })
        ));
    }

    #[test]
    fn controller_file_round_trip() {
        let m = model(vec![1, 2, 2, 0, 2, 1], 3, 2);
        let spec = Specification::ReachAvoid {
            target: Region::cube(1, 2.0, 3.0).unwrap(),
            avoid: vec![],
        };
        let c = synthesize(&m, &spec, MarginMode::Nominal, 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ctrl.bin");
        c.save(&p).unwrap();
        assert_eq!(SymbolicController::load(&p).unwrap(), c);
    }
}
