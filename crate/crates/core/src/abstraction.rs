//! Uniform grids, the quantizer `Π`, and the finite symbolic model obtained
//! by querying the plant once per (abstract state, abstract input) pair.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::plant::StepOracle;
use crate::region::Region;
use crate::{Error, Result};

/// Successor symbol for transitions that leave the state box.
pub const OUT_OF_DOMAIN: u32 = u32::MAX;

/// Cell-centered uniform grid over a box.
///
/// The requested spacing is shrunk per dimension to `extent / count` so that
/// the cells tile the box exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    bounds: Region,
    spacing: Vec<f64>,
    counts: Vec<usize>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(bounds: Region, spacing: &[f64]) -> Result<Self> {
        check_dim("grid spacing", bounds.dim(), spacing.len())?;
        let counts = spacing
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::invalid(format!(
                        "grid spacing must be positive and finite, got {s} in dimension {}",
                        j + 1
                    )));
                }
                let extent = bounds.extent(j);
                Ok(((extent / s - 1e-9).ceil() as usize).max(1))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_counts(bounds, counts)
    }

    pub fn from_counts(bounds: Region, counts: Vec<usize>) -> Result<Self> {
        check_dim("grid counts", bounds.dim(), counts.len())?;
        if counts.contains(&0) {
            return Err(Error::invalid(
                "every grid dimension needs at least one cell",
            ));
        }
        let total = counts
            .iter()
            .try_fold(1usize, |acc, c| acc.checked_mul(*c))
            .filter(|t| *t < OUT_OF_DOMAIN as usize)
            .ok_or_else(|| Error::invalid("grid has too many cells for 32-bit indices"))?;
        debug_assert!(total > 0);
        let spacing = (0..bounds.dim())
            .map(|j| bounds.extent(j) / counts[j] as f64)
            .collect();
        let mut strides = vec![1usize; counts.len()];
        for j in (0..counts.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * counts[j + 1];
        }
        Ok(Grid {
            bounds,
            spacing,
            counts,
            strides,
        })
    }

    pub fn bounds(&self) -> &Region {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `sup ‖Π(x) − x‖` over the box: half the cell diagonal.
    pub fn delta_cert(&self) -> f64 {
        0.5 * self.spacing.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Input quantization bound; identical to [`Grid::delta_cert`].
    pub fn beta1(&self) -> f64 {
        self.delta_cert()
    }

    /// Cell center of a flat index (last dimension varies fastest).
    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut rest = index;
        (0..self.dim())
            .map(|j| {
                let i = rest / self.strides[j];
                rest %= self.strides[j];
                self.bounds.lo()[j] + (i as f64 + 0.5) * self.spacing[j]
            })
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Nearest cell center, clamped to the box.
    pub fn quantize(&self, x: &[f64]) -> Quantized {
        assert_eq!(x.len(), self.dim(), "quantize: dimension mismatch");
        let mut index = 0;
        for (j, xj) in x.iter().enumerate() {
            let raw = ((xj - self.bounds.lo()[j]) / self.spacing[j]).floor();
            let i = if raw.is_nan() {
                0
            } else {
                raw.clamp(0.0, (self.counts[j] - 1) as f64) as usize
            };
            index += i * self.strides[j];
        }
        Quantized {
            index,
            point: self.point(index),
            inside: self.bounds.contains(x),
        }
    }

    fn descriptor(&self) -> GridFile {
        GridFile {
            lo: self.bounds.lo().to_vec(),
            hi: self.bounds.hi().to_vec(),
            spacing: self.spacing.clone(),
            counts: self.counts.clone(),
            delta_cert: self.delta_cert(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Quantized {
    pub index: usize,
    pub point: Vec<f64>,
    /// Whether the quantized point lay in the grid's box.
    pub inside: bool,
}

/// How the quantization bound fed to the closeness estimate is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSemantics {
    /// Half the cell diagonal: the tight bound on `‖Π(x) − x‖`.
    #[default]
    HalfDiagonal,
    /// Full cell diagonal.
    Diameter,
}

impl DeltaSemantics {
    pub fn delta(self, grid: &Grid) -> f64 {
        match self {
            DeltaSemantics::HalfDiagonal => grid.delta_cert(),
            DeltaSemantics::Diameter => 2.0 * grid.delta_cert(),
        }
    }
}

/// Deterministic finite abstraction: one successor per (state, input) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicModel {
    state_grid: Grid,
    input_grid: Grid,
    trans: Vec<u32>,
}

impl SymbolicModel {
    /// Builds a model from an explicit table, indexed `state * inputs + input`.
    pub fn from_table(state_grid: Grid, input_grid: Grid, trans: Vec<u32>) -> Result<Self> {
        check_dim(
            "transition table",
            state_grid.len() * input_grid.len(),
            trans.len(),
        )?;
        let ns = state_grid.len() as u32;
        if let Some(bad) = trans.iter().find(|s| **s != OUT_OF_DOMAIN && **s >= ns) {
            return Err(Error::invalid(format!(
                "successor index {bad} out of range"
            )));
        }
        Ok(SymbolicModel {
            state_grid,
            input_grid,
            trans,
        })
    }

    pub fn state_grid(&self) -> &Grid {
        &self.state_grid
    }

    pub fn input_grid(&self) -> &Grid {
        &self.input_grid
    }

    pub fn num_states(&self) -> usize {
        self.state_grid.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.input_grid.len()
    }

    pub fn table(&self) -> &[u32] {
        &self.trans
    }

    /// Successor of `(state, input)`, or `None` when it leaves the box.
    pub fn successor(&self, state: usize, input: usize) -> Option<usize> {
        let s = self.trans[state * self.num_inputs() + input];
        (s != OUT_OF_DOMAIN).then_some(s as usize)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = encode_table(MODEL_MAGIC, &self.state_grid, &self.input_grid, &self.trans);
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let sidecar = ModelSidecar {
            state_grid: self.state_grid.descriptor(),
            input_grid: self.input_grid.descriptor(),
            transitions: self.trans.len(),
            out_of_domain: self.trans.iter().filter(|s| **s == OUT_OF_DOMAIN).count(),
        };
        write_json(&sidecar_path(path), &sidecar)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (sg, ig, trans) = decode_table(MODEL_MAGIC, &bytes, |sg, ig| sg.len() * ig.len())
            .map_err(|r| Error::artifact(path, r))?;
        Self::from_table(sg, ig, trans).map_err(|e| Error::artifact(path, e.to_string()))
    }
}

/// Queries `oracle` exactly once for every grid pair.
pub fn build_symbolic_model(
    oracle: &dyn StepOracle,
    state_grid: &Grid,
    input_grid: &Grid,
) -> Result<SymbolicModel> {
    check_dim("state grid dimension", oracle.state_dim(), state_grid.dim())?;
    check_dim("input grid dimension", oracle.input_dim(), input_grid.dim())?;
    let nu = input_grid.len();
    let inputs: Vec<Vec<f64>> = input_grid.points().collect();
    let mut trans = vec![0u32; state_grid.len() * nu];
    trans
        .par_chunks_mut(nu)
        .enumerate()
        .try_for_each(|(s, row)| -> Result<()> {
            let x = state_grid.point(s);
            for (i, u) in inputs.iter().enumerate() {
                let next = oracle.step(&x, u).map_err(|e| {
                    Error::invalid(format!("oracle failed at x̂ = {x:?}, û = {u:?}: {e}"))
                })?;
                let q = state_grid.quantize(&next);
                row[i] = if q.inside {
                    q.index as u32
                } else {
                    OUT_OF_DOMAIN
                };
            }
            Ok(())
        })?;
    SymbolicModel::from_table(state_grid.clone(), input_grid.clone(), trans)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
    pub delta_cert: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelSidecar {
    state_grid: GridFile,
    input_grid: GridFile,
    transitions: usize,
    out_of_domain: usize,
}

const MODEL_MAGIC: [u8; 4] = *b"DDSM";
pub(crate) const CONTROLLER_MAGIC: [u8; 4] = *b"DDSC";
const FORMAT_VERSION: u32 = 1;

/// `<path>.json`, next to a binary artifact.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Header `magic, version, n, m`, one `(lo, hi, spacing: f64, count: u32)`
/// descriptor per state then input dimension, then the LE `u32` payload.
pub(crate) fn encode_table(magic: [u8; 4], sg: &Grid, ig: &Grid, payload: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * payload.len());
    out.extend_from_slice(&magic);
    for v in [FORMAT_VERSION, sg.dim() as u32, ig.dim() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for g in [sg, ig] {
        for j in 0..g.dim() {
            out.extend_from_slice(&g.bounds.lo()[j].to_le_bytes());
            out.extend_from_slice(&g.bounds.hi()[j].to_le_bytes());
            out.extend_from_slice(&g.spacing[j].to_le_bytes());
            out.extend_from_slice(&(g.counts[j] as u32).to_le_bytes());
        }
    }
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn decode_table(
    magic: [u8; 4],
    bytes: &[u8],
    payload_len: impl Fn(&Grid, &Grid) -> usize,
) -> std::result::Result<(Grid, Grid, Vec<u32>), String> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != magic {
        return Err(format!(
            "bad magic (expected {:?})",
            String::from_utf8_lossy(&magic)
        ));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let n = r.u32()? as usize;
    let m = r.u32()? as usize;
    let mut grid = |dim: usize| -> std::result::Result<Grid, String> {
        let (mut lo, mut hi, mut counts) = (vec![], vec![], vec![]);
        for _ in 0..dim {
            lo.push(r.f64()?);
            hi.push(r.f64()?);
            let _spacing = r.f64()?;
            counts.push(r.u32()? as usize);
        }
        let bounds = Region::new(lo, hi).map_err(|e| e.to_string())?;
        Grid::from_counts(bounds, counts).map_err(|e| e.to_string())
    };
    let sg = grid(n)?;
    let ig = grid(m)?;
    let len = payload_len(&sg, &ig);
    if r.bytes.len() - r.at != 4 * len {
        return Err(format!(
            "payload holds {} bytes, expected {}",
            r.bytes.len() - r.at,
            4 * len
        ));
    }
    let payload = (0..len)
        .map(|_| r.u32())
        .collect::<std::result::Result<_, _>>()?;
    Ok((sg, ig, payload))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> std::result::Result<&[u8], String> {
        let s = self
            .bytes
            .get(self.at..self.at + k)
            .ok_or_else(|| "truncated file".to_string())?;
        self.at += k;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
