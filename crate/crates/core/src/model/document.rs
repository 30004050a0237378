//! Versioned JSON form of [`HhmmSpec`]. Matrices are nested row-major arrays.
//!
//! Floats are written with the shortest representation that parses back to the
//! same `f64`, so a save/load cycle is bit-identical.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{HhmmSpec, MovementModel, VarModel};
use crate::error::{Error, Result};

pub const SPEC_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecDocument {
    pub version: u32,
    pub d: usize,
    pub tau: usize,
    pub rho: Option<f64>,
    pub movements: Vec<MovementDocument>,
    pub mov_trans: Vec<Vec<f64>>,
    pub mov_prior: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MovementDocument {
    pub segments: Vec<SegmentDocument>,
    pub seg_trans: Vec<Vec<f64>>,
    pub seg_prior: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentDocument {
    pub mu: Vec<f64>,
    #[serde(rename = "A")]
    pub lag_mats: Vec<Vec<Vec<f64>>>,
    pub sigma: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidModel(format!("{what} is ragged")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

impl SpecDocument {
    pub fn from_spec(spec: &HhmmSpec) -> Self {
        Self {
            version: SPEC_FORMAT_VERSION,
            d: spec.dim(),
            tau: spec.tau(),
            rho: spec.rho(),
            movements: spec
                .movements()
                .iter()
                .map(|mv| MovementDocument {
                    segments: mv
                        .segments()
                        .iter()
                        .map(|s| SegmentDocument {
                            mu: s.mu().iter().copied().collect(),
                            lag_mats: s.lag_mats().iter().map(rows_of).collect(),
                            sigma: rows_of(s.sigma()),
                        })
                        .collect(),
                    seg_trans: rows_of(mv.seg_trans()),
                    seg_prior: mv.seg_prior().iter().copied().collect(),
                })
                .collect(),
            mov_trans: rows_of(spec.mov_trans()),
            mov_prior: spec.mov_prior().iter().copied().collect(),
        }
    }

    pub fn into_spec(self) -> Result<HhmmSpec> {
        if self.version != SPEC_FORMAT_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported model version {} (expected {SPEC_FORMAT_VERSION})",
                self.version
            )));
        }
        let mut movements = Vec::with_capacity(self.movements.len());
        for mv in self.movements {
            let mut segments = Vec::with_capacity(mv.segments.len());
            for seg in mv.segments {
                let lag_mats = seg
                    .lag_mats
                    .iter()
                    .map(|a| matrix_from_rows(a, "lag matrix"))
                    .collect::<Result<Vec<_>>>()?;
                segments.push(VarModel::new(
                    DVector::from_vec(seg.mu),
                    lag_mats,
                    matrix_from_rows(&seg.sigma, "covariance")?,
                )?);
            }
            movements.push(MovementModel::new(
                segments,
                matrix_from_rows(&mv.seg_trans, "segment transition")?,
                DVector::from_vec(mv.seg_prior),
            )?);
        }
        let spec = HhmmSpec::new(
            movements,
            matrix_from_rows(&self.mov_trans, "movement transition")?,
            DVector::from_vec(self.mov_prior),
            self.rho,
        )?;
        if spec.dim() != self.d || spec.tau() != self.tau {
            return Err(Error::InvalidModel(format!(
                "header says d={} tau={}, parameters say d={} tau={}",
                self.d,
                self.tau,
                spec.dim(),
                spec.tau()
            )));
        }
        Ok(spec)
    }
}
