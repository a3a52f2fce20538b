//! Height sweeps over the topological classes and the relative energy gaps
//! `eps1 = (E_P1 - E_T) / E_T` and `eps3 = (E_P3 - E_T) / E_T`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::director::{trial_field, DirectorField, TopologyClass};
use crate::energy::{ElasticConstants, EnergyBreakdown};
use crate::geometry::{CellParams, GridGeometry};
use crate::relax::{relax, RelaxOptions, RelaxReport};
use crate::topology::{diagnose, edge_orientation_signature, Diagnostics, EdgeSignature};
use crate::Error;

/// Window of the low-height slope fit.
pub const PLATEAU_WINDOW: (f64, f64) = (0.5, 0.9);
/// Lower end of the high-height slope fit; the upper end is the largest height.
pub const HIGH_WINDOW_START: f64 = 1.0;

const WINDOW_TOL: f64 = 1e-9;

/// Default heights `0.25, 0.375, ..., 1.5` (in units of `Lc`).
pub fn default_heights() -> Vec<f64> {
    (2..=12).map(|i| i as f64 / 8.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Post heights in units of `Lc`, ascending.
    pub heights: Vec<f64>,
    pub topologies: Vec<TopologyClass>,
    pub constants: ElasticConstants,
    pub grid_n: usize,
    pub cell_width: f64,
    pub post_width: f64,
    pub cell_height: f64,
    pub relax: RelaxOptions,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            heights: default_heights(),
            topologies: TopologyClass::ALL.to_vec(),
            constants: ElasticConstants::new(4.0, 2.0, 6.0, 0.0),
            grid_n: 16,
            cell_width: 1.0,
            post_width: 0.5,
            cell_height: 3.0,
            relax: RelaxOptions::default(),
        }
    }
}

impl SweepSpec {
    /// Cell parameters at post height `h / Lc`.
    pub fn cell(&self, h_over_lc: f64) -> CellParams {
        CellParams {
            cell_width: self.cell_width,
            post_width: self.post_width,
            cell_height: self.cell_height,
            post_height: h_over_lc * self.cell_width,
            grid_n: self.grid_n,
            normal_substrate: false,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.heights.is_empty() || self.topologies.is_empty() {
            return Err(Error::EmptySpec);
        }
        if self.heights.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParams(
                "heights must be strictly ascending".into(),
            ));
        }
        for &h in &self.heights {
            self.cell(h).validate()?;
        }
        Ok(())
    }
}

/// Everything produced by one relaxation.
#[derive(Clone, Debug)]
pub struct SingleRun {
    pub topology: TopologyClass,
    pub params: CellParams,
    pub field: DirectorField,
    pub energy: EnergyBreakdown,
    pub report: RelaxReport,
    /// `None` on a flat cell, or when labelling failed.
    pub diagnostics: Option<Diagnostics>,
    /// Why labelling failed, e.g. a face path too coarse for a sharp turn.
    pub diagnostic_error: Option<String>,
}

impl SingleRun {
    /// Edge signature, read directly from the edge columns when the full
    /// diagnostics are unavailable.
    pub fn signature(&self) -> Option<EdgeSignature> {
        match &self.diagnostics {
            Some(d) => Some(d.signature),
            None => edge_orientation_signature(&self.field).ok(),
        }
    }
}

/// Builds the trial field of `topo`, relaxes it and labels the result.
pub fn run_single(
    topo: TopologyClass,
    params: CellParams,
    constants: &ElasticConstants,
    opts: &RelaxOptions,
) -> Result<SingleRun, Error> {
    let geom = Arc::new(GridGeometry::build(params.clone())?);
    let trial = trial_field(&geom, topo)?;
    let (field, report) = relax(&trial, constants, opts)?;
    let (diagnostics, diagnostic_error) = if !geom.has_post() {
        (None, None)
    } else {
        match diagnose(&field) {
            Ok(d) => (Some(d), None),
            Err(e) => {
                log::warn!("{topo}: diagnostics unavailable: {e}");
                (None, Some(e.to_string()))
            }
        }
    };
    Ok(SingleRun {
        topology: topo,
        params,
        field,
        energy: report.final_energy,
        report,
        diagnostics,
        diagnostic_error,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub topology: TopologyClass,
    pub h_over_lc: f64,
    pub grid_n: usize,
    pub constants: ElasticConstants,
    pub energy: EnergyBreakdown,
    pub report: RelaxReport,
    pub signature: Option<EdgeSignature>,
}

/// A run that raised an error; the sweep carries on without it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub topology: TopologyClass,
    pub h_over_lc: f64,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsRow {
    pub h_over_lc: f64,
    pub eps1: Option<f64>,
    pub eps3: Option<f64>,
}

/// Least-squares slopes of the gap curves below and above the plateau.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlateauSlopes {
    pub eps1_low: Option<f64>,
    pub eps1_high: Option<f64>,
    pub eps3_low: Option<f64>,
    pub eps3_high: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Sorted by `(topology, h)`.
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
    /// One entry per height with at least one defined gap, ascending.
    pub eps: Vec<EpsRow>,
    pub plateau: PlateauSlopes,
}

impl SweepResult {
    pub fn row(&self, topo: TopologyClass, h_over_lc: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.topology == topo && (r.h_over_lc - h_over_lc).abs() < WINDOW_TOL)
    }

    /// Converged total energy of `topo` at `h`.
    pub fn converged_energy(&self, topo: TopologyClass, h_over_lc: f64) -> Option<f64> {
        self.row(topo, h_over_lc)
            .filter(|r| r.report.converged)
            .map(|r| r.energy.total)
    }
}

/// Relative gap `(e_p - e_t) / e_t`.
pub fn relative_gap(e_p: f64, e_t: f64) -> f64 {
    (e_p - e_t) / e_t
}

/// Least-squares slope through `(x, y)` points; `None` with fewer than two
/// distinct abscissae.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

fn slope_in(points: &[(f64, f64)], lo: f64, hi: f64) -> Option<f64> {
    let inside: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|p| p.0 >= lo - WINDOW_TOL && p.0 <= hi + WINDOW_TOL)
        .collect();
    least_squares_slope(&inside)
}

/// Gap curves and plateau slopes from the converged rows of a sweep.
pub fn summarize(heights: &[f64], rows: &[SweepRow]) -> (Vec<EpsRow>, PlateauSlopes) {
    let energy = |topo: TopologyClass, h: f64| {
        rows.iter()
            .find(|r| {
                r.topology == topo && (r.h_over_lc - h).abs() < WINDOW_TOL && r.report.converged
            })
            .map(|r| r.energy.total)
    };
    let mut eps = Vec::new();
    for &h in heights {
        let Some(et) = energy(TopologyClass::T, h) else {
            continue;
        };
        let eps1 = energy(TopologyClass::P1, h).map(|e| relative_gap(e, et));
        let eps3 = energy(TopologyClass::P3, h).map(|e| relative_gap(e, et));
        if eps1.is_some() || eps3.is_some() {
            eps.push(EpsRow {
                h_over_lc: h,
                eps1,
                eps3,
            });
        }
    }
    let curve = |pick: fn(&EpsRow) -> Option<f64>| -> Vec<(f64, f64)> {
        eps.iter()
            .filter_map(|r| pick(r).map(|v| (r.h_over_lc, v)))
            .collect()
    };
    let c1 = curve(|r| r.eps1);
    let c3 = curve(|r| r.eps3);
    let top = heights.last().copied().unwrap_or(0.0);
    let plateau = PlateauSlopes {
        eps1_low: slope_in(&c1, PLATEAU_WINDOW.0, PLATEAU_WINDOW.1),
        eps1_high: slope_in(&c1, HIGH_WINDOW_START, top),
        eps3_low: slope_in(&c3, PLATEAU_WINDOW.0, PLATEAU_WINDOW.1),
        eps3_high: slope_in(&c3, HIGH_WINDOW_START, top),
    };
    (eps, plateau)
}

/// Runs every (height, topology) pair, in parallel on the current rayon pool.
/// Individual failures are recorded and do not abort the sweep.
pub fn sweep_heights(spec: &SweepSpec) -> Result<SweepResult, Error> {
    spec.validate()?;
    let jobs: Vec<(TopologyClass, f64)> = spec
        .topologies
        .iter()
        .flat_map(|&t| spec.heights.iter().map(move |&h| (t, h)))
        .collect();
    let outcomes: Vec<(TopologyClass, f64, Result<SweepRow, Error>)> = jobs
        .par_iter()
        .map(|&(topo, h)| {
            let run =
                run_single(topo, spec.cell(h), &spec.constants, &spec.relax).map(|run| SweepRow {
                    topology: topo,
                    h_over_lc: h,
                    grid_n: spec.grid_n,
                    constants: spec.constants,
                    energy: run.energy,
                    signature: run.signature(),
                    report: run.report,
                });
            (topo, h, run)
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (topology, h_over_lc, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::warn!("{topology} at h = {h_over_lc}: {e}");
                failures.push(SweepFailure {
                    topology,
                    h_over_lc,
                    message: e.to_string(),
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.topology, a.h_over_lc)
            .partial_cmp(&(b.topology, b.h_over_lc))
            .unwrap()
    });
    let (eps, plateau) = summarize(&spec.heights, &rows);
    Ok(SweepResult {
        rows,
        failures,
        eps,
        plateau,
    })
}
