//! Functional and timing simulation of generated programs.

mod ddr;
mod engine;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::arch::HardwareConfig;
use crate::error::{Error, Result};
use crate::isa::{Instruction, MemoryLayout, Program};
use crate::workload::WorkloadDag;

pub use ddr::{sidecar, DdrImage, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Move and compute real data; when off only timing is modeled.
    pub functional: bool,
    pub trace: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            functional: true,
            trace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    /// Seconds.
    pub time: f64,
    pub unit: String,
    pub event: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    /// Result matrix per layer id; empty for timing-only runs.
    pub outputs: Vec<Matrix>,
    /// Seconds.
    pub makespan: f64,
    pub utilization: BTreeMap<String, f64>,
    pub trace: Vec<TraceEvent>,
    /// `(dispatch, completion)` per layer id, in seconds.
    pub layer_spans: Vec<(f64, f64)>,
    pub executed_macs: u64,
    pub loaded_elems: u64,
    pub stored_elems: u64,
    /// DDR contents after the run.
    pub ddr: DdrImage,
}

impl SimResult {
    /// `time_ns,unit,event,detail`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("time_ns,unit,event,detail\n");
        for e in &self.trace {
            let _ = writeln!(s, "{:.3},{},{},{}", e.time * 1e9, e.unit, e.event, e.detail);
        }
        s
    }
}

pub fn run(program: &Program, hw: &HardwareConfig, ddr_image: &DdrImage) -> Result<SimResult> {
    run_with(program, hw, ddr_image, SimOptions::default())
}

pub fn run_with(
    program: &Program,
    hw: &HardwareConfig,
    ddr_image: &DdrImage,
    opts: SimOptions,
) -> Result<SimResult> {
    hw.validate()?;
    engine::execute(program, hw, ddr_image.clone(), opts)
}

/// Dense product of every layer in dependency order, reading operands from `image`.
pub fn reference_outputs(dag: &WorkloadDag, image: &DdrImage) -> Result<Vec<Matrix>> {
    let mut img = image.clone();
    let lay = img.layout.clone();
    if lay.layers.len() != dag.len() {
        return Err(Error::Validation(
            "DDR layout does not match the workload".into(),
        ));
    }
    let mut out = vec![None; dag.len()];
    for j in dag.topological_order() {
        let r = lay.layers[j];
        let a = img.read_matrix(&lay.regions[r.lhs]);
        let b = img.read_matrix(&lay.regions[r.rhs]);
        let integer = dag.layers[j].dtype.is_integer();
        let mut c = Matrix::zeros(a.rows, b.cols, dag.layers[j].dtype.output());
        for i in 0..a.rows {
            for k in 0..a.cols {
                let x = a.data[i * a.cols + k];
                for n in 0..b.cols {
                    let d = &mut c.data[i * b.cols + n];
                    *d = ddr::mac(*d, x, b.data[k * b.cols + n], integer);
                }
            }
        }
        img.write_matrix(&lay.regions[r.out], &c)?;
        out[j] = Some(c);
    }
    Ok(out
        .into_iter()
        .map(|m| m.expect("every layer computed"))
        .collect())
}

/// Largest relative Frobenius error over layers for fp32, or the number of mismatching
/// elements for integer layers, whichever applies; `Ok(())` when within tolerance.
pub fn check_outputs(
    dag: &WorkloadDag,
    got: &[Matrix],
    want: &[Matrix],
    fp_tol: f64,
) -> Result<()> {
    for (j, (g, w)) in got.iter().zip(want).enumerate() {
        if (g.rows, g.cols) != (w.rows, w.cols) {
            return Err(Error::Validation(format!("layer {j}: shape mismatch")));
        }
        if dag.layers[j].dtype.is_integer() {
            let bad = g.data.iter().zip(&w.data).filter(|(a, b)| a != b).count();
            if bad > 0 {
                return Err(Error::Validation(format!(
                    "layer {j}: {bad} integer elements differ"
                )));
            }
        } else {
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for (a, b) in g.as_f32().into_iter().zip(w.as_f32()) {
                num += (a as f64 - b as f64).powi(2);
                den += (b as f64).powi(2);
            }
            let rel = if den == 0.0 {
                num.sqrt()
            } else {
                (num / den).sqrt()
            };
            if !(rel <= fp_tol) {
                return Err(Error::Validation(format!(
                    "layer {j}: relative error {rel:.3e} > {fp_tol:.0e}"
                )));
            }
        }
    }
    if got.len() != want.len() {
        return Err(Error::Validation("output count mismatch".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PaddingReport {
    pub valid_elems: u64,
    pub transferred_elems: u64,
    pub valid_ops: u64,
    pub executed_ops: u64,
}

impl PaddingReport {
    pub fn transfer_efficiency(&self) -> f64 {
        self.valid_elems as f64 / self.transferred_elems.max(1) as f64
    }

    pub fn compute_efficiency(&self) -> f64 {
        self.valid_ops as f64 / self.executed_ops.max(1) as f64
    }
}

/// Loaded operand elements: `(inside the valid part of their matrix, total)`.
pub fn transfer_padding(program: &Program, layout: &MemoryLayout) -> (u64, u64) {
    let mut valid = 0u64;
    let mut total = 0u64;
    for ins in program.streams.values().flatten() {
        if let Instruction::IomLoad {
            ddr_addr, range, ..
        } = ins
        {
            total += range.elems() as u64;
            if let Some(reg) = layout.region_at(*ddr_addr) {
                let rows = (reg.valid_rows as u64)
                    .saturating_sub(range.start_row as u64)
                    .min(range.rows() as u64);
                let cols = (reg.valid_cols as u64)
                    .saturating_sub(range.start_col as u64)
                    .min(range.cols() as u64);
                valid += rows * cols;
            }
        }
    }
    (valid, total)
}

/// Wire and compute padding of a completed run.
pub fn measure_padding(
    program: &Program,
    layout: &MemoryLayout,
    dag: &WorkloadDag,
    result: &SimResult,
) -> PaddingReport {
    let (valid_elems, transferred_elems) = transfer_padding(program, layout);
    PaddingReport {
        valid_elems,
        transferred_elems,
        valid_ops: dag.total_ops(),
        executed_ops: result.executed_macs,
    }
}
