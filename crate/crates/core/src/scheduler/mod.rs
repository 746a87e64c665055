//! Stage-2 schedule optimization: the exact branch-and-bound search, the genetic algorithm
//! with dependency-aware decoding, the MILP model with LP export, and a validator.

pub mod exact;
pub mod ga;
pub mod milp;
pub mod validate;

use serde::{Deserialize, Serialize};

use crate::arch::HardwareConfig;
use crate::error::{Error, Result};
use crate::explore::CandidateTable;
use crate::workload::WorkloadDag;

pub use exact::{solve_exact, ExactStats};
pub use ga::{decode_chromosome, solve_ga, Chromosome, GaParams};
pub use milp::{build_milp, export_lp, parse_lp, MilpModel};
pub use validate::{validate_schedule, ValidationReport, Violation};

/// Scheduling-relevant view of a mode: resources and duration in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeCost {
    pub f: usize,
    pub c: usize,
    pub e: u64,
}

/// Flattened scheduling instance shared by all solvers.
#[derive(Debug, Clone)]
pub struct Problem {
    pub n: usize,
    pub f_max: usize,
    pub c_max: usize,
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
    pub modes: Vec<Vec<ModeCost>>,
}

impl Problem {
    pub fn new(dag: &WorkloadDag, table: &CandidateTable, hw: &HardwareConfig) -> Result<Self> {
        Self::from_parts(dag, table, hw.n_fmu, hw.n_cu)
    }

    pub fn from_parts(
        dag: &WorkloadDag,
        table: &CandidateTable,
        f_max: usize,
        c_max: usize,
    ) -> Result<Self> {
        let n = dag.len();
        if table.layers.len() != n {
            return Err(Error::Model(format!(
                "candidate table has {} layers, workload has {n}",
                table.layers.len()
            )));
        }
        let mut modes = Vec::with_capacity(n);
        for (i, cands) in table.layers.iter().enumerate() {
            if cands.is_empty() {
                return Err(Error::Model(format!("layer {i} has no candidate modes")));
            }
            let mut v = Vec::with_capacity(cands.len());
            for m in cands {
                if m.fmu_used > f_max || m.cu_used > c_max || m.fmu_used == 0 || m.cu_used == 0 {
                    return Err(Error::Infeasible(format!(
                        "layer {i} mode {} needs {} FMU / {} CU, platform has {f_max} / {c_max}",
                        m.mode_id, m.fmu_used, m.cu_used
                    )));
                }
                v.push(ModeCost {
                    f: m.fmu_used,
                    c: m.cu_used,
                    e: m.latency_ns.max(1),
                });
            }
            modes.push(v);
        }
        Ok(Self {
            n,
            f_max,
            c_max,
            preds: dag.predecessors(),
            succs: dag.successors(),
            modes,
        })
    }

    /// `phi = sum_i max_k e_{i,k} + 1`: exceeds any sensible makespan.
    pub fn big_m(&self) -> u64 {
        self.modes
            .iter()
            .map(|m| m.iter().map(|c| c.e).max().unwrap_or(0))
            .sum::<u64>()
            + 1
    }
}

/// Piecewise-constant usage of FMUs and CUs over time.
#[derive(Debug, Clone)]
pub struct Profile {
    /// `(from, fmus used, cus used)`, sorted by time; the last segment extends forever.
    segs: Vec<(u64, usize, usize)>,
    f_max: usize,
    c_max: usize,
}

impl Profile {
    pub fn new(f_max: usize, c_max: usize) -> Self {
        Self {
            segs: vec![(0, 0, 0)],
            f_max,
            c_max,
        }
    }

    pub fn segments(&self) -> &[(u64, usize, usize)] {
        &self.segs
    }

    fn seg_at(&self, t: u64) -> usize {
        self.segs.partition_point(|s| s.0 <= t) - 1
    }

    /// Earliest `t >= t0` with `f` FMUs and `c` CUs free throughout `[t, t + e)`.
    pub fn earliest(&self, t0: u64, m: ModeCost) -> u64 {
        let mut i = self.seg_at(t0);
        let mut t = t0;
        'outer: loop {
            let mut j = i;
            while j < self.segs.len() && (j == i || self.segs[j].0 < t + m.e) {
                let (_, uf, uc) = self.segs[j];
                if uf + m.f > self.f_max || uc + m.c > self.c_max {
                    // The final segment is always empty, so a conflict has a successor.
                    i = j + 1;
                    t = self.segs[i].0;
                    continue 'outer;
                }
                j += 1;
            }
            return t;
        }
    }

    fn split_at(&mut self, t: u64) -> usize {
        let i = self.seg_at(t);
        if self.segs[i].0 == t {
            return i;
        }
        let (_, f, c) = self.segs[i];
        self.segs.insert(i + 1, (t, f, c));
        i + 1
    }

    pub fn add(&mut self, start: u64, m: ModeCost) {
        let a = self.split_at(start);
        let b = self.split_at(start + m.e);
        for s in &mut self.segs[a..b] {
            s.1 += m.f;
            s.2 += m.c;
        }
    }

    /// FMU-time and CU-time already committed at or after `t`.
    pub fn area_after(&self, t: u64) -> (u128, u128) {
        let mut fa = 0u128;
        let mut ca = 0u128;
        for w in self.segs.windows(2) {
            let (a, f, c) = w[0];
            let b = w[1].0;
            if b > t {
                let len = (b - a.max(t)) as u128;
                fa += len * f as u128;
                ca += len * c as u128;
            }
        }
        (fa, ca)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledLayer {
    pub layer: usize,
    pub mode: usize,
    pub start_ns: u64,
    pub end_ns: u64,
    pub fmus: Vec<usize>,
    pub cus: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    /// Indexed by layer id.
    pub layers: Vec<ScheduledLayer>,
    pub makespan_ns: u64,
    /// Proven lower bound on the optimum, when a solver provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound_ns: Option<u64>,
    #[serde(default)]
    pub optimal: bool,
}

impl Schedule {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn mode_of(&self, layer: usize) -> usize {
        self.layers[layer].mode
    }
}

/// Places layers in `order` with serial list scheduling: each at the earliest time after its
/// predecessors end with enough free units for its whole duration.
pub fn serial_sgs(p: &Problem, order: &[usize], modes: &[usize]) -> Vec<u64> {
    let mut prof = Profile::new(p.f_max, p.c_max);
    let mut start = vec![0u64; p.n];
    let mut end = vec![0u64; p.n];
    for &j in order {
        let m = p.modes[j][modes[j]];
        let est = p.preds[j].iter().map(|&i| end[i]).max().unwrap_or(0);
        let t = prof.earliest(est, m);
        prof.add(t, m);
        start[j] = t;
        end[j] = t + m.e;
    }
    start
}

/// Turns start times into a full schedule, assigning concrete units lowest-index-first in
/// start-time order (ties by layer id).
pub fn assemble(p: &Problem, modes: &[usize], starts: &[u64]) -> Schedule {
    let mut order: Vec<usize> = (0..p.n).collect();
    order.sort_by_key(|&i| (starts[i], i));
    let mut fmu_free = vec![0u64; p.f_max];
    let mut cu_free = vec![0u64; p.c_max];
    let mut layers: Vec<Option<ScheduledLayer>> = vec![None; p.n];
    let take = |free: &mut [u64], need: usize, t: u64, end: u64| -> Vec<usize> {
        let units: Vec<usize> = (0..free.len())
            .filter(|&u| free[u] <= t)
            .take(need)
            .collect();
        assert_eq!(
            units.len(),
            need,
            "resource profile admitted an over-subscription"
        );
        for &u in &units {
            free[u] = end;
        }
        units
    };
    for &i in &order {
        let m = p.modes[i][modes[i]];
        let end = starts[i] + m.e;
        let fmus = take(&mut fmu_free, m.f, starts[i], end);
        let cus = take(&mut cu_free, m.c, starts[i], end);
        layers[i] = Some(ScheduledLayer {
            layer: i,
            mode: modes[i],
            start_ns: starts[i],
            end_ns: end,
            fmus,
            cus,
        });
    }
    let layers: Vec<ScheduledLayer> = layers
        .into_iter()
        .map(|l| l.expect("every layer placed"))
        .collect();
    let makespan_ns = layers.iter().map(|l| l.end_ns).max().unwrap_or(0);
    Schedule {
        layers,
        makespan_ns,
        lower_bound_ns: None,
        optimal: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_finds_gap() {
        let mut p = Profile::new(3, 3);
        p.add(0, ModeCost { f: 3, c: 1, e: 10 });
        p.add(20, ModeCost { f: 2, c: 1, e: 10 });
        assert_eq!(p.earliest(0, ModeCost { f: 1, c: 1, e: 10 }), 10);
        assert_eq!(p.earliest(0, ModeCost { f: 1, c: 1, e: 11 }), 10);
        assert_eq!(p.earliest(0, ModeCost { f: 2, c: 1, e: 11 }), 30);
        assert_eq!(p.earliest(5, ModeCost { f: 1, c: 3, e: 5 }), 10);
    }

    #[test]
    fn area_after_counts_committed_work() {
        let mut p = Profile::new(4, 4);
        p.add(0, ModeCost { f: 2, c: 1, e: 10 });
        assert_eq!(p.area_after(4), (12, 6));
        assert_eq!(p.area_after(10), (0, 0));
    }
}
