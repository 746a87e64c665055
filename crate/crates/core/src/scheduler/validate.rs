//! From-scratch schedule checker; shares no state with the solvers.

use std::fmt;

use serde::Serialize;

use super::Schedule;
use crate::arch::HardwareConfig;
use crate::explore::CandidateTable;
use crate::workload::WorkloadDag;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    LayerCount {
        expected: usize,
        found: usize,
    },
    LayerIndex {
        slot: usize,
        layer: usize,
    },
    UnknownMode {
        layer: usize,
        mode: usize,
    },
    Duration {
        layer: usize,
        start: u64,
        end: u64,
        expected: u64,
    },
    Dependency {
        from: usize,
        to: usize,
    },
    Cardinality {
        layer: usize,
        kind: &'static str,
        expected: usize,
        found: usize,
    },
    UnitRange {
        layer: usize,
        kind: &'static str,
        unit: usize,
    },
    DuplicateUnit {
        layer: usize,
        kind: &'static str,
        unit: usize,
    },
    Overlap {
        kind: &'static str,
        unit: usize,
        a: usize,
        b: usize,
    },
    Makespan {
        expected: u64,
        found: u64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LayerCount { expected, found } => {
                write!(f, "schedule has {found} layers, expected {expected}")
            }
            Self::LayerIndex { slot, layer } => write!(f, "slot {slot} holds layer {layer}"),
            Self::UnknownMode { layer, mode } => {
                write!(f, "layer {layer} uses unknown mode {mode}")
            }
            Self::Duration {
                layer,
                start,
                end,
                expected,
            } => {
                write!(
                    f,
                    "layer {layer}: end {end} != start {start} + latency {expected}"
                )
            }
            Self::Dependency { from, to } => {
                write!(f, "layer {to} starts before predecessor {from} ends")
            }
            Self::Cardinality {
                layer,
                kind,
                expected,
                found,
            } => {
                write!(
                    f,
                    "layer {layer} holds {found} {kind}s, mode needs {expected}"
                )
            }
            Self::UnitRange { layer, kind, unit } => {
                write!(f, "layer {layer} uses nonexistent {kind} {unit}")
            }
            Self::DuplicateUnit { layer, kind, unit } => {
                write!(f, "layer {layer} lists {kind} {unit} twice")
            }
            Self::Overlap { kind, unit, a, b } => {
                write!(f, "{kind} {unit} double-booked by layers {a} and {b}")
            }
            Self::Makespan { expected, found } => {
                write!(f, "makespan {found} != latest end {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_schedule(
    schedule: &Schedule,
    dag: &WorkloadDag,
    table: &CandidateTable,
    hw: &HardwareConfig,
) -> ValidationReport {
    validate_with_limits(schedule, dag, table, hw.n_fmu, hw.n_cu)
}

pub fn validate_with_limits(
    schedule: &Schedule,
    dag: &WorkloadDag,
    table: &CandidateTable,
    f_max: usize,
    c_max: usize,
) -> ValidationReport {
    let mut v = Vec::new();
    let n = dag.len();
    if schedule.layers.len() != n {
        v.push(Violation::LayerCount {
            expected: n,
            found: schedule.layers.len(),
        });
        return ValidationReport { violations: v };
    }
    for (slot, l) in schedule.layers.iter().enumerate() {
        if l.layer != slot {
            v.push(Violation::LayerIndex {
                slot,
                layer: l.layer,
            });
        }
        let Some(mode) = table.layers.get(slot).and_then(|c| c.get(l.mode)) else {
            v.push(Violation::UnknownMode {
                layer: slot,
                mode: l.mode,
            });
            continue;
        };
        if l.end_ns != l.start_ns.saturating_add(mode.latency_ns) || l.end_ns < l.start_ns {
            v.push(Violation::Duration {
                layer: slot,
                start: l.start_ns,
                end: l.end_ns,
                expected: mode.latency_ns,
            });
        }
        for (kind, units, need, max) in [
            ("FMU", &l.fmus, mode.fmu_used, f_max),
            ("CU", &l.cus, mode.cu_used, c_max),
        ] {
            if units.len() != need {
                v.push(Violation::Cardinality {
                    layer: slot,
                    kind,
                    expected: need,
                    found: units.len(),
                });
            }
            let mut seen = std::collections::BTreeSet::new();
            for &u in units.iter() {
                if u >= max {
                    v.push(Violation::UnitRange {
                        layer: slot,
                        kind,
                        unit: u,
                    });
                }
                if !seen.insert(u) {
                    v.push(Violation::DuplicateUnit {
                        layer: slot,
                        kind,
                        unit: u,
                    });
                }
            }
        }
    }
    for &(i, j) in &dag.edges {
        if schedule.layers[j].start_ns < schedule.layers[i].end_ns {
            v.push(Violation::Dependency { from: i, to: j });
        }
    }
    for a in 0..n {
        for b in a + 1..n {
            let (la, lb) = (&schedule.layers[a], &schedule.layers[b]);
            let overlap = la.start_ns < lb.end_ns && lb.start_ns < la.end_ns;
            if !overlap {
                continue;
            }
            for (kind, ua, ub) in [("FMU", &la.fmus, &lb.fmus), ("CU", &la.cus, &lb.cus)] {
                for &u in ua.iter() {
                    if ub.contains(&u) {
                        v.push(Violation::Overlap {
                            kind,
                            unit: u,
                            a,
                            b,
                        });
                    }
                }
            }
        }
    }
    let latest = schedule.layers.iter().map(|l| l.end_ns).max().unwrap_or(0);
    if schedule.makespan_ns != latest {
        v.push(Violation::Makespan {
            expected: latest,
            found: schedule.makespan_ns,
        });
    }
    ValidationReport { violations: v }
}
