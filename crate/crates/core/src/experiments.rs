//! Experiment drivers: single-AIE efficiency sweep, diverse-MM comparison against the
//! fixed-shape baselines, and solver search-time studies.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{HardwareConfig, ATOM};
use crate::error::Result;
use crate::explore::{build_table, CandidateTable};
use crate::perfmodel::baseline::{baseline_latency_charm, baseline_latency_rsn};
use crate::perfmodel::{aie_efficiency, KernelKind, TileShape};
use crate::scheduler::{solve_ga, GaParams, Problem};
use crate::workload::{diversity_profile, gen_transformer, WorkloadDag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyPoint {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub flexible: f64,
    pub static_kernel: f64,
}

/// Single-AIE efficiency of both kernel styles over MM sizes from `from` to the max
/// tile, stepping by one atom along each dimension.
pub fn efficiency_sweep(
    hw: &HardwareConfig,
    from: (usize, usize, usize),
) -> Result<Vec<EfficiencyPoint>> {
    let (mi, mk, mj) = hw.max_tile_atoms();
    let max = TileShape::new(mi, mk, mj);
    let (tm, tk, tn) = max.elems();
    let mut v = Vec::new();
    for m in (from.0..=tm).step_by(ATOM.0) {
        for k in (from.1..=tk).step_by(ATOM.1) {
            for n in (from.2..=tn).step_by(ATOM.2) {
                v.push(EfficiencyPoint {
                    m,
                    k,
                    n,
                    flexible: aie_efficiency(
                        KernelKind::Flexible,
                        (m, k, n),
                        &hw.aie_cycle_model,
                        max,
                    )?,
                    static_kernel: aie_efficiency(
                        KernelKind::Static,
                        (m, k, n),
                        &hw.aie_cycle_model,
                        max,
                    )?,
                });
            }
        }
    }
    Ok(v)
}

/// Largest minus smallest flexible efficiency over the points.
pub fn flexible_spread(points: &[EfficiencyPoint]) -> f64 {
    let hi = points.iter().map(|p| p.flexible).fold(f64::MIN, f64::max);
    let lo = points.iter().map(|p| p.flexible).fold(f64::MAX, f64::min);
    hi - lo
}

/// Fixed shapes of the two baseline accelerator styles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub charm_tile: (usize, usize, usize),
    pub rsn_unit: (usize, usize),
    pub rsn_tile: TileShape,
}

impl BaselineConfig {
    pub fn for_hw(hw: &HardwareConfig) -> Self {
        let (mi, mk, mj) = hw.max_tile_atoms();
        Self {
            charm_tile: (256, 256, 256),
            rsn_unit: (64, 64),
            rsn_tile: TileShape::new(mi, mk, mj),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerShape {
    pub seq_len: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub mlp_ratio: f64,
}

impl TransformerShape {
    pub fn dag(&self) -> Result<WorkloadDag> {
        gen_transformer(self.seq_len, self.heads, self.head_dim, self.mlp_ratio, 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    /// 0 = fewest operations.
    pub ops_level: usize,
    /// 0 = least diverse.
    pub diversity_level: usize,
    pub shape: TransformerShape,
    pub total_ops: u64,
    pub diversity: f64,
}

/// Transformer workloads over sequence length, heads, head dimension and MLP ratio,
/// bucketed into `levels x levels` cells by operation-count and diversity quantiles.
/// Each non-empty cell keeps its member with the median operation count.
pub fn diverse_grid(levels: usize) -> Result<Vec<GridCell>> {
    let mut pool = Vec::new();
    for seq_len in [16, 32, 64, 128, 256, 512] {
        for heads in [1, 2, 4, 8, 12] {
            for head_dim in [16, 32, 64, 128] {
                for mlp_ratio in [1.0, 2.0, 4.0] {
                    let shape = TransformerShape {
                        seq_len,
                        heads,
                        head_dim,
                        mlp_ratio,
                    };
                    let p = diversity_profile(&shape.dag()?);
                    pool.push((shape, p.total_ops, p.diversity));
                }
            }
        }
    }
    let level_of = |vals: Vec<f64>, x: f64| -> usize {
        let mut s = vals;
        s.sort_by(f64::total_cmp);
        (1..levels)
            .filter(|&q| x >= s[q * s.len() / levels])
            .count()
    };
    let ops: Vec<f64> = pool.iter().map(|p| p.1 as f64).collect();
    let div: Vec<f64> = pool.iter().map(|p| p.2).collect();
    let mut cells = Vec::new();
    for ol in 0..levels {
        for dl in 0..levels {
            let mut members: Vec<&(TransformerShape, u64, f64)> = pool
                .iter()
                .filter(|p| {
                    level_of(ops.clone(), p.1 as f64) == ol && level_of(div.clone(), p.2) == dl
                })
                .collect();
            if members.is_empty() {
                continue;
            }
            members.sort_by(|a, b| a.1.cmp(&b.1).then(a.2.total_cmp(&b.2)));
            let &(shape, total_ops, diversity) = members[members.len() / 2];
            cells.push(GridCell {
                ops_level: ol,
                diversity_level: dl,
                shape,
                total_ops,
                diversity,
            });
        }
    }
    Ok(cells)
}

/// Modeled execution time of one workload on each design, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    pub total_ops: u64,
    /// Stage-1 table scheduled by the GA.
    pub planned: f64,
    pub charm: f64,
    pub rsn: f64,
}

impl Comparison {
    /// Operations per second of a design time.
    pub fn throughput(&self, seconds: f64) -> f64 {
        self.total_ops as f64 / seconds
    }

    pub fn gain_over_charm(&self) -> f64 {
        self.charm / self.planned
    }

    pub fn gain_over_rsn(&self) -> f64 {
        self.rsn / self.planned
    }
}

/// The flexible design runs the Stage-1 table through the GA scheduler; the baselines execute one layer
/// at a time on the whole array.
pub fn compare_workload(
    dag: &WorkloadDag,
    hw: &HardwareConfig,
    baselines: &BaselineConfig,
    ga: &GaParams,
) -> Result<Comparison> {
    let table = build_table(dag, hw)?;
    let s = solve_ga(dag, &table, hw, ga)?;
    let mut charm = 0.0;
    let mut rsn = 0.0;
    for l in &dag.layers {
        charm += baseline_latency_charm(l, baselines.charm_tile, hw)?
            .breakdown
            .t_total;
        rsn += baseline_latency_rsn(l, baselines.rsn_unit, baselines.rsn_tile, hw)?
            .breakdown
            .t_total;
    }
    Ok(Comparison {
        total_ops: dag.total_ops(),
        planned: s.makespan_ns as f64 * 1e-9,
        charm,
        rsn,
    })
}

/// Random scheduling instance with `layers` layers and `modes` synthetic modes each.
pub fn random_instance(
    rng: &mut impl Rng,
    layers: usize,
    modes: usize,
    f_max: usize,
    c_max: usize,
    edge_p: f64,
) -> Result<(WorkloadDag, CandidateTable)> {
    let nodes = (0..layers)
        .map(|i| crate::workload::LayerNode::new(i, 2, 8, 8))
        .collect();
    let mut edges = Vec::new();
    for j in 1..layers {
        for i in 0..j {
            if rng.gen::<f64>() < edge_p {
                edges.push((i, j));
            }
        }
    }
    let dag = WorkloadDag::new(nodes, edges)?;
    let triples: Vec<Vec<(usize, usize, u64)>> = (0..layers)
        .map(|_| {
            (0..modes)
                .map(|_| {
                    let f = rng.gen_range(1..=f_max);
                    let c = rng.gen_range(1..=c_max);
                    // Wider modes run faster, with noise.
                    let work = rng.gen_range(2_000u64..20_000);
                    let e = work / (f.min(c) as u64) + rng.gen_range(0..1_000);
                    (f, c, e.max(1))
                })
                .collect()
        })
        .collect();
    Ok((dag, CandidateTable::from_triples(&triples)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverRun {
    pub layers: usize,
    pub modes: usize,
    pub ga_seconds: f64,
    pub ga_makespan_ns: u64,
    pub exact_seconds: f64,
    /// `None` when the exact solver ran out of budget.
    pub exact_makespan_ns: Option<u64>,
    pub lower_bound_ns: Option<u64>,
}

impl SolverRun {
    /// GA makespan over the proven optimum, minus one.
    pub fn gap(&self) -> Option<f64> {
        self.exact_makespan_ns
            .map(|e| self.ga_makespan_ns as f64 / e as f64 - 1.0)
    }
}

/// Times GA and the exact solver on one instance.
pub fn solver_run(
    dag: &WorkloadDag,
    table: &CandidateTable,
    f_max: usize,
    c_max: usize,
    ga: &GaParams,
    exact_budget: Duration,
) -> Result<SolverRun> {
    let p = Problem::from_parts(dag, table, f_max, c_max)?;
    let t = Instant::now();
    let g = crate::scheduler::ga::run_ga(&p, ga)?;
    let ga_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let ex = crate::scheduler::exact::solve_problem(&p, exact_budget);
    let exact_seconds = t.elapsed().as_secs_f64();
    let (exact_makespan_ns, lower_bound_ns) = match ex {
        Ok((s, _)) if s.optimal => (Some(s.makespan_ns), Some(s.makespan_ns)),
        Ok((s, _)) => (None, s.lower_bound_ns),
        Err(crate::Error::Timeout { lower_bound_ns }) => (None, Some(lower_bound_ns)),
        Err(e) => return Err(e),
    };
    Ok(SolverRun {
        layers: dag.len(),
        modes: table.layers.first().map_or(0, |m| m.len()),
        ga_seconds,
        ga_makespan_ns: g.schedule.makespan_ns,
        exact_seconds,
        exact_makespan_ns,
        lower_bound_ns,
    })
}

/// Seeded instances of `layers` layers and `modes` modes on an `f_max = c_max = units`
/// platform, each timed with both solvers.
pub fn solver_study(
    seed: u64,
    instances: usize,
    layers: (usize, usize),
    modes: (usize, usize),
    units: usize,
    ga: &GaParams,
    exact_budget: Duration,
) -> Result<Vec<SolverRun>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..instances)
        .map(|i| {
            let n = rng.gen_range(layers.0..=layers.1);
            let k = rng.gen_range(modes.0..=modes.1);
            let (dag, table) = random_instance(&mut rng, n, k, units, units, 0.15)?;
            let params = GaParams {
                seed: ga.seed.wrapping_add(i as u64),
                ..ga.clone()
            };
            solver_run(&dag, &table, units, units, &params, exact_budget)
        })
        .collect()
}
