//! Runtime parameter optimizer: brute-force enumeration of execution modes per layer and
//! the `(fmu, cu, latency)` candidate table consumed by the schedulers.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{HardwareConfig, ATOM};
use crate::error::{Error, Result};
use crate::perfmodel::{
    block_store, compose_bounded, plan::dim_classes, round_compute, round_load, Block, KernelKind,
    LatencyBreakdown, ModeSpec, RoleSplit, RoundCost, TileShape,
};
use crate::workload::{LayerNode, WorkloadDag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Lhs,
    Rhs,
    Out,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMode {
    pub layer_id: usize,
    pub mode_id: usize,
    /// f_{i,k}
    pub fmu_used: usize,
    /// c_{i,k}
    pub cu_used: usize,
    /// e_{i,k} in seconds.
    pub latency: f64,
    /// e_{i,k} rounded up to whole nanoseconds; the unit used by the schedulers.
    pub latency_ns: u64,
    pub spec: ModeSpec,
    pub fmu_roles: Vec<Role>,
    pub views: Vec<(usize, usize)>,
}

impl CandidateMode {
    pub fn new(layer_id: usize, mode_id: usize, spec: ModeSpec, latency: f64) -> Self {
        let mut fmu_roles = Vec::with_capacity(spec.fmus());
        fmu_roles.extend(std::iter::repeat_n(Role::Lhs, spec.roles.lhs));
        fmu_roles.extend(std::iter::repeat_n(Role::Rhs, spec.roles.rhs));
        fmu_roles.extend(std::iter::repeat_n(Role::Out, spec.roles.out));
        Self {
            layer_id,
            mode_id,
            fmu_used: spec.fmus(),
            cu_used: spec.cus,
            latency,
            latency_ns: seconds_to_ns(latency),
            views: spec.views(),
            spec,
            fmu_roles,
        }
    }

    /// Bare scheduling candidate without runtime parameters, for synthetic instances.
    pub fn synthetic(
        layer_id: usize,
        mode_id: usize,
        fmu_used: usize,
        cu_used: usize,
        latency_ns: u64,
    ) -> Self {
        let spec = ModeSpec {
            roles: RoleSplit {
                lhs: fmu_used.saturating_sub(2).max(1),
                rhs: 1.min(fmu_used.saturating_sub(1)),
                out: 1.min(fmu_used.saturating_sub(2)),
            },
            cus: cu_used,
            tile: TileShape::new(1, 1, 1),
            block: Block { m: 2, k: 8, n: 8 },
            kernel: KernelKind::Flexible,
        };
        Self {
            layer_id,
            mode_id,
            fmu_used,
            cu_used,
            latency: latency_ns as f64 * 1e-9,
            latency_ns,
            fmu_roles: Vec::new(),
            views: Vec::new(),
            spec,
        }
    }
}

pub fn seconds_to_ns(s: f64) -> u64 {
    (s * 1e9).ceil().max(1.0) as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTable {
    pub layers: Vec<Vec<CandidateMode>>,
}

impl CandidateTable {
    pub fn candidates(&self, layer: usize) -> &[CandidateMode] {
        &self.layers[layer]
    }

    pub fn mode(&self, layer: usize, mode: usize) -> &CandidateMode {
        &self.layers[layer][mode]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }

    /// Builds a table from `(fmu, cu, latency_ns)` triples per layer.
    pub fn from_triples(layers: &[Vec<(usize, usize, u64)>]) -> Self {
        Self {
            layers: layers
                .iter()
                .enumerate()
                .map(|(i, modes)| {
                    modes
                        .iter()
                        .enumerate()
                        .map(|(k, &(f, c, e))| CandidateMode::synthetic(i, k, f, c, e))
                        .collect()
                })
                .collect(),
        }
    }
}

/// All role splits with at least one FMU per role and at most `f_max` FMUs in total.
pub fn role_splits(f_max: usize) -> Vec<RoleSplit> {
    let mut v = Vec::new();
    for f in 3..=f_max {
        for lhs in 1..=f - 2 {
            for rhs in 1..=f - 1 - lhs {
                v.push(RoleSplit {
                    lhs,
                    rhs,
                    out: f - lhs - rhs,
                });
            }
        }
    }
    v
}

/// Block extents along a dimension: power-of-two multiples of the atom edge, clipped to
/// the dimension.
pub fn block_candidates(total: usize, unit: usize) -> Vec<usize> {
    let mut v = Vec::new();
    let mut b = unit;
    loop {
        v.push(b.min(total));
        if b >= total {
            break;
        }
        b *= 2;
    }
    v
}

/// Tile atom counts along a dimension: powers of two up to `max`, plus the exact fit for
/// dimensions smaller than the max tile.
pub fn tile_candidates(exact: usize, max: usize) -> Vec<usize> {
    let mut v: Vec<usize> = std::iter::successors(Some(1usize), |a| Some(a * 2))
        .take_while(|&a| a <= max)
        .collect();
    if exact < max {
        v.retain(|&a| a <= exact);
        v.push(exact.max(1));
    }
    v.sort_unstable();
    v.dedup();
    v
}

fn tiles_for(layer: &LayerNode, hw: &HardwareConfig) -> Vec<TileShape> {
    let (mi, mk, mj) = hw.max_tile_atoms();
    let per_aie_n = layer.n.div_ceil(hw.aie_per_cu);
    let ai = tile_candidates(layer.m.div_ceil(ATOM.0), mi);
    let ak = tile_candidates(layer.k.div_ceil(ATOM.1), mk);
    let aj = tile_candidates(per_aie_n.div_ceil(ATOM.2), mj);
    let mut v = Vec::with_capacity(ai.len() * ak.len() * aj.len());
    for &i in &ai {
        for &k in &ak {
            for &j in &aj {
                v.push(TileShape::new(i, k, j));
            }
        }
    }
    v
}

/// BK candidates whose LHS and RHS views fit, for a given `(bm, bn)`.
fn fitting_bks(
    bm: usize,
    bn: usize,
    roles: RoleSplit,
    bks: &[usize],
    cap: usize,
) -> impl Iterator<Item = usize> + '_ {
    let lhs_rows = bm.div_ceil(roles.lhs);
    bks.iter()
        .copied()
        .filter(move |&bk| lhs_rows * bk <= cap && bk.div_ceil(roles.rhs) * bn <= cap)
}

#[derive(Clone, Copy)]
struct ComputeCost {
    key: (usize, usize, usize),
    compute: f64,
    executed: u64,
}

/// Visits every feasible mode of `layer` with its latency breakdown.
///
/// The space: every role split of at most `F_max` FMUs, every `c` from 1 up to the number
/// of atom rows a block offers (capped at `C_max`), every candidate tile, and every
/// `(bm, bk, bn)` block whose views fit.
pub fn for_each_mode(
    layer: &LayerNode,
    hw: &HardwareConfig,
    visit: impl FnMut(ModeSpec, LatencyBreakdown),
) {
    scan_modes(layer, hw, |_| f64::INFINITY, visit);
}

/// Mode scan that skips any mode whose phase-sum lower bound exceeds `cutoff(spec)`.
fn scan_modes(
    layer: &LayerNode,
    hw: &HardwareConfig,
    cutoff: impl Fn(&ModeSpec) -> f64,
    mut visit: impl FnMut(ModeSpec, LatencyBreakdown),
) {
    let cap = hw.fmu_capacity_elems;
    let bms = block_candidates(layer.m, ATOM.0);
    let bks = block_candidates(layer.k, ATOM.1);
    let bns = block_candidates(layer.n, ATOM.2);
    let tiles = tiles_for(layer, hw);
    let mut compute_cache: HashMap<(Block, usize, TileShape), (Vec<ComputeCost>, f64)> =
        HashMap::new();

    for roles in role_splits(hw.n_fmu) {
        for &bm in &bms {
            for &bn in &bns {
                if bm.div_ceil(roles.out) * bn > cap {
                    continue;
                }
                for bk in fitting_bks(bm, bn, roles, &bks, cap) {
                    let block = Block {
                        m: bm,
                        k: bk,
                        n: bn,
                    };
                    let probe = ModeSpec {
                        roles,
                        cus: 1,
                        tile: tiles[0],
                        block,
                        kernel: KernelKind::Flexible,
                    };
                    let mut io: Vec<((usize, usize, usize), f64, f64)> = Vec::with_capacity(8);
                    let (mut sum_load, mut sum_store) = (0.0, 0.0);
                    for (nm, sm) in dim_classes(layer.m, bm) {
                        for (ik, (nk, sk)) in dim_classes(layer.k, bk).into_iter().enumerate() {
                            for (nn, sn) in dim_classes(layer.n, bn) {
                                let load = round_load(layer, &probe, hw, sm, sk, sn);
                                let store = block_store(layer, &probe, hw, sm, sn);
                                sum_load += (nm * nk * nn) as f64 * load;
                                if ik == 0 {
                                    sum_store += (nm * nn) as f64 * store;
                                }
                                io.push(((sm, sk, sn), load, store));
                            }
                        }
                    }
                    let counts: Vec<u64> = dim_classes(layer.m, bm)
                        .iter()
                        .flat_map(|&(nm, _)| {
                            let ck = dim_classes(layer.k, bk);
                            let cn = dim_classes(layer.n, bn);
                            ck.into_iter().flat_map(move |(nk, _)| {
                                cn.clone().into_iter().map(move |(nn, _)| nm * nk * nn)
                            })
                        })
                        .collect();
                    let max_cus = hw.n_cu.min(bm.div_ceil(ATOM.0));
                    let io_bound = sum_load.max(sum_store);
                    for cus in 1..=max_cus {
                        if io_bound > cutoff(&ModeSpec { cus, ..probe }) * (1.0 + 1e-9) {
                            continue;
                        }
                        for &tile in &tiles {
                            let spec = ModeSpec { cus, tile, ..probe };
                            let (cc, sum_compute) =
                                compute_cache.entry((block, cus, tile)).or_insert_with(|| {
                                    let costs: Vec<ComputeCost> = io
                                        .iter()
                                        .map(|&(key, _, _)| {
                                            let (compute, executed) = round_compute(
                                                layer, &spec, hw, key.0, key.1, key.2,
                                            );
                                            ComputeCost {
                                                key,
                                                compute,
                                                executed,
                                            }
                                        })
                                        .collect();
                                    let sum = costs
                                        .iter()
                                        .zip(&counts)
                                        .map(|(c, &n)| n as f64 * c.compute)
                                        .sum();
                                    (costs, sum)
                                });
                            let limit = cutoff(&spec);
                            // Phase sums bound the latency from below; the margin absorbs
                            // summation-order rounding so ties still reach the recurrence.
                            if sum_load.max(sum_store).max(*sum_compute) > limit * (1.0 + 1e-9) {
                                continue;
                            }
                            let lb = compose_bounded(layer, block, limit, |sm, sk, sn| {
                                let key = (sm, sk, sn);
                                let (_, load, store) =
                                    *io.iter().find(|e| e.0 == key).expect("class cached");
                                let c = cc.iter().find(|c| c.key == key).expect("class cached");
                                RoundCost {
                                    load,
                                    compute: c.compute,
                                    store,
                                    executed: c.executed,
                                }
                            });
                            if let Some(lb) = lb {
                                visit(spec, lb);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Every feasible mode of a layer, in enumeration order.
pub fn enumerate_modes(layer: &LayerNode, hw: &HardwareConfig) -> Result<Vec<CandidateMode>> {
    let mut out = Vec::new();
    for_each_mode(layer, hw, |spec, lb| {
        let k = out.len();
        out.push(CandidateMode::new(layer.id, k, spec, lb.t_total));
    });
    if out.is_empty() {
        return Err(infeasible_layer(layer));
    }
    Ok(out)
}

fn infeasible_layer(layer: &LayerNode) -> Error {
    Error::Infeasible(format!(
        "layer {} ({}) has no mode that fits the FMUs",
        layer.id, layer.name
    ))
}

/// Pareto frontier over `(f, c, e)` after keeping the fastest mode per `(f, c)`.
pub fn layer_frontier(layer: &LayerNode, hw: &HardwareConfig) -> Result<Vec<CandidateMode>> {
    let best = std::cell::RefCell::new(BTreeMap::<(usize, usize), (f64, ModeSpec)>::new());
    let cutoff = |spec: &ModeSpec| {
        best.borrow()
            .get(&(spec.fmus(), spec.cus))
            .map_or(f64::INFINITY, |b| b.0)
    };
    scan_modes(layer, hw, cutoff, |spec, lb| {
        let mut best = best.borrow_mut();
        let key = (spec.fmus(), spec.cus);
        let better = match best.get(&key) {
            None => true,
            Some(&(e, s)) => lb.t_total < e || (lb.t_total == e && spec < s),
        };
        if better {
            best.insert(key, (lb.t_total, spec));
        }
    });
    let best = best.into_inner();
    if best.is_empty() {
        return Err(infeasible_layer(layer));
    }
    let entries: Vec<((usize, usize), (f64, ModeSpec))> = best.into_iter().collect();
    let kept = entries
        .iter()
        .filter(|&&((f, c), (e, _))| {
            !entries.iter().any(|&((f2, c2), (e2, _))| {
                f2 <= f && c2 <= c && e2 <= e && (f2, c2, e2) != (f, c, e)
            })
        })
        .enumerate()
        .map(|(k, &(_, (e, spec)))| CandidateMode::new(layer.id, k, spec, e))
        .collect();
    Ok(kept)
}

/// Stage-1 table for a whole workload. Identical layer shapes are explored once.
pub fn build_table(dag: &WorkloadDag, hw: &HardwareConfig) -> Result<CandidateTable> {
    hw.validate()?;
    let mut shapes: Vec<LayerNode> = Vec::new();
    let mut shape_of = Vec::with_capacity(dag.len());
    for l in &dag.layers {
        let key = LayerNode {
            id: 0,
            name: String::new(),
            ..l.clone()
        };
        let idx = match shapes.iter().position(|s| *s == key) {
            Some(i) => i,
            None => {
                shapes.push(key);
                shapes.len() - 1
            }
        };
        shape_of.push(idx);
    }
    let frontiers: Vec<Result<Vec<CandidateMode>>> =
        shapes.par_iter().map(|s| layer_frontier(s, hw)).collect();
    let mut layers = Vec::with_capacity(dag.len());
    for (l, &s) in dag.layers.iter().zip(&shape_of) {
        let modes = frontiers[s].as_ref().map_err(|_| infeasible_layer(l))?;
        layers.push(
            modes
                .iter()
                .map(|m| CandidateMode {
                    layer_id: l.id,
                    ..m.clone()
                })
                .collect(),
        );
    }
    Ok(CandidateTable { layers })
}

/// Pads every layer's candidate list to `per_layer` entries with perturbed copies of its
/// existing entries (same resources, 0-20% slower), for solver stress tests.
pub fn inflate_table(table: &CandidateTable, per_layer: usize, seed: u64) -> CandidateTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = table
        .layers
        .iter()
        .map(|modes| {
            let mut v = modes.clone();
            while v.len() < per_layer {
                let src = &modes[rng.gen_range(0..modes.len())];
                let factor = 1.0 + rng.gen_range(0.0..0.2);
                let mut m = src.clone();
                m.latency = src.latency * factor;
                m.latency_ns = ((src.latency_ns as f64) * factor).ceil() as u64;
                v.push(m);
            }
            for (k, m) in v.iter_mut().enumerate() {
                m.mode_id = k;
            }
            v
        })
        .collect();
    CandidateTable { layers }
}
