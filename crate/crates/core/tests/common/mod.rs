//! Independent oracles and instance generators shared by the integration tests.
#![allow(dead_code)]

pub mod plans;

use flexmm::explore::CandidateTable;
use flexmm::workload::{LayerNode, WorkloadDag};
use rand::Rng;

/// Random DAG over `n` layers: each forward pair gets an edge with probability `p_edge`.
pub fn random_dag(rng: &mut impl Rng, n: usize, p_edge: f64) -> WorkloadDag {
    let layers = (0..n).map(|i| LayerNode::new(i, 2, 8, 8)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p_edge {
                edges.push((i, j));
            }
        }
    }
    WorkloadDag::new(layers, edges).expect("forward edges form a DAG")
}

/// Random `(f, c, e)` modes per layer within the given limits.
pub fn random_modes(
    rng: &mut impl Rng,
    n: usize,
    modes: (usize, usize),
    f_max: usize,
    c_max: usize,
    e_range: (u64, u64),
) -> Vec<Vec<(usize, usize, u64)>> {
    (0..n)
        .map(|_| {
            let k = rng.gen_range(modes.0..=modes.1);
            (0..k)
                .map(|_| {
                    (
                        rng.gen_range(1..=f_max),
                        rng.gen_range(1..=c_max),
                        rng.gen_range(e_range.0..=e_range.1),
                    )
                })
                .collect()
        })
        .collect()
}

/// Modes shaped like a Stage-1 frontier: more units buy shorter latency with diminishing
/// returns, plus noise.
pub fn frontier_modes(
    rng: &mut impl Rng,
    n: usize,
    modes: (usize, usize),
    f_max: usize,
    c_max: usize,
) -> Vec<Vec<(usize, usize, u64)>> {
    (0..n)
        .map(|_| {
            let work = rng.gen_range(2_000.0..40_000.0f64);
            let k = rng.gen_range(modes.0..=modes.1);
            let mut v: Vec<(usize, usize, u64)> = Vec::new();
            while v.len() < k {
                let f = rng.gen_range(3.min(f_max)..=f_max);
                let c = rng.gen_range(1..=c_max);
                if v.iter().any(|m| m.0 == f && m.1 == c) {
                    continue;
                }
                let speed = (c as f64).powf(0.85) * (f as f64 / 3.0).powf(0.3);
                let e = work / speed * rng.gen_range(0.9..1.1);
                v.push((f, c, e.ceil() as u64));
            }
            v
        })
        .collect()
}

/// Earliest start >= `est` such that adding `(f, c)` for `[t, t + e)` keeps usage within
/// limits; checked by brute force against every placed interval.
fn brute_place(
    placed: &[(u64, u64, usize, usize)],
    est: u64,
    f: usize,
    c: usize,
    e: u64,
    fm: usize,
    cm: usize,
) -> u64 {
    let mut cands: Vec<u64> = vec![est];
    cands.extend(placed.iter().map(|p| p.1).filter(|&t| t >= est));
    cands.sort_unstable();
    for t in cands {
        let mut points = vec![t];
        points.extend(placed.iter().map(|p| p.0).filter(|&s| s > t && s < t + e));
        let ok = points.iter().all(|&x| {
            let (uf, uc) = placed
                .iter()
                .filter(|p| p.0 <= x && x < p.1)
                .fold((0, 0), |acc, p| (acc.0 + p.2, acc.1 + p.3));
            uf + f <= fm && uc + c <= cm
        });
        if ok {
            return t;
        }
    }
    unreachable!("after every interval ends the platform is empty")
}

/// Optimal makespan by exhaustion: every topological order combined with every mode
/// vector, each layer placed with unrestricted serial list scheduling. Prefixes are shared.
pub fn brute_force_makespan(
    dag: &WorkloadDag,
    modes: &[Vec<(usize, usize, u64)>],
    f_max: usize,
    c_max: usize,
) -> u64 {
    struct Ctx<'a> {
        preds: Vec<Vec<usize>>,
        modes: &'a [Vec<(usize, usize, u64)>],
        fm: usize,
        cm: usize,
        best: u64,
    }
    fn go(
        cx: &mut Ctx,
        used: &mut Vec<bool>,
        placed: &mut Vec<(u64, u64, usize, usize)>,
        end: &mut Vec<u64>,
    ) {
        let n = used.len();
        if placed.len() == n {
            cx.best = cx.best.min(end.iter().copied().max().unwrap_or(0));
            return;
        }
        for j in 0..n {
            if used[j] || cx.preds[j].iter().any(|&i| !used[i]) {
                continue;
            }
            for k in 0..cx.modes[j].len() {
                let (f, c, e) = cx.modes[j][k];
                let est = cx.preds[j].iter().map(|&i| end[i]).max().unwrap_or(0);
                let t = brute_place(placed, est, f, c, e, cx.fm, cx.cm);
                used[j] = true;
                placed.push((t, t + e, f, c));
                end[j] = t + e;
                go(cx, used, placed, end);
                end[j] = 0;
                placed.pop();
                used[j] = false;
            }
        }
    }
    let n = dag.len();
    let mut cx = Ctx {
        preds: dag.predecessors(),
        modes,
        fm: f_max,
        cm: c_max,
        best: u64::MAX,
    };
    go(
        &mut cx,
        &mut vec![false; n],
        &mut Vec::new(),
        &mut vec![0; n],
    );
    cx.best
}

pub fn table(modes: &[Vec<(usize, usize, u64)>]) -> CandidateTable {
    CandidateTable::from_triples(modes)
}

/// Random instruction with every field inside its declared width and range invariant.
pub fn random_instruction(rng: &mut impl Rng) -> flexmm::isa::Instruction {
    use flexmm::isa::{Instruction, Op, Range2, UnitKind, UnitRef};
    let op = |rng: &mut dyn rand::RngCore| Op::ALL[rng.gen_range(0..Op::ALL.len())];
    let unit = |rng: &mut dyn rand::RngCore| rng.gen_range(0..16u32);
    let range = |rng: &mut dyn rand::RngCore, m: u32, n: u32| {
        let (a, b) = (rng.gen_range(0..m), rng.gen_range(0..m));
        let (c, d) = (rng.gen_range(0..n), rng.gen_range(0..n));
        Range2 {
            start_row: a.min(b),
            end_row: a.max(b),
            start_col: c.min(d),
            end_col: c.max(d),
        }
    };
    let is_last = rng.gen_bool(0.5);
    match rng.gen_range(0..5) {
        0 => Instruction::Header {
            is_last,
            des_unit: UnitRef {
                kind: UnitKind::ALL[rng.gen_range(0..4)],
                index: unit(rng),
            },
            valid_length: rng.gen(),
        },
        1 | 2 => {
            let (m, n) = (rng.gen_range(1..=65535u32), rng.gen_range(1..=65535u32));
            let r = range(rng, m, n);
            let (ddr_addr, fmu) = (rng.gen(), unit(rng));
            if rng.gen_bool(0.5) {
                Instruction::IomLoad {
                    is_last,
                    ddr_addr,
                    des_fmu: fmu,
                    m,
                    n,
                    range: r,
                }
            } else {
                Instruction::IomStore {
                    is_last,
                    ddr_addr,
                    src_fmu: fmu,
                    m,
                    n,
                    range: r,
                }
            }
        }
        3 => Instruction::Fmu {
            is_last,
            ping_op: op(rng),
            pong_op: op(rng),
            src_cu: unit(rng),
            des_cu: unit(rng),
            count: rng.gen_range(1..=u32::MAX),
            range: range(rng, 65536, 65536),
        },
        _ => Instruction::Cu {
            is_last,
            ping_op: op(rng),
            pong_op: op(rng),
            src_fmu: unit(rng),
            des_fmu: unit(rng),
            count: rng.gen_range(1..=u32::MAX),
        },
    }
}
