//! Plan builders and dense-product oracles for simulator-level tests.

use flexmm::explore::{
    block_candidates, role_splits, tile_candidates, CandidateMode, CandidateTable,
};
use flexmm::isa::{Instruction, MemoryLayout, Program, Range2, Region, UnitKind, UnitRef};
use flexmm::perfmodel::{Block, KernelKind, ModeSpec, RoleSplit, TileShape};
use flexmm::scheduler::{Schedule, ScheduledLayer};
use flexmm::sim::{DdrImage, Matrix};
use flexmm::workload::{gen_mlp, DType, LayerNode, WorkloadDag};
use flexmm::HardwareConfig;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn single(
    layer: LayerNode,
    spec: ModeSpec,
    hw: &HardwareConfig,
) -> (WorkloadDag, CandidateTable, Schedule) {
    let lat = flexmm::layer_latency_spec(&layer, &spec, hw)
        .unwrap()
        .t_total;
    let mode = CandidateMode::new(0, 0, spec, lat);
    schedule_one(layer, mode)
}

pub fn schedule_one(
    layer: LayerNode,
    mode: CandidateMode,
) -> (WorkloadDag, CandidateTable, Schedule) {
    let dag = WorkloadDag::new(vec![layer], vec![]).unwrap();
    let s = Schedule {
        layers: vec![ScheduledLayer {
            layer: 0,
            mode: 0,
            start_ns: 0,
            end_ns: mode.latency_ns,
            fmus: (0..mode.fmu_used).collect(),
            cus: (0..mode.cu_used).collect(),
        }],
        makespan_ns: mode.latency_ns,
        lower_bound_ns: None,
        optimal: false,
    };
    let table = CandidateTable {
        layers: vec![vec![mode]],
    };
    (dag, table, s)
}

pub fn spec(
    roles: (usize, usize, usize),
    cus: usize,
    tile: (usize, usize, usize),
    block: (usize, usize, usize),
) -> ModeSpec {
    ModeSpec {
        roles: RoleSplit {
            lhs: roles.0,
            rhs: roles.1,
            out: roles.2,
        },
        cus,
        tile: TileShape::new(tile.0, tile.1, tile.2),
        block: Block {
            m: block.0,
            k: block.1,
            n: block.2,
        },
        kernel: KernelKind::Flexible,
    }
}

/// Triple-loop product on raw element patterns.
pub fn oracle(a: &Matrix, b: &Matrix, integer: bool) -> Vec<u32> {
    let mut c = vec![0u32; a.rows * b.cols];
    for i in 0..a.rows {
        for j in 0..b.cols {
            if integer {
                let mut acc = 0i32;
                for k in 0..a.cols {
                    acc = acc.wrapping_add((a.get(i, k) as i32).wrapping_mul(b.get(k, j) as i32));
                }
                c[i * b.cols + j] = acc as u32;
            } else {
                let mut acc = 0f64;
                for k in 0..a.cols {
                    acc += f32::from_bits(a.get(i, k)) as f64 * f32::from_bits(b.get(k, j)) as f64;
                }
                c[i * b.cols + j] = (acc as f32).to_bits();
            }
        }
    }
    c
}

/// A random feasible mode drawn from the same candidate sets the explorer uses.
pub fn random_spec(layer: &LayerNode, hw: &HardwareConfig, rng: &mut ChaCha8Rng) -> ModeSpec {
    let pick = |v: Vec<usize>, rng: &mut ChaCha8Rng| v[rng.gen_range(0..v.len())];
    let roles = role_splits(hw.n_fmu);
    let (mi, mk, mj) = hw.max_tile_atoms();
    loop {
        let bm = pick(block_candidates(layer.m, 2), rng);
        let s = ModeSpec {
            roles: roles[rng.gen_range(0..roles.len())],
            cus: rng.gen_range(1..=hw.n_cu.min(bm.div_ceil(2))),
            tile: TileShape::new(
                pick(tile_candidates(layer.m.div_ceil(2), mi), rng),
                pick(tile_candidates(layer.k.div_ceil(8), mk), rng),
                pick(
                    tile_candidates(layer.n.div_ceil(hw.aie_per_cu).div_ceil(8), mj),
                    rng,
                ),
            ),
            block: Block {
                m: bm,
                k: pick(block_candidates(layer.k, 8), rng),
                n: pick(block_candidates(layer.n, 8), rng),
            },
            kernel: KernelKind::Flexible,
        };
        if s.check(hw).is_ok() {
            return s;
        }
    }
}

pub fn region(name: &str, rows: usize, cols: usize, valid: (usize, usize)) -> Region {
    Region {
        name: name.into(),
        addr: 0,
        rows,
        cols,
        dtype: DType::Fp32,
        valid_rows: valid.0,
        valid_cols: valid.1,
    }
}

pub fn load(addr: u32, m: usize, n: usize, range: Range2) -> Instruction {
    Instruction::IomLoad {
        is_last: false,
        ddr_addr: addr,
        des_fmu: 0,
        m: m as u32,
        n: n as u32,
        range,
    }
}

pub fn loads_only(ins: Vec<Instruction>) -> Program {
    let mut p = Program::default();
    p.streams.insert(UnitRef::new(UnitKind::Loader, 0), ins);
    p
}

/// Oracle outputs for a whole DAG: inputs come from the initial image, and a layer whose
/// LHS region is a predecessor's output region reads that predecessor's oracle result.
pub fn dag_oracle(dag: &WorkloadDag, lay: &MemoryLayout, img: &DdrImage) -> Vec<Vec<u32>> {
    let mut out: Vec<Option<Matrix>> = vec![None; dag.len()];
    for j in dag.topological_order() {
        let r = lay.layers[j];
        let operand = |reg: usize, out: &[Option<Matrix>]| {
            (0..dag.len())
                .find(|&p| lay.layers[p].out == reg)
                .map(|p| out[p].clone().expect("predecessor computed first"))
                .unwrap_or_else(|| img.read_matrix(&lay.regions[reg]))
        };
        let a = operand(r.lhs, &out);
        let b = operand(r.rhs, &out);
        let integer = dag.layers[j].dtype.is_integer();
        let data = oracle(&a, &b, integer);
        out[j] = Some(Matrix {
            rows: a.rows,
            cols: b.cols,
            dtype: dag.layers[j].dtype.output(),
            data,
        });
    }
    out.into_iter().map(|m| m.unwrap().data).collect()
}

pub fn random_workload(rng: &mut ChaCha8Rng) -> WorkloadDag {
    let dtype = if rng.gen_bool(0.5) {
        DType::Fp32
    } else {
        DType::Int32
    };
    let mut dag = if rng.gen_bool(0.5) {
        let m = rng.gen_range(1..90);
        let mut ks: Vec<usize> = (0..rng.gen_range(2..5))
            .map(|_| rng.gen_range(1..90))
            .collect();
        ks.push(rng.gen_range(1..90));
        let dims: Vec<(usize, usize, usize)> = ks.windows(2).map(|w| (m, w[0], w[1])).collect();
        gen_mlp(&dims).unwrap()
    } else {
        let n = rng.gen_range(2..5);
        let layers = (0..n)
            .map(|i| {
                LayerNode::new(
                    i,
                    rng.gen_range(1..90),
                    rng.gen_range(1..90),
                    rng.gen_range(1..90),
                )
            })
            .collect();
        let mut edges = Vec::new();
        for i in 1..n {
            if rng.gen_bool(0.5) {
                edges.push((rng.gen_range(0..i), i));
            }
        }
        WorkloadDag::new(layers, edges).unwrap()
    };
    for l in &mut dag.layers {
        l.dtype = dtype;
    }
    dag
}
