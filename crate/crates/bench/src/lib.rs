//! Shared fixtures for the benchmarks.

use flexmm::explore::{build_table, CandidateTable};
use flexmm::isa::{generate_program, plan_layout, Program};
use flexmm::scheduler::{solve_ga, GaParams, Schedule};
use flexmm::sim::DdrImage;
use flexmm::workload::{gen_transformer, LayerNode, WorkloadDag};
use flexmm::HardwareConfig;

/// A planned workload: table, schedule, program and a seeded input image.
pub struct Plan {
    pub dag: WorkloadDag,
    pub table: CandidateTable,
    pub schedule: Schedule,
    pub program: Program,
    pub image: DdrImage,
}

pub fn hw() -> HardwareConfig {
    HardwareConfig::default()
}

/// One encoder block of a small transformer.
pub fn transformer() -> WorkloadDag {
    gen_transformer(64, 2, 32, 2.0, 1).expect("valid shape")
}

/// A layer whose mode space is large enough to exercise frontier pruning.
pub fn wide_layer() -> LayerNode {
    LayerNode::new(0, 512, 256, 256)
}

pub fn fast_ga(seed: u64) -> GaParams {
    GaParams {
        population: 32,
        iterations: 100,
        seed,
        ..GaParams::default()
    }
}

pub fn plan(dag: WorkloadDag) -> Plan {
    let hw = hw();
    let table = build_table(&dag, &hw).expect("explorable");
    let schedule = solve_ga(&dag, &table, &hw, &fast_ga(1)).expect("schedulable");
    let program = generate_program(&schedule, &dag, &table, &hw).expect("generates");
    let image = DdrImage::random(plan_layout(&dag).expect("layout"), 1);
    Plan {
        dag,
        table,
        schedule,
        program,
        image,
    }
}
