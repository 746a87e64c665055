//! Matrix-multiplication accelerator planning: workload DAGs, an analytical performance
//! model, per-layer mode exploration, multi-layer scheduling, instruction generation and a
//! cycle-approximate simulator.

pub mod arch;
pub mod error;
pub mod experiments;
pub mod explore;
pub mod isa;
pub mod perfmodel;
pub mod scheduler;
pub mod sim;
pub mod workload;

pub use arch::{default_vck190, load_config, AieCycleParams, DdrProfile, HardwareConfig};
pub use error::{Error, Result};
pub use explore::{build_table, enumerate_modes, CandidateMode, CandidateTable, Role};
pub use isa::{decode, encode, generate_program, Instruction, Program};
pub use perfmodel::{layer_latency, layer_latency_spec, LatencyBreakdown, ModeSpec, TileShape};
pub use scheduler::{
    build_milp, decode_chromosome, export_lp, solve_exact, solve_ga, validate_schedule, Chromosome,
    GaParams, MilpModel, Schedule, ValidationReport,
};
pub use workload::{gen_mlp, gen_transformer, parse_workload, DType, LayerNode, WorkloadDag};
