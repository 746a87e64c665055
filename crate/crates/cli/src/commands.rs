//! Command bodies. Each failure carries the name of the stage that produced it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::anyhow;
use flexmm::experiments::{
    compare_workload, diverse_grid, efficiency_sweep, solver_study, BaselineConfig, Comparison,
    TransformerShape,
};
use flexmm::isa::{disassemble, plan_layout};
use flexmm::sim::{self, DdrImage, SimOptions};
use flexmm::workload::diversity_profile;
use flexmm::{
    build_milp, build_table, default_vck190, export_lp as lp_text, generate_program, load_config,
    parse_workload, solve_exact, solve_ga, validate_schedule, GaParams, HardwareConfig, Program,
    Schedule, WorkloadDag,
};
use serde_json::json;

use crate::output::{InputRef, Outputs, RunManifest};
use crate::{
    Baseline, CompareArgs, ExportLpArgs, GaArgs, OptimizeArgs, ReportArgs, SchedulerKind,
    SimulateArgs,
};

pub struct Failure {
    pub stage: &'static str,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        use flexmm::Error as E;
        match self.error.downcast_ref::<E>() {
            Some(
                E::Parse { .. }
                | E::Validation(_)
                | E::Dimension(_)
                | E::Config { .. }
                | E::Range(_)
                | E::Encode { .. }
                | E::Decode(_)
                | E::Json(_),
            ) => 1,
            Some(E::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => 1,
            Some(E::Infeasible(_)) => 2,
            Some(E::Timeout { .. }) => 3,
            Some(_) => 4,
            None => match self.error.downcast_ref::<std::io::Error>() {
                Some(e) if e.kind() == std::io::ErrorKind::NotFound => 1,
                _ => 4,
            },
        }
    }
}

trait Stage<T> {
    fn stage(self, name: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for Result<T, E> {
    fn stage(self, name: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            stage: name,
            error: e.into(),
        })
    }
}

type CmdResult = Result<(), Failure>;

struct Loaded {
    dag: WorkloadDag,
    hw: HardwareConfig,
    workload_ref: Option<InputRef>,
    arch_ref: Option<InputRef>,
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path)
        .map_err(|e| anyhow::Error::new(e).context(format!("reading {}", path.display())))
        .stage("load")
}

fn load_arch(arch: Option<&Path>) -> Result<(HardwareConfig, Option<InputRef>), Failure> {
    match arch {
        Some(p) => {
            let bytes = read(p)?;
            let hw = load_config(&String::from_utf8_lossy(&bytes)).stage("load")?;
            Ok((hw, Some(InputRef::new(p, &bytes))))
        }
        None => Ok((default_vck190(), None)),
    }
}

fn load(workload: &Path, arch: Option<&Path>) -> Result<Loaded, Failure> {
    let bytes = read(workload)?;
    let dag = parse_workload(&String::from_utf8_lossy(&bytes)).stage("load")?;
    let (hw, arch_ref) = load_arch(arch)?;
    hw.validate().stage("load")?;
    Ok(Loaded {
        dag,
        hw,
        workload_ref: Some(InputRef::new(workload, &bytes)),
        arch_ref,
    })
}

fn ga_params(a: &GaArgs) -> GaParams {
    GaParams {
        population: a.ga_pop,
        iterations: a.ga_iters,
        seed: a.seed,
        ..GaParams::default()
    }
}

fn write(out: &mut Outputs, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    out.write(name, bytes)
        .map_err(|e| anyhow::Error::new(e).context(format!("writing {name}")))
        .stage("write")
}

fn open(dir: &Path) -> Result<Outputs, Failure> {
    Outputs::create(dir)
        .map_err(|e| anyhow::Error::new(e).context(format!("creating {}", dir.display())))
        .stage("write")
}

pub fn optimize(a: &OptimizeArgs) -> CmdResult {
    let l = load(&a.workload, a.arch.as_deref())?;
    log::info!("{} layers, {} MACs", l.dag.len(), l.dag.total_ops());
    let table = build_table(&l.dag, &l.hw).stage("explore")?;
    log::info!(
        "stage 1 kept {} modes",
        table.layers.iter().map(|m| m.len()).sum::<usize>()
    );
    let schedule: Schedule = match a.scheduler {
        SchedulerKind::Ga => {
            solve_ga(&l.dag, &table, &l.hw, &ga_params(&a.ga)).stage("schedule")?
        }
        SchedulerKind::Exact => {
            let model = build_milp(&l.dag, &table, &l.hw).stage("schedule")?;
            let budget = Duration::try_from_secs_f64(a.budget_sec)
                .map_err(|_| flexmm::Error::Validation("--budget-sec must be >= 0".into()))
                .stage("schedule")?;
            let s = solve_exact(&model, budget).stage("schedule")?;
            if !s.optimal {
                log::warn!(
                    "exact solver hit its budget; keeping incumbent {} ns (bound {:?})",
                    s.makespan_ns,
                    s.lower_bound_ns
                );
            }
            s
        }
    };
    let report = validate_schedule(&schedule, &l.dag, &table, &l.hw);
    if !report.is_valid() {
        return Err(anyhow!(
            "schedule violates constraints: {:?}",
            report.violations
        ))
        .stage("schedule");
    }
    let program = generate_program(&schedule, &l.dag, &table, &l.hw).stage("generate")?;
    let bin = program.to_bytes().stage("generate")?;
    let layout = plan_layout(&l.dag).stage("generate")?;

    let mut out = open(&a.out)?;
    write(&mut out, "workload.json", l.dag.to_json().as_bytes())?;
    write(&mut out, "arch.json", l.hw.to_json().as_bytes())?;
    write(&mut out, "table.json", table.to_json().as_bytes())?;
    write(&mut out, "schedule.json", schedule.to_json().as_bytes())?;
    write(&mut out, "program.bin", &bin)?;
    write(&mut out, "program.asm", disassemble(&program).as_bytes())?;
    let layout_json = serde_json::to_string_pretty(&layout).stage("write")?;
    write(&mut out, "layout.json", layout_json.as_bytes())?;

    let mut params = json!({ "budget_sec": a.budget_sec });
    if a.scheduler == SchedulerKind::Ga {
        params = json!({ "ga_pop": a.ga.ga_pop, "ga_iters": a.ga.ga_iters });
    }
    let manifest = RunManifest {
        command: "optimize",
        workload: l.workload_ref,
        arch: l.arch_ref,
        scheduler: Some(a.scheduler.name().into()),
        params,
        seed: a.ga.seed,
        out: a.out.display().to_string(),
        artifacts: out.hashes().clone(),
    };
    out.finish(&manifest).stage("write")?;
    println!("makespan_ns: {}", schedule.makespan_ns);
    println!("plan: {}", a.out.display());
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> CmdResult {
    let text = |name: &str| -> Result<String, Failure> {
        Ok(String::from_utf8_lossy(&read(&a.plan.join(name))?).into_owned())
    };
    let dag = parse_workload(&text("workload.json")?).stage("load")?;
    let hw = load_config(&text("arch.json")?).stage("load")?;
    let program = Program::from_bytes(&read(&a.plan.join("program.bin"))?).stage("load")?;
    program.check().stage("load")?;
    let image = DdrImage::random(plan_layout(&dag).stage("load")?, a.seed);
    let opts = SimOptions {
        functional: a.check_functional,
        trace: true,
    };
    let res = sim::run_with(&program, &hw, &image, opts).stage("simulate")?;

    let mut functional = None;
    if a.check_functional {
        let want = sim::reference_outputs(&dag, &image).stage("check")?;
        match sim::check_outputs(&dag, &res.outputs, &want, 1e-4) {
            Ok(()) => functional = Some(true),
            Err(e) => {
                println!("functional: FAIL");
                return Err(e).stage("check");
            }
        }
    }

    let dir = a.out.clone().unwrap_or_else(|| a.plan.join("sim"));
    let mut out = open(&dir)?;
    let summary = json!({
        "makespan_ns": res.makespan * 1e9,
        "utilization": res.utilization,
        "layer_spans_ns": res.layer_spans.iter().map(|&(s, e)| [s * 1e9, e * 1e9]).collect::<Vec<_>>(),
        "executed_macs": res.executed_macs,
        "loaded_elems": res.loaded_elems,
        "stored_elems": res.stored_elems,
        "functional": functional,
    });
    let summary = serde_json::to_string_pretty(&summary).stage("write")?;
    write(&mut out, "sim.json", summary.as_bytes())?;
    write(&mut out, "trace.csv", res.trace_csv().as_bytes())?;
    if a.check_functional {
        write(&mut out, "ddr_out.bin", &res.ddr.bytes)?;
        let layout = serde_json::to_string_pretty(&res.ddr.layout).stage("write")?;
        write(&mut out, "ddr_out.bin.json", layout.as_bytes())?;
    }
    let plan_manifest = a.plan.join("manifest.json");
    let manifest = RunManifest {
        command: "simulate",
        workload: Some(InputRef::new(
            &plan_manifest,
            &fs::read(&plan_manifest).unwrap_or_default(),
        )),
        arch: None,
        scheduler: None,
        params: json!({ "check_functional": a.check_functional }),
        seed: a.seed,
        out: dir.display().to_string(),
        artifacts: out.hashes().clone(),
    };
    out.finish(&manifest).stage("write")?;
    println!("makespan_ns: {:.0}", res.makespan * 1e9);
    if functional == Some(true) {
        println!("functional: PASS");
    }
    Ok(())
}

struct Row {
    ops_level: Option<usize>,
    diversity_level: Option<usize>,
    name: String,
    diversity: f64,
    cmp: Comparison,
}

fn compare_csv(rows: &[Row], baselines: &[Baseline]) -> String {
    let mut s = String::from("name,ops_level,diversity_level,total_ops,diversity,planned_s");
    for b in baselines {
        let n = baseline_name(*b);
        let _ = write!(s, ",{n}_s");
    }
    s.push_str(",planned_ops_per_s");
    for b in baselines {
        let n = baseline_name(*b);
        let _ = write!(s, ",{n}_ops_per_s,gain_over_{n}");
    }
    s.push('\n');
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let c = &r.cmp;
        let _ = write!(
            s,
            "{},{},{},{},{:.4},{:.6e}",
            r.name,
            opt(r.ops_level),
            opt(r.diversity_level),
            c.total_ops,
            r.diversity,
            c.planned
        );
        for b in baselines {
            let _ = write!(s, ",{:.6e}", baseline_time(c, *b));
        }
        let _ = write!(s, ",{:.6e}", c.throughput(c.planned));
        for b in baselines {
            let t = baseline_time(c, *b);
            let _ = write!(s, ",{:.6e},{:.4}", c.throughput(t), t / c.planned);
        }
        s.push('\n');
    }
    s
}

fn baseline_name(b: Baseline) -> &'static str {
    match b {
        Baseline::Charm => "charm",
        Baseline::Rsn => "rsn",
    }
}

fn baseline_time(c: &Comparison, b: Baseline) -> f64 {
    match b {
        Baseline::Charm => c.charm,
        Baseline::Rsn => c.rsn,
    }
}

fn shape_name(s: &TransformerShape) -> String {
    format!(
        "seq{}_h{}_d{}_r{}",
        s.seq_len, s.heads, s.head_dim, s.mlp_ratio
    )
}

fn grid_rows(hw: &HardwareConfig, levels: usize, ga: &GaParams) -> Result<Vec<Row>, Failure> {
    let base = BaselineConfig::for_hw(hw);
    let cells = diverse_grid(levels).stage("grid")?;
    let mut rows = Vec::new();
    for c in cells {
        let dag = c.shape.dag().stage("grid")?;
        let cmp = compare_workload(&dag, hw, &base, ga).stage("compare")?;
        log::info!(
            "cell ({}, {}): gains {:.2} / {:.2}",
            c.ops_level,
            c.diversity_level,
            cmp.gain_over_charm(),
            cmp.gain_over_rsn()
        );
        if !(cmp.planned <= cmp.rsn && cmp.rsn <= cmp.charm) {
            log::warn!(
                "calibration failure: ordering planned >= RSN >= CHARM broken in cell ({}, {})",
                c.ops_level,
                c.diversity_level
            );
        }
        rows.push(Row {
            ops_level: Some(c.ops_level),
            diversity_level: Some(c.diversity_level),
            name: shape_name(&c.shape),
            diversity: c.diversity,
            cmp,
        });
    }
    Ok(rows)
}

pub fn compare(a: &CompareArgs) -> CmdResult {
    let ga = ga_params(&a.ga);
    let (rows, workload_ref, arch_ref) = match &a.workload {
        Some(w) => {
            let l = load(w, a.arch.as_deref())?;
            let base = BaselineConfig::for_hw(&l.hw);
            let cmp = compare_workload(&l.dag, &l.hw, &base, &ga).stage("compare")?;
            let name = w
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let row = Row {
                ops_level: None,
                diversity_level: None,
                name,
                diversity: diversity_profile(&l.dag).diversity,
                cmp,
            };
            (vec![row], l.workload_ref, l.arch_ref)
        }
        None => {
            if a.levels == 0 {
                return Err(flexmm::Error::Validation(
                    "--levels must be positive".into(),
                ))
                .stage("grid");
            }
            let (hw, arch_ref) = load_arch(a.arch.as_deref())?;
            hw.validate().stage("load")?;
            (grid_rows(&hw, a.levels, &ga)?, None, arch_ref)
        }
    };
    let mut out = open(&a.out)?;
    write(
        &mut out,
        "compare.csv",
        compare_csv(&rows, &a.baselines).as_bytes(),
    )?;
    let manifest = RunManifest {
        command: "compare",
        workload: workload_ref,
        arch: arch_ref,
        scheduler: Some("ga".into()),
        params: json!({
            "ga_pop": a.ga.ga_pop,
            "ga_iters": a.ga.ga_iters,
            "levels": a.levels,
            "baselines": a.baselines.iter().map(|b| baseline_name(*b)).collect::<Vec<_>>(),
        }),
        seed: a.ga.seed,
        out: a.out.display().to_string(),
        artifacts: out.hashes().clone(),
    };
    out.finish(&manifest).stage("write")?;
    for r in &rows {
        let gains: Vec<String> = a
            .baselines
            .iter()
            .map(|b| {
                format!(
                    "{} {:.2}x",
                    baseline_name(*b),
                    baseline_time(&r.cmp, *b) / r.cmp.planned
                )
            })
            .collect();
        println!("{}: {}", r.name, gains.join(", "));
    }
    Ok(())
}

pub fn export_lp(a: &ExportLpArgs) -> CmdResult {
    let l = load(&a.workload, a.arch.as_deref())?;
    let table = build_table(&l.dag, &l.hw).stage("explore")?;
    let model = build_milp(&l.dag, &table, &l.hw).stage("formulate")?;
    let mut out = open(&a.out)?;
    write(&mut out, "model.lp", lp_text(&model).as_bytes())?;
    write(&mut out, "table.json", table.to_json().as_bytes())?;
    let manifest = RunManifest {
        command: "export-lp",
        workload: l.workload_ref,
        arch: l.arch_ref,
        scheduler: Some("milp".into()),
        params: json!({}),
        seed: 0,
        out: a.out.display().to_string(),
        artifacts: out.hashes().clone(),
    };
    out.finish(&manifest).stage("write")?;
    println!("lp: {}", a.out.join("model.lp").display());
    Ok(())
}

/// Sequence lengths of the BERT-base encoder sweep.
const BERT_SEQ: [usize; 5] = [32, 64, 128, 256, 512];

pub fn report(a: &ReportArgs) -> CmdResult {
    let (hw, arch_ref) = load_arch(a.arch.as_deref())?;
    hw.validate().stage("load")?;
    let ga = ga_params(&a.ga);
    let budget = Duration::try_from_secs_f64(a.budget_sec)
        .map_err(|_| flexmm::Error::Validation("--budget-sec must be >= 0".into()))
        .stage("load")?;

    let eff = efficiency_sweep(&hw, (2, 8, 8)).stage("efficiency")?;
    let mut eff_csv = String::from("m,k,n,flexible,static\n");
    for p in &eff {
        let _ = writeln!(
            eff_csv,
            "{},{},{},{:.6},{:.6}",
            p.m, p.k, p.n, p.flexible, p.static_kernel
        );
    }

    let all = [Baseline::Charm, Baseline::Rsn];
    let grid = grid_rows(&hw, 3, &ga)?;

    let base = BaselineConfig::for_hw(&hw);
    let mut bert = Vec::new();
    for seq_len in BERT_SEQ {
        let shape = TransformerShape {
            seq_len,
            heads: 12,
            head_dim: 64,
            mlp_ratio: 4.0,
        };
        let dag = shape.dag().stage("bert")?;
        let cmp = compare_workload(&dag, &hw, &base, &ga).stage("bert")?;
        bert.push(Row {
            ops_level: None,
            diversity_level: None,
            name: format!("bert_seq{seq_len}"),
            diversity: diversity_profile(&dag).diversity,
            cmp,
        });
    }

    let runs = solver_study(a.ga.seed, a.instances, (8, 12), (4, 8), 3, &ga, budget)
        .stage("solver-study")?;
    let mut solver_csv = String::from(
        "instance,layers,modes,ga_s,ga_makespan_ns,exact_s,exact_makespan_ns,lower_bound_ns,gap\n",
    );
    let opt_u = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, r) in runs.iter().enumerate() {
        let _ = writeln!(
            solver_csv,
            "{},{},{},{:.6},{},{:.6},{},{},{}",
            i,
            r.layers,
            r.modes,
            r.ga_seconds,
            r.ga_makespan_ns,
            r.exact_seconds,
            opt_u(r.exact_makespan_ns),
            opt_u(r.lower_bound_ns),
            r.gap().map(|g| format!("{g:.6}")).unwrap_or_default()
        );
    }

    let mut out = open(&a.out)?;
    write(&mut out, "efficiency.csv", eff_csv.as_bytes())?;
    write(
        &mut out,
        "throughput_grid.csv",
        compare_csv(&grid, &all).as_bytes(),
    )?;
    write(&mut out, "bert.csv", compare_csv(&bert, &all).as_bytes())?;
    // Wall-clock columns make this file the one artifact that is not byte-reproducible.
    write(&mut out, "solver.csv", solver_csv.as_bytes())?;
    let manifest = RunManifest {
        command: "report",
        workload: None,
        arch: arch_ref,
        scheduler: Some("ga".into()),
        params: json!({
            "ga_pop": a.ga.ga_pop,
            "ga_iters": a.ga.ga_iters,
            "budget_sec": a.budget_sec,
            "instances": a.instances,
        }),
        seed: a.ga.seed,
        out: a.out.display().to_string(),
        artifacts: out.hashes().clone(),
    };
    out.finish(&manifest).stage("write")?;
    println!("report: {}", a.out.display());
    Ok(())
}
