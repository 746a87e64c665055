//! Mixed-integer model of the multi-mode schedule and its LP-file form.
//!
//! Times are integer nanoseconds. Variables: `A_i_m` (layer i on FMU m), `B_i_m` (layer i
//! on CU m), `M_i_k` (layer i in mode k), `O_i_j` (i starts before j ends), `S_i`, `E_i`, `T`.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Problem, Schedule};
use crate::arch::HardwareConfig;
use crate::error::{Error, Result};
use crate::explore::CandidateTable;
use crate::workload::WorkloadDag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Var {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    /// `None` is +infinity.
    pub ub: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn token(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Linear program data: minimize `objective` subject to `constraints` and variable bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LpModel {
    pub vars: Vec<Var>,
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
}

impl LpModel {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Every constraint or bound that `x` violates by more than `tol`.
    pub fn violations(&self, x: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (v, &val) in self.vars.iter().zip(x) {
            if val < v.lb - tol || v.ub.is_some_and(|u| val > u + tol) {
                out.push(format!("bound of {} violated by {val}", v.name));
            }
            if v.kind == VarKind::Binary && (val - val.round()).abs() > tol {
                out.push(format!("{} = {val} is not binary", v.name));
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(i, a)| a * x[i]).sum();
            let ok = match c.sense {
                Sense::Le => lhs <= c.rhs + tol,
                Sense::Ge => lhs >= c.rhs - tol,
                Sense::Eq => (lhs - c.rhs).abs() <= tol,
            };
            if !ok {
                out.push(format!("{}: {lhs} {} {}", c.name, c.sense.token(), c.rhs));
            }
        }
        out
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, a)| a * x[i]).sum()
    }
}

#[derive(Debug, Clone)]
pub struct MilpModel {
    pub problem: Problem,
    pub lp: LpModel,
    /// Big-M, in ns.
    pub phi: u64,
    /// Strictness margin of the overlap indicator, in ns.
    pub eps: u64,
    a: Vec<Vec<usize>>,
    b: Vec<Vec<usize>>,
    m: Vec<Vec<usize>>,
    o: HashMap<(usize, usize), usize>,
    s: Vec<usize>,
    e: Vec<usize>,
    t: usize,
}

struct Builder {
    lp: LpModel,
}

impl Builder {
    fn var(&mut self, name: String, kind: VarKind, ub: Option<f64>) -> usize {
        self.lp.vars.push(Var {
            name,
            kind,
            lb: 0.0,
            ub,
        });
        self.lp.vars.len() - 1
    }

    fn row(&mut self, name: String, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.lp.constraints.push(Constraint {
            name,
            terms,
            sense,
            rhs,
        });
    }
}

pub fn build_milp(
    dag: &WorkloadDag,
    table: &CandidateTable,
    hw: &HardwareConfig,
) -> Result<MilpModel> {
    build_milp_problem(Problem::new(dag, table, hw)?)
}

pub fn build_milp_problem(p: Problem) -> Result<MilpModel> {
    if p.modes.iter().any(|m| m.is_empty()) {
        return Err(Error::Model(
            "every layer needs at least one candidate".into(),
        ));
    }
    let phi = p.big_m();
    // Times are whole nanoseconds, so one time unit realizes the strict inequality.
    let eps = 1u64;
    let mut bd = Builder {
        lp: LpModel::default(),
    };
    let n = p.n;
    let bin = VarKind::Binary;
    let a: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..p.f_max)
                .map(|m| bd.var(format!("A_{i}_{m}"), bin, Some(1.0)))
                .collect()
        })
        .collect();
    let b: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..p.c_max)
                .map(|m| bd.var(format!("B_{i}_{m}"), bin, Some(1.0)))
                .collect()
        })
        .collect();
    let m: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..p.modes[i].len())
                .map(|k| bd.var(format!("M_{i}_{k}"), bin, Some(1.0)))
                .collect()
        })
        .collect();
    let direct = |i: usize, j: usize| p.succs[i].contains(&j) || p.succs[j].contains(&i);
    let mut o = HashMap::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && !direct(i, j) {
                o.insert((i, j), bd.var(format!("O_{i}_{j}"), bin, Some(1.0)));
            }
        }
    }
    let horizon = Some(phi as f64);
    let s: Vec<usize> = (0..n)
        .map(|i| bd.var(format!("S_{i}"), VarKind::Continuous, horizon))
        .collect();
    let e: Vec<usize> = (0..n)
        .map(|i| bd.var(format!("E_{i}"), VarKind::Continuous, horizon))
        .collect();
    let t = bd.var("T".into(), VarKind::Continuous, None);
    bd.lp.objective = vec![(t, 1.0)];

    for i in 0..n {
        bd.row(
            format!("mode_{i}"),
            m[i].iter().map(|&v| (v, 1.0)).collect(),
            Sense::Eq,
            1.0,
        );
        let mut terms = vec![(e[i], 1.0), (s[i], -1.0)];
        terms.extend(
            m[i].iter()
                .zip(&p.modes[i])
                .map(|(&v, c)| (v, -(c.e as f64))),
        );
        bd.row(format!("dur_{i}"), terms, Sense::Eq, 0.0);
        let mut terms: Vec<(usize, f64)> = a[i].iter().map(|&v| (v, 1.0)).collect();
        terms.extend(
            m[i].iter()
                .zip(&p.modes[i])
                .map(|(&v, c)| (v, -(c.f as f64))),
        );
        bd.row(format!("fmus_{i}"), terms, Sense::Eq, 0.0);
        let mut terms: Vec<(usize, f64)> = b[i].iter().map(|&v| (v, 1.0)).collect();
        terms.extend(
            m[i].iter()
                .zip(&p.modes[i])
                .map(|(&v, c)| (v, -(c.c as f64))),
        );
        bd.row(format!("cus_{i}"), terms, Sense::Eq, 0.0);
        bd.row(
            format!("span_{i}"),
            vec![(t, 1.0), (e[i], -1.0)],
            Sense::Ge,
            0.0,
        );
    }
    for i in 0..n {
        for &j in &p.succs[i] {
            bd.row(
                format!("dep_{i}_{j}"),
                vec![(s[j], 1.0), (e[i], -1.0)],
                Sense::Ge,
                0.0,
            );
        }
    }
    let mut pairs: Vec<(usize, usize)> = o.keys().copied().collect();
    pairs.sort_unstable();
    for &(i, j) in &pairs {
        let v = o[&(i, j)];
        let phi_f = phi as f64;
        bd.row(
            format!("ovl_hi_{i}_{j}"),
            vec![(s[i], 1.0), (e[j], -1.0), (v, phi_f)],
            Sense::Le,
            phi_f - eps as f64,
        );
        bd.row(
            format!("ovl_lo_{i}_{j}"),
            vec![(s[i], 1.0), (e[j], -1.0), (v, phi_f)],
            Sense::Ge,
            0.0,
        );
    }
    for &(i, j) in &pairs {
        if i > j {
            continue;
        }
        let (oij, oji) = (o[&(i, j)], o[&(j, i)]);
        for (tag, units) in [("fmu", &a), ("cu", &b)] {
            for u in 0..units[i].len() {
                bd.row(
                    format!("share_{tag}_{i}_{j}_{u}"),
                    vec![
                        (units[i][u], 1.0),
                        (units[j][u], 1.0),
                        (oij, 1.0),
                        (oji, 1.0),
                    ],
                    Sense::Le,
                    3.0,
                );
            }
        }
    }
    Ok(MilpModel {
        problem: p,
        lp: bd.lp,
        phi,
        eps,
        a,
        b,
        m,
        o,
        s,
        e,
        t,
    })
}

impl MilpModel {
    /// Variable assignment realizing `schedule`.
    pub fn assignment(&self, schedule: &Schedule) -> Vec<f64> {
        let mut x = vec![0.0; self.lp.vars.len()];
        for (i, l) in schedule.layers.iter().enumerate() {
            for &u in &l.fmus {
                x[self.a[i][u]] = 1.0;
            }
            for &u in &l.cus {
                x[self.b[i][u]] = 1.0;
            }
            x[self.m[i][l.mode]] = 1.0;
            x[self.s[i]] = l.start_ns as f64;
            x[self.e[i]] = l.end_ns as f64;
        }
        for (&(i, j), &v) in &self.o {
            if schedule.layers[i].start_ns < schedule.layers[j].end_ns {
                x[v] = 1.0;
            }
        }
        x[self.t] = schedule.makespan_ns as f64;
        x
    }

    pub fn makespan_var(&self) -> usize {
        self.t
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

fn write_terms(out: &mut String, lp: &LpModel, terms: &[(usize, f64)]) {
    for (idx, &(v, a)) in terms.iter().enumerate() {
        let sign = if a < 0.0 { "-" } else { "+" };
        if idx > 0 || a < 0.0 {
            let _ = write!(out, " {sign}");
        }
        let mag = a.abs();
        if mag == 1.0 {
            let _ = write!(out, " {}", lp.vars[v].name);
        } else {
            let _ = write!(out, " {} {}", fmt_num(mag), lp.vars[v].name);
        }
    }
}

/// CPLEX LP text of the model.
pub fn export_lp(model: &MilpModel) -> String {
    lp_text(&model.lp)
}

pub fn lp_text(lp: &LpModel) -> String {
    let mut out = String::new();
    out.push_str("\\ multi-mode layer schedule, times in ns\nMinimize\n obj:");
    write_terms(&mut out, lp, &lp.objective);
    out.push_str("\nSubject To\n");
    for c in &lp.constraints {
        let _ = write!(out, " {}:", c.name);
        write_terms(&mut out, lp, &c.terms);
        let _ = writeln!(out, " {} {}", c.sense.token(), fmt_num(c.rhs));
    }
    out.push_str("Bounds\n");
    for v in lp.vars.iter().filter(|v| v.kind == VarKind::Continuous) {
        match v.ub {
            Some(u) => {
                let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lb), v.name, fmt_num(u));
            }
            None => {
                let _ = writeln!(out, " {} >= {}", v.name, fmt_num(v.lb));
            }
        }
    }
    out.push_str("Binaries\n");
    for v in lp.vars.iter().filter(|v| v.kind == VarKind::Binary) {
        let _ = writeln!(out, " {}", v.name);
    }
    out.push_str("End\n");
    out
}

/// Parses the LP subset written by [`export_lp`]. Variables are ordered by first
/// appearance.
pub fn parse_lp(text: &str) -> Result<LpModel> {
    #[derive(PartialEq, Clone, Copy)]
    enum Sec {
        None,
        Obj,
        Rows,
        Bounds,
        Bin,
        End,
    }
    let mut lp = LpModel::default();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut lookup = |lp: &mut LpModel, name: &str| -> usize {
        *index.entry(name.to_string()).or_insert_with(|| {
            lp.vars.push(Var {
                name: name.to_string(),
                kind: VarKind::Continuous,
                lb: 0.0,
                ub: None,
            });
            lp.vars.len() - 1
        })
    };
    // Register declared variables first (binaries, then bounded continuous ones) so the
    // parsed order matches the writer's.
    for want in ["binaries", "bounds"] {
        let mut inside = false;
        for raw in text.lines() {
            let line = raw.trim();
            let lower = line.to_ascii_lowercase();
            if matches!(
                lower.as_str(),
                "minimize" | "subject to" | "bounds" | "binaries" | "end"
            ) {
                inside = lower == want;
                continue;
            }
            if !inside || line.starts_with('\\') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let names: Vec<&str> = match (want, toks.as_slice()) {
                ("binaries", _) => toks.clone(),
                (_, [_, "<=", name, "<=", _]) | (_, [name, ">=", _]) => vec![*name],
                _ => vec![],
            };
            for name in names {
                lookup(&mut lp, name);
            }
        }
    }
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let num = |line: usize, s: &str| {
        s.parse::<f64>()
            .map_err(|_| perr(line, format!("bad number {s:?}")))
    };
    let mut sec = Sec::None;
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('\\') {
            continue;
        }
        match line.to_ascii_lowercase().as_str() {
            "minimize" => {
                sec = Sec::Obj;
                continue;
            }
            "subject to" => {
                sec = Sec::Rows;
                continue;
            }
            "bounds" => {
                sec = Sec::Bounds;
                continue;
            }
            "binaries" => {
                sec = Sec::Bin;
                continue;
            }
            "end" => {
                sec = Sec::End;
                continue;
            }
            _ => {}
        }
        match sec {
            Sec::None | Sec::End => return Err(perr(line_no, format!("unexpected line {line:?}"))),
            Sec::Obj | Sec::Rows => {
                let (name, body) = line
                    .split_once(':')
                    .ok_or_else(|| perr(line_no, "missing row label".into()))?;
                let toks: Vec<&str> = body.split_whitespace().collect();
                let (lin, sense, rhs) =
                    match toks.iter().position(|t| matches!(*t, "<=" | ">=" | "=")) {
                        Some(p) if sec == Sec::Rows => {
                            let sense = match toks[p] {
                                "<=" => Sense::Le,
                                ">=" => Sense::Ge,
                                _ => Sense::Eq,
                            };
                            let rhs = toks
                                .get(p + 1)
                                .ok_or_else(|| perr(line_no, "missing rhs".into()))?;
                            (&toks[..p], Some(sense), num(line_no, rhs)?)
                        }
                        None if sec == Sec::Obj => (&toks[..], None, 0.0),
                        _ => return Err(perr(line_no, "malformed row".into())),
                    };
                let mut terms = Vec::new();
                let mut sign = 1.0;
                let mut coef = None;
                for &t in lin {
                    match t {
                        "+" => sign = 1.0,
                        "-" => sign = -1.0,
                        _ => {
                            if let Ok(v) = t.parse::<f64>() {
                                coef = Some(v);
                            } else {
                                let v = lookup(&mut lp, t);
                                terms.push((v, sign * coef.take().unwrap_or(1.0)));
                                sign = 1.0;
                            }
                        }
                    }
                }
                match sense {
                    None => lp.objective = terms,
                    Some(sense) => lp.constraints.push(Constraint {
                        name: name.trim().to_string(),
                        terms,
                        sense,
                        rhs,
                    }),
                }
            }
            Sec::Bounds => {
                let toks: Vec<&str> = line.split_whitespace().collect();
                match toks[..] {
                    [lo, "<=", name, "<=", hi] => {
                        let v = lookup(&mut lp, name);
                        lp.vars[v].lb = num(line_no, lo)?;
                        lp.vars[v].ub = Some(num(line_no, hi)?);
                    }
                    [name, ">=", lo] => {
                        let v = lookup(&mut lp, name);
                        lp.vars[v].lb = num(line_no, lo)?;
                    }
                    _ => return Err(perr(line_no, format!("unsupported bound {line:?}"))),
                }
            }
            Sec::Bin => {
                for name in line.split_whitespace() {
                    let v = lookup(&mut lp, name);
                    lp.vars[v].kind = VarKind::Binary;
                    lp.vars[v].ub = Some(1.0);
                }
            }
        }
    }
    if sec != Sec::End {
        return Err(perr(text.lines().count(), "missing End".into()));
    }
    Ok(lp)
}
