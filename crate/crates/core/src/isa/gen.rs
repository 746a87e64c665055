//! DDR layout planning and instruction generation from a schedule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ComputeParams, Instruction, LayerDispatch, Op, Program, Range2, UnitKind, UnitRef};
use crate::arch::{HardwareConfig, ATOM};
use crate::error::{Error, Result};
use crate::explore::CandidateTable;
use crate::perfmodel::plan::{block_starts, split};
use crate::perfmodel::KernelKind;
use crate::scheduler::Schedule;
use crate::workload::{DType, WorkloadDag};

const ALIGN: u64 = 64;

/// A row-major matrix in DDR. `valid_rows x valid_cols` is the part holding real data;
/// it equals the full extent unless the matrix was padded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub addr: u32,
    pub rows: usize,
    pub cols: usize,
    pub dtype: DType,
    pub valid_rows: usize,
    pub valid_cols: usize,
}

impl Region {
    pub fn bytes(&self) -> usize {
        self.rows * self.cols * self.dtype.bytes()
    }

    pub fn end(&self) -> u64 {
        self.addr as u64 + self.bytes() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRegions {
    pub lhs: usize,
    pub rhs: usize,
    pub out: usize,
}

/// Placement of every operand and result matrix; serialized as the DDR image sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct MemoryLayout {
    pub regions: Vec<Region>,
    pub layers: Vec<LayerRegions>,
    pub total_bytes: usize,
}

impl MemoryLayout {
    /// Region containing byte address `addr`.
    pub fn region_at(&self, addr: u32) -> Option<&Region> {
        self.regions
            .iter()
            .find(|r| r.addr <= addr && (addr as u64) < r.end())
    }

    /// Regions no layer writes: the ones a DDR image must provide.
    pub fn inputs(&self) -> Vec<usize> {
        (0..self.regions.len())
            .filter(|&r| self.layers.iter().all(|l| l.out != r))
            .collect()
    }

    pub fn push(&mut self, name: String, rows: usize, cols: usize, dtype: DType) -> Result<usize> {
        let addr = (self.total_bytes as u64).div_ceil(ALIGN) * ALIGN;
        let r = Region {
            name,
            addr: u32::try_from(addr)
                .map_err(|_| Error::Generation("DDR image exceeds 32-bit addresses".into()))?,
            rows,
            cols,
            dtype,
            valid_rows: rows,
            valid_cols: cols,
        };
        if r.end() > u32::MAX as u64 {
            return Err(Error::Generation(
                "DDR image exceeds 32-bit addresses".into(),
            ));
        }
        self.total_bytes = r.end() as usize;
        self.regions.push(r);
        Ok(self.regions.len() - 1)
    }
}

/// Lays out every layer's operands and result. A layer whose LHS has the shape and type of a
/// predecessor's result reads that result in place.
pub fn plan_layout(dag: &WorkloadDag) -> Result<MemoryLayout> {
    let preds = dag.predecessors();
    let mut lay = MemoryLayout::default();
    let mut slots: Vec<Option<LayerRegions>> = vec![None; dag.len()];
    for j in dag.topological_order() {
        let l = &dag.layers[j];
        let alias = preds[j].iter().copied().find(|&i| {
            let p = &dag.layers[i];
            (p.m, p.n) == (l.m, l.k) && p.dtype.output() == l.dtype
        });
        let lhs = match alias {
            Some(i) => slots[i].expect("predecessor placed first").out,
            None => lay.push(format!("L{j}.lhs"), l.m, l.k, l.dtype)?,
        };
        let rhs = lay.push(format!("L{j}.rhs"), l.k, l.n, l.dtype)?;
        let out = lay.push(format!("L{j}.out"), l.m, l.n, l.dtype.output())?;
        slots[j] = Some(LayerRegions { lhs, rhs, out });
    }
    lay.layers = slots
        .into_iter()
        .map(|s| s.expect("every layer placed"))
        .collect();
    Ok(lay)
}

fn fmu(op: Op, half: usize, src_cu: usize, des_cu: usize, range: Range2) -> Instruction {
    let (ping_op, pong_op) = if half == 0 {
        (op, Op::Idle)
    } else {
        (Op::Idle, op)
    };
    Instruction::Fmu {
        is_last: false,
        ping_op,
        pong_op,
        src_cu: src_cu as u32,
        des_cu: des_cu as u32,
        count: range.elems() as u32,
        range,
    }
}

fn cu(op: Op, half: usize, src_fmu: usize, des_fmu: usize, count: u32) -> Instruction {
    let (ping_op, pong_op) = if half == 0 {
        (op, Op::Idle)
    } else {
        (Op::Idle, op)
    };
    Instruction::Cu {
        is_last: false,
        ping_op,
        pong_op,
        src_fmu: src_fmu as u32,
        des_fmu: des_fmu as u32,
        count,
    }
}

fn overlap(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    let lo = a.0.max(b.0);
    let hi = (a.0 + a.1).min(b.0 + b.1);
    (lo < hi).then(|| (lo, hi - lo))
}

/// Emits the instruction streams for one schedule; DDR placement follows [`plan_layout`].
pub fn generate_program(
    schedule: &Schedule,
    dag: &WorkloadDag,
    table: &CandidateTable,
    hw: &HardwareConfig,
) -> Result<Program> {
    let layout = plan_layout(dag)?;
    if schedule.layers.len() != dag.len() {
        return Err(Error::Generation(format!(
            "schedule has {} layers, workload {}",
            schedule.layers.len(),
            dag.len()
        )));
    }
    let preds = dag.predecessors();
    let mut order: Vec<usize> = (0..dag.len()).collect();
    order.sort_by_key(|&i| (schedule.layers[i].start_ns, i));

    let mut prog = Program::default();
    for &i in &order {
        let sl = &schedule.layers[i];
        let layer = &dag.layers[i];
        let mode = table
            .layers
            .get(i)
            .and_then(|c| c.get(sl.mode))
            .ok_or_else(|| Error::Generation(format!("layer {i} uses unknown mode {}", sl.mode)))?;
        let spec = mode.spec;
        if sl.fmus.len() != spec.fmus() || sl.cus.len() != spec.cus {
            return Err(Error::Generation(format!(
                "layer {i} holds {} FMUs / {} CUs, mode needs {} / {}",
                sl.fmus.len(),
                sl.cus.len(),
                spec.fmus(),
                spec.cus
            )));
        }
        if let Some(&u) = sl.fmus.iter().find(|&&u| u >= hw.n_fmu) {
            return Err(Error::Generation(format!(
                "layer {i} uses FMU {u}, platform has {}",
                hw.n_fmu
            )));
        }
        if let Some(&u) = sl.cus.iter().find(|&&u| u >= hw.n_cu) {
            return Err(Error::Generation(format!(
                "layer {i} uses CU {u}, platform has {}",
                hw.n_cu
            )));
        }
        for (name, d) in [("m", layer.m), ("k", layer.k), ("n", layer.n)] {
            if d > u16::MAX as usize {
                return Err(Error::Generation(format!(
                    "layer {i}: {name} = {d} exceeds 16-bit dimension fields"
                )));
            }
        }
        for v in spec.views() {
            if v.0 * v.1 > hw.fmu_capacity_elems {
                return Err(Error::Generation(format!(
                    "layer {i}: view {v:?} exceeds FMU capacity"
                )));
            }
        }
        let compute = ComputeParams {
            tile: spec.tile,
            dtype: layer.dtype,
            static_kernel: spec.kernel == KernelKind::Static,
        }
        .pack()?;
        let regions = layout.layers[i];
        let (lhs_addr, rhs_addr, out_addr) = (
            layout.regions[regions.lhs].addr,
            layout.regions[regions.rhs].addr,
            layout.regions[regions.out].addr,
        );
        let (l, r) = (spec.roles.lhs, spec.roles.rhs);
        let lhs_fmus = &sl.fmus[..l];
        let rhs_fmus = &sl.fmus[l..l + r];
        let out_fmus = &sl.fmus[l + r..];

        let mut chunks: BTreeMap<UnitRef, Vec<Instruction>> = BTreeMap::new();
        let mut push = |kind: UnitKind, idx: usize, ins: Instruction| {
            chunks.entry(UnitRef::new(kind, idx)).or_default().push(ins);
        };
        let (mut t, mut b) = (0usize, 0usize);
        for (m0, sm) in block_starts(layer.m, spec.block.m) {
            let lhs_chunks = split(sm, l, 1);
            let cu_chunks = split(sm, spec.cus, ATOM.0);
            let out_chunks = split(sm, spec.roles.out, 1);
            for (n0, sn) in block_starts(layer.n, spec.block.n) {
                for (k0, sk) in block_starts(layer.k, spec.block.k) {
                    let h = t % 2;
                    let rhs_chunks = split(sk, r, 1);
                    for (&(s, len), &f) in lhs_chunks.iter().zip(lhs_fmus) {
                        push(
                            UnitKind::Loader,
                            f,
                            Instruction::IomLoad {
                                is_last: false,
                                ddr_addr: lhs_addr,
                                des_fmu: f as u32,
                                m: layer.m as u32,
                                n: layer.k as u32,
                                range: Range2::block(m0 + s, k0, len, sk),
                            },
                        );
                        push(
                            UnitKind::Fmu,
                            f,
                            fmu(Op::LoadLhs, h, 0, 0, Range2::block(0, 0, len, sk)),
                        );
                    }
                    for (&(s, len), &f) in rhs_chunks.iter().zip(rhs_fmus) {
                        push(
                            UnitKind::Loader,
                            f,
                            Instruction::IomLoad {
                                is_last: false,
                                ddr_addr: rhs_addr,
                                des_fmu: f as u32,
                                m: layer.k as u32,
                                n: layer.n as u32,
                                range: Range2::block(k0 + s, n0, len, sn),
                            },
                        );
                        push(
                            UnitKind::Fmu,
                            f,
                            fmu(Op::LoadRhs, h, 0, 0, Range2::block(0, 0, len, sn)),
                        );
                    }
                    for (&cc, &c) in cu_chunks.iter().zip(&sl.cus) {
                        for (&lc, &f) in lhs_chunks.iter().zip(lhs_fmus) {
                            if let Some((s, len)) = overlap(cc, lc) {
                                let range = Range2::block(s - lc.0, 0, len, sk);
                                push(UnitKind::Fmu, f, fmu(Op::Send, h, 0, c, range));
                                push(
                                    UnitKind::Cu,
                                    c,
                                    cu(Op::LoadLhs, h, f, 0, range.elems() as u32),
                                );
                            }
                        }
                        for (&(_, len), &f) in rhs_chunks.iter().zip(rhs_fmus) {
                            let range = Range2::block(0, 0, len, sn);
                            push(UnitKind::Fmu, f, fmu(Op::Send, h, 0, c, range));
                            push(
                                UnitKind::Cu,
                                c,
                                cu(Op::LoadRhs, h, f, 0, range.elems() as u32),
                            );
                        }
                        push(UnitKind::Cu, c, cu(Op::Compute, h, 0, 0, compute));
                        for (&oc, &f) in out_chunks.iter().zip(out_fmus) {
                            if let Some((s, len)) = overlap(cc, oc) {
                                let range = Range2::block(s - oc.0, 0, len, sn);
                                push(UnitKind::Cu, c, cu(Op::Send, h, 0, f, range.elems() as u32));
                                push(UnitKind::Fmu, f, fmu(Op::Recv, b % 2, c, 0, range));
                            }
                        }
                    }
                    t += 1;
                }
                for (&(s, len), &f) in out_chunks.iter().zip(out_fmus) {
                    push(
                        UnitKind::Fmu,
                        f,
                        fmu(Op::StoreOut, b % 2, 0, 0, Range2::block(0, 0, len, sn)),
                    );
                    push(
                        UnitKind::Storer,
                        f,
                        Instruction::IomStore {
                            is_last: false,
                            ddr_addr: out_addr,
                            src_fmu: f as u32,
                            m: layer.m as u32,
                            n: layer.n as u32,
                            range: Range2::block(m0 + s, n0, len, sn),
                        },
                    );
                }
                b += 1;
            }
        }
        let headers = chunks.len();
        for (unit, instrs) in chunks {
            let words: usize = instrs.iter().map(|x| x.word_len()).sum();
            prog.headers.push(Instruction::Header {
                is_last: false,
                des_unit: unit,
                valid_length: words as u32,
            });
            prog.streams.entry(unit).or_default().extend(instrs);
        }
        prog.control.push(LayerDispatch {
            layer: i,
            headers,
            preds: preds[i].clone(),
        });
    }
    for s in prog.streams.values_mut() {
        if let Some(last) = s.last_mut() {
            last.set_last(true);
        }
    }
    if let Some(h) = prog.headers.last_mut() {
        h.set_last(true);
    }
    prog.check()?;
    Ok(prog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{LayerNode, WorkloadDag};

    #[test]
    fn result_feeds_matching_successor_in_place() {
        let dag = WorkloadDag::new(
            vec![
                LayerNode::new(0, 16, 32, 24),
                LayerNode::new(1, 16, 24, 8),
                LayerNode::new(2, 16, 32, 8),
            ],
            vec![(0, 1), (0, 2)],
        )
        .unwrap();
        let lay = plan_layout(&dag).unwrap();
        assert_eq!(lay.layers[1].lhs, lay.layers[0].out);
        assert_ne!(lay.layers[2].lhs, lay.layers[0].out);
        assert!(lay
            .regions
            .iter()
            .all(|r| (r.addr as u64).is_multiple_of(ALIGN)));
        assert_eq!(lay.inputs().len(), 5);
    }
}
