//! Event-driven execution of a program, one timed event per transfer or CU phase.
//!
//! FMU instructions post their op to the queue of the buffer half they name. Ops on a half
//! run in order; a run of consecutive SENDs (or RECVs) is active together. IOM channels and
//! CUs are the timed actors: a transfer starts when the matching FMU op reaches the head of
//! its half, a CU phase starts when every FMU it reads from and writes to has the matching
//! op active. Stream traffic is folded into the CU phase time.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use super::ddr::{add, mac, DdrImage, Matrix};
use super::{SimOptions, SimResult, TraceEvent};
use crate::arch::HardwareConfig;
use crate::error::{Error, Result};
use crate::isa::{ComputeParams, Instruction, Op, Program, Range2, UnitKind, UnitRef};
use crate::perfmodel::{cu_phase, transfer_time, Block, KernelKind, ModeSpec, RoleSplit};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    LoadDone { fmu: usize, op: usize },
    StoreDone { fmu: usize, op: usize },
    CuDone { cu: usize },
}

#[derive(Debug)]
struct FmuOp {
    op: Op,
    half: usize,
    range: Range2,
    layer: usize,
    seq: usize,
}

#[derive(Debug, Default)]
struct Half {
    data: Vec<u32>,
    rows: usize,
    cols: usize,
    /// Holds a partially accumulated output block rather than a loaded operand.
    acc: bool,
    queue: VecDeque<usize>,
}

#[derive(Debug, Default)]
struct FmuState {
    halves: [Half; 2],
    loads: VecDeque<usize>,
    stores: VecDeque<usize>,
    sends: HashMap<usize, VecDeque<usize>>,
    recvs: HashMap<usize, VecDeque<usize>>,
    posted: usize,
    busy: Vec<(f64, f64)>,
}

#[derive(Debug, Default)]
struct IomState {
    queue: VecDeque<(Instruction, usize)>,
    busy: bool,
    done: usize,
    intervals: Vec<(f64, f64)>,
}

#[derive(Debug)]
struct CuJob {
    len: usize,
    layer: usize,
    /// `(fmu, op)` of the SENDs feeding this phase.
    reads: Vec<(usize, usize)>,
    /// `(fmu, op, rows of the result starting at row0, row0)`.
    writes: Vec<(usize, usize, usize, usize)>,
    result: Vec<u32>,
    cols: usize,
    integer: bool,
    start: f64,
}

#[derive(Debug, Default)]
struct CuState {
    queue: VecDeque<(Instruction, usize)>,
    job: Option<CuJob>,
    done: usize,
    intervals: Vec<(f64, f64)>,
}

struct Engine<'a> {
    hw: &'a HardwareConfig,
    prog: &'a Program,
    opts: SimOptions,
    ddr: DdrImage,
    now: f64,
    seq: usize,
    heap: BinaryHeap<std::cmp::Reverse<(Time, usize)>>,
    events: Vec<Ev>,
    ops: Vec<FmuOp>,
    fmus: Vec<FmuState>,
    loaders: Vec<IomState>,
    storers: Vec<IomState>,
    cus: Vec<CuState>,
    words: BTreeMap<UnitRef, (Vec<u32>, usize)>,
    next_ctrl: usize,
    next_header: usize,
    outstanding: HashMap<usize, usize>,
    done_at: HashMap<usize, f64>,
    dispatched_at: HashMap<usize, f64>,
    trace: Vec<TraceEvent>,
    executed_macs: u64,
    loaded_elems: u64,
    stored_elems: u64,
}

fn fault(msg: impl Into<String>) -> Error {
    Error::Fault(msg.into())
}

impl<'a> Engine<'a> {
    fn new(
        prog: &'a Program,
        hw: &'a HardwareConfig,
        ddr: DdrImage,
        opts: SimOptions,
    ) -> Result<Self> {
        let mut words = BTreeMap::new();
        for (u, s) in &prog.streams {
            words.insert(*u, (crate::isa::encode_stream(s)?, 0));
        }
        Ok(Self {
            hw,
            prog,
            opts,
            ddr,
            now: 0.0,
            seq: 0,
            heap: BinaryHeap::new(),
            events: Vec::new(),
            ops: Vec::new(),
            fmus: (0..hw.n_fmu).map(|_| FmuState::default()).collect(),
            loaders: (0..hw.n_fmu).map(|_| IomState::default()).collect(),
            storers: (0..hw.n_fmu).map(|_| IomState::default()).collect(),
            cus: (0..hw.n_cu).map(|_| CuState::default()).collect(),
            words,
            next_ctrl: 0,
            next_header: 0,
            outstanding: HashMap::new(),
            done_at: HashMap::new(),
            dispatched_at: HashMap::new(),
            trace: Vec::new(),
            executed_macs: 0,
            loaded_elems: 0,
            stored_elems: 0,
        })
    }

    fn log(&mut self, unit: String, event: &'static str, detail: impl FnOnce() -> String) {
        if self.opts.trace {
            self.trace.push(TraceEvent {
                time: self.now,
                unit,
                event,
                detail: detail(),
            });
        }
    }

    fn schedule(&mut self, at: f64, ev: Ev) {
        self.events.push(ev);
        self.heap
            .push(std::cmp::Reverse((Time(at), self.events.len() - 1)));
    }

    fn retire(&mut self, layer: usize, n: usize) {
        let left = self.outstanding.get_mut(&layer).expect("dispatched layer");
        *left -= n;
        if *left == 0 {
            self.done_at.insert(layer, self.now);
            let now = self.now;
            self.log("gen".into(), "layer_done", || {
                format!("L{layer} at {now:.9}")
            });
        }
    }

    /// Dispatches every control entry whose predecessors have completed, in order.
    fn dispatch(&mut self) -> Result<bool> {
        let mut progressed = false;
        while let Some(entry) = self.prog.control.get(self.next_ctrl) {
            if !entry.preds.iter().all(|p| self.done_at.contains_key(p)) {
                break;
            }
            let layer = entry.layer;
            if self.outstanding.contains_key(&layer) {
                return Err(fault(format!("layer {layer} dispatched twice")));
            }
            self.outstanding.insert(layer, 0);
            self.dispatched_at.insert(layer, self.now);
            self.log("gen".into(), "dispatch", || format!("L{layer}"));
            let headers = self
                .prog
                .headers
                .get(self.next_header..self.next_header + entry.headers)
                .ok_or_else(|| fault("control table references missing headers"))?;
            self.next_header += entry.headers;
            for h in headers {
                let Instruction::Header {
                    des_unit,
                    valid_length,
                    ..
                } = *h
                else {
                    return Err(fault("non-header instruction in header stream"));
                };
                let (words, pos) = self
                    .words
                    .get_mut(&des_unit)
                    .ok_or_else(|| fault(format!("header targets {des_unit} with no stream")))?;
                let end = *pos + valid_length as usize;
                let chunk = words
                    .get(*pos..end)
                    .ok_or_else(|| fault(format!("header overruns stream of {des_unit}")))?;
                let instrs = crate::isa::decode_stream(chunk)?;
                *pos = end;
                for ins in instrs {
                    self.post(des_unit, ins, layer)?;
                }
            }
            self.next_ctrl += 1;
            progressed = true;
            if self.outstanding[&layer] == 0 {
                self.retire(layer, 0);
            }
        }
        Ok(progressed)
    }

    fn post(&mut self, unit: UnitRef, ins: Instruction, layer: usize) -> Result<()> {
        let idx = unit.index as usize;
        let bad_unit = || fault(format!("{unit} does not exist on this platform"));
        match unit.kind {
            UnitKind::Loader | UnitKind::Storer => {
                let ok = matches!(
                    (unit.kind, &ins),
                    (UnitKind::Loader, Instruction::IomLoad { .. })
                        | (UnitKind::Storer, Instruction::IomStore { .. })
                );
                if !ok {
                    return Err(fault(format!("{unit} received {ins:?}")));
                }
                let q = match unit.kind {
                    UnitKind::Loader => self.loaders.get_mut(idx),
                    _ => self.storers.get_mut(idx),
                }
                .ok_or_else(bad_unit)?;
                q.queue.push_back((ins, layer));
            }
            UnitKind::Cu => {
                if !matches!(ins, Instruction::Cu { .. }) {
                    return Err(fault(format!("{unit} received {ins:?}")));
                }
                self.cus
                    .get_mut(idx)
                    .ok_or_else(bad_unit)?
                    .queue
                    .push_back((ins, layer));
            }
            UnitKind::Fmu => {
                let Instruction::Fmu {
                    src_cu,
                    des_cu,
                    count,
                    range,
                    ..
                } = ins
                else {
                    return Err(fault(format!("{unit} received {ins:?}")));
                };
                let f = self.fmus.get_mut(idx).ok_or_else(bad_unit)?;
                let Some((op, half)) = ins.active_op() else {
                    return Ok(());
                };
                if count as usize != range.elems() {
                    return Err(fault(format!(
                        "{unit} instruction {}: count {count} != range size",
                        f.posted
                    )));
                }
                let id = self.ops.len();
                match op {
                    Op::LoadLhs | Op::LoadRhs => f.loads.push_back(id),
                    Op::StoreOut => f.stores.push_back(id),
                    Op::Send => f.sends.entry(des_cu as usize).or_default().push_back(id),
                    Op::Recv => f.recvs.entry(src_cu as usize).or_default().push_back(id),
                    _ => {
                        return Err(fault(format!(
                            "{unit} instruction {}: {} is not an FMU op",
                            f.posted,
                            op.name()
                        )))
                    }
                }
                f.halves[half].queue.push_back(id);
                self.ops.push(FmuOp {
                    op,
                    half,
                    range,
                    layer,
                    seq: f.posted,
                });
                f.posted += 1;
            }
        }
        *self.outstanding.get_mut(&layer).expect("dispatched") += 1;
        Ok(())
    }

    /// Whether op `id` of `fmu` may run now.
    fn active(&self, fmu: usize, id: usize) -> bool {
        let q = &self.fmus[fmu].halves[self.ops[id].half].queue;
        let Some(&head) = q.front() else { return false };
        if head == id {
            return true;
        }
        let kind = self.ops[head].op;
        if !matches!(kind, Op::Send | Op::Recv) {
            return false;
        }
        q.iter()
            .take_while(|&&o| self.ops[o].op == kind)
            .any(|&o| o == id)
    }

    fn finish_op(&mut self, fmu: usize, id: usize) {
        let q = &mut self.fmus[fmu].halves[self.ops[id].half].queue;
        let pos = q.iter().position(|&o| o == id).expect("op queued");
        q.remove(pos);
        self.retire(self.ops[id].layer, 1);
    }

    fn try_loader(&mut self, m: usize) -> Result<bool> {
        let st = &self.loaders[m];
        if st.busy {
            return Ok(false);
        }
        let Some(&(ins, layer)) = st.queue.front() else {
            return Ok(false);
        };
        let Instruction::IomLoad {
            ddr_addr,
            des_fmu,
            m: rows_total,
            n,
            range,
            ..
        } = ins
        else {
            unreachable!()
        };
        if des_fmu as usize != m {
            return Err(fault(format!(
                "loader{m} instruction {} targets fmu{des_fmu}",
                st.done
            )));
        }
        let Some(&op) = self.fmus[m].loads.front() else {
            return Ok(false);
        };
        if !self.active(m, op) {
            return Ok(false);
        }
        let reg = self
            .ddr
            .layout
            .region_at(ddr_addr)
            .filter(|r| r.addr == ddr_addr)
            .ok_or_else(|| fault(format!("loader{m}: no matrix at {ddr_addr:#x}")))?;
        if (reg.rows, reg.cols) != (rows_total as usize, n as usize) {
            return Err(fault(format!(
                "loader{m}: {}x{n} does not match {}",
                rows_total, reg.name
            )));
        }
        if range.elems() != self.ops[op].range.elems() {
            return Err(fault(format!(
                "fmu{m} instruction {}: expects {} elements, IOM packet carries {}",
                self.ops[op].seq,
                self.ops[op].range.elems(),
                range.elems()
            )));
        }
        let dt = transfer_time(
            range.rows(),
            range.cols(),
            n as usize,
            reg.dtype.bytes(),
            self.hw,
        );
        self.loaders[m].busy = true;
        let (now, end) = (self.now, self.now + dt);
        self.loaders[m].intervals.push((now, end));
        self.fmus[m].busy.push((now, end));
        self.log(format!("loader{m}"), "load_start", || {
            format!(
                "L{layer} rows={}..{} cols={}..{}",
                range.start_row, range.end_row, range.start_col, range.end_col
            )
        });
        self.schedule(end, Ev::LoadDone { fmu: m, op });
        Ok(true)
    }

    fn load_done(&mut self, m: usize, op: usize) -> Result<()> {
        let (ins, layer) = self.loaders[m].queue.pop_front().expect("active load");
        let Instruction::IomLoad {
            ddr_addr, n, range, ..
        } = ins
        else {
            unreachable!()
        };
        let dst = self.ops[op].range;
        let (vr, vc) = (dst.end_row as usize + 1, dst.end_col as usize + 1);
        if vr * vc > self.hw.fmu_capacity_elems {
            return Err(fault(format!(
                "fmu{m} instruction {}: view {vr}x{vc} exceeds buffer",
                self.ops[op].seq
            )));
        }
        if dst.rows() != range.rows() || dst.cols() != range.cols() {
            return Err(fault(format!(
                "fmu{m} instruction {}: load shape mismatch",
                self.ops[op].seq
            )));
        }
        self.loaded_elems += range.elems() as u64;
        if self.opts.functional {
            let reg = self
                .ddr
                .layout
                .region_at(ddr_addr)
                .expect("checked at start")
                .clone();
            let h = &mut self.fmus[m].halves[self.ops[op].half];
            h.rows = vr;
            h.cols = vc;
            h.acc = false;
            h.data.clear();
            h.data.resize(vr * vc, 0);
            for r in 0..range.rows() {
                for c in 0..range.cols() {
                    let src =
                        (range.start_row as usize + r) * n as usize + range.start_col as usize + c;
                    h.data[(dst.start_row as usize + r) * vc + dst.start_col as usize + c] =
                        self.ddr.read_elem(&reg, src);
                }
            }
        } else {
            let h = &mut self.fmus[m].halves[self.ops[op].half];
            h.rows = vr;
            h.cols = vc;
            h.acc = false;
        }
        self.log(format!("loader{m}"), "load_done", || format!("L{layer}"));
        self.loaders[m].busy = false;
        self.loaders[m].done += 1;
        self.fmus[m].loads.pop_front();
        self.finish_op(m, op);
        self.retire(layer, 1);
        Ok(())
    }

    fn try_storer(&mut self, m: usize) -> Result<bool> {
        let st = &self.storers[m];
        if st.busy {
            return Ok(false);
        }
        let Some(&(ins, layer)) = st.queue.front() else {
            return Ok(false);
        };
        let Instruction::IomStore {
            ddr_addr,
            src_fmu,
            m: rows_total,
            n,
            range,
            ..
        } = ins
        else {
            unreachable!()
        };
        if src_fmu as usize != m {
            return Err(fault(format!(
                "storer{m} instruction {} reads fmu{src_fmu}",
                st.done
            )));
        }
        let Some(&op) = self.fmus[m].stores.front() else {
            return Ok(false);
        };
        if !self.active(m, op) {
            return Ok(false);
        }
        let reg = self
            .ddr
            .layout
            .region_at(ddr_addr)
            .filter(|r| r.addr == ddr_addr)
            .ok_or_else(|| fault(format!("storer{m}: no matrix at {ddr_addr:#x}")))?;
        if (reg.rows, reg.cols) != (rows_total as usize, n as usize) {
            return Err(fault(format!(
                "storer{m}: {}x{n} does not match {}",
                rows_total, reg.name
            )));
        }
        let src = self.ops[op].range;
        if src.rows() != range.rows() || src.cols() != range.cols() {
            return Err(fault(format!(
                "fmu{m} instruction {}: store shape mismatch",
                self.ops[op].seq
            )));
        }
        let dt = transfer_time(
            range.rows(),
            range.cols(),
            n as usize,
            reg.dtype.bytes(),
            self.hw,
        );
        self.storers[m].busy = true;
        let (now, end) = (self.now, self.now + dt);
        self.storers[m].intervals.push((now, end));
        self.fmus[m].busy.push((now, end));
        self.log(format!("storer{m}"), "store_start", || {
            format!(
                "L{layer} rows={}..{} cols={}..{}",
                range.start_row, range.end_row, range.start_col, range.end_col
            )
        });
        self.schedule(end, Ev::StoreDone { fmu: m, op });
        Ok(true)
    }

    fn store_done(&mut self, m: usize, op: usize) -> Result<()> {
        let (ins, layer) = self.storers[m].queue.pop_front().expect("active store");
        let Instruction::IomStore {
            ddr_addr, n, range, ..
        } = ins
        else {
            unreachable!()
        };
        let src = self.ops[op].range;
        let half = self.ops[op].half;
        self.stored_elems += range.elems() as u64;
        if self.opts.functional {
            let reg = self
                .ddr
                .layout
                .region_at(ddr_addr)
                .expect("checked at start")
                .clone();
            let h = &self.fmus[m].halves[half];
            if src.end_row as usize >= h.rows || src.end_col as usize >= h.cols {
                return Err(fault(format!(
                    "fmu{m} instruction {}: store range outside {}x{} view",
                    self.ops[op].seq, h.rows, h.cols
                )));
            }
            let vc = h.cols;
            let vals: Vec<(usize, u32)> = (0..range.rows())
                .flat_map(|r| (0..range.cols()).map(move |c| (r, c)))
                .map(|(r, c)| {
                    let v = h.data[(src.start_row as usize + r) * vc + src.start_col as usize + c];
                    (
                        (range.start_row as usize + r) * n as usize + range.start_col as usize + c,
                        v,
                    )
                })
                .collect();
            for (i, v) in vals {
                self.ddr.write_elem(&reg, i, v);
            }
        }
        let h = &mut self.fmus[m].halves[half];
        h.data.iter_mut().for_each(|x| *x = 0);
        h.rows = 0;
        h.cols = 0;
        h.acc = false;
        self.log(format!("storer{m}"), "store_done", || format!("L{layer}"));
        self.storers[m].busy = false;
        self.storers[m].done += 1;
        self.fmus[m].stores.pop_front();
        self.finish_op(m, op);
        self.retire(layer, 1);
        Ok(())
    }

    /// Reads `range` out of the view of the half holding op `id`.
    fn read_piece(&self, fmu: usize, id: usize) -> Result<Matrix> {
        let o = &self.ops[id];
        let h = &self.fmus[fmu].halves[o.half];
        let r = o.range;
        if r.end_row as usize >= h.rows || r.end_col as usize >= h.cols {
            return Err(fault(format!(
                "fmu{fmu} instruction {}: send range rows {}..={} cols {}..={} outside {}x{} view",
                o.seq, r.start_row, r.end_row, r.start_col, r.end_col, h.rows, h.cols
            )));
        }
        let mut m = Matrix::zeros(r.rows(), r.cols(), Default::default());
        if self.opts.functional {
            for i in 0..r.rows() {
                let base = (r.start_row as usize + i) * h.cols + r.start_col as usize;
                m.data[i * r.cols()..(i + 1) * r.cols()]
                    .copy_from_slice(&h.data[base..base + r.cols()]);
            }
        }
        Ok(m)
    }

    fn try_cu(&mut self, c: usize) -> Result<bool> {
        let st = &self.cus[c];
        if st.job.is_some() || st.queue.is_empty() {
            return Ok(false);
        }
        let q = &st.queue;
        let layer = q[0].1;
        let op_of = |i: &Instruction| i.active_op().map(|o| o.0).unwrap_or(Op::Idle);
        let mut i = 0;
        while i < q.len() && matches!(op_of(&q[i].0), Op::LoadLhs | Op::LoadRhs) {
            i += 1;
        }
        if i == q.len() {
            return Ok(false);
        }
        if op_of(&q[i].0) != Op::Compute {
            return Err(fault(format!(
                "cu{c} instruction {}: expected COMPUTE, found {}",
                st.done + i,
                op_of(&q[i].0).name()
            )));
        }
        let compute_at = i;
        i += 1;
        while i < q.len() && op_of(&q[i].0) == Op::Send {
            i += 1;
        }
        let len = i;
        let group: Vec<Instruction> = q.iter().take(len).map(|x| x.0).collect();

        let mut reads = Vec::new();
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        for (j, ins) in group[..compute_at].iter().enumerate() {
            let Instruction::Cu { src_fmu, count, .. } = *ins else {
                unreachable!()
            };
            let f = src_fmu as usize;
            let Some(&id) = self
                .fmus
                .get(f)
                .ok_or_else(|| fault(format!("cu{c}: fmu{f} does not exist")))?
                .sends
                .get(&c)
                .and_then(|v| v.front())
            else {
                return Ok(false);
            };
            if !self.active(f, id) {
                return Ok(false);
            }
            if self.ops[id].range.elems() != count as usize {
                return Err(fault(format!(
                    "cu{c} instruction {}: expects {count} elements, fmu{f} sends {}",
                    st.done + j,
                    self.ops[id].range.elems()
                )));
            }
            reads.push((f, id));
            if op_of(ins) == Op::LoadLhs {
                lhs.push((f, id));
            } else {
                rhs.push((f, id));
            }
        }
        let mut writes = Vec::new();
        for (j, ins) in group[compute_at + 1..].iter().enumerate() {
            let Instruction::Cu { des_fmu, count, .. } = *ins else {
                unreachable!()
            };
            let f = des_fmu as usize;
            let Some(&id) = self
                .fmus
                .get(f)
                .ok_or_else(|| fault(format!("cu{c}: fmu{f} does not exist")))?
                .recvs
                .get(&c)
                .and_then(|v| v.front())
            else {
                return Ok(false);
            };
            if !self.active(f, id) {
                return Ok(false);
            }
            if self.ops[id].range.elems() != count as usize {
                return Err(fault(format!(
                    "cu{c} instruction {}: sends {count} elements, fmu{f} receives {}",
                    st.done + compute_at + 1 + j,
                    self.ops[id].range.elems()
                )));
            }
            writes.push((f, id));
        }
        if lhs.is_empty() || rhs.is_empty() {
            return Err(fault(format!(
                "cu{c} instruction {}: COMPUTE without both operands",
                st.done + compute_at
            )));
        }
        let Instruction::Cu { count, .. } = group[compute_at] else {
            unreachable!()
        };
        let params = ComputeParams::unpack(count)?;

        let stack = |pieces: &[(usize, usize)]| -> Result<Matrix> {
            let mut out: Option<Matrix> = None;
            for &(f, id) in pieces {
                let p = self.read_piece(f, id)?;
                match &mut out {
                    None => out = Some(p),
                    Some(m) => {
                        if m.cols != p.cols {
                            return Err(fault(format!(
                                "cu{c}: operand pieces of {} and {} columns",
                                m.cols, p.cols
                            )));
                        }
                        m.rows += p.rows;
                        m.data.extend(p.data);
                    }
                }
            }
            Ok(out.expect("non-empty"))
        };
        let a = stack(&lhs)?;
        let b = stack(&rhs)?;
        if a.cols != b.rows {
            return Err(fault(format!(
                "cu{c}: LHS {}x{} against RHS {}x{}",
                a.rows, a.cols, b.rows, b.cols
            )));
        }
        let (rows, kk, cols) = (a.rows, a.cols, b.cols);
        let mut row0 = 0;
        let mut wr = Vec::with_capacity(writes.len());
        for &(f, id) in &writes {
            let e = self.ops[id].range.elems();
            if !e.is_multiple_of(cols) {
                return Err(fault(format!(
                    "cu{c}: {e}-element result piece is not whole {cols}-column rows"
                )));
            }
            wr.push((f, id, e / cols, row0));
            row0 += e / cols;
        }
        if row0 != rows {
            return Err(fault(format!(
                "cu{c}: result has {rows} rows, sends cover {row0}"
            )));
        }
        let integer = params.dtype.is_integer();
        let mut result = Vec::new();
        if self.opts.functional {
            result = vec![0u32; rows * cols];
            for i in 0..rows {
                for j in 0..cols {
                    let mut acc = 0u32;
                    for k in 0..kk {
                        acc = mac(acc, a.data[i * kk + k], b.data[k * cols + j], integer);
                    }
                    result[i * cols + j] = acc;
                }
            }
        }
        let spec = ModeSpec {
            roles: RoleSplit {
                lhs: 1,
                rhs: 1,
                out: 1,
            },
            cus: 1,
            tile: params.tile,
            block: Block {
                m: rows,
                k: kk,
                n: cols,
            },
            kernel: if params.static_kernel {
                KernelKind::Static
            } else {
                KernelKind::Flexible
            },
        };
        let ph = cu_phase(rows, kk, cols, &spec, self.hw, params.dtype);
        self.executed_macs += ph.executed_macs;
        let end = self.now + ph.seconds;
        self.log(format!("cu{c}"), "compute_start", || {
            format!("L{layer} {rows}x{kk}x{cols}")
        });
        self.cus[c].job = Some(CuJob {
            len,
            layer,
            reads,
            writes: wr,
            result,
            cols,
            integer,
            start: self.now,
        });
        self.schedule(end, Ev::CuDone { cu: c });
        Ok(true)
    }

    fn cu_done(&mut self, c: usize) -> Result<()> {
        let job = self.cus[c].job.take().expect("running job");
        let now = self.now;
        self.cus[c].intervals.push((job.start, now));
        for &(f, id) in &job.reads {
            self.fmus[f].busy.push((job.start, now));
            self.fmus[f].sends.get_mut(&c).expect("matched").pop_front();
            self.finish_op(f, id);
        }
        for &(f, id, nrows, row0) in &job.writes {
            self.fmus[f].busy.push((job.start, now));
            let r = self.ops[id].range;
            let (vr, vc) = (r.end_row as usize + 1, r.end_col as usize + 1);
            let h = &mut self.fmus[f].halves[self.ops[id].half];
            if !h.acc {
                // First partial sum of a block: whatever view the half held before is gone.
                h.rows = 0;
                h.cols = 0;
                h.data.iter_mut().for_each(|x| *x = 0);
                h.acc = true;
            }
            let rows = h.rows.max(vr);
            if h.cols != 0 && h.cols != vc {
                return Err(fault(format!(
                    "fmu{f} instruction {}: receive into {vc} columns, view has {}",
                    self.ops[id].seq, h.cols
                )));
            }
            if rows * vc > self.hw.fmu_capacity_elems {
                return Err(fault(format!(
                    "fmu{f} instruction {}: view {rows}x{vc} exceeds buffer",
                    self.ops[id].seq
                )));
            }
            h.rows = rows;
            h.cols = vc;
            if self.opts.functional {
                if h.data.len() < rows * vc {
                    h.data.resize(rows * vc, 0);
                }
                for i in 0..nrows {
                    for j in 0..r.cols() {
                        let dst = (r.start_row as usize + i) * vc + r.start_col as usize + j;
                        h.data[dst] = add(
                            h.data[dst],
                            job.result[(row0 + i) * job.cols + j],
                            job.integer,
                        );
                    }
                }
            }
            self.fmus[f].recvs.get_mut(&c).expect("matched").pop_front();
            self.finish_op(f, id);
        }
        for _ in 0..job.len {
            self.cus[c].queue.pop_front();
        }
        self.cus[c].done += job.len;
        self.log(format!("cu{c}"), "compute_done", || {
            format!("L{}", job.layer)
        });
        self.retire(job.layer, job.len);
        Ok(())
    }

    fn step_units(&mut self) -> Result<()> {
        loop {
            let mut progressed = self.dispatch()?;
            for m in 0..self.loaders.len() {
                progressed |= self.try_loader(m)?;
                progressed |= self.try_storer(m)?;
            }
            for c in 0..self.cus.len() {
                progressed |= self.try_cu(c)?;
            }
            if !progressed {
                return Ok(());
            }
        }
    }

    fn dump(&self) -> String {
        let mut parts = Vec::new();
        for (m, f) in self.fmus.iter().enumerate() {
            for (h, half) in f.halves.iter().enumerate() {
                if let Some(&id) = half.queue.front() {
                    let o = &self.ops[id];
                    parts.push(format!(
                        "fmu{m}.{h}@{} {}(L{})",
                        o.seq,
                        o.op.name(),
                        o.layer
                    ));
                }
            }
        }
        for (m, l) in self.loaders.iter().enumerate() {
            if !l.queue.is_empty() {
                parts.push(format!("loader{m}@{} ({} queued)", l.done, l.queue.len()));
            }
        }
        for (m, l) in self.storers.iter().enumerate() {
            if !l.queue.is_empty() {
                parts.push(format!("storer{m}@{} ({} queued)", l.done, l.queue.len()));
            }
        }
        for (c, cu) in self.cus.iter().enumerate() {
            if !cu.queue.is_empty() {
                parts.push(format!("cu{c}@{} ({} queued)", cu.done, cu.queue.len()));
            }
        }
        parts.push(format!(
            "control@{}/{}",
            self.next_ctrl,
            self.prog.control.len()
        ));
        parts.join("; ")
    }

    fn run(mut self) -> Result<SimResult> {
        self.step_units()?;
        while let Some(std::cmp::Reverse((Time(t), idx))) = self.heap.pop() {
            self.now = t;
            match self.events[idx] {
                Ev::LoadDone { fmu, op } => self.load_done(fmu, op)?,
                Ev::StoreDone { fmu, op } => self.store_done(fmu, op)?,
                Ev::CuDone { cu } => self.cu_done(cu)?,
            }
            self.seq += 1;
            self.step_units()?;
        }
        if self.next_ctrl < self.prog.control.len() || self.outstanding.values().any(|&n| n > 0) {
            return Err(Error::Deadlock(self.dump()));
        }
        for (u, (w, pos)) in &self.words {
            if *pos != w.len() {
                return Err(fault(format!(
                    "{u}: {} words never dispatched",
                    w.len() - pos
                )));
            }
        }
        if self.next_header != self.prog.headers.len() {
            return Err(fault("header stream not fully consumed"));
        }
        self.finish()
    }

    fn finish(self) -> Result<SimResult> {
        let makespan = self.now;
        let util = |iv: &[(f64, f64)]| -> f64 {
            if makespan <= 0.0 {
                return 0.0;
            }
            let mut v: Vec<(f64, f64)> = iv.to_vec();
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut total = 0.0;
            let mut cur: Option<(f64, f64)> = None;
            for (s, e) in v {
                match &mut cur {
                    Some((_, ce)) if s <= *ce => *ce = ce.max(e),
                    _ => {
                        if let Some((cs, ce)) = cur {
                            total += ce - cs;
                        }
                        cur = Some((s, e));
                    }
                }
            }
            if let Some((cs, ce)) = cur {
                total += ce - cs;
            }
            (total / makespan).clamp(0.0, 1.0)
        };
        let mut utilization = BTreeMap::new();
        for (m, f) in self.fmus.iter().enumerate() {
            utilization.insert(format!("fmu{m}"), util(&f.busy));
            utilization.insert(format!("loader{m}"), util(&self.loaders[m].intervals));
            utilization.insert(format!("storer{m}"), util(&self.storers[m].intervals));
        }
        for (c, cu) in self.cus.iter().enumerate() {
            utilization.insert(format!("cu{c}"), util(&cu.intervals));
        }
        let n_layers = self.ddr.layout.layers.len();
        let outputs = if self.opts.functional {
            (0..n_layers)
                .map(|l| {
                    self.ddr
                        .read_matrix(&self.ddr.layout.regions[self.ddr.layout.layers[l].out])
                })
                .collect()
        } else {
            Vec::new()
        };
        let layer_spans = (0..n_layers)
            .map(|l| {
                (
                    self.dispatched_at.get(&l).copied().unwrap_or(f64::NAN),
                    self.done_at.get(&l).copied().unwrap_or(f64::NAN),
                )
            })
            .collect();
        Ok(SimResult {
            outputs,
            makespan,
            utilization,
            trace: self.trace,
            layer_spans,
            executed_macs: self.executed_macs,
            loaded_elems: self.loaded_elems,
            stored_elems: self.stored_elems,
            ddr: self.ddr,
        })
    }
}

pub(super) fn execute(
    prog: &Program,
    hw: &HardwareConfig,
    ddr: DdrImage,
    opts: SimOptions,
) -> Result<SimResult> {
    Engine::new(prog, hw, ddr, opts)?.run()
}
