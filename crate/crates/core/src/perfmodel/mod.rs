//! Analytical latency model.
//!
//! A layer runs as a sequence of rounds, one per `(m, n, k)` block in that loop order.
//! Each round loads an LHS and an RHS block into FMUs, streams them through the CUs,
//! and accumulates partial sums into output FMUs; an output block is written back after
//! its last `k` round. Loads, compute and stores overlap through ping/pong buffers: a load
//! may run while the previous round computes, and an output block's store may run while
//! the next block accumulates. The layer time is the completion of that pipeline.

pub mod baseline;
pub mod plan;

use serde::{Deserialize, Serialize};

use crate::arch::{AieCycleParams, HardwareConfig, ATOM};
use crate::error::{Error, Result};
use crate::explore::CandidateMode;
use crate::workload::{DType, LayerNode};

use plan::{chunk_len, dim_classes, split};

/// Per-AIE tile in atomic 2x8x8 units along M, K and N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileShape {
    pub ai: usize,
    pub ak: usize,
    pub aj: usize,
}

impl TileShape {
    pub const fn new(ai: usize, ak: usize, aj: usize) -> Self {
        Self { ai, ak, aj }
    }

    /// Smallest tile covering an `m x k x n` problem.
    pub fn covering(m: usize, k: usize, n: usize) -> Self {
        Self::new(m.div_ceil(ATOM.0), k.div_ceil(ATOM.1), n.div_ceil(ATOM.2))
    }

    pub fn elems(&self) -> (usize, usize, usize) {
        (self.ai * ATOM.0, self.ak * ATOM.1, self.aj * ATOM.2)
    }

    pub fn atoms(&self) -> u64 {
        (self.ai * self.ak * self.aj) as u64
    }

    pub fn fits(&self, max: TileShape) -> bool {
        self.ai >= 1
            && self.ak >= 1
            && self.aj >= 1
            && self.ai <= max.ai
            && self.ak <= max.ak
            && self.aj <= max.aj
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// Loop bounds set per invocation; edge tiles shrink to the atoms they need.
    #[default]
    Flexible,
    /// Every invocation runs the full compiled tile, padding edges.
    Static,
}

/// Number of FMUs assigned to each role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoleSplit {
    pub lhs: usize,
    pub rhs: usize,
    pub out: usize,
}

impl RoleSplit {
    pub fn total(&self) -> usize {
        self.lhs + self.rhs + self.out
    }
}

/// FMU-level block in elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Block {
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

/// Runtime parameters of one execution mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeSpec {
    pub roles: RoleSplit,
    pub cus: usize,
    pub tile: TileShape,
    pub block: Block,
    #[serde(default)]
    pub kernel: KernelKind,
}

impl ModeSpec {
    pub fn fmus(&self) -> usize {
        self.roles.total()
    }

    /// Per-FMU `(rows, cols)` views for a full block: LHS, then RHS, then OUT FMUs.
    pub fn views(&self) -> Vec<(usize, usize)> {
        let b = self.block;
        let mut v = Vec::with_capacity(self.fmus());
        v.extend(std::iter::repeat_n(
            (chunk_len(b.m, self.roles.lhs, 1), b.k),
            self.roles.lhs,
        ));
        v.extend(std::iter::repeat_n(
            (chunk_len(b.k, self.roles.rhs, 1), b.n),
            self.roles.rhs,
        ));
        v.extend(std::iter::repeat_n(
            (chunk_len(b.m, self.roles.out, 1), b.n),
            self.roles.out,
        ));
        v
    }

    /// Checks unit counts, tile bounds, role coverage and view capacity.
    pub fn check(&self, hw: &HardwareConfig) -> Result<()> {
        let infeasible = |what: String| Err(Error::Infeasible(what));
        if self.roles.lhs == 0 || self.roles.rhs == 0 || self.roles.out == 0 {
            return infeasible("every FMU role (LHS, RHS, OUT) needs at least one FMU".into());
        }
        if self.fmus() > hw.n_fmu {
            return infeasible(format!("FMU: mode needs {} of {}", self.fmus(), hw.n_fmu));
        }
        if self.cus == 0 || self.cus > hw.n_cu {
            return infeasible(format!("CU: mode needs {} of {}", self.cus, hw.n_cu));
        }
        let (mi, mk, mj) = hw.max_tile_atoms();
        if !self.tile.fits(TileShape::new(mi, mk, mj)) {
            return infeasible(format!(
                "AIE tile {:?} exceeds CU buffer tile {:?}",
                self.tile.elems(),
                hw.cu_buf_tile
            ));
        }
        if self.block.m == 0 || self.block.k == 0 || self.block.n == 0 {
            return infeasible("empty block".into());
        }
        for (rows, cols) in self.views() {
            if rows * cols > hw.fmu_capacity_elems {
                return infeasible(format!(
                    "FMU capacity: view {rows}x{cols} exceeds {} elements",
                    hw.fmu_capacity_elems
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub t_compute: f64,
    pub t_load: f64,
    pub t_store: f64,
    pub t_total: f64,
    pub rounds: u64,
    pub utilization: f64,
}

fn check_tile(tile: TileShape, max_tile: TileShape) -> Result<()> {
    if !tile.fits(max_tile) {
        return Err(Error::Model(format!(
            "tile {tile:?} outside 1..={max_tile:?} atoms"
        )));
    }
    Ok(())
}

fn flexible_cycles(ai: usize, ak: usize, aj: usize, p: &AieCycleParams) -> f64 {
    p.c_setup + ai as f64 * (p.c_loop + aj as f64 * (p.c_loop + ak as f64 * p.c_atom))
}

/// Cycles of the three-deep flexible-bound loop over atomic ops.
pub fn aie_kernel_cycles_flexible(
    tile: TileShape,
    p: &AieCycleParams,
    max_tile: TileShape,
) -> Result<f64> {
    check_tile(tile, max_tile)?;
    Ok(flexible_cycles(tile.ai, tile.ak, tile.aj, p))
}

/// A statically compiled kernel always runs the full `max_tile`.
pub fn aie_kernel_cycles_static(
    tile: TileShape,
    p: &AieCycleParams,
    max_tile: TileShape,
) -> Result<f64> {
    check_tile(tile, max_tile)?;
    Ok(flexible_cycles(max_tile.ai, max_tile.ak, max_tile.aj, p))
}

/// Ideal cycles over actual cycles for an `(m, k, n)` workload tile in elements.
pub fn aie_efficiency(
    kind: KernelKind,
    workload: (usize, usize, usize),
    p: &AieCycleParams,
    max_tile: TileShape,
) -> Result<f64> {
    let (m, k, n) = workload;
    if m == 0 || k == 0 || n == 0 {
        return Err(Error::Model("empty workload tile".into()));
    }
    let tile = TileShape::covering(m, k, n);
    let actual = match kind {
        KernelKind::Flexible => aie_kernel_cycles_flexible(tile, p, max_tile)?,
        KernelKind::Static => aie_kernel_cycles_static(tile, p, max_tile)?,
    };
    let ideal = (m * k * n) as f64 / p.macs_per_cycle;
    Ok(ideal / actual)
}

/// Cost of one CU processing an `rows x kk x cols` share of a block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuPhase {
    pub seconds: f64,
    pub aie_seconds: f64,
    pub executed_macs: u64,
}

/// Column width per AIE and number of active AIEs for `cols` output columns.
pub fn aie_column_split(cols: usize, spec: &ModeSpec, aie_per_cu: usize) -> (usize, usize) {
    let w = match spec.kernel {
        KernelKind::Flexible => chunk_len(cols, aie_per_cu, ATOM.2),
        KernelKind::Static => spec.tile.aj * ATOM.2,
    };
    (w, cols.div_ceil(w))
}

/// Per-AIE atoms for one CU tile invocation of `r x k` rows/depth and per-AIE width `w`.
pub fn invocation_atoms(r: usize, k: usize, w: usize, spec: &ModeSpec) -> TileShape {
    match spec.kernel {
        KernelKind::Flexible => TileShape::covering(r, k, w),
        KernelKind::Static => spec.tile,
    }
}

/// Compute phase of one CU: AIE time against the three stream ports (LHS broadcast,
/// per-AIE RHS and per-AIE output), whichever is slowest.
pub fn cu_phase(
    rows: usize,
    kk: usize,
    cols: usize,
    spec: &ModeSpec,
    hw: &HardwareConfig,
    dtype: DType,
) -> CuPhase {
    if rows == 0 || kk == 0 || cols == 0 {
        return CuPhase {
            seconds: 0.0,
            aie_seconds: 0.0,
            executed_macs: 0,
        };
    }
    let (tm, tk, tn) = spec.tile.elems();
    let tnc = tn * hw.aie_per_cu;
    let p = &hw.aie_cycle_model;
    let atom_macs = (ATOM.0 * ATOM.1 * ATOM.2) as u64;

    let mut cycles = 0.0;
    let mut executed = 0u64;
    let mut lhs_elems = 0u64;
    let mut rhs_port_elems = 0u64;
    let mut out_port_elems = 0u64;
    for (cm, r) in dim_classes(rows, tm) {
        for (cn, c) in dim_classes(cols, tnc) {
            let (w, active) = aie_column_split(c, spec, hw.aie_per_cu);
            let first_cols = w.min(c) as u64;
            out_port_elems += cm * cn * r as u64 * first_cols;
            for (ck, k) in dim_classes(kk, tk) {
                let n = cm * cn * ck;
                let a = invocation_atoms(r, k, w, spec);
                cycles += n as f64 * flexible_cycles(a.ai, a.ak, a.aj, p);
                executed += n * active as u64 * a.atoms() * atom_macs;
                lhs_elems += n * (r * k) as u64;
                rhs_port_elems += n * k as u64 * first_cols;
            }
        }
    }
    let bw = hw.stream_bandwidth();
    let ib = dtype.bytes() as f64;
    let ob = dtype.output().bytes() as f64;
    let aie_seconds = cycles / hw.f_aie_hz;
    let seconds = aie_seconds
        .max(lhs_elems as f64 * ib / bw)
        .max(rhs_port_elems as f64 * ib / bw)
        .max(out_port_elems as f64 * ob / bw);
    CuPhase {
        seconds,
        aie_seconds,
        executed_macs: executed,
    }
}

/// Time for one IOM channel to move a `rows x cols` region of a row-major matrix of
/// `width` columns. Full-width regions are one contiguous burst; otherwise each row is.
pub fn transfer_time(
    rows: usize,
    cols: usize,
    width: usize,
    elem_bytes: usize,
    hw: &HardwareConfig,
) -> f64 {
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let bytes = (rows * cols * elem_bytes) as u64;
    let burst = if cols == width {
        bytes
    } else {
        (cols * elem_bytes) as u64
    };
    bytes as f64 / hw.channel_bandwidth(burst)
}

/// Phase costs of one round shape; produced either directly or from caches.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RoundCost {
    pub load: f64,
    pub compute: f64,
    pub store: f64,
    pub executed: u64,
}

/// Completion times carried through the round pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Pipe {
    /// Last load done.
    ld: f64,
    /// Compute done for the previous two rounds (most recent first).
    cd1: f64,
    cd2: f64,
    /// Store done for the previous two output blocks.
    sd1: f64,
    sd2: f64,
}

impl Pipe {
    const ZERO: Pipe = Pipe {
        ld: 0.0,
        cd1: 0.0,
        cd2: 0.0,
        sd1: 0.0,
        sd2: 0.0,
    };

    fn arr(&self) -> [f64; 5] {
        [self.ld, self.cd1, self.cd2, self.sd1, self.sd2]
    }

    fn shift(&mut self, d: [f64; 5], times: f64) {
        self.ld += d[0] * times;
        self.cd1 += d[1] * times;
        self.cd2 += d[2] * times;
        self.sd1 += d[3] * times;
        self.sd2 += d[4] * times;
    }

    /// One round. Its load needs the channel free and the buffer half released by the
    /// round two back; its compute needs the load, the CUs, and for the first round of an
    /// output block, the output half released by the store two blocks back.
    fn round(&mut self, load: f64, compute: f64, first: bool) {
        let ld = self.ld.max(self.cd2) + load;
        let mut cs = ld.max(self.cd1);
        if first {
            cs = cs.max(self.sd2);
        }
        self.ld = ld;
        self.cd2 = self.cd1;
        self.cd1 = cs + compute;
    }

    /// `count` identical non-first rounds. From the fifth round on every completion time
    /// advances by `max(load, compute)`, so the rest is applied as one shift.
    fn run(&mut self, load: f64, compute: f64, count: u64) {
        let head = count.min(5);
        for _ in 0..head {
            self.round(load, compute, false);
        }
        let rest = (count - head) as f64 * load.max(compute);
        self.ld += rest;
        self.cd1 += rest;
        self.cd2 += rest;
    }

    fn store(&mut self, store: f64) {
        let s = self.cd1.max(self.sd1) + store;
        self.sd2 = self.sd1;
        self.sd1 = s;
    }
}

/// Applies `body` `count` times. Once the state advances by the same offset over two
/// consecutive periods of length 1 or 2, the remaining whole periods are applied as a shift.
fn repeat(st: &mut Pipe, count: u64, mut body: impl FnMut(&mut Pipe)) {
    // Last five states, newest at `hist[(n - 1) % 5]`.
    let mut hist = [[0.0f64; 5]; 5];
    hist[0] = st.arr();
    let mut n = 1usize;
    let mut i = 0u64;
    while i < count {
        body(st);
        i += 1;
        hist[n % 5] = st.arr();
        n += 1;
        if i >= count || n < 3 {
            continue;
        }
        for p in [1usize, 2] {
            if n < 2 * p + 1 {
                break;
            }
            let a = hist[(n - 1) % 5];
            let b = hist[(n - 1 - p) % 5];
            let c = hist[(n - 1 - 2 * p) % 5];
            let steady = (0..5).all(|x| {
                let d = a[x] - b[x];
                let e = b[x] - c[x];
                (d - e).abs() <= 1e-12 * a[x].abs().max(1e-30)
            });
            if steady {
                let periods = (count - i) / p as u64;
                if periods > 0 {
                    let d: [f64; 5] = std::array::from_fn(|x| a[x] - b[x]);
                    st.shift(d, periods as f64);
                    i += periods * p as u64;
                    hist[0] = st.arr();
                    n = 1;
                }
                break;
            }
        }
    }
}

/// Combines round costs into the pipelined layer time. `cost(sm, sk, sn)` must return the
/// phase costs of a round with block extents `sm x sk x sn`; `store` is that of its output
/// block.
pub(crate) fn compose(
    layer: &LayerNode,
    block: Block,
    cost: impl FnMut(usize, usize, usize) -> RoundCost,
) -> LatencyBreakdown {
    compose_bounded(layer, block, f64::INFINITY, cost).expect("unbounded")
}

/// As [`compose`], but returns `None` without running the pipeline recurrence when the
/// phase sums alone already exceed `cutoff`.
pub(crate) fn compose_bounded(
    layer: &LayerNode,
    block: Block,
    cutoff: f64,
    mut cost: impl FnMut(usize, usize, usize) -> RoundCost,
) -> Option<LatencyBreakdown> {
    let cm = dim_classes(layer.m, block.m);
    let ck = dim_classes(layer.k, block.k);
    let cn = dim_classes(layer.n, block.n);

    let mut t_load = 0.0;
    let mut t_compute = 0.0;
    let mut t_store = 0.0;
    let mut executed = 0u64;
    let mut rounds = 0u64;
    // costs[im][in][ik]; every dimension has at most two classes.
    let zero = RoundCost {
        load: 0.0,
        compute: 0.0,
        store: 0.0,
        executed: 0,
    };
    let mut costs = [[[zero; 2]; 2]; 2];
    for (im, &(nm, sm)) in cm.iter().enumerate() {
        for (in_, &(nn, sn)) in cn.iter().enumerate() {
            for (ik, &(nkc, sk)) in ck.iter().enumerate() {
                let c = cost(sm, sk, sn);
                let count = nm * nn * nkc;
                t_load += count as f64 * c.load;
                t_compute += count as f64 * c.compute;
                executed += count * c.executed;
                rounds += count;
                if ik == 0 {
                    t_store += (nm * nn) as f64 * c.store;
                }
                costs[im][in_][ik] = c;
            }
        }
    }

    if t_load.max(t_compute).max(t_store) > cutoff {
        return None;
    }
    let block_body = |st: &mut Pipe, ks: &[RoundCost; 2]| {
        for (ik, &(nkc, _)) in ck.iter().enumerate() {
            let c = ks[ik];
            let mut left = nkc;
            if ik == 0 {
                st.round(c.load, c.compute, true);
                left -= 1;
            }
            st.run(c.load, c.compute, left);
        }
        st.store(ks[0].store);
    };
    let mut st = Pipe::ZERO;
    for (im, &(nm, _)) in cm.iter().enumerate() {
        if let [(nn, _)] = cn[..] {
            // One column class: the m-blocks chain into a single run of identical blocks.
            repeat(&mut st, nm * nn, |st| block_body(st, &costs[im][0]));
            continue;
        }
        repeat(&mut st, nm, |st| {
            for (in_, &(nn, _)) in cn.iter().enumerate() {
                repeat(st, nn, |st| block_body(st, &costs[im][in_]));
            }
        });
    }
    let t_total = st.cd1.max(st.sd1).max(t_load).max(t_compute).max(t_store);
    Some(LatencyBreakdown {
        t_compute,
        t_load,
        t_store,
        t_total,
        rounds,
        utilization: if executed == 0 {
            0.0
        } else {
            layer.ops() as f64 / executed as f64
        },
    })
}

/// Load time of a round: the slowest LHS or RHS FMU channel.
pub(crate) fn round_load(
    layer: &LayerNode,
    spec: &ModeSpec,
    hw: &HardwareConfig,
    sm: usize,
    sk: usize,
    sn: usize,
) -> f64 {
    let eb = layer.dtype.bytes();
    let lhs = transfer_time(
        chunk_len(sm, spec.roles.lhs, 1).min(sm),
        sk,
        layer.k,
        eb,
        hw,
    );
    let rhs = transfer_time(
        chunk_len(sk, spec.roles.rhs, 1).min(sk),
        sn,
        layer.n,
        eb,
        hw,
    );
    lhs.max(rhs)
}

/// Store time of an `sm x sn` output block: the slowest OUT FMU channel.
pub(crate) fn block_store(
    layer: &LayerNode,
    spec: &ModeSpec,
    hw: &HardwareConfig,
    sm: usize,
    sn: usize,
) -> f64 {
    let eb = layer.dtype.output().bytes();
    transfer_time(
        chunk_len(sm, spec.roles.out, 1).min(sm),
        sn,
        layer.n,
        eb,
        hw,
    )
}

/// Compute time (slowest CU) and executed MACs (all CUs) of a round.
pub(crate) fn round_compute(
    layer: &LayerNode,
    spec: &ModeSpec,
    hw: &HardwareConfig,
    sm: usize,
    sk: usize,
    sn: usize,
) -> (f64, u64) {
    let mut t: f64 = 0.0;
    let mut executed = 0;
    for (_, rows) in split(sm, spec.cus, ATOM.0) {
        let ph = cu_phase(rows, sk, sn, spec, hw, layer.dtype);
        t = t.max(ph.seconds);
        executed += ph.executed_macs;
    }
    (t, executed)
}

/// Latency of a layer under explicit runtime parameters.
pub fn layer_latency_spec(
    layer: &LayerNode,
    spec: &ModeSpec,
    hw: &HardwareConfig,
) -> Result<LatencyBreakdown> {
    spec.check(hw)?;
    Ok(compose(layer, spec.block, |sm, sk, sn| {
        let (compute, executed) = round_compute(layer, spec, hw, sm, sk, sn);
        RoundCost {
            load: round_load(layer, spec, hw, sm, sk, sn),
            compute,
            store: block_store(layer, spec, hw, sm, sn),
            executed,
        }
    }))
}

/// Latency of a layer under a Stage-1 candidate mode.
pub fn layer_latency(
    layer: &LayerNode,
    mode: &CandidateMode,
    hw: &HardwareConfig,
) -> Result<LatencyBreakdown> {
    layer_latency_spec(layer, &mode.spec, hw)
}
