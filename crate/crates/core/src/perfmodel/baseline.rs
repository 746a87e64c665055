//! Reconstructed analytical models of two fixed-shape accelerator styles.
//!
//! * CHARM-like: one monolithic accelerator with a fixed on-chip tile; every layer is
//!   padded up to tile multiples and runs on all units with a static AIE kernel.
//! * RSN-like: memory units of a fixed matrix shape that can be concatenated per layer,
//!   with a fixed static computation tile; operands are padded to unit-shape multiples.
//!
//! Neither style reassigns memory functionality per layer: the LHS / RHS / OUT split of
//! the FMUs is fixed at design time to [`fixed_roles`].

use serde::{Deserialize, Serialize};

use super::{
    layer_latency_spec, Block, KernelKind, LatencyBreakdown, ModeSpec, RoleSplit, TileShape,
};
use crate::arch::HardwareConfig;
use crate::error::{Error, Result};
use crate::workload::LayerNode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub breakdown: LatencyBreakdown,
    pub spec: ModeSpec,
    /// Padded problem dimensions actually executed.
    pub padded: (usize, usize, usize),
}

fn round_up(v: usize, m: usize) -> usize {
    v.div_ceil(m) * m
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

fn padded_layer(layer: &LayerNode, m: usize, k: usize, n: usize) -> LayerNode {
    LayerNode {
        m,
        k,
        n,
        ..layer.clone()
    }
}

fn max_tile(hw: &HardwareConfig) -> TileShape {
    let (a, b, c) = hw.max_tile_atoms();
    TileShape::new(a, b, c)
}

/// Design-time FMU split: as even as possible, remainder to the operand roles.
pub fn fixed_roles(n_fmu: usize) -> RoleSplit {
    let base = n_fmu / 3;
    let rem = n_fmu % 3;
    RoleSplit {
        lhs: base + (rem > 0) as usize,
        rhs: base + (rem > 1) as usize,
        out: base,
    }
}

fn best_over<I: IntoIterator<Item = ModeSpec>>(
    layer: &LayerNode,
    specs: I,
    hw: &HardwareConfig,
) -> Option<(LatencyBreakdown, ModeSpec)> {
    let mut best: Option<(LatencyBreakdown, ModeSpec)> = None;
    for spec in specs {
        if let Ok(lb) = layer_latency_spec(layer, &spec, hw) {
            if best.as_ref().is_none_or(|(b, _)| lb.t_total < b.t_total) {
                best = Some((lb, spec));
            }
        }
    }
    best
}

/// Fixed on-chip tile `(tm, tk, tn)`; all FMUs and CUs; static max-tile AIE kernel.
pub fn baseline_latency_charm(
    layer: &LayerNode,
    fixed_tile: (usize, usize, usize),
    hw: &HardwareConfig,
) -> Result<BaselineResult> {
    let (tm, tk, tn) = fixed_tile;
    if tm == 0 || tk == 0 || tn == 0 {
        return Err(Error::Model("fixed tile must be positive".into()));
    }
    let padded = padded_layer(
        layer,
        round_up(layer.m, tm),
        round_up(layer.k, tk),
        round_up(layer.n, tn),
    );
    let block = Block {
        m: tm,
        k: tk,
        n: tn,
    };
    let specs = [ModeSpec {
        roles: fixed_roles(hw.n_fmu),
        cus: hw.n_cu,
        tile: max_tile(hw),
        block,
        kernel: KernelKind::Static,
    }];
    let (breakdown, spec) = best_over(&padded, specs, hw).ok_or_else(|| {
        Error::Infeasible(format!("fixed tile {fixed_tile:?} does not fit the FMUs"))
    })?;
    Ok(BaselineResult {
        breakdown,
        spec,
        padded: padded.dims(),
    })
}

/// Memory units of shape `unit_shape`; blocks are power-of-two multiples of the unit
/// concatenated across FMUs; fixed static computation tile on all CUs.
pub fn baseline_latency_rsn(
    layer: &LayerNode,
    unit_shape: (usize, usize),
    fixed_cu_tile: TileShape,
    hw: &HardwareConfig,
) -> Result<BaselineResult> {
    let (ur, uc) = unit_shape;
    if ur == 0 || uc == 0 {
        return Err(Error::Model("unit shape must be positive".into()));
    }
    if !fixed_cu_tile.fits(max_tile(hw)) {
        return Err(Error::Model(format!(
            "fixed CU tile {fixed_cu_tile:?} exceeds hardware"
        )));
    }
    // LHS is M x K and RHS is K x N; K is a column dim of one and a row dim of the other.
    let uk = lcm(ur, uc);
    let padded = padded_layer(
        layer,
        round_up(layer.m, ur),
        round_up(layer.k, uk),
        round_up(layer.n, uc),
    );
    let multiples = |total: usize, unit: usize| -> Vec<usize> {
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
    };
    let bms = multiples(padded.m, ur);
    let bks = multiples(padded.k, uk);
    let bns = multiples(padded.n, uc);
    let roles = fixed_roles(hw.n_fmu);
    let mut specs = Vec::new();
    for &m in &bms {
        for &k in &bks {
            for &n in &bns {
                specs.push(ModeSpec {
                    roles,
                    cus: hw.n_cu,
                    tile: fixed_cu_tile,
                    block: Block { m, k, n },
                    kernel: KernelKind::Static,
                });
            }
        }
    }
    let (breakdown, spec) = best_over(&padded, specs, hw).ok_or_else(|| {
        Error::Infeasible(format!("unit shape {unit_shape:?} does not fit the FMUs"))
    })?;
    Ok(BaselineResult {
        breakdown,
        spec,
        padded: padded.dims(),
    })
}
