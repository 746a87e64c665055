//! Hardware platform description.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atomic AIE operation: a 2x8x8 MM packed into one kernel step.
pub const ATOM: (usize, usize, usize) = (2, 8, 8);

/// Upper bound on FMU / CU counts; unit ids travel in 4-bit instruction fields.
pub const MAX_UNITS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AieCycleParams {
    pub macs_per_cycle: f64,
    /// Cycles per 2x8x8 atomic op.
    pub c_atom: f64,
    /// Per-iteration loop overhead.
    pub c_loop: f64,
    /// Fixed per-invocation overhead.
    pub c_setup: f64,
}

impl Default for AieCycleParams {
    fn default() -> Self {
        Self {
            macs_per_cycle: 8.0,
            c_atom: 16.0,
            c_loop: 1.0,
            c_setup: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdrProfile {
    pub peak_bytes_per_sec: f64,
    /// `(burst length in bytes, fraction of peak)`, sorted by burst length.
    pub burst_efficiency: Vec<(u64, f64)>,
}

impl Default for DdrProfile {
    fn default() -> Self {
        Self {
            peak_bytes_per_sec: 25.6e9,
            burst_efficiency: vec![
                (64, 0.20),
                (256, 0.45),
                (1024, 0.70),
                (4096, 0.85),
                (16384, 0.95),
            ],
        }
    }
}

impl DdrProfile {
    /// Fraction of peak achieved by transactions of `burst` contiguous bytes.
    ///
    /// Piecewise-linear between profile points, proportional below the first
    /// point and flat above the last.
    pub fn efficiency(&self, burst: u64) -> f64 {
        let pts = &self.burst_efficiency;
        let (b0, f0) = pts[0];
        if burst <= b0 {
            return f0 * burst.max(1) as f64 / b0 as f64;
        }
        for w in pts.windows(2) {
            let ((lo, flo), (hi, fhi)) = (w[0], w[1]);
            if burst <= hi {
                let t = (burst - lo) as f64 / (hi - lo) as f64;
                return flo + t * (fhi - flo);
            }
        }
        pts[pts.len() - 1].1
    }

    pub fn effective_bandwidth(&self, burst: u64) -> f64 {
        self.peak_bytes_per_sec * self.efficiency(burst)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::Config { field: "ddr", msg };
        if !(self.peak_bytes_per_sec > 0.0) {
            return Err(bad("peak_bytes_per_sec must be positive".into()));
        }
        if self.burst_efficiency.is_empty() {
            return Err(bad("burst_efficiency must not be empty".into()));
        }
        for &(b, f) in &self.burst_efficiency {
            if b == 0 || !(f > 0.0 && f <= 1.0) {
                return Err(bad(format!("invalid burst point ({b}, {f})")));
            }
        }
        for w in self.burst_efficiency.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 < w[0].1 {
                return Err(bad(
                    "burst_efficiency must be strictly increasing in burst and monotone in fraction"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    /// F_max.
    pub n_fmu: usize,
    /// C_max.
    pub n_cu: usize,
    /// K: AIEs per CU.
    pub aie_per_cu: usize,
    /// Elements per FMU buffer half.
    pub fmu_capacity_elems: usize,
    /// Largest per-AIE tile `(tm, tk, tn)` in elements.
    pub cu_buf_tile: (usize, usize, usize),
    pub f_pl_hz: f64,
    pub f_aie_hz: f64,
    pub stream_bytes_per_cycle: f64,
    pub ddr: DdrProfile,
    pub aie_cycle_model: AieCycleParams,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        default_vck190()
    }
}

/// Default platform: VCK190 clocks, 32x32x32 max AIE tile, 8 FMUs, 8 CUs of 4 AIEs.
pub fn default_vck190() -> HardwareConfig {
    HardwareConfig {
        n_fmu: 8,
        n_cu: 8,
        aie_per_cu: 4,
        fmu_capacity_elems: 65536,
        cu_buf_tile: (32, 32, 32),
        f_pl_hz: 150e6,
        f_aie_hz: 1e9,
        stream_bytes_per_cycle: 16.0,
        ddr: DdrProfile::default(),
        aie_cycle_model: AieCycleParams::default(),
    }
}

impl HardwareConfig {
    pub fn validate(&self) -> Result<()> {
        let count = |field: &'static str, v: usize| -> Result<()> {
            if v == 0 {
                return Err(Error::Config {
                    field,
                    msg: "must be >= 1".into(),
                });
            }
            Ok(())
        };
        count("n_fmu", self.n_fmu)?;
        count("n_cu", self.n_cu)?;
        count("aie_per_cu", self.aie_per_cu)?;
        count("fmu_capacity_elems", self.fmu_capacity_elems)?;
        for (field, v) in [("n_fmu", self.n_fmu), ("n_cu", self.n_cu)] {
            if v > MAX_UNITS {
                return Err(Error::Config {
                    field,
                    msg: format!("at most {MAX_UNITS} units are addressable, got {v}"),
                });
            }
        }
        if self.n_fmu < 3 {
            return Err(Error::Config {
                field: "n_fmu",
                msg: "need at least 3 FMUs (one per LHS / RHS / OUT role)".into(),
            });
        }
        let (tm, tk, tn) = self.cu_buf_tile;
        if tm == 0 || tk == 0 || tn == 0 || tm % ATOM.0 != 0 || tk % ATOM.1 != 0 || tn % ATOM.2 != 0
        {
            return Err(Error::Config {
                field: "cu_buf_tile",
                msg: format!("({tm}, {tk}, {tn}) is not a positive multiple of the 2x8x8 atom"),
            });
        }
        if tm / ATOM.0 > 255 || tk / ATOM.1 > 255 || tn / ATOM.2 > 255 {
            return Err(Error::Config {
                field: "cu_buf_tile",
                msg: "atom counts must fit in 8 bits".into(),
            });
        }
        let need = (tm * tk)
            .max(tk * tn * self.aie_per_cu)
            .max(tm * tn * self.aie_per_cu);
        if self.fmu_capacity_elems < need {
            return Err(Error::Config {
                field: "fmu_capacity_elems",
                msg: format!(
                    "{} cannot hold a full CU tile view of {need} elements",
                    self.fmu_capacity_elems
                ),
            });
        }
        for (field, v) in [
            ("f_pl_hz", self.f_pl_hz),
            ("f_aie_hz", self.f_aie_hz),
            ("stream_bytes_per_cycle", self.stream_bytes_per_cycle),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config {
                    field,
                    msg: format!("must be positive, got {v}"),
                });
            }
        }
        let p = &self.aie_cycle_model;
        let atom_macs = (ATOM.0 * ATOM.1 * ATOM.2) as f64;
        if !(p.macs_per_cycle > 0.0) {
            return Err(Error::Config {
                field: "aie_cycle_model",
                msg: "macs_per_cycle must be positive".into(),
            });
        }
        if p.c_atom < atom_macs / p.macs_per_cycle || p.c_loop < 0.0 || p.c_setup < 0.0 {
            return Err(Error::Config {
                field: "aie_cycle_model",
                msg: format!(
                    "need c_atom >= {} and non-negative overheads",
                    atom_macs / p.macs_per_cycle
                ),
            });
        }
        self.ddr.validate()
    }

    /// Max per-AIE tile in atoms.
    pub fn max_tile_atoms(&self) -> (usize, usize, usize) {
        let (tm, tk, tn) = self.cu_buf_tile;
        (tm / ATOM.0, tk / ATOM.1, tn / ATOM.2)
    }

    /// FMU<->CU stream bandwidth in bytes/s, per port.
    pub fn stream_bandwidth(&self) -> f64 {
        self.stream_bytes_per_cycle * self.f_pl_hz
    }

    /// Bandwidth of one FMU's IOM channel for transactions of `burst` bytes.
    ///
    /// DDR peak is split evenly across the FMU channels and each channel is
    /// capped by its stream width.
    pub fn channel_bandwidth(&self, burst: u64) -> f64 {
        let ddr = self.ddr.effective_bandwidth(burst) / self.n_fmu as f64;
        ddr.min(self.stream_bandwidth())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn load_config(text: &str) -> Result<HardwareConfig> {
    let cfg: HardwareConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vck190_clocks() {
        let hw = default_vck190();
        assert_eq!(hw.f_aie_hz, 1e9);
        assert_eq!(hw.f_pl_hz, 150e6);
        assert_eq!(hw.cu_buf_tile, (32, 32, 32));
        hw.validate().unwrap();
    }

    #[test]
    fn zero_aie_per_cu_rejected() {
        let mut hw = default_vck190();
        hw.aie_per_cu = 0;
        let err = load_config(&hw.to_json()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Config {
                    field: "aie_per_cu",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn misaligned_tile_rejected() {
        let mut hw = default_vck190();
        hw.cu_buf_tile = (32, 30, 32);
        assert!(matches!(
            hw.validate(),
            Err(Error::Config {
                field: "cu_buf_tile",
                ..
            })
        ));
    }

    #[test]
    fn same_size_views_fit() {
        let hw = default_vck190();
        assert!(256 * 256 <= hw.fmu_capacity_elems);
        assert!(128 * 512 <= hw.fmu_capacity_elems);
    }

    #[test]
    fn round_trip() {
        let hw = default_vck190();
        let again = load_config(&hw.to_json()).unwrap();
        assert_eq!(hw, again);
    }

    #[test]
    fn bandwidth_monotone_and_capped() {
        let ddr = DdrProfile::default();
        let mut prev = 0.0;
        for b in (1..70000u64).step_by(37) {
            let bw = ddr.effective_bandwidth(b);
            assert!(bw >= prev);
            assert!(bw <= ddr.peak_bytes_per_sec);
            prev = bw;
        }
    }
}
