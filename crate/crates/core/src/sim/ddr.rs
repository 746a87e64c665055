//! Byte-addressed DDR image and dense matrices read from it.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::isa::{MemoryLayout, Region};
use crate::workload::DType;

/// Row-major matrix; elements are raw 32-bit patterns (f32 bits, or i32 with int8 widened).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub dtype: DType,
    pub data: Vec<u32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize, dtype: DType) -> Self {
        Self {
            rows,
            cols,
            dtype,
            data: vec![0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.cols + c]
    }

    pub fn as_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&b| f32::from_bits(b)).collect()
    }

    pub fn as_i32(&self) -> Vec<i32> {
        self.data.iter().map(|&b| b as i32).collect()
    }
}

/// Element arithmetic on raw patterns.
pub(crate) fn mac(acc: u32, a: u32, b: u32, integer: bool) -> u32 {
    if integer {
        (acc as i32).wrapping_add((a as i32).wrapping_mul(b as i32)) as u32
    } else {
        (f32::from_bits(acc) + f32::from_bits(a) * f32::from_bits(b)).to_bits()
    }
}

pub(crate) fn add(acc: u32, x: u32, integer: bool) -> u32 {
    if integer {
        (acc as i32).wrapping_add(x as i32) as u32
    } else {
        (f32::from_bits(acc) + f32::from_bits(x)).to_bits()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DdrImage {
    pub layout: MemoryLayout,
    pub bytes: Vec<u8>,
}

impl DdrImage {
    pub fn zeroed(layout: MemoryLayout) -> Self {
        let bytes = vec![0; layout.total_bytes];
        Self { layout, bytes }
    }

    /// Fills every input region with seeded values: uniform in [-1, 1) for fp32, [-128, 127]
    /// for int8 and [-1000, 1000] for int32.
    pub fn random(layout: MemoryLayout, seed: u64) -> Self {
        let mut img = Self::zeroed(layout);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for r in img.layout.inputs() {
            let reg = img.layout.regions[r].clone();
            for idx in 0..reg.rows * reg.cols {
                let v = match reg.dtype {
                    DType::Fp32 => rng.gen_range(-1.0f32..1.0).to_bits(),
                    DType::Int8 => rng.gen_range(-128i32..=127) as u32,
                    DType::Int32 => rng.gen_range(-1000i32..=1000) as u32,
                };
                img.write_elem(&reg, idx, v);
            }
        }
        img
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.layout.regions.iter().find(|r| r.name == name)
    }

    pub(crate) fn read_elem(&self, reg: &Region, idx: usize) -> u32 {
        let eb = reg.dtype.bytes();
        let a = reg.addr as usize + idx * eb;
        match reg.dtype {
            DType::Int8 => self.bytes[a] as i8 as i32 as u32,
            _ => u32::from_le_bytes(self.bytes[a..a + 4].try_into().unwrap()),
        }
    }

    pub(crate) fn write_elem(&mut self, reg: &Region, idx: usize, v: u32) {
        let eb = reg.dtype.bytes();
        let a = reg.addr as usize + idx * eb;
        match reg.dtype {
            DType::Int8 => self.bytes[a] = v as i32 as i8 as u8,
            _ => self.bytes[a..a + 4].copy_from_slice(&v.to_le_bytes()),
        }
    }

    pub fn read_matrix(&self, reg: &Region) -> Matrix {
        Matrix {
            rows: reg.rows,
            cols: reg.cols,
            dtype: reg.dtype,
            data: (0..reg.rows * reg.cols)
                .map(|i| self.read_elem(reg, i))
                .collect(),
        }
    }

    pub fn write_matrix(&mut self, reg: &Region, m: &Matrix) -> Result<()> {
        if (m.rows, m.cols) != (reg.rows, reg.cols) {
            return Err(Error::Dimension(format!(
                "{}x{} matrix into {} ({}x{})",
                m.rows, m.cols, reg.name, reg.rows, reg.cols
            )));
        }
        for (i, &v) in m.data.iter().enumerate() {
            self.write_elem(reg, i, v);
        }
        Ok(())
    }

    /// Writes `<path>` (raw little-endian image) and `<path>.json` (region sidecar).
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.bytes)?;
        std::fs::write(sidecar(path), serde_json::to_string_pretty(&self.layout)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let layout: MemoryLayout = serde_json::from_str(&std::fs::read_to_string(sidecar(path))?)?;
        if bytes.len() != layout.total_bytes {
            return Err(Error::Validation(format!(
                "DDR image holds {} bytes, sidecar declares {}",
                bytes.len(),
                layout.total_bytes
            )));
        }
        Ok(Self { layout, bytes })
    }
}

pub fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
