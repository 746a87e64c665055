//! Instruction set for the generator, IOM, FMU and CU streams, with a fixed binary layout.
//!
//! Every instruction starts with word0:
//! bit 0 `is_last`, bits 1-4 primary unit, bits 8-15 `ping_op`, bits 16-23 `pong_op`,
//! bits 24-27 secondary unit, bits 28-31 variant tag. Remaining words by variant:
//!
//! | variant  | tag | primary  | secondary | words 1..                                   |
//! |----------|-----|----------|-----------|---------------------------------------------|
//! | Fmu      | 0   | src_cu   | des_cu    | count, rows (lo/hi 16), cols (lo/hi 16)      |
//! | Cu       | 1   | src_fmu  | des_fmu   | count                                       |
//! | IomLoad  | 2   | des_fmu  | -         | ddr_addr, m / n, rows, cols                 |
//! | IomStore | 3   | src_fmu  | -         | ddr_addr, m / n, rows, cols                 |
//! | Header   | 4   | index    | unit kind | valid_length                                |

mod disasm;
pub mod gen;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perfmodel::TileShape;
use crate::workload::DType;

pub use disasm::{disassemble, parse_disassembly};
pub use gen::{generate_program, plan_layout, MemoryLayout, Region};

pub const MAGIC: &[u8; 4] = b"FILC";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Op {
    Idle = 0,
    LoadLhs = 1,
    LoadRhs = 2,
    StoreOut = 3,
    Send = 4,
    Recv = 5,
    Compute = 6,
}

impl Op {
    pub const ALL: [Op; 7] = [
        Op::Idle,
        Op::LoadLhs,
        Op::LoadRhs,
        Op::StoreOut,
        Op::Send,
        Op::Recv,
        Op::Compute,
    ];

    pub fn from_code(code: u32) -> Result<Op> {
        Op::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Decode(format!("unknown op code {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Idle => "IDLE",
            Op::LoadLhs => "LOAD_LHS",
            Op::LoadRhs => "LOAD_RHS",
            Op::StoreOut => "STORE_OUT",
            Op::Send => "SEND",
            Op::Recv => "RECV",
            Op::Compute => "COMPUTE",
        }
    }

    pub fn from_name(s: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|o| o.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnitKind {
    Loader = 0,
    Storer = 1,
    Fmu = 2,
    Cu = 3,
}

impl UnitKind {
    pub const ALL: [UnitKind; 4] = [
        UnitKind::Loader,
        UnitKind::Storer,
        UnitKind::Fmu,
        UnitKind::Cu,
    ];

    pub fn from_code(code: u32) -> Result<UnitKind> {
        UnitKind::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Decode(format!("unknown unit kind {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            UnitKind::Loader => "loader",
            UnitKind::Storer => "storer",
            UnitKind::Fmu => "fmu",
            UnitKind::Cu => "cu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitRef {
    pub kind: UnitKind,
    pub index: u32,
}

impl UnitRef {
    pub fn new(kind: UnitKind, index: usize) -> Self {
        Self {
            kind,
            index: index as u32,
        }
    }
}

impl fmt::Display for UnitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.name(), self.index)
    }
}

/// Inclusive row and column ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Range2 {
    pub start_row: u32,
    pub end_row: u32,
    pub start_col: u32,
    pub end_col: u32,
}

impl Range2 {
    /// `rows x cols` block at `(r0, c0)`; both extents must be positive.
    pub fn block(r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        debug_assert!(rows > 0 && cols > 0);
        Self {
            start_row: r0 as u32,
            end_row: (r0 + rows - 1) as u32,
            start_col: c0 as u32,
            end_col: (c0 + cols - 1) as u32,
        }
    }

    pub fn rows(&self) -> usize {
        (self.end_row - self.start_row + 1) as usize
    }

    pub fn cols(&self) -> usize {
        (self.end_col - self.start_col + 1) as usize
    }

    pub fn elems(&self) -> usize {
        self.rows() * self.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instruction {
    Header {
        is_last: bool,
        des_unit: UnitRef,
        valid_length: u32,
    },
    IomLoad {
        is_last: bool,
        ddr_addr: u32,
        des_fmu: u32,
        m: u32,
        n: u32,
        range: Range2,
    },
    IomStore {
        is_last: bool,
        ddr_addr: u32,
        src_fmu: u32,
        m: u32,
        n: u32,
        range: Range2,
    },
    Fmu {
        is_last: bool,
        ping_op: Op,
        pong_op: Op,
        src_cu: u32,
        des_cu: u32,
        count: u32,
        range: Range2,
    },
    Cu {
        is_last: bool,
        ping_op: Op,
        pong_op: Op,
        src_fmu: u32,
        des_fmu: u32,
        count: u32,
    },
}

const TAG_FMU: u32 = 0;
const TAG_CU: u32 = 1;
const TAG_LOAD: u32 = 2;
const TAG_STORE: u32 = 3;
const TAG_HEADER: u32 = 4;

fn check(field: &'static str, value: u32, width: u32) -> Result<u32> {
    if width < 32 && value >> width != 0 {
        return Err(Error::Encode {
            field,
            value: value as u64,
            width,
        });
    }
    Ok(value)
}

fn pack16(lo: u32, hi: u32, lo_name: &'static str, hi_name: &'static str) -> Result<u32> {
    Ok(check(lo_name, lo, 16)? | check(hi_name, hi, 16)? << 16)
}

fn check_range(r: &Range2, m: Option<u32>, n: Option<u32>) -> Result<()> {
    if r.start_row > r.end_row {
        return Err(Error::Range(format!(
            "start_row {} > end_row {}",
            r.start_row, r.end_row
        )));
    }
    if r.start_col > r.end_col {
        return Err(Error::Range(format!(
            "start_col {} > end_col {}",
            r.start_col, r.end_col
        )));
    }
    if let Some(m) = m {
        if r.end_row >= m {
            return Err(Error::Range(format!(
                "rows {}..={} outside m = {m}",
                r.start_row, r.end_row
            )));
        }
    }
    if let Some(n) = n {
        if r.end_col >= n {
            return Err(Error::Range(format!(
                "cols {}..={} outside n = {n}",
                r.start_col, r.end_col
            )));
        }
    }
    Ok(())
}

fn word0(
    is_last: bool,
    primary: (&'static str, u32),
    ping: Op,
    pong: Op,
    secondary: (&'static str, u32),
    tag: u32,
) -> Result<u32> {
    Ok(is_last as u32
        | check(primary.0, primary.1, 4)? << 1
        | (ping as u32) << 8
        | (pong as u32) << 16
        | check(secondary.0, secondary.1, 4)? << 24
        | tag << 28)
}

impl Instruction {
    pub fn is_last(&self) -> bool {
        match *self {
            Instruction::Header { is_last, .. }
            | Instruction::IomLoad { is_last, .. }
            | Instruction::IomStore { is_last, .. }
            | Instruction::Fmu { is_last, .. }
            | Instruction::Cu { is_last, .. } => is_last,
        }
    }

    pub fn set_last(&mut self, v: bool) {
        match self {
            Instruction::Header { is_last, .. }
            | Instruction::IomLoad { is_last, .. }
            | Instruction::IomStore { is_last, .. }
            | Instruction::Fmu { is_last, .. }
            | Instruction::Cu { is_last, .. } => *is_last = v,
        }
    }

    pub fn word_len(&self) -> usize {
        match self {
            Instruction::Header { .. } | Instruction::Cu { .. } => 2,
            Instruction::Fmu { .. } => 4,
            Instruction::IomLoad { .. } | Instruction::IomStore { .. } => 5,
        }
    }

    /// The non-idle op of a ping/pong instruction and the buffer half it targets.
    pub fn active_op(&self) -> Option<(Op, usize)> {
        match *self {
            Instruction::Fmu {
                ping_op, pong_op, ..
            }
            | Instruction::Cu {
                ping_op, pong_op, ..
            } => {
                if ping_op != Op::Idle {
                    Some((ping_op, 0))
                } else if pong_op != Op::Idle {
                    Some((pong_op, 1))
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u32>) -> Result<()> {
        match *self {
            Instruction::Header {
                is_last,
                des_unit,
                valid_length,
            } => {
                out.push(word0(
                    is_last,
                    ("des_unit", des_unit.index),
                    Op::Idle,
                    Op::Idle,
                    ("des_unit.kind", des_unit.kind as u32),
                    TAG_HEADER,
                )?);
                out.push(valid_length);
            }
            Instruction::IomLoad {
                is_last,
                ddr_addr,
                des_fmu,
                m,
                n,
                range,
            }
            | Instruction::IomStore {
                is_last,
                ddr_addr,
                src_fmu: des_fmu,
                m,
                n,
                range,
            } => {
                let tag = if matches!(self, Instruction::IomLoad { .. }) {
                    TAG_LOAD
                } else {
                    TAG_STORE
                };
                let name = if tag == TAG_LOAD {
                    "des_fmu"
                } else {
                    "src_fmu"
                };
                check("m", m, 16)?;
                check("n", n, 16)?;
                check_range(&range, Some(m), Some(n))?;
                out.push(word0(
                    is_last,
                    (name, des_fmu),
                    Op::Idle,
                    Op::Idle,
                    ("reserved", 0),
                    tag,
                )?);
                out.push(ddr_addr);
                out.push(pack16(m, n, "m", "n")?);
                out.push(pack16(
                    range.start_row,
                    range.end_row,
                    "start_row",
                    "end_row",
                )?);
                out.push(pack16(
                    range.start_col,
                    range.end_col,
                    "start_col",
                    "end_col",
                )?);
            }
            Instruction::Fmu {
                is_last,
                ping_op,
                pong_op,
                src_cu,
                des_cu,
                count,
                range,
            } => {
                check_range(&range, None, None)?;
                out.push(word0(
                    is_last,
                    ("src_cu", src_cu),
                    ping_op,
                    pong_op,
                    ("des_cu", des_cu),
                    TAG_FMU,
                )?);
                out.push(count);
                out.push(pack16(
                    range.start_row,
                    range.end_row,
                    "start_row",
                    "end_row",
                )?);
                out.push(pack16(
                    range.start_col,
                    range.end_col,
                    "start_col",
                    "end_col",
                )?);
            }
            Instruction::Cu {
                is_last,
                ping_op,
                pong_op,
                src_fmu,
                des_fmu,
                count,
            } => {
                out.push(word0(
                    is_last,
                    ("src_fmu", src_fmu),
                    ping_op,
                    pong_op,
                    ("des_fmu", des_fmu),
                    TAG_CU,
                )?);
                out.push(count);
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u32>> {
        let mut v = Vec::with_capacity(self.word_len());
        self.encode_into(&mut v)?;
        Ok(v)
    }

    /// Decodes one instruction from the front of `words`, returning it and its length.
    pub fn decode(words: &[u32]) -> Result<(Instruction, usize)> {
        let w0 = *words
            .first()
            .ok_or_else(|| Error::Decode("empty word stream".into()))?;
        let is_last = w0 & 1 == 1;
        let primary = (w0 >> 1) & 0xF;
        let ping = (w0 >> 8) & 0xFF;
        let pong = (w0 >> 16) & 0xFF;
        let secondary = (w0 >> 24) & 0xF;
        let tag = w0 >> 28;
        if w0 & 0xE0 != 0 {
            return Err(Error::Decode(format!("reserved bits set in {w0:#010x}")));
        }
        let need = match tag {
            TAG_HEADER | TAG_CU => 2,
            TAG_FMU => 4,
            TAG_LOAD | TAG_STORE => 5,
            _ => return Err(Error::Decode(format!("unknown variant tag {tag}"))),
        };
        if words.len() < need {
            return Err(Error::Decode(format!(
                "truncated instruction: need {need} words, have {}",
                words.len()
            )));
        }
        let lo = |w: u32| w & 0xFFFF;
        let hi = |w: u32| w >> 16;
        let no_ops = |what: &str| -> Result<()> {
            if ping != 0 || pong != 0 {
                return Err(Error::Decode(format!("{what} carries ping/pong ops")));
            }
            Ok(())
        };
        let instr = match tag {
            TAG_HEADER => {
                no_ops("header")?;
                Instruction::Header {
                    is_last,
                    des_unit: UnitRef {
                        kind: UnitKind::from_code(secondary)?,
                        index: primary,
                    },
                    valid_length: words[1],
                }
            }
            TAG_LOAD | TAG_STORE => {
                no_ops("IOM instruction")?;
                if secondary != 0 {
                    return Err(Error::Decode("IOM instruction sets secondary unit".into()));
                }
                let range = Range2 {
                    start_row: lo(words[3]),
                    end_row: hi(words[3]),
                    start_col: lo(words[4]),
                    end_col: hi(words[4]),
                };
                let (m, n) = (lo(words[2]), hi(words[2]));
                if tag == TAG_LOAD {
                    Instruction::IomLoad {
                        is_last,
                        ddr_addr: words[1],
                        des_fmu: primary,
                        m,
                        n,
                        range,
                    }
                } else {
                    Instruction::IomStore {
                        is_last,
                        ddr_addr: words[1],
                        src_fmu: primary,
                        m,
                        n,
                        range,
                    }
                }
            }
            TAG_FMU => Instruction::Fmu {
                is_last,
                ping_op: Op::from_code(ping)?,
                pong_op: Op::from_code(pong)?,
                src_cu: primary,
                des_cu: secondary,
                count: words[1],
                range: Range2 {
                    start_row: lo(words[2]),
                    end_row: hi(words[2]),
                    start_col: lo(words[3]),
                    end_col: hi(words[3]),
                },
            },
            _ => Instruction::Cu {
                is_last,
                ping_op: Op::from_code(ping)?,
                pong_op: Op::from_code(pong)?,
                src_fmu: primary,
                des_fmu: secondary,
                count: words[1],
            },
        };
        Ok((instr, need))
    }
}

pub fn encode(instr: &Instruction) -> Result<Vec<u32>> {
    instr.encode()
}

pub fn decode(words: &[u32]) -> Result<Instruction> {
    let (i, used) = Instruction::decode(words)?;
    if used != words.len() {
        return Err(Error::Decode(format!(
            "{} trailing words",
            words.len() - used
        )));
    }
    Ok(i)
}

pub fn encode_stream(instrs: &[Instruction]) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for i in instrs {
        i.encode_into(&mut out)?;
    }
    Ok(out)
}

pub fn decode_stream(mut words: &[u32]) -> Result<Vec<Instruction>> {
    let mut out = Vec::new();
    while !words.is_empty() {
        let (i, used) = Instruction::decode(words)?;
        out.push(i);
        words = &words[used..];
    }
    Ok(out)
}

/// Flexible loop bounds and datatype carried by a CU `COMPUTE` count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComputeParams {
    pub tile: TileShape,
    pub dtype: DType,
    pub static_kernel: bool,
}

impl ComputeParams {
    pub fn pack(&self) -> Result<u32> {
        let t = self.tile;
        Ok(check("tile.ai", t.ai as u32, 8)?
            | check("tile.ak", t.ak as u32, 8)? << 8
            | check("tile.aj", t.aj as u32, 8)? << 16
            | self.dtype.code() << 24
            | (self.static_kernel as u32) << 26)
    }

    pub fn unpack(count: u32) -> Result<Self> {
        let dtype = DType::from_code((count >> 24) & 3)
            .ok_or_else(|| Error::Decode(format!("bad dtype code in compute count {count:#x}")))?;
        let tile = TileShape::new(
            (count & 0xFF) as usize,
            ((count >> 8) & 0xFF) as usize,
            ((count >> 16) & 0xFF) as usize,
        );
        if tile.ai == 0 || tile.ak == 0 || tile.aj == 0 || count >> 27 != 0 {
            return Err(Error::Decode(format!("bad compute count {count:#x}")));
        }
        Ok(Self {
            tile,
            dtype,
            static_kernel: (count >> 26) & 1 == 1,
        })
    }
}

/// Dispatch record for one layer: its header group and the layers it waits for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDispatch {
    pub layer: usize,
    pub headers: usize,
    pub preds: Vec<usize>,
}

/// Header stream, per-unit streams, and the dispatch control table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub headers: Vec<Instruction>,
    pub streams: BTreeMap<UnitRef, Vec<Instruction>>,
    pub control: Vec<LayerDispatch>,
}

const SECTION_HEADER: u8 = 4;
const SECTION_CONTROL: u8 = 5;

impl Program {
    pub fn total_words(&self) -> usize {
        self.streams.values().flatten().map(|i| i.word_len()).sum()
    }

    pub fn header_words(&self) -> usize {
        self.headers
            .iter()
            .map(|h| match h {
                Instruction::Header { valid_length, .. } => *valid_length as usize,
                _ => 0,
            })
            .sum()
    }

    fn control_words(&self) -> Result<Vec<u32>> {
        let mut w = vec![self.control.len() as u32];
        for d in &self.control {
            w.push(d.layer as u32);
            w.push(d.headers as u32);
            w.push(d.preds.len() as u32);
            w.extend(d.preds.iter().map(|&p| p as u32));
        }
        Ok(w)
    }

    fn parse_control(words: &[u32]) -> Result<Vec<LayerDispatch>> {
        let bad = || Error::Decode("truncated control section".into());
        let mut it = words.iter().copied();
        let n = it.next().ok_or_else(bad)?;
        let mut out = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let layer = it.next().ok_or_else(bad)? as usize;
            let headers = it.next().ok_or_else(bad)? as usize;
            let np = it.next().ok_or_else(bad)?;
            let preds = (0..np)
                .map(|_| it.next().map(|p| p as usize).ok_or_else(bad))
                .collect::<Result<_>>()?;
            out.push(LayerDispatch {
                layer,
                headers,
                preds,
            });
        }
        if it.next().is_some() {
            return Err(Error::Decode("trailing words in control section".into()));
        }
        Ok(out)
    }

    /// Binary file: magic, version, three zero bytes, section count, section table of
    /// `(kind, index, 0u16, word offset, word count)`, then the little-endian words.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut sections: Vec<(u8, u8, Vec<u32>)> =
            vec![(SECTION_HEADER, 0, encode_stream(&self.headers)?)];
        for (u, s) in &self.streams {
            sections.push((u.kind as u8, u.index as u8, encode_stream(s)?));
        }
        sections.push((SECTION_CONTROL, 0, self.control_words()?));
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[VERSION, 0, 0, 0]);
        out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
        let mut offset = 0u32;
        for (kind, index, words) in &sections {
            out.extend_from_slice(&[*kind, *index, 0, 0]);
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(words.len() as u32).to_le_bytes());
            offset += words.len() as u32;
        }
        for (_, _, words) in &sections {
            for w in words {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Decode(m.to_string());
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("missing FILC magic"));
        }
        if bytes[4] != VERSION {
            return Err(Error::Decode(format!("unsupported version {}", bytes[4])));
        }
        let u32_at = |off: usize| -> Result<u32> {
            bytes
                .get(off..off + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| bad("truncated file"))
        };
        let n = u32_at(8)? as usize;
        let table_end = 12 + 12 * n;
        let payload = bytes
            .get(table_end..)
            .ok_or_else(|| bad("truncated section table"))?;
        if payload.len() % 4 != 0 {
            return Err(bad("payload is not whole words"));
        }
        let words: Vec<u32> = payload
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut prog = Program::default();
        let mut saw_header = false;
        let mut saw_control = false;
        for s in 0..n {
            let base = 12 + 12 * s;
            let (kind, index) = (bytes[base], bytes[base + 1]);
            let off = u32_at(base + 4)? as usize;
            let len = u32_at(base + 8)? as usize;
            let body = words
                .get(off..off + len)
                .ok_or_else(|| bad("section outside payload"))?;
            match kind {
                SECTION_HEADER => {
                    prog.headers = decode_stream(body)?;
                    saw_header = true;
                }
                SECTION_CONTROL => {
                    prog.control = Self::parse_control(body)?;
                    saw_control = true;
                }
                k => {
                    let unit = UnitRef {
                        kind: UnitKind::from_code(k as u32)?,
                        index: index as u32,
                    };
                    prog.streams.insert(unit, decode_stream(body)?);
                }
            }
        }
        if !saw_header || !saw_control {
            return Err(bad("missing header or control section"));
        }
        Ok(prog)
    }

    /// Checks the structural invariants: stream terminators and header word accounting.
    pub fn check(&self) -> Result<()> {
        for (u, s) in &self.streams {
            if s.last().is_none_or(|i| !i.is_last()) {
                return Err(Error::Generation(format!(
                    "stream {u} does not end with is_last"
                )));
            }
            if s[..s.len() - 1].iter().any(|i| i.is_last()) {
                return Err(Error::Generation(format!(
                    "stream {u} has is_last before its end"
                )));
            }
        }
        if self.header_words() != self.total_words() {
            return Err(Error::Generation(format!(
                "headers cover {} words, streams hold {}",
                self.header_words(),
                self.total_words()
            )));
        }
        if self.control.iter().map(|c| c.headers).sum::<usize>() != self.headers.len() {
            return Err(Error::Generation(
                "control table does not cover every header".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_only_fmu_is_bit_zero() {
        let i = Instruction::Fmu {
            is_last: true,
            ping_op: Op::Idle,
            pong_op: Op::Idle,
            src_cu: 0,
            des_cu: 0,
            count: 0,
            range: Range2::default(),
        };
        assert_eq!(i.encode().unwrap(), vec![1, 0, 0, 0]);
    }

    #[test]
    fn row_past_matrix_is_rejected() {
        let i = Instruction::IomLoad {
            is_last: false,
            ddr_addr: 0,
            des_fmu: 0,
            m: 256,
            n: 256,
            range: Range2 {
                start_row: 300,
                end_row: 300,
                start_col: 0,
                end_col: 0,
            },
        };
        assert!(matches!(i.encode(), Err(Error::Range(_))));
    }

    #[test]
    fn field_overflow_names_field() {
        let i = Instruction::Cu {
            is_last: false,
            ping_op: Op::Compute,
            pong_op: Op::Idle,
            src_fmu: 16,
            des_fmu: 0,
            count: 1,
        };
        match i.encode() {
            Err(Error::Encode { field, width, .. }) => assert_eq!((field, width), ("src_fmu", 4)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn compute_params_round_trip() {
        let p = ComputeParams {
            tile: TileShape::new(16, 4, 4),
            dtype: DType::Int8,
            static_kernel: true,
        };
        assert_eq!(ComputeParams::unpack(p.pack().unwrap()).unwrap(), p);
    }
}
