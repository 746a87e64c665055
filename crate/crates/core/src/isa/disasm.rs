//! Text dump of a program and its inverse.

use std::fmt::Write as _;

use super::{Instruction, LayerDispatch, Op, Program, Range2, UnitKind, UnitRef};
use crate::error::{Error, Result};

fn range_text(r: &Range2) -> String {
    format!(
        "rows={}..{} cols={}..{}",
        r.start_row, r.end_row, r.start_col, r.end_col
    )
}

pub fn instruction_text(i: &Instruction) -> String {
    let last = i.is_last() as u8;
    match i {
        Instruction::Header {
            des_unit,
            valid_length,
            ..
        } => {
            format!("HEADER last={last} unit={des_unit} len={valid_length}")
        }
        Instruction::IomLoad {
            ddr_addr,
            des_fmu,
            m,
            n,
            range,
            ..
        } => format!(
            "LOAD last={last} addr={ddr_addr:#x} fmu={des_fmu} m={m} n={n} {}",
            range_text(range)
        ),
        Instruction::IomStore {
            ddr_addr,
            src_fmu,
            m,
            n,
            range,
            ..
        } => format!(
            "STORE last={last} addr={ddr_addr:#x} fmu={src_fmu} m={m} n={n} {}",
            range_text(range)
        ),
        Instruction::Fmu {
            ping_op,
            pong_op,
            src_cu,
            des_cu,
            count,
            range,
            ..
        } => format!(
            "FMU last={last} ping={} pong={} src_cu={src_cu} des_cu={des_cu} count={count} {}",
            ping_op.name(),
            pong_op.name(),
            range_text(range)
        ),
        Instruction::Cu {
            ping_op,
            pong_op,
            src_fmu,
            des_fmu,
            count,
            ..
        } => format!(
            "CU last={last} ping={} pong={} src_fmu={src_fmu} des_fmu={des_fmu} count={count:#x}",
            ping_op.name(),
            pong_op.name()
        ),
    }
}

pub fn disassemble(p: &Program) -> String {
    let mut s = String::new();
    s.push_str(".headers\n");
    for h in &p.headers {
        let _ = writeln!(s, "  {}", instruction_text(h));
    }
    for (u, stream) in &p.streams {
        let _ = writeln!(s, ".stream {u}");
        for i in stream {
            let _ = writeln!(s, "  {}", instruction_text(i));
        }
    }
    s.push_str(".control\n");
    for d in &p.control {
        let preds: Vec<String> = d.preds.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(
            s,
            "  LAYER {} headers={} preds=[{}]",
            d.layer,
            d.headers,
            preds.join(",")
        );
    }
    s
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num(line: usize, s: &str) -> Result<u32> {
    let r = match s.strip_prefix("0x") {
        Some(h) => u32::from_str_radix(h, 16),
        None => s.parse(),
    };
    r.map_err(|_| perr(line, format!("bad number `{s}`")))
}

fn parse_unit(line: usize, s: &str) -> Result<UnitRef> {
    for kind in UnitKind::ALL {
        if let Some(rest) = s.strip_prefix(kind.name()) {
            return Ok(UnitRef {
                kind,
                index: parse_num(line, rest)?,
            });
        }
    }
    Err(perr(line, format!("bad unit `{s}`")))
}

struct Fields<'a> {
    line: usize,
    kv: Vec<(&'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn new(line: usize, toks: &[&'a str]) -> Result<Self> {
        let kv = toks
            .iter()
            .map(|t| {
                t.split_once('=')
                    .ok_or_else(|| perr(line, format!("expected key=value, got `{t}`")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { line, kv })
    }

    fn get(&self, key: &str) -> Result<&'a str> {
        self.kv
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| perr(self.line, format!("missing field `{key}`")))
    }

    fn num(&self, key: &str) -> Result<u32> {
        parse_num(self.line, self.get(key)?)
    }

    fn op(&self, key: &str) -> Result<Op> {
        let v = self.get(key)?;
        Op::from_name(v).ok_or_else(|| perr(self.line, format!("unknown op `{v}`")))
    }

    fn span(&self, key: &str) -> Result<(u32, u32)> {
        let v = self.get(key)?;
        let (a, b) = v
            .split_once("..")
            .ok_or_else(|| perr(self.line, format!("bad range `{v}`")))?;
        Ok((parse_num(self.line, a)?, parse_num(self.line, b)?))
    }

    fn range(&self) -> Result<Range2> {
        let (start_row, end_row) = self.span("rows")?;
        let (start_col, end_col) = self.span("cols")?;
        Ok(Range2 {
            start_row,
            end_row,
            start_col,
            end_col,
        })
    }
}

pub fn parse_instruction(line: usize, text: &str) -> Result<Instruction> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let (&head, rest) = toks
        .split_first()
        .ok_or_else(|| perr(line, "empty instruction"))?;
    let f = Fields::new(line, rest)?;
    let is_last = f.num("last")? == 1;
    Ok(match head {
        "HEADER" => Instruction::Header {
            is_last,
            des_unit: parse_unit(line, f.get("unit")?)?,
            valid_length: f.num("len")?,
        },
        "LOAD" => Instruction::IomLoad {
            is_last,
            ddr_addr: f.num("addr")?,
            des_fmu: f.num("fmu")?,
            m: f.num("m")?,
            n: f.num("n")?,
            range: f.range()?,
        },
        "STORE" => Instruction::IomStore {
            is_last,
            ddr_addr: f.num("addr")?,
            src_fmu: f.num("fmu")?,
            m: f.num("m")?,
            n: f.num("n")?,
            range: f.range()?,
        },
        "FMU" => Instruction::Fmu {
            is_last,
            ping_op: f.op("ping")?,
            pong_op: f.op("pong")?,
            src_cu: f.num("src_cu")?,
            des_cu: f.num("des_cu")?,
            count: f.num("count")?,
            range: f.range()?,
        },
        "CU" => Instruction::Cu {
            is_last,
            ping_op: f.op("ping")?,
            pong_op: f.op("pong")?,
            src_fmu: f.num("src_fmu")?,
            des_fmu: f.num("des_fmu")?,
            count: f.num("count")?,
        },
        other => return Err(perr(line, format!("unknown mnemonic `{other}`"))),
    })
}

pub fn parse_disassembly(text: &str) -> Result<Program> {
    enum Sec {
        None,
        Headers,
        Stream(UnitRef),
        Control,
    }
    let mut p = Program::default();
    let mut sec = Sec::None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(dir) = t.strip_prefix('.') {
            sec = match dir.split_whitespace().collect::<Vec<_>>()[..] {
                ["headers"] => Sec::Headers,
                ["control"] => Sec::Control,
                ["stream", u] => {
                    let u = parse_unit(line, u)?;
                    p.streams.entry(u).or_default();
                    Sec::Stream(u)
                }
                _ => return Err(perr(line, format!("unknown directive `{t}`"))),
            };
            continue;
        }
        match sec {
            Sec::None => return Err(perr(line, "instruction outside a section")),
            Sec::Headers => p.headers.push(parse_instruction(line, t)?),
            Sec::Stream(u) => p
                .streams
                .get_mut(&u)
                .expect("entry created")
                .push(parse_instruction(line, t)?),
            Sec::Control => {
                let toks: Vec<&str> = t.split_whitespace().collect();
                let ["LAYER", id, rest @ ..] = &toks[..] else {
                    return Err(perr(line, "expected LAYER record"));
                };
                let f = Fields::new(line, rest)?;
                let preds = f
                    .get("preds")?
                    .trim_start_matches('[')
                    .trim_end_matches(']')
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num(line, s).map(|x| x as usize))
                    .collect::<Result<_>>()?;
                p.control.push(LayerDispatch {
                    layer: parse_num(line, id)? as usize,
                    headers: f.num("headers")? as usize,
                    preds,
                });
            }
        }
    }
    Ok(p)
}
