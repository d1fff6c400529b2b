//! The assembler: line-oriented text in, validated [`Program`] out.
//!
//! Grammar sketch (one statement per line, `#` starts a comment):
//!
//! ```text
//! .region in1 0 2048            # name, base byte address, size in bytes
//! .label acc 16                 # named constant usable in expressions
//! .tile all                     # or `.tile 3`; selects the target stream(s)
//! for j 0 4 {                   # constant-bound macro loop, expanded here
//!   load 0, in1 + j*64, 512, i8
//! }
//! mult 8, i6, 0, i8, 4, i8
//! store out, 8, 512, i16
//! halt
//! ```
//!
//! Under `.tile all` the symbol `TILE` evaluates to the id of the stream
//! being expanded, which is how one block expresses per-tile addresses.
//! Builtins: `NUM_TILES`, `NUM_CRAMS`, `NUM_BITLINES`, `NUM_WORDLINES`,
//! `TILE_WIDTH`. Precision tokens are `i1..i64` and `u1..u64`.

use super::precision::Precision;
use super::types::*;
use super::validate::{instruction_warnings, validate_program, IsaError};
use crate::config::ChipConfig;
use std::collections::BTreeMap;
use std::collections::HashMap;

/// A parsed program plus any advisory diagnostics raised on the way.
#[derive(Debug, Clone)]
pub struct ParseOutput {
    pub program: Program,
    pub warnings: Vec<String>,
}

pub fn parse_program(text: &str, cfg: &ChipConfig) -> Result<ParseOutput, IsaError> {
    let items = parse_items(text)?;
    let mut ex = Expander::new(cfg);
    ex.run(&items)?;
    let mut program = Program {
        streams: ex.streams,
        regions: ex.regions,
        labels: ex.labels,
    };
    for stream in program.streams.values_mut() {
        if stream.last() != Some(&Instruction::Halt) {
            stream.push(Instruction::Halt);
        }
    }
    validate_program(&program, cfg)?;
    Ok(ParseOutput {
        program,
        warnings: ex.warnings,
    })
}

// ---------------------------------------------------------------- lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(i64),
    Punct(char),
}

#[derive(Debug, Clone)]
struct SpannedTok {
    tok: Tok,
    col: usize,
}

fn lex_line(line: &str, lineno: usize) -> Result<Vec<SpannedTok>, IsaError> {
    let mut out = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let col = i + 1;
        if c.is_ascii_digit() {
            let start = i;
            let mut radix = 10;
            if c == '0' && i + 1 < bytes.len() && (bytes[i + 1] == b'x' || bytes[i + 1] == b'X') {
                radix = 16;
                i += 2;
            }
            while i < bytes.len() && (bytes[i] as char).is_ascii_alphanumeric() {
                i += 1;
            }
            let text = &line[start..i];
            let digits = if radix == 16 { &text[2..] } else { text };
            let v = i64::from_str_radix(digits, radix).map_err(|_| IsaError::Syntax {
                line: lineno,
                col,
                msg: format!("bad number `{text}`"),
            })?;
            out.push(SpannedTok { tok: Tok::Num(v), col });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' || c == '.' {
            let start = i;
            i += 1;
            while i < bytes.len() {
                let ch = bytes[i] as char;
                if ch.is_ascii_alphanumeric() || ch == '_' || ch == '.' {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(SpannedTok {
                tok: Tok::Ident(line[start..i].to_string()),
                col,
            });
            continue;
        }
        if "+-*/%(),{}=:".contains(c) {
            out.push(SpannedTok { tok: Tok::Punct(c), col });
            i += 1;
            continue;
        }
        return Err(IsaError::Syntax {
            line: lineno,
            col,
            msg: format!("unexpected character `{c}`"),
        });
    }
    Ok(out)
}

// ------------------------------------------------------------- expressions

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(i64),
    Sym(String),
    Bin(char, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
}

struct Cursor<'a> {
    toks: &'a [SpannedTok],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn col(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|s| s.col)
            .unwrap_or_else(|| self.toks.last().map(|s| s.col + 1).unwrap_or(1))
    }

    fn bump(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|s| &s.tok);
        self.pos += 1;
        t
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err(&self, msg: impl Into<String>) -> IsaError {
        IsaError::Syntax {
            line: self.line,
            col: self.col(),
            msg: msg.into(),
        }
    }
}

fn parse_expr(c: &mut Cursor) -> Result<Expr, IsaError> {
    let mut lhs = parse_term(c)?;
    while let Some(Tok::Punct(op @ ('+' | '-'))) = c.peek().cloned().as_ref() {
        let op = *op;
        c.bump();
        let rhs = parse_term(c)?;
        lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_term(c: &mut Cursor) -> Result<Expr, IsaError> {
    let mut lhs = parse_atom(c)?;
    while let Some(Tok::Punct(op @ ('*' | '/' | '%'))) = c.peek().cloned().as_ref() {
        let op = *op;
        c.bump();
        let rhs = parse_atom(c)?;
        lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_atom(c: &mut Cursor) -> Result<Expr, IsaError> {
    match c.peek().cloned() {
        Some(Tok::Num(v)) => {
            c.bump();
            Ok(Expr::Num(v))
        }
        Some(Tok::Ident(s)) => {
            c.bump();
            Ok(Expr::Sym(s))
        }
        Some(Tok::Punct('-')) => {
            c.bump();
            Ok(Expr::Neg(Box::new(parse_atom(c)?)))
        }
        Some(Tok::Punct('(')) => {
            c.bump();
            let e = parse_expr(c)?;
            if !c.eat_punct(')') {
                return Err(c.err("expected `)`"));
            }
            Ok(e)
        }
        _ => Err(c.err("expected expression")),
    }
}

fn eval(e: &Expr, env: &HashMap<String, i64>, line: usize) -> Result<i64, IsaError> {
    match e {
        Expr::Num(v) => Ok(*v),
        Expr::Sym(s) => env.get(s).copied().ok_or_else(|| IsaError::UndefinedLabel {
            line,
            name: s.clone(),
        }),
        Expr::Neg(x) => Ok(-eval(x, env, line)?),
        Expr::Bin(op, a, b) => {
            let a = eval(a, env, line)?;
            let b = eval(b, env, line)?;
            match op {
                '+' => Ok(a.wrapping_add(b)),
                '-' => Ok(a.wrapping_sub(b)),
                '*' => Ok(a.wrapping_mul(b)),
                '/' if b != 0 => Ok(a / b),
                '%' if b != 0 => Ok(a % b),
                _ => Err(IsaError::Syntax {
                    line,
                    col: 1,
                    msg: "division by zero in constant expression".into(),
                }),
            }
        }
    }
}

// ------------------------------------------------------------------- items

#[derive(Debug, Clone)]
enum Arg {
    Expr(Expr),
    Prec(Precision),
    Flag(String),
    KeyVal(String, Expr),
}

#[derive(Debug, Clone)]
enum TileSel {
    All,
    One(Expr),
}

#[derive(Debug, Clone)]
enum Item {
    Region {
        name: String,
        base: Expr,
        size: Expr,
        line: usize,
    },
    Label {
        name: String,
        value: Expr,
        line: usize,
    },
    Tile {
        sel: TileSel,
        line: usize,
    },
    For {
        var: String,
        start: Expr,
        end: Expr,
        body: Vec<Item>,
        line: usize,
    },
    Op {
        mnemonic: String,
        args: Vec<Arg>,
        line: usize,
    },
}

fn is_precision_token(s: &str) -> bool {
    s.parse::<Precision>().is_ok()
}

fn parse_args(c: &mut Cursor) -> Result<Vec<Arg>, IsaError> {
    let mut args = Vec::new();
    if c.peek().is_none() {
        return Ok(args);
    }
    loop {
        match c.peek().cloned() {
            Some(Tok::Ident(s)) if is_precision_token(&s) => {
                c.bump();
                args.push(Arg::Prec(s.parse().unwrap()));
            }
            Some(Tok::Ident(s))
                if matches!(s.as_str(), "cen" | "cst" | "raw" | "l" | "r" | "left" | "right") =>
            {
                c.bump();
                args.push(Arg::Flag(s));
            }
            Some(Tok::Ident(s)) if matches!(s.as_str(), "pred" | "shf" | "tag") => {
                c.bump();
                if !c.eat_punct('=') {
                    return Err(c.err(format!("expected `=` after `{s}`")));
                }
                let e = parse_expr(c)?;
                args.push(Arg::KeyVal(s, e));
            }
            _ => args.push(Arg::Expr(parse_expr(c)?)),
        }
        if !c.eat_punct(',') {
            break;
        }
    }
    if c.peek().is_some() {
        return Err(c.err("trailing tokens after operands"));
    }
    Ok(args)
}

fn parse_items(text: &str) -> Result<Vec<Item>, IsaError> {
    let mut stack: Vec<Vec<Item>> = vec![Vec::new()];
    let mut for_heads: Vec<(String, Expr, Expr, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let toks = lex_line(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut c = Cursor {
            toks: &toks,
            pos: 0,
            line: lineno,
        };
        let head = c.bump().cloned().unwrap();
        match head {
            Tok::Punct('}') => {
                if c.peek().is_some() {
                    return Err(c.err("`}` must stand alone"));
                }
                let body = stack.pop().ok_or_else(|| c.err("unmatched `}`"))?;
                let (var, start, end, line) = for_heads.pop().ok_or_else(|| c.err("unmatched `}`"))?;
                stack
                    .last_mut()
                    .unwrap()
                    .push(Item::For { var, start, end, body, line });
            }
            Tok::Ident(s) if s == "for" => {
                let var = match c.bump().cloned() {
                    Some(Tok::Ident(v)) => v,
                    _ => return Err(c.err("expected loop variable after `for`")),
                };
                let start = parse_expr(&mut c)?;
                let end = parse_expr(&mut c)?;
                if !c.eat_punct('{') || c.peek().is_some() {
                    return Err(c.err("expected `{` at end of `for` line"));
                }
                for_heads.push((var, start, end, lineno));
                stack.push(Vec::new());
            }
            Tok::Ident(s) if s == ".tile" => {
                let sel = match c.peek().cloned() {
                    Some(Tok::Ident(a)) if a == "all" => {
                        c.bump();
                        TileSel::All
                    }
                    _ => TileSel::One(parse_expr(&mut c)?),
                };
                if c.peek().is_some() {
                    return Err(c.err("trailing tokens after `.tile`"));
                }
                stack.last_mut().unwrap().push(Item::Tile { sel, line: lineno });
            }
            Tok::Ident(s) if s == ".region" => {
                let name = match c.bump().cloned() {
                    Some(Tok::Ident(n)) => n,
                    _ => return Err(c.err("expected region name")),
                };
                let base = parse_expr(&mut c)?;
                let size = parse_expr(&mut c)?;
                if c.peek().is_some() {
                    return Err(c.err("trailing tokens after `.region`"));
                }
                stack.last_mut().unwrap().push(Item::Region {
                    name,
                    base,
                    size,
                    line: lineno,
                });
            }
            Tok::Ident(s) if s == ".label" => {
                let name = match c.bump().cloned() {
                    Some(Tok::Ident(n)) => n,
                    _ => return Err(c.err("expected label name")),
                };
                let value = parse_expr(&mut c)?;
                if c.peek().is_some() {
                    return Err(c.err("trailing tokens after `.label`"));
                }
                stack.last_mut().unwrap().push(Item::Label {
                    name,
                    value,
                    line: lineno,
                });
            }
            Tok::Ident(mnemonic) => {
                let args = parse_args(&mut c)?;
                stack.last_mut().unwrap().push(Item::Op {
                    mnemonic,
                    args,
                    line: lineno,
                });
            }
            _ => {
                return Err(IsaError::Syntax {
                    line: lineno,
                    col: 1,
                    msg: "expected directive or mnemonic".into(),
                })
            }
        }
    }
    if stack.len() != 1 {
        let line = for_heads.last().map(|h| h.3).unwrap_or(0);
        return Err(IsaError::Syntax {
            line,
            col: 1,
            msg: "unclosed `for` block".into(),
        });
    }
    Ok(stack.pop().unwrap())
}

// -------------------------------------------------------------- expansion

struct Expander<'c> {
    cfg: &'c ChipConfig,
    env: HashMap<String, i64>,
    selection: Vec<TileId>,
    streams: BTreeMap<TileId, Vec<Instruction>>,
    regions: BTreeMap<String, Region>,
    labels: BTreeMap<String, i64>,
    warnings: Vec<String>,
}

impl<'c> Expander<'c> {
    fn new(cfg: &'c ChipConfig) -> Self {
        let mut env = HashMap::new();
        env.insert("NUM_TILES".into(), cfg.num_tiles() as i64);
        env.insert("NUM_CRAMS".into(), cfg.crams_per_tile as i64);
        env.insert("NUM_BITLINES".into(), cfg.bitlines as i64);
        env.insert("NUM_WORDLINES".into(), cfg.wordlines as i64);
        env.insert("TILE_WIDTH".into(), cfg.tile_width() as i64);
        Expander {
            cfg,
            env,
            selection: (0..cfg.num_tiles()).map(|t| TileId(t as u16)).collect(),
            streams: BTreeMap::new(),
            regions: BTreeMap::new(),
            labels: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    fn run(&mut self, items: &[Item]) -> Result<(), IsaError> {
        for item in items {
            self.item(item)?;
        }
        Ok(())
    }

    fn item(&mut self, item: &Item) -> Result<(), IsaError> {
        match item {
            Item::Region { name, base, size, line } => {
                let base = eval(base, &self.env, *line)? as u64;
                let size = eval(size, &self.env, *line)? as u64;
                self.regions.insert(name.clone(), Region { base, size_bytes: size });
                self.env.insert(name.clone(), base as i64);
            }
            Item::Label { name, value, line } => {
                let v = eval(value, &self.env, *line)?;
                self.labels.insert(name.clone(), v);
                self.env.insert(name.clone(), v);
            }
            Item::Tile { sel, line } => {
                self.selection = match sel {
                    TileSel::All => (0..self.cfg.num_tiles()).map(|t| TileId(t as u16)).collect(),
                    TileSel::One(e) => {
                        let id = eval(e, &self.env, *line)?;
                        if id < 0 || id as usize >= self.cfg.num_tiles() {
                            return Err(IsaError::Syntax {
                                line: *line,
                                col: 1,
                                msg: format!(
                                    ".tile {id} out of range (num_tiles = {})",
                                    self.cfg.num_tiles()
                                ),
                            });
                        }
                        vec![TileId(id as u16)]
                    }
                };
            }
            Item::For { var, start, end, body, line } => {
                let s = eval(start, &self.env, *line)?;
                let e = eval(end, &self.env, *line)?;
                let shadowed = self.env.get(var).copied();
                for v in s..e {
                    self.env.insert(var.clone(), v);
                    self.run(body)?;
                }
                match shadowed {
                    Some(old) => {
                        self.env.insert(var.clone(), old);
                    }
                    None => {
                        self.env.remove(var);
                    }
                }
            }
            Item::Op { mnemonic, args, line } => {
                for tidx in 0..self.selection.len() {
                    let tile = self.selection[tidx];
                    self.env.insert("TILE".into(), tile.0 as i64);
                    let instr = build_instruction(mnemonic, args, &self.env, *line, self.cfg)?;
                    for w in instruction_warnings(&instr) {
                        let w = format!("line {line}: {w}");
                        if !self.warnings.contains(&w) {
                            self.warnings.push(w);
                        }
                    }
                    self.streams.entry(tile).or_default().push(instr);
                }
                self.env.remove("TILE");
            }
        }
        Ok(())
    }
}

// ------------------------------------------------------ instruction build

struct Args<'a> {
    mnemonic: &'a str,
    args: &'a [Arg],
    pos: usize,
    env: &'a HashMap<String, i64>,
    line: usize,
}

impl<'a> Args<'a> {
    fn syntax(&self, msg: impl Into<String>) -> IsaError {
        IsaError::Syntax {
            line: self.line,
            col: 1,
            msg: format!("{}: {}", self.mnemonic, msg.into()),
        }
    }

    fn expr(&mut self, what: &str) -> Result<i64, IsaError> {
        match self.args.get(self.pos) {
            Some(Arg::Expr(e)) => {
                self.pos += 1;
                eval(e, self.env, self.line)
            }
            _ => Err(self.syntax(format!("expected {what}"))),
        }
    }

    fn uint(&mut self, what: &str) -> Result<u64, IsaError> {
        let v = self.expr(what)?;
        if v < 0 {
            return Err(self.syntax(format!("{what} must be non-negative, got {v}")));
        }
        Ok(v as u64)
    }

    fn addr(&mut self, what: &str) -> Result<u32, IsaError> {
        let v = self.uint(what)?;
        u32::try_from(v).map_err(|_| self.syntax(format!("{what} too large")))
    }

    fn prec(&mut self, what: &str) -> Result<Precision, IsaError> {
        match self.args.get(self.pos) {
            Some(Arg::Prec(p)) => {
                self.pos += 1;
                Ok(*p)
            }
            _ => Err(self.syntax(format!("expected precision token for {what}"))),
        }
    }

    fn dir(&mut self) -> Result<ShiftDir, IsaError> {
        match self.args.get(self.pos) {
            Some(Arg::Flag(f)) if f == "l" || f == "left" => {
                self.pos += 1;
                Ok(ShiftDir::Down)
            }
            Some(Arg::Flag(f)) if f == "r" || f == "right" => {
                self.pos += 1;
                Ok(ShiftDir::Up)
            }
            _ => Err(self.syntax("expected shift direction `l` or `r`")),
        }
    }

    fn tile(&mut self, what: &str, cfg: &ChipConfig) -> Result<TileId, IsaError> {
        let v = self.uint(what)?;
        if v >= cfg.num_tiles() as u64 {
            return Err(self.syntax(format!(
                "{what} = {v} out of range (num_tiles = {})",
                cfg.num_tiles()
            )));
        }
        Ok(TileId(v as u16))
    }

    /// Optional positional size expression; defaults to the full tile width.
    fn opt_size(&mut self, cfg: &ChipConfig) -> Result<u64, IsaError> {
        match self.args.get(self.pos) {
            Some(Arg::Expr(_)) => self.uint("size"),
            _ => Ok(cfg.tile_width() as u64),
        }
    }

    /// Consume trailing flag/key-value operands; returns (cen, cst, pred, tr, shf, tag).
    fn trailing(&mut self) -> Result<Trailing, IsaError> {
        let mut t = Trailing::default();
        while let Some(arg) = self.args.get(self.pos) {
            match arg {
                Arg::Flag(f) if f == "cen" => t.cen = true,
                Arg::Flag(f) if f == "cst" => t.cst = true,
                Arg::Flag(f) if f == "raw" => t.raw = true,
                Arg::KeyVal(k, e) if k == "pred" => {
                    t.pred = match e {
                        Expr::Sym(s) if s == "mask" => Pred::Mask,
                        Expr::Sym(s) if s == "carry" => Pred::Carry,
                        Expr::Sym(s) if s == "none" => Pred::None,
                        _ => return Err(self.syntax("pred must be mask, carry or none")),
                    }
                }
                Arg::KeyVal(k, e) if k == "shf" => {
                    let v = eval(e, self.env, self.line)?;
                    if v < 0 {
                        return Err(self.syntax("shf must be non-negative"));
                    }
                    t.shf = v as u32;
                }
                Arg::KeyVal(k, e) if k == "tag" => {
                    let v = eval(e, self.env, self.line)?;
                    t.tag = u16::try_from(v).map_err(|_| self.syntax("tag out of range"))?;
                }
                _ => return Err(self.syntax("unexpected operand")),
            }
            self.pos += 1;
        }
        Ok(t)
    }

    fn finish(&self) -> Result<(), IsaError> {
        if self.pos != self.args.len() {
            return Err(self.syntax("too many operands"));
        }
        Ok(())
    }
}

#[derive(Default)]
struct Trailing {
    cen: bool,
    cst: bool,
    raw: bool,
    pred: Pred,
    shf: u32,
    tag: u16,
}

fn build_instruction(
    mnemonic: &str,
    args: &[Arg],
    env: &HashMap<String, i64>,
    line: usize,
    cfg: &ChipConfig,
) -> Result<Instruction, IsaError> {
    let mut a = Args {
        mnemonic,
        args,
        pos: 0,
        env,
        line,
    };
    let instr = match mnemonic {
        "add" => {
            let dst = a.addr("dst")?;
            let pr = a.prec("result")?;
            let src1 = a.addr("src1")?;
            let p1 = a.prec("src1")?;
            let src2 = a.addr("src2")?;
            let p2 = a.prec("src2")?;
            let size = a.opt_size(cfg)?;
            let t = a.trailing()?;
            Instruction::Add {
                dst,
                pr,
                src1,
                p1,
                src2,
                p2,
                size,
                cen: t.cen,
                cst: t.cst,
                pred: t.pred,
            }
        }
        "mult" => {
            let dst = a.addr("dst")?;
            let pr = a.prec("result")?;
            let src1 = a.addr("src1")?;
            let p1 = a.prec("src1")?;
            let src2 = a.addr("src2")?;
            let p2 = a.prec("src2")?;
            let size = a.opt_size(cfg)?;
            Instruction::Mult {
                dst,
                pr,
                src1,
                p1,
                src2,
                p2,
                size,
            }
        }
        "and" | "or" | "xor" => {
            let kind = match mnemonic {
                "and" => LogicKind::And,
                "or" => LogicKind::Or,
                _ => LogicKind::Xor,
            };
            let dst = a.addr("dst")?;
            let src1 = a.addr("src1")?;
            let src2 = a.addr("src2")?;
            let p = a.prec("operand")?;
            let size = a.opt_size(cfg)?;
            let t = a.trailing()?;
            Instruction::Logic {
                kind,
                dst,
                src1,
                src2,
                p,
                size,
                pred: t.pred,
            }
        }
        "shift" => {
            let dst = a.addr("dst")?;
            let src = a.addr("src")?;
            let shamt = a.addr("shamt")?;
            let dir = a.dir()?;
            let p = a.prec("operand")?;
            Instruction::Shift {
                dst,
                src,
                shamt,
                dir,
                p,
            }
        }
        "reduce_cram" => {
            let dst = a.addr("dst")?;
            let pr_dst = a.prec("result")?;
            let src = a.addr("src")?;
            let pr_src = a.prec("src")?;
            let levels = a.addr("levels")?;
            let size = a.opt_size(cfg)?;
            Instruction::ReduceCram {
                dst,
                pr_dst,
                src,
                pr_src,
                levels,
                size,
            }
        }
        "reduce_tile" => {
            let dst = a.addr("dst")?;
            let pr_dst = a.prec("result")?;
            let src = a.addr("src")?;
            let pr_src = a.prec("src")?;
            let levels = a.addr("levels")?;
            Instruction::ReduceTile {
                dst,
                pr_dst,
                src,
                pr_src,
                levels,
            }
        }
        "mul_const" | "add_const" => {
            let dst = a.addr("dst")?;
            let pr = a.prec("result")?;
            let src = a.addr("src")?;
            let p_src = a.prec("src")?;
            let rf = a.uint("rf index")?;
            let rf = u8::try_from(rf).map_err(|_| a.syntax("rf index out of range"))?;
            let p_const = a.prec("constant")?;
            let size = a.opt_size(cfg)?;
            let t = a.trailing()?;
            if mnemonic == "mul_const" {
                Instruction::MulConst {
                    dst,
                    pr,
                    src,
                    p_src,
                    rf,
                    p_const,
                    size,
                    pred: t.pred,
                }
            } else {
                Instruction::AddConst {
                    dst,
                    pr,
                    src,
                    p_src,
                    rf,
                    p_const,
                    size,
                    pred: t.pred,
                }
            }
        }
        "set_mask" => {
            let src = a.addr("src")?;
            let size = a.opt_size(cfg)?;
            Instruction::SetMask { src, size }
        }
        "cram_tx_rx" => {
            let dst = TileAddr(a.addr("dst")?);
            let src = TileAddr(a.addr("src")?);
            let p = a.prec("operand")?;
            Instruction::CramTxRx { dst, src, p }
        }
        "cram_bcast" => {
            let dst = a.addr("dst")?;
            let src = TileAddr(a.addr("src")?);
            let p = a.prec("operand")?;
            Instruction::CramBcast { dst, src, p }
        }
        "tile_tx" => {
            let dst_tile = a.tile("dst tile", cfg)?;
            let src = TileAddr(a.addr("src")?);
            let size = a.uint("size")?;
            let p = a.prec("operand")?;
            Instruction::TileTx {
                dst_tile,
                src,
                size,
                p,
            }
        }
        "tile_rx" => {
            let src_tile = a.tile("src tile", cfg)?;
            let dst = TileAddr(a.addr("dst")?);
            let size = a.uint("size")?;
            let p = a.prec("operand")?;
            Instruction::TileRx {
                src_tile,
                dst,
                size,
                p,
            }
        }
        "tile_bcast" => {
            let dst = TileAddr(a.addr("dst")?);
            let src = TileAddr(a.addr("src")?);
            let size = a.uint("size")?;
            let p = a.prec("operand")?;
            let t = a.trailing()?;
            Instruction::TileBcast {
                dst,
                src,
                size,
                p,
                shf: t.shf,
            }
        }
        "load" => {
            let dst = TileAddr(a.addr("dst")?);
            let dram = a.uint("dram address")?;
            let size = a.uint("size")?;
            let p = a.prec("element")?;
            let t = a.trailing()?;
            Instruction::Load {
                dst,
                dram,
                size,
                p,
                tr: !t.raw,
            }
        }
        "load_bcast" => {
            let dst = TileAddr(a.addr("dst")?);
            let dram = a.uint("dram address")?;
            let size = a.uint("size")?;
            let p = a.prec("element")?;
            let t = a.trailing()?;
            Instruction::LoadBcast {
                dst,
                dram,
                size,
                p,
                tr: !t.raw,
                shf: t.shf,
            }
        }
        "store" => {
            let dram = a.uint("dram address")?;
            let src = TileAddr(a.addr("src")?);
            let size = a.uint("size")?;
            let p = a.prec("element")?;
            let t = a.trailing()?;
            Instruction::Store {
                dram,
                src,
                size,
                p,
                tr: !t.raw,
            }
        }
        "load_rf" => Instruction::LoadRf {
            dram: a.uint("dram address")?,
        },
        "store_rf" => Instruction::StoreRf {
            dram: a.uint("dram address")?,
        },
        "signal" => {
            let dst_tile = a.tile("dst tile", cfg)?;
            let t = a.trailing()?;
            Instruction::Signal {
                dst_tile,
                tag: t.tag,
            }
        }
        "wait" => {
            let src_tile = a.tile("src tile", cfg)?;
            let t = a.trailing()?;
            Instruction::Wait {
                src_tile,
                tag: t.tag,
            }
        }
        "halt" => Instruction::Halt,
        other => {
            return Err(IsaError::Syntax {
                line,
                col: 1,
                msg: format!("unknown mnemonic `{other}`"),
            })
        }
    };
    a.finish()?;
    Ok(instr)
}
