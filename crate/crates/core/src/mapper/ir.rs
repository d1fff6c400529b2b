//! The mapper's loop-nest input: tensor declarations, constant-extent
//! loops, and a single assignment with affine indices, plus the reference
//! interpreter that defines its semantics.
//!
//! Text form (one declaration per line, `#` comments):
//!
//! ```text
//! tensor a (64, 2048) i8
//! tensor x (64) i8
//! tensor y (2048) i24
//! loop i 2048
//! rloop k 64
//! y[i] = sum(i24(a[k, i]) * i24(x[k]))
//! ```
//!
//! Indices are sums of distinct loop variables plus an optional constant
//! (`in[i + j + 1]`); anything indirect is rejected. A body is either a
//! `sum(...)` over products or an elementwise chain of one operator.

use crate::isa::Precision;
use crate::memory::{DramImage, Manifest};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum MapError {
    #[error("nest line {line}: {msg}")]
    NestSyntax { line: usize, msg: String },
    #[error("schedule line {line}: {msg}")]
    ScheduleSyntax { line: usize, msg: String },
    #[error("infeasible mapping: {0}")]
    Infeasible(String),
    #[error("unsupported access pattern: {0}")]
    BadAccess(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorDecl {
    pub name: String,
    pub shape: Vec<u64>,
    pub prec: Precision,
}

impl TensorDecl {
    pub fn elements(&self) -> u64 {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopDecl {
    pub name: String,
    pub extent: u64,
    pub reduction: bool,
}

/// Affine index: the sum of distinct loop variables plus a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexExpr {
    pub vars: Vec<String>,
    pub offset: i64,
}

impl IndexExpr {
    pub fn eval(&self, env: &BTreeMap<String, u64>) -> i64 {
        self.vars.iter().map(|v| env[v] as i64).sum::<i64>() + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRead {
    pub tensor: String,
    pub indices: Vec<IndexExpr>,
    pub cast: Option<Precision>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Read(TensorRead),
    Lit(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyOp {
    Add,
    Mul,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub out: TensorRead,
    pub reduction: bool,
    pub op: BodyOp,
    pub factors: Vec<Factor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopNest {
    pub tensors: BTreeMap<String, TensorDecl>,
    pub loops: Vec<LoopDecl>,
    pub body: Body,
}

impl LoopNest {
    pub fn loop_decl(&self, name: &str) -> Option<&LoopDecl> {
        self.loops.iter().find(|l| l.name == name)
    }

    /// Declared width of the multiply/combine result before any
    /// optimization: the widest cast (or tensor precision) among factors.
    pub fn declared_op_precision(&self) -> Precision {
        let mut best = Precision::unsigned(1);
        for f in &self.body.factors {
            let p = match f {
                Factor::Read(r) => r.cast.unwrap_or(self.tensors[&r.tensor].prec),
                Factor::Lit(v) => {
                    let bits = (65 - v.unsigned_abs().leading_zeros()).clamp(1, 64);
                    Precision::new(bits as u8, *v < 0)
                }
            };
            if p.bits > best.bits || (p.bits == best.bits && p.signed) {
                best = Precision::new(p.bits, p.signed || best.signed);
            } else if p.signed && !best.signed {
                best = Precision::new(best.bits, true);
            }
        }
        best
    }

    pub fn out_precision(&self) -> Precision {
        self.tensors[&self.body.out.tensor].prec
    }

    /// Total reduction depth: the product of all reduction-loop extents.
    pub fn reduction_count(&self) -> u64 {
        self.loops
            .iter()
            .filter(|l| l.reduction)
            .map(|l| l.extent)
            .product()
    }
}

// --------------------------------------------------------------- parsing

pub fn parse_nest(text: &str) -> Result<LoopNest, MapError> {
    let mut tensors = BTreeMap::new();
    let mut loops: Vec<LoopDecl> = Vec::new();
    let mut body = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| MapError::NestSyntax { line: lineno, msg };
        if let Some(rest) = line.strip_prefix("tensor ") {
            let d = parse_tensor(rest).map_err(err)?;
            tensors.insert(d.name.clone(), d);
        } else if let Some(rest) = line.strip_prefix("rloop ") {
            loops.push(parse_loop(rest, true).map_err(err)?);
        } else if let Some(rest) = line.strip_prefix("loop ") {
            loops.push(parse_loop(rest, false).map_err(err)?);
        } else if line.contains('=') {
            if body.is_some() {
                return Err(err("only one assignment allowed".into()));
            }
            body = Some(parse_body(line).map_err(err)?);
        } else {
            return Err(err(format!("unrecognized line `{line}`")));
        }
    }
    let body = body.ok_or(MapError::NestSyntax {
        line: 0,
        msg: "missing assignment".into(),
    })?;
    let nest = LoopNest {
        tensors,
        loops,
        body,
    };
    check_nest(&nest)?;
    Ok(nest)
}

fn parse_tensor(rest: &str) -> Result<TensorDecl, String> {
    // name (d0, d1, ...) prec
    let open = rest.find('(').ok_or("expected `(` in tensor decl")?;
    let close = rest.find(')').ok_or("expected `)` in tensor decl")?;
    let name = rest[..open].trim().to_string();
    let dims: Result<Vec<u64>, _> = rest[open + 1..close]
        .split(',')
        .map(|d| d.trim().parse::<u64>())
        .collect();
    let shape = dims.map_err(|_| "bad dimension".to_string())?;
    if shape.iter().any(|&d| d == 0) {
        return Err("zero-extent dimension".into());
    }
    let prec: Precision = rest[close + 1..].trim().parse()?;
    if name.is_empty() {
        return Err("missing tensor name".into());
    }
    Ok(TensorDecl { name, shape, prec })
}

fn parse_loop(rest: &str, reduction: bool) -> Result<LoopDecl, String> {
    let mut parts = rest.split_whitespace();
    let name = parts.next().ok_or("missing loop name")?.to_string();
    let extent: u64 = parts
        .next()
        .ok_or("missing extent")?
        .parse()
        .map_err(|_| "extent must be a constant integer".to_string())?;
    if parts.next().is_some() {
        return Err("trailing tokens".into());
    }
    if extent == 0 {
        return Err("zero extent".into());
    }
    Ok(LoopDecl {
        name,
        extent,
        reduction,
    })
}

fn parse_body(line: &str) -> Result<Body, String> {
    let (lhs, rhs) = line.split_once('=').ok_or("expected `=`")?;
    let out = parse_read(lhs.trim())?;
    if out.cast.is_some() {
        return Err("no cast on the output".into());
    }
    let rhs = rhs.trim();
    let (reduction, inner) = match rhs.strip_prefix("sum(") {
        Some(rest) => {
            let rest = rest.strip_suffix(')').ok_or("unclosed sum(...)")?;
            (true, rest.trim())
        }
        None => (false, rhs),
    };
    // one operator kind chains the factors
    let (op, pieces): (BodyOp, Vec<&str>) = if inner.contains('*') {
        if split_top(inner, '+').len() > 1 {
            return Err("mixing + and * in one body is unsupported".into());
        }
        (BodyOp::Mul, split_top(inner, '*'))
    } else {
        (BodyOp::Add, split_top(inner, '+'))
    };
    let mut factors = Vec::new();
    for p in pieces {
        let p = p.trim();
        if let Ok(v) = p.parse::<i64>() {
            factors.push(Factor::Lit(v));
        } else {
            factors.push(Factor::Read(parse_read(p)?));
        }
    }
    if factors.is_empty() {
        return Err("empty body".into());
    }
    if reduction && op != BodyOp::Mul && factors.len() > 1 {
        return Err("reductions sum a product".into());
    }
    Ok(Body {
        out,
        reduction,
        op,
        factors,
    })
}

/// Splits on `sep` outside parentheses.
fn split_top(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth = depth.saturating_sub(1),
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn parse_read(s: &str) -> Result<TensorRead, String> {
    let s = s.trim();
    // optional cast: prec( read )
    if let Some(open) = s.find('(') {
        let head = &s[..open];
        if head.parse::<Precision>().is_ok() && s.ends_with(')') {
            let mut inner = parse_read(&s[open + 1..s.len() - 1])?;
            inner.cast = Some(head.parse().unwrap());
            return Ok(inner);
        }
    }
    let open = s.find('[').ok_or_else(|| format!("expected indexed read, got `{s}`"))?;
    if !s.ends_with(']') {
        return Err("unclosed index".into());
    }
    let tensor = s[..open].trim().to_string();
    let mut indices = Vec::new();
    for idx in split_top(&s[open + 1..s.len() - 1], ',') {
        let mut vars = Vec::new();
        let mut offset = 0i64;
        for term in idx.split('+') {
            let term = term.trim();
            if term.is_empty() {
                return Err("empty index term".into());
            }
            if let Ok(v) = term.parse::<i64>() {
                offset += v;
            } else if term.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.') {
                if vars.contains(&term.to_string()) {
                    return Err(format!("repeated variable `{term}` in one index"));
                }
                vars.push(term.to_string());
            } else {
                return Err(format!("index term `{term}` is not affine"));
            }
        }
        indices.push(IndexExpr { vars, offset });
    }
    Ok(TensorRead {
        tensor,
        indices,
        cast: None,
    })
}

fn check_nest(nest: &LoopNest) -> Result<(), MapError> {
    let chk = |line: usize, msg: String| MapError::NestSyntax { line, msg };
    let mut reads: Vec<&TensorRead> = vec![&nest.body.out];
    for f in &nest.body.factors {
        if let Factor::Read(r) = f {
            reads.push(r);
        }
    }
    for r in reads {
        let decl = nest
            .tensors
            .get(&r.tensor)
            .ok_or_else(|| chk(0, format!("undeclared tensor `{}`", r.tensor)))?;
        if decl.shape.len() != r.indices.len() {
            return Err(chk(
                0,
                format!(
                    "tensor `{}` has {} dims but is indexed with {}",
                    r.tensor,
                    decl.shape.len(),
                    r.indices.len()
                ),
            ));
        }
        for idx in &r.indices {
            for v in &idx.vars {
                if nest.loop_decl(v).is_none() {
                    return Err(chk(0, format!("index uses unknown loop `{v}`")));
                }
            }
        }
    }
    // reduction loops never index the output
    for idx in &nest.body.out.indices {
        for v in &idx.vars {
            if nest.loop_decl(v).map(|l| l.reduction) == Some(true) {
                return Err(chk(
                    0,
                    format!("reduction loop `{v}` may not index the output"),
                ));
            }
        }
    }
    if nest.body.reduction && !nest.loops.iter().any(|l| l.reduction) {
        return Err(chk(0, "sum(...) requires a reduction loop".into()));
    }
    Ok(())
}

// ----------------------------------------------------------- interpreter

/// Direct dense evaluation over a DRAM image whose manifest names a region
/// per tensor. This is the semantic ground truth generated code is checked
/// against: per-term values wrap at the declared op precision, the
/// accumulated result wraps at the output precision (power-of-two wrapping
/// makes the accumulation order irrelevant).
pub fn interpret(
    nest: &LoopNest,
    image: &DramImage,
    manifest: &Manifest,
) -> Result<Vec<i64>, crate::memory::MemoryError> {
    let out_decl = &nest.tensors[&nest.body.out.tensor];
    let op_prec = nest.declared_op_precision();
    let data_loops: Vec<&LoopDecl> = nest.loops.iter().filter(|l| !l.reduction).collect();
    let red_loops: Vec<&LoopDecl> = nest.loops.iter().filter(|l| l.reduction).collect();
    let mut inputs: BTreeMap<&str, Vec<i64>> = BTreeMap::new();
    for f in &nest.body.factors {
        if let Factor::Read(r) = f {
            let decl = &nest.tensors[&r.tensor];
            let region = manifest.get(&r.tensor)?;
            inputs.insert(
                &r.tensor,
                image.read_elements(region.offset, decl.prec, decl.elements() as usize),
            );
        }
    }
    let mut out = vec![0i64; out_decl.elements() as usize];
    let mut env: BTreeMap<String, u64> = BTreeMap::new();
    let mut data_iter = MultiIndex::new(&data_loops);
    while data_iter.next(&mut env) {
        let mut acc: i128 = 0;
        let mut red_iter = MultiIndex::new(&red_loops);
        let mut first = true;
        while red_iter.next(&mut env) {
            let mut term: i128 = match nest.body.op {
                BodyOp::Mul => 1,
                BodyOp::Add => 0,
            };
            for f in &nest.body.factors {
                let v: i128 = match f {
                    Factor::Lit(v) => *v as i128,
                    Factor::Read(r) => {
                        let decl = &nest.tensors[&r.tensor];
                        let lin = linearize(&decl.shape, &r.indices, &env);
                        inputs[r.tensor.as_str()][lin as usize] as i128
                    }
                };
                term = match nest.body.op {
                    BodyOp::Mul => term * v,
                    BodyOp::Add => term + v,
                };
            }
            acc += op_prec.wrap(term as i64) as i128;
            if !nest.body.reduction {
                debug_assert!(first);
            }
            first = false;
        }
        let _ = first;
        let lin = linearize(&out_decl.shape, &nest.body.out.indices, &env);
        out[lin as usize] = out_decl.prec.wrap(acc as i64);
    }
    Ok(out)
}

/// Row-major linear offset of a multi-dim access.
pub fn linearize(shape: &[u64], indices: &[IndexExpr], env: &BTreeMap<String, u64>) -> u64 {
    let mut lin = 0u64;
    for (dim, idx) in shape.iter().zip(indices) {
        let v = idx.eval(env);
        debug_assert!(v >= 0 && (v as u64) < *dim, "index {v} out of dim {dim}");
        lin = lin * dim + v as u64;
    }
    lin
}

/// Odometer over a list of loops, writing values into the shared env.
struct MultiIndex<'a> {
    loops: &'a [&'a LoopDecl],
    state: Vec<u64>,
    started: bool,
    done: bool,
}

impl<'a> MultiIndex<'a> {
    fn new(loops: &'a [&'a LoopDecl]) -> Self {
        MultiIndex {
            loops,
            state: vec![0; loops.len()],
            started: false,
            done: false,
        }
    }

    fn next(&mut self, env: &mut BTreeMap<String, u64>) -> bool {
        if self.done {
            return false;
        }
        if !self.started {
            self.started = true;
        } else {
            let mut i = self.loops.len();
            loop {
                if i == 0 {
                    self.done = true;
                    return false;
                }
                i -= 1;
                self.state[i] += 1;
                if self.state[i] < self.loops[i].extent {
                    break;
                }
                self.state[i] = 0;
            }
        }
        for (l, &v) in self.loops.iter().zip(&self.state) {
            env.insert(l.name.clone(), v);
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GEMV: &str = "\
tensor a (4, 8) i8
tensor x (4) i8
tensor y (8) i16
loop i 8
rloop k 4
y[i] = sum(i16(a[k, i]) * i16(x[k]))
";

    #[test]
    fn parses_and_checks_gemv_nest() {
        let nest = parse_nest(GEMV).unwrap();
        assert_eq!(nest.loops.len(), 2);
        assert!(nest.loops[1].reduction);
        assert!(nest.body.reduction);
        assert_eq!(nest.declared_op_precision(), Precision::signed(16));
        assert_eq!(nest.reduction_count(), 4);
    }

    #[test]
    fn rejects_reduction_indexed_output() {
        let bad = "\
tensor a (4) i8
tensor y (4) i8
rloop k 4
y[k] = sum(a[k])
";
        assert!(parse_nest(bad).is_err());
    }

    #[test]
    fn rejects_non_affine_index() {
        let bad = "\
tensor a (4, 4) i8
tensor y (4) i8
loop i 4
y[i] = a[i*2, i]
";
        assert!(parse_nest(bad).is_err());
    }

    #[test]
    fn interpreter_matches_hand_gemv() {
        let nest = parse_nest(GEMV).unwrap();
        let mut img = DramImage::new();
        let mut man = Manifest::default();
        let p8 = Precision::signed(8);
        let a: Vec<i64> = (0..32).map(|i| (i % 11) - 5).collect();
        let x: Vec<i64> = vec![2, -3, 1, 4];
        img.write_elements(0, p8, &a);
        img.write_elements(64, p8, &x);
        man.insert("a", 0, p8, 32);
        man.insert("x", 64, p8, 4);
        man.insert("y", 128, Precision::signed(16), 8);
        let out = interpret(&nest, &img, &man).unwrap();
        for i in 0..8usize {
            let mut want = 0i64;
            for k in 0..4usize {
                want += a[k * 8 + i] * x[k];
            }
            assert_eq!(out[i], want, "lane {i}");
        }
    }

    #[test]
    fn interpreter_wraps_at_declared_precisions() {
        // i4 accumulation wraps mid-stream exactly like hardware would
        let text = "\
tensor a (8) i4
tensor y (1) i4
loop o 1
rloop k 8
y[o] = sum(i4(a[k]) * 1)
";
        let nest = parse_nest(text).unwrap();
        let mut img = DramImage::new();
        let mut man = Manifest::default();
        let p4 = Precision::signed(4);
        let a = vec![7i64; 8]; // sum 56 wraps in i4
        img.write_elements(0, p4, &a);
        man.insert("a", 0, p4, 8);
        man.insert("y", 16, p4, 1);
        let out = interpret(&nest, &img, &man).unwrap();
        assert_eq!(out[0], p4.wrap(56));
    }

    #[test]
    fn elementwise_add_body() {
        let text = "\
tensor a (8) i8
tensor b (8) i8
tensor c (8) i8
loop i 8
c[i] = a[i] + b[i]
";
        let nest = parse_nest(text).unwrap();
        assert_eq!(nest.body.op, BodyOp::Add);
        assert!(!nest.body.reduction);
        let mut img = DramImage::new();
        let mut man = Manifest::default();
        let p8 = Precision::signed(8);
        img.write_elements(0, p8, &[100, 2, 3, 4, 5, 6, 7, 8]);
        img.write_elements(8, p8, &[100, 1, 1, 1, 1, 1, 1, 1]);
        man.insert("a", 0, p8, 8);
        man.insert("b", 8, p8, 8);
        man.insert("c", 16, p8, 8);
        let out = interpret(&nest, &img, &man).unwrap();
        assert_eq!(out[0], p8.wrap(200));
        assert_eq!(out[1], 3);
    }
}
