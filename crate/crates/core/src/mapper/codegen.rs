//! Lowering a planned loop nest to per-tile assembly.
//!
//! The emitted program uses the canonical DRAM layout ([`canonical_manifest`]):
//! tensors packed in name order at container granularity, plus a `__consts`
//! region when the nest multiplies or adds literal scalars. Serial loops
//! that do not index the output become assembly `for` macros; loops that
//! select accumulator slots are unrolled so every wordline address is a
//! literal.
//!
//! Loads are emitted per CRAM iteration (the vector axis must be
//! unit-stride in DRAM within each CRAM's lane range); operands shared by
//! every tile ride a single `load_bcast`. Scalars flow through the
//! register file and lower to `mul_const`/`add_const`. Reduction loops
//! bound to the CRAM level accumulate per-CRAM partials and finish with a
//! `reduce_tile`.

use super::ir::{Body, BodyOp, Factor, LoopNest, MapError, TensorRead};
use super::plan::{
    distribute_inter_tile, distribute_intra_tile, AllocationPlan, BufKind, BufferPlan, MapOptions,
    SerialLoop, TileAssignment,
};
use super::schedule::{Level, Organized, Schedule};
use crate::config::ChipConfig;
use crate::isa::Precision;
use crate::memory::Manifest;
use std::collections::BTreeMap;
use std::fmt::Write;

/// Everything `map` produces: the program text, the plan (with its
/// ledger), and the canonical region layout it assumes.
#[derive(Debug)]
pub struct MapResult {
    pub asm: String,
    pub plan: AllocationPlan,
    pub assignment: TileAssignment,
    pub manifest: Manifest,
    pub consts: Vec<i64>,
}

/// Deterministic DRAM layout for a nest: regions in tensor-name order,
/// each aligned to its container size, with literal constants appended.
pub fn canonical_manifest(nest: &LoopNest) -> (Manifest, Vec<i64>) {
    let mut m = Manifest::default();
    let mut off = 0u64;
    for (name, t) in &nest.tensors {
        let cb = t.prec.container_bytes() as u64;
        off = off.div_ceil(cb) * cb;
        m.insert(name, off, t.prec, t.elements());
        off += t.elements() * cb;
    }
    let consts = literal_consts(nest);
    if !consts.is_empty() {
        off = off.div_ceil(4) * 4;
        m.insert("__consts", off, CONST_PREC, consts.len() as u64);
    }
    (m, consts)
}

const CONST_PREC: Precision = Precision {
    bits: 32,
    signed: true,
};

pub fn literal_consts(nest: &LoopNest) -> Vec<i64> {
    nest.body
        .factors
        .iter()
        .filter_map(|f| match f {
            Factor::Lit(v) => Some(*v),
            _ => None,
        })
        .collect()
}

/// Full pipeline: organize, distribute, allocate, lower.
pub fn map_nest(
    nest: &LoopNest,
    schedule: &Schedule,
    cfg: &ChipConfig,
    opts: &MapOptions,
) -> Result<MapResult, MapError> {
    let org = super::schedule::organize(nest, schedule)?;
    let assignment = distribute_inter_tile(&org, cfg);
    let plan = distribute_intra_tile(nest, &org, &assignment, cfg, opts)?;
    codegen(nest, &org, &plan, &assignment, cfg)
}

/// Lowers one planned tiling to assembly.
pub fn codegen(
    nest: &LoopNest,
    org: &Organized,
    plan: &AllocationPlan,
    assignment: &TileAssignment,
    cfg: &ChipConfig,
) -> Result<MapResult, MapError> {
    let (manifest, consts) = canonical_manifest(nest);
    let mut g = Gen {
        nest,
        org,
        plan,
        assignment,
        cfg,
        manifest: &manifest,
        out: String::new(),
        indent: 0,
        zero_row: plan.high_water, // one scratch row above every buffer
        uniform_bcast: {
            let counts: Vec<usize> = assignment
                .per_tile
                .iter()
                .map(Vec::len)
                .filter(|&n| n > 0)
                .collect();
            counts.windows(2).all(|w| w[0] == w[1])
        },
    };
    if g.zero_row as usize >= cfg.wordlines {
        return Err(MapError::Infeasible(
            "no spare wordline left for the zero row".into(),
        ));
    }
    g.emit_regions();
    for tile in 0..cfg.num_tiles() {
        if assignment.per_tile[tile].is_empty() {
            continue;
        }
        g.line(&format!(".tile {tile}"));
        for pass in 0..assignment.per_tile[tile].len() {
            g.emit_pass(tile, pass)?;
        }
        g.line("halt");
    }
    Ok(MapResult {
        asm: g.out,
        plan: plan.clone(),
        assignment: assignment.clone(),
        manifest,
        consts,
    })
}

/// The value environment while walking the loop structure: unrolled loops
/// bind constants, `for`-macro loops bind their own names symbolically.
#[derive(Debug, Clone, Default)]
struct Env {
    consts: BTreeMap<String, u64>,
    symbolic: Vec<String>,
}

/// A folded affine expression: constant + sum of var*coefficient terms,
/// printable as assembly operand text.
#[derive(Debug, Clone, Default)]
struct Affine {
    konst: i64,
    terms: BTreeMap<String, i64>,
}

impl Affine {
    fn constant(v: i64) -> Self {
        Affine {
            konst: v,
            terms: BTreeMap::new(),
        }
    }

    fn add_term(&mut self, var: &str, coeff: i64) {
        if coeff != 0 {
            *self.terms.entry(var.to_string()).or_insert(0) += coeff;
        }
    }

    fn scale(mut self, f: i64) -> Self {
        self.konst *= f;
        for v in self.terms.values_mut() {
            *v *= f;
        }
        self.terms.retain(|_, &mut c| c != 0);
        self
    }

    fn plus(mut self, other: &Affine) -> Self {
        self.konst += other.konst;
        for (k, v) in &other.terms {
            *self.terms.entry(k.clone()).or_insert(0) += v;
        }
        self.terms.retain(|_, &mut c| c != 0);
        self
    }

    fn render(&self) -> String {
        let mut s = self.konst.to_string();
        for (v, c) in &self.terms {
            if *c == 1 {
                write!(s, " + {v}").unwrap();
            } else {
                write!(s, " + {v}*{c}").unwrap();
            }
        }
        s
    }
}

struct Gen<'a> {
    nest: &'a LoopNest,
    org: &'a Organized,
    plan: &'a AllocationPlan,
    assignment: &'a TileAssignment,
    cfg: &'a ChipConfig,
    manifest: &'a Manifest,
    out: String,
    indent: usize,
    zero_row: u32,
    uniform_bcast: bool,
}

impl<'a> Gen<'a> {
    fn line(&mut self, text: &str) {
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn emit_regions(&mut self) {
        let regions = self.manifest.regions.clone();
        for (name, r) in regions {
            let bytes = r.byte_len().unwrap();
            self.line(&format!(".region {name} {} {bytes}", r.offset));
        }
    }

    fn out_buffer(&self) -> &BufferPlan {
        self.plan.output()
    }

    /// Serial loops that pick accumulator slots are unrolled.
    fn unrolled(&self, l: &SerialLoop) -> bool {
        read_uses(&self.nest.body.out, &l.origin)
    }

    fn emit_pass(&mut self, tile: usize, pass: usize) -> Result<(), MapError> {
        let mut env = Env::default();
        // tile-bound loop values are constants for this pass
        for (name, &v) in self
            .assignment
            .loops
            .iter()
            .zip(&self.assignment.per_tile[tile][pass])
        {
            env.consts.insert(name.clone(), v);
        }
        // constant-zero scratch row
        let z = self.zero_row;
        self.line(&format!("xor {z}, {z}, {z}, u1"));
        self.walk(0, &mut env)?;
        Ok(())
    }

    /// Recursive walk over the serial loop order, emitting loads at buffer
    /// placements, the innermost body, and stores on the way out.
    fn walk(&mut self, depth: usize, env: &mut Env) -> Result<(), MapError> {
        // buffers placed at this depth load before the next loop opens
        let placed: Vec<usize> = (0..self.plan.buffers.len())
            .filter(|&i| {
                self.plan.buffers[i].placement == depth
                    && self.plan.buffers[i].kind != BufKind::Output
            })
            .collect();
        for i in placed {
            let buf = self.plan.buffers[i].clone();
            if buf.kind == BufKind::LaneVector {
                self.emit_vector_load(&buf, env)?;
            } else if buf.kind == BufKind::PerCramScalar {
                self.emit_shuffle_load(&buf, env)?;
            }
            // RF scalars load right before each consumption instead
        }
        if self.out_buffer().placement == depth {
            self.emit_acc_init(env)?;
        }
        if depth == self.plan.serial.len() {
            self.emit_body(env)?;
        } else {
            let l = self.plan.serial[depth].clone();
            if l.extent == 1 {
                env.consts.insert(l.name.clone(), 0);
                self.walk(depth + 1, env)?;
                env.consts.remove(&l.name);
            } else if self.unrolled(&l) {
                for v in 0..l.extent {
                    env.consts.insert(l.name.clone(), v);
                    self.walk(depth + 1, env)?;
                }
                env.consts.remove(&l.name);
            } else {
                self.line(&format!("for {} 0 {} {{", l.name, l.extent));
                self.indent += 1;
                env.symbolic.push(l.name.clone());
                self.walk(depth + 1, env)?;
                env.symbolic.pop();
                self.indent -= 1;
                self.line("}");
            }
        }
        if self.out_buffer().placement == depth {
            self.emit_output_store(env)?;
        }
        Ok(())
    }

    // ------------------------------------------------------ addressing

    /// Contribution of one original loop variable, split across its
    /// organized parts: constants fold, symbolic serial parts stay terms.
    fn var_value(&self, origin: &str, env: &Env, cram_tuple: &BTreeMap<String, u64>) -> Affine {
        let mut a = Affine::default();
        for part in self.org.parts_of(origin) {
            match part.level {
                Level::Tile => {
                    let v = env.consts[&part.name];
                    a.konst += (v * part.stride) as i64;
                }
                Level::Bitline => {
                    // lane zero; the vector axis is handled by `size`
                }
                Level::Cram => {
                    // parallel portion comes from the cram tuple; the
                    // serialized remainder is a serial loop named .serial
                    if let Some(&v) = cram_tuple.get(&part.name) {
                        a.konst += (v * part.stride) as i64;
                    }
                    let serial_name = format!("{}.serial", part.name);
                    self.add_loop_term(&serial_name, env, &mut a);
                }
                Level::Serial => {
                    self.add_loop_term(&part.name, env, &mut a);
                }
            }
        }
        a
    }

    fn add_loop_term(&self, name: &str, env: &Env, a: &mut Affine) {
        let Some(sl) = self.plan.serial.iter().find(|l| l.name == name) else {
            return;
        };
        if let Some(&v) = env.consts.get(name) {
            a.konst += (v * sl.stride) as i64;
        } else {
            a.add_term(name, sl.stride as i64);
        }
    }

    /// Byte address of a read's element at lane 0 of one cram iteration.
    fn element_addr(
        &self,
        r: &TensorRead,
        env: &Env,
        cram_tuple: &BTreeMap<String, u64>,
    ) -> Affine {
        let decl = &self.nest.tensors[&r.tensor];
        let region = self.manifest.regions[&r.tensor].clone();
        let mut lin = Affine::default();
        for (dim, idx) in decl.shape.iter().zip(&r.indices) {
            let mut dim_a = Affine::constant(idx.offset);
            for v in &idx.vars {
                dim_a = dim_a.plus(&self.var_value(v, env, cram_tuple));
            }
            lin = lin.scale(*dim as i64).plus(&dim_a);
        }
        lin.scale(decl.prec.container_bytes() as i64)
            .plus(&Affine::constant(region.offset as i64))
    }

    /// Checks the vector axis is unit-stride in DRAM for this read and
    /// returns the lane extent.
    fn lane_extent(&self, r: &TensorRead) -> Result<u64, MapError> {
        let bitline = self.org.at(Level::Bitline)[0];
        let decl = &self.nest.tensors[&r.tensor];
        // element stride of the dim carrying the bitline origin
        let mut stride = 1u64;
        let mut found = None;
        for (d, idx) in r.indices.iter().enumerate().rev() {
            if idx.vars.iter().any(|v| v == &bitline.origin) {
                found = Some(d);
                break;
            }
        }
        let Some(d) = found else {
            return Err(MapError::BadAccess(format!(
                "`{}` is lane-indexed without the vector axis",
                r.tensor
            )));
        };
        for dim in &decl.shape[d + 1..] {
            stride *= dim;
        }
        if stride != 1 {
            return Err(MapError::BadAccess(format!(
                "vector axis of `{}` has element stride {stride}; repack the tensor \
                 so the bitline loop walks the innermost dimension",
                r.tensor
            )));
        }
        Ok(bitline.extent)
    }

    /// Every (cram index, folded values) pair of the cram-parallel space.
    fn cram_tuples(&self) -> Vec<(usize, BTreeMap<String, u64>)> {
        let cram_loops = self.org.at(Level::Cram);
        let factors: Vec<u64> = cram_loops
            .iter()
            .map(|l| {
                self.plan
                    .tiling
                    .factors
                    .iter()
                    .find(|(n, _)| n == &l.name)
                    .map(|&(_, f)| f)
                    .unwrap_or(1)
            })
            .collect();
        let total: u64 = factors.iter().product();
        (0..total)
            .map(|i| {
                let mut tuple = BTreeMap::new();
                let mut rest = i;
                for (l, &f) in cram_loops.iter().zip(&factors).rev() {
                    tuple.insert(l.name.clone(), rest % f);
                    rest /= f;
                }
                (i as usize, tuple)
            })
            .collect()
    }

    fn flat(&self, cram: usize, row: u32) -> u32 {
        (cram * self.cfg.wordlines) as u32 + row
    }

    // ----------------------------------------------------------- loads

    fn read_of(&self, tensor: &str) -> &TensorRead {
        self.nest
            .body
            .factors
            .iter()
            .find_map(|f| match f {
                Factor::Read(r) if r.tensor == tensor => Some(r),
                _ => None,
            })
            .expect("read exists")
    }

    fn emit_vector_load(&mut self, buf: &BufferPlan, env: &Env) -> Result<(), MapError> {
        let r = self.read_of(&buf.tensor).clone();
        let lanes = self.lane_extent(&r)?;
        let p = buf.precision();
        let use_bcast = buf.broadcast && self.uniform_bcast;
        for (cram, tuple) in self.cram_tuples() {
            let addr = self.element_addr(&r, env, &tuple).render();
            let dst = self.flat(cram, buf.base());
            let op = if use_bcast { "load_bcast" } else { "load" };
            self.line(&format!("{op} {dst}, {addr}, {lanes}, {p}"));
        }
        Ok(())
    }

    /// One value per cram, replicated over bitlines through the shuffle
    /// path: a single broadcast whose chunks land one per CRAM.
    fn emit_shuffle_load(&mut self, buf: &BufferPlan, env: &Env) -> Result<(), MapError> {
        let r = self.read_of(&buf.tensor).clone();
        let tuples = self.cram_tuples();
        let chunkable = tuples.len() > 1;
        if !chunkable {
            return Err(MapError::BadAccess(format!(
                "per-cram scalar `{}` without cram parallelism",
                buf.tensor
            )));
        }
        // consecutive cram iterations must read consecutive elements
        let base = self.element_addr(&r, env, &tuples[0].1);
        let next = self.element_addr(&r, env, &tuples[1].1);
        let decl = &self.nest.tensors[&r.tensor];
        let stride = next.konst - base.konst;
        if stride != decl.prec.container_bytes() as i64 || next.terms != base.terms {
            return Err(MapError::BadAccess(format!(
                "per-cram scalar `{}` is not unit-stride across cram iterations",
                buf.tensor
            )));
        }
        let p = buf.precision();
        self.line(&format!(
            "load_bcast {}, {}, {}, {p}, shf={}",
            buf.base(),
            base.render(),
            tuples.len(),
            p.bits
        ));
        Ok(())
    }

    // ------------------------------------------------------------ body

    fn emit_acc_init(&mut self, _env: &Env) -> Result<(), MapError> {
        let out = self.out_buffer().clone();
        if !self.nest.body.reduction {
            return Ok(()); // computed directly, no accumulation state
        }
        for slot in 0..out.slots {
            for (row, len, _off) in slot_slices(&out, slot) {
                self.line(&format!("xor {row}, {row}, {row}, u{len}"));
            }
        }
        Ok(())
    }

    fn emit_body(&mut self, env: &Env) -> Result<(), MapError> {
        let body = self.nest.body.clone();
        if body.reduction {
            self.emit_reduction_step(&body, env)
        } else {
            self.emit_elementwise(&body, env)
        }
    }

    /// Operand classification for the innermost arithmetic.
    fn operand(&self, f: &Factor) -> Operand {
        match f {
            Factor::Lit(v) => Operand::Lit(*v),
            Factor::Read(r) => {
                let buf = self.plan.buffer(&r.tensor);
                match buf.kind {
                    BufKind::Scalar => Operand::Rf(r.tensor.clone()),
                    _ => Operand::Rows(r.tensor.clone()),
                }
            }
        }
    }

    /// `mul_const`/`add_const` need the constant staged in the RF first.
    fn stage_rf(&mut self, op: &Operand, env: &Env) -> Result<Precision, MapError> {
        match op {
            Operand::Lit(v) => {
                let idx = literal_consts(self.nest)
                    .iter()
                    .position(|&c| c == *v)
                    .unwrap() as u64;
                let region = self.manifest.regions["__consts"].clone();
                let addr = region.offset + idx * CONST_PREC.container_bytes() as u64;
                self.line(&format!("load_rf {addr}, {CONST_PREC}"));
                Ok(CONST_PREC)
            }
            Operand::Rf(tensor) => {
                let r = self.read_of(tensor).clone();
                let addr = self.element_addr(&r, env, &BTreeMap::new()).render();
                let p = self.nest.tensors[tensor].prec;
                self.line(&format!("load_rf {addr}, {p}"));
                Ok(p)
            }
            Operand::Rows(_) => unreachable!(),
        }
    }

    /// One reduction step: product into the strip, then a carry-chained
    /// accumulate into the (possibly fragmented) slot.
    fn emit_reduction_step(&mut self, body: &Body, env: &Env) -> Result<(), MapError> {
        let out = self.out_buffer().clone();
        let acc_bits = out.bits as u32;
        let pr_mult = (self.plan.product_bits as u32).min(acc_bits) as u8;
        let prod_p = Precision::new(pr_mult, self.plan.product_signed);
        let strip = self.plan.strip_base;
        if body.factors.len() > 2 {
            return Err(MapError::BadAccess(
                "more than two factors in a reduction is unsupported".into(),
            ));
        }
        let ops: Vec<Operand> = body.factors.iter().map(|f| self.operand(f)).collect();
        let rows: Vec<&Operand> = ops.iter().filter(|o| matches!(o, Operand::Rows(_))).collect();
        match rows.len() {
            1 => {
                let Operand::Rows(vec_t) = rows[0] else { unreachable!() };
                let vec_buf = self.plan.buffer(vec_t).clone();
                let other = ops
                    .iter()
                    .find(|o| !matches!(o, Operand::Rows(_)))
                    .cloned()
                    .unwrap_or(Operand::Lit(1));
                let p_const = self.stage_rf(&other, env)?;
                self.line(&format!(
                    "mul_const {strip}, {prod_p}, {}, {}, 0, {p_const}",
                    vec_buf.base(),
                    vec_buf.precision(),
                ));
            }
            2 => {
                let (Operand::Rows(t1), Operand::Rows(t2)) = (rows[0], rows[1]) else {
                    unreachable!()
                };
                let b1 = self.plan.buffer(t1).clone();
                let b2 = self.plan.buffer(t2).clone();
                self.line(&format!(
                    "mult {strip}, {prod_p}, {}, {}, {}, {}",
                    b1.base(),
                    b1.precision(),
                    b2.base(),
                    b2.precision(),
                ));
            }
            0 => {
                return Err(MapError::BadAccess(
                    "a reduction needs one lane-vector operand".into(),
                ))
            }
            _ => unreachable!(),
        }
        // acc[slot] += strip
        let slot = self.current_slot(&out, env);
        self.emit_sliced_accumulate(&out, slot, strip, prod_p)?;
        Ok(())
    }

    /// Accumulator slot selected by the current unrolled loop values.
    fn current_slot(&self, out: &BufferPlan, env: &Env) -> u64 {
        let mut slot = 0u64;
        for l in &self.plan.serial[out.placement..] {
            if read_uses(&self.nest.body.out, &l.origin) && !l.reduction {
                let v = env.consts[&l.name];
                slot = slot * l.extent + v;
            }
        }
        slot
    }

    /// `acc += strip`, split at fragment boundaries with carry chaining;
    /// positions past the product read its sign row (or the zero row).
    fn emit_sliced_accumulate(
        &mut self,
        out: &BufferPlan,
        slot: u64,
        strip: u32,
        prod_p: Precision,
    ) -> Result<(), MapError> {
        let slices = slot_slices(out, slot);
        let mut first = true;
        for (row, len, off) in split_at(slices, prod_p.bits as u32) {
            let (src2, p2) = if off < prod_p.bits as u32 {
                (strip + off, Precision::new(len as u8, false))
            } else if prod_p.signed {
                (strip + prod_p.bits as u32 - 1, Precision::signed(1))
            } else {
                (self.zero_row, Precision::unsigned(1))
            };
            let pr = Precision::new(len as u8, false);
            let p1 = Precision::new(len as u8, false);
            let mut line = format!(
                "add {row}, {pr}, {row}, {p1}, {src2}, {p2}, {}",
                self.cfg.tile_width()
            );
            if !first {
                // continue the carry chain of the previous slice
                line.push_str(", cen");
            }
            self.line(&line);
            first = false;
        }
        Ok(())
    }

    fn emit_elementwise(&mut self, body: &Body, env: &Env) -> Result<(), MapError> {
        let out = self.out_buffer().clone();
        let out_p = out.precision();
        let ops: Vec<Operand> = body.factors.iter().map(|f| self.operand(f)).collect();
        let rows: Vec<String> = ops
            .iter()
            .filter_map(|o| match o {
                Operand::Rows(t) => Some(t.clone()),
                _ => None,
            })
            .collect();
        if rows.is_empty() {
            return Err(MapError::BadAccess(
                "an elementwise body needs a lane-vector operand".into(),
            ));
        }
        let first = self.plan.buffer(&rows[0]).clone();
        match (body.op, rows.len(), ops.len()) {
            (BodyOp::Add, 2, 2) => {
                let b2 = self.plan.buffer(&rows[1]).clone();
                self.line(&format!(
                    "add {}, {out_p}, {}, {}, {}, {}",
                    out.base(),
                    first.base(),
                    first.precision(),
                    b2.base(),
                    b2.precision(),
                ));
            }
            (BodyOp::Mul, 2, 2) => {
                let b2 = self.plan.buffer(&rows[1]).clone();
                let pr = Precision::new(
                    out_p
                        .bits
                        .min(first.precision().bits + b2.precision().bits),
                    out_p.signed,
                );
                self.line(&format!(
                    "mult {}, {pr}, {}, {}, {}, {}",
                    out.base(),
                    first.base(),
                    first.precision(),
                    b2.base(),
                    b2.precision(),
                ));
                self.extend_rows(&out, pr)?;
            }
            (op, 1, 2) => {
                // one vector against an RF scalar or literal
                let other = ops
                    .iter()
                    .find(|o| !matches!(o, Operand::Rows(_)))
                    .cloned()
                    .unwrap();
                let p_const = self.stage_rf(&other, env)?;
                let mnemonic = match op {
                    BodyOp::Mul => "mul_const",
                    BodyOp::Add => "add_const",
                };
                let pr = match op {
                    BodyOp::Mul => Precision::new(
                        out_p.bits.min(first.precision().bits + p_const.bits),
                        out_p.signed,
                    ),
                    BodyOp::Add => out_p,
                };
                self.line(&format!(
                    "{mnemonic} {}, {pr}, {}, {}, 0, {p_const}",
                    out.base(),
                    first.base(),
                    first.precision(),
                ));
                if op == BodyOp::Mul {
                    self.extend_rows(&out, pr)?;
                }
            }
            (BodyOp::Add, n, m) if n == m => {
                // fold a + b + c ... in place
                let b2 = self.plan.buffer(&rows[1]).clone();
                self.line(&format!(
                    "add {}, {out_p}, {}, {}, {}, {}",
                    out.base(),
                    first.base(),
                    first.precision(),
                    b2.base(),
                    b2.precision(),
                ));
                for t in &rows[2..] {
                    let b = self.plan.buffer(t).clone();
                    self.line(&format!(
                        "add {}, {out_p}, {}, {out_p}, {}, {}",
                        out.base(),
                        out.base(),
                        b.base(),
                        b.precision(),
                    ));
                }
            }
            _ => {
                return Err(MapError::BadAccess(
                    "unsupported elementwise operand combination".into(),
                ))
            }
        }
        Ok(())
    }

    /// Sign- or zero-extends output rows `[from.bits, out.bits)` after a
    /// multiply narrower than the stored width.
    fn extend_rows(&mut self, out: &BufferPlan, from: Precision) -> Result<(), MapError> {
        if out.bits <= from.bits {
            return Ok(());
        }
        let src = if from.signed {
            out.base() + from.bits as u32 - 1
        } else {
            self.zero_row
        };
        for t in from.bits as u32..out.bits as u32 {
            let row = out.base() + t;
            self.line(&format!("or {row}, {src}, {src}, u1"));
        }
        Ok(())
    }

    // ------------------------------------------------------------ store

    fn emit_output_store(&mut self, env: &mut Env) -> Result<(), MapError> {
        let out = self.out_buffer().clone();
        let out_read = self.nest.body.out.clone();
        let lanes = self.lane_extent(&out_read)?;
        let decl = self.nest.tensors[&out_read.tensor].prec;
        // cram-bound reduction: fold partials across CRAMs, store from CRAM 0
        if self.plan.reduce_levels > 0 {
            if out.bits as u32 + self.plan.reduce_levels > 64 {
                return Err(MapError::Infeasible(
                    "reduced output width exceeds 64 bits".into(),
                ));
            }
            let final_p = Precision::new(
                out.bits + self.plan.reduce_levels as u8,
                out.signed,
            );
            if final_p.container_bytes() != decl.container_bytes() {
                return Err(MapError::Infeasible(format!(
                    "reduced width {final_p} and declared output {decl} use different \
                     DRAM containers"
                )));
            }
            self.line(&format!(
                "reduce_tile {}, {final_p}, {}, {}, {}",
                self.plan.reduce_base,
                out.base(),
                out.precision(),
                self.plan.reduce_levels,
            ));
            let addr = self
                .element_addr(&out_read, env, &BTreeMap::new())
                .render();
            self.line(&format!(
                "store {addr}, {}, {lanes}, {final_p}",
                self.flat(0, self.plan.reduce_base),
            ));
            return Ok(());
        }
        let store_p = out.precision();
        if store_p.container_bytes() != decl.container_bytes() {
            return Err(MapError::Infeasible(format!(
                "adapted output width {store_p} and declared {decl} use different \
                 DRAM containers"
            )));
        }
        // walk the slot loops explicitly so each slot's address folds
        let slot_loops: Vec<SerialLoop> = self.plan.serial[out.placement..]
            .iter()
            .filter(|l| read_uses(&out_read, &l.origin) && !l.reduction)
            .cloned()
            .collect();
        let mut values = vec![0u64; slot_loops.len()];
        loop {
            for (l, &v) in slot_loops.iter().zip(&values) {
                env.consts.insert(l.name.clone(), v);
            }
            let slot = self.current_slot(&out, env);
            let src_row = self.defrag_slot(&out, slot)?;
            for (cram, tuple) in self.store_cram_tuples(&out_read) {
                let addr = self.element_addr(&out_read, env, &tuple).render();
                self.line(&format!(
                    "store {addr}, {}, {lanes}, {store_p}",
                    self.flat(cram, src_row),
                ));
            }
            // odometer over slot loops
            let mut i = slot_loops.len();
            loop {
                if i == 0 {
                    for l in &slot_loops {
                        env.consts.remove(&l.name);
                    }
                    return Ok(());
                }
                i -= 1;
                values[i] += 1;
                if values[i] < slot_loops[i].extent {
                    break;
                }
                values[i] = 0;
            }
        }
    }

    /// Stores dedupe cram iterations that do not index the output.
    fn store_cram_tuples(&self, out_read: &TensorRead) -> Vec<(usize, BTreeMap<String, u64>)> {
        self.cram_tuples()
            .into_iter()
            .filter(|(_, tuple)| {
                // keep only tuples whose non-indexing loops are at zero
                tuple.iter().all(|(name, &v)| {
                    let l = self.org.find(name).expect("cram loop");
                    v == 0 || read_uses(out_read, &l.origin)
                })
            })
            .collect()
    }

    /// A fragmented slot is copied into the strip before storing; a
    /// contiguous slot stores in place.
    fn defrag_slot(&mut self, out: &BufferPlan, slot: u64) -> Result<u32, MapError> {
        let slices = slot_slices(out, slot);
        if slices.len() == 1 {
            return Ok(slices[0].0);
        }
        let strip = self.plan.strip_base;
        for (row, len, off) in slices {
            self.line(&format!("or {}, {row}, {row}, u{len}", strip + off));
        }
        Ok(strip)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Operand {
    Rows(String),
    Rf(String),
    Lit(i64),
}

fn read_uses(r: &TensorRead, origin: &str) -> bool {
    r.indices
        .iter()
        .any(|i| i.vars.iter().any(|v| v == origin))
}

/// Wordline runs of one slot through the buffer's fragment list:
/// (start row, length, offset within the slot).
fn slot_slices(buf: &BufferPlan, slot: u64) -> Vec<(u32, u32, u32)> {
    let w = buf.bits as u32;
    let mut logical = (slot as u32) * w; // first logical row of the slot
    let mut remaining = w;
    let mut out = Vec::new();
    let mut off = 0u32;
    for &(start, len) in &buf.fragments {
        if remaining == 0 {
            break;
        }
        if logical >= len {
            logical -= len;
            continue;
        }
        let take = (len - logical).min(remaining);
        out.push((start + logical, take, off));
        off += take;
        remaining -= take;
        logical = 0;
    }
    assert_eq!(remaining, 0, "slot extends past the buffer");
    out
}

/// Further splits slices at an absolute offset boundary (the product
/// width, where the accumulate switches to extension bits).
fn split_at(slices: Vec<(u32, u32, u32)>, boundary: u32) -> Vec<(u32, u32, u32)> {
    let mut out = Vec::new();
    for (row, len, off) in slices {
        if off < boundary && off + len > boundary {
            let head = boundary - off;
            out.push((row, head, off));
            out.push((row + head, len - head, off + head));
        } else {
            out.push((row, len, off));
        }
    }
    out
}
