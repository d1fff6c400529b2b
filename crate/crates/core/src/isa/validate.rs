//! Static checking of instructions and programs against a [`ChipConfig`].
//!
//! Everything the simulator assumes about ranges is established here, so a
//! program that validates cleanly executes without range faults.

use super::precision::Precision;
use super::types::*;
use crate::config::ChipConfig;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidateError {
    #[error("{field} = {value} exceeds {bound} = {limit}")]
    OutOfRange {
        field: &'static str,
        value: u64,
        bound: &'static str,
        limit: u64,
    },
    #[error("operand/result overlap: {0}")]
    Overlap(String),
    #[error("illegal predication: {0}")]
    BadPred(String),
    #[error("width rule violated: {0}")]
    BadWidth(String),
    #[error("bad shuffle: {0}")]
    BadShuffle(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IsaError {
    #[error("line {line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: undefined label `{name}`")]
    UndefinedLabel { line: usize, name: String },
    #[error("{place}: {source}")]
    Invalid {
        place: String,
        #[source]
        source: ValidateError,
    },
}

/// Wordline ranges an instruction touches within each participating CRAM,
/// plus any scratch it reserves. Ranges are `(start, len)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Footprint {
    pub reads: Vec<(u32, u32)>,
    pub writes: Vec<(u32, u32)>,
    pub scratch: Vec<(u32, u32)>,
}

impl Footprint {
    /// Highest wordline touched, exclusive.
    pub fn high_water(&self) -> u32 {
        self.reads
            .iter()
            .chain(&self.writes)
            .chain(&self.scratch)
            .map(|&(s, l)| s + l)
            .max()
            .unwrap_or(0)
    }
}

fn overlaps(a: (u32, u32), b: (u32, u32)) -> bool {
    a.0 < b.0 + b.1 && b.0 < a.0 + a.1
}

fn check_wl_range(
    field: &'static str,
    start: u32,
    len: u32,
    cfg: &ChipConfig,
) -> Result<(), ValidateError> {
    let end = start as u64 + len as u64;
    if end > cfg.wordlines as u64 {
        return Err(ValidateError::OutOfRange {
            field,
            value: end,
            bound: "wordlines",
            limit: cfg.wordlines as u64,
        });
    }
    Ok(())
}

fn check_size(size: u64, cfg: &ChipConfig) -> Result<(), ValidateError> {
    if size > cfg.tile_width() as u64 {
        return Err(ValidateError::OutOfRange {
            field: "size",
            value: size,
            bound: "crams_per_tile * bitlines",
            limit: cfg.tile_width() as u64,
        });
    }
    Ok(())
}

fn check_tile(field: &'static str, t: TileId, cfg: &ChipConfig) -> Result<(), ValidateError> {
    if (t.0 as usize) >= cfg.num_tiles() {
        return Err(ValidateError::OutOfRange {
            field,
            value: t.0 as u64,
            bound: "num_tiles",
            limit: cfg.num_tiles() as u64,
        });
    }
    Ok(())
}

fn check_flat(
    field: &'static str,
    addr: TileAddr,
    rows: u32,
    elems: u64,
    cfg: &ChipConfig,
) -> Result<(), ValidateError> {
    let cram = addr.cram(cfg) as u64;
    let wl = addr.wordline(cfg) as u32;
    let span = elems.div_ceil(cfg.bitlines as u64).max(1);
    if cram + span > cfg.crams_per_tile as u64 {
        return Err(ValidateError::OutOfRange {
            field,
            value: cram + span,
            bound: "crams_per_tile",
            limit: cfg.crams_per_tile as u64,
        });
    }
    check_wl_range(field, wl, rows, cfg)
}

/// Wordline strip footprint of a reduction (partial, shifted copy, and the
/// next partial alternate in rotation).
pub fn reduce_strip_rows(pr_dst: Precision) -> u32 {
    3 * pr_dst.bits as u32
}

/// Checks every field of `instr` against `cfg` and returns the wordline
/// footprint the instruction touches in each participating CRAM.
pub fn validate_instruction(
    instr: &Instruction,
    cfg: &ChipConfig,
) -> Result<Footprint, ValidateError> {
    let mut fp = Footprint::default();
    match instr {
        Instruction::Add {
            dst,
            pr,
            src1,
            p1,
            src2,
            p2,
            size,
            cst,
            pred,
            ..
        } => {
            check_size(*size, cfg)?;
            let dlen = pr.bits as u32 + *cst as u32;
            let d = (*dst, dlen);
            let a = (*src1, p1.bits as u32);
            let b = (*src2, p2.bits as u32);
            check_wl_range("add.dst", d.0, d.1, cfg)?;
            check_wl_range("add.src1", a.0, a.1, cfg)?;
            check_wl_range("add.src2", b.0, b.1, cfg)?;
            if overlaps(d, a) && !(dst == src1 && (pr.bits <= p1.bits || !p1.signed)) {
                return Err(ValidateError::Overlap(
                    "add dst may alias only src1, and only when the result is \
                     no wider than src1 (or src1 is unsigned)"
                        .into(),
                ));
            }
            if overlaps(d, b) && !(dst == src2 && src1 == src2) {
                return Err(ValidateError::Overlap("add dst overlaps src2".into()));
            }
            if *pred == Pred::Carry {
                return Err(ValidateError::BadPred(
                    "add consumes the carry latch; predicate on mask instead".into(),
                ));
            }
            fp.reads = vec![a, b];
            fp.writes = vec![d];
        }
        Instruction::Mult {
            dst,
            pr,
            src1,
            p1,
            src2,
            p2,
            size,
        } => {
            check_size(*size, cfg)?;
            if pr.bits as u32 > p1.bits as u32 + p2.bits as u32 {
                return Err(ValidateError::BadWidth(format!(
                    "mult result {pr} wider than product of {p1} and {p2}"
                )));
            }
            let d = (*dst, pr.bits as u32);
            let scratch = (*dst + pr.bits as u32, pr.bits as u32);
            let a = (*src1, p1.bits as u32);
            let b = (*src2, p2.bits as u32);
            check_wl_range("mult.dst", d.0, d.1, cfg)?;
            check_wl_range("mult.scratch", scratch.0, scratch.1, cfg)?;
            check_wl_range("mult.src1", a.0, a.1, cfg)?;
            check_wl_range("mult.src2", b.0, b.1, cfg)?;
            for (r, name) in [(a, "src1"), (b, "src2")] {
                if overlaps(d, r) || overlaps(scratch, r) {
                    return Err(ValidateError::Overlap(format!(
                        "mult result/scratch overlaps {name}"
                    )));
                }
            }
            fp.reads = vec![a, b];
            fp.writes = vec![d];
            fp.scratch = vec![scratch];
        }
        Instruction::Logic {
            dst,
            src1,
            src2,
            p,
            size,
            ..
        } => {
            check_size(*size, cfg)?;
            let w = p.bits as u32;
            check_wl_range("logic.dst", *dst, w, cfg)?;
            check_wl_range("logic.src1", *src1, w, cfg)?;
            check_wl_range("logic.src2", *src2, w, cfg)?;
            for (s, name) in [(*src1, "src1"), (*src2, "src2")] {
                if overlaps((*dst, w), (s, w)) && *dst != s {
                    return Err(ValidateError::Overlap(format!(
                        "logic dst partially overlaps {name}"
                    )));
                }
            }
            fp.reads = vec![(*src1, w), (*src2, w)];
            fp.writes = vec![(*dst, w)];
        }
        Instruction::Shift { dst, src, p, .. } => {
            let w = p.bits as u32;
            check_wl_range("shift.dst", *dst, w, cfg)?;
            check_wl_range("shift.src", *src, w, cfg)?;
            if overlaps((*dst, w), (*src, w)) && dst != src {
                return Err(ValidateError::Overlap("shift dst partially overlaps src".into()));
            }
            fp.reads = vec![(*src, w)];
            fp.writes = vec![(*dst, w)];
        }
        Instruction::ReduceCram {
            dst,
            pr_dst,
            src,
            pr_src,
            levels,
            size,
        } => {
            check_size(*size, cfg)?;
            if !cfg.bitlines.is_power_of_two() || *levels > cfg.bitlines.trailing_zeros() {
                return Err(ValidateError::OutOfRange {
                    field: "levels",
                    value: *levels as u64,
                    bound: "log2(bitlines)",
                    limit: cfg.bitlines.trailing_zeros() as u64,
                });
            }
            if *size > 0 && !size.is_power_of_two() {
                return Err(ValidateError::BadWidth(format!(
                    "reduce_cram active element count {size} is not a power of two"
                )));
            }
            check_reduce_widths("reduce_cram", *pr_dst, *pr_src, *levels)?;
            let strips = (*dst, reduce_strip_rows(*pr_dst));
            check_wl_range("reduce_cram.dst", strips.0, strips.1, cfg)?;
            check_wl_range("reduce_cram.src", *src, pr_src.bits as u32, cfg)?;
            if overlaps(strips, (*src, pr_src.bits as u32)) {
                return Err(ValidateError::Overlap(
                    "reduce_cram working strips overlap src".into(),
                ));
            }
            fp.reads = vec![(*src, pr_src.bits as u32)];
            fp.writes = vec![(*dst, pr_dst.bits as u32)];
            fp.scratch = vec![(strips.0 + pr_dst.bits as u32, strips.1 - pr_dst.bits as u32)];
        }
        Instruction::ReduceTile {
            dst,
            pr_dst,
            src,
            pr_src,
            levels,
        } => {
            if !cfg.crams_per_tile.is_power_of_two() || *levels > cfg.crams_per_tile.trailing_zeros()
            {
                return Err(ValidateError::OutOfRange {
                    field: "levels",
                    value: *levels as u64,
                    bound: "log2(crams_per_tile)",
                    limit: cfg.crams_per_tile.trailing_zeros() as u64,
                });
            }
            check_reduce_widths("reduce_tile", *pr_dst, *pr_src, *levels)?;
            let strips = (*dst, reduce_strip_rows(*pr_dst));
            check_wl_range("reduce_tile.dst", strips.0, strips.1, cfg)?;
            check_wl_range("reduce_tile.src", *src, pr_src.bits as u32, cfg)?;
            if overlaps(strips, (*src, pr_src.bits as u32)) {
                return Err(ValidateError::Overlap(
                    "reduce_tile working strips overlap src".into(),
                ));
            }
            fp.reads = vec![(*src, pr_src.bits as u32)];
            fp.writes = vec![(*dst, pr_dst.bits as u32)];
            fp.scratch = vec![(strips.0 + pr_dst.bits as u32, strips.1 - pr_dst.bits as u32)];
        }
        Instruction::MulConst {
            dst,
            pr,
            src,
            p_src,
            rf,
            p_const,
            size,
            pred,
        } => {
            check_size(*size, cfg)?;
            check_rf(*rf, *p_const, cfg)?;
            if pr.bits as u32 > p_src.bits as u32 + p_const.bits as u32 {
                return Err(ValidateError::BadWidth(format!(
                    "mul_const result {pr} wider than product of {p_src} and {p_const}"
                )));
            }
            let d = (*dst, pr.bits as u32);
            let scratch = (*dst + pr.bits as u32, pr.bits as u32);
            check_wl_range("mul_const.dst", d.0, d.1, cfg)?;
            check_wl_range("mul_const.scratch", scratch.0, scratch.1, cfg)?;
            check_wl_range("mul_const.src", *src, p_src.bits as u32, cfg)?;
            if overlaps(d, (*src, p_src.bits as u32)) || overlaps(scratch, (*src, p_src.bits as u32))
            {
                return Err(ValidateError::Overlap(
                    "mul_const result/scratch overlaps src".into(),
                ));
            }
            match pred {
                Pred::None => {}
                Pred::Mask if !p_src.signed => {}
                Pred::Mask => {
                    return Err(ValidateError::BadPred(
                        "mul_const with a signed source consumes the mask latch".into(),
                    ))
                }
                Pred::Carry => {
                    return Err(ValidateError::BadPred(
                        "mul_const consumes the carry latch".into(),
                    ))
                }
            }
            fp.reads = vec![(*src, p_src.bits as u32)];
            fp.writes = vec![d];
            fp.scratch = vec![scratch];
        }
        Instruction::AddConst {
            dst,
            pr,
            src,
            p_src,
            rf,
            p_const,
            size,
            pred,
        } => {
            check_size(*size, cfg)?;
            check_rf(*rf, *p_const, cfg)?;
            let d = (*dst, pr.bits as u32);
            check_wl_range("add_const.dst", d.0, d.1, cfg)?;
            check_wl_range("add_const.src", *src, p_src.bits as u32, cfg)?;
            if overlaps(d, (*src, p_src.bits as u32))
                && !(dst == src && (pr.bits <= p_src.bits || !p_src.signed))
            {
                return Err(ValidateError::Overlap(
                    "add_const dst may alias src only when no wider than it".into(),
                ));
            }
            if *pred == Pred::Carry {
                return Err(ValidateError::BadPred(
                    "add_const consumes the carry latch".into(),
                ));
            }
            fp.reads = vec![(*src, p_src.bits as u32)];
            fp.writes = vec![d];
        }
        Instruction::SetMask { src, size } => {
            check_size(*size, cfg)?;
            check_wl_range("set_mask.src", *src, 1, cfg)?;
            fp.reads = vec![(*src, 1)];
        }
        Instruction::CramTxRx { dst, src, p } => {
            check_cram_addr("cram_tx_rx.dst", *dst, p.bits as u32, cfg)?;
            check_cram_addr("cram_tx_rx.src", *src, p.bits as u32, cfg)?;
            if dst.cram(cfg) == src.cram(cfg) {
                let d = (dst.wordline(cfg) as u32, p.bits as u32);
                let s = (src.wordline(cfg) as u32, p.bits as u32);
                if overlaps(d, s) && d != s {
                    return Err(ValidateError::Overlap(
                        "same-CRAM transfer with partially overlapping ranges".into(),
                    ));
                }
            }
            fp.reads = vec![(src.wordline(cfg) as u32, p.bits as u32)];
            fp.writes = vec![(dst.wordline(cfg) as u32, p.bits as u32)];
        }
        Instruction::CramBcast { dst, src, p } => {
            check_wl_range("cram_bcast.dst", *dst, p.bits as u32, cfg)?;
            check_cram_addr("cram_bcast.src", *src, p.bits as u32, cfg)?;
            fp.reads = vec![(src.wordline(cfg) as u32, p.bits as u32)];
            fp.writes = vec![(*dst, p.bits as u32)];
        }
        Instruction::TileTx {
            dst_tile,
            src,
            size,
            p,
        } => {
            check_tile("tile_tx.dst_tile", *dst_tile, cfg)?;
            check_size(*size, cfg)?;
            check_flat("tile_tx.src", *src, p.bits as u32, *size, cfg)?;
            fp.reads = vec![(src.wordline(cfg) as u32, p.bits as u32)];
        }
        Instruction::TileRx {
            src_tile,
            dst,
            size,
            p,
        } => {
            check_tile("tile_rx.src_tile", *src_tile, cfg)?;
            check_size(*size, cfg)?;
            check_flat("tile_rx.dst", *dst, p.bits as u32, *size, cfg)?;
            fp.writes = vec![(dst.wordline(cfg) as u32, p.bits as u32)];
        }
        Instruction::TileBcast {
            dst,
            src,
            size,
            p,
            shf,
        } => {
            check_size(*size, cfg)?;
            check_flat("tile_bcast.src", *src, p.bits as u32, *size, cfg)?;
            check_shuffle_dst("tile_bcast.dst", *dst, *size, *p, *shf, cfg)?;
            fp.reads = vec![(src.wordline(cfg) as u32, p.bits as u32)];
            fp.writes = vec![(dst.wordline(cfg) as u32, shuffle_rows(*p, *shf))];
        }
        Instruction::Load {
            dst, size, p, ..
        } => {
            check_size(*size, cfg)?;
            check_flat("load.dst", *dst, p.bits as u32, *size, cfg)?;
            fp.writes = vec![(dst.wordline(cfg) as u32, p.bits as u32)];
        }
        Instruction::LoadBcast {
            dst,
            size,
            p,
            tr,
            shf,
            ..
        } => {
            check_size(*size, cfg)?;
            if *shf > 0 && !tr {
                return Err(ValidateError::BadShuffle(
                    "shuffled broadcast requires a transposed transfer".into(),
                ));
            }
            check_flat("load_bcast.dst", *dst, p.bits as u32, *size, cfg)?;
            check_shuffle_dst("load_bcast.dst", *dst, *size, *p, *shf, cfg)?;
            fp.writes = vec![(dst.wordline(cfg) as u32, shuffle_rows(*p, *shf))];
        }
        Instruction::Store { src, size, p, .. } => {
            check_size(*size, cfg)?;
            check_flat("store.src", *src, p.bits as u32, *size, cfg)?;
            fp.reads = vec![(src.wordline(cfg) as u32, p.bits as u32)];
        }
        Instruction::LoadRf { .. } | Instruction::StoreRf { .. } | Instruction::Halt => {}
        Instruction::Signal { dst_tile, .. } => check_tile("signal.dst_tile", *dst_tile, cfg)?,
        Instruction::Wait { src_tile, .. } => check_tile("wait.src_tile", *src_tile, cfg)?,
    }
    Ok(fp)
}

fn shuffle_rows(p: Precision, shf: u32) -> u32 {
    if shf == 0 {
        p.bits as u32
    } else {
        shf
    }
}

fn check_reduce_widths(
    what: &str,
    pr_dst: Precision,
    pr_src: Precision,
    levels: u32,
) -> Result<(), ValidateError> {
    if pr_dst.bits as u32 != pr_src.bits as u32 + levels {
        return Err(ValidateError::BadWidth(format!(
            "{what} result must be src width + levels ({} + {levels}), got {}",
            pr_src.bits, pr_dst.bits
        )));
    }
    Ok(())
}

fn check_rf(rf: u8, p_const: Precision, cfg: &ChipConfig) -> Result<(), ValidateError> {
    if rf as usize >= cfg.rf_regs {
        return Err(ValidateError::OutOfRange {
            field: "rf",
            value: rf as u64,
            bound: "rf_regs",
            limit: cfg.rf_regs as u64,
        });
    }
    if p_const.bits as usize > cfg.rf_width {
        return Err(ValidateError::OutOfRange {
            field: "p_const",
            value: p_const.bits as u64,
            bound: "rf_width",
            limit: cfg.rf_width as u64,
        });
    }
    Ok(())
}

fn check_cram_addr(
    field: &'static str,
    addr: TileAddr,
    rows: u32,
    cfg: &ChipConfig,
) -> Result<(), ValidateError> {
    if addr.cram(cfg) >= cfg.crams_per_tile {
        return Err(ValidateError::OutOfRange {
            field,
            value: addr.cram(cfg) as u64,
            bound: "crams_per_tile",
            limit: cfg.crams_per_tile as u64,
        });
    }
    check_wl_range(field, addr.wordline(cfg) as u32, rows, cfg)
}

fn check_shuffle_dst(
    field: &'static str,
    dst: TileAddr,
    size: u64,
    p: Precision,
    shf: u32,
    cfg: &ChipConfig,
) -> Result<(), ValidateError> {
    if shf == 0 {
        return Ok(());
    }
    let w = size * p.bits as u64;
    if w % shf as u64 != 0 {
        return Err(ValidateError::BadShuffle(format!(
            "payload width {w} bits is not divisible by shf {shf}"
        )));
    }
    let chunks = w / shf as u64;
    if chunks > cfg.crams_per_tile as u64 {
        return Err(ValidateError::BadShuffle(format!(
            "{chunks} shuffle chunks exceed crams_per_tile = {}",
            cfg.crams_per_tile
        )));
    }
    check_wl_range(field, dst.wordline(cfg) as u32, shf, cfg)
}

/// Warnings are advisory: the program still validates.
pub fn instruction_warnings(instr: &Instruction) -> Vec<String> {
    let mut w = Vec::new();
    if let Instruction::Mult { pr, p1, p2, .. } = instr {
        if (pr.bits as u32) < p1.bits as u32 + p2.bits as u32 {
            w.push(format!(
                "mult result declared {pr} truncates the {}-bit product of {p1} and {p2}",
                p1.bits as u32 + p2.bits as u32
            ));
        }
    }
    if let Instruction::MulConst { pr, p_src, p_const, .. } = instr {
        if (pr.bits as u32) < p_src.bits as u32 + p_const.bits as u32 {
            w.push(format!(
                "mul_const result declared {pr} truncates the {}-bit product of {p_src} and {p_const}",
                p_src.bits as u32 + p_const.bits as u32
            ));
        }
    }
    w
}

/// Validates all streams of a program. Every stream must end with `halt`.
pub fn validate_program(prog: &Program, cfg: &ChipConfig) -> Result<(), IsaError> {
    for (tile, stream) in &prog.streams {
        if tile.0 as usize >= cfg.num_tiles() {
            return Err(IsaError::Invalid {
                place: format!("tile {tile}"),
                source: ValidateError::OutOfRange {
                    field: "tile",
                    value: tile.0 as u64,
                    bound: "num_tiles",
                    limit: cfg.num_tiles() as u64,
                },
            });
        }
        if stream.last() != Some(&Instruction::Halt) {
            return Err(IsaError::Invalid {
                place: format!("tile {tile}"),
                source: ValidateError::BadWidth("stream does not end with halt".into()),
            });
        }
        for (i, instr) in stream.iter().enumerate() {
            validate_instruction(instr, cfg).map_err(|source| IsaError::Invalid {
                place: format!("tile {tile}, instruction {i} ({})", instr.mnemonic()),
                source,
            })?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ChipConfig {
        ChipConfig::default()
    }

    #[test]
    fn add_past_top_wordline_rejected() {
        // dst at wordline 250 with an 8-bit result does not fit 256 wordlines
        let i = Instruction::Add {
            dst: 250,
            pr: Precision::signed(8),
            src1: 0,
            p1: Precision::signed(8),
            src2: 8,
            p2: Precision::signed(8),
            size: 256,
            cen: false,
            cst: false,
            pred: Pred::None,
        };
        let err = validate_instruction(&i, &cfg()).unwrap_err();
        assert!(matches!(err, ValidateError::OutOfRange { field: "add.dst", .. }));
    }

    #[test]
    fn tile_id_120_rejected_on_120_tile_chip() {
        let i = Instruction::TileTx {
            dst_tile: TileId(120),
            src: TileAddr(0),
            size: 1,
            p: Precision::signed(8),
        };
        assert!(validate_instruction(&i, &cfg()).is_err());
        let i = Instruction::TileTx {
            dst_tile: TileId(119),
            src: TileAddr(0),
            size: 1,
            p: Precision::signed(8),
        };
        assert!(validate_instruction(&i, &cfg()).is_ok());
    }

    #[test]
    fn full_tile_load_valid() {
        let i = Instruction::Load {
            dst: TileAddr(0),
            dram: 0,
            size: 256 * 256,
            p: Precision::signed(8),
            tr: true,
        };
        assert!(validate_instruction(&i, &cfg()).is_ok());
        let i = Instruction::Load {
            dst: TileAddr(0),
            dram: 0,
            size: 256 * 256 + 1,
            p: Precision::signed(8),
            tr: true,
        };
        assert!(validate_instruction(&i, &cfg()).is_err());
    }

    #[test]
    fn mult_overlapping_result_rejected() {
        let i = Instruction::Mult {
            dst: 0,
            pr: Precision::signed(16),
            src1: 0,
            p1: Precision::signed(8),
            src2: 40,
            p2: Precision::signed(8),
            size: 256,
        };
        let err = validate_instruction(&i, &cfg()).unwrap_err();
        assert!(matches!(err, ValidateError::Overlap(_)));
    }

    #[test]
    fn in_place_add_rules() {
        let mk = |dst, pr: Precision, src1, p1: Precision| Instruction::Add {
            dst,
            pr,
            src1,
            p1,
            src2: 100,
            p2: Precision::signed(8),
            size: 1,
            cen: false,
            cst: false,
            pred: Pred::None,
        };
        // same width in place: fine
        assert!(validate_instruction(&mk(0, Precision::signed(8), 0, Precision::signed(8)), &cfg()).is_ok());
        // widening in place over a signed source: rejected
        assert!(validate_instruction(&mk(0, Precision::signed(9), 0, Precision::signed(8)), &cfg()).is_err());
        // widening in place over an unsigned source: fine
        assert!(validate_instruction(&mk(0, Precision::unsigned(9), 0, Precision::unsigned(8)), &cfg()).is_ok());
        // partial overlap: rejected
        assert!(validate_instruction(&mk(4, Precision::signed(8), 0, Precision::signed(8)), &cfg()).is_err());
    }

    #[test]
    fn overlap_matches_bruteforce_interval_check() {
        // brute-force oracle: materialize both intervals and intersect
        let brute = |a: (u32, u32), b: (u32, u32)| {
            let sa: std::collections::HashSet<u32> = (a.0..a.0 + a.1).collect();
            (b.0..b.0 + b.1).any(|x| sa.contains(&x))
        };
        for a0 in 0..12u32 {
            for al in 0..5u32 {
                for b0 in 0..12u32 {
                    for bl in 0..5u32 {
                        if al == 0 || bl == 0 {
                            continue;
                        }
                        assert_eq!(overlaps((a0, al), (b0, bl)), brute((a0, al), (b0, bl)));
                    }
                }
            }
        }
    }

    #[test]
    fn truncating_mult_warns() {
        let i = Instruction::Mult {
            dst: 0,
            pr: Precision::signed(6),
            src1: 16,
            p1: Precision::signed(8),
            src2: 32,
            p2: Precision::signed(8),
            size: 256,
        };
        assert_eq!(instruction_warnings(&i).len(), 1);
    }
}
