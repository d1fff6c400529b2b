//! Canonical text form of a program. `parse(print(p))` reproduces `p`.

use super::types::*;
use std::fmt::Write;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for (name, r) in &p.regions {
        writeln!(out, ".region {name} {} {}", r.base, r.size_bytes).unwrap();
    }
    for (name, v) in &p.labels {
        writeln!(out, ".label {name} {v}").unwrap();
    }
    for (tile, stream) in &p.streams {
        writeln!(out, ".tile {tile}").unwrap();
        for instr in stream {
            writeln!(out, "{}", print_instruction(instr)).unwrap();
        }
    }
    out
}

fn pred_suffix(pred: Pred) -> &'static str {
    match pred {
        Pred::None => "",
        Pred::Mask => ", pred=mask",
        Pred::Carry => ", pred=carry",
    }
}

fn tr_suffix(tr: bool) -> &'static str {
    if tr {
        ""
    } else {
        ", raw"
    }
}

pub fn print_instruction(i: &Instruction) -> String {
    match i {
        Instruction::Add {
            dst,
            pr,
            src1,
            p1,
            src2,
            p2,
            size,
            cen,
            cst,
            pred,
        } => {
            let mut s = format!("add {dst}, {pr}, {src1}, {p1}, {src2}, {p2}, {size}");
            if *cen {
                s.push_str(", cen");
            }
            if *cst {
                s.push_str(", cst");
            }
            s.push_str(pred_suffix(*pred));
            s
        }
        Instruction::Mult {
            dst,
            pr,
            src1,
            p1,
            src2,
            p2,
            size,
        } => format!("mult {dst}, {pr}, {src1}, {p1}, {src2}, {p2}, {size}"),
        Instruction::Logic {
            kind,
            dst,
            src1,
            src2,
            p,
            size,
            pred,
        } => format!(
            "{kind} {dst}, {src1}, {src2}, {p}, {size}{}",
            pred_suffix(*pred)
        ),
        Instruction::Shift {
            dst,
            src,
            shamt,
            dir,
            p,
        } => format!("shift {dst}, {src}, {shamt}, {dir}, {p}"),
        Instruction::ReduceCram {
            dst,
            pr_dst,
            src,
            pr_src,
            levels,
            size,
        } => format!("reduce_cram {dst}, {pr_dst}, {src}, {pr_src}, {levels}, {size}"),
        Instruction::ReduceTile {
            dst,
            pr_dst,
            src,
            pr_src,
            levels,
        } => format!("reduce_tile {dst}, {pr_dst}, {src}, {pr_src}, {levels}"),
        Instruction::MulConst {
            dst,
            pr,
            src,
            p_src,
            rf,
            p_const,
            size,
            pred,
        } => format!(
            "mul_const {dst}, {pr}, {src}, {p_src}, {rf}, {p_const}, {size}{}",
            pred_suffix(*pred)
        ),
        Instruction::AddConst {
            dst,
            pr,
            src,
            p_src,
            rf,
            p_const,
            size,
            pred,
        } => format!(
            "add_const {dst}, {pr}, {src}, {p_src}, {rf}, {p_const}, {size}{}",
            pred_suffix(*pred)
        ),
        Instruction::SetMask { src, size } => format!("set_mask {src}, {size}"),
        Instruction::CramTxRx { dst, src, p } => format!("cram_tx_rx {dst}, {src}, {p}"),
        Instruction::CramBcast { dst, src, p } => format!("cram_bcast {dst}, {src}, {p}"),
        Instruction::TileTx {
            dst_tile,
            src,
            size,
            p,
        } => format!("tile_tx {dst_tile}, {src}, {size}, {p}"),
        Instruction::TileRx {
            src_tile,
            dst,
            size,
            p,
        } => format!("tile_rx {src_tile}, {dst}, {size}, {p}"),
        Instruction::TileBcast {
            dst,
            src,
            size,
            p,
            shf,
        } => {
            let mut s = format!("tile_bcast {dst}, {src}, {size}, {p}");
            if *shf > 0 {
                write!(s, ", shf={shf}").unwrap();
            }
            s
        }
        Instruction::Load {
            dst,
            dram,
            size,
            p,
            tr,
        } => format!("load {dst}, {dram}, {size}, {p}{}", tr_suffix(*tr)),
        Instruction::LoadBcast {
            dst,
            dram,
            size,
            p,
            tr,
            shf,
        } => {
            let mut s = format!("load_bcast {dst}, {dram}, {size}, {p}");
            if *shf > 0 {
                write!(s, ", shf={shf}").unwrap();
            }
            s.push_str(tr_suffix(*tr));
            s
        }
        Instruction::Store {
            dram,
            src,
            size,
            p,
            tr,
        } => format!("store {dram}, {src}, {size}, {p}{}", tr_suffix(*tr)),
        Instruction::LoadRf { dram } => format!("load_rf {dram}"),
        Instruction::StoreRf { dram } => format!("store_rf {dram}"),
        Instruction::Signal { dst_tile, tag } => format!("signal {dst_tile}, tag={tag}"),
        Instruction::Wait { src_tile, tag } => format!("wait {src_tile}, tag={tag}"),
        Instruction::Halt => "halt".into(),
    }
}
