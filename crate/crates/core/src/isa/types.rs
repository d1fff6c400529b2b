//! Instruction and program representations shared by the assembler,
//! simulator and mapper.

use super::precision::Precision;
use crate::config::ChipConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Index of one tile in row-major mesh order (`y * cols + x`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileId(pub u16);

impl TileId {
    pub fn coords(self, cfg: &ChipConfig) -> (usize, usize) {
        let id = self.0 as usize;
        (id % cfg.mesh_cols, id / cfg.mesh_cols)
    }

    pub fn from_coords(x: usize, y: usize, cfg: &ChipConfig) -> Self {
        TileId((y * cfg.mesh_cols + x) as u16)
    }
}

impl fmt::Display for TileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Flat storage address inside one tile: `cram * wordlines + wordline`.
/// One compute instruction names the same wordlines in every participating
/// CRAM, so its addresses carry only the wordline part; transfer
/// instructions use the full flat form to pick a CRAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileAddr(pub u32);

impl TileAddr {
    pub fn cram(self, cfg: &ChipConfig) -> usize {
        self.0 as usize / cfg.wordlines
    }

    pub fn wordline(self, cfg: &ChipConfig) -> usize {
        self.0 as usize % cfg.wordlines
    }

    pub fn from_parts(cram: usize, wordline: usize, cfg: &ChipConfig) -> Self {
        TileAddr((cram * cfg.wordlines + wordline) as u32)
    }
}

impl fmt::Display for TileAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogicKind {
    And,
    Or,
    Xor,
}

impl fmt::Display for LogicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogicKind::And => "and",
            LogicKind::Or => "or",
            LogicKind::Xor => "xor",
        })
    }
}

/// Direction of an across-bitline shift. `Up` moves data toward higher
/// bitline indices (the assembler token is `r`), `Down` toward lower (`l`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShiftDir {
    Up,
    Down,
}

impl fmt::Display for ShiftDir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShiftDir::Up => "r",
            ShiftDir::Down => "l",
        })
    }
}

/// Per-bitline predication source of an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Pred {
    #[default]
    None,
    Mask,
    Carry,
}

/// One assembled instruction. Wordline addresses of compute instructions
/// are plain wordline indices (identical in every CRAM of the tile);
/// `size` is the bitline count participating across the tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Instruction {
    Add {
        dst: u32,
        pr: Precision,
        src1: u32,
        p1: Precision,
        src2: u32,
        p2: Precision,
        size: u64,
        cen: bool,
        cst: bool,
        pred: Pred,
    },
    Mult {
        dst: u32,
        pr: Precision,
        src1: u32,
        p1: Precision,
        src2: u32,
        p2: Precision,
        size: u64,
    },
    Logic {
        kind: LogicKind,
        dst: u32,
        src1: u32,
        src2: u32,
        p: Precision,
        size: u64,
        pred: Pred,
    },
    Shift {
        dst: u32,
        src: u32,
        shamt: u32,
        dir: ShiftDir,
        p: Precision,
    },
    ReduceCram {
        dst: u32,
        pr_dst: Precision,
        src: u32,
        pr_src: Precision,
        levels: u32,
        size: u64,
    },
    ReduceTile {
        dst: u32,
        pr_dst: Precision,
        src: u32,
        pr_src: Precision,
        levels: u32,
    },
    MulConst {
        dst: u32,
        pr: Precision,
        src: u32,
        p_src: Precision,
        rf: u8,
        p_const: Precision,
        size: u64,
        pred: Pred,
    },
    AddConst {
        dst: u32,
        pr: Precision,
        src: u32,
        p_src: Precision,
        rf: u8,
        p_const: Precision,
        size: u64,
        pred: Pred,
    },
    SetMask {
        src: u32,
        size: u64,
    },
    CramTxRx {
        dst: TileAddr,
        src: TileAddr,
        p: Precision,
    },
    CramBcast {
        dst: u32,
        src: TileAddr,
        p: Precision,
    },
    TileTx {
        dst_tile: TileId,
        src: TileAddr,
        size: u64,
        p: Precision,
    },
    TileRx {
        src_tile: TileId,
        dst: TileAddr,
        size: u64,
        p: Precision,
    },
    TileBcast {
        dst: TileAddr,
        src: TileAddr,
        size: u64,
        p: Precision,
        shf: u32,
    },
    Load {
        dst: TileAddr,
        dram: u64,
        size: u64,
        p: Precision,
        tr: bool,
    },
    LoadBcast {
        dst: TileAddr,
        dram: u64,
        size: u64,
        p: Precision,
        tr: bool,
        shf: u32,
    },
    Store {
        dram: u64,
        src: TileAddr,
        size: u64,
        p: Precision,
        tr: bool,
    },
    LoadRf {
        dram: u64,
    },
    StoreRf {
        dram: u64,
    },
    Signal {
        dst_tile: TileId,
        tag: u16,
    },
    Wait {
        src_tile: TileId,
        tag: u16,
    },
    Halt,
}

impl Instruction {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Instruction::Add { .. } => "add",
            Instruction::Mult { .. } => "mult",
            Instruction::Logic { kind, .. } => match kind {
                LogicKind::And => "and",
                LogicKind::Or => "or",
                LogicKind::Xor => "xor",
            },
            Instruction::Shift { .. } => "shift",
            Instruction::ReduceCram { .. } => "reduce_cram",
            Instruction::ReduceTile { .. } => "reduce_tile",
            Instruction::MulConst { .. } => "mul_const",
            Instruction::AddConst { .. } => "add_const",
            Instruction::SetMask { .. } => "set_mask",
            Instruction::CramTxRx { .. } => "cram_tx_rx",
            Instruction::CramBcast { .. } => "cram_bcast",
            Instruction::TileTx { .. } => "tile_tx",
            Instruction::TileRx { .. } => "tile_rx",
            Instruction::TileBcast { .. } => "tile_bcast",
            Instruction::Load { .. } => "load",
            Instruction::LoadBcast { .. } => "load_bcast",
            Instruction::Store { .. } => "store",
            Instruction::LoadRf { .. } => "load_rf",
            Instruction::StoreRf { .. } => "store_rf",
            Instruction::Signal { .. } => "signal",
            Instruction::Wait { .. } => "wait",
            Instruction::Halt => "halt",
        }
    }
}

/// A named DRAM range declared with `.region`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub base: u64,
    pub size_bytes: u64,
}

/// A validated program: one ordered instruction stream per tile plus the
/// symbol table it was assembled against.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Program {
    pub streams: BTreeMap<TileId, Vec<Instruction>>,
    pub regions: BTreeMap<String, Region>,
    pub labels: BTreeMap<String, i64>,
}

impl Program {
    pub fn instruction_count(&self) -> usize {
        self.streams.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }
}
