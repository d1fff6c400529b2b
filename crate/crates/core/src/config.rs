//! Chip geometry and cost parameters.
//!
//! A [`ChipConfig`] is the single source of truth for every hardware bound
//! the assembler validates against and every cost the simulator charges.
//! The defaults describe the full-size chip; [`ChipConfig::mini`] is a
//! desk-scale configuration meant for fast end-to-end runs and CI.

use serde::{Deserialize, Serialize};
use std::path::Path;

/// Energy charged per modeled event, in picojoules.
///
/// The default constants are placeholders with a plausible ordering
/// (DRAM > NoC > H-tree > SRAM > latch); they are not calibrated against
/// any physical design. Reports built on them are only meaningful as
/// ratios and partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyTable {
    /// One micro-op executed by one CRAM (PE activity, all bitlines).
    pub microop_pj: f64,
    /// One wordline read in a CRAM.
    pub cram_read_pj: f64,
    /// One wordline write in a CRAM.
    pub cram_write_pj: f64,
    /// One wordline crossing one H-tree link.
    pub htree_hop_pj: f64,
    /// One flit crossing one NoC link.
    pub noc_hop_pj: f64,
    /// One bit granted by a DRAM controller.
    pub dram_bit_pj: f64,
    /// One register-file access (read or write of one register).
    pub rf_access_pj: f64,
}

impl Default for EnergyTable {
    fn default() -> Self {
        EnergyTable {
            microop_pj: 1.0,
            cram_read_pj: 0.5,
            cram_write_pj: 0.6,
            htree_hop_pj: 2.0,
            noc_hop_pj: 6.0,
            dram_bit_pj: 12.0,
            rf_access_pj: 0.2,
        }
    }
}

/// All microarchitectural parameters of the chip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChipConfig {
    /// Mesh width; one DRAM controller sits above each column.
    pub mesh_cols: usize,
    /// Mesh height.
    pub mesh_rows: usize,
    /// CRAM arrays per tile.
    pub crams_per_tile: usize,
    /// Wordlines (rows) per CRAM.
    pub wordlines: usize,
    /// Bitlines (columns, = PEs) per CRAM.
    pub bitlines: usize,
    /// Clock frequency in MHz. Informational only; nothing scales with it.
    pub frequency_mhz: u64,
    /// Aggregate DRAM bandwidth in bits per clock, split evenly over the
    /// top-row controllers.
    pub dram_bandwidth_bits: u64,
    /// Fixed DRAM access latency in cycles.
    pub dram_latency: u64,
    /// Inter-tile link width in bits per clock (one flit).
    pub tile_link_bits: usize,
    /// Intra-tile H-tree link width in bits per clock.
    pub cram_link_bits: usize,
    /// Register count in the per-tile RF.
    pub rf_regs: usize,
    /// Width of each RF register in bits.
    pub rf_width: usize,
    /// Virtual channels per router input port.
    pub vc_count: usize,
    /// Flit capacity of each virtual-channel queue.
    pub queue_depth: usize,
    /// Cycles without progress before the simulator declares deadlock.
    pub deadlock_window: u64,
    pub energy: EnergyTable,
}

impl Default for ChipConfig {
    fn default() -> Self {
        ChipConfig {
            mesh_cols: 12,
            mesh_rows: 10,
            crams_per_tile: 256,
            wordlines: 256,
            bitlines: 256,
            frequency_mhz: 1500,
            dram_bandwidth_bits: 12288,
            dram_latency: 64,
            tile_link_bits: 1024,
            cram_link_bits: 256,
            rf_regs: 32,
            rf_width: 32,
            vc_count: 4,
            queue_depth: 4,
            deadlock_window: 100_000,
            energy: EnergyTable::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ChipConfig {
    /// Desk-scale configuration: 2x2 mesh, 8 CRAMs per tile, 64x64 CRAMs.
    pub fn mini() -> Self {
        ChipConfig {
            mesh_cols: 2,
            mesh_rows: 2,
            crams_per_tile: 8,
            wordlines: 64,
            bitlines: 64,
            dram_bandwidth_bits: 2048,
            dram_latency: 16,
            tile_link_bits: 1024,
            cram_link_bits: 64,
            deadlock_window: 20_000,
            ..ChipConfig::default()
        }
    }

    pub fn num_tiles(&self) -> usize {
        self.mesh_cols * self.mesh_rows
    }

    /// Bitlines across a whole tile, the maximum `size` of one instruction.
    pub fn tile_width(&self) -> usize {
        self.crams_per_tile * self.bitlines
    }

    /// Bits per cycle granted by one top-row controller.
    pub fn controller_grant(&self) -> u64 {
        self.dram_bandwidth_bits / self.mesh_cols as u64
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ChipConfig = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn check(&self) -> Result<(), ConfigError> {
        let positive = [
            ("mesh_cols", self.mesh_cols),
            ("mesh_rows", self.mesh_rows),
            ("crams_per_tile", self.crams_per_tile),
            ("wordlines", self.wordlines),
            ("bitlines", self.bitlines),
            ("rf_regs", self.rf_regs),
            ("rf_width", self.rf_width),
            ("vc_count", self.vc_count),
            ("queue_depth", self.queue_depth),
            ("tile_link_bits", self.tile_link_bits),
            ("cram_link_bits", self.cram_link_bits),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if self.dram_bandwidth_bits == 0 {
            return Err(ConfigError::Invalid(
                "dram_bandwidth_bits must be positive".into(),
            ));
        }
        if self.dram_bandwidth_bits % self.mesh_cols as u64 != 0 {
            return Err(ConfigError::Invalid(format!(
                "dram_bandwidth_bits ({}) must split evenly over {} controllers",
                self.dram_bandwidth_bits, self.mesh_cols
            )));
        }
        if self.rf_width > 64 {
            return Err(ConfigError::Invalid("rf_width above 64 unsupported".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_chip() {
        let c = ChipConfig::default();
        assert_eq!(c.num_tiles(), 120);
        assert_eq!(c.tile_width(), 256 * 256);
        assert_eq!(c.controller_grant(), 1024);
        assert_eq!((c.wordlines * c.bitlines) / 8, 8192); // 8 KB per CRAM
        assert_eq!(c.num_tiles() * c.crams_per_tile, 30720);
    }

    #[test]
    fn toml_roundtrip() {
        let c = ChipConfig::mini();
        let text = c.to_toml();
        let back = ChipConfig::from_toml(&text).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ChipConfig::from_toml("mesh_cols = 0").is_err());
        assert!(ChipConfig::from_toml("dram_bandwidth_bits = 5").is_err());
        assert!(ChipConfig::from_toml("nonsense_key = 3").is_err());
    }
}
