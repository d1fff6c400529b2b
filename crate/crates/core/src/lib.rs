//! Cycle-accurate model of a hierarchical bit-serial compute-in-SRAM chip,
//! with an assembler for its instruction set and a mapper that lowers small
//! tensor loop-nests onto it.

pub mod config;
pub mod cram;
pub mod isa;
pub mod mapper;
pub mod memory;
pub mod noc;
pub mod sim;
pub mod tile;
