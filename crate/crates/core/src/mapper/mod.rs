//! The compiler: a small loop-nest IR with split/reorder/bind scheduling,
//! exhaustive intra-tile parallelism search, greedy buffer allocation with
//! adaptive precision, lifetime slack and fragmented allocation, data
//! movement planning, and code generation to the instruction set.

mod codegen;
mod ir;
mod plan;
mod schedule;

pub use codegen::{codegen, MapResult};
pub use ir::{
    interpret, linearize, parse_nest, Body, BodyOp, Factor, IndexExpr, LoopDecl, LoopNest,
    MapError, TensorDecl, TensorRead,
};
pub use plan::{
    adaptive_precision, allocate_buffers, distribute_inter_tile, distribute_intra_tile,
    enumerate_tilings, fragment_alloc, lifetime_slack, plan_for_tiling, AllocationPlan, BufKind,
    BufferPlan, MapOptions, Objective, SerialLoop, Stage, TileAssignment, Tiling,
}; 
pub use schedule::{organize, parse_schedule, Level, OrgLoop, Organized, Primitive, Schedule};
