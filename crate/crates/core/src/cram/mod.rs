//! The compute-enabled SRAM model: transposed bit storage, per-bitline PE
//! latches, single-cycle micro-ops, and the bit-serial sequencers that
//! expand compute instructions into micro-op schedules.

mod array;
mod sequencer;

pub use array::{
    exec_microop, exec_schedule_self_ring, pe_func, ActiveLanes, CramArray, CramError, CramEvents,
    CramMode, LatchUpdate, MicroOp, PeFunc, PeState,
};
pub use sequencer::{
    add_cycles, mult_cycles, reduce_cram_cycles, seq_add, seq_add_const, seq_copy, seq_logic,
    seq_mul_const, seq_mult, seq_reduce_cram, seq_set_mask, seq_shift, shift_cycles,
};
