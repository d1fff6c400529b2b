//! Instruction set: precisions, instruction/program types, the assembler
//! and the static validator.

mod parse;
mod precision;
mod print;
mod types;
mod validate;

pub use parse::{parse_program, ParseOutput};
pub use precision::{ceil_log2, result_precision, Precision, WidthRule, MAX_BITS};
pub use print::{print_instruction, print_program};
pub use types::*;
pub use validate::{
    instruction_warnings, reduce_strip_rows, validate_instruction, validate_program, Footprint,
    IsaError, ValidateError,
};
