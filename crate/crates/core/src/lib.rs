//! Dynamic programming over very nice tree decompositions, with a model checker for a
//! guarded fragment of monadic second-order logic.

pub mod checker;
pub mod coloring;
pub mod decomp;
pub mod engine;
pub mod graph;
pub mod lang;
pub mod nicify;
pub mod oracle;
