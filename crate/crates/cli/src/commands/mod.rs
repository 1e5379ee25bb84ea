pub mod add_expert;
pub mod eval;
pub mod predict;
pub mod select;
pub mod serve;
pub mod sweep;
pub mod train;
