pub mod eval;
pub mod gendata;
pub mod regret;
pub mod sweep;
pub mod train;
