pub mod active_cmd;
pub mod bias;
pub mod narrow;
pub mod stability;
pub mod train;
pub mod verify;
