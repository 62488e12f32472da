pub mod config;
pub mod idx;
pub mod presets;
pub mod runner;
pub mod snapshot;
pub mod rl;
