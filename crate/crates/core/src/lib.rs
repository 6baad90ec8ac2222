pub mod error;
pub mod numerics;
pub mod data;
pub mod model;
pub mod gibbs;
pub mod predict;
pub mod simulate;
pub mod metrics;
pub mod nbc;
pub mod io;
pub mod pipeline;
pub mod cli;
