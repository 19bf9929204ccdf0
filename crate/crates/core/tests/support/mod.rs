#![allow(dead_code)]

pub mod gradcheck;
pub mod metrics_oracle;
pub mod stacks;
