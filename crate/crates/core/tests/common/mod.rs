#![allow(dead_code, clippy::needless_range_loop, clippy::type_complexity)]

pub mod fixture;
pub mod gen;
pub mod oracle;
