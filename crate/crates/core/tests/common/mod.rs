#![allow(dead_code)]

pub mod cli;
pub mod grad;
pub mod oracles;
