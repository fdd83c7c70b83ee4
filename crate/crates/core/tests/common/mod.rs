#![allow(dead_code)]

pub mod faults;
pub mod laws;
