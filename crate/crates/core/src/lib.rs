#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dual;
pub mod error;
pub mod harness;
pub mod measure;
pub mod operator;
pub mod prior;
pub mod quadrature;
pub mod reconstruct;
