//! Weighted-operator machinery: conjugated symbols and brackets, weight
//! certificates, Morse weight construction and relocation, and the direct
//! falsification test of the weighted a-priori estimate.

pub mod certify;
pub mod flow;
pub mod inequality;
pub mod morse;
pub mod pair;
pub mod symbols;
