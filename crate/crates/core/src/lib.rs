pub mod data;
pub mod experiment;
pub mod kb;
pub mod logic;
pub mod metrics;
pub mod nn;
pub mod parser;
pub mod tensor;
