pub mod bem;
pub mod coefficients;
pub mod embedding;
pub mod experiment;
pub mod geometry;
pub mod linalg;
pub mod pattern;
pub mod specialfun;
