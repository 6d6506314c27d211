pub mod approx;
pub mod cantor;
pub mod dani;
pub mod dyadic;
pub mod error;
pub mod float;
pub mod geometry;
pub mod real;
pub mod suites;
