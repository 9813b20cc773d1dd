pub mod bench;
pub mod error;
pub mod grid;
pub mod io;
pub mod models;
pub mod noise;
pub mod quadrature;
pub mod solver;
pub mod tridiag;
