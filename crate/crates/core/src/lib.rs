pub mod error;
pub mod fourier;
pub mod grid_csv;
pub mod manifold;
pub mod measure;
pub mod limits;
pub mod potential;
pub mod quadrature;
pub mod recovery;
pub mod transport;
pub mod verify;
