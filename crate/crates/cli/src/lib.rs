//! Configuration, file formats and run orchestration behind the `thinfold`
//! command.

pub mod config;
pub mod csvlog;
pub mod meshio;
pub mod runner;
pub mod verify;
pub mod vtk;
