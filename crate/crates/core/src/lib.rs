//! Pulsatile blood-flow simulation for arteriovenous-fistula-like vessel
//! junctions.
//!
//! The crate is organized bottom-up:
//!
//! * [`mesh`]: tetrahedral meshes, Gmsh import, verification geometries;
//! * [`waveform`]: boundary flow-rate series, mass-conservation rectification,
//!   flow-type classification and periodic spline evaluation;
//! * [`krylov`]: compressed-row matrices and the GPBi-CG solver;
//! * [`fem`]: SUPG/PSPG/LSIC stabilized P1/P1 Navier–Stokes assembly and time
//!   marching;
//! * [`post`]: wall shear stress, boundary fluxes and pressures, slices and
//!   legacy VTK output;
//! * [`config`]: the JSON run configuration.

pub mod mesh;
pub mod waveform;
pub mod krylov;
pub mod fem;
pub mod post;
pub mod config;
