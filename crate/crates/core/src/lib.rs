//! Spectral toolkit for random Schrödinger operators whose potential is
//! trimmed to a periodic sublattice of a lattice waveguide `Z^d1 x Z^d2`.
//!
//! The crate builds finite boxes and trim masks, assembles the operator
//! `H = H0 + V`, samples replayable disorder, computes spectra, exact
//! extended states and Green functions, and runs the statistical checks
//! (Wegner counting, unique continuation, mobility-edge scans).

pub mod diagnostics;
pub mod disorder;
pub mod error;
pub mod geometry;
pub mod green;
pub mod hamiltonian;
pub mod spectral;
pub mod states;

pub use diagnostics::{
    Classification, GapReport, MobilityParams, MobilityScanRow, Sigma0Reference, UcpReport,
    WegnerParams, WegnerReport,
};
pub use disorder::{DistributionKind, DistributionSpec, EnsembleSpec};
pub use error::{Error, Result};
pub use geometry::{BoundaryCondition, GeometrySpec, LatticeBox, SiteCoord, TrimMask};
pub use green::{DecayFit, GreenColumn, ZetaSweep};
pub use hamiltonian::{PotentialField, SymOperator};
pub use spectral::{EigenDecomposition, SpectrumSet};
pub use states::{ExtendedState, ModeIndex};
