//! Numerical toolkit for a lattice gas of Poisson points carrying deterministic
//! box-shaped marks with a nonnegative pair interaction.
//!
//! The crate is organised around the objects of the model:
//!
//! * [`model`] — lattice geometry, the mark family `G_k`, the interaction
//!   potential `v` and the intensity sequence `q`.
//! * [`energy`] — particle configurations, counting functionals and the
//!   interaction energy `Φ`.
//! * [`enumerate`] — exact canonical partition functions on small boxes by
//!   exhaustive enumeration, plus an independent compound-Poisson oracle for
//!   the non-interacting case.
//! * [`mcmc`] — canonical-ensemble Metropolis–Hastings sampling with
//!   translate/split/merge moves.
//! * [`varfree`] — relative entropy, the free-gas curve, sandwich bounds, the
//!   Poisson-product ansatz and the Poisson-restricted Euler–Lagrange fixed
//!   point.
//! * [`structure`] — the phase-structure engine: tangency density `ρ_t`,
//!   extended free-energy curve, saturation curve and micro/macro mass curves.

pub mod energy;
pub mod enumerate;
mod error;
pub mod lattice;
pub mod mcmc;
pub mod model;
pub mod structure;
pub mod varfree;

pub use energy::{BoxRegion, Configuration};
pub use enumerate::{EnumerationLimits, PartitionResult, PinnedMacro};
pub use error::Error;
pub use lattice::{Coord, Site};
pub use model::{FirstMoment, IntensitySequence, ModelSpec, Potential};
pub use structure::{FreeEnergyCurve, StructureReport};
pub use varfree::{MacroDistribution, MassSequence, Multiplier};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
