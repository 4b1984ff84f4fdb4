//! Structure-preserving reduced-order models for Ablowitz-Ladik lattices.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: the conservative and linearly damped full-order lattices,
//!   their Hamiltonian, momentum and skew-gradient vector field.
//! * [`integrators`]: implicit midpoint and exponential midpoint steppers over
//!   the [`SkewGradientSystem`](integrators::SkewGradientSystem) interface.
//! * [`reduction`]: POD bases with the cumulative-energy criterion and Q-DEIM
//!   interpolation operators.
//! * [`rom`]: offline assembly of the reduced operators, including the
//!   Kronecker-contracted DEIM constants, and the online reduced fields.
//! * [`metrics`]: accuracy, conservation and dissipation-balance diagnostics.
//!
//! All numerics are generic over [`Real`]; the aliases below fix `f64`.

pub mod error;
pub mod integrators;
pub mod lattice;
pub mod linalg;
pub mod metrics;
pub mod reduction;
pub mod rom;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type LatticeConfig = lattice::LatticeConfig<f64>;
pub type State = lattice::State<f64>;
pub type Tangent = lattice::Tangent<f64>;
pub type FullOrderModel = lattice::FullOrderModel<f64>;
pub type SolverOptions = integrators::SolverOptions<f64>;
pub type Stepper = integrators::Stepper<f64>;
pub type TimeGrid = integrators::TimeGrid<f64>;
pub type Trajectory = integrators::Trajectory<f64>;
pub type SnapshotSet = reduction::SnapshotSet<f64>;
pub type PodBasis = reduction::PodBasis<f64>;
pub type DeimOperator = reduction::DeimOperator<f64>;
pub type Truncation = reduction::Truncation<f64>;
pub type ReducedModel = rom::ReducedModel<f64>;
pub type ReducedState = rom::ReducedState<f64>;
pub type ReducedSystem<'a> = rom::ReducedSystem<'a, f64>;
pub type DiagnosticSeries = metrics::DiagnosticSeries<f64>;
pub type RateConstants = metrics::RateConstants<f64>;
