//! Numerical toolkit for uniform observability of gradient-flow transport
//! equations `∂t u - ∇f·∇u - q u - εΔu = 0` in the vanishing viscosity limit.
//!
//! The numerical kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom of this file fix the scalar to `f64`, which is what
//! the command line tool and the reports use.

pub mod agmon;
pub mod error;
pub mod exprdsl;
pub mod flow;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod numerics;
pub mod observability;
pub mod region;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use exprdsl::{ExprError, ScalarExpr};
pub use scalar::Scalar;

pub type SurfaceSpecF64 = geometry::SurfaceSpec<f64>;
pub type PotentialFieldF64 = geometry::PotentialField<f64>;
pub type AgmonFieldF64 = agmon::AgmonField<f64>;
pub type TrajectoryF64 = flow::Trajectory<f64>;
pub type FlowReportF64 = flow::FlowReport<f64>;
pub type DiscreteOperatorF64 = spectral::DiscreteOperator<f64>;
pub type EigenPairF64 = spectral::EigenPair<f64>;
pub type DecayReportF64 = spectral::DecayReport<f64>;
pub type TheoryRateF64 = observability::TheoryRate<f64>;
pub type WitnessCostF64 = observability::WitnessCost<f64>;
pub type GramianCostF64 = observability::GramianCost<f64>;
pub type RateFitF64 = observability::RateFit<f64>;
pub type SweepReportF64 = observability::SweepReport<f64>;
pub type BracketF64 = observability::Bracket<f64>;
pub type PreparedF64 = observability::Prepared<f64>;
pub type ActionContextF64 = kernel::ActionContext<f64>;
pub type ActionResultF64 = kernel::ActionResult<f64>;
pub type HopfLaxTableF64 = kernel::HopfLaxTable<f64>;
pub type SupInfF64 = kernel::SupInf<f64>;
pub type KernelGeneratorF64 = kernel::KernelGenerator<f64>;
pub type KernelFieldF64 = kernel::KernelField<f64>;
pub type LiYauReportF64 = kernel::LiYauReport<f64>;
pub type L1ReportF64 = kernel::L1Report<f64>;
pub type PositiveBracketF64 = kernel::PositiveBracket<f64>;
