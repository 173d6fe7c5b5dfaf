//! Desk-scale planner evaluation: candidate trajectory generation, a
//! nine-part driving metric suite with two-stage composition, pluggable
//! scorers, log-weighted score fusion, and LQR tracking on a kinematic
//! bicycle.
//!
//! All numeric kernels are generic over the scalar type via [`num::Real`]
//! (f32 or f64); the aliases below fix the `f64` instantiation that the
//! CLI and the file formats use.

pub mod directive;
pub mod fusion;
pub mod geometry;
pub mod linalg;
pub mod lqr;
pub mod metrics;
pub mod num;
pub mod scenario;
pub mod scorers;
pub mod vocab;

pub use num::Real;

pub type Point2 = geometry::Point2<f64>;
pub type Polygon = geometry::Polygon<f64>;
pub type OrientedBox = geometry::OrientedBox<f64>;

pub type Pose2D = scenario::Pose2D<f64>;
pub type Trajectory = scenario::Trajectory<f64>;
pub type TrajectorySample = scenario::TrajectorySample<f64>;
pub type EgoState = scenario::EgoState<f64>;
pub type Agent = scenario::Agent<f64>;
pub type MapContext = scenario::MapContext<f64>;
pub type CameraModel = scenario::CameraModel<f64>;
pub type Scenario = scenario::Scenario<f64>;
pub type Stage<'a> = scenario::Stage<'a, f64>;

pub type VocabularyParams = vocab::VocabularyParams<f64>;
pub type AnchorParams = vocab::AnchorParams<f64>;

pub type SubScores = metrics::SubScores<f64>;
pub type MetricWeights = metrics::MetricWeights<f64>;
pub type MetricConfig = metrics::MetricConfig<f64>;
pub type EpdmsResult = metrics::EpdmsResult<f64>;

pub type DirectiveEmbedding = directive::DirectiveEmbedding<f64>;
pub type DirectiveRuleConfig = directive::DirectiveRuleConfig<f64>;

pub type ScorerOutput = scorers::ScorerOutput<f64>;
pub type LinearScorerParams = scorers::LinearScorerParams<f64>;

pub type FusionConfig = fusion::FusionConfig<f64>;
pub type ModelWeights = fusion::ModelWeights<f64>;

pub type BicycleState = lqr::BicycleState<f64>;
pub type LqrConfig = lqr::LqrConfig<f64>;
