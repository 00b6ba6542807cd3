//! Long-horizon forecasting of human positions in indoor scenes.
//!
//! The engine predicts where a person will be over the next minute by
//! reasoning about what they will *do*: a pluggable predictor proposes
//! sequences of human-object interactions over a hierarchical scene graph,
//! those sequences are grounded into a tree of shortest-path waypoints, and
//! the progression through that tree is modeled as a continuous-time Markov
//! chain whose evolved state distribution induces a Gaussian-mixture density
//! over space and time.
//!
//! Pipeline stages, one module each:
//!
//! * [`scene`] — load/validate hierarchical scene graphs, spatial queries,
//!   natural-language scene descriptions.
//! * [`predict`] — interaction candidates from a fixture, a chat-completion
//!   wire client, or a ground-truth oracle; semantic-to-instance grounding.
//! * [`tree`] — auto-regressive interaction-tree expansion and shortest-path
//!   grounding.
//! * [`ctmc`] — generator construction, transient evolution, steady state,
//!   total-variation diagnostics.
//! * [`spatial`] — Gaussian-mixture spatial density and discrete trajectory
//!   extraction.
//! * [`eval`] — dataset records, metrics (NLL, Best-of-N ADE, interaction
//!   accuracy), baselines, ablation drivers, dataset statistics.

pub mod ctmc;
pub mod eval;
pub mod geometry;
pub mod predict;
pub mod scene;
pub mod spatial;
pub mod tree;

pub use geometry::Point2;
pub use scene::{NodeId, SceneGraph};
