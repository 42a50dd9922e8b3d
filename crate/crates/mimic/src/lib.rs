//! Input/output side of the imitation-game engine: OpenPose files and live
//! streams, the scenario simulator, the processing pipeline, the session
//! store and reports, configuration, and the operator-console gateway.

pub mod config;
pub mod gateway;
pub mod live;
pub mod openpose;
pub mod pipeline;
pub mod replay;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod simulate;
pub mod store;
