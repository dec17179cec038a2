//! Control stack for a six-wheeled differential-drive delivery robot, plus a
//! deterministic closed-loop 2D simulator to exercise it.
//!
//! The crate is organized around the subsystems of the robot:
//!
//! - [`geo`]: reference paths, geodetic-to-local projection, lateral/heading
//!   offsets from the path, and arbitration between GPS and vision offsets.
//! - [`vision`]: Canny edge detection, Hough line transform, lane-boundary
//!   selection and vanishing-point offset recovery ([`image`] holds the
//!   grayscale buffer and PGM I/O).
//! - [`fuzzy`]: Mamdani fuzzy steering controller with area defuzzification.
//! - [`qlearn`]: tabular Q-learning tuner that adjusts the fuzzy membership
//!   breakpoints online while driving a simulated episode.
//! - [`guard`]: lidar clustering (DBSCAN) and the obstacle speed governor.
//! - [`balance`]: linear Kalman filtering for body pitch, the rocker-arm
//!   leveling law, and scalar command smoothing.
//! - [`sim`] / [`scenario`]: the fixed-timestep world, sensor models, a
//!   synthetic lane camera, and JSON scenario configuration.
//!
//! Everything is deterministic for a given scenario seed: two runs with the
//! same inputs produce byte-identical logs.

pub mod angles;
pub mod balance;
pub mod fuzzy;
pub mod geo;
pub mod guard;
pub mod image;
pub mod qlearn;
pub mod scenario;
pub mod sim;
pub mod vision;

pub use geo::{GeodeticFix, OffsetPair, OffsetSource, Pose2D, ReferencePath};
pub use qlearn::{QFile, QTuner, TunerConfig};
pub use scenario::Scenario;
pub use sim::{run_scenario, RunLog, SimConfig, SimWorld};
