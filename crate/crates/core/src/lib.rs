//! Simulator and control stack for a two-wheeled self-balancing robot.
//!
//! The crate models the robot as an inverted pendulum on a cart driven by
//! two steppers, emulates its IMU, fuses the readings with a complementary
//! filter and balances it with a cascaded PID loop. A small line protocol
//! lets remote clients steer a running simulation.

pub mod actuation;
pub mod cli;
pub mod control;
pub mod error;
pub mod estimation;
pub mod numfmt;
pub mod plant;
pub mod sensors;
pub mod sim;
pub mod teleop;
pub mod tune;

pub use error::{Error, Result};
