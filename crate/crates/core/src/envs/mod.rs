//! The two case-study plants: an inverted pendulum on a cart and a bank of
//! EV chargers sharing one feeder line.

pub mod cartpole;
pub mod ev;
