//! Simulated ripening room: ground-truth hardness trajectories and the
//! stochastic channel turning fruit state into electromagnetic indicators.

pub mod channel;
pub mod trajectory;

pub use channel::{Channel, ChannelParams, PhaseParams, RssiParams, SimSource, Span, TurnOnParams};
pub use trajectory::{
    classify_sh, generate_trajectory, CohortProfile, Regime, RipeningClass, ShTrajectory,
    Threshold,
};

pub use crate::interrogation::observe_indicators;
