//! Fast-loop execution: discrete actions to setpoints, PID tracking, the
//! safety mask and slow-directive arbitration.

mod action;
mod arbitration;
mod mask;
mod pid;

pub use action::{map_action, Action, Setpoints, SPEED_STEP};
pub use arbitration::{reconcile_directive, ArbitrationEvent, ArbitrationState, DEFAULT_HOLD_TIMEOUT};
pub use mask::{
    allowed_actions, filter_action, lane_change_abort, oncoming_exit, safety_mask, MaskContext, MaskThresholds,
    RejectReason, Verdict,
};
pub use pid::{executor_step, follow_limit, pid_step, FOLLOW, SPEED_GAIN};
