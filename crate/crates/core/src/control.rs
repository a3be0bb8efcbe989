//! Pixel-error visual servoing with a low-pass filtered P or PID law.

use serde::{Deserialize, Serialize};

use crate::error::{FanError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ControllerMode {
    #[default]
    P,
    Pid,
}

impl std::str::FromStr for ControllerMode {
    type Err = FanError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P" => Ok(Self::P),
            "PID" => Ok(Self::Pid),
            other => Err(FanError::Config(format!("unknown controller '{other}'"))),
        }
    }
}

impl std::fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::P => "P",
            Self::Pid => "PID",
        })
    }
}

/// Gains are in m/s per pixel (kp), per pixel-second (ki) and per pixel/s (kd).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub mode: ControllerMode,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub beta: f64,
    pub v_max: f64,
    /// Bound on the integral state, pixel-seconds.
    pub integral_clamp: f64,
    pub dt: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mode: ControllerMode::P,
            kp: 0.01,
            ki: 0.001,
            kd: 0.005,
            beta: 0.3,
            v_max: 2.0,
            integral_clamp: 200.0,
            dt: 0.05,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let gains = [self.kp, self.ki, self.kd];
        if gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(FanError::Config("controller gains must be finite and >= 0".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(FanError::Config(format!("beta must be in (0, 1], got {}", self.beta)));
        }
        if !(self.v_max > 0.0) || !(self.dt > 0.0) || !(self.integral_clamp >= 0.0) {
            return Err(FanError::Config("v_max and dt must be > 0, integral_clamp >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub vx: f64,
    pub vy: f64,
}

impl ControlCommand {
    pub const ZERO: Self = Self { vx: 0.0, vy: 0.0 };
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControllerState {
    pub integral: (f64, f64),
    pub prev_error: Option<(f64, f64)>,
    pub prev_command: ControlCommand,
    /// Set when the last input was not finite.
    pub faulted: bool,
}

/// Offset of `centroid` from the view center, in pixels.
pub fn pixel_error(centroid: (f64, f64), view: (usize, usize)) -> (f64, f64) {
    (centroid.0 - view.0 as f64 / 2.0, centroid.1 - view.1 as f64 / 2.0)
}

pub fn reset(_state: &ControllerState) -> ControllerState {
    ControllerState::default()
}

/// One control period. A positive error produces a positive command, which
/// moves the follower toward the target in the simulator's frame.
pub fn compute_command(
    state: &ControllerState,
    error: (f64, f64),
    cfg: &ControllerConfig,
) -> (ControlCommand, ControllerState) {
    if !error.0.is_finite() || !error.1.is_finite() {
        log::warn!("controller fault: non-finite pixel error {error:?}");
        let next = ControllerState {
            faulted: true,
            ..ControllerState::default()
        };
        return (ControlCommand::ZERO, next);
    }
    let mut next = *state;
    next.faulted = false;
    let e = [error.0, error.1];
    let mut raw = [cfg.kp * e[0], cfg.kp * e[1]];
    if cfg.mode == ControllerMode::Pid {
        let lim = cfg.integral_clamp;
        next.integral = (
            (state.integral.0 + e[0] * cfg.dt).clamp(-lim, lim),
            (state.integral.1 + e[1] * cfg.dt).clamp(-lim, lim),
        );
        // no derivative kick on the first sample
        let prev = state.prev_error.unwrap_or(error);
        let de = [(e[0] - prev.0) / cfg.dt, (e[1] - prev.1) / cfg.dt];
        raw[0] += cfg.ki * next.integral.0 + cfg.kd * de[0];
        raw[1] += cfg.ki * next.integral.1 + cfg.kd * de[1];
    }
    next.prev_error = Some(error);
    let b = cfg.beta;
    let u = ControlCommand {
        vx: (b * raw[0] + (1.0 - b) * state.prev_command.vx).clamp(-cfg.v_max, cfg.v_max),
        vy: (b * raw[1] + (1.0 - b) * state.prev_command.vy).clamp(-cfg.v_max, cfg.v_max),
    };
    next.prev_command = u;
    (u, next)
}
