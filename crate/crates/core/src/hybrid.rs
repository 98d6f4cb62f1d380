//! The switched system with hysteresis.
//!
//! Mode `R` runs until the line `x = -x_param` is reached, mode `L` until
//! `x = +x_param`. Crossing the line that switched the current mode on does
//! nothing.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{run_to_line, CrossingEvent, DenseStep, Tolerances};
use crate::model::{Mode, ModelSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    Switches(usize),
    Time(f64),
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::Switches(64)
    }
}

/// The line whose crossing ends a mode.
pub fn exit_line(mode: Mode, x_param: f64) -> f64 {
    match mode {
        Mode::R => -x_param,
        Mode::L => x_param,
    }
}

#[derive(Clone, Debug)]
pub struct ModeArc {
    pub mode: Mode,
    pub steps: Vec<DenseStep>,
}

impl ModeArc {
    pub fn t_start(&self) -> Option<f64> {
        self.steps.first().map(|s| s.t_start)
    }

    pub fn t_end(&self) -> Option<f64> {
        self.steps.last().map(|s| s.t_end)
    }

    pub fn end_state(&self) -> Option<(f64, f64)> {
        self.steps.last().map(|s| s.y_end)
    }

    /// Dense state at `t`, if `t` lies inside this arc.
    pub fn eval(&self, t: f64) -> Option<(f64, f64)> {
        let i = self.steps.partition_point(|s| s.t_end < t);
        let s = self.steps.get(i)?;
        (t >= s.t_start).then(|| s.eval(t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchEvent {
    pub event: CrossingEvent,
    pub new_mode: Mode,
}

#[derive(Clone, Debug)]
pub struct HybridTrajectory {
    pub arcs: Vec<ModeArc>,
    pub events: Vec<SwitchEvent>,
    pub initial_mode: Mode,
    pub x_param: f64,
    pub initial_state: (f64, f64),
}

/// One exported sample, in physical coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub mode: &'static str,
    pub event: u8,
}

impl HybridTrajectory {
    pub fn t_end(&self) -> f64 {
        self.arcs.iter().rev().find_map(|a| a.t_end()).unwrap_or(0.0)
    }

    pub fn final_state(&self) -> (f64, f64) {
        self.arcs
            .iter()
            .rev()
            .find_map(|a| a.end_state())
            .unwrap_or(self.initial_state)
    }

    /// States at the switches into `mode`.
    pub fn switch_states(&self, mode: Mode) -> Vec<(f64, f64)> {
        self.events
            .iter()
            .filter(|e| e.new_mode == mode)
            .map(|e| e.event.state)
            .collect()
    }

    /// Uniform samples every `dt` plus one row per switch, sorted by time.
    /// Event rows carry the mode being switched into.
    pub fn sample(&self, model: &ModelSpec, dt: f64) -> Result<Vec<TrajectoryRow>> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("sampling step must be positive, got {dt}")));
        }
        let row = |t: f64, s: (f64, f64), mode: Mode, event: u8| {
            let (x, y) = model.to_physical(s);
            TrajectoryRow {
                t,
                x,
                y,
                mode: mode.as_str(),
                event,
            }
        };
        let t_end = self.t_end();
        let mut rows = Vec::new();
        let mut arc = 0;
        let mut k: u64 = 0;
        loop {
            let t = k as f64 * dt;
            if t > t_end {
                break;
            }
            while arc + 1 < self.arcs.len() && self.arcs[arc].t_end().is_some_and(|e| e < t) {
                arc += 1;
            }
            let a = &self.arcs[arc];
            let state = if t == 0.0 {
                Some(self.initial_state)
            } else {
                a.eval(t)
            };
            if let Some(s) = state {
                rows.push(row(t, s, a.mode, 0));
            }
            k += 1;
        }
        for e in &self.events {
            rows.push(row(e.event.t_star, e.event.state, e.new_mode, 1));
        }
        // stable sort keeps a sample ahead of an event at the same instant
        rows.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(rows)
    }
}

pub fn simulate(
    model: &ModelSpec,
    x_param: f64,
    init: (f64, f64),
    init_mode: Mode,
    stop: StopRule,
    tol: &Tolerances,
) -> Result<HybridTrajectory> {
    if !x_param.is_finite() {
        return Err(Error::Config("x_param must be finite".into()));
    }
    match stop {
        StopRule::Time(t) if !(t > 0.0 && t.is_finite()) => {
            return Err(Error::Config(format!("stop time must be positive, got {t}")));
        }
        _ => {}
    }
    model.bounds.check(init.0, init.1)?;

    let mut traj = HybridTrajectory {
        arcs: Vec::new(),
        events: Vec::new(),
        initial_mode: init_mode,
        x_param,
        initial_state: init,
    };
    let mut mode = init_mode;
    let mut state = init;
    let mut t = 0.0;

    loop {
        let t_stop = match stop {
            StopRule::Switches(n) if traj.events.len() >= n => break,
            StopRule::Switches(_) => None,
            StopRule::Time(end) if t >= end => break,
            StopRule::Time(end) => Some(end),
        };
        let line = exit_line(mode, x_param);
        let run = run_to_line(model.field(mode), state, t, line, t_stop, tol, &model.bounds)?;
        traj.arcs.push(ModeArc {
            mode,
            steps: run.steps,
        });
        let Some(event) = run.event else { break };
        mode = mode.flip();
        state = event.state;
        t = event.t_star;
        traj.events.push(SwitchEvent {
            event,
            new_mode: mode,
        });
    }
    Ok(traj)
}
