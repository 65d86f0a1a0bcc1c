//! Cycle-time overhead of trace calls.
//!
//! Each executed trace call costs a constant `c` microseconds. With `n`
//! calls per cycle and cycle time `T` milliseconds the calls take the
//! fraction `n * c / (1000 * T)` of the cycle.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

/// Default share of the cycle the whole program may use.
pub const DEFAULT_HEADROOM: f64 = 0.80;

pub const GRID_CALLS: [u64; 7] = [10, 50, 100, 200, 300, 400, 1000];
pub const GRID_CYCLES_MS: [f64; 3] = [10.0, 5.0, 1.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OverheadError {
    #[error("invalid {name}: {value}")]
    Invalid { name: &'static str, value: f64 },
    #[error("call count must be positive")]
    NoCalls,
}

fn check(name: &'static str, value: f64, ok: bool) -> Result<f64, OverheadError> {
    if value.is_finite() && ok {
        Ok(value)
    } else {
        Err(OverheadError::Invalid { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverheadParams {
    /// Cost of one trace call in microseconds.
    pub per_call_us: f64,
    pub calls_per_cycle: u64,
    pub cycle_ms: f64,
    /// Share of the cycle the trace calls may occupy.
    pub headroom: f64,
}

impl OverheadParams {
    pub fn new(calls_per_cycle: u64, cycle_ms: f64, per_call_us: f64) -> Self {
        OverheadParams {
            per_call_us,
            calls_per_cycle,
            cycle_ms,
            headroom: DEFAULT_HEADROOM,
        }
    }

    pub fn validate(&self) -> Result<(), OverheadError> {
        check("per-call cost", self.per_call_us, self.per_call_us >= 0.0)?;
        check("cycle time", self.cycle_ms, self.cycle_ms > 0.0)?;
        check("headroom", self.headroom, self.headroom > 0.0 && self.headroom <= 1.0)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverheadEstimate {
    /// Share of the cycle spent in trace calls.
    pub fraction: f64,
    /// Time spent in trace calls per cycle, microseconds.
    pub absolute_us: f64,
    /// The trace calls alone fit in the headroom. Whether the rest of the
    /// program still fits is for the caller to decide.
    pub within_headroom: bool,
}

impl OverheadEstimate {
    pub fn percent(&self) -> f64 {
        self.fraction * 100.0
    }
}

pub fn estimate_params(p: &OverheadParams) -> Result<OverheadEstimate, OverheadError> {
    p.validate()?;
    let absolute_us = p.calls_per_cycle as f64 * p.per_call_us;
    let fraction = absolute_us / (1000.0 * p.cycle_ms);
    Ok(OverheadEstimate {
        fraction,
        absolute_us,
        within_headroom: fraction <= p.headroom,
    })
}

/// Overhead of `calls` trace calls per cycle of `cycle_ms` at `call_us`
/// each, with the default headroom.
pub fn estimate(calls: u64, cycle_ms: f64, call_us: f64) -> Result<OverheadEstimate, OverheadError> {
    estimate_params(&OverheadParams::new(calls, cycle_ms, call_us))
}

/// Per-call cost in microseconds from the cycle time increase (ms)
/// measured at a known number of calls per cycle.
pub fn calibrate(delta_ms: f64, calls: u64) -> Result<f64, OverheadError> {
    check("cycle time increase", delta_ms, delta_ms >= 0.0)?;
    if calls == 0 {
        return Err(OverheadError::NoCalls);
    }
    Ok(delta_ms * 1000.0 / calls as f64)
}

/// Largest call count whose share of the cycle stays within `budget`.
pub fn max_trace_calls(cycle_ms: f64, call_us: f64, budget: f64) -> Result<u64, OverheadError> {
    check("cycle time", cycle_ms, cycle_ms > 0.0)?;
    check("per-call cost", call_us, call_us > 0.0)?;
    check("budget", budget, (0.0..=1.0).contains(&budget))?;
    let limit = budget * 1000.0 * cycle_ms;
    let mut n = (limit / call_us).floor() as u64;
    // The float quotient can land on either side of an exact integer.
    while n > 0 && n as f64 * call_us > limit {
        n -= 1;
    }
    while (n + 1) as f64 * call_us <= limit {
        n += 1;
    }
    Ok(n)
}

/// Overhead in percent for each call count (rows) and cycle time
/// (columns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadGrid {
    pub per_call_us: f64,
    pub calls: Vec<u64>,
    pub cycles_ms: Vec<f64>,
    pub percent: Vec<Vec<f64>>,
}

pub fn grid(calls: &[u64], cycles_ms: &[f64], call_us: f64) -> Result<OverheadGrid, OverheadError> {
    let percent = calls
        .iter()
        .map(|n| {
            cycles_ms
                .iter()
                .map(|t| estimate(*n, *t, call_us).map(|e| e.percent()))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OverheadGrid {
        per_call_us: call_us,
        calls: calls.to_vec(),
        cycles_ms: cycles_ms.to_vec(),
        percent,
    })
}

/// The 7 x 3 grid for the standard call counts and cycle times.
pub fn reproduce_grid(call_us: f64) -> Result<OverheadGrid, OverheadError> {
    grid(&GRID_CALLS, &GRID_CYCLES_MS, call_us)
}

fn fmt_ms(t: f64) -> String {
    format!("{t}")
}

impl OverheadGrid {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("calls");
        for t in &self.cycles_ms {
            let _ = write!(out, ",{}ms", fmt_ms(*t));
        }
        out.push('\n');
        for (n, row) in self.calls.iter().zip(&self.percent) {
            let _ = write!(out, "{n}");
            for p in row {
                let _ = write!(out, ",{p:.4}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("trace call cost {} us\n{:>8}", self.per_call_us, "calls");
        for t in &self.cycles_ms {
            let _ = write!(out, " {:>9}", format!("{}ms", fmt_ms(*t)));
        }
        out.push('\n');
        for (n, row) in self.calls.iter().zip(&self.percent) {
            let _ = write!(out, "{n:>8}");
            for p in row {
                let _ = write!(out, " {:>8.2}%", p);
            }
            out.push('\n');
        }
        out
    }
}
