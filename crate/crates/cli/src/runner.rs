//! Wall-clock pacing for the control loop.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use flexinst_core::control::{ControlError, Controller};
use flexinst_core::telemetry::TelemetryRecord;
use log::warn;

use crate::bridge::SnapshotSlot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// Sleep so that ticks follow the loop period.
    RealTime,
    /// Step back to back.
    Unpaced,
}

pub struct RunLimits<'a> {
    pub max_ticks: Option<u64>,
    /// Stop once the input source reports it has no more data.
    pub until_input_ends: bool,
    pub stop: Option<&'a AtomicBool>,
}

/// Step `ctl` until a limit is reached, publishing a snapshot every
/// `decimation` ticks and handing each record to `sink`.
pub fn run_loop(
    ctl: &mut Controller,
    pacing: Pacing,
    limits: RunLimits<'_>,
    snapshots: Option<&SnapshotSlot>,
    mut sink: impl FnMut(&TelemetryRecord),
) -> Result<u64, ControlError> {
    let dt = ctl.config().control.period();
    let decimation = u64::from(ctl.config().control.snapshot_decimation);
    let period = Duration::from_secs_f64(dt);
    let mut deadline = Instant::now();
    let mut ticks = 0u64;
    loop {
        if limits.max_ticks.is_some_and(|m| ticks >= m)
            || (limits.until_input_ends && ctl.input_finished())
            || limits.stop.is_some_and(|s| s.load(Ordering::SeqCst))
        {
            return Ok(ticks);
        }
        let rec = ctl.step(None, dt)?;
        ticks += 1;
        if let Some(slot) = snapshots {
            if rec.tick % decimation == 0 {
                slot.publish(ctl.snapshot());
            }
        }
        sink(&rec);
        if pacing == Pacing::RealTime {
            deadline += period;
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            } else if now - deadline > period {
                warn!(
                    "control loop overran by {:?} at tick {}",
                    now - deadline,
                    rec.tick
                );
                deadline = now;
            }
        }
    }
}
