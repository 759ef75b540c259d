//! Foothold tracking metrics over externally recorded logs.
//!
//! A tracking log is an input artifact: some controller tried to follow a
//! phase plan and recorded, per control tick, which feet were supposed to be
//! down, where they were supposed to be, and where they actually were, plus
//! one event per touchdown. Nothing here produces such logs; the metrics
//! only score them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phase::N_FEET;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("record {index} has no desired contacts; the per-record mean is undefined")]
    NoDesiredContacts { index: usize },
    #[error("the log has no {what}; the metric is undefined on empty input")]
    Empty { what: &'static str },
}

/// One control tick: desired contact flags, desired foothold positions, and
/// the measured foot positions, all in world coordinates, meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingRecord {
    pub desired_contacts: [bool; N_FEET],
    pub desired_footholds: [[f64; 3]; N_FEET],
    pub measured_feet: [[f64; 3]; N_FEET],
}

/// One landing: which foot touched down, where, and where it was aimed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchdownEvent {
    pub foot: usize,
    pub touchdown_xy: [f64; 2],
    pub target_xy: [f64; 2],
}

/// Per-tick tracking records plus per-phase touchdown events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingLog {
    pub records: Vec<TrackingRecord>,
    pub touchdowns: Vec<TouchdownEvent>,
}

fn norm3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Mean foothold tracking error, meters: the average over records of the
/// contact-weighted mean of per-foot position errors. Only feet that are
/// desired to be in contact count, so swing-leg noise never pollutes the
/// score. Every record must desire at least one contact.
pub fn compute_fter(log: &TrackingLog) -> Result<f64, MetricsError> {
    if log.records.is_empty() {
        return Err(MetricsError::Empty { what: "records" });
    }
    let mut total = 0.0;
    for (index, record) in log.records.iter().enumerate() {
        let mut sum = 0.0;
        let mut count = 0.0;
        for k in 0..N_FEET {
            if record.desired_contacts[k] {
                sum += norm3(record.desired_footholds[k], record.measured_feet[k]);
                count += 1.0;
            }
        }
        if count == 0.0 {
            return Err(MetricsError::NoDesiredContacts { index });
        }
        total += sum / count;
    }
    Ok(total / log.records.len() as f64)
}

/// Fraction of touchdowns within 5 cm of their target in the plane. The
/// boundary is closed: an error of exactly 0.05 m still counts as tracked.
pub fn compute_fts(events: &[TouchdownEvent]) -> Result<f64, MetricsError> {
    if events.is_empty() {
        return Err(MetricsError::Empty { what: "touchdowns" });
    }
    let tracked = events
        .iter()
        .filter(|e| {
            let dx = e.touchdown_xy[0] - e.target_xy[0];
            let dy = e.touchdown_xy[1] - e.target_xy[1];
            (dx * dx + dy * dy).sqrt() <= 0.05
        })
        .count();
    Ok(tracked as f64 / events.len() as f64)
}
