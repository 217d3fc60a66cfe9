use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "timestep,det_return,stoch_return,z_std,alpha,critic_loss,policy_loss";

/// One evaluation point. Quantities that do not exist yet (losses before the
/// first update, Z-std for scalar critics or before the probe is frozen) are
/// NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub timestep: usize,
    pub det_return: f64,
    pub stoch_return: f64,
    pub z_std: f64,
    pub alpha: f64,
    pub critic_loss: f64,
    pub policy_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<MetricsRow>,
}

impl RunMetrics {
    pub fn push(&mut self, row: MetricsRow) {
        if let Some(last) = self.rows.last() {
            assert!(row.timestep > last.timestep, "metric timesteps must increase");
        }
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    /// Shortest round-trip formatting, so equal runs give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.timestep, r.det_return, r.stoch_return, r.z_std, r.alpha, r.critic_loss, r.policy_loss
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format { what: "metrics csv", message: m };
        let mut lines = text.lines();
        if lines.next() != Some(METRICS_HEADER) {
            return Err(bad("missing or unexpected header".into()));
        }
        let mut metrics = RunMetrics::default();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("row {} has {} fields", i + 1, f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1)));
            let timestep = f[0].parse::<usize>().map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            if metrics.last().is_some_and(|r| r.timestep >= timestep) {
                return Err(bad(format!("row {} does not increase the timestep", i + 1)));
            }
            metrics.rows.push(MetricsRow {
                timestep,
                det_return: num(f[1])?,
                stoch_return: num(f[2])?,
                z_std: num(f[3])?,
                alpha: num(f[4])?,
                critic_loss: num(f[5])?,
                policy_loss: num(f[6])?,
            });
        }
        Ok(metrics)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_nan_and_bits() {
        let mut m = RunMetrics::default();
        m.push(MetricsRow { timestep: 0, det_return: -0.4, stoch_return: 0.1, z_std: f64::NAN, alpha: 1.0, critic_loss: f64::NAN, policy_loss: f64::NAN });
        m.push(MetricsRow { timestep: 500, det_return: 0.955, stoch_return: 1.0 / 3.0, z_std: 0.25, alpha: 0.3, critic_loss: 1e-7, policy_loss: -2.5 });
        let text = m.to_csv();
        assert!(text.starts_with(METRICS_HEADER));
        let back = RunMetrics::from_csv(&text).unwrap();
        assert_eq!(back.to_csv(), text);
        assert!(back.rows[0].z_std.is_nan());
        assert_eq!(back.rows[1].stoch_return.to_bits(), (1.0f64 / 3.0).to_bits());
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(RunMetrics::from_csv("a,b\n").is_err());
        assert!(RunMetrics::from_csv(&format!("{METRICS_HEADER}\n1,2,3\n")).is_err());
        assert!(RunMetrics::from_csv(&format!("{METRICS_HEADER}\n5,0,0,0,0,0,0\n5,0,0,0,0,0,0\n")).is_err());
    }
}
