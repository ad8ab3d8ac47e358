//! Scalar summaries of a run log.

use std::path::Path;

use lincf_core::log::Table;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Attitude error below which a run counts as settled, degrees.
pub const SETTLING_THRESHOLD_DEG: f64 = 1.0;
/// Relative slack for Lyapunov increases before they count as violations.
pub const LYAPUNOV_SLACK: f64 = 1e-8;
/// Lower edge of the band used for torque smoothness, Hz.
pub const HIGH_FREQUENCY_CUTOFF: f64 = 10.0;

/// Fields that cannot be computed for a run (for example errors against
/// truth in log replay) are left empty and omitted from the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunMetrics {
    pub label: String,
    pub samples: usize,
    pub duration: f64,
    pub final_attitude_error_deg: Option<f64>,
    pub peak_attitude_error_deg: Option<f64>,
    pub final_bias_error_norm: Option<f64>,
    pub peak_bias_error_norm: Option<f64>,
    pub settling_threshold_deg: f64,
    pub settled: bool,
    /// Time after which the attitude error stays below the threshold.
    pub settling_time: Option<f64>,
    pub lyapunov_violations: Option<usize>,
    /// Largest deviation of an estimated direction from unit norm.
    pub max_estimate_norm_deviation: Option<f64>,
    pub final_bias_estimate: Option<[f64; 3]>,
    /// Mean torque power above the cutoff frequency, N²m².
    pub torque_high_frequency_power: Option<f64>,
}

impl RunMetrics {
    fn base(label: &str, table: &Table) -> Self {
        let t = table.column("t").unwrap_or_default();
        Self {
            label: label.to_string(),
            samples: table.len(),
            duration: t.last().copied().unwrap_or(0.0) - t.first().copied().unwrap_or(0.0),
            settling_threshold_deg: SETTLING_THRESHOLD_DEG,
            ..Default::default()
        }
    }

    fn attitude(&mut self, table: &Table) {
        let (Some(t), Some(err)) = (table.column("t"), table.column("att_err_deg")) else {
            return;
        };
        self.final_attitude_error_deg = err.last().copied();
        self.peak_attitude_error_deg = Some(err.iter().copied().fold(0.0, f64::max));
        self.settling_time = settling_time(&t, &err, SETTLING_THRESHOLD_DEG);
        self.settled = self.settling_time.is_some();
    }

    /// Simulated estimation run (log carries truth columns).
    pub fn from_estimation(label: &str, table: &Table) -> Self {
        let mut m = Self::base(label, table);
        m.attitude(table);
        if let Some(e) = table.column("etatilde_norm") {
            m.final_bias_error_norm = e.last().copied();
            m.peak_bias_error_norm = Some(e.iter().copied().fold(0.0, f64::max));
        }
        m.lyapunov_violations = table.column("lyapunov").map(|v| lyapunov_violations(&v));
        m.internal_consistency(table);
        m
    }

    /// Log replay: no truth, only properties of the estimates themselves.
    pub fn from_replay(label: &str, table: &Table) -> Self {
        let mut m = Self::base(label, table);
        m.internal_consistency(table);
        m
    }

    fn internal_consistency(&mut self, table: &Table) {
        let mut dev: Option<f64> = None;
        for i in 1.. {
            let cols: Vec<_> = ["x", "y", "z"]
                .iter()
                .filter_map(|a| table.column(&format!("bhat{i}_{a}")))
                .collect();
            if cols.len() != 3 {
                break;
            }
            for ((x, y), z) in cols[0].iter().zip(&cols[1]).zip(&cols[2]) {
                let n = (x * x + y * y + z * z).sqrt();
                dev = Some(dev.unwrap_or(0.0).max((n - 1.0).abs()));
            }
        }
        self.max_estimate_norm_deviation = dev;
        if let (Some(x), Some(y), Some(z)) = (table.last("etahat_x"), table.last("etahat_y"), table.last("etahat_z")) {
            self.final_bias_estimate = Some([x, y, z]);
        }
    }

    /// Closed-loop control run logged at `rate` Hz.
    pub fn from_control(label: &str, table: &Table, rate: f64) -> Self {
        let mut m = Self::base(label, table);
        m.attitude(table);
        m.lyapunov_violations = table.column("v3").map(|v| lyapunov_violations(&v));
        let power: f64 = ["tau_x", "tau_y", "tau_z"]
            .iter()
            .filter_map(|c| table.column(c))
            .map(|s| high_frequency_power(&s, rate, HIGH_FREQUENCY_CUTOFF))
            .sum();
        m.torque_high_frequency_power = Some(power);
        m
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metrics are serializable")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| HarnessError::io(path, e))
    }
}

/// First time from which `err` stays below `threshold` until the end.
pub fn settling_time(t: &[f64], err: &[f64], threshold: f64) -> Option<f64> {
    let last_above = err.iter().rposition(|e| !(*e < threshold));
    match last_above {
        None => t.first().copied(),
        Some(k) => t.get(k + 1).copied(),
    }
}

/// Steps where `v` increases by more than `LYAPUNOV_SLACK` relative.
pub fn lyapunov_violations(v: &[f64]) -> usize {
    v.windows(2)
        .filter(|w| w[1] - w[0] > LYAPUNOV_SLACK * w[0].abs().max(f64::MIN_POSITIVE))
        .count()
}

/// Mean power of the mean-removed signal in frequencies above `cutoff`
/// (Parseval-normalized, both spectral halves counted).
pub fn high_frequency_power(signal: &[f64], rate: f64, cutoff: f64) -> f64 {
    let n = signal.len();
    if n < 2 {
        return 0.0;
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|x| Complex::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = rate / n as f64;
    let mut power = 0.0;
    for (k, x) in buf.iter().enumerate() {
        let f = k.min(n - k) as f64 * df;
        if f > cutoff {
            power += x.norm_sqr();
        }
    }
    power / (n as f64 * n as f64)
}
