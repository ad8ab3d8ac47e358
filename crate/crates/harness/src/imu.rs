//! IMU log input.
//!
//! Logs are comma-separated with the header `t,ax,ay,az,mx,my,mz,wx,wy,wz`.
//! The accelerometer is treated as a gravity-direction sensor, which holds
//! only while the body's own acceleration is small. Both the accelerometer
//! and the magnetometer are normalized to unit directions on read.

use std::path::Path;

use lincf_core::filters::MeasurementFrame;
use lincf_core::so3::Vec3;

use crate::error::{HarnessError, Result};

pub const IMU_HEADER: [&str; 10] = ["t", "ax", "ay", "az", "mx", "my", "mz", "wx", "wy", "wz"];

/// One validated log row. `a` and `m` are unit vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuLogRecord {
    pub t: f64,
    pub a: Vec3,
    pub m: Vec3,
    pub omega: Vec3,
}

impl ImuLogRecord {
    /// Accelerometer first, magnetometer second, matching the reference order.
    pub fn to_frame(&self) -> MeasurementFrame {
        MeasurementFrame {
            t: self.t,
            vectors: vec![self.a, self.m],
            omega_m: self.omega,
        }
    }
}

pub fn parse_imu_csv(path: &Path) -> Result<Vec<ImuLogRecord>> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_imu_reader(file, path)
}

/// Parse from any reader; `path` is only used in error messages.
pub fn parse_imu_reader<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<ImuLogRecord>> {
    let input_err = |line: u64, message: String| HarnessError::Input {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| input_err(1, e.to_string()))?.clone();
    if header.iter().ne(IMU_HEADER.iter().copied()) {
        return Err(input_err(
            1,
            format!("header must be '{}', found '{}'", IMU_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut out: Vec<ImuLogRecord> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            input_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != IMU_HEADER.len() {
            return Err(input_err(line, format!("expected {} fields, found {}", IMU_HEADER.len(), rec.len())));
        }
        let mut v = [0.0; 10];
        for (k, (field, name)) in rec.iter().zip(IMU_HEADER).enumerate() {
            let x: f64 = field
                .parse()
                .map_err(|_| input_err(line, format!("{name}: '{field}' is not a number")))?;
            if !x.is_finite() {
                return Err(input_err(line, format!("{name}: non-finite value '{field}'")));
            }
            v[k] = x;
        }
        let a = Vec3::new(v[1], v[2], v[3]);
        let m = Vec3::new(v[4], v[5], v[6]);
        for (name, x) in [("accelerometer", &a), ("magnetometer", &m)] {
            if x.norm() == 0.0 {
                return Err(input_err(line, format!("{name} vector is zero")));
            }
        }
        let t = v[0];
        if let Some(prev) = out.last() {
            if !(t > prev.t) {
                return Err(input_err(line, format!("time {t} does not increase after {}", prev.t)));
            }
        }
        out.push(ImuLogRecord {
            t,
            a: a.normalize(),
            m: m.normalize(),
            omega: Vec3::new(v[7], v[8], v[9]),
        });
    }
    Ok(out)
}

/// Write frames in the log format (used to replay simulated data).
pub fn write_imu_csv(path: &Path, frames: &[MeasurementFrame]) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => HarnessError::io(path, e),
        other => HarnessError::Config(format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(IMU_HEADER).map_err(io)?;
    for f in frames {
        if f.vectors.len() != 2 {
            return Err(HarnessError::Config("IMU logs carry exactly two direction sensors".into()));
        }
        let fields = std::iter::once(f.t)
            .chain(f.vectors[0].iter().copied())
            .chain(f.vectors[1].iter().copied())
            .chain(f.omega_m.iter().copied())
            .map(lincf_core::log::format_value);
        w.write_record(fields).map_err(io)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}
