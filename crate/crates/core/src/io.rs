//! CSV formats: measurement files `(x1, x2, u)` and field dumps.

use std::io::{Read, Write};

use thiserror::Error;

use crate::geometry::Vec2;
use crate::solver::FieldSample;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Csv(csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                return IoError::Io(io);
            }
            unreachable!("is_io_error implies an io kind");
        }
        IoError::Csv(e)
    }
}

/// Reads `x1, x2, u` rows (with a header row).
pub fn read_measurements<R: Read>(input: R) -> Result<(Vec<Vec2>, Vec<f64>), IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let expected = ["x1", "x2", "u"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(IoError::Parse {
            line: 1,
            message: format!(
                "expected header `x1,x2,u`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut points = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| IoError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64, IoError> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>().map_err(|_| IoError::Parse {
                line,
                message: format!("column `{}`: cannot parse `{raw}` as a number", expected[i]),
            })
        };
        points.push(Vec2::new(field(0)?, field(1)?));
        values.push(field(2)?);
    }
    Ok((points, values))
}

pub fn write_measurements<W: Write>(out: W, points: &[Vec2], values: &[f64]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x1", "x2", "u"])?;
    for (p, v) in points.iter().zip(values) {
        w.write_record([p.x.to_string(), p.y.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Field dump rows: `x1, x2, u, ux, uy, near_boundary_flag`.
pub fn write_field<W: Write>(out: W, samples: &[FieldSample]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x1", "x2", "u", "ux", "uy", "near_boundary_flag"])?;
    for s in samples {
        w.write_record([
            s.x.x.to_string(),
            s.x.y.to_string(),
            s.u.to_string(),
            s.grad.x.to_string(),
            s.grad.y.to_string(),
            u8::from(s.near_boundary).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a perturbation map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSample {
    pub x: Vec2,
    /// `|u − H|`
    pub potential: f64,
    /// `|∇u − ∇H|`
    pub gradient: f64,
    pub near_boundary: bool,
}

/// Rows: `x1, x2, abs_u_minus_h, abs_grad_u_minus_grad_h, near_flag`.
pub fn write_perturbation<W: Write>(out: W, samples: &[PerturbationSample]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x1", "x2", "abs_u_minus_h", "abs_grad_u_minus_grad_h", "near_flag"])?;
    for s in samples {
        w.write_record([
            s.x.x.to_string(),
            s.x.y.to_string(),
            s.potential.to_string(),
            s.gradient.to_string(),
            u8::from(s.near_boundary).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
