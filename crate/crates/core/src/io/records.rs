use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One pre-impact row of a run: the aSLIP state, its H-LIP reference, the
/// realized and reference step sizes and the step-to-step mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub stance: char,
    pub x: f64,
    pub p_x: f64,
    pub v_x: f64,
    pub y: f64,
    pub p_y: f64,
    pub v_y: f64,
    pub z: f64,
    pub u_x: f64,
    pub u_y: f64,
    /// Reference global position; empty for orbit references.
    pub ref_x: Option<f64>,
    pub ref_p_x: Option<f64>,
    pub ref_v_x: Option<f64>,
    pub ref_y: Option<f64>,
    pub ref_p_y: Option<f64>,
    pub ref_v_y: Option<f64>,
    pub ref_u_x: Option<f64>,
    pub ref_u_y: Option<f64>,
    /// `x[k+1] - A x[k] - B u[k]` of `[p, v]`; empty on the last row.
    pub w_p_x: Option<f64>,
    pub w_v_x: Option<f64>,
    pub w_p_y: Option<f64>,
    pub w_v_y: Option<f64>,
}

pub const STEP_COLUMNS: [&str; 24] = [
    "k", "t", "stance", "x", "p_x", "v_x", "y", "p_y", "v_y", "z", "u_x", "u_y", "ref_x",
    "ref_p_x", "ref_v_x", "ref_y", "ref_p_y", "ref_v_y", "ref_u_x", "ref_u_y", "w_p_x", "w_v_x",
    "w_p_y", "w_v_y",
];

impl StepRecord {
    /// aSLIP plane state: `[x, p, v]` when `extended`, else `[p, v]`.
    pub fn plane(&self, axis: usize, extended: bool) -> Vec<f64> {
        let (g, p, v) = if axis == 0 {
            (self.x, self.p_x, self.v_x)
        } else {
            (self.y, self.p_y, self.v_y)
        };
        if extended {
            vec![g, p, v]
        } else {
            vec![p, v]
        }
    }

    /// Reference plane state in the same layout, if recorded.
    pub fn reference(&self, axis: usize, extended: bool) -> Option<Vec<f64>> {
        let (g, p, v) = if axis == 0 {
            (self.ref_x, self.ref_p_x, self.ref_v_x)
        } else {
            (self.ref_y, self.ref_p_y, self.ref_v_y)
        };
        if extended {
            Some(vec![g?, p?, v?])
        } else {
            Some(vec![p?, v?])
        }
    }

    pub fn error(&self, axis: usize, extended: bool) -> Option<Vec<f64>> {
        let r = self.reference(axis, extended)?;
        Some(
            self.plane(axis, extended)
                .iter()
                .zip(&r)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn u(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.u_x
        } else {
            self.u_y
        }
    }
}

pub fn write_steps_csv<W: Write>(records: &[StepRecord], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    writer.write_record(STEP_COLUMNS)?;
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads step rows; a missing column is a schema error naming it.
pub fn read_steps_csv<R: Read>(input: R) -> Result<Vec<StepRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    for column in STEP_COLUMNS {
        if !headers.iter().any(|h| h == column) {
            return Err(Error::Schema(format!(
                "steps CSV is missing column `{column}`"
            )));
        }
    }
    Ok(reader
        .deserialize()
        .collect::<std::result::Result<Vec<StepRecord>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(k: usize) -> StepRecord {
        StepRecord {
            k,
            t: 0.35 * k as f64,
            stance: if k % 2 == 0 { 'L' } else { 'R' },
            x: 0.1,
            p_x: 0.02,
            v_x: 0.3,
            y: 0.0,
            p_y: -0.1,
            v_y: 0.2,
            z: 1.0,
            u_x: 0.1,
            u_y: -0.3,
            ref_x: None,
            ref_p_x: Some(0.02),
            ref_v_x: Some(0.3),
            ref_y: None,
            ref_p_y: Some(-0.1),
            ref_v_y: Some(0.21),
            ref_u_x: Some(0.1),
            ref_u_y: Some(-0.3),
            w_p_x: Some(1e-3),
            w_v_x: None,
            w_p_y: None,
            w_v_y: None,
        }
    }

    #[test]
    fn round_trip() {
        let rows: Vec<StepRecord> = (0..4).map(record).collect();
        let mut buf = Vec::new();
        write_steps_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_steps_csv(buf.as_slice()).unwrap(), rows);
        assert!(rows[0].reference(0, true).is_none());
        let e = rows[0].error(1, false).unwrap();
        assert!((e[1] + 0.01).abs() < 1e-12);
    }

    #[test]
    fn missing_column_is_named() {
        let rows: Vec<StepRecord> = (0..2).map(record).collect();
        let mut buf = Vec::new();
        write_steps_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf)
            .unwrap()
            .replacen("ref_v_y", "other", 1);
        let err = read_steps_csv(text.as_bytes()).unwrap_err();
        assert!(
            matches!(&err, Error::Schema(m) if m.contains("ref_v_y")),
            "{err}"
        );
    }
}
