use std::io::Write;

use ndarray::Array2;

use crate::error::{FlacError, Result};
use crate::nn::Params;

/// Square evaluation grid `[min, max]²` with `resolution` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub resolution: usize,
}

impl GridSpec {
    fn node(&self, i: usize) -> f64 {
        if self.resolution == 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.resolution - 1) as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldRow {
    pub x: [f64; 2],
    pub u: [f64; 2],
}

/// Evaluates the velocity field on a 2-D latent grid at generation time `tau`.
///
/// Rows are ordered with the first coordinate varying slowest.
pub fn export_field_grid(actor: &Params, s: &[f64], tau: f64, grid: GridSpec) -> Result<Vec<FieldRow>> {
    if actor.output_dim() != 2 {
        return Err(FlacError::Shape {
            context: "field grid action dimension",
            expected: 2,
            actual: actor.output_dim(),
        });
    }
    if grid.resolution == 0 || !(grid.max >= grid.min) {
        return Err(FlacError::config("grid", "need resolution ≥ 1 and max ≥ min"));
    }
    let n = grid.resolution;
    let ds = s.len();
    let input = Array2::from_shape_fn((n * n, ds + 3), |(row, col)| {
        let (i, j) = (row / n, row % n);
        match col {
            c if c < ds => s[c],
            c if c == ds => tau,
            c if c == ds + 1 => grid.node(i),
            _ => grid.node(j),
        }
    });
    let u = actor.forward_batch(&input)?;
    Ok((0..n * n)
        .map(|row| FieldRow {
            x: [input[[row, ds + 1]], input[[row, ds + 2]]],
            u: [u[[row, 0]], u[[row, 1]]],
        })
        .collect())
}

/// Writes `x1,x2,u1,u2` rows with 17 significant digits.
pub fn write_field_csv<W: Write>(rows: &[FieldRow], mut out: W) -> Result<()> {
    writeln!(out, "x1,x2,u1,u2")?;
    for r in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            r.x[0], r.x[1], r.u[0], r.u[1]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::fields;

    #[test]
    fn counts_and_constant_rows() {
        let actor = fields::constant(0, &[1.5, -0.25]);
        let rows = export_field_grid(
            &actor,
            &[],
            0.5,
            GridSpec {
                min: -6.0,
                max: 6.0,
                resolution: 20,
            },
        )
        .unwrap();
        assert_eq!(rows.len(), 400);
        assert!(rows.iter().all(|r| r.u == [1.5, -0.25]));
        assert_eq!(rows[0].x, [-6.0, -6.0]);
        assert_eq!(rows[399].x, [6.0, 6.0]);
        assert_eq!(rows[1].x, [-6.0, -6.0 + 12.0 / 19.0]);
    }

    #[test]
    fn zero_field_rows_are_zero() {
        let actor = fields::constant(1, &[0.0, 0.0]);
        let grid = GridSpec {
            min: -1.0,
            max: 1.0,
            resolution: 3,
        };
        let rows = export_field_grid(&actor, &[2.0], 0.0, grid).unwrap();
        assert!(rows.iter().all(|r| r.u == [0.0, 0.0]));
    }

    #[test]
    fn csv_layout() {
        let rows = vec![FieldRow {
            x: [0.1, -2.0],
            u: [1.0 / 3.0, 0.0],
        }];
        let mut buf = Vec::new();
        write_field_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x1,x2,u1,u2"));
        let fields: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(fields, vec![0.1, -2.0, 1.0 / 3.0, 0.0]);
    }

    #[test]
    fn rejects_non_planar_actions() {
        let actor = fields::constant(0, &[0.0, 0.0, 0.0]);
        let grid = GridSpec {
            min: 0.0,
            max: 1.0,
            resolution: 2,
        };
        assert!(export_field_grid(&actor, &[], 0.0, grid).is_err());
    }
}
