use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Two-interface profile on `[0, 2]` with values in `[-1, 1]`.
pub const DEFAULT_IC_CSV: &str = include_str!("../../data/ic_default.csv");

/// Spline values are clipped to this magnitude.
const CLAMP: f64 = 1.5;

#[derive(Deserialize)]
struct Row {
    x: f64,
    v: f64,
}

/// Parses an `x,v` CSV with a header line. `path` only labels errors.
pub fn read_ic_csv(bytes: &[u8], path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let mut points = Vec::new();
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::format(path, format!("row {}: {e}", line + 1)))?;
        if !row.x.is_finite() || !row.v.is_finite() {
            return Err(Error::format(path, format!("row {}: non-finite value", line + 1)));
        }
        points.push((row.x, row.v));
    }
    if points.len() < 4 {
        return Err(Error::format(path, format!("need at least 4 points, found {}", points.len())));
    }
    Ok(points)
}

/// Natural cubic spline through `points`, evaluated on `grid` and clipped to
/// `[-1.5, 1.5]`.
pub fn cubic_spline_ic(points: &[(f64, f64)], grid: &[f64]) -> Result<Vector> {
    let n = points.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("cubic spline needs at least 4 points, got {n}")));
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidArgument("spline abscissae must be strictly increasing".into()));
    }
    let (lo, hi) = (points[0].0, points[n - 1].0);
    let slack = 1e-12 * (hi - lo);
    if let Some(g) = grid.iter().find(|&&g| g < lo - slack || g > hi + slack) {
        return Err(Error::InvalidArgument(format!("grid point {g} outside [{lo}, {hi}]")));
    }

    let h: Vec<f64> = points.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let slope: Vec<f64> = points.windows(2).zip(&h).map(|(w, h)| (w[1].1 - w[0].1) / h).collect();
    // second derivatives, zero at both ends
    let m = n - 2;
    let mut sys = Matrix::zeros(m, m);
    let mut rhs = Vector::zeros(m);
    for i in 0..m {
        sys[(i, i)] = 2.0 * (h[i] + h[i + 1]);
        if i > 0 {
            sys[(i, i - 1)] = h[i];
        }
        if i + 1 < m {
            sys[(i, i + 1)] = h[i + 1];
        }
        rhs[i] = 6.0 * (slope[i + 1] - slope[i]);
    }
    let inner = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular spline system".into()))?;
    let mut second = vec![0.0; n];
    second[1..n - 1].copy_from_slice(inner.as_slice());

    let values = grid.iter().map(|&g| {
        let k = points.partition_point(|p| p.0 <= g).clamp(1, n - 1) - 1;
        let (x0, y0) = points[k];
        let (x1, y1) = points[k + 1];
        let hk = h[k];
        let (a, b) = (x1 - g, g - x0);
        let s = second[k] * a.powi(3) / (6.0 * hk)
            + second[k + 1] * b.powi(3) / (6.0 * hk)
            + (y0 / hk - second[k] * hk / 6.0) * a
            + (y1 / hk - second[k + 1] * hk / 6.0) * b;
        s.clamp(-CLAMP, CLAMP)
    });
    Ok(Vector::from_iterator(grid.len(), values))
}
