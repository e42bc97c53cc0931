use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares fit of `y = a x^2 + b x + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `1 - SS_res / SS_tot`, or 0 when `y` is constant.
    pub r_squared: f64,
}

impl QuadraticFit {
    pub fn predict(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }

    /// Location of the extremum, if the fit is curved.
    pub fn vertex(&self) -> Option<f64> {
        (self.a != 0.0).then(|| -self.b / (2.0 * self.a))
    }
}

pub fn fit_quadratic(x: &[f64], y: &[f64]) -> Result<QuadraticFit> {
    if x.len() != y.len() {
        return Err(Error::invalid("x and y lengths differ"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in fit input"));
    }
    let mut distinct = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::invalid(
            "quadratic fit needs at least 3 distinct x values",
        ));
    }
    // Center and scale x so the design matrix stays well conditioned.
    let n = x.len();
    let center = x.iter().sum::<f64>() / n as f64;
    let scale = x.iter().map(|v| (v - center).abs()).fold(0.0, f64::max);
    let design = DMatrix::from_fn(n, 3, |i, j| {
        let u = (x[i] - center) / scale;
        u.powi(2 - j as i32)
    });
    let target = DVector::from_column_slice(y);
    let qr = design.qr();
    let rhs = qr.q().transpose() * &target;
    let coeffs = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::invalid("degenerate design matrix"))?;
    let (au, bu, cu) = (coeffs[0], coeffs[1], coeffs[2]);
    // y = au u^2 + bu u + cu with u = (x - center) / scale
    let a = au / (scale * scale);
    let b = bu / scale - 2.0 * au * center / (scale * scale);
    let c = cu - bu * center / scale + au * center * center / (scale * scale);

    let mean_y = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let u = (xi - center) / scale;
            (yi - ((au * u + bu) * u + cu)).powi(2)
        })
        .sum();
    let r_squared = if ss_tot == 0.0 {
        0.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(QuadraticFit { a, b, c, r_squared })
}
