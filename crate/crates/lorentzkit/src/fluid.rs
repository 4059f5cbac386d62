//! Perfect-fluid structure: decompose the Ricci tensor as
//! `S = alpha g + beta C (x) C` against a unit timelike velocity field,
//! recover isotropic pressure and energy density through the Einstein field
//! equations, and classify the cosmological era.
//!
//! The decomposition scalars come from two contractions: the metric trace
//! gives `R = n alpha - beta` and the double velocity contraction gives
//! `S(rho, rho) = -alpha + beta`, so
//!
//! ```text
//! alpha = (R + S(rho, rho)) / (n - 1)
//! beta  = alpha + S(rho, rho)
//! ```
//!
//! Pressure and density invert `alpha = kappa (p - sigma) / (2 - n)`,
//! `beta = kappa (p + sigma)`.

use thiserror::Error;

use crate::geometry::{Chart, GeometryError};
use crate::operators::{metric_square_at, OperatorError, VectorField};
use crate::tensor::{TensorValue, Variance};

#[derive(Clone, Debug, Error)]
pub enum FluidError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("velocity field is not unit timelike: |g(Z,Z) + 1| = {deviation:.3e} at {point:?}")]
    NotUnitTimelike { deviation: f64, point: Vec<f64> },
    #[error("gravitational constant kappa must be nonzero")]
    KappaZero,
    #[error("pressure/density inversion requires dimension n != 2")]
    DimensionTwo,
    #[error("empty grid")]
    EmptyGrid,
}

/// Cosmological era labels from the equation-of-state taxonomy.
///
/// Exact relations (stiff, dark, dust, radiation) take priority over the
/// ratio bands, in that tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Era {
    /// p = sigma
    Stiff,
    /// p + sigma = 0
    Dark,
    /// p = 0
    Dust,
    /// p = sigma / 3
    Radiation,
    /// -1 < p/sigma < 0
    Quintessence,
    /// p/sigma < -1
    Phantom,
    /// sigma is numerically zero and no exact relation fires.
    Indeterminate,
    /// sigma > 0 but the ratio lands in no named band.
    Unclassified,
    /// Grid points disagree (grid-level reports only).
    Mixed,
}

impl Era {
    pub fn label(self) -> &'static str {
        match self {
            Era::Stiff => "stiff",
            Era::Dark => "dark",
            Era::Dust => "dust",
            Era::Radiation => "radiation",
            Era::Quintessence => "quintessence",
            Era::Phantom => "phantom",
            Era::Indeterminate => "indeterminate",
            Era::Unclassified => "unclassified",
            Era::Mixed => "mixed",
        }
    }
}

impl std::fmt::Display for Era {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Pointwise output of [`decompose_at`].
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub alpha: f64,
    pub beta: f64,
    /// `S - alpha g - beta C (x) C`
    pub residual: TensorValue,
    pub residual_sup: f64,
}

/// Extract the perfect-fluid scalars at a point.
///
/// Rejects velocity fields that are not unit timelike at `p` (to `tol`).
pub fn decompose_at(
    rho: &VectorField,
    p: &[f64],
    tol: f64,
) -> Result<Decomposition, FluidError> {
    let dev = (metric_square_at(rho, p)? + 1.0).abs();
    if dev > tol {
        return Err(FluidError::NotUnitTimelike {
            deviation: dev,
            point: p.to_vec(),
        });
    }
    let chart = rho.chart();
    let n = chart.dim();
    let curv = chart.curvature(p)?;
    let rv = rho.values(p)?;
    let mut s_rho_rho = 0.0;
    for i in 0..n {
        for j in 0..n {
            s_rho_rho += curv.ricci[(i, j)] * rv[i] * rv[j];
        }
    }
    let alpha = (curv.scalar + s_rho_rho) / (n as f64 - 1.0);
    let beta = alpha + s_rho_rho;
    // C_i = g_ij rho^j
    let clow: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| curv.conn.g[(i, j)] * rv[j]).sum())
        .collect();
    let mut residual = TensorValue::zeros(n, &[Variance::Lower, Variance::Lower]);
    for i in 0..n {
        for j in 0..n {
            *residual.get_mut(&[i, j]) = curv.ricci[(i, j)]
                - alpha * curv.conn.g[(i, j)]
                - beta * clow[i] * clow[j];
        }
    }
    let residual_sup = residual.sup_norm();
    Ok(Decomposition {
        alpha,
        beta,
        residual,
        residual_sup,
    })
}

/// Invert the field-equation relations for `(p, sigma)`.
pub fn pressure_density(
    alpha: f64,
    beta: f64,
    kappa: f64,
    n: usize,
) -> Result<(f64, f64), FluidError> {
    if kappa == 0.0 {
        return Err(FluidError::KappaZero);
    }
    if n == 2 {
        return Err(FluidError::DimensionTwo);
    }
    let a = alpha * (2.0 - n as f64);
    Ok(((a + beta) / (2.0 * kappa), (beta - a) / (2.0 * kappa)))
}

/// Classify the era from pressure and density.
///
/// Returns the label and the independent `accelerating` flag
/// (`sigma > tol` and `p/sigma < -1/3`).
pub fn classify_era(p: f64, sigma: f64, tol: f64) -> (Era, bool) {
    let thr = tol * (1.0 + sigma.abs());
    let accelerating = sigma > tol && p / sigma < -1.0 / 3.0;
    let era = if (p - sigma).abs() <= thr {
        Era::Stiff
    } else if (p + sigma).abs() <= thr {
        Era::Dark
    } else if p.abs() <= thr {
        Era::Dust
    } else if (p - sigma / 3.0).abs() <= thr {
        Era::Radiation
    } else if sigma > tol {
        let ratio = p / sigma;
        if ratio < -1.0 {
            Era::Phantom
        } else if ratio < 0.0 {
            Era::Quintessence
        } else {
            Era::Unclassified
        }
    } else {
        Era::Indeterminate
    };
    (era, accelerating)
}

/// Energy-momentum tensor `T = (S - (R/2) g) / kappa`.
pub fn energy_momentum_at(
    chart: &Chart,
    p: &[f64],
    kappa: f64,
) -> Result<TensorValue, FluidError> {
    if kappa == 0.0 {
        return Err(FluidError::KappaZero);
    }
    let curv = chart.curvature(p)?;
    let n = chart.dim();
    let mut t = TensorValue::zeros(n, &[Variance::Lower, Variance::Lower]);
    for i in 0..n {
        for j in 0..n {
            *t.get_mut(&[i, j]) =
                (curv.ricci[(i, j)] - 0.5 * curv.scalar * curv.conn.g[(i, j)]) / kappa;
        }
    }
    Ok(t)
}

/// Grid-level fluid report: value ranges, worst residual, era consensus.
#[derive(Clone, Debug)]
pub struct FluidReport {
    pub kappa: f64,
    pub tol: f64,
    pub points: usize,
    pub causal_deviation: f64,
    pub residual_sup: f64,
    pub perfect_fluid: bool,
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    pub pressure: (f64, f64),
    pub density: (f64, f64),
    /// Uniform pointwise label, or [`Era::Mixed`] when points disagree.
    pub era: Era,
    /// True only when every grid point is in the accelerating band.
    pub accelerating: bool,
}

/// Run the full decomposition pipeline over a grid.
pub fn fluid_report(
    rho: &VectorField,
    grid: &[Vec<f64>],
    kappa: f64,
    tol: f64,
) -> Result<FluidReport, FluidError> {
    if grid.is_empty() {
        return Err(FluidError::EmptyGrid);
    }
    let n = rho.chart().dim();
    let mut causal_deviation: f64 = 0.0;
    for p in grid {
        let dev = (metric_square_at(rho, p)? + 1.0).abs();
        causal_deviation = causal_deviation.max(dev);
        if dev > tol {
            return Err(FluidError::NotUnitTimelike {
                deviation: dev,
                point: p.clone(),
            });
        }
    }
    let mut residual_sup: f64 = 0.0;
    let mut range = |cur: Option<(f64, f64)>, v: f64| match cur {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    };
    let (mut ar, mut br, mut pr, mut sr) = (None, None, None, None);
    let mut era: Option<Era> = None;
    let mut accelerating = true;
    for p in grid {
        let d = decompose_at(rho, p, tol)?;
        residual_sup = residual_sup.max(d.residual_sup);
        let (press, dens) = pressure_density(d.alpha, d.beta, kappa, n)?;
        ar = range(ar, d.alpha);
        br = range(br, d.beta);
        pr = range(pr, press);
        sr = range(sr, dens);
        let (e, acc) = classify_era(press, dens, tol);
        accelerating &= acc;
        era = Some(match era {
            None => e,
            Some(prev) if prev == e => e,
            Some(_) => Era::Mixed,
        });
    }
    Ok(FluidReport {
        kappa,
        tol,
        points: grid.len(),
        causal_deviation,
        residual_sup,
        perfect_fluid: residual_sup <= tol,
        alpha: ar.unwrap(),
        beta: br.unwrap(),
        pressure: pr.unwrap(),
        density: sr.unwrap(),
        era: era.unwrap(),
        accelerating,
    })
}
