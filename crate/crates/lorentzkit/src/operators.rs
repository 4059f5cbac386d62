//! Scalar and vector fields on a chart, and the differential operators the
//! soliton and fluid machinery needs: gradient, Hessian, Lie derivative of
//! the metric, divergence, covariant acceleration, directional derivative,
//! causal checks, and vorticity.
//!
//! Fields are immutable after construction with all symbolic derivative
//! caches precomputed; every operator takes an explicit point and is pure.
//!
//! Scalar fields may reference the chart's scalar curvature through the
//! reserved identifier `R` (used for soliton functions like `R - 1`). Such
//! fields support values and first derivatives — the curvature gradient is
//! assembled exactly from third-order metric derivatives — but not Hessians.

use std::sync::Arc;

use thiserror::Error;

use crate::expr::{self, Expr, EvalError, ParseError};
use crate::geometry::{Chart, GeometryError};
use crate::tensor::{TensorValue, Variance};

#[derive(Clone, Debug, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("fields are bound to different charts")]
    ChartMismatch,
    #[error("{0} is not available for a field that references the scalar curvature R")]
    CurvatureDependent(&'static str),
    #[error("invalid field: {0}")]
    BadField(String),
}

fn ensure_same_chart(a: &Arc<Chart>, b: &Arc<Chart>) -> Result<(), OperatorError> {
    if Arc::ptr_eq(a, b) {
        Ok(())
    } else {
        Err(OperatorError::ChartMismatch)
    }
}

/// A scalar function on a chart with cached symbolic derivatives.
#[derive(Clone, Debug)]
pub struct ScalarField {
    chart: Arc<Chart>,
    expr: Expr,
    /// When set, the expression has one extra slot bound to the scalar
    /// curvature R at the evaluation point.
    uses_r: bool,
    d1: Vec<Expr>,
    d2: Vec<Expr>,
    d3: Vec<Expr>,
}

impl ScalarField {
    /// Wrap an expression over the chart coordinates (slots `0..n`).
    pub fn from_expr(chart: Arc<Chart>, expr: Expr) -> Result<Self, OperatorError> {
        let n = chart.dim();
        if let Some(m) = expr.max_coord() {
            if m >= n {
                return Err(OperatorError::BadField(format!(
                    "expression references coordinate slot {m} beyond dimension {n}"
                )));
            }
        }
        Ok(Self::build(chart, expr.simplify(), false))
    }

    /// Constant field.
    pub fn constant(chart: Arc<Chart>, value: f64) -> Self {
        Self::build(chart, Expr::Const(value), false)
    }

    /// Parse a formula over the chart coordinates plus the reserved
    /// curvature identifier `R`.
    pub fn parse(chart: Arc<Chart>, text: &str) -> Result<Self, OperatorError> {
        let mut names: Vec<String> = chart.coord_names().to_vec();
        names.push("R".to_string());
        let expr = expr::parse(text, &names)?.simplify();
        let uses_r = expr.uses_coord(chart.dim());
        Ok(Self::build(chart, expr, uses_r))
    }

    fn build(chart: Arc<Chart>, expr: Expr, uses_r: bool) -> Self {
        let n = chart.dim();
        let slots = if uses_r { n + 1 } else { n };
        let d1: Vec<Expr> = (0..slots).map(|i| expr.diff(i)).collect();
        let (d2, d3) = if uses_r {
            (Vec::new(), Vec::new())
        } else {
            let mut d2 = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    d2.push(d1[i].diff(j));
                }
            }
            let mut d3 = Vec::with_capacity(n * n * n);
            for ij in 0..n * n {
                for k in 0..n {
                    d3.push(d2[ij].diff(k));
                }
            }
            (d2, d3)
        };
        ScalarField {
            chart,
            expr,
            uses_r,
            d1,
            d2,
            d3,
        }
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// True when the field references the scalar curvature.
    pub fn uses_curvature(&self) -> bool {
        self.uses_r
    }

    fn extended_point(&self, p: &[f64]) -> Result<Vec<f64>, OperatorError> {
        let mut ext = p.to_vec();
        ext.push(self.chart.scalar_curvature_at(p)?);
        Ok(ext)
    }

    pub fn value(&self, p: &[f64]) -> Result<f64, OperatorError> {
        if self.uses_r {
            Ok(self.expr.eval(&self.extended_point(p)?)?)
        } else {
            Ok(self.expr.eval(p)?)
        }
    }

    /// Coordinate partials `d_i f`, with the chain rule through R when the
    /// field references the curvature.
    pub fn partials(&self, p: &[f64]) -> Result<Vec<f64>, OperatorError> {
        let n = self.chart.dim();
        if !self.uses_r {
            return self
                .d1
                .iter()
                .map(|d| d.eval(p).map_err(OperatorError::from))
                .collect();
        }
        let ext = self.extended_point(p)?;
        let df_dr = self.d1[n].eval(&ext)?;
        let dr = if df_dr == 0.0 {
            vec![0.0; n]
        } else {
            self.chart.scalar_curvature_grad_at(p)?
        };
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(self.d1[i].eval(&ext)? + df_dr * dr[i]);
        }
        Ok(out)
    }

    /// Raw coordinate second partial `d_i d_j f`.
    pub fn partial2(&self, i: usize, j: usize, p: &[f64]) -> Result<f64, OperatorError> {
        if self.uses_r {
            return Err(OperatorError::CurvatureDependent("second derivative"));
        }
        let n = self.chart.dim();
        Ok(self.d2[i * n + j].eval(p)?)
    }

    /// Raw coordinate third partial `d_i d_j d_k f`.
    pub fn partial3(&self, i: usize, j: usize, k: usize, p: &[f64]) -> Result<f64, OperatorError> {
        if self.uses_r {
            return Err(OperatorError::CurvatureDependent("third derivative"));
        }
        let n = self.chart.dim();
        Ok(self.d3[(i * n + j) * n + k].eval(p)?)
    }
}

/// A contravariant vector field `Z^i` with cached symbolic derivatives.
#[derive(Clone, Debug)]
pub struct VectorField {
    chart: Arc<Chart>,
    comps: Vec<Expr>,
    /// `d1[i * n + j] = d_i Z^j`
    d1: Vec<Expr>,
    /// `d2[(k * n + i) * n + j] = d_k d_i Z^j`
    d2: Vec<Expr>,
}

impl VectorField {
    pub fn from_exprs(chart: Arc<Chart>, comps: Vec<Expr>) -> Result<Self, OperatorError> {
        let n = chart.dim();
        if comps.len() != n {
            return Err(OperatorError::BadField(format!(
                "vector field has {} components, chart has dimension {n}",
                comps.len()
            )));
        }
        for c in &comps {
            if let Some(m) = c.max_coord() {
                if m >= n {
                    return Err(OperatorError::BadField(format!(
                        "component references coordinate slot {m} beyond dimension {n}"
                    )));
                }
            }
        }
        let comps: Vec<Expr> = comps.into_iter().map(|c| c.simplify()).collect();
        let mut d1 = Vec::with_capacity(n * n);
        for i in 0..n {
            for comp in &comps {
                d1.push(comp.diff(i));
            }
        }
        let mut d2 = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for ij in 0..n * n {
                d2.push(d1[ij].diff(k));
            }
        }
        Ok(VectorField {
            chart,
            comps,
            d1,
            d2,
        })
    }

    /// Parse contravariant components from texts over the chart coordinates.
    pub fn parse(chart: Arc<Chart>, comps: &[&str]) -> Result<Self, OperatorError> {
        let names = chart.coord_names().to_vec();
        let exprs = comps
            .iter()
            .map(|t| expr::parse(t, &names))
            .collect::<Result<Vec<_>, _>>()?;
        VectorField::from_exprs(chart, exprs)
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn components(&self) -> &[Expr] {
        &self.comps
    }

    pub fn values(&self, p: &[f64]) -> Result<Vec<f64>, OperatorError> {
        self.comps
            .iter()
            .map(|c| c.eval(p).map_err(OperatorError::from))
            .collect()
    }

    /// `d_i Z^j` at a point.
    pub fn partial(&self, i: usize, j: usize, p: &[f64]) -> Result<f64, OperatorError> {
        let n = self.chart.dim();
        Ok(self.d1[i * n + j].eval(p)?)
    }

    /// `d_k d_i Z^j` at a point.
    pub fn partial2(&self, k: usize, i: usize, j: usize, p: &[f64]) -> Result<f64, OperatorError> {
        let n = self.chart.dim();
        Ok(self.d2[(k * n + i) * n + j].eval(p)?)
    }

    /// Negated field, used for orientation-invariance checks.
    pub fn negated(&self) -> VectorField {
        let comps = self.comps.iter().cloned().map(Expr::neg).collect();
        VectorField::from_exprs(self.chart.clone(), comps).expect("negation preserves validity")
    }
}

/// Contravariant gradient `(Df)^i = g^ij d_j f`.
pub fn gradient_at(f: &ScalarField, p: &[f64]) -> Result<TensorValue, OperatorError> {
    let conn = f.chart().connection(p)?;
    let df = f.partials(p)?;
    let n = f.chart().dim();
    let mut out = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            out[i] += conn.ginv[(i, j)] * df[j];
        }
    }
    Ok(TensorValue::from_vector(&out, Variance::Upper))
}

/// Covariant Hessian `f_;ij = d_i d_j f - Gamma^k_ij d_k f`, symmetric.
pub fn hessian_at(f: &ScalarField, p: &[f64]) -> Result<TensorValue, OperatorError> {
    if f.uses_curvature() {
        return Err(OperatorError::CurvatureDependent("Hessian"));
    }
    let conn = f.chart().connection(p)?;
    let n = f.chart().dim();
    let df = f.partials(p)?;
    let mut t = TensorValue::zeros(n, &[Variance::Lower, Variance::Lower]);
    for i in 0..n {
        for j in 0..n {
            let mut v = f.partial2(i, j, p)?;
            for k in 0..n {
                v -= conn.gamma.get(k, i, j) * df[k];
            }
            *t.get_mut(&[i, j]) = v;
        }
    }
    Ok(t)
}

/// Laplace-Beltrami `g^ij f_;ij`.
pub fn laplacian_at(f: &ScalarField, p: &[f64]) -> Result<f64, OperatorError> {
    let conn = f.chart().connection(p)?;
    let hess = hessian_at(f, p)?;
    let n = f.chart().dim();
    let mut v = 0.0;
    for i in 0..n {
        for j in 0..n {
            v += conn.ginv[(i, j)] * hess.get(&[i, j]);
        }
    }
    Ok(v)
}

/// Exact coordinate gradient of the Laplacian, for trace-built soliton
/// functions: `d_p (g^ij f_;ij)`.
pub fn laplacian_grad_at(f: &ScalarField, p: &[f64]) -> Result<Vec<f64>, OperatorError> {
    if f.uses_curvature() {
        return Err(OperatorError::CurvatureDependent("Laplacian gradient"));
    }
    let curv = f.chart().curvature(p)?;
    let conn = &curv.conn;
    let n = f.chart().dim();
    let df = f.partials(p)?;
    let mut hess = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut v = f.partial2(i, j, p)?;
            for k in 0..n {
                v -= conn.gamma.get(k, i, j) * df[k];
            }
            hess[i * n + j] = v;
        }
    }
    let mut out = vec![0.0; n];
    for pd in 0..n {
        let dginv = -(&conn.ginv * &conn.dg[pd] * &conn.ginv);
        let mut v = 0.0;
        for i in 0..n {
            for j in 0..n {
                // d_p of the covariant Hessian component.
                let mut dh = f.partial3(pd, i, j, p)?;
                for k in 0..n {
                    dh -= curv.dgamma.get(pd, k, i, j) * df[k]
                        + conn.gamma.get(k, i, j) * f.partial2(pd, k, p)?;
                }
                v += dginv[(i, j)] * hess[i * n + j] + conn.ginv[(i, j)] * dh;
            }
        }
        out[pd] = v;
    }
    Ok(out)
}

/// Lie derivative of the metric: `(L_Z g)_ij = nabla_i Z_j + nabla_j Z_i`.
pub fn lie_metric_at(z: &VectorField, p: &[f64]) -> Result<TensorValue, OperatorError> {
    let conn = z.chart().connection(p)?;
    let n = z.chart().dim();
    let zv = z.values(p)?;
    let zlow: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|k| conn.g[(j, k)] * zv[k]).sum())
        .collect();
    // nabla_i Z_j with Z lowered.
    let mut nabla = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            for k in 0..n {
                v += conn.dg[i][(j, k)] * zv[k] + conn.g[(j, k)] * z.partial(i, k, p)?;
            }
            for m in 0..n {
                v -= conn.gamma.get(m, i, j) * zlow[m];
            }
            nabla[i * n + j] = v;
        }
    }
    let mut t = TensorValue::zeros(n, &[Variance::Lower, Variance::Lower]);
    for i in 0..n {
        for j in 0..n {
            *t.get_mut(&[i, j]) = nabla[i * n + j] + nabla[j * n + i];
        }
    }
    Ok(t)
}

/// Divergence `div Z = d_i Z^i + Gamma^i_ik Z^k`.
pub fn divergence_at(z: &VectorField, p: &[f64]) -> Result<f64, OperatorError> {
    let conn = z.chart().connection(p)?;
    let n = z.chart().dim();
    let zv = z.values(p)?;
    let mut v = 0.0;
    for i in 0..n {
        v += z.partial(i, i, p)?;
        for k in 0..n {
            v += conn.gamma.get(i, i, k) * zv[k];
        }
    }
    Ok(v)
}

/// Exact coordinate gradient of the divergence.
pub fn divergence_grad_at(z: &VectorField, p: &[f64]) -> Result<Vec<f64>, OperatorError> {
    let curv = z.chart().curvature(p)?;
    let conn = &curv.conn;
    let n = z.chart().dim();
    let zv = z.values(p)?;
    let mut out = vec![0.0; n];
    for pd in 0..n {
        let mut v = 0.0;
        for i in 0..n {
            v += z.partial2(pd, i, i, p)?;
            for k in 0..n {
                v += curv.dgamma.get(pd, i, i, k) * zv[k]
                    + conn.gamma.get(i, i, k) * z.partial(pd, k, p)?;
            }
        }
        out[pd] = v;
    }
    Ok(out)
}

/// Covariant acceleration `(nabla_Z Z)^k = Z^i d_i Z^k + Gamma^k_ij Z^i Z^j`.
pub fn covariant_accel_at(z: &VectorField, p: &[f64]) -> Result<TensorValue, OperatorError> {
    let conn = z.chart().connection(p)?;
    let n = z.chart().dim();
    let zv = z.values(p)?;
    let mut out = vec![0.0; n];
    for k in 0..n {
        let mut v = 0.0;
        for i in 0..n {
            v += zv[i] * z.partial(i, k, p)?;
            for j in 0..n {
                v += conn.gamma.get(k, i, j) * zv[i] * zv[j];
            }
        }
        out[k] = v;
    }
    Ok(TensorValue::from_vector(&out, Variance::Upper))
}

/// `g(Z, Z)` at a point.
pub fn metric_square_at(z: &VectorField, p: &[f64]) -> Result<f64, OperatorError> {
    let conn = z.chart().connection(p)?;
    let n = z.chart().dim();
    let zv = z.values(p)?;
    let mut v = 0.0;
    for i in 0..n {
        for j in 0..n {
            v += conn.g[(i, j)] * zv[i] * zv[j];
        }
    }
    Ok(v)
}

/// Result of scanning `g(Z, Z) + 1` over a grid.
#[derive(Clone, Debug)]
pub struct CausalReport {
    /// `max_p |g(Z,Z) + 1|`
    pub max_deviation: f64,
    pub unit_timelike: bool,
    pub tol: f64,
}

/// Check unit-timelike normalization over a point grid.
pub fn causal_check(
    z: &VectorField,
    grid: &[Vec<f64>],
    tol: f64,
) -> Result<CausalReport, OperatorError> {
    let mut max_dev: f64 = 0.0;
    for p in grid {
        max_dev = max_dev.max((metric_square_at(z, p)? + 1.0).abs());
    }
    Ok(CausalReport {
        max_deviation: max_dev,
        unit_timelike: max_dev <= tol,
        tol,
    })
}

/// Directional derivative `Z(f) = Z^i d_i f`.
pub fn directional_at(f: &ScalarField, z: &VectorField, p: &[f64]) -> Result<f64, OperatorError> {
    ensure_same_chart(f.chart(), z.chart())?;
    let zv = z.values(p)?;
    let df = f.partials(p)?;
    Ok(zv.iter().zip(&df).map(|(a, b)| a * b).sum())
}

/// Vorticity of a velocity field: the antisymmetrized derivative of the
/// lowered one-form, `w_ij = (d_i C_j - d_j C_i) / 2` with `C_j = g_jk rho^k`.
pub fn vorticity_at(rho: &VectorField, p: &[f64]) -> Result<TensorValue, OperatorError> {
    let conn = rho.chart().connection(p)?;
    let n = rho.chart().dim();
    let rv = rho.values(p)?;
    // d_i C_j
    let mut dc = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            for k in 0..n {
                v += conn.dg[i][(j, k)] * rv[k] + conn.g[(j, k)] * rho.partial(i, k, p)?;
            }
            dc[i * n + j] = v;
        }
    }
    let mut t = TensorValue::zeros(n, &[Variance::Lower, Variance::Lower]);
    for i in 0..n {
        for j in 0..n {
            *t.get_mut(&[i, j]) = 0.5 * (dc[i * n + j] - dc[j * n + i]);
        }
    }
    Ok(t)
}
