//! Shared helpers for module tests: chart builders, fields, grids, and a
//! small deterministic RNG for scattering sample points.

use std::sync::Arc;

use crate::expr::{self, Expr};
use crate::geometry::Chart;
use crate::operators::{ScalarField, VectorField};

pub(crate) fn chart(coords: &[&str], comps: &[(usize, usize, &str)]) -> Arc<Chart> {
    let names: Vec<String> = coords.iter().map(|s| s.to_string()).collect();
    let components = comps
        .iter()
        .map(|(i, j, s)| (*i, *j, expr::parse(s, &names).unwrap()))
        .collect();
    Arc::new(Chart::new(names, components).unwrap())
}

pub(crate) fn minkowski() -> Arc<Chart> {
    chart(
        &["w1", "w2", "w3", "w4"],
        &[(0, 0, "-1"), (1, 1, "1"), (2, 2, "1"), (3, 3, "1")],
    )
}

pub(crate) fn example1() -> Arc<Chart> {
    chart(
        &["w1", "w2", "w3", "w4"],
        &[(0, 0, "1"), (1, 1, "w1^2"), (2, 2, "w2^2"), (3, 3, "-1")],
    )
}

pub(crate) fn example2() -> Arc<Chart> {
    chart(
        &["w1", "w2", "w3", "w4"],
        &[
            (0, 0, "exp(w1 + 1)"),
            (1, 1, "exp(w1)"),
            (2, 2, "exp(w1)"),
            (3, 3, "-exp(w1)"),
        ],
    )
}

pub(crate) fn sphere2() -> Arc<Chart> {
    chart(&["theta", "phi"], &[(0, 0, "1"), (1, 1, "sin(theta)^2")])
}

pub(crate) fn flrw_dust() -> Arc<Chart> {
    chart(
        &["t", "x", "y", "z"],
        &[
            (0, 0, "-1"),
            (1, 1, "t^(4/3)"),
            (2, 2, "t^(4/3)"),
            (3, 3, "t^(4/3)"),
        ],
    )
}

pub(crate) fn flrw_radiation() -> Arc<Chart> {
    chart(
        &["t", "x", "y", "z"],
        &[(0, 0, "-1"), (1, 1, "t"), (2, 2, "t"), (3, 3, "t")],
    )
}

/// Flat-sliced de Sitter with H = 1: an Einstein chart with S = 3 g.
pub(crate) fn de_sitter() -> Arc<Chart> {
    chart(
        &["t", "x", "y", "z"],
        &[
            (0, 0, "-1"),
            (1, 1, "exp(2 * t)"),
            (2, 2, "exp(2 * t)"),
            (3, 3, "exp(2 * t)"),
        ],
    )
}

pub(crate) fn flrw_box() -> Vec<(f64, f64)> {
    vec![(0.5, 2.5), (-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)]
}

pub(crate) fn sf(c: &Arc<Chart>, text: &str) -> ScalarField {
    ScalarField::parse(c.clone(), text).unwrap()
}

pub(crate) fn vf(c: &Arc<Chart>, comps: &[&str]) -> VectorField {
    VectorField::parse(c.clone(), comps).unwrap()
}

/// Tensor-product grid over per-axis boxes, `per_axis` points per axis.
pub(crate) fn grid(c: &Arc<Chart>, boxes: &[(f64, f64)], per_axis: usize) -> Vec<Vec<f64>> {
    assert_eq!(boxes.len(), c.dim());
    let mut points = vec![Vec::new()];
    for (lo, hi) in boxes {
        let mut next = Vec::new();
        for base in &points {
            for k in 0..per_axis {
                let f = if per_axis == 1 {
                    0.0
                } else {
                    k as f64 / (per_axis - 1) as f64
                };
                let mut p = base.clone();
                p.push(lo + (hi - lo) * f);
                next.push(p);
            }
        }
        points = next;
    }
    points
}

/// Symbolic contravariant gradient of `f` on a diagonal-metric chart:
/// component i is `(d_i f) / g_ii`.
pub(crate) fn grad_field_diagonal(c: &Arc<Chart>, f: &Expr) -> VectorField {
    let n = c.dim();
    let comps: Vec<Expr> = (0..n)
        .map(|i| Expr::div(f.diff(i), c.metric_expr(i, i).clone()))
        .collect();
    VectorField::from_exprs(c.clone(), comps).unwrap()
}

/// xorshift64*; deterministic scattering for tests.
pub(crate) struct TestRng {
    state: u64,
}

impl TestRng {
    pub(crate) fn new(seed: u64) -> Self {
        TestRng {
            state: seed.wrapping_mul(0x9e3779b97f4a7c15) | 1,
        }
    }

    pub(crate) fn next_f64(&mut self) -> f64 {
        self.state ^= self.state << 13;
        self.state ^= self.state >> 7;
        self.state ^= self.state << 17;
        (self.state >> 11) as f64 / (1u64 << 53) as f64
    }

    pub(crate) fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub(crate) fn point(&mut self, boxes: &[(f64, f64)]) -> Vec<f64> {
        boxes.iter().map(|(lo, hi)| self.range(*lo, *hi)).collect()
    }
}
