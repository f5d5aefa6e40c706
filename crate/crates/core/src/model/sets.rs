//! Admissible control sets: membership tests, exact projections, and
//! pointwise support functions where available.

use super::{ControlSignal, TimeGrid};
use crate::linalg;
use std::sync::Arc;

type MembershipFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
type ProjectionFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type SupportFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Closed convex set applied pointwise (one copy per control interval).
#[derive(Clone)]
pub struct PointwiseConvexSet {
    pub label: String,
    membership: MembershipFn,
    projection: ProjectionFn,
    support: Option<SupportFn>,
}

impl PointwiseConvexSet {
    pub fn new(
        label: impl Into<String>,
        membership: MembershipFn,
        projection: ProjectionFn,
        support: Option<SupportFn>,
    ) -> Self {
        PointwiseConvexSet { label: label.into(), membership, projection, support }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        (self.membership)(v)
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        (self.projection)(v)
    }

    /// Support value `sup_{v in Q} <c, v>`. Uses the exact oracle when one
    /// was supplied, otherwise projected gradient ascent through the
    /// projection (200 iterations, diminishing steps).
    pub fn support(&self, c: &[f64]) -> f64 {
        if let Some(s) = &self.support {
            return s(c);
        }
        let nc = linalg::norm2(c);
        let origin = self.project(&vec![0.0; c.len()]);
        if nc < 1e-14 {
            return linalg::dot(c, &origin);
        }
        let dir = linalg::scale(c, 1.0 / nc);
        let mut v = origin;
        let mut best = linalg::dot(c, &v);
        for k in 0..200 {
            let step = 1.0 / ((k + 1) as f64).sqrt();
            v = self.project(&linalg::add_scaled(&v, step, &dir));
            best = best.max(linalg::dot(c, &v));
        }
        best
    }

    /// The set `{(a, b) : a + b <= 1, (a - b)^2 <= a + b}`: the region in
    /// the plane between a 45-degree rotated parabola and its chord.
    /// Projection is exact (Cardano on the parabola, the cap segment, and
    /// the corner points).
    pub fn rotated_parabola_cap() -> Self {
        let tol = 1e-9;
        let membership: MembershipFn = Arc::new(move |v: &[f64]| {
            let s = v[0] + v[1];
            let r = v[0] - v[1];
            s <= 1.0 + tol && r * r <= s + tol
        });
        let projection: ProjectionFn = Arc::new(|v: &[f64]| {
            // Rotated coordinates (r, s) = (a - b, a + b); the map scales
            // distances uniformly by sqrt(2), so projecting in (r, s) with
            // the Euclidean metric is exact.
            let r0 = v[0] - v[1];
            let s0 = v[0] + v[1];
            if s0 <= 1.0 && r0 * r0 <= s0 {
                return v.to_vec();
            }
            let mut best: Option<(f64, f64, f64)> = None;
            let mut consider = |r: f64, s: f64| {
                let d2 = (r - r0) * (r - r0) + (s - s0) * (s - s0);
                if best.map_or(true, |(_, _, bd)| d2 < bd) {
                    best = Some((r, s, d2));
                }
            };
            // Candidates on the parabola s = r^2, |r| <= 1: critical points
            // of the squared distance solve 2 r^3 + (1 - 2 s0) r - r0 = 0.
            for r in real_cubic_roots(2.0, 0.0, 1.0 - 2.0 * s0, -r0) {
                let rc = r.clamp(-1.0, 1.0);
                consider(rc, rc * rc);
            }
            // Cap segment s = 1, |r| <= 1, and its corners.
            consider(r0.clamp(-1.0, 1.0), 1.0);
            consider(-1.0, 1.0);
            consider(1.0, 1.0);
            let (r, s, _) = best.expect("candidate list is never empty");
            vec![(s + r) / 2.0, (s - r) / 2.0]
        });
        PointwiseConvexSet::new("rotated-parabola-cap", membership, projection, None)
    }
}

impl std::fmt::Debug for PointwiseConvexSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PointwiseConvexSet({})", self.label)
    }
}

/// All real roots of `a x^3 + b x^2 + c x + d` (a != 0), via Cardano with
/// the trigonometric branch for three real roots.
fn real_cubic_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let b = b / a;
    let c = c / a;
    let d = d / a;
    // Depressed cubic t^3 + p t + q with x = t - b/3.
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
    let mut roots = Vec::with_capacity(3);
    if disc > 0.0 {
        let sq = disc.sqrt();
        let u = cbrt(-q / 2.0 + sq);
        let v = cbrt(-q / 2.0 - sq);
        roots.push(u + v + shift);
    } else if p.abs() < 1e-300 {
        roots.push(cbrt(-q) + shift);
    } else {
        let rho = (-(p / 3.0)).sqrt();
        let arg = (-q / (2.0 * rho * rho * rho)).clamp(-1.0, 1.0);
        let phi = arg.acos();
        for k in 0..3 {
            roots.push(2.0 * rho * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift);
        }
    }
    // One Newton polish per root.
    for r in roots.iter_mut() {
        let f = |x: f64| ((x + b) * x + c) * x + d;
        let fp = |x: f64| (3.0 * x + 2.0 * b) * x + c;
        let deriv = fp(*r);
        if deriv.abs() > 1e-12 {
            *r -= f(*r) / deriv;
        }
    }
    roots
}

fn cbrt(x: f64) -> f64 {
    x.signum() * x.abs().powf(1.0 / 3.0)
}

/// Set of admissible controls `U`.
#[derive(Debug, Clone)]
pub enum AdmissibleControlSet {
    Unconstrained,
    /// Componentwise bounds applied on every interval.
    PointwiseBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Discrete L2 ball `sqrt(sum_k h |u_k|^2) <= radius`.
    GlobalL2Ball { radius: f64 },
    /// Componentwise non-negative controls inside the discrete L2 ball.
    /// The orthant is a cone, so clamp-then-scale is the exact projection.
    NonnegL2Ball { radius: f64 },
    /// An arbitrary closed convex set applied on every interval.
    PointwiseConvex(PointwiseConvexSet),
}

impl AdmissibleControlSet {
    pub fn project(&self, control: &ControlSignal, grid: &TimeGrid) -> ControlSignal {
        let h = grid.step();
        let values = match self {
            AdmissibleControlSet::Unconstrained => control.values.clone(),
            AdmissibleControlSet::PointwiseBox { lo, hi } => control
                .values
                .iter()
                .map(|u| u.iter().enumerate().map(|(i, v)| v.clamp(lo[i], hi[i])).collect())
                .collect(),
            AdmissibleControlSet::GlobalL2Ball { radius } => {
                scale_into_ball(&control.values, h, *radius)
            }
            AdmissibleControlSet::NonnegL2Ball { radius } => {
                let clamped: Vec<Vec<f64>> = control
                    .values
                    .iter()
                    .map(|u| u.iter().map(|v| v.max(0.0)).collect())
                    .collect();
                scale_into_ball(&clamped, h, *radius)
            }
            AdmissibleControlSet::PointwiseConvex(set) => {
                control.values.iter().map(|u| set.project(u)).collect()
            }
        };
        ControlSignal::new(values, control.control_dim)
    }

    pub fn contains(&self, control: &ControlSignal, grid: &TimeGrid, tol: f64) -> bool {
        let h = grid.step();
        match self {
            AdmissibleControlSet::Unconstrained => true,
            AdmissibleControlSet::PointwiseBox { lo, hi } => control.values.iter().all(|u| {
                u.iter()
                    .enumerate()
                    .all(|(i, v)| *v >= lo[i] - tol && *v <= hi[i] + tol)
            }),
            AdmissibleControlSet::GlobalL2Ball { radius } => {
                discrete_l2(&control.values, h) <= radius + tol
            }
            AdmissibleControlSet::NonnegL2Ball { radius } => {
                control.values.iter().all(|u| u.iter().all(|v| *v >= -tol))
                    && discrete_l2(&control.values, h) <= radius + tol
            }
            AdmissibleControlSet::PointwiseConvex(set) => {
                // Allow a small metric slack around the membership test.
                control.values.iter().all(|u| {
                    set.contains(u) || linalg::norm2(&linalg::sub(u, &set.project(u))) <= tol
                })
            }
        }
    }

    /// Pointwise support function `sup_{v in Q} <c, v>`, available for
    /// boxes (closed form) and pointwise convex sets.
    pub fn pointwise_support(&self, c: &[f64]) -> Option<f64> {
        match self {
            AdmissibleControlSet::PointwiseBox { lo, hi } => Some(
                c.iter()
                    .enumerate()
                    .map(|(i, ci)| if *ci >= 0.0 { ci * hi[i] } else { ci * lo[i] })
                    .sum(),
            ),
            AdmissibleControlSet::PointwiseConvex(set) => Some(set.support(c)),
            _ => None,
        }
    }
}

fn discrete_l2(values: &[Vec<f64>], h: f64) -> f64 {
    values
        .iter()
        .map(|u| h * linalg::dot(u, u))
        .sum::<f64>()
        .sqrt()
}

fn scale_into_ball(values: &[Vec<f64>], h: f64, radius: f64) -> Vec<Vec<f64>> {
    let norm = discrete_l2(values, h);
    if norm <= radius {
        values.to_vec()
    } else {
        let s = radius / norm;
        values.iter().map(|u| linalg::scale(u, s)).collect()
    }
}
