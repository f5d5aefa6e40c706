//! Builtin dynamics, cost, and constraint function registries.
//!
//! Problem files refer to these by name; everything is parameterized by a
//! flat vector so the file format stays declarative.

use super::{CostModel, DynamicsKind, DynamicsModel, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::DMatrix;

fn expect_params(name: &str, params: &[f64], want: usize) -> Result<()> {
    if params.len() != want {
        return Err(Error::InvalidProblem(format!(
            "builtin `{name}` expects {want} parameter(s), got {}",
            params.len()
        )));
    }
    Ok(())
}

/// Construct a builtin dynamics model.
///
/// Names: `zero`, `integrator` (xdot = u, d == m), `double_integrator`
/// (xdot1 = x2, xdot2 = u), `drift_integrator` (xdot1 = c, xdot2 = u),
/// `x_plus_u_squared` (xdot = x + u^2), `x_times_u` (xdot = x * u).
/// Linear dynamics are built through [`DynamicsModel::linear`] instead.
pub fn dynamics(
    name: &str,
    params: &[f64],
    state_dim: usize,
    control_dim: usize,
    _grid: &TimeGrid,
) -> Result<DynamicsModel> {
    let kind = DynamicsKind::Builtin { name: name.to_string(), params: params.to_vec() };
    let dims_err = |want_d: usize, want_m: usize| {
        Error::InvalidProblem(format!(
            "builtin dynamics `{name}` requires d = {want_d}, m = {want_m} (got d = {state_dim}, m = {control_dim})"
        ))
    };
    match name {
        "zero" => {
            expect_params(name, params, 0)?;
            let d = state_dim;
            let m = control_dim;
            Ok(DynamicsModel::from_parts(
                kind,
                d,
                m,
                Box::new(move |_x, _u, _t| vec![0.0; d]),
                Some(Box::new(move |_, _, _| DMatrix::zeros(d, d))),
                Some(Box::new(move |_, _, _| DMatrix::zeros(d, m))),
            ))
        }
        "integrator" => {
            expect_params(name, params, 0)?;
            if state_dim != control_dim {
                return Err(dims_err(control_dim, control_dim));
            }
            let d = state_dim;
            Ok(DynamicsModel::from_parts(
                kind,
                d,
                d,
                Box::new(|_x, u, _t| u.to_vec()),
                Some(Box::new(move |_, _, _| DMatrix::zeros(d, d))),
                Some(Box::new(move |_, _, _| DMatrix::identity(d, d))),
            ))
        }
        "double_integrator" => {
            expect_params(name, params, 0)?;
            if state_dim != 2 || control_dim != 1 {
                return Err(dims_err(2, 1));
            }
            Ok(DynamicsModel::from_parts(
                kind,
                2,
                1,
                Box::new(|x, u, _t| vec![x[1], u[0]]),
                Some(Box::new(|_, _, _| {
                    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
                })),
                Some(Box::new(|_, _, _| DMatrix::from_row_slice(2, 1, &[0.0, 1.0]))),
            ))
        }
        "drift_integrator" => {
            expect_params(name, params, 1)?;
            if state_dim != 2 || control_dim != 1 {
                return Err(dims_err(2, 1));
            }
            let c = params[0];
            Ok(DynamicsModel::from_parts(
                kind,
                2,
                1,
                Box::new(move |_x, u, _t| vec![c, u[0]]),
                Some(Box::new(|_, _, _| DMatrix::zeros(2, 2))),
                Some(Box::new(|_, _, _| DMatrix::from_row_slice(2, 1, &[0.0, 1.0]))),
            ))
        }
        "x_plus_u_squared" => {
            expect_params(name, params, 0)?;
            if state_dim != 1 || control_dim != 1 {
                return Err(dims_err(1, 1));
            }
            Ok(DynamicsModel::from_parts(
                kind,
                1,
                1,
                Box::new(|x, u, _t| vec![x[0] + u[0] * u[0]]),
                Some(Box::new(|_, _, _| DMatrix::from_element(1, 1, 1.0))),
                Some(Box::new(|_x, u, _t| DMatrix::from_element(1, 1, 2.0 * u[0]))),
            ))
        }
        "x_times_u" => {
            expect_params(name, params, 0)?;
            if state_dim != 1 || control_dim != 1 {
                return Err(dims_err(1, 1));
            }
            Ok(DynamicsModel::from_parts(
                kind,
                1,
                1,
                Box::new(|x, u, _t| vec![x[0] * u[0]]),
                Some(Box::new(|_x, u, _t| DMatrix::from_element(1, 1, u[0]))),
                Some(Box::new(|x, _u, _t| DMatrix::from_element(1, 1, x[0]))),
            ))
        }
        other => Err(Error::InvalidProblem(format!("unknown builtin dynamics `{other}`"))),
    }
}

/// Construct a builtin running-cost model (terminal cost absent).
///
/// Names: `zero`, `quadratic_control` (c |u|^2), `linear_control` (<w, u>),
/// `linear_state` (<w, x>), `quadratic` (cx |x|^2 + cu |u|^2).
pub fn cost(name: &str, params: &[f64], state_dim: usize, control_dim: usize) -> Result<CostModel> {
    let descriptor = format!("{name}{params:?}");
    let d = state_dim;
    let m = control_dim;
    match name {
        "zero" => {
            expect_params(name, params, 0)?;
            Ok(CostModel::from_parts(
                descriptor,
                Box::new(|_, _, _| 0.0),
                Box::new(move |_, _, _| vec![0.0; d]),
                Box::new(move |_, _, _| vec![0.0; m]),
                None,
                None,
            ))
        }
        "quadratic_control" => {
            expect_params(name, params, 1)?;
            let c = params[0];
            Ok(CostModel::from_parts(
                descriptor,
                Box::new(move |_x, u, _t| c * linalg::dot(u, u)),
                Box::new(move |_, _, _| vec![0.0; d]),
                Box::new(move |_x, u, _t| linalg::scale(u, 2.0 * c)),
                None,
                None,
            ))
        }
        "linear_control" => {
            expect_params(name, params, m)?;
            let w = params.to_vec();
            let wg = w.clone();
            Ok(CostModel::from_parts(
                descriptor,
                Box::new(move |_x, u, _t| linalg::dot(&w, u)),
                Box::new(move |_, _, _| vec![0.0; d]),
                Box::new(move |_, _, _| wg.clone()),
                None,
                None,
            ))
        }
        "linear_state" => {
            expect_params(name, params, d)?;
            let w = params.to_vec();
            let wg = w.clone();
            Ok(CostModel::from_parts(
                descriptor,
                Box::new(move |x, _u, _t| linalg::dot(&w, x)),
                Box::new(move |_, _, _| wg.clone()),
                Box::new(move |_, _, _| vec![0.0; m]),
                None,
                None,
            ))
        }
        "quadratic" => {
            expect_params(name, params, 2)?;
            let (cx, cu) = (params[0], params[1]);
            Ok(CostModel::from_parts(
                descriptor,
                Box::new(move |x, u, _t| cx * linalg::dot(x, x) + cu * linalg::dot(u, u)),
                Box::new(move |x, _u, _t| linalg::scale(x, 2.0 * cx)),
                Box::new(move |_x, u, _t| linalg::scale(u, 2.0 * cu)),
                None,
                None,
            ))
        }
        other => Err(Error::InvalidProblem(format!("unknown builtin cost `{other}`"))),
    }
}

/// Attach a terminal cost `zeta(x_T) = <w, x_T>` to an existing cost model.
pub fn with_linear_terminal_cost(cost: CostModel, w: Vec<f64>) -> CostModel {
    let wg = w.clone();
    let descriptor = format!("{} + linear terminal{w:?}", cost.descriptor);
    // CostModel fields are private; rebuild from closures that delegate to
    // the original model.
    let c = std::sync::Arc::new(cost);
    let c1 = c.clone();
    let c2 = c.clone();
    let c3 = c;
    CostModel::from_parts(
        descriptor,
        Box::new(move |x, u, t| c1.theta(x, u, t)),
        Box::new(move |x, u, t| c2.grad_x(x, u, t)),
        Box::new(move |x, u, t| c3.grad_u(x, u, t)),
        Some(Box::new(move |x| linalg::dot(&w, x))),
        Some(Box::new(move |_| wg.clone())),
    )
}
