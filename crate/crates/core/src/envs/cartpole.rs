//! Frictionless cart-pole, explicit Euler at step `tau`, with a linearization
//! built from possibly wrong masses.

use nalgebra::{DMatrix, DVector};

use crate::linalg::LinearModel;
use crate::plant::{estimate_lipschitz, Residual, ResidualKind};

/// Physical constants of one cart-pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleBody {
    pub g: f64,
    /// Pole mass.
    pub m: f64,
    /// Cart mass.
    pub cart: f64,
    pub l: f64,
    pub tau: f64,
}

impl CartPoleBody {
    pub fn eta(&self) -> f64 {
        4.0 / 3.0 * self.l - self.m * self.l / (self.m + self.cart)
    }

    pub fn is_valid(&self) -> bool {
        [self.g, self.m, self.cart, self.l, self.tau].iter().all(|v| v.is_finite() && *v > 0.0) && self.eta() > 0.0
    }
}

/// True plant and crude-model masses, force limit and LQR weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams {
    pub g: f64,
    pub m: f64,
    pub cart: f64,
    pub l: f64,
    pub tau: f64,
    pub f_mag: f64,
    pub model_m: f64,
    pub model_cart: f64,
    pub model_l: f64,
    pub q_weight: f64,
    pub r_weight: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            g: 9.8,
            m: 0.1,
            cart: 1.0,
            l: 0.5,
            tau: 0.02,
            f_mag: 10.0,
            model_m: 0.2,
            model_cart: 2.0,
            model_l: 2.0,
            q_weight: 1.0,
            r_weight: 1e-4,
        }
    }
}

impl CartPoleParams {
    pub fn true_body(&self) -> CartPoleBody {
        CartPoleBody { g: self.g, m: self.m, cart: self.cart, l: self.l, tau: self.tau }
    }

    pub fn model_body(&self) -> CartPoleBody {
        CartPoleBody { g: self.g, m: self.model_m, cart: self.model_cart, l: self.model_l, tau: self.tau }
    }

    pub fn saturate(&self, u: f64) -> f64 {
        u.clamp(-self.f_mag, self.f_mag)
    }
}

/// `(θ̈, ÿ)` of the nonlinear equations of motion.
pub fn cartpole_accelerations(body: &CartPoleBody, theta: f64, theta_dot: f64, u: f64) -> (f64, f64) {
    let total = body.m + body.cart;
    let (s, c) = theta.sin_cos();
    let theta_acc = (body.g * s + c * (-u - body.m * body.l * theta_dot * theta_dot * s) / total)
        / (body.l * (4.0 / 3.0 - body.m * c * c / total));
    let y_acc = (u + body.m * body.l * (theta_dot * theta_dot * s - theta_acc * c)) / total;
    (theta_acc, y_acc)
}

/// One explicit Euler step of state `(y, ẏ, θ, θ̇)` under force `u`.
pub fn cartpole_true_step(body: &CartPoleBody, state: &DVector<f64>, u: f64) -> DVector<f64> {
    let (y, yd, th, thd) = (state[0], state[1], state[2], state[3]);
    let (th_acc, y_acc) = cartpole_accelerations(body, th, thd, u);
    let tau = body.tau;
    DVector::from_vec(vec![y + tau * yd, yd + tau * y_acc, th + tau * thd, thd + tau * th_acc])
}

/// The small-angle discretization around the upright equilibrium.
pub fn cartpole_linearization(body: &CartPoleBody, q_weight: f64, r_weight: f64) -> LinearModel {
    let (g, m, l, tau) = (body.g, body.m, body.l, body.tau);
    let total = body.m + body.cart;
    let eta = body.eta();
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        1.0, tau, 0.0, 0.0,
        0.0, 1.0, -m * l * g * tau / (eta * total), 0.0,
        0.0, 0.0, 1.0, tau,
        0.0, 0.0, g * tau / eta, 1.0,
    ]);
    let b = DMatrix::from_column_slice(4, 1, &[
        0.0,
        (total * eta + m * l) / (total * total * eta) * tau,
        0.0,
        -tau / (total * eta),
    ]);
    LinearModel::new(a, b, DMatrix::identity(4, 4) * q_weight, DMatrix::from_element(1, 1, r_weight))
        .expect("positive weights give a valid model")
}

/// `f(x, u) = true_step(x, sat(u)) − (A x + B u)` with `A, B` from the model masses.
#[derive(Debug, Clone)]
pub struct CartPoleResidual {
    pub params: CartPoleParams,
    pub model: LinearModel,
    lipschitz: f64,
}

impl Residual for CartPoleResidual {
    fn eval(&self, _t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let next = cartpole_true_step(&self.params.true_body(), x, self.params.saturate(u[0]));
        next - self.model.step(x, u)
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    fn kind(&self) -> ResidualKind {
        ResidualKind::StateAction
    }
}

/// Crude model plus residual; `C_ℓ` is estimated over `‖(x, u)‖ ≤ 1`.
pub fn cartpole_residual(params: &CartPoleParams) -> (LinearModel, CartPoleResidual) {
    let model = cartpole_linearization(&params.model_body(), params.q_weight, params.r_weight);
    let mut res = CartPoleResidual { params: *params, model: model.clone(), lipschitz: 0.0 };
    res.lipschitz = estimate_lipschitz(&res, 4, 1, 4000, 1.0, 0x5eed);
    (model, res)
}

/// `x₀ = (0, 0, θ, 0)`.
pub fn initial_state(theta: f64) -> DVector<f64> {
    DVector::from_vec(vec![0.0, 0.0, theta, 0.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::synthesize;

    #[test]
    fn upright_equilibrium_is_fixed() {
        let body = CartPoleParams::default().true_body();
        let x = DVector::zeros(4);
        assert_eq!(cartpole_true_step(&body, &x, 0.0), x);
    }

    #[test]
    fn horizontal_pole_acceleration() {
        let body = CartPoleBody { l: 2.0, ..CartPoleParams::default().true_body() };
        let (th_acc, _) = cartpole_accelerations(&body, std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        assert!((th_acc - 9.8 / (2.0 * 4.0 / 3.0)).abs() < 1e-12);
        assert!((th_acc - 3.675).abs() < 1e-12);
    }

    #[test]
    fn model_matrix_entries() {
        let params = CartPoleParams::default();
        let model = cartpole_linearization(&params.model_body(), 1.0, 1e-4);
        assert_eq!(model.a[(2, 3)], 0.02);
        let eta = 8.0 / 3.0 - 0.4 / 2.2;
        assert!((params.model_body().eta() - eta).abs() < 1e-15);
        assert!((eta - 2.48485).abs() < 1e-5);
        assert!((model.a[(3, 2)] - 0.078878).abs() < 1e-6);
        assert_eq!(model.r[(0, 0)], 1e-4);
    }

    #[test]
    fn linearization_error_is_cubic_in_angle() {
        // identical masses isolate the small-angle approximation
        let mut params = CartPoleParams::default();
        params.model_m = params.m;
        params.model_cart = params.cart;
        params.model_l = params.l;
        let (model, res) = cartpole_residual(&params);
        let err = |th: f64| res.eval(0, &initial_state(th), &DVector::zeros(1)).norm();
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 8.0).abs() < 0.05, "ratio {ratio}");
        assert_eq!(err(0.0), 0.0);
        let _ = model;
    }

    #[test]
    fn wrong_masses_give_nonzero_residual_growing_with_angle() {
        let (_, res) = cartpole_residual(&CartPoleParams::default());
        let norms: Vec<f64> = (0..=8).map(|k| res.eval(0, &initial_state(0.05 * k as f64), &DVector::zeros(1)).norm()).collect();
        assert_eq!(norms[0], 0.0);
        assert!(norms.windows(2).all(|w| w[1] > w[0]));
        assert!(res.lipschitz() > 0.0);
    }

    #[test]
    fn model_is_stabilizable() {
        let params = CartPoleParams::default();
        let syn = synthesize(&cartpole_linearization(&params.model_body(), 1.0, 1e-4)).unwrap();
        assert!(syn.spectral_radius_f < 1.0);
        assert!(syn.dare_residual() <= 1e-9 * (1.0 + crate::linalg::inf_norm(&syn.p)));
    }
}
