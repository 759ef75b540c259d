//! Degree-4 Bezier CoM curve with one free interior control point.
//!
//! Endpoint positions and velocities pin P0, P1, P3, P4:
//!
//! ```text
//! P0 = c0            P1 = c0 + T v0 / 4
//! P4 = cT            P3 = cT - T vT / 4
//! ```
//!
//! leaving the middle control point P2 =: x free. Position and acceleration
//! along the curve are affine in x, which is what keeps the transition
//! program linear: `c(t) = a(t) + beta(t) x`, `c''(t) = d(t) + alpha(t) x`.

use nalgebra::Vector3;

#[derive(Clone, Debug)]
pub struct TransitionCurve {
    pub p0: Vector3<f64>,
    pub p1: Vector3<f64>,
    pub p3: Vector3<f64>,
    pub p4: Vector3<f64>,
    pub duration: f64,
}

impl TransitionCurve {
    /// Curve from boundary states; `duration` must be positive and finite.
    pub fn new(
        c0: Vector3<f64>,
        v0: Vector3<f64>,
        c_t: Vector3<f64>,
        v_t: Vector3<f64>,
        duration: f64,
    ) -> Self {
        debug_assert!(duration.is_finite() && duration > 0.0);
        TransitionCurve {
            p0: c0,
            p1: c0 + v0 * (duration / 4.0),
            p3: c_t - v_t * (duration / 4.0),
            p4: c_t,
            duration,
        }
    }

    /// Constant part of the position at normalized time `tau` in [0, 1].
    pub fn pos_const(&self, tau: f64) -> Vector3<f64> {
        let u = 1.0 - tau;
        let b0 = u * u * u * u;
        let b1 = 4.0 * tau * u * u * u;
        let b3 = 4.0 * tau * tau * tau * u;
        let b4 = tau * tau * tau * tau;
        self.p0 * b0 + self.p1 * b1 + self.p3 * b3 + self.p4 * b4
    }

    /// Coefficient of the free control point in the position at `tau`.
    pub fn pos_free(&self, tau: f64) -> f64 {
        let u = 1.0 - tau;
        6.0 * tau * tau * u * u
    }

    /// Constant part of the acceleration at `tau` (true time derivative, so
    /// the 1/T^2 factor is included).
    pub fn acc_const(&self, tau: f64) -> Vector3<f64> {
        let u = 1.0 - tau;
        let s = 12.0 / (self.duration * self.duration);
        // Second differences with P2 split out:
        //   D0 = P2 - 2 P1 + P0, D1 = P3 - 2 P2 + P1, D2 = P4 - 2 P3 + P2.
        let const0 = self.p0 - self.p1 * 2.0;
        let const1 = self.p3 + self.p1;
        let const2 = self.p4 - self.p3 * 2.0;
        (const0 * (u * u) + const1 * (2.0 * tau * u) + const2 * (tau * tau)) * s
    }

    /// Coefficient of the free control point in the acceleration at `tau`.
    pub fn acc_free(&self, tau: f64) -> f64 {
        let s = 12.0 / (self.duration * self.duration);
        s * (6.0 * tau * tau - 6.0 * tau + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_curve() -> (TransitionCurve, Vector3<f64>) {
        let c0 = Vector3::new(0.1, -0.2, 0.45);
        let v0 = Vector3::new(0.3, 0.1, -0.05);
        let ct = Vector3::new(0.5, 0.1, 0.5);
        let vt = Vector3::new(-0.2, 0.4, 0.0);
        let x = Vector3::new(0.33, -0.07, 0.6);
        (TransitionCurve::new(c0, v0, ct, vt, 0.8), x)
    }

    fn full_position(c: &TransitionCurve, x: Vector3<f64>, tau: f64) -> Vector3<f64> {
        let u = 1.0 - tau;
        c.p0 * u.powi(4)
            + c.p1 * (4.0 * tau * u.powi(3))
            + x * (6.0 * tau * tau * u * u)
            + c.p3 * (4.0 * tau.powi(3) * u)
            + c.p4 * tau.powi(4)
    }

    #[test]
    fn affine_split_reproduces_the_full_curve() {
        let (c, x) = sample_curve();
        for i in 0..=10 {
            let tau = i as f64 / 10.0;
            let split = c.pos_const(tau) + x * c.pos_free(tau);
            let full = full_position(&c, x, tau);
            assert!((split - full).norm() < 1e-14, "tau = {tau}");
        }
    }

    #[test]
    fn endpoints_hit_boundary_positions_exactly() {
        let (c, x) = sample_curve();
        assert_eq!(c.pos_const(0.0) + x * c.pos_free(0.0), c.p0);
        assert_eq!(c.pos_const(1.0) + x * c.pos_free(1.0), c.p4);
        assert_eq!(c.pos_free(0.0), 0.0, "free point does not touch endpoints");
        assert_eq!(c.pos_free(1.0), 0.0);
    }

    #[test]
    fn acceleration_matches_finite_differences() {
        let (c, x) = sample_curve();
        let h = 1e-5;
        for i in 1..10 {
            let tau = i as f64 / 10.0;
            let acc = c.acc_const(tau) + x * c.acc_free(tau);
            // Central difference in true time t = tau * T.
            let dt = h * c.duration;
            let p = |tq: f64| full_position(&c, x, tq);
            let fd = (p(tau + h) - p(tau) * 2.0 + p(tau - h)) / (dt * dt);
            assert!(
                (acc - fd).norm() < 1e-4,
                "tau = {tau}: acc {acc:?} vs fd {fd:?}"
            );
        }
    }

    #[test]
    fn boundary_velocities_are_encoded_in_the_inner_points() {
        let (c, _) = sample_curve();
        let v0 = (c.p1 - c.p0) * (4.0 / c.duration);
        let vt = (c.p4 - c.p3) * (4.0 / c.duration);
        assert!((v0 - Vector3::new(0.3, 0.1, -0.05)).norm() < 1e-15);
        assert!((vt - Vector3::new(-0.2, 0.4, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn constant_curve_has_zero_acceleration_when_pinned_at_the_point() {
        // All boundary data at one point, zero velocity: choosing x at the
        // same point makes the curve constant and the acceleration vanish.
        let p = Vector3::new(0.4, 0.2, 0.45);
        let c = TransitionCurve::new(p, Vector3::zeros(), p, Vector3::zeros(), 1.0);
        for i in 0..=8 {
            let tau = i as f64 / 8.0;
            let acc = c.acc_const(tau) + p * c.acc_free(tau);
            assert!(acc.norm() < 1e-12, "tau = {tau}: {acc:?}");
        }
    }
}
