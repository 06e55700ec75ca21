//! Closed-form expected landscape of the empirical risk under Gaussian
//! weights: the angle map `g`, the angle recursion, the expected direction
//! `h_{x,y}`, the expected risk `f^E`, the spurious-point scale `ρ_d` and the
//! masked Gram target `Q_{x,y}`.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::output::fmt_sci;

/// `g(θ) = arccos(((π − θ) cos θ + sin θ) / π)` on `[0, π]`.
pub fn g_theta(theta: f64) -> Result<f64> {
    check_angle(theta)?;
    Ok(g_unchecked(theta))
}

fn g_unchecked(theta: f64) -> f64 {
    let arg = ((PI - theta) * theta.cos() + theta.sin()) / PI;
    arg.clamp(-1.0, 1.0).acos()
}

fn check_angle(theta: f64) -> Result<()> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::invalid(format!("angle {theta} is outside [0, π]")));
    }
    Ok(())
}

/// `[θ̄_0, …, θ̄_{d−1}]` with `θ̄_0 = theta0` and `θ̄_i = g(θ̄_{i−1})`.
pub fn theta_sequence(theta0: f64, d: usize) -> Result<Vec<f64>> {
    check_angle(theta0)?;
    check_depth(d)?;
    let mut seq = Vec::with_capacity(d);
    seq.push(theta0);
    for i in 1..d {
        seq.push(g_unchecked(seq[i - 1]));
    }
    Ok(seq)
}

fn check_depth(d: usize) -> Result<()> {
    if d < 1 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    Ok(())
}

/// Angle between nonzero `x` and `y`, via `atan2` of the component of `x̂`
/// orthogonal to `ŷ` against `x̂·ŷ`.
pub fn angle_between(x: &Vector, y: &Vector) -> Result<f64> {
    check_same_dim(x, y)?;
    let xh = x.normalized()?;
    let yh = y.normalized()?;
    let c = xh.dot(&yh);
    let s = xh.sub(&yh.scaled(c)).norm();
    Ok(s.atan2(c))
}

fn check_same_dim(x: &Vector, y: &Vector) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(())
}

/// Coefficients of `h̃_{x,y} = a·y + b·x̂` (before the `1/2^d` factor):
/// `a = ∏_i (π − θ̄_i)/π`, `b = ‖y‖ Σ_i (sin θ̄_i / π) ∏_{j>i} (π − θ̄_j)/π`.
fn tilde_coefficients(thetas: &[f64]) -> (f64, f64) {
    let d = thetas.len();
    // tail[i] = ∏_{j=i}^{d-1} (π − θ̄_j)/π
    let mut tail = vec![1.0; d + 1];
    for i in (0..d).rev() {
        tail[i] = tail[i + 1] * (PI - thetas[i]) / PI;
    }
    let sum = (0..d).map(|i| thetas[i].sin() / PI * tail[i + 1]).sum();
    (tail[0], sum)
}

/// `h̃_{x,y}`
pub fn h_tilde(x: &Vector, y: &Vector, d: usize) -> Result<Vector> {
    check_depth(d)?;
    let thetas = theta_sequence(angle_between(x, y)?, d)?;
    let (a, b) = tilde_coefficients(&thetas);
    let scale = 0.5f64.powi(d as i32);
    let xh = x.normalized()?;
    Ok(y.scaled(scale * a).add(&xh.scaled(scale * b * y.norm())))
}

/// `h_{x,y} = x/2^d − h̃_{x,y}`, the expected step direction at `x` when the
/// target latent code is `y`.
pub fn h_direction(x: &Vector, y: &Vector, d: usize) -> Result<Vector> {
    let ht = h_tilde(x, y, d)?;
    Ok(x.scaled(0.5f64.powi(d as i32)).sub(&ht))
}

/// `f^E(x) = xᵀx/2^{d+1} − xᵀh̃_{x,x_*} + x_*ᵀx_*/2^{d+1}`; at `x = 0` the
/// continuous limit `‖x_*‖²/2^{d+1}` is returned.
pub fn expected_risk(x: &Vector, xstar: &Vector, d: usize) -> Result<f64> {
    check_depth(d)?;
    check_same_dim(x, xstar)?;
    if xstar.is_zero() {
        return Err(Error::invalid("expected_risk needs a nonzero target"));
    }
    let half_scale = 0.5f64.powi(d as i32 + 1);
    let base = half_scale * xstar.dot(xstar);
    if x.is_zero() {
        return Ok(base);
    }
    let ht = h_tilde(x, xstar, d)?;
    Ok(half_scale * x.dot(x) - x.dot(&ht) + base)
}

/// `ρ_d = Σ_{i<d} (sin θ̌_i/π) ∏_{j=i+1}^{d−1} (π − θ̌_j)/π` with `θ̌_0 = π`.
pub fn rho(d: usize) -> Result<f64> {
    check_depth(d)?;
    let thetas = theta_sequence(PI, d)?;
    Ok(tilde_coefficients(&thetas).1)
}

/// Upper bound `250/(d + 1)` on `1 − ρ_d`.
pub fn one_minus_rho_bound(d: usize) -> f64 {
    250.0 / (d as f64 + 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhoRow {
    pub d: usize,
    pub rho: f64,
    /// `θ̌_0 … θ̌_{d−1}`
    pub check_thetas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhoTable {
    pub rows: Vec<RhoRow>,
}

impl RhoTable {
    /// `ρ_d` for `d = 1..=max_d`.
    pub fn new(max_d: usize) -> Result<Self> {
        check_depth(max_d)?;
        let rows = (1..=max_d)
            .map(|d| {
                let check_thetas = theta_sequence(PI, d)?;
                let rho = tilde_coefficients(&check_thetas).1;
                Ok(RhoRow { d, rho, check_thetas })
            })
            .collect::<Result<_>>()?;
        Ok(RhoTable { rows })
    }

    /// CSV `d,rho_d,one_minus_rho_bound`
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "d,rho_d,one_minus_rho_bound")?;
        for r in &self.rows {
            writeln!(w, "{},{},{}", r.d, fmt_sci(r.rho), fmt_sci(one_minus_rho_bound(r.d)))?;
        }
        Ok(())
    }
}

/// `Q_{x,y} = ((π − θ)/2π) I + (sin θ/2π) M_{x̂↔ŷ}`.
///
/// `M` swaps `x̂` and `ŷ` and annihilates `span{x, y}^⊥`; on the plane it is
/// the reflection `cos θ (uuᵀ − wwᵀ) + sin θ (uwᵀ + wuᵀ)` with `u = x̂` and
/// `w` the unit component of `ŷ` orthogonal to `x̂`. For parallel inputs it is
/// `x̂x̂ᵀ` (and `−x̂x̂ᵀ` when antiparallel, where its coefficient vanishes).
pub fn q_matrix(x: &Vector, y: &Vector) -> Result<Matrix> {
    let theta = angle_between(x, y)?;
    let k = x.dim();
    let m = swap_matrix(x, y, theta)?;
    let mut q = m.scaled(theta.sin() / (2.0 * PI));
    let diag = (PI - theta) / (2.0 * PI);
    for i in 0..k {
        q.set(i, i, q.get(i, i) + diag);
    }
    Ok(q)
}

fn swap_matrix(x: &Vector, y: &Vector, theta: f64) -> Result<Matrix> {
    let k = x.dim();
    let u = x.normalized()?;
    let yh = y.normalized()?;
    let perp = yh.sub(&u.scaled(u.dot(&yh)));
    let pn = perp.norm();
    let mut m = Matrix::zeros(k, k);
    if pn == 0.0 {
        let sign = if u.dot(&yh) >= 0.0 { 1.0 } else { -1.0 };
        for i in 0..k {
            for j in 0..k {
                m.set(i, j, sign * u[i] * u[j]);
            }
        }
        return Ok(m);
    }
    let w = perp.scaled(1.0 / pn);
    let (c, s) = (theta.cos(), theta.sin());
    for i in 0..k {
        for j in 0..k {
            m.set(i, j, c * (u[i] * u[j] - w[i] * w[j]) + s * (u[i] * w[j] + w[i] * u[j]));
        }
    }
    Ok(m)
}

/// Landscape diagnostics at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeEval {
    pub d: usize,
    pub theta_bars: Vec<f64>,
    pub h: Vector,
    pub f_expected: f64,
}

pub fn evaluate(x: &Vector, xstar: &Vector, d: usize) -> Result<LandscapeEval> {
    Ok(LandscapeEval {
        d,
        theta_bars: theta_sequence(angle_between(x, xstar)?, d)?,
        h: h_direction(x, xstar, d)?,
        f_expected: expected_risk(x, xstar, d)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_vector, Rng};

    #[test]
    fn g_special_values() {
        assert_eq!(g_theta(0.0).unwrap(), 0.0);
        assert!((g_theta(PI).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((g_theta(PI / 2.0).unwrap() - (1.0 / PI).acos()).abs() < 1e-15);
        assert!((g_theta(PI / 2.0).unwrap() - 1.2468502198629159).abs() < 1e-12);
        assert!(g_theta(-0.1).is_err());
        assert!(g_theta(PI + 1e-9).is_err());
    }

    #[test]
    fn theta_sequence_examples() {
        assert_eq!(theta_sequence(0.0, 4).unwrap(), vec![0.0; 4]);
        let s = theta_sequence(PI, 2).unwrap();
        assert_eq!(s[0], PI);
        assert!((s[1] - PI / 2.0).abs() < 1e-15);
        assert!(theta_sequence(0.5, 0).is_err());
    }

    #[test]
    fn rho_small_depths() {
        assert!(rho(1).unwrap().abs() < 1e-12);
        assert!((rho(2).unwrap() - 1.0 / PI).abs() < 1e-12);
        assert!(rho(0).is_err());
    }

    #[test]
    fn rho_table_csv() {
        let t = RhoTable::new(2).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "d,rho_d,one_minus_rho_bound");
        assert!(lines[2].starts_with("2,3.18309886184e-1,"));
        assert_eq!(t.rows[1].check_thetas.len(), 2);
    }

    #[test]
    fn h_vanishes_at_target_and_spurious_point() {
        let xs = gaussian_vector(6, 1.0, &mut Rng::new(3)).unwrap();
        for d in 1..=6 {
            assert!(h_direction(&xs, &xs, d).unwrap().norm() < 1e-10);
            let spurious = xs.scaled(-rho(d).unwrap());
            if d > 1 {
                assert!(h_direction(&spurious, &xs, d).unwrap().norm() < 1e-10);
            }
        }
    }

    #[test]
    fn expected_risk_limits() {
        let xs = gaussian_vector(4, 1.0, &mut Rng::new(4)).unwrap();
        assert!(expected_risk(&xs, &xs, 3).unwrap().abs() < 1e-14);
        let at_zero = expected_risk(&Vector::zeros(4), &xs, 3).unwrap();
        assert_eq!(at_zero, xs.dot(&xs) / 16.0);
        let near_zero = expected_risk(&xs.scaled(1e-9), &xs, 3).unwrap();
        assert!((near_zero - at_zero).abs() < 1e-8);
        assert!(expected_risk(&xs, &Vector::zeros(4), 3).is_err());
    }

    #[test]
    fn q_matrix_special_geometries() {
        let x = Vector::new(vec![1.0, 2.0, -1.0]).unwrap();
        let q = q_matrix(&x, &x).unwrap();
        let half = Matrix::identity(3).scaled(0.5);
        assert!(q.sub(&half).unwrap().as_slice().iter().all(|v| v.abs() < 1e-15));
        let q = q_matrix(&x, &x.scaled(-2.0)).unwrap();
        assert!(q.as_slice().iter().all(|v| v.abs() < 1e-15));
        assert!(q_matrix(&x, &Vector::zeros(3)).is_err());
    }

    #[test]
    fn q_matrix_orthogonal_pair() {
        let x = Vector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let y = Vector::new(vec![0.0, 3.0, 0.0]).unwrap();
        let q = q_matrix(&x, &y).unwrap();
        // I/4 + (1/2π) M with M swapping e1 and e2
        let c = 1.0 / (2.0 * PI);
        let expected = [0.25, c, 0.0, c, 0.25, 0.0, 0.0, 0.0, 0.25];
        for (a, b) in q.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn swap_matrix_swaps() {
        let mut rng = Rng::new(8);
        let x = gaussian_vector(5, 1.0, &mut rng).unwrap();
        let y = gaussian_vector(5, 1.0, &mut rng).unwrap();
        let theta = angle_between(&x, &y).unwrap();
        let m = swap_matrix(&x, &y, theta).unwrap();
        let (xh, yh) = (x.normalized().unwrap(), y.normalized().unwrap());
        assert!(m.matvec(&xh).unwrap().distance(&yh) < 1e-14);
        assert!(m.matvec(&yh).unwrap().distance(&xh) < 1e-14);
    }
}
