use std::f64::consts::PI;

use genprior::experiments::make_problem;
use genprior::landscape::{h_direction, q_matrix, rho, theta_sequence};
use genprior::{expected_risk, g_theta, gaussian_vector, risk_value, RecoveryProblem, Rng, Snr};
use nalgebra::DMatrix;

#[test]
fn g_is_nondecreasing_with_slope_at_most_one() {
    let n = 20_000;
    let mut prev = g_theta(0.0).unwrap();
    for i in 1..=n {
        let t = PI * i as f64 / n as f64;
        let g = g_theta(t).unwrap();
        assert!((0.0..=PI).contains(&g));
        assert!(g <= t + 1e-15, "g({t}) = {g} exceeds θ");
        let slope = (g - prev) / (PI / n as f64);
        assert!((-1e-9..=1.0 + 1e-9).contains(&slope), "slope {slope} at {t}");
        prev = g;
    }
}

#[test]
fn g_rejects_out_of_range_angles() {
    assert!(g_theta(-1e-9).is_err());
    assert!(g_theta(PI + 1e-9).is_err());
    assert!(g_theta(f64::NAN).is_err());
}

#[test]
fn theta_sequences_are_nonincreasing() {
    for i in 0..=200 {
        let t0 = PI * i as f64 / 200.0;
        let seq = theta_sequence(t0, 12).unwrap();
        assert!(seq.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn rho_is_nondecreasing_in_unit_interval() {
    let mut prev = rho(1).unwrap();
    assert!((0.0..1.0).contains(&prev));
    for d in 2..=50 {
        let r = rho(d).unwrap();
        assert!((0.0..1.0).contains(&r), "ρ_{d} = {r}");
        assert!(r >= prev, "ρ_{d} = {r} < ρ_{} = {prev}", d - 1);
        prev = r;
    }
}

#[test]
fn h_is_lipschitz_outside_a_ball() {
    let r = 0.5;
    for d in [2usize, 3, 4] {
        let bound_factor = (1.0 + (6.0 * d as f64 + 4.0 * (d * d) as f64) / (PI * r)) / 2f64.powi(d as i32);
        let mut rng = Rng::new(50 + d as u64);
        for pair in 0..1000 {
            let k = 2 + pair % 4;
            let xs = gaussian_vector(k, 1.0, &mut rng).unwrap();
            let sample = |rng: &mut Rng| {
                let radius = xs.norm() * (r + 2.5 * (rng.next_u64() as f64 / u64::MAX as f64));
                rng.unit_sphere(k).scaled(radius)
            };
            let x = sample(&mut rng);
            let y = if pair % 2 == 0 {
                sample(&mut rng)
            } else {
                let z = x.add(&rng.unit_sphere(k).scaled(1e-3 * xs.norm()));
                if z.norm() < r * xs.norm() { x.clone() } else { z }
            };
            let hx = h_direction(&x, &xs, d).unwrap();
            let hy = h_direction(&y, &xs, d).unwrap();
            let lhs = hx.distance(&hy);
            let rhs = bound_factor * x.distance(&y);
            assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15, "d={d}, pair {pair}: {lhs} > {rhs}");
        }
    }
}

#[test]
fn q_matrix_is_symmetric_with_spectrum_in_zero_half() {
    let mut rng = Rng::new(77);
    for trial in 0..300 {
        let k = 1 + trial % 5;
        let x = gaussian_vector(k, 1.0, &mut rng).unwrap();
        let y = match trial % 3 {
            0 => gaussian_vector(k, 1.0, &mut rng).unwrap(),
            1 => x.scaled(-0.3),
            _ => x.scaled(2.0),
        };
        let q = q_matrix(&x, &y).unwrap();
        let dm = DMatrix::from_row_slice(k, k, q.as_slice());
        assert!((&dm - dm.transpose()).amax() < 1e-14);
        for ev in dm.symmetric_eigen().eigenvalues.iter() {
            assert!(*ev >= -1e-12 && *ev <= 0.5 + 1e-12, "eigenvalue {ev}");
        }
    }
}

#[test]
fn expected_risk_matches_monte_carlo_over_wide_nets() {
    let d = 2;
    let x = gaussian_vector(5, 1.0, &mut Rng::new(31)).unwrap();
    let xs = gaussian_vector(5, 1.0, &mut Rng::new(32)).unwrap();
    let nets = 200;
    let mean: f64 = (0..nets)
        .map(|s| {
            let base = make_problem(5, &[500, 2000], 400, Snr::Inf, 5000 + s).unwrap();
            let p = RecoveryProblem::from_ground_truth(
                base.net().clone(),
                base.measurement().clone(),
                xs.clone(),
                None,
            )
            .unwrap();
            risk_value(&p, &x).unwrap()
        })
        .sum::<f64>()
        / nets as f64;
    let expected = expected_risk(&x, &xs, d).unwrap();
    let rel = (mean - expected).abs() / expected;
    assert!(rel < 0.05, "Monte Carlo mean {mean}, closed form {expected}, relative gap {rel}");
}
