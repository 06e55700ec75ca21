use genprior::{
    finite_difference_gradient, gaussian_matrix, gaussian_vector, risk_value, step_direction,
    GeneratorNetwork, RecoveryProblem, Rng, Vector,
};

/// Random instance with depth in {1,2,3} and k ≤ 10.
fn instance(seed: u64) -> (RecoveryProblem, Vector) {
    let mut rng = Rng::new(seed);
    let d = 1 + (rng.next_u64() % 3) as usize;
    let k = 1 + (rng.next_u64() % 10) as usize;
    let mut dims = vec![k];
    for _ in 0..d {
        dims.push(8 + (rng.next_u64() % 40) as usize);
    }
    let n = *dims.last().unwrap();
    let m = 5 + (rng.next_u64() % 30) as usize;
    let net = GeneratorNetwork::random(&dims, rng.next_u64()).unwrap();
    let a = gaussian_matrix(m, n, 1.0 / m as f64, &mut rng).unwrap();
    let xs = gaussian_vector(k, 1.0, &mut rng).unwrap();
    let noise = gaussian_vector(m, 1e-2, &mut rng).unwrap();
    let p = RecoveryProblem::from_ground_truth(net, a, xs, Some(noise)).unwrap();
    let x = gaussian_vector(k, 1.0, &mut rng).unwrap();
    (p, x)
}

/// True when every coordinate probe `x ± h e_i` stays on the linear piece of `x`.
fn probes_stay_on_piece(p: &RecoveryProblem, x: &Vector, h: f64) -> bool {
    let pattern = p.net().forward(x).unwrap().1;
    (0..x.dim()).all(|i| {
        [h, -h].iter().all(|&s| {
            let z = x.add(&Vector::basis(x.dim(), i).scaled(s));
            p.net().forward(&z).unwrap().1 == pattern
        })
    })
}

fn rel_diff(a: &Vector, b: &Vector) -> f64 {
    a.distance(b) / a.norm().max(b.norm()).max(1e-300)
}

#[test]
fn step_direction_matches_central_differences_on_100_instances() {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 100 {
        let (p, x) = instance(seed);
        seed += 1;
        let h = 1e-6 * x.norm();
        if !probes_stay_on_piece(&p, &x, h) {
            continue;
        }
        let v = step_direction(&p, &x).unwrap();
        let fd = finite_difference_gradient(&p, &x, h).unwrap();
        let err = rel_diff(&v, &fd);
        assert!(err < 1e-5, "instance {}: relative error {err}", seed - 1);
        checked += 1;
    }
    assert!(seed <= 110, "too many instances straddled a kink: {seed}");
}

#[test]
fn halving_h_does_not_increase_truncation_error() {
    // The objective is exactly quadratic on each linear piece, so the central
    // difference has no truncation term and only rounding remains.
    for seed in 200..220 {
        let (p, x) = instance(seed);
        let h0 = 1e-3 * x.norm();
        if !probes_stay_on_piece(&p, &x, h0) {
            continue;
        }
        let v = step_direction(&p, &x).unwrap();
        let scale = v.norm().max(risk_value(&p, &x).unwrap());
        let mut prev = f64::INFINITY;
        for j in 0..4 {
            let h = h0 / 2f64.powi(j);
            let err = v.distance(&finite_difference_gradient(&p, &x, h).unwrap());
            let floor = 1e-14 * scale / h;
            assert!(err <= prev / 4.0 + 4.0 * floor, "seed {seed}, h {h}: {err} after {prev}");
            assert!(err <= 1e-9 * scale.max(1.0), "seed {seed}: error {err}");
            prev = err;
        }
    }
}

#[test]
fn direction_is_affine_within_a_piece() {
    for seed in 300..330 {
        let (p, x) = instance(seed);
        let mut rng = Rng::new(seed);
        let dx = rng.unit_sphere(x.dim()).scaled(1e-7 * x.norm());
        let z = x.add(&dx);
        if p.net().forward(&z).unwrap().1 != p.net().forward(&x).unwrap().1 {
            continue;
        }
        let lambda = p.net().active_product(&x).unwrap();
        let al = p.measurement().matmul(&lambda).unwrap();
        let expected = al.matvec_t(&al.matvec(&dx).unwrap()).unwrap();
        let got = step_direction(&p, &z).unwrap().sub(&step_direction(&p, &x).unwrap());
        assert!(
            got.distance(&expected) <= 1e-6 * expected.norm() + 1e-14,
            "seed {seed}: {got:?} vs {expected:?}"
        );
    }
}

#[test]
fn risk_is_nonnegative_and_equals_half_noise_energy_at_truth() {
    for seed in 400..440 {
        let (p, x) = instance(seed);
        assert!(risk_value(&p, &x).unwrap() >= 0.0);
        let e = p.noise().unwrap().norm();
        let at_truth = risk_value(&p, p.ground_truth().unwrap()).unwrap();
        assert!((at_truth - 0.5 * e * e).abs() <= 1e-12 * (1.0 + e * e));
    }
}
