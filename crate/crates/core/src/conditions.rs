//! Sampled estimates of the WDC and RRIC deviation constants.
//!
//! Both conditions quantify over every nonzero point, which cannot be checked
//! exactly. The estimators report the maximum deviation over a finite sample,
//! a lower bound on the true constant.
//!
//! Sample `i` is drawn from the substream `(seed, i)`, so a run with more
//! samples evaluates a superset of a run with fewer, and samples can be
//! evaluated in any order.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::GeneratorNetwork;
use crate::landscape::q_matrix;
use crate::numerics::{axpy, dot, operator_norm, Matrix, Rng, Vector};
use crate::output::fmt_sci;

pub const DEFAULT_SAMPLES: usize = 200;
const DEGENERATE_NORM: f64 = 1e-12;
const SAMPLE_STREAM: u64 = 0xc0de;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConditionKind {
    Wdc,
    Rric,
}

/// The sampled points at which the maximum deviation was attained.
#[derive(Clone, Debug, PartialEq)]
pub enum Witness {
    Pair { x: Vector, y: Vector },
    Tuple { points: [Vector; 4] },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub kind: ConditionKind,
    /// Number of evaluated (non-degenerate) samples, canonical ones included.
    pub samples: usize,
    /// Lower bound on the condition constant.
    pub max_deviation: f64,
    pub argmax_index: usize,
    pub witness: Witness,
    pub seed: u64,
    /// `(sample_index, deviation)` in index order.
    pub deviations: Vec<(usize, f64)>,
}

#[derive(Serialize)]
struct Summary {
    kind: ConditionKind,
    samples: usize,
    max_deviation: f64,
    seed: u64,
    lower_bound: bool,
}

impl ConditionReport {
    /// CSV `sample_index,deviation`
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sample_index,deviation")?;
        for (i, dev) in &self.deviations {
            writeln!(w, "{i},{}", fmt_sci(*dev))?;
        }
        Ok(())
    }

    /// JSON `{kind, samples, max_deviation, seed, lower_bound}`.
    pub fn summary_json(&self) -> String {
        let s = Summary {
            kind: self.kind,
            samples: self.samples,
            max_deviation: self.max_deviation,
            seed: self.seed,
            lower_bound: true,
        };
        serde_json::to_string_pretty(&s).expect("summary serializes")
    }
}

/// Max with ties broken by the smallest index, independent of evaluation order.
fn argmax(devs: &[(usize, f64)]) -> Option<(usize, f64)> {
    devs.iter().copied().fold(None, |best, (i, d)| match best {
        Some((bi, bd)) if bd > d || (bd == d && bi < i) => Some((bi, bd)),
        _ => Some((i, d)),
    })
}

/// `Σ_i 1{w_i·x > 0} 1{w_i·y > 0} w_i w_iᵀ`
pub fn masked_gram(w: &Matrix, x: &Vector, y: &Vector) -> Matrix {
    let k = w.cols();
    let mut out = vec![0.0; k * k];
    for i in 0..w.rows() {
        let row = w.row(i);
        if dot(row, x.as_slice()) > 0.0 && dot(row, y.as_slice()) > 0.0 {
            for (a, &ra) in row.iter().enumerate() {
                if ra != 0.0 {
                    axpy(ra, row, &mut out[a * k..(a + 1) * k]);
                }
            }
        }
    }
    Matrix::from_raw(k, k, out)
}

/// `‖Σ_i 1{w_i·x>0} 1{w_i·y>0} w_i w_iᵀ − Q_{x,y}‖` for one pair.
pub fn wdc_pair_deviation(w: &Matrix, x: &Vector, y: &Vector) -> Result<f64> {
    if x.dim() != w.cols() || y.dim() != w.cols() {
        return Err(Error::invalid(format!(
            "WDC pair must live in R^{}, got dimensions {} and {}",
            w.cols(),
            x.dim(),
            y.dim()
        )));
    }
    let diff = masked_gram(w, x, y).sub(&q_matrix(x, y)?)?;
    Ok(operator_norm(&diff))
}

fn wdc_canonical_pairs(k: usize) -> Vec<(Vector, Vector)> {
    let e1 = Vector::basis(k, 0);
    let mut pairs = vec![(e1.clone(), e1.clone()), (e1.clone(), e1.scaled(-1.0))];
    if k >= 2 {
        pairs.push((e1, Vector::basis(k, 1)));
    }
    pairs
}

fn wdc_sample_pair(k: usize, seed: u64, index: usize) -> (Vector, Vector) {
    let mut rng = Rng::substream(seed, &[SAMPLE_STREAM, index as u64]);
    let x = rng.unit_sphere(k);
    let y = rng.unit_sphere(k);
    (x, y)
}

/// Sampled WDC deviation of `w` (rows `w_i ∈ R^k`).
///
/// Evaluates the canonical pairs `(e_1, e_1)`, `(e_1, −e_1)`, `(e_1, e_2)`
/// followed by `num_samples` pairs uniform on the sphere.
pub fn wdc_deviation(w: &Matrix, num_samples: usize, rng: &Rng) -> Result<ConditionReport> {
    wdc_deviation_scaled(w, num_samples, rng, 1.0, 1.0)
}

/// [`wdc_deviation`] with the sampled points multiplied by positive scales.
pub fn wdc_deviation_scaled(
    w: &Matrix,
    num_samples: usize,
    rng: &Rng,
    x_scale: f64,
    y_scale: f64,
) -> Result<ConditionReport> {
    if num_samples < 1 {
        return Err(Error::invalid("num_samples must be at least 1"));
    }
    if !(x_scale > 0.0 && y_scale > 0.0) {
        return Err(Error::invalid("sample scales must be positive"));
    }
    let k = w.cols();
    let seed = rng.seed();
    let canonical = wdc_canonical_pairs(k);
    let nc = canonical.len();
    let pair = |i: usize| -> (Vector, Vector) {
        let (x, y) = if i < nc {
            canonical[i].clone()
        } else {
            wdc_sample_pair(k, seed, i - nc)
        };
        (x.scaled(x_scale), y.scaled(y_scale))
    };
    let deviations = (0..nc + num_samples)
        .into_par_iter()
        .map(|i| {
            let (x, y) = pair(i);
            wdc_pair_deviation(w, &x, &y).map(|d| (i, d))
        })
        .collect::<Result<Vec<_>>>()?;
    let (argmax_index, max_deviation) = argmax(&deviations).expect("at least one sample");
    let (x, y) = pair(argmax_index);
    Ok(ConditionReport {
        kind: ConditionKind::Wdc,
        samples: deviations.len(),
        max_deviation,
        argmax_index,
        witness: Witness::Pair { x, y },
        seed,
        deviations,
    })
}

/// Normalized inner-product distortion for one 4-tuple, or `None` when one of
/// the range differences is (numerically) zero.
pub fn rric_tuple_deviation(
    a: &Matrix,
    net: &GeneratorNetwork,
    points: &[Vector; 4],
) -> Result<Option<f64>> {
    let g = points
        .iter()
        .map(|p| net.forward(p).map(|(out, _)| out))
        .collect::<Result<Vec<_>>>()?;
    let u = g[0].sub(&g[1]);
    let v = g[2].sub(&g[3]);
    let (nu, nv) = (u.norm(), v.norm());
    if nu < DEGENERATE_NORM || nv < DEGENERATE_NORM {
        return Ok(None);
    }
    let au = a.matvec(&u)?;
    let av = a.matvec(&v)?;
    Ok(Some((au.dot(&av) - u.dot(&v)).abs() / (nu * nv)))
}

fn rric_canonical_tuples(k: usize) -> Vec<[Vector; 4]> {
    let e1 = Vector::basis(k, 0);
    let neg = e1.scaled(-1.0);
    let mut tuples = vec![[e1.clone(), neg.clone(), e1.clone(), neg]];
    if k >= 2 {
        let e2 = Vector::basis(k, 1);
        tuples.push([e1.clone(), e2.clone(), e1, e2]);
    }
    tuples
}

/// Sampled RRIC deviation of `a` with respect to the range of `net`.
///
/// Evaluates canonical tuples `(e_1, −e_1, e_1, −e_1)` and
/// `(e_1, e_2, e_1, e_2)` followed by `num_samples` tuples of i.i.d. sphere
/// points. Tuples whose range differences have norm below `1e-12` are skipped.
pub fn rric_deviation(
    a: &Matrix,
    net: &GeneratorNetwork,
    num_samples: usize,
    rng: &Rng,
) -> Result<ConditionReport> {
    if num_samples < 1 {
        return Err(Error::invalid("num_samples must be at least 1"));
    }
    if a.cols() != net.output_dim() {
        return Err(Error::invalid(format!(
            "measurement matrix has {} columns, generator output has dimension {}",
            a.cols(),
            net.output_dim()
        )));
    }
    let k = net.input_dim();
    let seed = rng.seed();
    let canonical = rric_canonical_tuples(k);
    let nc = canonical.len();
    let tuple = |i: usize| -> [Vector; 4] {
        if i < nc {
            canonical[i].clone()
        } else {
            let mut r = Rng::substream(seed, &[SAMPLE_STREAM, (i - nc) as u64]);
            [r.unit_sphere(k), r.unit_sphere(k), r.unit_sphere(k), r.unit_sphere(k)]
        }
    };
    let total = nc + num_samples;
    let evaluated = (0..total)
        .into_par_iter()
        .map(|i| rric_tuple_deviation(a, net, &tuple(i)).map(|d| d.map(|d| (i, d))))
        .collect::<Result<Vec<_>>>()?;
    let deviations: Vec<(usize, f64)> = evaluated.into_iter().flatten().collect();
    let (argmax_index, max_deviation) =
        argmax(&deviations).ok_or(Error::DegenerateSampling { samples: total })?;
    Ok(ConditionReport {
        kind: ConditionKind::Rric,
        samples: deviations.len(),
        max_deviation,
        argmax_index,
        witness: Witness::Tuple { points: tuple(argmax_index) },
        seed,
        deviations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gaussian_matrix;

    #[test]
    fn wdc_hand_instance() {
        let w = Matrix::from_rows(&[&[1.0], &[-1.0]]).unwrap();
        let one = Vector::new(vec![1.0]).unwrap();
        assert_eq!(wdc_pair_deviation(&w, &one, &one).unwrap(), 0.5);
        let report = wdc_deviation(&w, 10, &Rng::new(1)).unwrap();
        assert_eq!(report.max_deviation, 0.5);
        assert_eq!(report.argmax_index, 0);
        assert_eq!(report.samples, 12);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[(3, 1.0), (1, 1.0), (2, 0.5)]), Some((1, 1.0)));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn rric_identity_is_exact() {
        let net = GeneratorNetwork::random(&[3, 20, 40], 5).unwrap();
        let report = rric_deviation(&Matrix::identity(40), &net, 25, &Rng::new(2)).unwrap();
        assert_eq!(report.max_deviation, 0.0);
        assert!(report.deviations.iter().all(|&(_, d)| d == 0.0));
    }

    #[test]
    fn rric_scaled_identity() {
        let net = GeneratorNetwork::random(&[3, 20, 40], 5).unwrap();
        let a = Matrix::identity(40).scaled(2.0);
        let report = rric_deviation(&a, &net, 25, &Rng::new(2)).unwrap();
        // diagonal canonical tuples reach the full distortion 4 − 1
        assert!((report.max_deviation - 3.0).abs() < 1e-12);
        assert!(report.deviations.iter().all(|&(_, d)| d <= 3.0 + 1e-12));
    }

    #[test]
    fn rric_all_degenerate_errors() {
        // a single unit with weight 0 maps everything to 0
        let w = Matrix::zeros(1, 2);
        let net = GeneratorNetwork::new(vec![w]).unwrap();
        let a = Matrix::identity(1);
        assert!(matches!(
            rric_deviation(&a, &net, 5, &Rng::new(1)),
            Err(Error::DegenerateSampling { samples: 7 })
        ));
    }

    #[test]
    fn reports_are_reproducible() {
        let w = gaussian_matrix(200, 4, 1.0 / 200.0, &mut Rng::new(4)).unwrap();
        let a = wdc_deviation(&w, 30, &Rng::new(11)).unwrap();
        let b = wdc_deviation(&w, 30, &Rng::new(11)).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("sample_index,deviation\n0,"));
        assert!(a.summary_json().contains("\"kind\": \"WDC\""));
    }
}
