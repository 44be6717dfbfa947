use crate::error::{Error, Result};
use crate::numerics::{top_eigvecs, Tensor};

/// Points projected onto the leading principal axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// `[n × k]` coordinates.
    pub points: Tensor,
    /// `[d × k]` unit axes, columns ordered by variance.
    pub axes: Tensor,
    pub explained: Vec<f64>,
    pub mean: Vec<f64>,
}

/// PCA by mean-centred covariance and power iteration.
///
/// Each axis is oriented so its first nonzero coordinate is positive.
pub fn pca_project(points: &[Vec<f64>], k: usize) -> Result<Projection> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("points must share a nonzero width".into()));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={d}")));
    }
    if n < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} points for {k} components",
            k + 1
        )));
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = Tensor::zeros(&[d, d]);
    for p in &centred {
        for i in 0..d {
            for j in i..d {
                let v = cov.at(i, j) + p[i] * p[j];
                cov.set(i, j, v);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov.at(i, j) / n as f64;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    let trace: f64 = (0..d).map(|i| cov.at(i, i)).sum();
    if trace <= 0.0 {
        return Err(Error::InvalidArgument("all points are equal".into()));
    }
    let (values, mut axes) = top_eigvecs(&cov, k)?;
    for c in 0..k {
        let first = (0..d)
            .map(|r| axes.at(r, c))
            .find(|&v| v != 0.0)
            .unwrap_or(1.0);
        if first < 0.0 {
            for r in 0..d {
                let v = axes.at(r, c);
                axes.set(r, c, -v);
            }
        }
    }
    let mut coords = Tensor::zeros(&[n, k]);
    for (i, p) in centred.iter().enumerate() {
        for c in 0..k {
            let v: f64 = (0..d).map(|r| p[r] * axes.at(r, c)).sum();
            coords.set(i, c, v);
        }
    }
    Ok(Projection {
        points: coords,
        axes,
        explained: values.data().iter().map(|v| v / trace).collect(),
        mean,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::numerics::Rng;

    fn cloud(rng: &mut Rng, n: usize, scales: &[f64]) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| scales.iter().map(|s| s * rng.gaussian()).collect())
            .collect()
    }

    #[test]
    fn line_has_one_component() {
        let pts: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.3 - 2.0;
                vec![t, 2.0 * t, -t, 0.5 * t, 1.0]
            })
            .collect();
        let p = pca_project(&pts, 2).unwrap();
        assert!((p.explained[0] - 1.0).abs() < 1e-9);
        assert!(p.explained[1].abs() < 1e-9);
    }

    #[test]
    fn matches_jacobi_reference() {
        let mut rng = Rng::new(3);
        let pts = cloud(&mut rng, 200, &[3.0, 2.0, 1.0, 0.5, 0.2]);
        for k in [2, 3] {
            let p = pca_project(&pts, k).unwrap();
            let (reference, explained) = testkit::jacobi_pca(&pts, k);
            for c in 0..k {
                assert!((p.explained[c] - explained[c]).abs() < 1e-6);
                let sign = if (0..pts.len())
                    .map(|i| p.points.at(i, c) * reference[i][c])
                    .sum::<f64>()
                    < 0.0
                {
                    -1.0
                } else {
                    1.0
                };
                for (i, r) in reference.iter().enumerate() {
                    assert!((p.points.at(i, c) - sign * r[c]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn isotropic_cloud() {
        let mut rng = Rng::new(8);
        let pts = cloud(&mut rng, 4000, &[1.0, 1.0, 1.0]);
        let p = pca_project(&pts, 3).unwrap();
        for e in &p.explained {
            assert!((e - 1.0 / 3.0).abs() < 0.05, "{e}");
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(pca_project(&vec![vec![1.0, 2.0]; 5], 1).is_err());
        assert!(pca_project(&[vec![1.0, 2.0], vec![0.0, 1.0]], 2).is_err());
        assert!(pca_project(&[vec![1.0], vec![0.0, 1.0]], 1).is_err());
    }

    #[test]
    fn axes_point_forward() {
        let mut rng = Rng::new(1);
        let p = pca_project(&cloud(&mut rng, 50, &[2.0, 1.0, 0.5]), 3).unwrap();
        for c in 0..3 {
            let first = (0..3).map(|r| p.axes.at(r, c)).find(|v| *v != 0.0).unwrap();
            assert!(first > 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn translation_invariant(seed in 0u64..1000, shift in prop::collection::vec(-50.0f64..50.0, 4)) {
            let mut rng = Rng::new(seed);
            let pts = cloud(&mut rng, 40, &[3.0, 1.5, 0.7, 0.2]);
            let moved: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| p.iter().zip(&shift).map(|(x, s)| x + s).collect())
                .collect();
            let a = pca_project(&pts, 2).unwrap();
            let b = pca_project(&moved, 2).unwrap();
            prop_assert!(a.points.max_abs_diff(&b.points) < 1e-10);
        }

        #[test]
        fn rotation_preserves_distances(seed in 0u64..1000, angle in 0.0f64..std::f64::consts::TAU) {
            let mut rng = Rng::new(seed);
            let pts = cloud(&mut rng, 30, &[3.0, 1.0, 0.3]);
            let (s, c) = angle.sin_cos();
            let rotated: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| vec![c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])
                .collect();
            let a = pca_project(&pts, 3).unwrap();
            let b = pca_project(&rotated, 3).unwrap();
            let dist = |t: &Tensor, i: usize, j: usize| {
                (0..3).map(|c| (t.at(i, c) - t.at(j, c)).powi(2)).sum::<f64>().sqrt()
            };
            for i in 0..pts.len() {
                for j in 0..i {
                    prop_assert!((dist(&a.points, i, j) - dist(&b.points, i, j)).abs() < 1e-8);
                }
            }
        }
    }
}
