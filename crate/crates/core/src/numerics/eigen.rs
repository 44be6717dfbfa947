use super::Tensor;
use crate::error::{shape_err, Error, Result};

pub const MAX_ITERATIONS: usize = 10_000;
pub const TOLERANCE: f64 = 1e-10;
const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Top-`k` eigenpairs of a symmetric matrix by power iteration with
/// deflation.
///
/// The matrix is first shifted so that every eigenvalue is nonnegative;
/// power iteration then returns eigenvalues in descending algebraic order.
/// Iterates are re-orthogonalised against the vectors already found.
/// Returns `(eigenvalues[k], eigenvectors[d×k])` with eigenvectors as
/// columns.
pub fn top_eigvecs(cov: &Tensor, k: usize) -> Result<(Tensor, Tensor)> {
    if cov.rank() != 2 || cov.rows() != cov.cols() {
        return Err(shape_err!(
            "eigensolver needs a square matrix, got {:?}",
            cov.shape()
        ));
    }
    let d = cov.rows();
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!(
            "k = {} outside 1..={}",
            k, d
        )));
    }
    cov.ensure_finite("eigensolver input")?;
    for i in 0..d {
        for j in (i + 1)..d {
            if (cov.at(i, j) - cov.at(j, i)).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "matrix not symmetric at ({}, {})",
                    i, j
                )));
            }
        }
    }

    // Smallest shift that makes every Gershgorin disc nonnegative; a larger
    // one would only slow convergence.
    let shift = (0..d)
        .map(|i| {
            let off: f64 = (0..d).filter(|&j| j != i).map(|j| cov.at(i, j).abs()).sum();
            off - cov.at(i, i)
        })
        .fold(0.0, f64::max);
    let mut work: Vec<f64> = cov.data().to_vec();
    for i in 0..d {
        work[i * d + i] += shift;
    }

    let mut values = Vec::with_capacity(k);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for component in 0..k {
        // Deterministic start that is not orthogonal to a generic eigenvector.
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + (i as f64 + 1.0) * 0.1).collect();
        orthogonalize(&mut v, &vectors);
        if normalize(&mut v) == 0.0 {
            v = (0..d)
                .map(|i| if i == component { 1.0 } else { 0.0 })
                .collect();
            orthogonalize(&mut v, &vectors);
            normalize(&mut v);
        }
        let mut converged = false;
        let mut lambda = 0.0;
        for _ in 0..MAX_ITERATIONS {
            let mut next = vec![0.0; d];
            for i in 0..d {
                next[i] = work[i * d..(i + 1) * d]
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| a * b)
                    .sum();
            }
            orthogonalize(&mut next, &vectors);
            lambda = normalize(&mut next);
            if lambda == 0.0 {
                // Remaining spectrum of the shifted matrix is zero: any
                // orthogonal unit vector is an eigenvector.
                converged = true;
                break;
            }
            let change = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            v = next;
            if change < TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence(format!(
                "eigenvector {} did not settle within {} iterations",
                component, MAX_ITERATIONS
            )));
        }
        for i in 0..d {
            for j in 0..d {
                work[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        values.push(lambda - shift);
        vectors.push(v);
    }

    let mut vec_data = vec![0.0; d * k];
    for (c, v) in vectors.iter().enumerate() {
        for r in 0..d {
            vec_data[r * k + c] = v[r];
        }
    }
    Ok((Tensor::vector(values), Tensor::new(vec![d, k], vec_data)?))
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        for (x, y) in v.iter_mut().zip(b) {
            *x -= dot * y;
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn diagonal_two_one() {
        let m = Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (vals, vecs) = top_eigvecs(&m, 1).unwrap();
        assert!((vals.data()[0] - 2.0).abs() < 1e-10);
        assert!((vecs.at(0, 0).abs() - 1.0).abs() < 1e-8);
        assert!(vecs.at(1, 0).abs() < 1e-8);
    }

    #[test]
    fn identity_accepts_any_unit_vector() {
        let (vals, vecs) = top_eigvecs(&Tensor::identity(3), 1).unwrap();
        assert!((vals.data()[0] - 1.0).abs() < 1e-10);
        let n: f64 = (0..3).map(|i| vecs.at(i, 0).powi(2)).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_and_bad_k() {
        let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(top_eigvecs(&m, 1), Err(Error::InvalidArgument(_))));
        assert!(top_eigvecs(&Tensor::identity(2), 3).is_err());
        assert!(top_eigvecs(&Tensor::identity(2), 0).is_err());
    }

    fn random_symmetric(rng: &mut Rng, d: usize) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in i..d {
                let v = rng.gaussian();
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        m
    }

    #[test]
    fn matches_jacobi_on_random_symmetric() {
        let mut rng = Rng::new(99);
        for d in 2..=8 {
            let m = random_symmetric(&mut rng, d);
            let (want_vals, want_vecs) = testkit::jacobi_eigen(&m);
            let t = Tensor::from_rows(&m).unwrap();
            let (vals, vecs) = top_eigvecs(&t, d).unwrap();
            for c in 0..d {
                assert!((vals.data()[c] - want_vals[c]).abs() < 1e-6, "d={d} c={c}");
                let dot: f64 = (0..d).map(|r| vecs.at(r, c) * want_vecs[r][c]).sum();
                assert!((dot.abs() - 1.0).abs() < 1e-6, "d={d} c={c} dot={dot}");
            }
            for a in 0..d {
                for b in (a + 1)..d {
                    let dot: f64 = (0..d).map(|r| vecs.at(r, a) * vecs.at(r, b)).sum();
                    assert!(dot.abs() < 1e-8);
                }
            }
        }
    }
}
