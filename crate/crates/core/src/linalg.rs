//! Small dense helpers: the canonical symplectic matrix, matrix norms and
//! spectra of `d x d` Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Node-level `J = [[0, -I], [I, 0]]` of size `d x d`.
pub fn symplectic_j(dim: usize) -> DMatrix<f64> {
    let h = dim / 2;
    let mut j = DMatrix::zeros(dim, dim);
    for i in 0..h {
        j[(i, h + i)] = -1.0;
        j[(h + i, i)] = 1.0;
    }
    j
}

/// Result of [`power_spectral_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value by power iteration on `MᵀM`, started from a fixed
/// vector so that results are reproducible.
pub fn power_spectral_norm(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> PowerIteration {
    let cols = m.ncols();
    if cols == 0 || m.nrows() == 0 {
        return PowerIteration {
            norm: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let gram = m.transpose() * m;
    let mut v = DVector::from_fn(cols, |i, _| 1.0 + 0.1 * ((i * 7919 % 13) as f64));
    v /= v.norm();
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return PowerIteration {
                norm: 0.0,
                iterations: it,
                converged: true,
            };
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
            return PowerIteration {
                norm: next.max(0.0).sqrt(),
                iterations: it,
                converged: true,
            };
        }
        lambda = next;
    }
    PowerIteration {
        norm: lambda.max(0.0).sqrt(),
        iterations: max_iter,
        converged: false,
    }
}

/// Exact spectral norm from the singular value decomposition.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Sum of all absolute entries.
pub fn entrywise_l1(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x.abs()).sum()
}

/// Induced 1-norm (largest absolute column sum).
pub fn induced_l1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Block-diagonal `[[a, 0], [0, b]]`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut m = DMatrix::zeros(ra + rb, ca + cb);
    m.view_mut((0, 0), (ra, ca)).copy_from(a);
    m.view_mut((ra, ca), (rb, cb)).copy_from(b);
    m
}

/// Eigenvalues `(re, im)` of a small real square matrix via the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("non-square matrix {:?}", m.shape())));
    }
    if m.nrows() > 16 {
        return Err(Error::Unsupported(format!(
            "dense eigenvalues for d = {} > 16",
            m.nrows()
        )));
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::NoConvergence)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect())
}

/// Largest real part over the full spectrum.
pub fn eigen_realpart_max(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|(re, _)| re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Serde adapter storing a matrix as an array of rows.
pub mod rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(m.nrows()))?;
        for r in m.row_iter() {
            seq.serialize_element(&r.iter().copied().collect::<Vec<f64>>())?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }
}

/// Serde adapter storing a vector as a plain array.
pub mod column {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = (f64, f64);

    fn cmul(a: C, b: C) -> C {
        (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
    }

    fn cdiv(a: C, b: C) -> C {
        let den = b.0 * b.0 + b.1 * b.1;
        ((a.0 * b.0 + a.1 * b.1) / den, (a.1 * b.0 - a.0 * b.1) / den)
    }

    /// Characteristic polynomial by Faddeev-LeVerrier, coefficients of
    /// `λ^n + c_1 λ^{n-1} + ... + c_n`.
    fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        let mut coeffs = vec![1.0];
        let mut m = DMatrix::<f64>::zeros(n, n);
        for k in 1..=n {
            m = a * &m + DMatrix::identity(n, n) * coeffs[k - 1];
            let c = -(a * &m).trace() / k as f64;
            coeffs.push(c);
        }
        coeffs
    }

    /// Durand-Kerner roots of a monic polynomial.
    fn poly_roots(coeffs: &[f64]) -> Vec<C> {
        let n = coeffs.len() - 1;
        let eval = |z: C| {
            let mut acc = (1.0, 0.0);
            for &c in &coeffs[1..] {
                acc = cmul(acc, z);
                acc.0 += c;
            }
            acc
        };
        let mut roots: Vec<C> = (0..n)
            .map(|k| {
                let mut z = (1.0, 0.0);
                for _ in 0..=k {
                    z = cmul(z, (0.4, 0.9));
                }
                z
            })
            .collect();
        for _ in 0..2000 {
            for i in 0..n {
                let mut den = (1.0, 0.0);
                for j in 0..n {
                    if i != j {
                        den = cmul(den, (roots[i].0 - roots[j].0, roots[i].1 - roots[j].1));
                    }
                }
                let delta = cdiv(eval(roots[i]), den);
                roots[i] = (roots[i].0 - delta.0, roots[i].1 - delta.1);
            }
        }
        roots
    }

    fn oracle_max_real(a: &DMatrix<f64>) -> f64 {
        poly_roots(&char_poly(a))
            .into_iter()
            .map(|z| z.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn j_is_orthogonal_and_skew() {
        for d in [2, 4, 8] {
            let j = symplectic_j(d);
            assert_eq!(j.transpose(), -&j);
            assert_eq!(j.transpose() * &j, DMatrix::identity(d, d));
            assert!((spectral_norm(&j) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn spectrum_of_j_is_imaginary() {
        let re = eigen_realpart_max(&symplectic_j(2)).unwrap();
        assert!(re.abs() < 1e-15);
    }

    #[test]
    fn diagonal_spectrum() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0]));
        assert!((eigen_realpart_max(&m).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn schur_agrees_with_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..50 {
            let n = 1 + trial % 4;
            let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let got = eigen_realpart_max(&a).unwrap();
            let want = oracle_max_real(&a);
            assert!((got - want).abs() < 1e-7, "n={n}: {got} vs {want}");
        }
    }

    #[test]
    fn psd_times_j_has_imaginary_spectrum_by_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let b = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>() - 0.5);
            let s = b.transpose() * &b;
            let a = &s * symplectic_j(4).transpose();
            assert!(oracle_max_real(&a).abs() <= 1e-8);
            assert!(eigen_realpart_max(&a).unwrap().abs() <= 1e-8);
        }
    }

    #[test]
    fn power_iteration_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>() - 0.5);
            let pi = power_spectral_norm(&a, 1e-12, 100_000);
            assert!(pi.converged);
            assert!((pi.norm - spectral_norm(&a)).abs() < 1e-5 * spectral_norm(&a));
        }
    }

    #[test]
    fn oversized_eigenproblem_rejected() {
        assert!(eigenvalues(&DMatrix::identity(17, 17)).is_err());
    }

    #[test]
    fn norms_of_known_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(entrywise_l1(&m), 6.5);
        assert_eq!(induced_l1(&m), 4.0);
        assert_eq!(max_abs(&m), 3.0);
    }
}
