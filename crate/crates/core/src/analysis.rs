//! Sentence representations and their 2-D PCA projection.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::Seq2SeqModel;
use crate::numerics::{Matrix, Real};

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// One row per phrase: `(h, c)` of every encoder layer after the phrase,
/// laid out `[h_0, c_0, h_1, c_1, ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationSet {
    pub labels: Vec<String>,
    pub vectors: Matrix<f64>,
}

/// Encodes each phrase with the model's configured source direction.
pub fn extract_representations<T: Real>(model: &Seq2SeqModel<T>, phrases: &[Vec<usize>]) -> Result<RepresentationSet> {
    if phrases.is_empty() {
        return Err(Error::Input("no phrases given".to_string()));
    }
    let dim = model.config.summary_dim();
    let mut data = Vec::with_capacity(phrases.len() * dim);
    let mut labels = Vec::with_capacity(phrases.len());
    for phrase in phrases {
        let summary = model.encode_default(phrase)?;
        data.extend(summary.flatten_column(0).into_iter().map(Real::as_f64));
        labels.push(model.src_vocab.decode(phrase).join(" "));
    }
    Ok(RepresentationSet {
        labels,
        vectors: Matrix::new(phrases.len(), dim, data)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// `N x 2` centred coordinates along the two components.
    pub projections: Matrix<f64>,
    /// `2 x D`, orthonormal rows.
    pub components: Matrix<f64>,
    /// Sample variance (denominator `N − 1`) along each component.
    pub explained_variance: [f64; 2],
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the columns of the second matrix.
pub fn symmetric_eigen(a: &Matrix<f64>) -> Result<(Vec<f64>, Matrix<f64>)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::dim("symmetric_eigen", a.shape(), (n, n)));
    }
    let mut a = a.clone();
    let mut v = Matrix::identity(n);
    let total: f64 = a.as_slice().iter().map(|x| x * x).sum::<f64>();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a.get(p, q) * a.get(p, q))
            .sum();
        if off <= JACOBI_TOL * JACOBI_TOL * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + Float::sqrt(theta * theta + 1.0));
                let c = 1.0 / Float::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.get(k, p), a.get(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.get(p, k), a.get(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = v.select_columns(&order);
    Ok((values, vectors))
}

/// Makes the largest-magnitude entry positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = Float::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if norm <= 1e-300 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}

/// Orthonormal vector independent of `basis`, by Gram-Schmidt over the unit
/// vectors.
fn complement(basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    for axis in 0..dim {
        let mut v = alloc::vec![0.0; dim];
        v[axis] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
        }
        if Float::sqrt(v.iter().map(|x| x * x).sum::<f64>()) > 0.5 {
            normalize(&mut v);
            return v;
        }
    }
    unreachable!("dimension exceeds basis size")
}

/// Projects the rows of `vectors` (`N x D`) onto the top two principal axes of
/// their sample covariance. Works on the `N x N` Gram matrix when `N < D`.
pub fn pca_2d(vectors: &Matrix<f64>) -> Result<Pca> {
    let (n, d) = vectors.shape();
    if n < 2 {
        return Err(Error::Input(alloc::format!("PCA needs at least 2 points, got {n}")));
    }
    if d < 2 {
        return Err(Error::Input(alloc::format!("PCA to 2-D needs dimension at least 2, got {d}")));
    }
    let mut centered = vectors.clone();
    for c in 0..d {
        let mean = (0..n).map(|r| vectors.get(r, c)).sum::<f64>() / n as f64;
        for r in 0..n {
            centered.set(r, c, vectors.get(r, c) - mean);
        }
    }
    let denom = (n - 1) as f64;
    let trace: f64 = centered.as_slice().iter().map(|x| x * x).sum::<f64>() / denom;

    let mut comps: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut variances = [0.0f64; 2];
    if n < d {
        let mut gram = crate::numerics::matmul(&centered, &centered.transpose())?;
        gram.scale_in_place(1.0 / denom);
        let (values, u) = symmetric_eigen(&gram)?;
        for k in 0..2 {
            let lambda = values[k].max(0.0);
            variances[k] = lambda;
            if lambda <= 1e-13 * trace || lambda == 0.0 {
                break;
            }
            let mut v: Vec<f64> = (0..d)
                .map(|c| (0..n).map(|r| centered.get(r, c) * u.get(r, k)).sum())
                .collect();
            normalize(&mut v);
            comps.push(v);
        }
    } else {
        let mut cov = crate::numerics::matmul_tn(&centered, &centered)?;
        cov.scale_in_place(1.0 / denom);
        let (values, vecs) = symmetric_eigen(&cov)?;
        for k in 0..2 {
            let lambda = values[k].max(0.0);
            variances[k] = lambda;
            if lambda <= 1e-13 * trace || lambda == 0.0 {
                break;
            }
            comps.push(vecs.column_values(k));
        }
    }
    while comps.len() < 2 {
        let k = comps.len();
        variances[k] = 0.0;
        comps.push(complement(&comps, d));
    }
    for c in comps.iter_mut() {
        fix_sign(c);
    }
    let components = Matrix::new(2, d, comps.concat())?;
    let projections = crate::numerics::matmul(&centered, &components.transpose())?;
    Ok(Pca {
        projections,
        components,
        explained_variance: variances,
    })
}
