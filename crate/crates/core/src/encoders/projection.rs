//! Linear projection heads and the shared-space normalization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mat::{dot, l2_norm, Mat};

/// Added to the norm before dividing, so a pathological zero embedding
/// normalizes to zero instead of NaN.
pub const NORM_EPSILON: f64 = 1e-12;

/// Linear map from an encoder's native space into the shared P-dim space.
#[derive(Debug, Clone)]
pub struct ProjectionHead {
    in_dim: usize,
    out_dim: usize,
    /// [out_dim][in_dim], flattened.
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
}

impl ProjectionHead {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Result<ProjectionHead> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidConfig("projection dims must be positive".into()));
        }
        let bound = (6.0 / in_dim as f64).sqrt();
        let w = (0..out_dim * in_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Ok(ProjectionHead {
            in_dim,
            out_dim,
            w,
            b: vec![0.0; out_dim],
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn project(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.in_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{}-dim input", self.in_dim),
                got: format!("{}-dim input", raw.len()),
            });
        }
        let mut out = vec![0.0; self.out_dim];
        for (p, o) in out.iter_mut().enumerate() {
            *o = self.b[p] + dot(&self.w[p * self.in_dim..(p + 1) * self.in_dim], raw);
        }
        Ok(out)
    }

    /// Batch projection: rows of `input` map to rows of the result.
    pub fn project_batch(&self, input: &Mat) -> Result<Mat> {
        let mut out = Mat::zeros(input.rows(), self.out_dim);
        for i in 0..input.rows() {
            out.row_mut(i).copy_from_slice(&self.project(input.row(i))?);
        }
        Ok(out)
    }

    /// Parameter and input gradients given dL/d(projected).
    /// Returns dL/d(input); weight gradients accumulate into `grads`
    /// laid out as [w, b].
    pub fn backward(&self, input: &Mat, d_proj: &Mat, grads: &mut [f64]) -> Mat {
        let (g_w, g_b) = grads.split_at_mut(self.w.len());
        let mut d_input = Mat::zeros(input.rows(), self.in_dim);
        for i in 0..input.rows() {
            let x = input.row(i);
            let delta = d_proj.row(i);
            let dx = d_input.row_mut(i);
            for (p, &dd) in delta.iter().enumerate() {
                if dd == 0.0 {
                    continue;
                }
                g_b[p] += dd;
                let row = &self.w[p * self.in_dim..(p + 1) * self.in_dim];
                for (j, (&wgt, &xv)) in row.iter().zip(x).enumerate() {
                    g_w[p * self.in_dim + j] += dd * xv;
                    dx[j] += dd * wgt;
                }
            }
        }
        d_input
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.b);
    }

    pub fn read_params<'a>(&mut self, src: &'a [f64]) -> &'a [f64] {
        let (w, rest) = src.split_at(self.w.len());
        let (b, tail) = rest.split_at(self.b.len());
        self.w = w.to_vec();
        self.b = b.to_vec();
        tail
    }
}

/// Normalize to unit length with the epsilon guard. Returns the unit
/// vector and the raw norm.
pub fn normalize(p: &[f64]) -> (Vec<f64>, f64) {
    let norm = l2_norm(p);
    let inv = 1.0 / (norm + NORM_EPSILON);
    (p.iter().map(|v| v * inv).collect(), norm)
}

/// Project through a head and normalize; returns (projected, unit).
pub fn project_and_normalize(raw: &[f64], head: &ProjectionHead) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = head.project(raw)?;
    let (unit, _) = normalize(&p);
    Ok((p, unit))
}

/// Row-wise normalization of a matrix; returns the unit matrix and norms.
pub fn normalize_rows(p: &Mat) -> (Mat, Vec<f64>) {
    let mut unit = Mat::zeros(p.rows(), p.cols());
    let mut norms = Vec::with_capacity(p.rows());
    for i in 0..p.rows() {
        let (u, n) = normalize(p.row(i));
        unit.row_mut(i).copy_from_slice(&u);
        norms.push(n);
    }
    (unit, norms)
}

/// Backward through row-wise normalization: given dL/d(unit) produce
/// dL/d(p), consistent with the epsilon-guarded forward.
pub fn normalize_rows_backward(p: &Mat, norms: &[f64], d_unit: &Mat) -> Mat {
    let mut d_p = Mat::zeros(p.rows(), p.cols());
    for (i, &n) in norms.iter().enumerate() {
        let m = n + NORM_EPSILON;
        let x = p.row(i);
        let g = d_unit.row(i);
        let gp = dot(g, x);
        let out = d_p.row_mut(i);
        if n > 0.0 {
            let coeff = gp / (n * m * m);
            for (o, (&gv, &xv)) in out.iter_mut().zip(g.iter().zip(x)) {
                *o = gv / m - coeff * xv;
            }
        } else {
            for (o, &gv) in out.iter_mut().zip(g) {
                *o = gv / m;
            }
        }
    }
    d_p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn pythagorean_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = ProjectionHead::new(4, 4, &mut rng).unwrap();
        let _ = head;
        let (unit, norm) = normalize(&[3.0, 4.0, 0.0, 0.0]);
        assert_eq!(norm, 5.0);
        assert!((unit[0] - 0.6).abs() < 1e-12);
        assert!((unit[1] - 0.8).abs() < 1e-12);
        assert_eq!(unit[2], 0.0);
    }

    #[test]
    fn random_projections_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let head = ProjectionHead::new(16, 8, &mut rng).unwrap();
        for _ in 0..50 {
            let raw: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (_, unit) = project_and_normalize(&raw, &head).unwrap();
            assert!((l2_norm(&unit) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_vector_normalizes_to_zero_not_nan() {
        let (unit, norm) = normalize(&[0.0; 8]);
        assert_eq!(norm, 0.0);
        assert!(unit.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn normalization_is_scale_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c: f64 = rng.gen_range(0.1..10.0);
            let scaled: Vec<f64> = p.iter().map(|v| v * c).collect();
            let (u1, _) = normalize(&p);
            let (u2, _) = normalize(&scaled);
            for (a, b) in u1.iter().zip(&u2) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn projection_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let head = ProjectionHead::new(8, 4, &mut rng).unwrap();
        assert!(head.project(&[0.0; 5]).is_err());
    }
}
