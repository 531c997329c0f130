//! The semantic matching objective.
//!
//! Cosine logits between the normalized embeddings are divided by the
//! temperature and softmax-normalized: row-wise for the image-to-text
//! direction, column-wise for text-to-image. Each direction is scored by
//! cross-entropy against the corresponding soft-target direction and the
//! two are averaged. The two directions are implemented explicitly; the
//! directionality of each softmax mirrors the targets, with no attempt
//! to merge them into one index convention.
//!
//! A hard-InfoNCE baseline (one-hot diagonal targets) is provided for
//! comparison experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::pairing::SimilarityBundle;

/// Default temperature initialization.
pub const DEFAULT_TAU_INIT: f64 = 0.07;

/// Optional upper clamp applied after optimizer updates.
pub const DEFAULT_TAU_MAX: f64 = 100.0;

/// Predictions are clamped here before the log.
pub const LOG_FLOOR: f64 = 1e-30;

/// Unit-norm tolerance accepted by [`logits`].
const UNIT_NORM_TOL: f64 = 1e-3;

/// Learnable softmax temperature, stored as log(tau) so it stays positive.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Temperature {
    log_tau: f64,
    max_tau: f64,
}

impl Temperature {
    pub fn new(tau: f64) -> Result<Temperature> {
        if tau <= 0.0 || !tau.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive and finite, got {tau}"
            )));
        }
        Ok(Temperature {
            log_tau: tau.ln(),
            max_tau: DEFAULT_TAU_MAX,
        })
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn log_tau(&self) -> f64 {
        self.log_tau
    }

    /// Raw parameter write; no clamping so that finite perturbations of
    /// the parameter stay exact. Callers clamp explicitly after updates.
    pub fn set_log_tau(&mut self, log_tau: f64) {
        self.log_tau = log_tau;
    }

    /// Apply the upper clamp.
    pub fn clamp(&mut self) {
        let max_log = self.max_tau.ln();
        if self.log_tau > max_log {
            self.log_tau = max_log;
        }
    }
}

impl Default for Temperature {
    fn default() -> Temperature {
        Temperature::new(DEFAULT_TAU_INIT).expect("default tau is valid")
    }
}

/// Normalization axis for predictions and targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Rows are distributions: each image over the batch texts.
    ImageToText,
    /// Columns are distributions: each text over the batch images.
    TextToImage,
}

/// Per-direction losses and their symmetric average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_v2t: f64,
    pub l_t2v: f64,
    pub total: f64,
}

impl LossReport {
    fn new(l_v2t: f64, l_t2v: f64) -> LossReport {
        LossReport {
            l_v2t,
            l_t2v,
            total: (l_v2t + l_t2v) / 2.0,
        }
    }
}

/// Gradients of a loss w.r.t. the normalized embeddings and log(tau).
#[derive(Debug, Clone)]
pub struct LossGradients {
    pub d_v_tilde: Mat,
    pub d_t_tilde: Mat,
    pub d_log_tau: f64,
}

/// Cosine logits between unit-norm embedding rows.
pub fn logits(v_tilde: &Mat, t_tilde: &Mat) -> Result<Mat> {
    if v_tilde.cols() != t_tilde.cols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} embedding dims", v_tilde.cols()),
            got: format!("{} embedding dims", t_tilde.cols()),
        });
    }
    for (name, m) in [("image", v_tilde), ("text", t_tilde)] {
        for i in 0..m.rows() {
            let norm = crate::mat::l2_norm(m.row(i));
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::ContractViolation(format!(
                    "{name} embedding row {i} has norm {norm}, expected unit"
                )));
            }
        }
    }
    Ok(v_tilde.matmul_transpose(t_tilde))
}

/// Temperature softmax of the logits along the direction's axis, with
/// max-subtraction for overflow safety.
pub fn predict_distribution(s_hat: &Mat, tau: &Temperature, direction: Direction) -> Mat {
    let t = tau.tau();
    let n = s_hat.rows();
    let m = s_hat.cols();
    let mut out = Mat::zeros(n, m);
    match direction {
        Direction::ImageToText => {
            for i in 0..n {
                let row: Vec<f64> = s_hat.row(i).iter().map(|v| v / t).collect();
                softmax_into(&row, out.row_mut(i));
            }
        }
        Direction::TextToImage => {
            for j in 0..m {
                let col: Vec<f64> = (0..n).map(|i| s_hat.get(i, j) / t).collect();
                let mut buf = vec![0.0; n];
                softmax_into(&col, &mut buf);
                for (i, v) in buf.iter().enumerate() {
                    out.set(i, j, *v);
                }
            }
        }
    }
    out
}

fn softmax_into(src: &[f64], dst: &mut [f64]) {
    let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (d, &x) in dst.iter_mut().zip(src) {
        let e = (x - max).exp();
        *d = e;
        sum += e;
    }
    for d in dst.iter_mut() {
        *d /= sum;
    }
}

fn check_distribution(m: &Mat, direction: Direction, name: &str) -> Result<()> {
    const TOL: f64 = 1e-6;
    match direction {
        Direction::ImageToText => {
            for i in 0..m.rows() {
                let sum: f64 = m.row(i).iter().sum();
                if !sum.is_finite() || (sum - 1.0).abs() > TOL {
                    return Err(Error::ContractViolation(format!(
                        "{name} row {i} sums to {sum}, expected 1"
                    )));
                }
            }
        }
        Direction::TextToImage => {
            for j in 0..m.cols() {
                let sum: f64 = (0..m.rows()).map(|i| m.get(i, j)).sum();
                if !sum.is_finite() || (sum - 1.0).abs() > TOL {
                    return Err(Error::ContractViolation(format!(
                        "{name} column {j} sums to {sum}, expected 1"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Soft-target cross-entropy: -(1/N) sum_ij y_ij log y_hat_ij.
///
/// Both matrices must be valid distributions along the direction's axis.
/// Predictions are clamped at [`LOG_FLOOR`] before the log; a NaN result
/// is a hard failure.
pub fn cross_entropy(y: &Mat, y_hat: &Mat, direction: Direction) -> Result<f64> {
    if y.rows() != y_hat.rows() || y.cols() != y_hat.cols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", y.rows(), y.cols()),
            got: format!("{}x{}", y_hat.rows(), y_hat.cols()),
        });
    }
    check_distribution(y, direction, "targets")?;
    check_distribution(y_hat, direction, "predictions")?;
    let n = match direction {
        Direction::ImageToText => y.rows(),
        Direction::TextToImage => y.cols(),
    };
    let mut acc = 0.0;
    for i in 0..y.rows() {
        for j in 0..y.cols() {
            let t = y.get(i, j);
            if t == 0.0 {
                continue;
            }
            acc -= t * y_hat.get(i, j).max(LOG_FLOOR).ln();
        }
    }
    let loss = acc / n as f64;
    if loss.is_nan() {
        return Err(Error::ContractViolation("cross-entropy produced NaN".into()));
    }
    Ok(loss)
}

/// The full objective: logits, both softmax directions, cross-entropy
/// against the bundle's soft targets, symmetric average.
pub fn semantic_matching_loss(
    v_tilde: &Mat,
    t_tilde: &Mat,
    bundle: &SimilarityBundle,
    tau: &Temperature,
) -> Result<LossReport> {
    let (report, _) = loss_against_targets(v_tilde, t_tilde, &bundle.y_v2t, &bundle.y_t2v, tau, false)?;
    Ok(report)
}

/// Same as [`semantic_matching_loss`], also returning gradients w.r.t.
/// the normalized embeddings and log(tau).
pub fn semantic_matching_loss_with_grads(
    v_tilde: &Mat,
    t_tilde: &Mat,
    bundle: &SimilarityBundle,
    tau: &Temperature,
) -> Result<(LossReport, LossGradients)> {
    let (report, grads) =
        loss_against_targets(v_tilde, t_tilde, &bundle.y_v2t, &bundle.y_t2v, tau, true)?;
    Ok((report, grads.expect("gradients requested")))
}

/// Symmetric InfoNCE with one-hot diagonal targets; the paired-data
/// baseline. Row i of the image side is assumed paired with row i of the
/// text side.
pub fn hard_infonce_loss(v_tilde: &Mat, t_tilde: &Mat, tau: &Temperature) -> Result<f64> {
    let (report, _) = infonce_report(v_tilde, t_tilde, tau, false)?;
    Ok(report.total)
}

pub fn hard_infonce_loss_with_grads(
    v_tilde: &Mat,
    t_tilde: &Mat,
    tau: &Temperature,
) -> Result<(LossReport, LossGradients)> {
    let (report, grads) = infonce_report(v_tilde, t_tilde, tau, true)?;
    Ok((report, grads.expect("gradients requested")))
}

fn infonce_report(
    v_tilde: &Mat,
    t_tilde: &Mat,
    tau: &Temperature,
    want_grads: bool,
) -> Result<(LossReport, Option<LossGradients>)> {
    if v_tilde.rows() != t_tilde.rows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} paired rows", v_tilde.rows()),
            got: format!("{} paired rows", t_tilde.rows()),
        });
    }
    let n = v_tilde.rows();
    let mut identity = Mat::zeros(n, n);
    for i in 0..n {
        identity.set(i, i, 1.0);
    }
    loss_against_targets(v_tilde, t_tilde, &identity, &identity, tau, want_grads)
}

fn loss_against_targets(
    v_tilde: &Mat,
    t_tilde: &Mat,
    y_v2t: &Mat,
    y_t2v: &Mat,
    tau: &Temperature,
    want_grads: bool,
) -> Result<(LossReport, Option<LossGradients>)> {
    let s_hat = logits(v_tilde, t_tilde)?;
    let n = s_hat.rows();
    if s_hat.cols() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("square {n}x{n} logits"),
            got: format!("{}x{}", s_hat.rows(), s_hat.cols()),
        });
    }
    if y_v2t.rows() != n || y_v2t.cols() != n || y_t2v.rows() != n || y_t2v.cols() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{n} targets"),
            got: format!("{}x{} / {}x{}", y_v2t.rows(), y_v2t.cols(), y_t2v.rows(), y_t2v.cols()),
        });
    }
    let yh_v2t = predict_distribution(&s_hat, tau, Direction::ImageToText);
    let yh_t2v = predict_distribution(&s_hat, tau, Direction::TextToImage);
    let l_v2t = cross_entropy(y_v2t, &yh_v2t, Direction::ImageToText)?;
    let l_t2v = cross_entropy(y_t2v, &yh_t2v, Direction::TextToImage)?;
    let report = LossReport::new(l_v2t, l_t2v);
    if !report.total.is_finite() {
        return Err(Error::ContractViolation(format!(
            "loss is not finite: {report:?}"
        )));
    }
    if !want_grads {
        return Ok((report, None));
    }

    // d(total)/dz where z = s_hat / tau: the usual softmax cross-entropy
    // residual, one per direction, averaged.
    let t = tau.tau();
    let inv2n = 1.0 / (2.0 * n as f64);
    let mut d_z = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let g = (yh_v2t.get(i, j) - y_v2t.get(i, j)) + (yh_t2v.get(i, j) - y_t2v.get(i, j));
            d_z.set(i, j, g * inv2n);
        }
    }
    // z = s_hat * exp(-log_tau): d(total)/d(log_tau) = -sum(d_z * s_hat)/tau.
    let mut d_log_tau = 0.0;
    for i in 0..n {
        for j in 0..n {
            d_log_tau -= d_z.get(i, j) * s_hat.get(i, j);
        }
    }
    d_log_tau /= t;
    // d(total)/d(s_hat) = d_z / tau, then through the bilinear logits.
    let mut d_s_hat = d_z;
    d_s_hat.scale(1.0 / t);
    let d_v_tilde = d_s_hat.matmul(t_tilde);
    let d_t_tilde = d_s_hat.transpose().matmul(v_tilde);

    Ok((
        report,
        Some(LossGradients {
            d_v_tilde,
            d_t_tilde,
            d_log_tau,
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::soft_targets_from_similarity;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_unit_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Mat {
        let mut m = Mat::zeros(n, p);
        for i in 0..n {
            loop {
                let row: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = crate::mat::l2_norm(&row);
                if norm > 1e-3 {
                    let unit: Vec<f64> = row.iter().map(|v| v / norm).collect();
                    m.row_mut(i).copy_from_slice(&unit);
                    break;
                }
            }
        }
        m
    }

    fn random_row_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            for (j, v) in raw.iter().enumerate() {
                m.set(i, j, v / sum);
            }
        }
        m
    }

    #[test]
    fn tau_defaults_and_positivity() {
        let tau = Temperature::default();
        assert!((tau.tau() - DEFAULT_TAU_INIT).abs() < 1e-15);
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        let mut t = Temperature::new(500.0).unwrap();
        t.clamp();
        assert!((t.tau() - DEFAULT_TAU_MAX).abs() < 1e-9);
    }

    #[test]
    fn logits_self_similarity_diagonal_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_unit_rows(&mut rng, 4, 8);
        let s = logits(&v, &v).unwrap();
        for i in 0..4 {
            assert!((s.get(i, i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn logits_orthogonal_rows_are_zero() {
        let v = Mat::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let t = Mat::from_rows(&[vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]);
        let s = logits(&v, &t).unwrap();
        assert_eq!(s.get(0, 0), 0.0);
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.get(1, 1), 1.0);
    }

    #[test]
    fn logits_match_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_unit_rows(&mut rng, 5, 7);
        let t = random_unit_rows(&mut rng, 5, 7);
        let s = logits(&v, &t).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let oracle: f64 = v.row(i).iter().zip(t.row(j)).map(|(a, b)| a * b).sum();
                assert!((s.get(i, j) - oracle).abs() < 1e-6);
                assert!(s.get(i, j) <= 1.0 + 1e-9 && s.get(i, j) >= -1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn logits_reject_non_unit_rows() {
        let v = Mat::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        let t = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(logits(&v, &t), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn predictions_constant_row_is_uniform() {
        let s = Mat::from_rows(&[vec![0.3, 0.3, 0.3], vec![0.0, 0.5, 1.0], vec![1.0, 0.0, 0.0]]);
        let tau = Temperature::new(1.0).unwrap();
        let y = predict_distribution(&s, &tau, Direction::ImageToText);
        for v in y.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        // Row sums within 1e-9 either direction.
        for i in 0..3 {
            let sum: f64 = y.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
        let yc = predict_distribution(&s, &tau, Direction::TextToImage);
        for j in 0..3 {
            let sum: f64 = (0..3).map(|i| yc.get(i, j)).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn small_tau_sharpens_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(2..6);
            let mut s = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    s.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            let sharp = predict_distribution(&s, &Temperature::new(0.01).unwrap(), Direction::ImageToText);
            let smooth = predict_distribution(&s, &Temperature::new(1.0).unwrap(), Direction::ImageToText);
            for i in 0..n {
                let row = s.row(i);
                let non_constant = row.iter().any(|v| (v - row[0]).abs() > 1e-9);
                if non_constant {
                    let max_sharp = sharp.row(i).iter().cloned().fold(f64::MIN, f64::max);
                    let max_smooth = smooth.row(i).iter().cloned().fold(f64::MIN, f64::max);
                    assert!(max_sharp > max_smooth);
                }
            }
        }
    }

    #[test]
    fn cross_entropy_gibbs_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = random_row_stochastic(&mut rng, 4);
        let loss = cross_entropy(&y, &y, Direction::ImageToText).unwrap();
        let mut entropy = 0.0;
        for i in 0..4 {
            for &v in y.row(i) {
                entropy -= v * v.ln();
            }
        }
        entropy /= 4.0;
        assert!((loss - entropy).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_one_hot_vs_uniform_is_log_n() {
        for n in [2usize, 4, 8] {
            let mut y = Mat::zeros(n, n);
            for i in 0..n {
                y.set(i, i, 1.0);
            }
            let mut y_hat = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    y_hat.set(i, j, 1.0 / n as f64);
                }
            }
            let loss = cross_entropy(&y, &y_hat, Direction::ImageToText).unwrap();
            assert!((loss - (n as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(2..7);
            let y = random_row_stochastic(&mut rng, n);
            let y_hat = random_row_stochastic(&mut rng, n);
            let got = cross_entropy(&y, &y_hat, Direction::ImageToText).unwrap();
            let mut oracle = 0.0;
            for i in 0..n {
                for j in 0..n {
                    oracle -= y.get(i, j) * y_hat.get(i, j).max(LOG_FLOOR).ln();
                }
            }
            oracle /= n as f64;
            assert!((got - oracle).abs() < 1e-9);
            // Gibbs: never below the targets' mean row entropy.
            let mut entropy = 0.0;
            for i in 0..n {
                for &v in y.row(i) {
                    if v > 0.0 {
                        entropy -= v * v.ln();
                    }
                }
            }
            entropy /= n as f64;
            assert!(got >= entropy - 1e-12);
        }
    }

    #[test]
    fn cross_entropy_rejects_invalid_distributions() {
        let y = Mat::from_rows(&[vec![0.5, 0.2], vec![0.5, 0.5]]);
        let y_hat = Mat::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert!(cross_entropy(&y, &y_hat, Direction::ImageToText).is_err());
    }

    fn bundle_from_s(s: &Mat) -> SimilarityBundle {
        let (y_v2t, y_t2v) = soft_targets_from_similarity(s);
        SimilarityBundle {
            s: s.clone(),
            y_v2t,
            y_t2v,
        }
    }

    #[test]
    fn semantic_loss_is_finite_and_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let n = rng.gen_range(2..6);
            let v = random_unit_rows(&mut rng, n, 9);
            let t = random_unit_rows(&mut rng, n, 9);
            let mut s = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    s.set(i, j, rng.gen_range(0.0..1.0));
                }
            }
            let bundle = bundle_from_s(&s);
            let report =
                semantic_matching_loss(&v, &t, &bundle, &Temperature::default()).unwrap();
            assert!(report.total.is_finite());
            assert!(report.total >= 0.0);
            assert_eq!(report.total, (report.l_v2t + report.l_t2v) / 2.0);
        }
    }

    #[test]
    fn semantic_loss_symmetric_under_modality_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.gen_range(2..6);
            let v = random_unit_rows(&mut rng, n, 6);
            let t = random_unit_rows(&mut rng, n, 6);
            let mut s = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    s.set(i, j, rng.gen_range(0.0..1.0));
                }
            }
            let bundle = bundle_from_s(&s);
            let fwd = semantic_matching_loss(&v, &t, &bundle, &Temperature::default()).unwrap();
            let swapped =
                semantic_matching_loss(&t, &v, &bundle.transposed(), &Temperature::default())
                    .unwrap();
            assert!((fwd.total - swapped.total).abs() < 1e-12);
            assert!((fwd.l_v2t - swapped.l_t2v).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_targets_are_shift_invariant_so_loss_is_too() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 4;
        let v = random_unit_rows(&mut rng, n, 5);
        let t = random_unit_rows(&mut rng, n, 5);
        let mut s = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s.set(i, j, rng.gen_range(0.0..1.0));
            }
        }
        let mut shifted = s.clone();
        for i in 0..n {
            for j in 0..n {
                shifted.set(i, j, s.get(i, j) + 0.37);
            }
        }
        let a = semantic_matching_loss(&v, &t, &bundle_from_s(&s), &Temperature::default()).unwrap();
        let b = semantic_matching_loss(&v, &t, &bundle_from_s(&shifted), &Temperature::default())
            .unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
    }

    #[test]
    fn equal_label_texts_get_exactly_equal_target_mass() {
        // Texts 1 and 3 share identical labels: every row of y_v2t must
        // give them bitwise-equal mass.
        use crate::finding::{FindingLabel, FindingType};
        let la = FindingLabel::from_findings(&[FindingType::Edema]).unwrap();
        let lb = FindingLabel::from_findings(&[FindingType::Edema, FindingType::Pneumonia]).unwrap();
        let lc = FindingLabel::from_findings(&[FindingType::Fracture]).unwrap();
        let img_labels = [la, lb, lc, la];
        let txt_labels = [lb, la, lc, la];
        let n = 4;
        let mut s = Mat::zeros(n, n);
        for (i, img) in img_labels.iter().enumerate() {
            for (j, txt) in txt_labels.iter().enumerate() {
                s.set(i, j, crate::pairing::semantic_similarity(*img, *txt).unwrap());
            }
        }
        let (y_v2t, _) = soft_targets_from_similarity(&s);
        for i in 0..n {
            assert_eq!(y_v2t.get(i, 1), y_v2t.get(i, 3));
            assert!(y_v2t.get(i, 1) > 0.0);
        }
    }

    #[test]
    fn infonce_uniform_logits_is_log_n() {
        // All embeddings identical: logits constant 1 everywhere, softmax
        // uniform, loss log(N).
        let n = 5;
        let mut v = Mat::zeros(n, 3);
        for i in 0..n {
            v.row_mut(i).copy_from_slice(&[1.0, 0.0, 0.0]);
        }
        let loss = hard_infonce_loss(&v, &v, &Temperature::new(1.0).unwrap()).unwrap();
        assert!((loss - (n as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn infonce_perfect_alignment_goes_to_zero() {
        // Orthonormal embeddings, aligned pairs, sharp temperature.
        let n = 4;
        let mut v = Mat::zeros(n, n);
        for i in 0..n {
            v.set(i, i, 1.0);
        }
        let loss = hard_infonce_loss(&v, &v, &Temperature::new(0.01).unwrap()).unwrap();
        assert!(loss < 1e-3, "loss {loss} should be near zero");
    }

    #[test]
    fn infonce_matches_cross_entropy_against_one_hot_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.gen_range(2..6);
            let v = random_unit_rows(&mut rng, n, 8);
            let t = random_unit_rows(&mut rng, n, 8);
            let tau = Temperature::default();
            let got = hard_infonce_loss(&v, &t, &tau).unwrap();

            // Independent scalar oracle.
            let tval = tau.tau();
            let mut l_v2t = 0.0;
            let mut l_t2v = 0.0;
            for i in 0..n {
                let row: Vec<f64> = (0..n)
                    .map(|j| crate::mat::dot(v.row(i), t.row(j)) / tval)
                    .collect();
                l_v2t -= log_softmax_at(&row, i);
                let col: Vec<f64> = (0..n)
                    .map(|j| crate::mat::dot(v.row(j), t.row(i)) / tval)
                    .collect();
                l_t2v -= log_softmax_at(&col, i);
            }
            let oracle = (l_v2t / n as f64 + l_t2v / n as f64) / 2.0;
            assert!((got - oracle).abs() < 1e-9, "got {got}, oracle {oracle}");
        }
    }

    fn log_softmax_at(row: &[f64], idx: usize) -> f64 {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row[idx] - lse
    }
}
