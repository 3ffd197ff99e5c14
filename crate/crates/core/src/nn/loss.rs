//! Student regression loss: pose MSE plus weighted alignment BCE.

/// Weight of the alignment term.
pub const STUDENT_BCE_WEIGHT: f64 = 0.1;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−[y ln σ(z) + (1−y) ln(1−σ(z))]`, stable for any finite `z`.
pub fn bce_with_logits(logit: f64, label: bool) -> f64 {
    let y = if label { 1.0 } else { 0.0 };
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentLoss {
    pub mse: f64,
    pub bce: f64,
    pub total: f64,
}

/// Loss and its gradients for one sample. Without a logit the BCE term is
/// absent.
pub fn student_loss_grad(
    pred: &[f64],
    logit: Option<f64>,
    truth: &[f64],
    truth_align: bool,
    w: f64,
) -> (StudentLoss, Vec<f64>, Option<f64>) {
    assert_eq!(pred.len(), truth.len());
    let n = pred.len() as f64;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let dpred = pred.iter().zip(truth).map(|(p, t)| 2.0 * (p - t) / n).collect();
    let (bce, dlogit) = match logit {
        Some(z) => {
            let y = if truth_align { 1.0 } else { 0.0 };
            (bce_with_logits(z, truth_align), Some(w * (sigmoid(z) - y)))
        }
        None => (0.0, None),
    };
    (StudentLoss { mse, bce, total: mse + w * bce }, dpred, dlogit)
}

pub fn student_loss(pred: &[f64], logit: Option<f64>, truth: &[f64], truth_align: bool, w: f64) -> f64 {
    student_loss_grad(pred, logit, truth, truth_align, w).0.total
}
