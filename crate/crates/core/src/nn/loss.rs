use super::{check_len, NnError};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before logs.
pub const BCE_CLAMP: f64 = 1e-7;

/// Masked binary cross-entropy, averaged over the unmasked entries (or
/// summed if there are none, giving zero). Returns the loss and its
/// gradient with respect to `p`; the gradient is zero where the clamp is
/// active or the entry is masked out.
pub fn bce_loss(p: &[f64], target: &[f64], mask: &[bool]) -> Result<(f64, Vec<f64>), NnError> {
    check_len(p.len(), target.len())?;
    check_len(p.len(), mask.len())?;
    let count = mask.iter().filter(|m| **m).count().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; p.len()];
    for i in 0..p.len() {
        if !mask[i] {
            continue;
        }
        let t = target[i];
        let q = p[i].clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        loss -= t * q.ln() + (1.0 - t) * (1.0 - q).ln();
        if q == p[i] {
            grad[i] = (-t / q + (1.0 - t) / (1.0 - q)) / count;
        }
    }
    Ok((loss / count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probability_costs_ln2() {
        let (l, _) = bce_loss(&[0.5], &[1.0], &[true]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let (l, _) = bce_loss(&[0.5, 0.5, 0.9], &[0.0, 1.0, 1.0], &[true, true, false]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_zero() {
        let (l, g) = bce_loss(&[0.3, 0.7], &[1.0, 0.0], &[false, false]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn clamped_extremes_are_finite() {
        let (l, g) = bce_loss(&[0.0, 1.0], &[1.0, 0.0], &[true, true]).unwrap();
        assert!(l.is_finite());
        assert!((l - -(BCE_CLAMP.ln())).abs() < 1e-6);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = [0.2, 0.65, 0.91, 0.4];
        let t = [1.0, 0.0, 1.0, 0.0];
        let m = [true, true, true, false];
        let (_, g) = bce_loss(&p, &t, &m).unwrap();
        let h = 1e-6;
        for i in 0..p.len() {
            let mut up = p;
            up[i] += h;
            let mut dn = p;
            dn[i] -= h;
            let num = (bce_loss(&up, &t, &m).unwrap().0 - bce_loss(&dn, &t, &m).unwrap().0) / (2.0 * h);
            assert!((g[i] - num).abs() < 1e-6, "{i}: {} vs {num}", g[i]);
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(bce_loss(&[0.5], &[1.0, 0.0], &[true]).is_err());
    }
}
