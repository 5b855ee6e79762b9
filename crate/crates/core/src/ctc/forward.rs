use super::CtcPosterior;
use crate::numeric::log_add;

/// Exact log-probability of `labels`, summed over every frame alignment
/// that collapses to it. Inadmissible label sequences score `-inf`.
pub fn ctc_forward_score(p: &CtcPosterior, labels: &[usize]) -> f64 {
    let blank = p.blank();
    if labels.iter().any(|&l| l >= blank) {
        return f64::NEG_INFINITY;
    }
    // extended sequence: blank, l0, blank, l1, ..., blank
    let ext_len = 2 * labels.len() + 1;
    let ext = |s: usize| if s % 2 == 0 { blank } else { labels[s / 2] };
    let mut alpha = vec![f64::NEG_INFINITY; ext_len];
    alpha[0] = p.log_prob(0, blank);
    if ext_len > 1 {
        alpha[1] = p.log_prob(0, ext(1));
    }
    let mut next = vec![f64::NEG_INFINITY; ext_len];
    for t in 1..p.frames() {
        for s in 0..ext_len {
            let mut acc = alpha[s];
            if s >= 1 {
                acc = log_add(acc, alpha[s - 1]);
            }
            if s >= 2 && ext(s) != blank && ext(s) != ext(s - 2) {
                acc = log_add(acc, alpha[s - 2]);
            }
            next[s] = if acc == f64::NEG_INFINITY {
                acc
            } else {
                acc + p.log_prob(t, ext(s))
            };
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    if ext_len == 1 {
        alpha[0]
    } else {
        log_add(alpha[ext_len - 1], alpha[ext_len - 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_frame() {
        let p = CtcPosterior::from_probs(&[vec![0.6, 0.3, 0.1]]).unwrap();
        assert!((ctc_forward_score(&p, &[0]) - 0.6f64.ln()).abs() < 1e-12);
        assert_eq!(ctc_forward_score(&p, &[0, 1]), f64::NEG_INFINITY);
    }

    #[test]
    fn two_frames_three_alignments() {
        let rows = vec![vec![0.5, 0.2, 0.3], vec![0.4, 0.4, 0.2]];
        let p = CtcPosterior::from_probs(&rows).unwrap();
        let expected = (0.5 * 0.4 + 0.5 * 0.2 + 0.3 * 0.4f64).ln();
        assert!((ctc_forward_score(&p, &[0]) - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_labels_take_the_all_blank_path() {
        let rows = vec![vec![0.5, 0.2, 0.3], vec![0.4, 0.4, 0.2], vec![0.1, 0.1, 0.8]];
        let p = CtcPosterior::from_probs(&rows).unwrap();
        let expected = 0.3f64.ln() + 0.2f64.ln() + 0.8f64.ln();
        assert!((ctc_forward_score(&p, &[]) - expected).abs() < 1e-12);
    }

    #[test]
    fn repeats_need_a_separating_blank() {
        let rows = vec![vec![0.5, 0.2, 0.3], vec![0.4, 0.4, 0.2]];
        let p = CtcPosterior::from_probs(&rows).unwrap();
        assert_eq!(ctc_forward_score(&p, &[0, 0]), f64::NEG_INFINITY);
        let expected = (0.5 * 0.4f64).ln();
        assert!((ctc_forward_score(&p, &[0, 1]) - (0.5 * 0.4f64).ln()).abs() < 1e-12);
        assert!(expected.is_finite());
    }
}
