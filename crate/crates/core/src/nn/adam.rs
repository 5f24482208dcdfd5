use serde::{Deserialize, Serialize};

use super::NnError;

/// Moment estimates for Adam, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state with β1 = 0.9, β2 = 0.999, ε = 1e-8, sized to `shapes`
    /// (element counts of each parameter tensor).
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn check_len(expected: usize, actual: usize) -> Result<(), NnError> {
    if expected == actual {
        Ok(())
    } else {
        Err(NnError::ShapeMismatch { expected, actual })
    }
}

/// One bias-corrected Adam update of every parameter tensor in place.
///
/// Shapes are validated before anything is written.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), NnError> {
    check_len(params.len(), grads.len())?;
    check_len(params.len(), state.m.len())?;
    check_len(params.len(), state.v.len())?;
    for ((p, g), (m, v)) in params.iter().zip(grads).zip(state.m.iter().zip(&state.v)) {
        check_len(p.len(), g.len())?;
        check_len(p.len(), m.len())?;
        check_len(p.len(), v.len())?;
    }

    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let t = state.t as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = vec![0.3, -1.2];
        let before = p.clone();
        let mut st = AdamState::new(&[2]);
        adam_step(&mut [&mut p], &[&[0.0, 0.0]], &mut st, 0.001).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn single_step_hand_computed() {
        // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1; step = lr / (1 + 1e-8)
        let mut p = vec![0.0];
        let mut st = AdamState::new(&[1]);
        adam_step(&mut [&mut p], &[&[1.0]], &mut st, 0.001).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15, "{} vs {}", p[0], expected);
        assert!((p[0] + 0.001).abs() < 1e-10);
    }

    #[test]
    fn elementwise_independence() {
        let g = [[0.5, -2.0], [1.5, 0.25], [-0.1, 3.0]];
        let mut joint = vec![0.1, 0.2];
        let mut st = AdamState::new(&[2]);
        let mut a = vec![0.1];
        let mut sa = AdamState::new(&[1]);
        let mut b = vec![0.2];
        let mut sb = AdamState::new(&[1]);
        for gi in &g {
            adam_step(&mut [&mut joint], &[gi], &mut st, 0.01).unwrap();
            adam_step(&mut [&mut a], &[&gi[..1]], &mut sa, 0.01).unwrap();
            adam_step(&mut [&mut b], &[&gi[1..]], &mut sb, 0.01).unwrap();
        }
        assert_eq!(joint, vec![a[0], b[0]]);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = vec![0.5, -0.5, 2.0];
            let mut st = AdamState::new(&[3]);
            for k in 0..20 {
                let g = [k as f64 * 0.1, -1.0, (k as f64).sin()];
                adam_step(&mut [&mut p], &[&g], &mut st, 0.003).unwrap();
            }
            (p, st)
        };
        let (p1, s1) = run();
        let (p2, s2) = run();
        assert_eq!(p1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), p2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(s1, s2);
    }

    #[test]
    fn shape_mismatch_leaves_state_untouched() {
        let mut p = vec![0.0; 2];
        let mut st = AdamState::new(&[2]);
        let err = adam_step(&mut [&mut p], &[&[1.0]], &mut st, 0.1).unwrap_err();
        assert_eq!(err, NnError::ShapeMismatch { expected: 2, actual: 1 });
        assert_eq!(st.t, 0);
        let mut st3 = AdamState::new(&[3]);
        assert!(adam_step(&mut [&mut p], &[&[1.0, 1.0]], &mut st3, 0.1).is_err());
    }
}
