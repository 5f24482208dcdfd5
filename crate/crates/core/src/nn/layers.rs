use rand::Rng;

use super::tensor::{axpy, dot, Tensor2};
use super::NnError;

/// Gathers rows of `table` by index.
pub fn embed_lookup(indices: &[usize], table: &Tensor2) -> Result<Tensor2, NnError> {
    let mut out = Tensor2::zeros(indices.len(), table.cols());
    for (i, &ix) in indices.iter().enumerate() {
        if ix >= table.rows() {
            return Err(NnError::IndexOutOfRange {
                index: ix,
                len: table.rows(),
            });
        }
        out.row_mut(i).copy_from_slice(table.row(ix));
    }
    Ok(out)
}

/// Result of a convolution followed by max-over-time pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvMax {
    /// Pooled, rectified feature values, one per filter.
    pub values: Vec<f64>,
    /// Window position that produced each value (first one on ties).
    pub argmax: Vec<usize>,
}

fn check_conv_shapes(d: usize, w: &Tensor2, b: &[f64]) -> Result<usize, NnError> {
    if d == 0 || w.rows() == 0 || !w.rows().is_multiple_of(d) {
        return Err(NnError::ShapeMismatch {
            expected: d,
            actual: w.rows(),
        });
    }
    if b.len() != w.cols() {
        return Err(NnError::ShapeMismatch {
            expected: w.cols(),
            actual: b.len(),
        });
    }
    Ok(w.rows() / d)
}

/// Narrow 1-D convolution over the rows of `x` with `relu` activation and
/// max-over-time pooling.
///
/// `w` is `[h*d x m]`: row `j*d + a` holds the weights of word offset `j`,
/// embedding component `a`. The filter width `h` is inferred from the shape.
pub fn conv_max(x: &Tensor2, w: &Tensor2, b: &[f64]) -> Result<ConvMax, NnError> {
    let d = x.cols();
    let h = check_conv_shapes(d, w, b)?;
    let len = x.rows();
    if len < h {
        return Err(NnError::WindowTooWide { len, width: h });
    }
    let m = w.cols();

    let mut best = vec![f64::NEG_INFINITY; m];
    let mut argmax = vec![0usize; m];
    let mut pre = vec![0.0; m];
    for pos in 0..=len - h {
        pre.copy_from_slice(b);
        for j in 0..h {
            for (a, &xa) in x.row(pos + j).iter().enumerate() {
                axpy(xa, w.row(j * d + a), &mut pre);
            }
        }
        for k in 0..m {
            let act = pre[k].max(0.0);
            if act > best[k] {
                best[k] = act;
                argmax[k] = pos;
            }
        }
    }
    Ok(ConvMax {
        values: best,
        argmax,
    })
}

/// Same result as `conv_max(embed_lookup(ids, table), w, b)` without
/// materialising the embedded sentence.
///
/// Padded sentences repeat a handful of rows many times, so the products
/// `row * W_j` are computed once per distinct row and reused across windows.
pub fn conv_max_gather(
    ids: &[usize],
    table: &Tensor2,
    w: &Tensor2,
    b: &[f64],
) -> Result<ConvMax, NnError> {
    let d = table.cols();
    let h = check_conv_shapes(d, w, b)?;
    let len = ids.len();
    if len < h {
        return Err(NnError::WindowTooWide { len, width: h });
    }
    let m = w.cols();

    let mut distinct: Vec<usize> = Vec::new();
    let mut slot = Vec::with_capacity(len);
    for &ix in ids {
        if ix >= table.rows() {
            return Err(NnError::IndexOutOfRange {
                index: ix,
                len: table.rows(),
            });
        }
        let s = match distinct.iter().position(|&u| u == ix) {
            Some(s) => s,
            None => {
                distinct.push(ix);
                distinct.len() - 1
            }
        };
        slot.push(s);
    }

    // proj[(j * U + u) * m ..][..m] = row(distinct[u]) . W_j
    let u_count = distinct.len();
    let mut proj = vec![0.0; h * u_count * m];
    for j in 0..h {
        for (u, &ix) in distinct.iter().enumerate() {
            let out = &mut proj[(j * u_count + u) * m..(j * u_count + u + 1) * m];
            for (a, &xa) in table.row(ix).iter().enumerate() {
                axpy(xa, w.row(j * d + a), out);
            }
        }
    }

    let mut best = vec![f64::NEG_INFINITY; m];
    let mut argmax = vec![0usize; m];
    let mut pre = vec![0.0; m];
    for pos in 0..=len - h {
        pre.copy_from_slice(b);
        for j in 0..h {
            let u = slot[pos + j];
            let p = &proj[(j * u_count + u) * m..(j * u_count + u + 1) * m];
            for (acc, v) in pre.iter_mut().zip(p) {
                *acc += v;
            }
        }
        for k in 0..m {
            let act = pre[k].max(0.0);
            if act > best[k] {
                best[k] = act;
                argmax[k] = pos;
            }
        }
    }
    Ok(ConvMax {
        values: best,
        argmax,
    })
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`; the
/// returned mask holds the per-element multiplier. Inference is the identity.
pub fn dropout<R: Rng + ?Sized>(
    z: &[f64],
    rate: f64,
    rng: &mut R,
    training: bool,
) -> (Vec<f64>, Vec<f64>) {
    if !training || rate <= 0.0 {
        return (z.to_vec(), vec![1.0; z.len()]);
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = z
        .iter()
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep_scale
            }
        })
        .collect();
    let out = z.iter().zip(&mask).map(|(v, s)| v * s).collect();
    (out, mask)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `logits = z^T W + b`.
pub fn dense(z: &[f64], w: &Tensor2, b: &[f64]) -> Result<Vec<f64>, NnError> {
    if z.len() != w.rows() {
        return Err(NnError::ShapeMismatch {
            expected: w.rows(),
            actual: z.len(),
        });
    }
    if b.len() != w.cols() {
        return Err(NnError::ShapeMismatch {
            expected: w.cols(),
            actual: b.len(),
        });
    }
    let mut logits = b.to_vec();
    for (r, &zr) in z.iter().enumerate() {
        if zr != 0.0 {
            axpy(zr, w.row(r), &mut logits);
        }
    }
    Ok(logits)
}

pub fn dense_softmax(z: &[f64], w: &Tensor2, b: &[f64]) -> Result<Vec<f64>, NnError> {
    Ok(softmax(&dense(z, w, b)?))
}

pub const PROB_FLOOR: f64 = 1e-12;

/// `-ln p[label]` with the probability floored at `PROB_FLOOR`.
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_FLOOR).ln()
}

/// Column-vector product `W * g` for `W` of shape `[k x c]` and `g` of
/// length `c`.
pub(crate) fn matvec(w: &Tensor2, g: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|r| dot(w.row(r), g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(rows: &[&[f64]]) -> Tensor2 {
        Tensor2::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn lookup_gathers_rows() {
        let e = t(&[&[0.0, 0.0], &[2.0, 3.0]]);
        assert_eq!(embed_lookup(&[1, 0], &e).unwrap(), t(&[&[2.0, 3.0], &[0.0, 0.0]]));
        assert_eq!(
            embed_lookup(&[0, 0, 0], &e).unwrap(),
            t(&[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]])
        );
        let id = t(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert_eq!(embed_lookup(&[2], &id).unwrap(), t(&[&[0.0, 0.0, 1.0]]));
        assert_eq!(
            embed_lookup(&[2], &e),
            Err(NnError::IndexOutOfRange { index: 2, len: 2 })
        );
    }

    #[test]
    fn conv_constant_bias() {
        let x = t(&[&[1.0, -4.0], &[3.0, 2.0], &[0.5, 0.5]]);
        let w = Tensor2::zeros(4, 2);
        let out = conv_max(&x, &w, &[-1.0, 2.0]).unwrap();
        assert_eq!(out.values, vec![0.0, 2.0]);
    }

    #[test]
    fn conv_single_window() {
        let x = t(&[&[1.0], &[2.0]]);
        let w = t(&[&[1.0, -1.0], &[0.5, 0.0]]);
        let out = conv_max(&x, &w, &[0.0, 0.0]).unwrap();
        assert_eq!(out.values, vec![2.0, 0.0]);
        assert_eq!(out.argmax, vec![0, 0]);
    }

    #[test]
    fn conv_window_enumeration() {
        // windows [1,2] and [2,3] under W=[[1],[1]] give 3 and 5
        let x = t(&[&[1.0], &[2.0], &[3.0]]);
        let w = t(&[&[1.0], &[1.0]]);
        let out = conv_max(&x, &w, &[0.0]).unwrap();
        assert_eq!(out.values, vec![5.0]);
        assert_eq!(out.argmax, vec![1]);
    }

    #[test]
    fn conv_first_argmax_on_ties() {
        let x = t(&[&[1.0], &[1.0], &[1.0]]);
        let w = t(&[&[1.0]]);
        assert_eq!(conv_max(&x, &w, &[0.0]).unwrap().argmax, vec![0]);
    }

    #[test]
    fn conv_window_too_wide() {
        let x = t(&[&[1.0], &[2.0]]);
        let w = Tensor2::zeros(3, 1);
        assert_eq!(
            conv_max(&x, &w, &[0.0]),
            Err(NnError::WindowTooWide { len: 2, width: 3 })
        );
        let e = Tensor2::zeros(4, 1);
        assert_eq!(
            conv_max_gather(&[0, 1], &e, &w, &[0.0]),
            Err(NnError::WindowTooWide { len: 2, width: 3 })
        );
    }

    #[test]
    fn gather_matches_materialised() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (v, d, h, m) = (9, 4, 3, 5);
        let table = Tensor2::from_vec(v, d, (0..v * d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let w = Tensor2::from_vec(h * d, m, (0..h * d * m).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5)).collect();
        let ids = [3, 1, 4, 1, 5, 0, 0, 0];
        let fast = conv_max_gather(&ids, &table, &w, &b).unwrap();
        let slow = conv_max(&embed_lookup(&ids, &table).unwrap(), &w, &b).unwrap();
        assert_eq!(fast.argmax, slow.argmax);
        for (a, s) in fast.values.iter().zip(&slow.values) {
            assert_abs_diff_eq!(a, s, epsilon = 1e-12);
        }
    }

    #[test]
    fn dropout_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = vec![1.0, -2.0, 3.0];
        assert_eq!(dropout(&z, 0.0, &mut rng, true).0, z);
        let (out, mask) = dropout(&z, 0.5, &mut rng, false);
        assert_eq!(out, z);
        assert_eq!(mask, vec![1.0; 3]);

        let z = vec![1.0; 10_000];
        let (out, mask) = dropout(&z, 0.5, &mut rng, true);
        let zeroed = out.iter().filter(|v| **v == 0.0).count() as f64 / 10_000.0;
        assert!((zeroed - 0.5).abs() <= 0.02, "zeroed fraction {zeroed}");
        assert!(out.iter().all(|v| *v == 0.0 || *v == 2.0));
        assert_eq!(out, mask);
    }

    #[test]
    fn softmax_cases() {
        let w = Tensor2::zeros(1, 2);
        assert_eq!(dense_softmax(&[0.0], &w, &[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(softmax(&[1000.0, 1000.0]), vec![0.5, 0.5]);
        let p = softmax(&[3f64.ln(), 0.0]);
        assert_abs_diff_eq!(p[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.25, epsilon = 1e-15);
        let p = softmax(&[1e6, -1e6]);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn dense_shape_errors() {
        let w = Tensor2::zeros(3, 2);
        assert!(matches!(dense(&[1.0], &w, &[0.0, 0.0]), Err(NnError::ShapeMismatch { .. })));
        assert!(matches!(dense(&[1.0; 3], &w, &[0.0]), Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn cross_entropy_cases() {
        assert_abs_diff_eq!(cross_entropy(&[0.5, 0.5], 0), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(cross_entropy(&[0.5, 0.5], 1), std::f64::consts::LN_2, epsilon = 1e-6);
        assert_eq!(cross_entropy(&[1.0, 0.0], 0), 0.0);
        assert_abs_diff_eq!(cross_entropy(&[0.75, 0.25], 1), 1.386294, epsilon = 1e-6);
        assert_abs_diff_eq!(cross_entropy(&[1.0, 0.0], 1), -(1e-12f64).ln(), epsilon = 1e-9);
    }
}
