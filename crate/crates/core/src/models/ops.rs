//! Raw feature-map kernels and their vector-Jacobian products.
//!
//! Feature maps are `channels x rows x cols`, row-major, in `Array3`.

use crate::array::Array3;
use crate::error::{Error, Result};

/// Row/column ranges where a shift of `(dy, dx)` stays inside the map.
fn shifted(h: usize, w: usize, dy: i64, dx: i64) -> (usize, usize, usize, usize) {
    let r0 = (-dy).max(0) as usize;
    let r1 = (h as i64 - dy.max(0)).max(0) as usize;
    let q0 = (-dx).max(0) as usize;
    let q1 = (w as i64 - dx.max(0)).max(0) as usize;
    (r0, r1.max(r0), q0, q1.max(q0))
}

/// Zero-padded same-size depthwise convolution; `w` is `channels x k x k`.
pub fn depthwise(x: &Array3, w: &[f64], k: usize) -> Result<Array3> {
    let (c, h, wd) = x.shape();
    if w.len() != c * k * k {
        return Err(Error::Shape(format!(
            "depthwise kernel for {} channels applied to {c}",
            w.len() / (k * k)
        )));
    }
    let r = (k / 2) as i64;
    let mut out = Array3::zeros(c, h, wd);
    for ch in 0..c {
        let src = x.plane(ch);
        let dst = out.plane_mut(ch);
        for a in 0..k {
            for b in 0..k {
                let kv = w[ch * k * k + a * k + b];
                let (dy, dx) = (a as i64 - r, b as i64 - r);
                let (r0, r1, q0, q1) = shifted(h, wd, dy, dx);
                if q0 == q1 {
                    continue;
                }
                for row in r0..r1 {
                    let s0 = (row as i64 + dy) * wd as i64 + dx;
                    let s = &src[(s0 + q0 as i64) as usize..(s0 + q1 as i64) as usize];
                    let d = &mut dst[row * wd + q0..row * wd + q1];
                    for (o, v) in d.iter_mut().zip(s) {
                        *o += kv * v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Returns `(dx, dw)` for a depthwise convolution.
pub fn depthwise_backward(x: &Array3, w: &[f64], k: usize, g: &Array3) -> (Array3, Vec<f64>) {
    let (c, h, wd) = x.shape();
    let r = (k / 2) as i64;
    let mut dx = Array3::zeros(c, h, wd);
    let mut dw = vec![0.0; w.len()];
    for ch in 0..c {
        let src = x.plane(ch);
        let gp = g.plane(ch);
        let dxp = dx.plane_mut(ch);
        for a in 0..k {
            for b in 0..k {
                let idx = ch * k * k + a * k + b;
                let kv = w[idx];
                let (dy, ddx) = (a as i64 - r, b as i64 - r);
                let (r0, r1, q0, q1) = shifted(h, wd, dy, ddx);
                if q0 == q1 {
                    continue;
                }
                let mut acc = 0.0;
                for row in r0..r1 {
                    let s0 = (row as i64 + dy) * wd as i64 + ddx;
                    let (lo, hi) = ((s0 + q0 as i64) as usize, (s0 + q1 as i64) as usize);
                    let gs = &gp[row * wd + q0..row * wd + q1];
                    let xs = &src[lo..hi];
                    acc += gs.iter().zip(xs).map(|(p, q)| p * q).sum::<f64>();
                    let ds = &mut dxp[lo..hi];
                    for (o, v) in ds.iter_mut().zip(gs) {
                        *o += kv * v;
                    }
                }
                dw[idx] += acc;
            }
        }
    }
    (dx, dw)
}

/// `C += alpha * A(m x k) * B(k x n)` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the callers pass slices whose extents cover every strided
    // access implied by (m, k, n) and the strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// 1x1 convolution over the concatenation of `inputs`; `w` is
/// `out x sum(in_i)`, row-major.
pub fn pointwise(inputs: &[&Array3], w: &[f64], bias: Option<&[f64]>, out_ch: usize) -> Result<Array3> {
    let (h, wd) = (inputs[0].rows(), inputs[0].cols());
    let cin: usize = inputs.iter().map(|x| x.channels()).sum();
    if w.len() != out_ch * cin || inputs.iter().any(|x| (x.rows(), x.cols()) != (h, wd)) {
        return Err(Error::Shape(format!(
            "pointwise weight {}x{} does not fit {cin} input channels",
            out_ch,
            w.len() / out_ch.max(1)
        )));
    }
    let p = h * wd;
    let mut out = Array3::zeros(out_ch, h, wd);
    let mut off = 0;
    for x in inputs {
        let ci = x.channels();
        gemm(
            out_ch,
            ci,
            p,
            &w[off..],
            cin as isize,
            1,
            x.as_slice(),
            p as isize,
            1,
            1.0,
            out.as_mut_slice(),
        );
        off += ci;
    }
    if let Some(b) = bias {
        for (plane, bv) in out.planes_mut().zip(b) {
            plane.iter_mut().for_each(|v| *v += bv);
        }
    }
    Ok(out)
}

/// Returns `(dx_i, dw, db)` for `pointwise`.
pub fn pointwise_backward(
    inputs: &[&Array3],
    w: &[f64],
    g: &Array3,
    need_dx: bool,
) -> (Vec<Array3>, Vec<f64>, Vec<f64>) {
    let out_ch = g.channels();
    let (h, wd) = (g.rows(), g.cols());
    let p = h * wd;
    let cin: usize = inputs.iter().map(|x| x.channels()).sum();
    let mut dw = vec![0.0; w.len()];
    let mut dxs = Vec::new();
    let mut off = 0;
    for x in inputs {
        let ci = x.channels();
        // dW block (out x ci) = G (out x p) * X^T (p x ci), row stride cin
        let mut blk = vec![0.0; out_ch * ci];
        gemm(out_ch, p, ci, g.as_slice(), p as isize, 1, x.as_slice(), 1, p as isize, 0.0, &mut blk);
        for o in 0..out_ch {
            dw[o * cin + off..o * cin + off + ci].copy_from_slice(&blk[o * ci..(o + 1) * ci]);
        }
        if need_dx {
            let mut dx = Array3::zeros(ci, h, wd);
            gemm(ci, out_ch, p, &w[off..], 1, cin as isize, g.as_slice(), p as isize, 1, 0.0, dx.as_mut_slice());
            dxs.push(dx);
        }
        off += ci;
    }
    let db = g.planes().map(|pl| pl.iter().sum()).collect();
    (dxs, dw, db)
}

pub fn relu(x: &mut Array3) {
    x.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `g` where the ReLU output `y` was clipped.
pub fn relu_backward(y: &Array3, g: &Array3) -> Array3 {
    y.zip_map(g, |a, b| if a > 0.0 { b } else { 0.0 })
}

pub fn avg_pool2(x: &Array3) -> Result<Array3> {
    let (c, h, w) = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("2x2 pooling needs even sizes, got {h}x{w}")));
    }
    Ok(Array3::from_fn(c, h / 2, w / 2, |ch, r, q| {
        let p = x.plane(ch);
        0.25 * (p[2 * r * w + 2 * q] + p[2 * r * w + 2 * q + 1] + p[(2 * r + 1) * w + 2 * q] + p[(2 * r + 1) * w + 2 * q + 1])
    }))
}

pub fn avg_pool2_backward(g: &Array3) -> Array3 {
    let (c, h, w) = g.shape();
    Array3::from_fn(c, 2 * h, 2 * w, |ch, r, q| 0.25 * g.get(ch, r / 2, q / 2))
}

pub fn upsample2(x: &Array3) -> Array3 {
    let (c, h, w) = x.shape();
    Array3::from_fn(c, 2 * h, 2 * w, |ch, r, q| x.get(ch, r / 2, q / 2))
}

pub fn upsample2_backward(g: &Array3) -> Array3 {
    let (c, h, w) = g.shape();
    let w2 = w;
    Array3::from_fn(c, h / 2, w / 2, |ch, r, q| {
        let p = g.plane(ch);
        p[2 * r * w2 + 2 * q] + p[2 * r * w2 + 2 * q + 1] + p[(2 * r + 1) * w2 + 2 * q] + p[(2 * r + 1) * w2 + 2 * q + 1]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rnd(c: usize, h: usize, w: usize, s: u64) -> Array3 {
        let mut r = ChaCha8Rng::seed_from_u64(s);
        Array3::from_fn(c, h, w, |_, _, _| r.random_range(-1.0..1.0))
    }

    fn rvec(n: usize, s: u64) -> Vec<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(s);
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn depthwise_matches_loops() {
        let x = rnd(3, 7, 6, 1);
        let w = rvec(3 * 9, 2);
        let y = depthwise(&x, &w, 3).unwrap();
        for c in 0..3 {
            for r in 0..7i64 {
                for q in 0..6i64 {
                    let mut acc = 0.0;
                    for a in -1..=1i64 {
                        for b in -1..=1i64 {
                            if (0..7).contains(&(r + a)) && (0..6).contains(&(q + b)) {
                                acc += w[c * 9 + ((a + 1) * 3 + b + 1) as usize]
                                    * x.get(c, (r + a) as usize, (q + b) as usize);
                            }
                        }
                    }
                    assert!((y.get(c, r as usize, q as usize) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn adjoints_hold() {
        let x = rnd(3, 6, 4, 3);
        let g = rnd(3, 6, 4, 4);
        let w = rvec(3 * 25, 5);
        let (dx, dw) = depthwise_backward(&x, &w, 5, &g);
        let lhs = depthwise(&x, &w, 5).unwrap().dot(&g);
        assert!((lhs - x.dot(&dx)).abs() < 1e-10);
        let wsum: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
        assert!((lhs - wsum).abs() < 1e-10);

        let a = rnd(2, 4, 5, 6);
        let b = rnd(3, 4, 5, 7);
        let pw = rvec(4 * 5, 8);
        let g = rnd(4, 4, 5, 9);
        let y = pointwise(&[&a, &b], &pw, None, 4).unwrap();
        let (dxs, dw, db) = pointwise_backward(&[&a, &b], &pw, &g, true);
        let lhs = y.dot(&g);
        assert!((lhs - a.dot(&dxs[0]) - b.dot(&dxs[1])).abs() < 1e-10);
        let wsum: f64 = pw.iter().zip(&dw).map(|(p, q)| p * q).sum();
        assert!((lhs - wsum).abs() < 1e-10);
        assert!((db[1] - g.plane(1).iter().sum::<f64>()).abs() < 1e-12);

        let x = rnd(2, 6, 8, 10);
        let g = rnd(2, 3, 4, 11);
        assert!((avg_pool2(&x).unwrap().dot(&g) - x.dot(&avg_pool2_backward(&g))).abs() < 1e-12);
        let g = rnd(2, 12, 16, 12);
        assert!((upsample2(&x).dot(&g) - x.dot(&upsample2_backward(&g))).abs() < 1e-12);
    }

    #[test]
    fn pointwise_matches_loops() {
        let x = rnd(3, 2, 5, 13);
        let w = rvec(2 * 3, 14);
        let b = [0.5, -0.25];
        let y = pointwise(&[&x], &w, Some(&b), 2).unwrap();
        for o in 0..2 {
            for r in 0..2 {
                for q in 0..5 {
                    let v: f64 = (0..3).map(|i| w[o * 3 + i] * x.get(i, r, q)).sum::<f64>() + b[o];
                    assert!((y.get(o, r, q) - v).abs() < 1e-12);
                }
            }
        }
    }
}
