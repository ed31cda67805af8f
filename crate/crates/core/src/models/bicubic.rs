use crate::array::Array3;
use crate::error::{Error, Result};
use crate::sensor::HyperCube;

const A: f64 = -0.5;

fn cubic(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Four clamped taps per output sample along one axis.
fn axis_taps(n_in: usize, n_out: usize) -> Vec<([usize; 4], [f64; 4])> {
    let ratio = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let u = (i as f64 + 0.5) * ratio - 0.5;
            let f = u.floor();
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for t in 0..4 {
                let j = f as i64 - 1 + t as i64;
                idx[t] = j.clamp(0, n_in as i64 - 1) as usize;
                w[t] = cubic(u - j as f64);
            }
            (idx, w)
        })
        .collect()
}

/// Separable Catmull-Rom resampling to `rows x cols`.
pub fn bicubic_resize(x: &Array3, rows: usize, cols: usize) -> Array3 {
    let (c, h, w) = x.shape();
    let tr = axis_taps(h, rows);
    let tc = axis_taps(w, cols);
    let mut out = Array3::zeros(c, rows, cols);
    let mut tmp = vec![0.0; h * cols];
    for ch in 0..c {
        let src = x.plane(ch);
        for r in 0..h {
            let line = &src[r * w..(r + 1) * w];
            for (j, (idx, wt)) in tc.iter().enumerate() {
                tmp[r * cols + j] = (0..4).map(|t| wt[t] * line[idx[t]]).sum();
            }
        }
        let dst = out.plane_mut(ch);
        for (i, (idx, wt)) in tr.iter().enumerate() {
            let row = &mut dst[i * cols..(i + 1) * cols];
            for t in 0..4 {
                let s = &tmp[idx[t] * cols..(idx[t] + 1) * cols];
                for (o, v) in row.iter_mut().zip(s) {
                    *o += wt[t] * v;
                }
            }
        }
    }
    out
}

pub fn bicubic_upsample_array(y: &Array3, s: usize) -> Array3 {
    bicubic_resize(y, y.rows() * s, y.cols() * s)
}

pub fn bicubic_upsample(y: &HyperCube, s: usize) -> Result<HyperCube> {
    if s == 0 {
        return Err(Error::Shape("upsampling factor must be at least 1".into()));
    }
    Ok(y.with_data(bicubic_upsample_array(&y.data, s)))
}
