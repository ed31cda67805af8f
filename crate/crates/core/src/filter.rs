//! Separable filtering with kernels renormalized over the in-image support.

/// Filters one `h x w` plane with `taps_v` along rows and `taps_h` along
/// columns; both tap vectors must have odd length.
pub fn separable_renorm(plane: &[f64], h: usize, w: usize, taps_v: &[f64], taps_h: &[f64]) -> Vec<f64> {
    let tmp = filter_axis(plane, h, w, taps_h, false);
    filter_axis(&tmp, h, w, taps_v, true)
}

fn filter_axis(src: &[f64], h: usize, w: usize, taps: &[f64], vertical: bool) -> Vec<f64> {
    let r = (taps.len() / 2) as i64;
    let (n, lines) = if vertical { (h, w) } else { (w, h) };
    let idx = |line: usize, p: usize| if vertical { p * w + line } else { line * w + p };
    let mut out = vec![0.0; h * w];
    for line in 0..lines {
        for p in 0..n as i64 {
            let lo = (p - r).max(0);
            let hi = (p + r).min(n as i64 - 1);
            let (mut acc, mut norm) = (0.0, 0.0);
            for q in lo..=hi {
                let k = taps[(q - p + r) as usize];
                acc += k * src[idx(line, q as usize)];
                norm += k;
            }
            out[idx(line, p as usize)] = acc / norm;
        }
    }
    out
}

/// Sampled Gaussian taps with the radius capped at `max_radius`.
pub fn gaussian_taps(sigma: f64, truncation: f64, max_radius: usize) -> Vec<f64> {
    let r = ((truncation * sigma).ceil() as usize).min(max_radius) as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|u| (-((u * u) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let t: f64 = k.iter().sum();
    k.into_iter().map(|v| v / t).collect()
}
