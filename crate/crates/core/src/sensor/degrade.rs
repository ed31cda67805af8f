use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::Array3;
use crate::error::{Error, Result};
use crate::sensor::{BandSpec, BlurKernel, HyperCube, DEFAULT_TRUNCATION};

/// Sparse 1-D blur-and-sample operator: output `i` reads `weights[i]`
/// starting at input index `starts[i]`.
#[derive(Clone, Debug)]
struct AxisOp {
    starts: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

impl AxisOp {
    fn new(taps: &[f64], n: usize, s: usize) -> AxisOp {
        let r = (taps.len() / 2) as i64;
        let phase = (s / 2) as i64;
        let n_out = n / s;
        let mut starts = Vec::with_capacity(n_out);
        let mut weights = Vec::with_capacity(n_out);
        for i in 0..n_out as i64 {
            let p = i * s as i64 + phase;
            let lo = (p - r).max(0);
            let hi = (p + r).min(n as i64 - 1);
            let mut w: Vec<f64> = (lo..=hi).map(|q| taps[(q - p + r) as usize]).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
            starts.push(lo as usize);
            weights.push(w);
        }
        AxisOp { starts, weights }
    }
}

/// The sensing operator `A(x) = (x * k) downsampled by s` with border
/// renormalization and centre-of-block sampling phase `floor(s/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub kernel: BlurKernel,
    pub scale: usize,
}

impl Degradation {
    pub fn new(kernel: BlurKernel, scale: usize) -> Result<Self> {
        if scale == 0 {
            return Err(Error::InvalidSpec("scale must be positive".into()));
        }
        Ok(Degradation { kernel, scale })
    }

    pub fn from_spec(spec: &BandSpec) -> Result<Self> {
        Degradation::new(
            BlurKernel::new(spec.blur_sigma_along, spec.blur_sigma_cross, DEFAULT_TRUNCATION)?,
            spec.scale,
        )
    }

    /// Identity operator (delta kernel, no subsampling).
    pub fn identity() -> Self {
        let kernel = BlurKernel {
            weights: vec![1.0],
            rows: 1,
            cols: 1,
            along: vec![1.0],
            cross: vec![1.0],
            sigma_along: 0.0,
            sigma_cross: 0.0,
        };
        Degradation { kernel, scale: 1 }
    }

    pub fn output_shape(&self, rows: usize, cols: usize) -> Result<(usize, usize)> {
        let s = self.scale;
        if rows % s != 0 || cols % s != 0 || rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "spatial size {rows}x{cols} is not divisible by scale {s}"
            )));
        }
        Ok((rows / s, cols / s))
    }

    fn ops(&self, rows: usize, cols: usize) -> (AxisOp, AxisOp) {
        (
            AxisOp::new(&self.kernel.along, rows, self.scale),
            AxisOp::new(&self.kernel.cross, cols, self.scale),
        )
    }

    pub fn apply(&self, x: &Array3) -> Result<Array3> {
        let (c, rows, cols) = x.shape();
        let (h, w) = self.output_shape(rows, cols)?;
        let (ra, ca) = self.ops(rows, cols);
        let mut out = Array3::zeros(c, h, w);
        out.as_mut_slice()
            .par_chunks_mut(h * w)
            .zip(x.as_slice().par_chunks(rows * cols))
            .for_each(|(dst, src)| {
                let mut tmp = vec![0.0; rows * w];
                for r in 0..rows {
                    let line = &src[r * cols..(r + 1) * cols];
                    for j in 0..w {
                        let s0 = ca.starts[j];
                        tmp[r * w + j] = ca.weights[j]
                            .iter()
                            .zip(&line[s0..])
                            .map(|(k, v)| k * v)
                            .sum();
                    }
                }
                for i in 0..h {
                    let row = &mut dst[i * w..(i + 1) * w];
                    for (a, k) in ra.weights[i].iter().enumerate() {
                        let t = &tmp[(ra.starts[i] + a) * w..(ra.starts[i] + a + 1) * w];
                        for (o, v) in row.iter_mut().zip(t) {
                            *o += k * v;
                        }
                    }
                }
            });
        Ok(out)
    }

    /// Transpose of `apply` for an HR grid of `rows x cols`.
    pub fn adjoint(&self, g: &Array3, rows: usize, cols: usize) -> Result<Array3> {
        let (h, w) = self.output_shape(rows, cols)?;
        let c = g.channels();
        if (g.rows(), g.cols()) != (h, w) {
            return Err(Error::Shape(format!(
                "adjoint input {}x{} does not match {h}x{w}",
                g.rows(),
                g.cols()
            )));
        }
        let (ra, ca) = self.ops(rows, cols);
        let mut out = Array3::zeros(c, rows, cols);
        out.as_mut_slice()
            .par_chunks_mut(rows * cols)
            .zip(g.as_slice().par_chunks(h * w))
            .for_each(|(dst, src)| {
                let mut tmp = vec![0.0; rows * w];
                for i in 0..h {
                    let gi = &src[i * w..(i + 1) * w];
                    for (a, k) in ra.weights[i].iter().enumerate() {
                        let t = &mut tmp[(ra.starts[i] + a) * w..(ra.starts[i] + a + 1) * w];
                        for (o, v) in t.iter_mut().zip(gi) {
                            *o += k * v;
                        }
                    }
                }
                for r in 0..rows {
                    let line = &mut dst[r * cols..(r + 1) * cols];
                    for j in 0..w {
                        let t = tmp[r * w + j];
                        let s0 = ca.starts[j];
                        for (o, k) in line[s0..].iter_mut().zip(&ca.weights[j]) {
                            *o += k * t;
                        }
                    }
                }
            });
        Ok(out)
    }

    pub fn apply_cube(&self, x: &HyperCube) -> Result<HyperCube> {
        Ok(x.with_data(self.apply(&x.data)?))
    }
}

pub fn degrade(x: &HyperCube, kernel: &BlurKernel, s: usize) -> Result<HyperCube> {
    Degradation::new(kernel.clone(), s)?.apply_cube(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{BandId, Space};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(c: usize, h: usize, w: usize, seed: u64) -> Array3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0))
    }

    // full 2-D convolution with renormalized support, then sampled
    fn dense_oracle(x: &Array3, k: &BlurKernel, s: usize) -> Array3 {
        let (_, h, w) = x.shape();
        let (ry, rx) = (k.rows as i64 / 2, k.cols as i64 / 2);
        let mut full = Array3::zeros(1, h, w);
        for r in 0..h as i64 {
            for q in 0..w as i64 {
                let (mut acc, mut norm) = (0.0, 0.0);
                for a in -ry..=ry {
                    for b in -rx..=rx {
                        let (rr, qq) = (r + a, q + b);
                        if rr < 0 || qq < 0 || rr >= h as i64 || qq >= w as i64 {
                            continue;
                        }
                        let kv = k.get((a + ry) as usize, (b + rx) as usize);
                        acc += kv * x.get(0, rr as usize, qq as usize);
                        norm += kv;
                    }
                }
                full.set(0, r as usize, q as usize, acc / norm);
            }
        }
        Array3::from_fn(1, h / s, w / s, |_, i, j| full.get(0, i * s + s / 2, j * s + s / 2))
    }

    #[test]
    fn matches_dense_oracle() {
        let k = BlurKernel::new(1.5, 1.0, 4.0).unwrap();
        let a = Degradation::new(k.clone(), 4).unwrap();
        let x = random(1, 64, 64, 3);
        let got = a.apply(&x).unwrap();
        let want = dense_oracle(&x, &k, 4);
        for (g, w) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_samples_kernel() {
        let k = BlurKernel::new(1.5, 1.0, 4.0).unwrap();
        let a = Degradation::new(k.clone(), 4).unwrap();
        let mut x = Array3::zeros(1, 32, 32);
        x.set(0, 18, 14, 1.0);
        let y = a.apply(&x).unwrap();
        assert_eq!(y.shape(), (1, 8, 8));
        // sample (4,3) sits at HR (18,14); (4,4) sits at (18,18)
        assert!((y.get(0, 4, 3) - k.get(6, 4)).abs() < 1e-15);
        let on_grid = dense_oracle(&x, &k, 4);
        for (g, w) in y.as_slice().iter().zip(on_grid.as_slice()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn band_patch_shape() {
        let a = Degradation::from_spec(&BandSpec::default_for(BandId::Bd2)).unwrap();
        let x = HyperCube::new(Array3::zeros(3, 448, 448), BandId::Bd2, Space::Raw).unwrap();
        assert_eq!(a.apply_cube(&x).unwrap().shape(), (3, 112, 112));
    }

    #[test]
    fn indivisible_shape_rejected() {
        let a = Degradation::from_spec(&BandSpec::default_for(BandId::Bd2)).unwrap();
        assert!(matches!(a.apply(&Array3::zeros(1, 10, 12)), Err(Error::Shape(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn constants_are_preserved(c in -5.0f64..5.0, hs in 1usize..6, ws in 1usize..6,
                                   sa in 0.3f64..3.0, sc in 0.3f64..3.0) {
            let a = Degradation::new(BlurKernel::new(sa, sc, 4.0).unwrap(), 4).unwrap();
            let y = a.apply(&Array3::filled(2, hs * 4, ws * 4, c)).unwrap();
            for v in y.as_slice() {
                prop_assert!((v - c).abs() <= 1e-12 * (1.0 + c.abs()));
            }
        }

        #[test]
        fn operator_is_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let a = Degradation::new(BlurKernel::new(1.5, 1.0, 4.0).unwrap(), 4).unwrap();
            let x = random(2, 24, 20, seed);
            let z = random(2, 24, 20, seed + 7);
            let lhs = a.apply(&x.zip_map(&z, |p, q| alpha * p + beta * q)).unwrap();
            let (ax, az) = (a.apply(&x).unwrap(), a.apply(&z).unwrap());
            let rhs = ax.zip_map(&az, |p, q| alpha * p + beta * q);
            prop_assert!(lhs.sum_sq_diff(&rhs).sqrt() < 1e-10);
        }

        #[test]
        fn adjoint_satisfies_inner_product_identity(seed in 0u64..1000, s in 1usize..5) {
            let a = Degradation::new(BlurKernel::new(1.2, 0.7, 4.0).unwrap(), s).unwrap();
            let x = random(2, 6 * s, 5 * s, seed);
            let g = random(2, 6, 5, seed + 1);
            let lhs = a.apply(&x).unwrap().dot(&g);
            let rhs = x.dot(&a.adjoint(&g, 6 * s, 5 * s).unwrap());
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn agrees_with_dense_oracle(seed in 0u64..1000, hs in 1usize..9, ws in 1usize..9,
                                    sa in 0.3f64..2.5, sc in 0.3f64..2.5) {
            let k = BlurKernel::new(sa, sc, 4.0).unwrap();
            let a = Degradation::new(k.clone(), 4).unwrap();
            let x = random(1, hs * 4, ws * 4, seed);
            let got = a.apply(&x).unwrap();
            let want = dense_oracle(&x, &k, 4);
            prop_assert!(got.sum_sq_diff(&want).sqrt() < 1e-10);
        }
    }
}
