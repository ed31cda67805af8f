use log::warn;

use crate::error::Result;
use crate::sensor::{HyperCube, Space};

pub const DEFAULT_THRESHOLD: f64 = 1e-2;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Clips small negatives to zero and replaces every `|v| >= t` with the
/// median of its non-outlier 3x3 neighbours.
pub fn clean(cube: &HyperCube, t: f64) -> Result<HyperCube> {
    cube.expect_space(Space::Raw, "clean")?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(crate::Error::config("clean.threshold", format!("must be positive, got {t}")));
    }
    let (_, h, w) = cube.shape();
    let mut out = cube.data.clone();
    for (c, plane) in out.planes_mut().enumerate() {
        let outlier: Vec<bool> = plane.iter().map(|v| !v.is_finite() || v.abs() >= t).collect();
        for (v, &o) in plane.iter_mut().zip(&outlier) {
            if !o && *v < 0.0 {
                *v = 0.0;
            }
        }
        if !outlier.iter().any(|&o| o) {
            continue;
        }
        let clipped = plane.to_vec();
        let mut fallback: Option<f64> = None;
        let mut nb = Vec::with_capacity(8);
        for r in 0..h {
            for q in 0..w {
                if !outlier[r * w + q] {
                    continue;
                }
                nb.clear();
                for rr in r.saturating_sub(1)..(r + 2).min(h) {
                    for qq in q.saturating_sub(1)..(q + 2).min(w) {
                        if !outlier[rr * w + qq] {
                            nb.push(clipped[rr * w + qq]);
                        }
                    }
                }
                plane[r * w + q] = if nb.is_empty() {
                    *fallback.get_or_insert_with(|| {
                        let mut valid: Vec<f64> = clipped
                            .iter()
                            .zip(&outlier)
                            .filter(|(_, o)| !**o)
                            .map(|(v, _)| *v)
                            .collect();
                        if valid.is_empty() {
                            warn!("channel {c}: no valid pixels, outliers set to 0");
                            0.0
                        } else {
                            median(&mut valid)
                        }
                    })
                } else {
                    median(&mut nb)
                };
                if nb.is_empty() {
                    warn!("channel {c}: isolated outlier at ({r}, {q}) replaced by channel median");
                }
            }
        }
    }
    Ok(cube.with_data(out))
}
