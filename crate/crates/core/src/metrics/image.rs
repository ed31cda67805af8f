use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::array::Array3;
use crate::error::{Error, Result};

/// Writes a `(3, rows, cols)` array with values in `[0, 1]` as 8-bit RGB.
pub fn write_rgb_png(path: &Path, rgb: &Array3) -> Result<()> {
    let (c, h, w) = rgb.shape();
    if c != 3 {
        return Err(Error::Shape(format!("RGB image needs 3 channels, got {c}")));
    }
    let mut bytes = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        for q in 0..w {
            for ch in 0..3 {
                bytes.push((rgb.get(ch, r, q).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut wr = enc
        .write_header()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    wr.write_image_data(&bytes)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(())
}

/// Places images side by side, top-aligned, separated by white columns.
pub fn side_by_side(images: &[Array3], gap: usize) -> Result<Array3> {
    if images.is_empty() {
        return Err(Error::Shape("no images to combine".into()));
    }
    let h = images.iter().map(|i| i.rows()).max().unwrap_or(0);
    let w = images.iter().map(|i| i.cols()).sum::<usize>() + gap * (images.len() - 1);
    let mut out = Array3::filled(3, h, w, 1.0);
    let mut col = 0;
    for im in images {
        if im.channels() != 3 {
            return Err(Error::Shape(format!("panel image has {} channels", im.channels())));
        }
        out.paste(im, 0, col);
        col += im.cols() + gap;
    }
    Ok(out)
}
