use crate::array::Array3;
use crate::error::{Error, Result};
use crate::models::bicubic::bicubic_upsample_array;
use crate::models::graph::{Eval, Graph};
use crate::models::{DscBlockCfg, DscrCfg, ModelCfg, ModelParams, SkipSource, UnetCfg};
use crate::sensor::HyperCube;

/// Weights of one depthwise-separable module.
#[derive(Clone, Debug, PartialEq)]
pub struct DscParams {
    pub depthwise: Vec<f64>,
    pub pointwise: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Applies `block.depth` modules with rectifiers between them.
pub fn dsc_forward(x: &Array3, block: &DscBlockCfg, modules: &[DscParams]) -> Result<Array3> {
    block.validate()?;
    if x.channels() != block.in_channels {
        return Err(Error::Shape(format!(
            "block expects {} channels, got {}",
            block.in_channels,
            x.channels()
        )));
    }
    if modules.len() != block.depth {
        return Err(Error::Shape(format!("{} modules for depth {}", modules.len(), block.depth)));
    }
    let mut h = x.clone();
    for (j, m) in modules.iter().enumerate() {
        if j > 0 {
            super::ops::relu(&mut h);
        }
        let d = super::ops::depthwise(&h, &m.depthwise, block.kernel)?;
        h = super::ops::pointwise(&[&d], &m.pointwise, Some(&m.bias), block.out_channels)?;
    }
    Ok(h)
}

fn dsc<G: Graph>(g: &mut G, x: G::T, prefix: &str) -> Result<G::T> {
    let p = g.params();
    let (dw, pw, b) = (
        p.id(&format!("{prefix}.dw"))?,
        p.id(&format!("{prefix}.pw.weight"))?,
        p.id(&format!("{prefix}.pw.bias"))?,
    );
    let h = g.depthwise(x, dw)?;
    g.pointwise(vec![h], pw, b)
}

fn block<G: Graph>(g: &mut G, mut h: G::T, prefix: &str, depth: usize) -> Result<G::T> {
    for j in 0..depth {
        h = dsc(g, h, &format!("{prefix}.dsc{j}"))?;
        h = g.relu(h);
    }
    Ok(h)
}

fn unet<G: Graph>(g: &mut G, cfg: &UnetCfg, x0: G::T) -> Result<G::T> {
    let l = cfg.levels;
    let mut enc_in: Vec<Option<G::T>> = Vec::with_capacity(l);
    let mut enc_out: Vec<Option<G::T>> = Vec::with_capacity(l);
    let keep = |lvl: usize, src: SkipSource| cfg.skips[l - lvl] == src;
    let mut h = x0.clone();
    for lvl in 1..=l {
        enc_in.push(keep(lvl, SkipSource::EncoderInput).then(|| h.clone()));
        h = block(g, h, &format!("enc{lvl}"), cfg.encoder_depth)?;
        enc_out.push(keep(lvl, SkipSource::EncoderOutput).then(|| h.clone()));
        h = g.avg_pool2(h)?;
    }
    for stage in 0..l {
        let lvl = l - stage;
        h = g.upsample2(h);
        h = block(g, h, &format!("dec{}", stage + 1), cfg.decoder_depths[stage])?;
        let skip = match cfg.skips[stage] {
            SkipSource::EncoderOutput => enc_out[lvl - 1].take(),
            SkipSource::EncoderInput => enc_in[lvl - 1].take(),
            SkipSource::None => None,
        };
        if let Some(s) = skip {
            let p = g.params();
            let (w, b) = (
                p.id(&format!("dec{}.fuse.weight", stage + 1))?,
                p.id(&format!("dec{}.fuse.bias", stage + 1))?,
            );
            h = g.pointwise(vec![h, s], w, b)?;
        }
    }
    if cfg.final_projection {
        let p = g.params();
        let (w, b) = (p.id("head.weight")?, p.id("head.bias")?);
        h = g.pointwise(vec![h], w, b)?;
    }
    g.add(x0, h)
}

fn dscr<G: Graph>(g: &mut G, cfg: &DscrCfg, x0: G::T) -> Result<G::T> {
    let last = cfg.modules() - 1;
    let mut h = x0.clone();
    for b in 0..cfg.blocks {
        for j in 0..cfg.modules_per_block {
            h = dsc(g, h, &format!("block{b}.dsc{j}"))?;
            if cfg.relu && b * cfg.modules_per_block + j != last {
                h = g.relu(h);
            }
        }
    }
    g.add(x0, h)
}

/// Builds the network on `g` for LR input `y`; returns the SR output handle.
pub fn network<G: Graph>(g: &mut G, y: &Array3) -> Result<G::T> {
    let p = g.params();
    let (cfg, s) = (p.cfg.clone(), p.scale);
    if y.channels() != cfg.channels() {
        return Err(Error::Shape(format!(
            "model expects {} channels, got {}",
            cfg.channels(),
            y.channels()
        )));
    }
    let m = cfg.spatial_multiple();
    let (hr, wr) = (y.rows() * s, y.cols() * s);
    if hr % m != 0 || wr % m != 0 {
        return Err(Error::Shape(format!(
            "upsampled size {hr}x{wr} must be a multiple of {m}"
        )));
    }
    let x0 = g.input(bicubic_upsample_array(y, s));
    match &cfg {
        ModelCfg::Unet(u) => unet(g, u, x0),
        ModelCfg::Dscr(d) => dscr(g, d, x0),
    }
}

/// Inference on a raw array.
pub fn predict(params: &ModelParams, y: &Array3) -> Result<Array3> {
    let mut g = Eval::new(params);
    let out = network(&mut g, y)?;
    drop(g);
    Ok(std::rc::Rc::try_unwrap(out).unwrap_or_else(|rc| (*rc).clone()))
}

pub fn unet_s5p_forward(y: &HyperCube, params: &ModelParams) -> Result<HyperCube> {
    if !matches!(params.cfg, ModelCfg::Unet(_)) {
        return Err(Error::UnknownArchitecture(format!("{} is not a Unet", params.arch)));
    }
    Ok(y.with_data(predict(params, &y.data)?))
}

pub fn dscr_forward(y: &HyperCube, params: &ModelParams) -> Result<HyperCube> {
    if !matches!(params.cfg, ModelCfg::Dscr(_)) {
        return Err(Error::UnknownArchitecture(format!("{} is not a DSCR variant", params.arch)));
    }
    Ok(y.with_data(predict(params, &y.data)?))
}

pub fn forward(y: &HyperCube, params: &ModelParams) -> Result<HyperCube> {
    Ok(y.with_data(predict(params, &y.data)?))
}
