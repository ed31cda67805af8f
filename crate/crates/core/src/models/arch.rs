use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensor::BandId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchId {
    #[serde(rename = "unet800k")]
    Unet800k,
    #[serde(rename = "unet1m")]
    Unet1m,
    #[serde(rename = "dscr")]
    Dscr,
    #[serde(rename = "dscr_s")]
    DscrS,
}

impl ArchId {
    pub const ALL: [ArchId; 4] = [ArchId::Unet800k, ArchId::Unet1m, ArchId::Dscr, ArchId::DscrS];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchId::Unet800k => "unet800k",
            ArchId::Unet1m => "unet1m",
            ArchId::Dscr => "dscr",
            ArchId::DscrS => "dscr_s",
        }
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchId::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownArchitecture(s.to_string()))
    }
}

/// A run of `depth` depthwise-separable modules.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DscBlockCfg {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub depth: usize,
}

impl DscBlockCfg {
    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 || self.depth == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::config(
                "model.block",
                format!("needs an odd kernel and positive sizes, got {self:?}"),
            ));
        }
        Ok(())
    }
}

/// Which encoder tensor a decoder stage fuses with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipSource {
    /// Output of the encoder block at the same resolution.
    EncoderOutput,
    /// Input of that encoder block; the model input at the top level.
    EncoderInput,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipFusion {
    ConcatProject,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnetCfg {
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub levels: usize,
    pub skip_fusion: SkipFusion,
    pub final_projection: bool,
    pub kernel: usize,
    pub encoder_depth: usize,
    /// Depth of each decoder block, bottom to top.
    pub decoder_depths: Vec<usize>,
    /// Skip source of each decoder stage, bottom to top.
    pub skips: Vec<SkipSource>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DscrCfg {
    pub channels: usize,
    pub blocks: usize,
    pub modules_per_block: usize,
    pub kernel: usize,
    pub relu: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelCfg {
    Unet(UnetCfg),
    Dscr(DscrCfg),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    FanIn(usize),
    Zero,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn strictly_monotone(v: &[usize], increasing: bool) -> bool {
    v.windows(2).all(|p| if increasing { p[0] < p[1] } else { p[0] > p[1] })
}

fn dsc_layers(out: &mut Vec<LayerSpec>, prefix: &str, cin: usize, cout: usize, k: usize, zero_pw: bool) {
    out.push(LayerSpec {
        name: format!("{prefix}.dw"),
        shape: vec![cin, k, k],
        init: Init::FanIn(k * k),
    });
    out.push(LayerSpec {
        name: format!("{prefix}.pw.weight"),
        shape: vec![cout, cin],
        init: if zero_pw { Init::Zero } else { Init::FanIn(cin) },
    });
    out.push(LayerSpec {
        name: format!("{prefix}.pw.bias"),
        shape: vec![cout],
        init: Init::Zero,
    });
}

impl UnetCfg {
    /// Unet-S5P-800k with the published widths for `channels` 497 or 480.
    pub fn unet800k(channels: usize) -> Result<UnetCfg> {
        let enc = match channels {
            497 => vec![497, 63, 8, 1],
            480 => vec![480, 60, 8, 1],
            c => return Err(Error::InvalidSpec(format!("no published unet800k widths for {c} channels"))),
        };
        Ok(UnetCfg::u800_shape(enc, vec![1, 8, 64, 512]))
    }

    /// Unet-S5P-1M with the published widths for `channels` 497 or 480.
    pub fn unet1m(channels: usize) -> Result<UnetCfg> {
        let enc = match channels {
            497 => vec![497, 180, 65, 24, 9],
            480 => vec![480, 173, 63, 23, 9],
            c => return Err(Error::InvalidSpec(format!("no published unet1m widths for {c} channels"))),
        };
        Ok(UnetCfg::u1m_shape(enc, vec![9, 25, 70, 195, 542]))
    }

    fn u800_shape(encoder_widths: Vec<usize>, decoder_widths: Vec<usize>) -> UnetCfg {
        UnetCfg {
            encoder_widths,
            decoder_widths,
            levels: 3,
            skip_fusion: SkipFusion::ConcatProject,
            final_projection: true,
            kernel: 3,
            encoder_depth: 1,
            decoder_depths: vec![1, 1, 1],
            skips: vec![SkipSource::EncoderOutput, SkipSource::EncoderOutput, SkipSource::EncoderInput],
        }
    }

    fn u1m_shape(encoder_widths: Vec<usize>, decoder_widths: Vec<usize>) -> UnetCfg {
        UnetCfg {
            encoder_widths,
            decoder_widths,
            levels: 4,
            skip_fusion: SkipFusion::ConcatProject,
            final_projection: true,
            kernel: 3,
            encoder_depth: 2,
            decoder_depths: vec![2, 2, 2, 1],
            skips: vec![SkipSource::EncoderOutput; 4],
        }
    }

    fn halvings(channels: usize, levels: usize) -> Vec<usize> {
        (0..=levels).map(|i| (channels >> i).max(1)).collect()
    }

    /// Reduced-width three-level variant with the same topology as unet800k.
    pub fn unet800k_toy(channels: usize) -> UnetCfg {
        let enc = UnetCfg::halvings(channels, 3);
        let mut dec: Vec<usize> = enc.iter().rev().cloned().collect();
        *dec.last_mut().unwrap() = channels;
        UnetCfg::u800_shape(enc, dec)
    }

    /// Reduced-width four-level variant with the same topology as unet1m.
    pub fn unet1m_toy(channels: usize) -> UnetCfg {
        let enc = UnetCfg::halvings(channels, 4);
        let mut dec: Vec<usize> = enc.iter().rev().cloned().collect();
        *dec.last_mut().unwrap() = channels;
        UnetCfg::u1m_shape(enc, dec)
    }

    pub fn channels(&self) -> usize {
        self.encoder_widths[0]
    }

    pub fn skip_channels(&self, stage: usize) -> usize {
        let lvl = self.levels - stage;
        match self.skips[stage] {
            SkipSource::EncoderOutput => self.encoder_widths[lvl],
            SkipSource::EncoderInput => self.encoder_widths[lvl - 1],
            SkipSource::None => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config("model.unet", m.to_string()));
        let l = self.levels;
        if l == 0 || self.encoder_widths.len() != l + 1 || self.decoder_widths.len() != l + 1 {
            return bad("levels must equal the number of width transitions in encoder and decoder");
        }
        if !strictly_monotone(&self.encoder_widths, false) {
            return bad("encoder widths must strictly decrease");
        }
        if !strictly_monotone(&self.decoder_widths, true) {
            return bad("decoder widths must strictly increase");
        }
        if self.decoder_widths[0] != self.encoder_widths[l] {
            return bad("decoder must start at the bottleneck width");
        }
        if self.decoder_depths.len() != l || self.skips.len() != l {
            return bad("one decoder depth and one skip source per level");
        }
        if self.kernel % 2 == 0 || self.encoder_depth == 0 || self.decoder_depths.contains(&0) {
            return bad("kernel must be odd and block depths positive");
        }
        if !self.final_projection
            && (self.decoder_widths[l] != self.channels() || self.skips[l - 1] == SkipSource::None)
        {
            return bad("without a final projection the top stage must fuse to the input width");
        }
        Ok(())
    }

    pub fn encoder_blocks(&self) -> Vec<DscBlockCfg> {
        self.encoder_widths
            .windows(2)
            .map(|p| DscBlockCfg {
                in_channels: p[0],
                out_channels: p[1],
                kernel: self.kernel,
                depth: self.encoder_depth,
            })
            .collect()
    }

    pub fn decoder_blocks(&self) -> Vec<DscBlockCfg> {
        self.decoder_widths
            .windows(2)
            .zip(&self.decoder_depths)
            .map(|(p, d)| DscBlockCfg {
                in_channels: p[0],
                out_channels: p[1],
                kernel: self.kernel,
                depth: *d,
            })
            .collect()
    }

    fn layers(&self) -> Vec<LayerSpec> {
        let k = self.kernel;
        let mut out = Vec::new();
        for (i, b) in self.encoder_blocks().iter().enumerate() {
            for j in 0..b.depth {
                let cin = if j == 0 { b.in_channels } else { b.out_channels };
                dsc_layers(&mut out, &format!("enc{}.dsc{j}", i + 1), cin, b.out_channels, k, false);
            }
        }
        let top = self.levels - 1;
        for (i, b) in self.decoder_blocks().iter().enumerate() {
            for j in 0..b.depth {
                let cin = if j == 0 { b.in_channels } else { b.out_channels };
                dsc_layers(&mut out, &format!("dec{}.dsc{j}", i + 1), cin, b.out_channels, k, false);
            }
            let sc = self.skip_channels(i);
            if sc > 0 {
                let zero = !self.final_projection && i == top;
                let cin = b.out_channels + sc;
                out.push(LayerSpec {
                    name: format!("dec{}.fuse.weight", i + 1),
                    shape: vec![b.out_channels, cin],
                    init: if zero { Init::Zero } else { Init::FanIn(cin) },
                });
                out.push(LayerSpec {
                    name: format!("dec{}.fuse.bias", i + 1),
                    shape: vec![b.out_channels],
                    init: Init::Zero,
                });
            }
        }
        if self.final_projection {
            let c = self.channels();
            out.push(LayerSpec {
                name: "head.weight".into(),
                shape: vec![c, self.decoder_widths[self.levels]],
                init: Init::Zero,
            });
            out.push(LayerSpec {
                name: "head.bias".into(),
                shape: vec![c],
                init: Init::Zero,
            });
        }
        out
    }

    /// Width sequences rendered as `a→b→c`.
    pub fn width_strings(&self) -> (String, String) {
        let j = |v: &[usize]| v.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("→");
        (j(&self.encoder_widths), j(&self.decoder_widths))
    }
}

impl DscrCfg {
    pub fn dscr(channels: usize) -> DscrCfg {
        DscrCfg {
            channels,
            blocks: 5,
            modules_per_block: 3,
            kernel: 3,
            relu: true,
        }
    }

    pub fn dscr_s(channels: usize) -> DscrCfg {
        DscrCfg {
            channels,
            blocks: 1,
            modules_per_block: 1,
            kernel: 3,
            relu: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.blocks == 0 || self.modules_per_block == 0 || self.kernel % 2 == 0 {
            return Err(Error::config(
                "model.dscr",
                format!("needs positive sizes and an odd kernel, got {self:?}"),
            ));
        }
        Ok(())
    }

    pub fn modules(&self) -> usize {
        self.blocks * self.modules_per_block
    }

    fn layers(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        let last = self.modules() - 1;
        for b in 0..self.blocks {
            for j in 0..self.modules_per_block {
                let idx = b * self.modules_per_block + j;
                let c = self.channels;
                dsc_layers(&mut out, &format!("block{b}.dsc{j}"), c, c, self.kernel, idx == last);
            }
        }
        out
    }
}

impl ModelCfg {
    /// Full-width configuration for a band with `channels` channels.
    pub fn preset(arch: ArchId, channels: usize) -> Result<ModelCfg> {
        Ok(match arch {
            ArchId::Unet800k => ModelCfg::Unet(UnetCfg::unet800k(channels)?),
            ArchId::Unet1m => ModelCfg::Unet(UnetCfg::unet1m(channels)?),
            ArchId::Dscr => ModelCfg::Dscr(DscrCfg::dscr(channels)),
            ArchId::DscrS => ModelCfg::Dscr(DscrCfg::dscr_s(channels)),
        })
    }

    /// Reduced-width configuration keeping each architecture's topology.
    pub fn toy(arch: ArchId, channels: usize) -> ModelCfg {
        match arch {
            ArchId::Unet800k => ModelCfg::Unet(UnetCfg::unet800k_toy(channels)),
            ArchId::Unet1m => ModelCfg::Unet(UnetCfg::unet1m_toy(channels)),
            ArchId::Dscr => ModelCfg::Dscr(DscrCfg::dscr(channels)),
            ArchId::DscrS => ModelCfg::Dscr(DscrCfg::dscr_s(channels)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelCfg::Unet(u) => u.validate(),
            ModelCfg::Dscr(d) => d.validate(),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            ModelCfg::Unet(u) => u.channels(),
            ModelCfg::Dscr(d) => d.channels,
        }
    }

    /// Required divisor of the HR spatial size.
    pub fn spatial_multiple(&self) -> usize {
        match self {
            ModelCfg::Unet(u) => 1 << u.levels,
            ModelCfg::Dscr(_) => 1,
        }
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        match self {
            ModelCfg::Unet(u) => u.layers(),
            ModelCfg::Dscr(d) => d.layers(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.shape.iter().product::<usize>()).sum()
    }

    /// Names of the tensors that form the final residual projection.
    pub fn residual_head(&self) -> Vec<String> {
        self.layers()
            .into_iter()
            .rev()
            .skip_while(|l| l.init != Init::Zero || l.name.ends_with(".bias"))
            .take(1)
            .flat_map(|l| {
                let bias = l.name.replace(".weight", ".bias");
                [l.name, bias]
            })
            .collect()
    }
}

pub fn count_params(arch: ArchId, band: BandId) -> Result<usize> {
    Ok(ModelCfg::preset(arch, band.default_channels())?.param_count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_widths() {
        let ModelCfg::Unet(u) = ModelCfg::preset(ArchId::Unet800k, 497).unwrap() else { unreachable!() };
        assert_eq!(u.width_strings(), ("497→63→8→1".into(), "1→8→64→512".into()));
        let ModelCfg::Unet(u) = ModelCfg::preset(ArchId::Unet1m, 480).unwrap() else { unreachable!() };
        assert_eq!(u.width_strings(), ("480→173→63→23→9".into(), "9→25→70→195→542".into()));
    }

    #[test]
    fn dscr_counts_are_exact() {
        assert_eq!(DscrCfg::dscr_s(497).layers().len(), 3);
        assert_eq!(ModelCfg::preset(ArchId::DscrS, 497).unwrap().param_count(), 9 * 497 + 497 * 497 + 497);
        assert_eq!(ModelCfg::preset(ArchId::Dscr, 480).unwrap().param_count(), 15 * (9 * 480 + 480 * 480 + 480));
    }

    #[test]
    fn unet800k_hand_count() {
        // encoder, then decoder stages with their fusions, then the head
        let enc = (9 * 497 + 497 * 63 + 63) + (9 * 63 + 63 * 8 + 8) + (9 * 8 + 8 + 1);
        let dec = (9 + 8 + 8) + (9 * 8 + 8) + (9 * 8 + 8 * 64 + 64) + (72 * 64 + 64)
            + (9 * 64 + 64 * 512 + 512) + (1009 * 512 + 512);
        let head = 512 * 497 + 497;
        assert_eq!(count_params(ArchId::Unet800k, BandId::Bd2).unwrap(), enc + dec + head);
    }

    #[test]
    fn unknown_architecture() {
        assert!(matches!("resnet".parse::<ArchId>(), Err(Error::UnknownArchitecture(_))));
        assert_eq!("dscr_s".parse::<ArchId>().unwrap(), ArchId::DscrS);
    }

    #[test]
    fn wider_is_bigger() {
        let a = UnetCfg::unet800k_toy(16);
        let mut b = a.clone();
        b.encoder_widths.iter_mut().for_each(|w| *w *= 2);
        b.decoder_widths.iter_mut().for_each(|w| *w *= 2);
        b.validate().unwrap();
        assert!(ModelCfg::Unet(b).param_count() > ModelCfg::Unet(a).param_count());
    }

    #[test]
    fn invalid_unets_rejected() {
        let mut u = UnetCfg::unet800k_toy(16);
        u.encoder_widths[2] = 9;
        assert!(u.validate().is_err());
        let mut u = UnetCfg::unet800k_toy(16);
        u.levels = 4;
        assert!(u.validate().is_err());
        assert!(UnetCfg::unet800k_toy(16).validate().is_ok());
        assert!(UnetCfg::unet1m_toy(16).validate().is_ok());
    }

    #[test]
    fn residual_head_names() {
        assert_eq!(
            ModelCfg::toy(ArchId::Unet800k, 8).residual_head(),
            vec!["head.weight".to_string(), "head.bias".to_string()]
        );
        assert_eq!(
            ModelCfg::toy(ArchId::Dscr, 8).residual_head(),
            vec!["block4.dsc2.pw.weight".to_string(), "block4.dsc2.pw.bias".to_string()]
        );
    }
}
