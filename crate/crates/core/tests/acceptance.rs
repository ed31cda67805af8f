//! Acceptance suite: one PASS/FAIL line per criterion; exits nonzero if
//! any criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use s5p_ssr::cli::{run, Command};
use s5p_ssr::hsio::{clean, synth_scene};
use s5p_ssr::losses::{mc_divergence, mse_grad, ssl_objective, sure_loss, EqCfg, ProbeDist, Reconstructor, SureCfg};
use s5p_ssr::metrics::{ImageMetrics, MetricReport};
use s5p_ssr::models::{
    bicubic_upsample_array, count_params, gradcheck, predict, ArchId, ModelCfg, ModelParams, UnetCfg,
};
use s5p_ssr::sensor::{
    noise_sigma_from_metadata, snr_db_to_linear, BandId, BandSpec, BlurKernel, Degradation, HyperCube, Space,
};
use s5p_ssr::training::{Adam, Checkpoint, Plateau};
use s5p_ssr::{Array3, Result};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn rnd(c: usize, h: usize, w: usize, lo: f64, hi: f64, seed: u64) -> Array3 {
    use rand::Rng;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_fn(c, h, w, |_, _, _| r.random_range(lo..hi))
}

fn c1_param_counts() -> Result<Outcome> {
    let published = [
        (ArchId::Unet1m, 1.07e6, 1.00e6),
        (ArchId::Unet800k, 0.81e6, 0.79e6),
        (ArchId::Dscr, 3.9e6, 3.6e6),
        (ArchId::DscrS, 0.25e6, 0.23e6),
    ];
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (arch, uvis, swir) in published {
        for band in BandId::ALL {
            let target = if band.is_swir() { swir } else { uvis };
            let n = count_params(arch, band)? as f64;
            let rel = (n - target).abs() / target;
            worst = worst.max(rel);
            pass &= rel <= 0.05;
            if band == BandId::Bd3 || band == BandId::Bd7 {
                parts.push(format!("{arch}/{band} {n:.0}"));
            }
        }
    }
    outcome(pass, format!("worst deviation {:.2}%; {}", 100.0 * worst, parts.join(", ")))
}

fn c2_widths() -> Result<Outcome> {
    let want = [
        (ArchId::Unet800k, 497, "497→63→8→1", "1→8→64→512"),
        (ArchId::Unet800k, 480, "480→60→8→1", "1→8→64→512"),
        (ArchId::Unet1m, 497, "497→180→65→24→9", "9→25→70→195→542"),
        (ArchId::Unet1m, 480, "480→173→63→23→9", "9→25→70→195→542"),
    ];
    let mut bad = Vec::new();
    for (arch, c, enc, dec) in want {
        let cfg = match arch {
            ArchId::Unet800k => UnetCfg::unet800k(c)?,
            _ => UnetCfg::unet1m(c)?,
        };
        let (e, d) = cfg.width_strings();
        if e != enc || d != dec {
            bad.push(format!("{arch}@{c}: {e} / {d}"));
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { "4 of 4 sequences equal".into() } else { bad.join("; ") })
}

struct Bicubic;

impl Reconstructor for Bicubic {
    fn reconstruct(&self, y: &Array3) -> Result<Array3> {
        Ok(bicubic_upsample_array(y, 4))
    }
}

fn c3_sure_unbiased() -> Result<Outcome> {
    let scene = synth_scene(BandId::Bd3, 8, 64, 64, 11, 1.0, 3)?.data;
    let (lo, hi) = scene.min_max();
    let x = scene.map(|v| (v - lo) / (hi - lo));
    let a = Degradation::from_spec(&BandSpec::default_for(BandId::Bd3))?;
    let ax = a.apply(&x)?;
    let sigma = 0.05;
    let cfg = SureCfg { sigma, ..SureCfg::default() };
    let normal = Normal::new(0.0, sigma).unwrap();
    let draws = 1000;
    let (mut sure, mut mse) = (0.0, 0.0);
    for i in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let mut y = ax.clone();
        y.as_mut_slice().iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        sure += sure_loss(&Bicubic, &y, &a, &cfg, i)?.total();
        mse += a.apply(&Bicubic.reconstruct(&y)?)?.sum_sq_diff(&ax);
    }
    let (sure, mse) = (sure / draws as f64, mse / draws as f64);
    let rel = (sure - mse).abs() / mse;
    outcome(rel <= 0.05, format!("mean SURE {sure:.4}, mean measurement SSE {mse:.4}, gap {:.3}%", 100.0 * rel))
}

fn c4_divergence() -> Result<Outcome> {
    let y = rnd(1, 64, 64, -1.0, 1.0, 21);
    let n = y.len() as f64;
    let want = 0.7 * n;
    let mut errs = Vec::new();
    for probes in [8, 64, 512] {
        let cfg = SureCfg { sigma: 1.0, mc_probes: probes, probe: ProbeDist::Rademacher, ..SureCfg::default() };
        let est = mc_divergence(|v| Ok(v.map(|t| 0.7 * t)), &y, &cfg, 5)?;
        errs.push((est - want).abs() / want);
    }
    let monotone = errs.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    let pass = errs[2] <= 0.02 && monotone;
    outcome(
        pass,
        format!("relative errors at 8/64/512 probes: {:.2e} {:.2e} {:.2e}", errs[0], errs[1], errs[2]),
    )
}

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

fn c5_degradation() -> Result<Outcome> {
    let (mut oracle, mut constant, mut ksum): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut kernels: Vec<(BlurKernel, usize)> = BandId::ALL
        .iter()
        .map(|b| {
            let s = BandSpec::default_for(*b);
            (Degradation::from_spec(&s).unwrap().kernel, s.scale)
        })
        .collect();
    kernels.push((BlurKernel::new(2.5, 0.7, 4.0)?, 2));
    for (i, (k, s)) in kernels.into_iter().enumerate() {
        ksum = ksum.max((k.weights.iter().sum::<f64>() - 1.0).abs());
        let a = Degradation::new(k.clone(), s)?;
        let x = rnd(1, 64, 64, -1.0, 1.0, 30 + i as u64);
        let got = a.apply(&x)?;
        oracle = oracle.max(got.as_slice().iter().zip(dense_oracle(&x, &k, s).as_slice()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
        let c = a.apply(&Array3::filled(1, 64, 64, 0.37))?;
        constant = constant.max(c.as_slice().iter().map(|v| (v - 0.37).abs()).fold(0.0, f64::max));
    }
    let pass = oracle <= 1e-6 && constant <= 1e-6 && ksum <= 1e-6;
    outcome(pass, format!("oracle {oracle:.1e}, constant {constant:.1e}, kernel sum {ksum:.1e}"))
}

fn c6_noise_constants() -> Result<Outcome> {
    let table = [
        (BandId::Bd2, 239.0, 7.88e-8),
        (BandId::Bd3, 909.0, 2.31e-7),
        (BandId::Bd4, 1344.0, 4.25e-7),
        (BandId::Bd5, 1219.0, 4.29e-7),
        (BandId::Bd6, 1255.0, 4.10e-7),
        (BandId::Bd7, 285.0, 3.25e-8),
        (BandId::Bd8, 229.0, 2.23e-8),
    ];
    let mut bad = Vec::new();
    for (band, snr, mu) in table {
        let spec = BandSpec::default_for(band);
        let derived = noise_sigma_from_metadata(snr, false, mu)?;
        if spec.snr_linear != snr || spec.mu != mu || spec.sigma != mu / snr || derived != mu / snr {
            bad.push(format!("{band}: sigma {}", spec.sigma));
        }
    }
    let db = snr_db_to_linear(20.0);
    let pass = bad.is_empty() && db == 100.0;
    let bd2 = BandSpec::default_for(BandId::Bd2).sigma;
    outcome(pass, format!("7 bands checked, BD2 sigma {bd2:e}, 20 dB -> {db}{}", if bad.is_empty() { String::new() } else { format!("; {}", bad.join(", ")) }))
}

fn toy(arch: ArchId, c: usize) -> Result<ModelParams> {
    let mut p = ModelParams::init(arch, BandId::Bd3, ModelCfg::toy(arch, c), 4, 3)?;
    p.randomize_fan_in(4, 1.5);
    Ok(p)
}

fn c7_gradients() -> Result<Outcome> {
    let a = Degradation::new(BlurKernel::new(1.5, 1.0, 4.0)?, 4)?;
    let sure = SureCfg { sigma: 0.05, mc_probes: 2, ..SureCfg::default() };
    let eq = EqCfg { margin: 1, ..EqCfg::default() };
    let mut pass = true;
    let mut parts = Vec::new();
    for (arch, c) in [(ArchId::Unet800k, 8), (ArchId::Unet1m, 16), (ArchId::Dscr, 8), (ArchId::DscrS, 8)] {
        let p = toy(arch, c)?;
        let y = rnd(c, 16, 16, 0.5, 1.5, 2);
        let base = ssl_objective(&p, &y, &a, &sure, Some(&eq), 5, None, true)?;
        let target = base.target.clone();
        let flat = base.grads.unwrap().concat();
        let ssl = gradcheck::check_gradients(
            &p,
            &flat,
            |q| {
                let e = ssl_objective(q, &y, &a, &sure, Some(&eq), 5, target.as_ref(), false)?;
                Ok(gradcheck::Probe { terms: e.pieces, pattern: e.pattern })
            },
            60,
            1e-5,
            1e-6,
            7,
        )?;
        let ys = rnd(c, 4, 4, 0.5, 1.5, 3);
        let x = rnd(c, 16, 16, 0.5, 1.5, 4);
        let flat = mse_grad(&p, &ys, &x, true)?.grads.unwrap().concat();
        let mse = gradcheck::check_gradients(
            &p,
            &flat,
            |q| {
                let e = mse_grad(q, &ys, &x, false)?;
                Ok(gradcheck::Probe { terms: e.pieces, pattern: e.pattern })
            },
            60,
            1e-5,
            1e-6,
            8,
        )?;
        for (loss, r) in [("ssl", &ssl), ("mse", &mse)] {
            pass &= r.checked >= 50 && r.max_rel_error <= 1e-3;
            parts.push(format!("{arch} {loss} {}/{:.1e}", r.checked, r.max_rel_error));
        }
    }
    outcome(pass, parts.join(", "))
}

const TOY: &str = r#"
[band]
id = "BD3"
channels = 8
lr_patch = 8

[synth]
count = 6
rows = 64
cols = 64
spectral_rank = 3

[data]
along_crop = 64
polar_fraction = 0.0

[train]
setting = "ssl_lr_hr"
architecture = "dscr_s"
toy = true
max_epochs = 2
steps_per_epoch = 3
val_limit = 2
"#;

fn rows_of(report: &MetricReport, model: &str) -> Vec<(String, Vec<(&'static str, f64, bool)>)> {
    report.rows.iter().filter(|r| r.model == model).map(|r| (r.image.clone(), r.values())).collect()
}

fn c8_residual_identity() -> Result<Outcome> {
    let mut mismatched = Vec::new();
    for arch in ArchId::ALL {
        let c = BandId::Bd3.default_channels();
        let mut p = ModelParams::init(arch, BandId::Bd3, ModelCfg::preset(arch, c)?, 4, 1)?;
        p.randomize(2, 0.3);
        p.zero_residual();
        let y = rnd(c, 8, 8, 0.0, 1.0, 3);
        if predict(&p, &y)?.as_slice() != bicubic_upsample_array(&y, 4).as_slice() {
            mismatched.push(arch.to_string());
        }
    }
    let d = tempfile::tempdir()?;
    let cfg = d.path().join("toy.toml");
    fs::write(&cfg, TOY)?;
    run(Command::SynthData, &cfg, &[])?;
    run(Command::Prepare, &cfg, &[])?;
    let mut params = ModelParams::init(ArchId::DscrS, BandId::Bd3, ModelCfg::toy(ArchId::DscrS, 8), 4, 5)?;
    params.randomize(9, 0.3);
    params.zero_residual();
    let shapes: Vec<usize> = params.tensors.iter().map(|t| t.data.len()).collect();
    let ck = Checkpoint {
        params,
        adam: Adam::new(&shapes),
        plateau: Plateau::new(1e-3, 0.1, 3, 1e-4, 1e-6)?,
        epoch: 0,
        best_val: f64::INFINITY,
        manifest_hash: String::new(),
        config_fingerprint: String::new(),
    };
    let path = d.path().join("zero.ckpt");
    ck.save(&path)?;
    let set = vec![format!("paths.checkpoint={}", path.display()), "inference.label=zero".into()];
    run(Command::Evaluate, &cfg, &set)?;
    let report = MetricReport::load(&d.path().join("work/eval/report.json"))?;
    let (zero, bic) = (rows_of(&report, "zero"), rows_of(&report, "bicubic"));
    let rows_equal = !zero.is_empty() && zero == bic;
    outcome(
        mismatched.is_empty() && rows_equal,
        format!(
            "bit-equal outputs for {}/4 architectures, {} evaluate rows {}",
            4 - mismatched.len(),
            zero.len(),
            if rows_equal { "identical to bicubic" } else { "differ from bicubic" }
        ),
    )
}

const EFFICACY: &str = r#"
[band]
id = "BD3"
channels = 16
lr_patch = 28

[synth]
count = 20
rows = 448
cols = 448
smoothness = 1.0
spectral_rank = 4

[data]
along_crop = 448
polar_fraction = 0.0

[train]
setting = "ssl_lr_hr"
architecture = "unet800k"
toy = true
max_epochs = 30
"#;

fn mean_row(dir: &Path, model: &str) -> Result<ImageMetrics> {
    let report = MetricReport::load(&dir.join("report.json"))?;
    report
        .mean_of(model)
        .ok_or_else(|| s5p_ssr::Error::Contract(format!("no {model} rows in {}", dir.display())))
}

fn db(p: Option<s5p_ssr::metrics::Psnr>) -> f64 {
    p.map(|p| p.db).unwrap_or(f64::NAN)
}

fn c9_efficacy(root: &Path) -> Result<Outcome> {
    let cfg = root.join("efficacy.toml");
    fs::write(&cfg, EFFICACY)?;
    run(Command::SynthData, &cfg, &[])?;
    run(Command::Prepare, &cfg, &[])?;
    run(Command::Train, &cfg, &[])?;
    run(Command::Evaluate, &cfg, &["paths.eval=work/eval_ssl".into()])?;
    let sl = ["train.setting=sl_lr_hr".to_string(), "paths.eval=work/eval_sl".into()];
    run(Command::Train, &cfg, &sl)?;
    run(Command::Evaluate, &cfg, &sl)?;
    let w = root.join("work");
    let bic = mean_row(&w.join("eval_ssl"), "bicubic")?;
    let ssl = mean_row(&w.join("eval_ssl"), "ssl_lr_hr")?;
    let sl = mean_row(&w.join("eval_sl"), "sl_lr_hr")?;
    let dp = db(ssl.psnr) - db(bic.psnr);
    let dc = db(ssl.consistency) - db(bic.consistency);
    let pass = dp >= 0.3 && dc >= 2.0 && db(sl.psnr) > db(ssl.psnr);
    outcome(
        pass,
        format!(
            "PSNR bicubic {:.3} / ssl {:.3} / sl {:.3} dB; consistency bicubic {:.3} / ssl {:.3} dB (gains {dp:+.3}, {dc:+.3})",
            db(bic.psnr),
            db(ssl.psnr),
            db(sl.psnr),
            db(bic.consistency),
            db(ssl.consistency)
        ),
    )
}

fn c10_gt_shr(root: &Path) -> Result<Outcome> {
    let cfg = root.join("efficacy.toml");
    let set = [
        "train.setting=ssl_gt_shr".to_string(),
        "train.max_epochs=15".into(),
        "train.steps_per_epoch=208".into(),
        "train.val_limit=128".into(),
        "paths.eval=work/eval_gt_shr".into(),
    ];
    run(Command::Train, &cfg, &set)?;
    run(Command::Evaluate, &cfg, &set)?;
    let dir = root.join("work/eval_gt_shr");
    let bic = mean_row(&dir, "bicubic")?;
    let shr = mean_row(&dir, "ssl_gt_shr")?;
    let (cb, cs) = (db(bic.consistency), db(shr.consistency));
    let (sb, ss) = (bic.sharpness.unwrap_or(f64::NAN), shr.sharpness.unwrap_or(f64::NAN));
    outcome(
        cs >= cb && ss > sb,
        format!("consistency bicubic {cb:.3} / shr {cs:.3} dB; sharpness bicubic {sb:.5} / shr {ss:.5}"),
    )
}

fn file_hash(p: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(p)?)))
}

fn c11_determinism() -> Result<Outcome> {
    let mut hashes = Vec::new();
    for _ in 0..2 {
        let d = tempfile::tempdir()?;
        let cfg = d.path().join("toy.toml");
        fs::write(&cfg, TOY)?;
        for c in [Command::SynthData, Command::Prepare, Command::Train] {
            run(c, &cfg, &[])?;
        }
        let w = d.path().join("work");
        let ck = w.join("runs/ssl_lr_hr/checkpoints/best.ckpt");
        hashes.push((
            fs::read_to_string(w.join("cache/cache.sha256"))?.trim().to_string(),
            Checkpoint::load(&ck)?.hash(),
            file_hash(&ck)?,
        ));
    }
    let same = hashes[0] == hashes[1];
    outcome(
        same,
        format!("cache {} / checkpoint {}{}", &hashes[0].0[..12], &hashes[0].1[..12], if same { "" } else { " differ between runs" }),
    )
}

fn raw(a: Array3) -> Result<HyperCube> {
    HyperCube::new(a, BandId::Bd3, Space::Raw)
}

fn c12_cleaning() -> Result<Outcome> {
    let t = 1e-2;
    let mut checks = Vec::new();

    let mut a = Array3::filled(1, 3, 3, 5e-5);
    a.set(0, 1, 1, -0.005);
    let c = clean(&raw(a)?, t)?;
    checks.push(("small negative", c.data.get(0, 1, 1) == 0.0));
    checks.push(("valid value untouched", c.data.get(0, 0, 0) == 5e-5));

    let vals = [1e-3, 2e-3, 3e-3, 4e-3, 5e-3, 6e-3, 7e-3, 8e-3];
    let mut a = Array3::zeros(1, 3, 3);
    let mut k = 0;
    for r in 0..3 {
        for q in 0..3 {
            if (r, q) != (1, 1) {
                a.set(0, r, q, vals[k]);
                k += 1;
            }
        }
    }
    a.set(0, 1, 1, 1e30);
    let c = clean(&raw(a)?, t)?;
    checks.push(("spike", (c.data.get(0, 1, 1) - 4.5e-3).abs() < 1e-18));

    let mut r = ChaCha8Rng::seed_from_u64(77);
    let mut messy = rnd(4, 24, 24, -0.02, 0.02, 78);
    for v in messy.as_mut_slice().iter_mut() {
        use rand::Rng;
        match r.random_range(0..12) {
            0 => *v = 1e30,
            1 => *v = -1e30,
            _ => {}
        }
    }
    let once = clean(&raw(messy)?, t)?;
    checks.push(("range", once.data.as_slice().iter().all(|v| *v >= 0.0 && *v < t)));
    let twice = clean(&once, t)?;
    checks.push(("idempotent", once.data.as_slice() == twice.data.as_slice()));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() { format!("{} checks hold", checks.len()) } else { format!("failed: {}", failed.join(", ")) },
    )
}

fn main() -> std::process::ExitCode {
    let work = tempfile::tempdir().unwrap();
    let root = work.path().to_path_buf();
    let criteria: Vec<(&str, Box<dyn Fn() -> Result<Outcome>>)> = vec![
        ("parameter counts", Box::new(c1_param_counts)),
        ("encoder and decoder widths", Box::new(c2_widths)),
        ("SURE unbiasedness", Box::new(c3_sure_unbiased)),
        ("Monte Carlo divergence", Box::new(c4_divergence)),
        ("degradation oracle", Box::new(c5_degradation)),
        ("noise constants", Box::new(c6_noise_constants)),
        ("gradient checks", Box::new(c7_gradients)),
        ("residual identity", Box::new(c8_residual_identity)),
        ("SSL efficacy", Box::new({
            let r = root.clone();
            move || c9_efficacy(&r)
        })),
        ("GT-SHR plausibility", Box::new({
            let r = root.clone();
            move || c10_gt_shr(&r)
        })),
        ("pipeline determinism", Box::new(c11_determinism)),
        ("cleaning contract", Box::new(c12_cleaning)),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e}") });
        println!(
            "criterion {:>2} {} {name}: {} [{:.1}s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("all 12 criteria pass");
        std::process::ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
