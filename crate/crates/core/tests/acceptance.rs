//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. `SRCID_ACCEPTANCE_ONLY=A4,A9` runs a subset.

use std::collections::HashSet;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng as _;
use srcid::data::{
    generate_phantom_dataset, write_nifti, AugmentParams, Dataset, DatasetManifest, ManifestEntry,
    NiftiImage, PhantomParams, PreprocessParams, Split, SplitKind,
};
use srcid::eval::{
    dice_flat, jaccard_flat, paired_ttest, reconstruction_arm, t_two_sided_p, transfer_experiment,
    ArmBudget, DataSplits, Group, ReconArm, TransferBudget,
};
use srcid::model::{build_network, is_head, to_tensor, NetworkSpec, Tensor};
use srcid::seed::rng_for;
use srcid::ssltasks::{
    bezier, combination_count, inpaint_corrupt, pixel_shuffle_corrupt, sample_plan, superres_corrupt,
    ProxySampler,
};
use srcid::training::{
    poly_lr, pretrain, reconstruction_loss_grad, segmentation_loss_grad, EarlyStopping, Goal, TrainConfig,
    Verdict,
};
use srcid::{validate_mixture_plan, CorruptionSpec, Image, Mask, MixtureSettings, MultiModalSlice, Network64, TaskKind};
use statrs::function::gamma::ln_gamma;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// Budgets for the training criteria, sized for a single CPU core.
const IMAGE: usize = 32;
const WIDTH: usize = 16;
const DEPTH: usize = 2;

fn phantom(n_patients: usize, counts: (usize, usize, usize), seed: u64) -> Result<DataSplits<f32>, String> {
    let params = PhantomParams {
        n_patients,
        size: IMAGE,
        depth: 8,
        seed,
        ..PhantomParams::default()
    };
    let raw = generate_phantom_dataset::<f32>(&params).map_err(err)?;
    let pre = PreprocessParams {
        size: (IMAGE, IMAGE),
        ..PreprocessParams::default()
    };
    let ds = Dataset::from_phantom(&raw, params.class_names(), &pre).map_err(err)?;
    let split = Split::random(n_patients, counts, seed).map_err(err)?;
    Ok(DataSplits::new(&ds, &split))
}

fn spec(seed: u64) -> NetworkSpec {
    NetworkSpec {
        depth: DEPTH,
        base_width: WIDTH,
        seed,
        ..NetworkSpec::default()
    }
}

fn recon_config(epochs: usize, iterations: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs_max: epochs,
        iterations_per_epoch: iterations,
        early_stop_patience: epochs,
        val_samples: 16,
        seed,
        ..TrainConfig::default()
    }
}

fn a1() -> Outcome {
    let splits = phantom(30, (20, 4, 6), 0)?;
    let budget = ArmBudget {
        train: recon_config(150, 100, 0),
        spec: spec(0),
        test_samples: 64,
    };
    let low = reconstruction_arm(&splits, ReconArm::Ambiguous { lambda: 0.1 }, &budget).map_err(err)?;
    let high = reconstruction_arm(&splits, ReconArm::Ambiguous { lambda: 0.9 }, &budget).map_err(err)?;
    let msg = format!("error at lambda 0.9 {:.4}, at 0.1 {:.4} (need <= {:.4})", high.mean, low.mean, low.mean / 2.0);
    ensure(high.mean <= low.mean / 2.0, &msg)?;
    Ok(msg)
}

fn a2() -> Outcome {
    let splits = phantom(30, (20, 4, 6), 0)?;
    let budget = ArmBudget {
        train: recon_config(150, 100, 0),
        spec: spec(0),
        test_samples: 64,
    };
    let task = TaskKind::Csi(MixtureSettings::new(3, 2, 2).map_err(err)?);
    let csi = reconstruction_arm(&splits, ReconArm::Proxy { task }, &budget).map_err(err)?;
    let amb = reconstruction_arm(&splits, ReconArm::Ambiguous { lambda: 0.0 }, &budget).map_err(err)?;
    let msg = format!("CSI error {:.4}, ambiguous {:.4} (ratio {:.2}, need >= 2)", csi.mean, amb.mean, amb.mean / csi.mean);
    ensure(2.0 * csi.mean <= amb.mean, &msg)?;
    Ok(msg)
}

fn a3() -> Outcome {
    let mut pre_scores = vec![];
    let mut base_scores = vec![];
    let groups = vec![Group {
        name: "lesion".into(),
        labels: vec![2],
    }];
    for seed in 0..3u64 {
        let splits = phantom(40, (30, 5, 5), seed)?;
        let pretrain_cfg = TrainConfig {
            epochs_max: 60,
            iterations_per_epoch: 100,
            early_stop_patience: 60,
            val_samples: 16,
            seed,
            ..TrainConfig::default()
        };
        let finetune_cfg = TrainConfig {
            epochs_max: 60,
            iterations_per_epoch: 50,
            early_stop_patience: 20,
            batch_size: 4,
            labeled_budget: Some(5),
            seed,
            ..TrainConfig::default()
        };
        let budget = TransferBudget {
            pretrain: pretrain_cfg,
            finetune: finetune_cfg,
            spec: spec(seed),
        };
        let r = transfer_experiment(&splits, &TaskKind::Csi(MixtureSettings::default()), &budget, &groups)
            .map_err(err)?;
        pre_scores.push(r.pretrained.mean[0]);
        base_scores.push(r.baseline.mean[0]);
    }
    let wins = pre_scores.iter().zip(&base_scores).filter(|(p, b)| p >= b).count();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let msg = format!(
        "lesion Dice pretrained {:?} vs baseline {:?}; {wins}/3 seeds, means {:.4} vs {:.4}",
        pre_scores.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
        base_scores.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
        mean(&pre_scores),
        mean(&base_scores)
    );
    ensure(wins >= 2 && mean(&pre_scores) > mean(&base_scores), &msg)?;
    Ok(msg)
}

fn a4() -> Outcome {
    let c = combination_count(100, 5);
    ensure(c == 376_437_600, format!("got {c}"))?;
    Ok(format!("combination_count(100, 5) = {c}"))
}

fn tiny_net(in_c: usize, out_c: usize) -> Network64 {
    build_network(&NetworkSpec {
        in_channels: in_c,
        out_channels: out_c,
        depth: 1,
        base_width: 2,
        seed: 5,
        ..NetworkSpec::default()
    })
    .unwrap()
}

/// Worst relative error between backprop and central differences over a
/// strided subset of every parameter tensor.
fn fd_worst(net: &Network64, analytic: &[Vec<f64>], loss: impl Fn(&Network64) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (pi, p) in net.params.iter().enumerate() {
        let step = (p.value.len() / 6).max(1);
        for k in (0..p.value.len()).step_by(step) {
            let mut plus = net.clone();
            plus.params[pi].value[k] += h;
            let mut minus = net.clone();
            minus.params[pi].value[k] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let a = analytic[pi][k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4));
        }
    }
    worst
}

fn a5() -> Outcome {
    // network gradients, reconstruction and segmentation heads
    let x = to_tensor(&Image::from_fn(8, 8, 2, |y, x, c| ((y * 5 + x * 3 + c) % 7) as f64 / 3.0 - 1.0));
    let net = tiny_net(2, 2);
    let target: Vec<f64> = (0..x.data.len()).map(|i| ((i * 11) % 5) as f64 / 2.0 - 1.0).collect();
    let (y, cache) = net.forward_train(&x).map_err(err)?;
    let (_, g) = reconstruction_loss_grad(&y.data, &target).map_err(err)?;
    let mut grads = net.zero_grads();
    net.backward(&cache, &Tensor { data: g, ..y.clone() }, &mut grads);
    let recon = fd_worst(&net, &grads, |n| {
        reconstruction_loss_grad(&n.forward(&x).unwrap().data, &target).unwrap().0
    });
    ensure(recon <= 1e-3, format!("reconstruction gradient relative error {recon:.2e}"))?;

    let net = tiny_net(2, 3);
    let mut onehot = Tensor::zeros(3, 8, 8);
    for i in 0..64 {
        onehot.data[((i / 3) % 3) * 64 + i] = 1.0;
    }
    let (y, cache) = net.forward_train(&x).map_err(err)?;
    let (_, dout) = segmentation_loss_grad(&y, &onehot).map_err(err)?;
    let mut grads = net.zero_grads();
    net.backward(&cache, &dout, &mut grads);
    let seg = fd_worst(&net, &grads, |n| segmentation_loss_grad(&n.forward(&x).unwrap(), &onehot).unwrap().0);
    ensure(seg <= 1e-3, format!("segmentation gradient relative error {seg:.2e}"))?;

    // loss-only gradients
    let h = 1e-6;
    let pred: Vec<f64> = (0..30).map(|i| (i as f64 * 0.41).sin()).collect();
    let tgt: Vec<f64> = (0..30).map(|i| (i as f64 * 0.13).cos()).collect();
    let (_, g) = reconstruction_loss_grad(&pred, &tgt).map_err(err)?;
    let mut loss_worst = 0.0f64;
    for k in 0..pred.len() {
        let mut p = pred.clone();
        p[k] += h;
        let up = reconstruction_loss_grad(&p, &tgt).unwrap().0;
        p[k] -= 2.0 * h;
        let down = reconstruction_loss_grad(&p, &tgt).unwrap().0;
        loss_worst = loss_worst.max(((up - down) / (2.0 * h) - g[k]).abs());
    }
    ensure(loss_worst <= 1e-5, format!("loss gradient error {loss_worst:.2e}"))?;

    // schedule
    for (epoch, want) in [(0usize, 0.01), (500, 0.01 * 0.5f64.powf(0.9)), (999, 0.01 * 0.001f64.powf(0.9)), (1000, 0.0)] {
        let got = poly_lr(epoch, 1000, 0.01);
        ensure((got - want).abs() < 1e-12, format!("poly_lr({epoch}) = {got}, expected {want}"))?;
    }

    // overlap metrics against set counting
    let mut rng = rng_for(99, &[]);
    for _ in 0..1000 {
        let a: Vec<bool> = (0..64).map(|_| rng.random_bool(0.4)).collect();
        let b: Vec<bool> = (0..64).map(|_| rng.random_bool(0.4)).collect();
        let sa: HashSet<usize> = (0..64).filter(|&i| a[i]).collect();
        let sb: HashSet<usize> = (0..64).filter(|&i| b[i]).collect();
        let inter = sa.intersection(&sb).count() as f64;
        let union = sa.union(&sb).count() as f64;
        let (d, j) = if union == 0.0 {
            (1.0, 1.0)
        } else {
            (2.0 * inter / (sa.len() + sb.len()) as f64, inter / union)
        };
        let (dd, jj) = (dice_flat(&a, &b), jaccard_flat(&a, &b));
        ensure((dd - d).abs() < 1e-12 && (jj - j).abs() < 1e-12, format!("dice {dd} vs {d}, jaccard {jj} vs {j}"))?;
        ensure((dd - 2.0 * jj / (1.0 + jj)).abs() < 1e-12, "dice != 2J/(1+J)")?;
    }
    Ok(format!(
        "gradient rel. error {:.1e} / {:.1e}, loss-only {:.1e}; schedule and 1000 mask pairs exact",
        recon, seg, loss_worst
    ))
}

fn test_slice(seed: u64) -> MultiModalSlice<f64> {
    let mut rng = rng_for(seed, &[]);
    let img = Image::from_fn(16, 16, 2, |_, _, _| rng.random_range(-2.0..2.0));
    MultiModalSlice::new(img, Mask::full(16, 16), "p", 0).unwrap()
}

fn a6() -> Outcome {
    for seed in 0..50u64 {
        let s = test_slice(seed);
        let keep_all = CorruptionSpec::new((4, 4), 1.0).map_err(err)?;
        let out = inpaint_corrupt(&s, &keep_all, &mut rng_for(seed, &[1])).map_err(err)?;
        ensure(out.input == s.pixels && out.target == s.pixels, "inpainting with gamma 1 changed the image")?;

        let none = CorruptionSpec::new((4, 4), 0.0).map_err(err)?;
        let out = pixel_shuffle_corrupt(&s, &none, &mut rng_for(seed, &[2])).map_err(err)?;
        ensure(out.input == s.pixels, "pixel shuffle with gamma 0 changed the image")?;
        let all = CorruptionSpec::new((4, 4), 1.0).map_err(err)?;
        let out = pixel_shuffle_corrupt(&s, &all, &mut rng_for(seed, &[3])).map_err(err)?;
        for (y0, x0) in (0..4).flat_map(|a| (0..4).map(move |b| (a * 4, b * 4))) {
            for c in 0..2 {
                let cell = |im: &Image<f64>| {
                    let mut v: Vec<f64> = (y0..y0 + 4)
                        .flat_map(|y| (x0..x0 + 4).map(move |x| (y, x)))
                        .map(|(y, x)| im.get(y, x, c))
                        .collect();
                    v.sort_by(f64::total_cmp);
                    v
                };
                ensure(cell(&out.input) == cell(&s.pixels), "pixel shuffle changed a cell's values")?;
            }
        }

        let unit = CorruptionSpec::new((1, 1), 1.0).map_err(err)?;
        ensure(superres_corrupt(&s, &unit).map_err(err)?.input == s.pixels, "1x1 super-resolution is not identity")?;

        let mut rng = rng_for(seed, &[4]);
        let p: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        ensure(bezier(0.0, p) == p[0] && bezier(1.0, p) == p[3], "Bezier endpoints moved")?;
    }
    Ok("inpaint, pixel shuffle, super-resolution identities and Bezier endpoints hold on 50 slices".into())
}

fn a7() -> Outcome {
    let settings = [(1, 1, 1), (3, 2, 2), (5, 3, 2), (7, 4, 2), (9, 5, 2)];
    for (n, k, m) in settings {
        let s = MixtureSettings::new(n, k, m).map_err(err)?;
        for seed in 0..10_000u64 {
            let plan = sample_plan(&s, &mut rng_for(seed, &[7])).map_err(err)?;
            let v = validate_mixture_plan(&plan);
            ensure(v.is_empty(), format!("seed {seed}, {s:?}: {v:?}"))?;
        }
    }

    let splits = phantom(10, (6, 2, 2), 3)?;
    let aug = AugmentParams::default();
    let mut worst_remix = 0.0f64;
    let mut worst_bound = 0.0f64;
    let mut checked = 0;
    for task in [
        TaskKind::Csi(MixtureSettings::new(3, 2, 2).map_err(err)?),
        TaskKind::Wsi(MixtureSettings::new(3, 2, 2).map_err(err)?),
        TaskKind::Dsi(MixtureSettings::new(3, 2, 2).map_err(err)?),
    ] {
        let sampler = ProxySampler::new(&splits.train, task, aug.clone(), 21).map_err(err)?;
        for i in 0..30 {
            let sample = sampler.sample(0, i).map_err(err)?;
            let sources: Vec<Image<f32>> = sample
                .provenance
                .sources
                .iter()
                .map(|r| splits.train.resolve(r, &aug))
                .collect::<Result<_, _>>()
                .map_err(err)?;
            let remixed = sample.remix(|r| splits.train.resolve(r, &aug)).map_err(err)?;
            for (a, b) in remixed.as_slice().iter().zip(sample.input.as_slice()) {
                worst_remix = worst_remix.max((a - b).abs() as f64);
            }
            let (h, w, t) = sources[0].shape();
            for (row_i, row) in sample.provenance.weights.iter().enumerate() {
                for y in 0..h {
                    for x in 0..w {
                        for c in 0..t {
                            let used = row.iter().zip(&sources).filter(|(wt, _)| **wt > 0.0).map(|(_, s)| s.get(y, x, c) as f64);
                            let (lo, hi) = used.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), v| (l.min(v), u.max(v)));
                            let v = sample.input.get(y, x, row_i * t + c) as f64;
                            worst_bound = worst_bound.max(lo - v).max(v - hi);
                        }
                    }
                }
            }
            checked += 1;
        }
    }
    ensure(worst_remix <= 1e-6, format!("remix differs by {worst_remix:.2e}"))?;
    ensure(worst_bound <= 1e-6, format!("mixture leaves its source range by {worst_bound:.2e}"))?;
    Ok(format!(
        "5 settings x 10^4 plans valid; {checked} proxy samples remix within {worst_remix:.1e} and stay in range"
    ))
}

fn a8() -> Outcome {
    let splits = phantom(10, (4, 3, 3), 4)?;
    let cfg = TrainConfig {
        epochs_max: 3,
        iterations_per_epoch: 4,
        val_samples: 4,
        early_stop_patience: 3,
        seed: 8,
        ..TrainConfig::default()
    };
    let small = NetworkSpec {
        depth: 1,
        base_width: 4,
        seed: 8,
        ..NetworkSpec::default()
    };
    let task = TaskKind::Csi(MixtureSettings::new(3, 2, 2).map_err(err)?);
    let a = pretrain(&cfg, &task, &splits.train, &splits.val, &small).map_err(err)?;
    let b = pretrain(&cfg, &task, &splits.train, &splits.val, &small).map_err(err)?;
    ensure(a.record == b.record, "same-seed run records differ")?;
    ensure(a.network.params == b.network.params, "same-seed weights differ")?;

    let swapped = a.network.swap_head(2, 3, 99).map_err(err)?;
    let mut kept = 0;
    for (p, q) in a.network.params.iter().zip(&swapped.params) {
        if !is_head(&p.name) {
            let same = p.value.len() == q.value.len() && p.value.iter().zip(&q.value).all(|(x, y)| x.to_bits() == y.to_bits());
            ensure(same, format!("{} changed in head swap", p.name))?;
            kept += 1;
        }
    }

    for patience in 1..6 {
        for best_at in 0..5 {
            let mut stop = EarlyStopping::new(patience, Goal::Minimize);
            let mut halted = None;
            for epoch in 0..100 {
                let value = if epoch <= best_at { 10.0 - epoch as f64 } else { 10.0 - best_at as f64 + 0.5 };
                if stop.update(epoch, value) == Verdict::Stop {
                    halted = Some(epoch);
                    break;
                }
            }
            ensure(
                halted == Some(best_at + patience),
                format!("patience {patience}, best {best_at}: halted at {halted:?}"),
            )?;
        }
    }
    Ok(format!("{kept} body tensors bit-identical after head swap; stopping exact; same-seed records equal"))
}

/// Two-sided Student-t tail by Simpson integration of the density.
fn t_tail(t: f64, dof: f64) -> f64 {
    let log_c = ln_gamma((dof + 1.0) / 2.0) - ln_gamma(dof / 2.0) - 0.5 * (dof * std::f64::consts::PI).ln();
    let pdf = |x: f64| (log_c - (dof + 1.0) / 2.0 * (1.0 + x * x / dof).ln()).exp();
    let n = 20_000;
    let b = t.abs();
    let h = b / n as f64;
    let mut s = pdf(0.0) + pdf(b);
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

fn a9() -> Outcome {
    let r = paired_ttest(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).map_err(err)?;
    ensure((r.p - 0.0742).abs() <= 1e-3, format!("p = {}", r.p))?;
    let mut rng = rng_for(17, &[]);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let dof = rng.random_range(1..40) as f64;
        let t = rng.random_range(-8.0..8.0);
        worst = worst.max((t_two_sided_p(t, dof) - t_tail(t, dof)).abs());
    }
    ensure(worst <= 1e-6, format!("t distribution off by {worst:.2e}"))?;
    Ok(format!("p = {:.4} for d = (1, 2, 3); t tail within {worst:.1e} over 100 cases", r.p))
}

/// Writes a small two-modality NIfTI set with one labeled patient per split.
fn synthetic_nifti(dir: &Path) -> Result<DatasetManifest, String> {
    let (nx, ny, nz) = (180, 220, 6);
    let mut patients = vec![];
    for (p, split) in [SplitKind::Train, SplitKind::Val, SplitKind::Test].into_iter().enumerate() {
        let mut rng = rng_for(p as u64, &[]);
        let mut images = vec![];
        for m in 0..2 {
            let mut data = vec![0.0; nx * ny * nz];
            let scale = 100.0 * (m + 1) as f64;
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        let (dx, dy) = ((x as f64 - 90.0) / 70.0, (y as f64 - 110.0) / 80.0);
                        if dx * dx + dy * dy < 1.0 {
                            data[(z * ny + y) * nx + x] = scale + 30.0 * rng.random::<f64>() + z as f64;
                        }
                    }
                }
            }
            let name = format!("p{p}_m{m}.nii.gz");
            write_nifti(&dir.join(&name), &NiftiImage { dims: [nx, ny, nz, 1], spacing: [1.0; 3], data }).map_err(err)?;
            images.push(name.into());
        }
        let labels: Vec<f64> = (0..nx * ny * nz).map(|i| ((i % nx) > 90) as u8 as f64).collect();
        let lname = format!("p{p}_seg.nii.gz");
        write_nifti(&dir.join(&lname), &NiftiImage { dims: [nx, ny, nz, 1], spacing: [1.0; 3], data: labels })
            .map_err(err)?;
        patients.push(ManifestEntry {
            id: format!("p{p}"),
            images,
            labels: Some(lname.into()),
            split,
            labeled: true,
        });
    }
    Ok(DatasetManifest {
        root: dir.to_path_buf(),
        seed: 0,
        modalities: vec!["t1".into(), "flair".into()],
        class_names: vec!["background".into(), "lesion".into()],
        patients,
    })
}

/// Checks slice geometry and per-patient, per-channel foreground moments.
fn check_loaded(ds: &Dataset<f64>) -> Result<usize, String> {
    for p in &ds.patients {
        let t = ds.modalities();
        let (mut n, mut sum, mut sq) = (0usize, vec![0.0; t], vec![0.0; t]);
        for s in &p.slices {
            let (h, w, _) = s.pixels.shape();
            ensure((h, w) == (200, 200), format!("{}: slice is {h}x{w}", p.id))?;
            for y in 0..h {
                for x in 0..w {
                    if s.brain_mask.get(y, x) {
                        n += 1;
                        for c in 0..t {
                            let v = s.pixels.get(y, x, c);
                            sum[c] += v;
                            sq[c] += v * v;
                        }
                    }
                }
            }
        }
        for c in 0..t {
            let mean = sum[c] / n as f64;
            let std = (sq[c] / n as f64 - mean * mean).sqrt();
            ensure(
                mean.abs() <= 1e-5 && (std - 1.0).abs() <= 1e-5,
                format!("{} channel {c}: mean {mean:.2e}, std {std}", p.id),
            )?;
        }
    }
    Ok(ds.patients.len())
}

fn a10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let manifest = synthetic_nifti(tmp.path())?;
    let path = tmp.path().join("manifest.json");
    manifest.save(&path).map_err(err)?;
    let manifest = DatasetManifest::load(&path).map_err(err)?;
    let (ds, _) = manifest.load_dataset::<f64>(&PreprocessParams::default()).map_err(err)?;
    let mut checked = check_loaded(&ds)?;
    let mut note = String::new();
    if let Ok(dir) = std::env::var("SRCID_NIFTI_DIR") {
        let real = DatasetManifest::load(&Path::new(&dir).join("manifest.json")).map_err(err)?;
        let (ds, _) = real.load_dataset::<f64>(&PreprocessParams::default()).map_err(err)?;
        checked += check_loaded(&ds)?;
        note = format!(" (including {dir})");
    }
    Ok(format!("{checked} patients at 200x200 with unit foreground moments{note}"))
}

fn main() -> ExitCode {
    let only: Option<Vec<String>> = std::env::var("SRCID_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').map(|t| t.trim().to_uppercase()).collect());
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("A4", a4),
        ("A5", a5),
        ("A6", a6),
        ("A7", a7),
        ("A8", a8),
        ("A9", a9),
        ("A10", a10),
        ("A1", a1),
        ("A2", a2),
        ("A3", a3),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.iter().any(|n| n == name)) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = run();
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("{name} PASS ({secs:.1}s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("{name} FAIL ({secs:.1}s): {msg}");
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
