//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Everything runs inside a single test so that process CPU time can be
//! attributed to one criterion at a time. Run with
//! `cargo test -p innerspeech-core --test acceptance`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use innerspeech::data::load_epochset;
use innerspeech::dsp::{relative_band_power, standard_bands, welch_psd, Denominator, Taper};
use innerspeech::eval::{
    check_leakage, compute_metrics, kfold, kfold_cv, nested_cv, BoxError, CvConfig, CvTask, EvalError, Learner,
    REPORT_FILES,
};
use innerspeech::features::Provenance;
use innerspeech::neural::{backward, forward, init_params, loss, Front, Mode, NetworkSpec, SequenceBatch};
use innerspeech::pipeline::{
    evaluate, feature_params, gain_provenance, prepare, preset, run, DatasetSource, NetworkHyper, PipelineConfig,
};
use innerspeech::synth::{default_4class_spec, DEFAULT_CHANNELS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<String, String>;

fn cpu_seconds() -> f64 {
    let mut u: libc::rusage = unsafe { std::mem::zeroed() };
    // SAFETY: getrusage only writes into the struct we pass.
    let rc = unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut u) };
    assert_eq!(rc, 0, "getrusage failed");
    let t = |v: libc::timeval| v.tv_sec as f64 + v.tv_usec as f64 * 1e-6;
    t(u.ru_utime) + t(u.ru_stime)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

#[derive(Default)]
struct Tally {
    failed: Vec<&'static str>,
}

impl Tally {
    fn run(&mut self, name: &'static str, f: impl FnOnce() -> Check) {
        self.run_within(name, f64::INFINITY, f)
    }

    /// Like `run`, failing the criterion when it takes `limit_s` CPU seconds or more.
    fn run_within(&mut self, name: &'static str, limit_s: f64, f: impl FnOnce() -> Check) {
        let start = cpu_seconds();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let cpu = cpu_seconds() - start;
        let outcome = match outcome {
            Ok(_) if cpu >= limit_s => Err(format!("took {cpu:.1} s CPU, limit {limit_s} s")),
            o => o,
        };
        let line = match outcome {
            Ok(d) if d.starts_with("skipped") => format!("SKIP {name}: {d}"),
            Ok(d) => format!("PASS {name}: {d} [{cpu:.1} s CPU]"),
            Err(d) => {
                self.failed.push(name);
                format!("FAIL {name}: {d} [{cpu:.1} s CPU]")
            }
        };
        // written to the handle directly so the harness does not capture it
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    }
}

fn white(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// One-sided periodogram by explicit DFT sums.
fn naive_periodogram(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let a = -2.0 * PI * (k * t % n) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            let p = (re * re + im * im) / (fs * n as f64);
            if k == 0 || (n % 2 == 0 && k == n / 2) {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

fn dsp_oracles() -> Check {
    let fs = 254.0;
    let mut worst: f64 = 0.0;
    for (n, seed) in [(254usize, 1u64), (200, 2), (127, 3)] {
        let x = white(n, seed);
        let psd = welch_psd(&x, fs, n, 0.0, Taper::Rectangular).map_err(|e| e.to_string())?;
        for (a, b) in psd.power.iter().zip(naive_periodogram(&x, fs)) {
            worst = worst.max((a - b).abs() / b.abs().max(1e-300));
        }
    }
    ensure(worst <= 1e-10, || format!("single-segment relative error {worst:e}"))?;

    let tone: Vec<f64> = (0..10 * 254).map(|i| (2.0 * PI * 10.0 * i as f64 / fs).sin()).collect();
    let psd = welch_psd(&tone, fs, 254, 0.5, Taper::Hann).map_err(|e| e.to_string())?;
    let alpha = relative_band_power(&psd, &standard_bands(), Denominator::UnionOfBands).map_err(|e| e.to_string())?[0];
    ensure(alpha > 0.95, || format!("10 Hz alpha share {alpha}"))?;

    let noise = white(254 * 200, 4);
    let psd = welch_psd(&noise, fs, 254, 0.5, Taper::Hann).map_err(|e| e.to_string())?;
    let shares = relative_band_power(&psd, &standard_bands(), Denominator::UnionOfBands).map_err(|e| e.to_string())?;
    let mut share_err: f64 = 0.0;
    for (s, w) in shares.iter().zip([5.0, 17.0, 70.0]) {
        share_err = share_err.max((s / (w / 92.0) - 1.0).abs());
    }
    ensure(share_err < 0.10, || format!("white-noise shares {shares:?}"))?;

    let var = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    let parseval = (psd.integrate(0.0, fs / 2.0) / var - 1.0).abs();
    ensure(parseval < 0.05, || format!("Parseval deviation {parseval}"))?;
    Ok(format!(
        "periodogram rel err {worst:.1e}, alpha share {alpha:.4}, band shares within {:.1}%, Parseval within {:.2}%",
        share_err * 100.0,
        parseval * 100.0
    ))
}

fn gradient_check() -> Check {
    let (d, h, t, b, n_classes) = (3, 4, 5, 2, 3);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..4u64 {
        for front in [Front::Lstm { hidden: h }, Front::BiLstm { hidden: h }] {
            for (dropout, mask) in [([0.0, 0.0], None), ([0.3, 0.2], Some(seed + 100))] {
                let spec = NetworkSpec { input_dim: d, front, dense: [5, 4], n_classes, dropout };
                let params: Vec<f64> = init_params(&spec, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
                let data: Vec<f64> = (0..b * t * d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let labels = (0..b).map(|_| rng.random_range(0..n_classes)).collect();
                let batch = SequenceBatch::new(data, b, t, d, labels, n_classes).map_err(|e| e.to_string())?;
                let one_hot = batch.one_hot();
                let objective = |p: &[f64]| -> f64 {
                    let mut r = mask.map(ChaCha8Rng::seed_from_u64);
                    let mode = r.as_mut().map_or(Mode::Eval, Mode::Train);
                    loss(&forward(&spec, p, &batch, mode).unwrap(), &one_hot).unwrap()
                };
                let mut r = mask.map(ChaCha8Rng::seed_from_u64);
                let (_, analytic) = backward(&spec, &params, &batch, r.as_mut().map_or(Mode::Eval, Mode::Train))
                    .map_err(|e| e.to_string())?;
                let mut p = params.clone();
                for i in 0..p.len() {
                    let orig = p[i];
                    p[i] = orig + eps;
                    let up = objective(&p);
                    p[i] = orig - eps;
                    let down = objective(&p);
                    p[i] = orig;
                    let numeric = (up - down) / (2.0 * eps);
                    let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max((analytic[i] - numeric).abs() / denom);
                    checked += 1;
                }
            }
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e} over {checked} parameters"))
}

fn brute_force_scores(t: &[usize], p: &[usize], k: usize) -> (f64, f64, f64, f64) {
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let tp = t.iter().zip(p).filter(|&(&a, &b)| a == c && b == c).count();
        let fp = t.iter().zip(p).filter(|&(&a, &b)| a != c && b == c).count();
        let fneg = t.iter().zip(p).filter(|&(&a, &b)| a == c && b != c).count();
        let (pr, rc) = (div(tp, tp + fp), div(tp, tp + fneg));
        ps += pr;
        rs += rc;
        fs += if pr + rc > 0.0 { 2.0 * pr * rc / (pr + rc) } else { 0.0 };
    }
    let correct = t.iter().zip(p).filter(|(a, b)| a == b).count();
    (div(correct, t.len()), ps / k as f64, rs / k as f64, fs / k as f64)
}

fn metrics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1000 {
        let k = rng.random_range(2..=8);
        let n = rng.random_range(1..=60);
        let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let m = compute_metrics(&t, &p, k).map_err(|e| e.to_string())?;
        let want = brute_force_scores(&t, &p, k);
        ensure((m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1) == want, || {
            format!("case {case}: {m:?} vs {want:?}")
        })?;
        for (r, row) in m.confusion.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let count = t.iter().zip(&p).filter(|&(&a, &b)| a == r && b == c).count();
                ensure(v == count, || format!("case {case}: confusion[{r}][{c}] = {v}, counted {count}"))?;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for k in 2..=10usize {
        let labels: Vec<usize> = (0..7).map(|i| i % k).collect();
        let uniform = vec![vec![1.0 / k as f64; k]; labels.len()];
        let one_hot: Vec<Vec<f64>> =
            labels.iter().map(|&l| (0..k).map(|c| if c == l { 1.0 } else { 0.0 }).collect()).collect();
        worst = worst.max((loss(&uniform, &one_hot).map_err(|e| e.to_string())? - (k as f64).ln()).abs());
        // a network with every weight at zero predicts the uniform distribution
        let spec = NetworkSpec { input_dim: 2, front: Front::BiLstm { hidden: 3 }, dense: [4, 4], n_classes: k, dropout: [0.0, 0.0] };
        let zeros = vec![0.0f64; spec.layout().len];
        let batch = SequenceBatch::new(vec![0.5; 7 * 4 * 2], 7, 4, 2, labels, k).map_err(|e| e.to_string())?;
        let net = loss(&forward(&spec, &zeros, &batch, Mode::Eval).map_err(|e| e.to_string())?, &batch.one_hot())
            .map_err(|e| e.to_string())?;
        worst = worst.max((net - (k as f64).ln()).abs());
    }
    ensure(worst <= 1e-9, || format!("uniform loss deviates from ln(n) by {worst:e}"))?;
    Ok(format!("1000 random cases match exactly; uniform loss within {worst:.1e} of ln(n)"))
}

/// 1-nearest neighbour on a fixed point cloud; seeds are ignored.
struct NearestNeighbour {
    x: Vec<[f64; 2]>,
    y: Vec<usize>,
}

impl Learner for NearestNeighbour {
    type Hyper = f64;

    fn fit_predict(&self, train: &[usize], test: &[usize], shift: &f64, _seed: u64) -> Result<Vec<usize>, BoxError> {
        Ok(test
            .iter()
            .map(|&j| {
                let q = [self.x[j][0] + shift, self.x[j][1]];
                let d = |i: usize| (self.x[i][0] - q[0]).powi(2) + (self.x[i][1] - q[1]).powi(2);
                let best = train.iter().copied().min_by(|&a, &b| d(a).total_cmp(&d(b))).unwrap();
                self.y[best]
            })
            .collect())
    }
}

fn cv_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..200 {
        let n = rng.random_range(8..300);
        let k_classes = rng.random_range(2..5);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k_classes)).collect();
        let stratified = trial % 2 == 0 && (0..k_classes).all(|c| labels.iter().filter(|&&l| l == c).count() >= 4);
        let plan = kfold(n, &labels, 4, stratified, trial).map_err(|e| e.to_string())?;
        let mut seen = vec![0usize; n];
        for f in 0..4 {
            let test = plan.test_indices(f);
            let train = plan.train_indices(f);
            ensure(test.len() + train.len() == n && !test.is_empty(), || format!("fold {f} of trial {trial} does not cover n"))?;
            ensure(test.iter().all(|i| !train.contains(i)), || format!("fold {f} of trial {trial} overlaps"))?;
            test.iter().for_each(|&i| seen[i] += 1);
        }
        ensure(seen.iter().all(|&c| c == 1), || format!("trial {trial}: not a partition"))?;
    }

    let (mut lo, mut hi) = (usize::MAX, 0);
    for n in 950..=1140usize {
        let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let sizes = kfold(n, &labels, 4, true, 0).map_err(|e| e.to_string())?.fold_sizes();
        lo = lo.min(*sizes.iter().min().unwrap());
        hi = hi.max(*sizes.iter().max().unwrap());
    }
    ensure((lo, hi) == (237, 285), || format!("test-fold sizes span {lo}..{hi}"))?;

    let x: Vec<[f64; 2]> = (0..80).map(|i| [(i % 4) as f64 * 3.0 + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let y: Vec<usize> = (0..80).map(|i| i % 4).collect();
    let learner = NearestNeighbour { x, y: y.clone() };
    let task = || CvTask { labels: &y, n_classes: 4, fingerprints: None };
    let config = CvConfig { seed: 5, ..CvConfig::default() };
    let nested = nested_cv(&learner, task(), &[0.7], &config).map_err(|e| e.to_string())?;
    let plain = kfold_cv(&learner, task(), &0.7, &config).map_err(|e| e.to_string())?;
    let plan = kfold(80, &y, 4, true, config.seed).map_err(|e| e.to_string())?;
    for f in 0..4 {
        let direct = learner.fit_predict(&plan.train_indices(f), &plan.test_indices(f), &0.7, 0).unwrap();
        ensure(nested.folds[f].predictions == direct && plain.folds[f].predictions == direct, || {
            format!("fold {f}: singleton-grid nested CV differs from plain k-fold")
        })?;
    }
    ensure(nested.metrics == plain.metrics, || "pooled metrics differ".into())?;

    let dup: Vec<u64> = (0..80u64).map(|i| i % 40).collect();
    let leak = CvTask { labels: &y, n_classes: 4, fingerprints: Some(&dup) };
    let fired = matches!(nested_cv(&learner, leak, &[0.0], &config), Err(EvalError::Leakage { .. }));
    let direct = matches!(check_leakage(0, &[0, 1], &[2, 41], &dup), Err(EvalError::Leakage { .. }));
    let distinct: Vec<u64> = (0..80).collect();
    let clean = CvTask { labels: &y, n_classes: 4, fingerprints: Some(&distinct) };
    let quiet = nested_cv(&learner, clean, &[0.0], &config).is_ok();
    ensure(fired && direct && quiet, || format!("leakage probe fired={fired} direct={direct} clean-ok={quiet}"))?;
    Ok(format!("200 plans partition; fold sizes {lo}..{hi} for n in 950..=1140; singleton grid equals k-fold; leakage probe fires"))
}

fn timed_accuracy(config: &PipelineConfig) -> Result<(f64, f64), String> {
    let start = cpu_seconds();
    let report = evaluate(config).map_err(|e| e.to_string())?;
    Ok((report.accuracy(), cpu_seconds() - start))
}

fn synth_config(name: &str, snr: f64) -> PipelineConfig {
    let mut c = preset(name).expect("preset exists");
    c.dataset = DatasetSource::SynthDefault { snr, seed: 0 };
    c
}

fn end_to_end_bilstm() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut c = synth_config("synth-bilstm", 10.0);
    c.output_dir = dir.path().to_path_buf();
    let start = cpu_seconds();
    let report = run(&c).map_err(|e| e.to_string())?.report;
    let cpu = cpu_seconds() - start;
    let acc = report.accuracy();
    ensure(acc >= 0.9 && cpu < 300.0, || format!("snr=10 accuracy {acc:.4} in {cpu:.0} s CPU"))?;

    let (chance_acc, chance_cpu) = timed_accuracy(&synth_config("synth-bilstm", 0.0))?;
    let sigma = (0.25f64 * 0.75 / 400.0).sqrt();
    let band = (0.25 - 3.0 * sigma, 0.25 + 3.0 * sigma);
    ensure(chance_acc >= band.0 && chance_acc <= band.1, || {
        format!("snr=0 accuracy {chance_acc:.4} outside [{:.3}, {:.3}]", band.0, band.1)
    })?;
    Ok(format!(
        "snr=10 accuracy {acc:.4} in {cpu:.0} s CPU; snr=0 accuracy {chance_acc:.4} in [{:.3}, {:.3}] ({chance_cpu:.0} s CPU)",
        band.0, band.1
    ))
}

fn end_to_end_shallow() -> Check {
    let mut parts = vec![];
    for name in ["synth-gbt", "synth-svm"] {
        let (acc, cpu) = timed_accuracy(&synth_config(name, 10.0))?;
        ensure(acc >= 0.9 && cpu < 60.0, || format!("{name}: accuracy {acc:.4} in {cpu:.1} s CPU"))?;
        parts.push(format!("{name} accuracy {acc:.4} in {cpu:.1} s CPU"));
    }
    Ok(parts.join("; "))
}

fn importance_sanity() -> Check {
    let config = synth_config("synth-gbt", 10.0);
    let prepared = prepare(&config).map_err(|e| e.to_string())?;
    let matrix = prepared.features[0].as_ref().ok_or("no features")?;
    let selected = gain_provenance(matrix, &config.hyper, 0.95).map_err(|e| e.to_string())?;
    let bands = feature_params(&config, 254.0).bands;
    let spec = default_4class_spec(10.0, 0);
    let mut found = vec![];
    for (class, injections) in spec.class_signatures.iter().enumerate() {
        let truth: BTreeSet<(String, String)> = injections
            .iter()
            .flat_map(|inj| {
                bands
                    .iter()
                    .filter(move |b| b.low_hz < inj.high_hz && inj.low_hz < b.high_hz)
                    .map(move |b| (DEFAULT_CHANNELS[inj.channel].to_string(), b.name.clone()))
            })
            .collect();
        let hit: Vec<String> = selected
            .iter()
            .filter_map(|p| match p {
                Provenance::ChannelBand { channel, band, .. } if truth.contains(&(channel.clone(), band.clone())) => {
                    Some(format!("{channel}/{band}"))
                }
                _ => None,
            })
            .collect();
        ensure(!hit.is_empty(), || format!("class {class}: none of {truth:?} among {} selected", selected.len()))?;
        found.push(hit[0].clone());
    }
    Ok(format!("{} features selected; every class represented ({})", selected.len(), found.join(", ")))
}

fn report_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    REPORT_FILES
        .iter()
        .copied()
        .chain(["windows.csv"])
        .filter_map(|f| std::fs::read(dir.join(f)).ok().map(|b| (f.to_string(), b)))
        .collect()
}

fn determinism() -> Check {
    let small = |name: &str| {
        let mut c = preset(name).unwrap();
        let mut spec = default_4class_spec(3.0, 11);
        spec.n_trials_per_class = 16;
        c.dataset = DatasetSource::Synth { spec };
        c.profile = None;
        c.hyper.network = NetworkHyper { hidden: 4, dense: [8, 8], dropout: [0.2, 0.2] };
        c.hyper.train.max_epochs = 3;
        c.hyper.gbt.n_rounds = 20;
        c
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let names = ["synth-svm", "synth-gbt", "lstm-mif", "bilstm-raw-mif", "binary-svm-gain"];
    for name in names {
        let mut outputs = vec![];
        for (k, threads) in [1usize, 2].into_iter().enumerate() {
            let mut c = small(name);
            c.output_dir = dir.path().join(format!("{name}-{k}"));
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
            pool.install(|| run(&c)).map_err(|e| format!("{name}: {e}"))?;
            outputs.push(report_bytes(&c.output_dir));
        }
        ensure(outputs[0].len() >= 4, || format!("{name}: missing report files"))?;
        ensure(outputs[0] == outputs[1], || format!("{name}: reports differ between runs"))?;
    }
    Ok(format!("{} configs reproduce byte-identical reports across runs and thread counts", names.len()))
}

fn subject_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|r| r.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn real_data(var: &str, profile: &str, target: f64, tolerance: f64, need_above: Option<usize>) -> Check {
    let Some(dir) = std::env::var_os(var) else {
        return Ok(format!("skipped (set {var} to a directory of converted subject epoch sets)"));
    };
    let paths = subject_files(Path::new(&dir));
    for p in &paths {
        load_epochset(p).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    let mut c = preset("bilstm-raw-all").unwrap();
    c.profile = Some(profile.into());
    c.dataset = DatasetSource::Files { paths };
    let report = evaluate(&c).map_err(|e| e.to_string())?;
    let accs: Vec<f64> = report.rows().iter().map(|r| r.accuracy).collect();
    let mean = report.accuracy();
    let above = accs.iter().filter(|&&a| a > report.chance_level).count();
    if let Some(k) = need_above {
        ensure(above >= k, || format!("{above} of {} subjects above chance", accs.len()))?;
    }
    ensure((mean - target).abs() <= tolerance, || format!("mean accuracy {mean:.4}, target {target} ± {tolerance}"))?;
    Ok(format!("mean accuracy {mean:.4}; {above} of {} subjects above chance", accs.len()))
}

#[test]
fn acceptance() {
    let mut tally = Tally::default();
    tally.run_within("dsp oracle suite", 10.0, dsp_oracles);
    tally.run_within("gradient verification", 60.0, gradient_check);
    tally.run("metrics oracle", metrics_oracle);
    tally.run("cv properties", cv_properties);
    tally.run("end-to-end synthetic: bilstm raw_all", end_to_end_bilstm);
    tally.run("end-to-end synthetic: gbt and svm on psd features", end_to_end_shallow);
    tally.run("importance sanity", importance_sanity);
    tally.run("determinism", determinism);
    tally.run("real data: thinking out loud", || real_data("INNERSPEECH_TOL_DATA", "thinking-out-loud", 0.361, 0.07, Some(9)));
    tally.run("real data: imagined speech words", || real_data("INNERSPEECH_IS_DATA", "imagined-speech", 0.251, 0.05, None));
    assert!(tally.failed.is_empty(), "failed criteria: {:?}", tally.failed);
}
