//! Acceptance criteria for the histoseg workspace, each returning a measured outcome.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use histoseg::kde::{em_fit_observed, EmIteration};
use histoseg::numerics::linear_convolve;
use histoseg::porosity::{combined_histogram, estimate_porosity, generate_phantom, Method, PhantomConfig, PorosityOptions};
use histoseg::scalespace::MinimaScanner;
use histoseg::synthetic::{run_validation, GaussianMixtureTruth, ValidationConfig, ValidationReport};
use histoseg::{detect_thresholds, em_fit, local_minima, EmConfig, Histogram, KdeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VALIDATION_CASES: usize = 200;
const VALIDATION_SEED: u64 = 2024;
const STEP: f64 = 0.01;

pub type Criterion = (&'static str, fn() -> Outcome);

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn gauss(t: f64, m: f64, v: f64) -> f64 {
    (-(t - m) * (t - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

fn validation(bins: usize) -> &'static ValidationReport {
    static FINE: OnceLock<ValidationReport> = OnceLock::new();
    static COARSE: OnceLock<ValidationReport> = OnceLock::new();
    let cell = if bins == 1000 { &FINE } else { &COARSE };
    cell.get_or_init(|| run_validation(&ValidationConfig::new(VALIDATION_CASES, bins, VALIDATION_SEED)).expect("validation runs"))
}

fn describe(r: &ValidationReport) -> String {
    let s = &r.summary;
    format!(
        "deviation fraction {:.4} ({}/{} thresholds; {} evaluated, {} degenerate, {} failed; base minima over/under/exact {}/{}/{})",
        s.deviation_fraction,
        s.n_deviating,
        s.n_thresholds,
        s.n_evaluated,
        s.n_degenerate,
        s.n_failed,
        s.over_resolved,
        s.under_resolved,
        s.exact_resolved
    )
}

fn validation_rate() -> Outcome {
    let r = validation(1000);
    outcome(r.summary.deviation_fraction <= 0.25, format!("1000 bins: {} (bound 0.25)", describe(r)))
}

fn resolution_trend() -> Outcome {
    let fine = validation(1000).summary.deviation_fraction;
    let coarse = validation(100);
    outcome(coarse.summary.deviation_fraction >= fine, format!("100 bins: {}; 1000 bins {fine:.4}", describe(coarse)))
}

/// Three Gaussians with mean gaps of at least four standard deviations.
fn separated_truth(seed: u64) -> GaussianMixtureTruth {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma: Vec<f64> = (0..3).map(|_| rng.gen_range(0.7..1.0)).collect();
    let mut alpha: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..0.5)).collect();
    let total: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|a| *a /= total);
    let mut mu = vec![0.0];
    for k in 0..2 {
        let gap = rng.gen_range(4.0..6.0) * sigma[k].max(sigma[k + 1]);
        mu.push(mu[k] + gap);
    }
    GaussianMixtureTruth::new(alpha, mu, sigma.iter().map(|s| s * s).collect()).unwrap()
}

fn threshold_accuracy() -> Outcome {
    let mut hits = 0;
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for seed in 0..25u64 {
        let g = separated_truth(seed);
        let (lo, hi) = (g.mu[0] - 6.0 * g.sigma2[0].sqrt(), g.mu[2] + 6.0 * g.sigma2[2].sqrt());
        let hist = g.density_histogram(lo, hi, 200).unwrap();
        let truth = g.truth_thresholds().unwrap();
        let fit = em_fit(&hist, &EmConfig::default()).unwrap();
        match detect_thresholds(&fit.model, 3, STEP, 10_000) {
            Ok(r) => {
                let dev = r.thresholds.iter().zip(&truth).map(|(p, t)| (p - t).abs() / hist.dt()).fold(0.0, f64::max);
                worst = worst.max(dev);
                if dev <= 2.0 {
                    hits += 1;
                } else {
                    failures.push(format!("seed {seed}: {dev:.2} dt"));
                }
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    outcome(hits == 25, format!("{hits}/25 within 2 dt, worst {worst:.3} dt {failures:?}"))
}

fn unimodal_split() -> Outcome {
    let g = GaussianMixtureTruth::new(vec![0.5, 0.5], vec![-0.6, 0.6], vec![1.0, 1.0]).unwrap();
    let hist = g.density_histogram(-6.0, 6.0, 100).unwrap();
    let fit = em_fit(&hist, &EmConfig::default()).unwrap();
    let base = local_minima(&fit.model, 10, hist.dt() * 1e-6).unwrap().len();
    match detect_thresholds(&fit.model, 2, STEP, 10_000) {
        Ok(r) => {
            let tau = r.thresholds[0];
            let scaled = fit.model.at_scale(r.scale_offset).unwrap();
            let mut best = (f64::INFINITY, 0.0);
            for i in 0..=200_000 {
                let t = tau - 0.5 + i as f64 * 1e-6 * 5.0;
                let v = scaled.evaluate(t);
                if v < best.0 {
                    best = (v, t);
                }
            }
            let ok = tau.abs() <= 0.05 && (best.1 - tau).abs() <= 1e-5;
            outcome(ok, format!("threshold {tau:.6} at offset {:.5}, dense-grid minimum {:.6}", r.scale_offset, best.1))
        }
        Err(e) => outcome(false, format!("sigma2 {:.4}, {base} minima at base scale: {e}", fit.model.variance())),
    }
}

fn em_correctness() -> Outcome {
    let mut worst_rise = f64::NEG_INFINITY;
    for seed in 0..10u64 {
        let g = GaussianMixtureTruth::new(vec![0.3, 0.7], vec![-2.0, 1.5], vec![0.6, 1.2]).unwrap();
        let hist = Histogram::from_samples(&g.draw_samples(20_000, seed), -8.0, 8.0, 160).unwrap();
        let cfg = EmConfig { update_variance: false, max_iterations: 500, ..EmConfig::default() };
        let mut kl = Vec::new();
        em_fit_observed(&hist, &cfg, |it: &EmIteration<'_, f64>| kl.push(it.kl())).unwrap();
        for w in kl.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    let (lo, dt, n) = (-6.0, 0.1, 121);
    let w: Vec<f64> = (0..n).map(|i| gauss(lo + i as f64 * dt, -1.0, 0.7) + 0.5 * gauss(lo + i as f64 * dt, 2.0, 0.3)).collect();
    let m = KdeModel::new(lo, dt, w, 0.15).unwrap();
    let shifted = m.at_scale(0.4).unwrap();
    let (fine, half) = (0.005, 2400usize);
    let x = |i: usize| (i as f64 - half as f64) * fine;
    let base: Vec<f64> = (0..=2 * half).map(|i| m.evaluate(x(i))).collect();
    let kernel: Vec<f64> = (0..=2 * half).map(|i| gauss(x(i), 0.0, 0.4) * fine).collect();
    let conv = linear_convolve(&base, &kernel, half).unwrap();
    let semigroup = (0..=2 * half).filter(|&i| x(i).abs() < 8.0).map(|i| (conv[i] - shifted.evaluate(x(i))).abs()).fold(0.0, f64::max);
    outcome(
        worst_rise <= 1e-10 && semigroup <= 1e-6,
        format!("largest KL increase {worst_rise:.3e} (bound 1e-10), semigroup error {semigroup:.3e} (bound 1e-6)"),
    )
}

fn causality() -> Outcome {
    let mut violations = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu: Vec<f64> = vec![rng.gen_range(-5.0..-2.0), rng.gen_range(-1.0..1.0), rng.gen_range(2.0..5.0)];
        let g = GaussianMixtureTruth::new(vec![0.3, 0.4, 0.3], mu, vec![0.8, 1.0, 0.6]).unwrap();
        let hist = Histogram::from_samples(&g.draw_samples(5000, seed), -10.0, 10.0, 100).unwrap();
        let fit = em_fit(&hist, &EmConfig { max_iterations: 2000, ..EmConfig::default() }).unwrap();
        let scanner = MinimaScanner::with_defaults(&fit.model).unwrap();
        let lowest = -0.9 * fit.model.variance();
        let counts: Vec<usize> = (0..20).map(|i| scanner.minima_at(lowest + (3.0 - lowest) * i as f64 / 19.0).unwrap().len()).collect();
        violations += counts.windows(2).filter(|w| w[1] > w[0]).count();
    }
    outcome(violations == 0, format!("{violations} violations over 10 models x 20 offsets"))
}

fn bin_width_robustness() -> Outcome {
    let g = GaussianMixtureTruth::new(vec![0.3, 0.4, 0.3], vec![-4.0, 0.0, 4.0], vec![1.0, 1.0, 1.0]).unwrap();
    let xs = g.draw_samples(100_000, 1);
    let mut th = Vec::new();
    for bins in [100, 1000] {
        let hist = Histogram::from_samples(&xs, -10.0, 10.0, bins).unwrap();
        let fit = em_fit(&hist, &EmConfig::default()).unwrap();
        match detect_thresholds(&fit.model, 3, STEP, 10_000) {
            Ok(r) => th.push(r.thresholds),
            Err(e) => return outcome(false, format!("{bins} bins: {e}")),
        }
    }
    let diff = th[0].iter().zip(&th[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    outcome(diff <= 0.4, format!("100 bins {:?}, 1000 bins {:?}, max difference {diff:.4} (bound 0.4)", th[0], th[1]))
}

fn porosity_pipeline() -> Outcome {
    let cfg = PhantomConfig::new(128, 128, 8, [0.2, 0.5, 0.3], [60.0, 120.0, 180.0], 12.0, 7);
    let (stack, truth) = generate_phantom(&cfg).unwrap();
    let hist: Histogram<f64> = combined_histogram(&stack, 256).unwrap();
    let opts = PorosityOptions::default();
    let kde = estimate_porosity(&hist, Method::KdeScaleSpace, &opts);
    let km = estimate_porosity(&hist, Method::Kmeans, &opts);
    let km_text = match &km {
        Ok(r) => format!("{:.4}", r.mean_porosity),
        Err(e) => e.to_string(),
    };
    match kde {
        Ok(r) => {
            let rel = (r.mean_porosity - truth).abs() / truth;
            outcome(rel <= 0.05, format!("truth {truth:.4}, kde {:.4} ({:.2}% off), kmeans {km_text}", r.mean_porosity, 100.0 * rel))
        }
        Err(e) => outcome(false, format!("kde failed: {e}; kmeans {km_text}")),
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut conv_err = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..=512);
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = rng.gen_range(0..n);
        let fast = linear_convolve(&s, &k, c).unwrap();
        for (i, &f) in fast.iter().enumerate() {
            let direct: f64 = (0..n)
                .filter_map(|j| {
                    let idx = i as isize - j as isize + c as isize;
                    (idx >= 0 && (idx as usize) < n).then(|| s[j] * k[idx as usize])
                })
                .sum();
            conv_err = conv_err.max((f - direct).abs());
        }
    }

    let mut minima_err = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu: Vec<f64> = (0..rng.gen_range(2..5)).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (lo, dt) = (-8.0, 0.08);
        let w: Vec<f64> = (0..201).map(|i| mu.iter().map(|&m| gauss(lo + i as f64 * dt, m, 0.2)).sum()).collect();
        let model = KdeModel::new(lo, dt, w, rng.gen_range(0.05..0.3)).unwrap();
        for &p in &local_minima(&model, 10, dt * 1e-6).unwrap().positions {
            let mut best = (f64::INFINITY, p);
            for i in 0..=400_000 {
                let t = p - 0.2 + i as f64 * 1e-6;
                let v = model.evaluate(t);
                if v < best.0 {
                    best = (v, t);
                }
            }
            minima_err = minima_err.max((best.1 - p).abs());
        }
    }

    let w: Vec<f64> = (0..80).map(|_| rng.gen_range(0.0..1.0)).collect();
    let m = KdeModel::new(-4.0, 0.1, w, 0.09).unwrap();
    let h = 1e-6 * m.variance().sqrt();
    let mut deriv_err = 0.0f64;
    for _ in 0..100 {
        let t = rng.gen_range(-4.0..3.9);
        let fd1 = (m.evaluate(t + h) - m.evaluate(t - h)) / (2.0 * h);
        let fd2 = (m.derivative1(t + h) - m.derivative1(t - h)) / (2.0 * h);
        deriv_err = deriv_err
            .max((fd1 - m.derivative1(t)).abs() / m.derivative1(t).abs().max(1e-2))
            .max((fd2 - m.derivative2(t)).abs() / m.derivative2(t).abs().max(1e-2));
    }
    outcome(
        conv_err <= 1e-10 && minima_err <= 1e-5 && deriv_err <= 1e-5,
        format!("convolution {conv_err:.2e}, minima {minima_err:.2e}, derivatives {deriv_err:.2e} relative"),
    )
}

/// The `histoseg` binary from the same target directory, built on demand.
fn cli_binary() -> Result<PathBuf, String> {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let dir = exe.parent().and_then(|d| d.parent()).ok_or("test executable has no target directory")?;
    let bin = dir.join(format!("histoseg{}", std::env::consts::EXE_SUFFIX));
    if !bin.exists() {
        let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
        let status = Command::new(cargo).args(["build", "-p", "histoseg-cli"]).status().map_err(|e| e.to_string())?;
        if !status.success() || !bin.exists() {
            return Err(format!("cannot build {}", bin.display()));
        }
    }
    Ok(bin)
}

fn run_cli(bin: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(bin).env_remove("HISTOSEG_THREADS").env("RUST_LOG", "error").args(args).output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr).trim()))
    }
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "csv")))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn cli_determinism() -> Outcome {
    let bin = match cli_binary() {
        Ok(b) => b,
        Err(e) => return outcome(false, e),
    };
    let run_cli = |args: &[&str]| run_cli(&bin, args);
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let g = GaussianMixtureTruth::new(vec![0.3, 0.4, 0.3], vec![-4.0, 0.0, 4.0], vec![1.0, 1.0, 1.0]).unwrap();
    let hist = root.join("hist.csv");
    Histogram::from_samples(&g.draw_samples(20_000, 3), -10.0, 10.0, 100).unwrap().write_csv(&hist).unwrap();
    let h = hist.to_str().unwrap();

    let mut compared = 0;
    let mut mismatched = Vec::new();
    for command in ["kde", "threshold", "validate", "porosity", "phantom"] {
        let mut runs = Vec::new();
        for run in 0..2 {
            let dir = root.join(format!("{command}{run}"));
            std::fs::create_dir_all(&dir).unwrap();
            let d = dir.to_str().unwrap().to_string();
            let result = match command {
                "kde" => run_cli(&["kde", h, "-o", &format!("{d}/model.csv"), "--trace", &format!("{d}/em.csv")]),
                "threshold" => run_cli(&["threshold", h, "-c", "3", "-o", &format!("{d}/th.json"), "--trace", &format!("{d}/walk.csv")]),
                "validate" => run_cli(&["validate", "--cases", "8", "--bins", "200", "--seed", "9", "-o", &d]),
                "porosity" => {
                    run_cli(&["phantom", "-o", &format!("{d}/stack"), "--width", "64", "--height", "64", "--slices", "3", "--seed", "4"])
                        .and_then(|_| run_cli(&["porosity", &format!("{d}/stack/*.pgm"), "-o", &d]))
                }
                _ => run_cli(&["phantom", "-o", &d, "--seed", "12", "--slices", "2"]),
            };
            if let Err(e) = result {
                return outcome(false, e);
            }
            runs.push(read_outputs(&dir));
        }
        compared += runs[0].len();
        if runs[0] != runs[1] || runs[0].is_empty() {
            mismatched.push(command);
        }
    }
    outcome(mismatched.is_empty(), format!("{compared} output files compared across 5 subcommands, mismatches {mismatched:?}"))
}

pub fn criteria() -> [Criterion; 10] {
    [
        ("synthetic validation rate", validation_rate),
        ("resolution trend", resolution_trend),
        ("threshold accuracy oracle", threshold_accuracy),
        ("unimodal splitting", unimodal_split),
        ("EM-KDE correctness", em_correctness),
        ("scale-space causality", causality),
        ("bin-width robustness", bin_width_robustness),
        ("porosity pipeline", porosity_pipeline),
        ("oracle equivalence", oracle_equivalence),
        ("CLI determinism", cli_determinism),
    ]
}
