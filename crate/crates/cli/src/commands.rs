use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use histoseg::kde::{em_fit_observed, write_em_trace, EmTraceRow};
use histoseg::porosity::{
    combined_histogram, estimate_porosity, generate_phantom, load_stack, porosity_histogram, write_stack, Method, PhantomConfig,
    PorosityOptions, PorosityReport,
};
use histoseg::scalespace::write_walk_trace;
use histoseg::synthetic::{run_validation, ValidationConfig};
use histoseg::{detect_thresholds_with, DetectConfig, Direction, EmConfig, EmFit, Histogram, KdeModel, VarianceRule};
use log::{info, warn};
use serde::Serialize;

use crate::args::{EmArgs, KdeArgs, PhantomArgs, PorosityArgs, ThresholdArgs, ValidateArgs};
use crate::exit::Failure;
use crate::plot::{linspace, Figure, Series};

type CmdResult = Result<(), Failure>;

fn em_config(a: &EmArgs) -> EmConfig<f64> {
    EmConfig {
        delta: a.delta,
        max_iterations: a.max_iterations,
        update_variance: !a.fixed_variance,
        variance_rule: a.variance_rule.into(),
        ..EmConfig::default()
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::io(format!("I/O error on {}: {e}", path.display()))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_plot(fig: &Figure, path: &Path) {
    if let Err(e) = fig.write(path) {
        warn!("plot not written to {}: {e}", path.display());
    }
}

struct Fitted {
    hist: Histogram<f64>,
    input_mass: Option<f64>,
    fit: EmFit<f64>,
    trace: Vec<EmTraceRow<f64>>,
}

fn fit_histogram(input: &Path, em: &EmArgs, trace: bool) -> Result<Fitted, Failure> {
    let (hist, input_mass) = Histogram::<f64>::read_csv_checked(input)?;
    let mut rows = Vec::new();
    let fit = em_fit_observed(&hist, &em_config(em), |it| {
        if trace {
            rows.push(EmTraceRow { iteration: it.iteration, residual: it.residual, sigma2: it.variance });
        }
    })?;
    if !fit.converged {
        warn!("EM stopped after {} iterations without reaching delta (residual {:e})", fit.iterations, fit.residual);
    }
    info!("EM: {} iterations, sigma2 = {:e}, fit error {:e}", fit.iterations, fit.model.variance(), fit.fit_error);
    Ok(Fitted { hist, input_mass, fit, trace: rows })
}

#[derive(Serialize)]
struct KdeMeta {
    bins: usize,
    dt: f64,
    sigma2: f64,
    iterations: usize,
    converged: bool,
    residual: f64,
    fit_error: f64,
    delta: f64,
    variance_rule: VarianceRule,
    update_variance: bool,
    /// Mass of the input before renormalization, if it was not 1.
    input_mass: Option<f64>,
}

pub fn kde(a: &KdeArgs) -> CmdResult {
    let meta_path = a.output.with_extension("json");
    if meta_path == a.output {
        return Err(Failure::usage("model output must not have a .json extension; the metadata sidecar uses it"));
    }
    let Fitted { hist, input_mass, fit, trace } = fit_histogram(&a.input, &a.em, a.trace.is_some())?;
    let m = &fit.model;
    let write_model = || -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(&a.output)?;
        w.write_record(["t", "beta"])?;
        for (t, b) in m.centers().iter().zip(m.weights()) {
            w.write_record([format!("{t:?}"), format!("{b:?}")])?;
        }
        w.flush()
    };
    write_model().map_err(|e| io_failure(&a.output, e))?;
    write_json(
        &meta_path,
        &KdeMeta {
            bins: hist.len(),
            dt: hist.dt(),
            sigma2: m.variance(),
            iterations: fit.iterations,
            converged: fit.converged,
            residual: fit.residual,
            fit_error: fit.fit_error,
            delta: a.em.delta,
            variance_rule: a.em.variance_rule.into(),
            update_variance: !a.em.fixed_variance,
            input_mass,
        },
    )?;
    if let Some(p) = &a.trace {
        write_em_trace(&trace, p)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ThresholdOutput {
    classes: usize,
    thresholds: Vec<f64>,
    scale_offset: f64,
    direction: Direction,
    steps: usize,
    refined: bool,
    base_minima: usize,
    sigma2: f64,
    em_iterations: usize,
    em_converged: bool,
    bins: usize,
    dt: f64,
}

fn model_curve(model: &KdeModel<f64>, xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| model.evaluate(x)).collect()
}

pub fn threshold(a: &ThresholdArgs) -> CmdResult {
    let Fitted { hist, fit, .. } = fit_histogram(&a.input, &a.em, false)?;
    let cfg = DetectConfig { max_steps: a.max_steps, ..DetectConfig::new(a.classes, a.dsigma2) };
    let mut walk = Vec::new();
    let result = detect_thresholds_with(&fit.model, &cfg, |row| walk.push(row));
    if let Some(p) = &a.trace {
        write_walk_trace(&walk, p)?;
    }
    let r = result?;
    info!("{:?} walk: offset {:e} after {} steps", r.direction, r.scale_offset, r.steps);
    write_json(
        &a.output,
        &ThresholdOutput {
            classes: a.classes,
            thresholds: r.thresholds.clone(),
            scale_offset: r.scale_offset,
            direction: r.direction,
            steps: r.steps,
            refined: r.refined,
            base_minima: r.base_minima,
            sigma2: fit.model.variance(),
            em_iterations: fit.iterations,
            em_converged: fit.converged,
            bins: hist.len(),
            dt: hist.dt(),
        },
    )?;
    if let Some(p) = &a.plot {
        let xs = linspace(hist.lo(), hist.hi(), 1200);
        let mut series = vec![
            Series::Bars { t: hist.t().to_vec(), h: hist.h().to_vec(), dt: hist.dt(), color: "#9aa5b1" },
            Series::Line { xs: xs.clone(), ys: model_curve(&fit.model, &xs), color: "#1f5fa8", dashed: false, label: "KD".into() },
        ];
        if r.scale_offset != 0.0 {
            if let Ok(scaled) = fit.model.at_scale(r.scale_offset) {
                series.push(Series::Line {
                    ys: model_curve(&scaled, &xs),
                    xs,
                    color: "#c2410c",
                    dashed: true,
                    label: format!("KD, offset {:.4}", r.scale_offset),
                });
            }
        }
        for (k, &t) in r.thresholds.iter().enumerate() {
            series.push(Series::Marker { x: t, color: "gray", label: format!("τ{} = {t:.4}", k + 1) });
        }
        let title = format!("{} classes", a.classes);
        write_plot(&Figure { title, x_label: "t".into(), series }, p);
    }
    Ok(())
}

pub fn validate(a: &ValidateArgs) -> CmdResult {
    let cfg = ValidationConfig {
        samples_per_case: a.samples,
        dsigma2: a.dsigma2,
        max_steps: a.max_steps,
        em: em_config(&a.em),
        ..ValidationConfig::new(a.cases, a.bins, a.seed)
    };
    let report = run_validation(&cfg)?;
    let s = &report.summary;
    info!(
        "{} evaluated, {} degenerate, {} failed; deviation fraction {:.4}",
        s.n_evaluated, s.n_degenerate, s.n_failed, s.deviation_fraction
    );
    create_dir(&a.out_dir)?;
    let summary = a.out_dir.join("summary.json");
    let mut text = report.summary_json();
    text.push('\n');
    fs::write(&summary, text).map_err(|e| io_failure(&summary, e))?;
    report.write_cases_csv(a.out_dir.join("cases.csv"))?;
    Ok(())
}

fn stack_paths(pattern: &str) -> Result<Vec<PathBuf>, Failure> {
    let entries = glob::glob(pattern).map_err(|e| Failure::usage(format!("invalid glob {pattern:?}: {e}")))?;
    let mut paths = Vec::new();
    for entry in entries {
        paths.push(entry.map_err(|e| Failure::io(format!("cannot read {}: {}", e.path().display(), e.error())))?);
    }
    if paths.is_empty() {
        return Err(Failure::io(format!("no files match {pattern:?}")));
    }
    paths.sort();
    Ok(paths)
}

#[derive(Serialize)]
struct StackInfo {
    files: usize,
    width: usize,
    height: usize,
    slices: usize,
    maxval: u16,
}

#[derive(Serialize)]
struct PorosityOutput<'a> {
    #[serde(flatten)]
    report: &'a PorosityReport<f64>,
    stack: StackInfo,
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::KdeScaleSpace => "kde-scale-space",
        Method::Kmeans => "kmeans",
    }
}

fn write_comparison(path: &Path, rows: &[(Method, Result<PorosityReport<f64>, String>)]) -> CmdResult {
    let run = || -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["method", "tau1", "tau2", "t_v", "t_s", "mean_porosity", "error"])?;
        for (m, r) in rows {
            let name = method_name(*m).to_string();
            match r {
                Ok(r) => w.write_record([
                    name,
                    format!("{:?}", r.tau1),
                    format!("{:?}", r.tau2),
                    format!("{:?}", r.t_v),
                    format!("{:?}", r.t_s),
                    format!("{:?}", r.mean_porosity),
                    String::new(),
                ])?,
                Err(e) => w.write_record([name, String::new(), String::new(), String::new(), String::new(), String::new(), e.clone()])?,
            }
        }
        w.flush()
    };
    run().map_err(|e| io_failure(path, e))
}

pub fn porosity(a: &PorosityArgs) -> CmdResult {
    let paths = stack_paths(&a.stack)?;
    let stack = load_stack(&paths)?;
    let bins = a.bins.unwrap_or_else(|| 1024.min(stack.maxval() as usize + 1));
    let hist: Histogram<f64> = combined_histogram(&stack, bins)?;
    let opts = PorosityOptions { em: em_config(&a.em), dsigma2: a.dsigma2, max_steps: a.max_steps, ..PorosityOptions::default() };
    let method: Method = a.method.into();
    let report = estimate_porosity(&hist, method, &opts)?;
    let other = match method {
        Method::KdeScaleSpace => Method::Kmeans,
        Method::Kmeans => Method::KdeScaleSpace,
    };
    let other_report = estimate_porosity(&hist, other, &opts).map_err(|e| {
        warn!("{} comparison failed: {e}", method_name(other));
        e.to_string()
    });
    info!("mean porosity {:.4} ({})", report.mean_porosity, method_name(method));

    create_dir(&a.out_dir)?;
    write_json(
        &a.out_dir.join("porosity.json"),
        &PorosityOutput {
            report: &report,
            stack: StackInfo {
                files: paths.len(),
                width: stack.width(),
                height: stack.height(),
                slices: stack.len(),
                maxval: stack.maxval(),
            },
        },
    )?;
    let phi = porosity_histogram(&hist, report.t_v, report.t_s, a.porosity_bins)?;
    phi.write_csv(a.out_dir.join("porosity_histogram.csv"))?;
    write_comparison(&a.out_dir.join("comparison.csv"), &[(method, Ok(report.clone())), (other, other_report)])?;

    if let Some(p) = &a.plot {
        let series = vec![
            Series::Bars { t: hist.t().to_vec(), h: hist.h().to_vec(), dt: hist.dt(), color: "#9aa5b1" },
            Series::Marker { x: report.tau1, color: "gray", label: format!("τ1 = {:.1}", report.tau1) },
            Series::Marker { x: report.tau2, color: "gray", label: format!("τ2 = {:.1}", report.tau2) },
            Series::Marker { x: report.t_v, color: "#1f5fa8", label: format!("t_v = {:.1}", report.t_v) },
            Series::Marker { x: report.t_s, color: "#c2410c", label: format!("t_s = {:.1}", report.t_s) },
        ];
        let title = format!("{}: mean porosity {:.4}", method_name(method), report.mean_porosity);
        write_plot(&Figure { title, x_label: "intensity".into(), series }, p);
    }
    Ok(())
}

#[derive(Serialize)]
struct PhantomOutput<'a> {
    ground_truth_porosity: f64,
    files: Vec<String>,
    config: &'a PhantomConfig,
}

pub fn phantom(a: &PhantomArgs) -> CmdResult {
    let cfg = PhantomConfig {
        maxval: a.maxval,
        block: a.block,
        ..PhantomConfig::new(
            a.width,
            a.height,
            a.slices,
            [a.fractions[0], a.fractions[1], a.fractions[2]],
            [a.means[0], a.means[1], a.means[2]],
            a.noise,
            a.seed,
        )
    };
    let (stack, truth) = generate_phantom(&cfg)?;
    create_dir(&a.out_dir)?;
    let files = write_stack(&stack, &a.out_dir, &a.prefix)?;
    let names = files.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()).collect();
    write_json(&a.out_dir.join("truth.json"), &PhantomOutput { ground_truth_porosity: truth, files: names, config: &cfg })?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{truth}");
    Ok(())
}
