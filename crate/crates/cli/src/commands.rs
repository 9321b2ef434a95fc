use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use pyrcert::certificates::{monitor_invariants, Certificate};
use pyrcert::gradients::TrainOutcome;
use pyrcert::initializers::{initialize, sphere_data, tune_gain};
use pyrcert::io::{
    fmt_real, load_params, log_to_csv, save_params, write_json, write_matrix_csv, write_string, DatasetBundle,
    TrainSummary,
};
use pyrcert::lambda_star::{
    gram_hermite, gram_mc, kr_min_singular, GramEstimate, GramSummary, HermiteSpec, Nonlinearity,
};
use pyrcert::{certify as certify_params, train as run_gd, Dataset, Params, Shape, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format, Method, SweepCommand};

fn prepare_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("config.json"), cfg)?;
    Ok(())
}

struct Start {
    data: Dataset,
    shape: Shape,
    params: Params,
    cert: Certificate,
    /// Gain actually used and the number of draws it took.
    tuned: Option<(f64, usize)>,
}

fn start(cfg: &ExperimentConfig) -> Result<Start> {
    let (data, shape) = cfg.dataset()?;
    let act = &cfg.activation;
    if let Some(path) = &cfg.params {
        let params = load_params(path)?;
        params.check_shape(&shape)?;
        let cert = certify_params(&params, &data, act)?;
        return Ok(Start {
            data,
            shape,
            params,
            cert,
            tuned: None,
        });
    }
    let init = cfg.init_config();
    if cfg.tunes() {
        if let Some(t) = tune_gain(&shape, &data, act, &init, cfg.tune_attempts)? {
            return Ok(Start {
                data,
                shape,
                params: t.params,
                cert: t.certificate,
                tuned: Some((t.c, t.attempts)),
            });
        }
        log::warn!(
            "no gain among {} doublings of c = {} satisfies both initial conditions",
            cfg.tune_attempts,
            init.c
        );
    }
    let params = initialize(&shape, &data, &init)?;
    let cert = certify_params(&params, &data, act)?;
    Ok(Start {
        data,
        shape,
        params,
        cert,
        tuned: None,
    })
}

fn write_start(dir: &Path, s: &Start) -> Result<()> {
    write_json(&dir.join("certificate.json"), &s.cert)?;
    save_params(&dir.join("params0.json"), &s.params)?;
    write_json(
        &dir.join("data.json"),
        &DatasetBundle::from_dataset(&s.data, Some(&s.shape)),
    )?;
    Ok(())
}

fn describe(s: &Start) -> String {
    let c = &s.cert;
    let mut out = String::new();
    let mut line = |l: String| {
        out.push_str(&l);
        out.push('\n');
    };
    line(format!(
        "network: d = {}, widths {:?}, N = {}, gamma = {}, beta = {}",
        s.shape.input_dim(),
        s.shape.widths(),
        c.n_samples,
        c.gamma,
        c.beta
    ));
    if let Some((gain, attempts)) = s.tuned {
        line(format!("gain c = {gain} (found after {attempts} draws)"));
    }
    line(format!("λ_F = {}, Phi(theta_0) = {}", c.lambda_f, c.phi0));
    line(format!(
        "alpha_0 = {:e}, Q_0 = {:e}, Q_1 = {:e}, eta_max = {}",
        c.alpha0,
        c.q0,
        c.q1,
        c.eta_max.map_or("none".into(), |e| format!("{e:e}"))
    ));
    for (name, a) in [
        ("first initial condition", &c.assumption_eq8),
        ("second initial condition", &c.assumption_eq9),
    ] {
        line(format!(
            "{name}: {} (lhs {:e}, rhs {:e}, slack {}){}",
            if a.holds { "holds" } else { "fails" },
            a.lhs,
            a.rhs,
            a.slack,
            a.reason.as_ref().map_or(String::new(), |r| format!(": {r}"))
        ));
    }
    for n in &c.notes {
        line(format!("note: {n}"));
    }
    line(format!("certificate: {}", if c.holds() { "HOLDS" } else { "FAILED" }));
    out
}

pub fn certify(cfg: &ExperimentConfig) -> Result<bool> {
    let dir = cfg.out_dir();
    prepare_dir(cfg, &dir)?;
    let s = start(cfg)?;
    write_start(&dir, &s)?;
    print!("{}", describe(&s));
    println!("wrote {}", dir.join("certificate.json").display());
    Ok(s.cert.holds())
}

/// Compact result of one training run, also used as a sweep entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub c: Option<f64>,
    pub certificate_holds: bool,
    pub trained: bool,
    #[serde(default)]
    pub summary: Option<TrainSummary>,
    #[serde(default)]
    pub first_violation: Option<u64>,
    #[serde(default)]
    pub distance_violations: Option<u64>,
}

impl TrainReport {
    fn success(&self) -> bool {
        self.certificate_holds
            && self.trained
            && !matches!(
                self.summary.as_ref().map(|s| &s.outcome),
                Some(TrainOutcome::Diverged { .. })
            )
    }
}

fn train_in(cfg: &ExperimentConfig, dir: &Path, verbose: bool) -> Result<TrainReport> {
    prepare_dir(cfg, dir)?;
    let s = start(cfg)?;
    write_start(dir, &s)?;
    if verbose {
        print!("{}", describe(&s));
    }
    let mut report = TrainReport {
        seed: cfg.seed,
        c: s.tuned.map(|t| t.0),
        certificate_holds: s.cert.holds(),
        trained: false,
        summary: None,
        first_violation: None,
        distance_violations: None,
    };
    let Some(eta) = cfg.train.eta.or_else(|| s.cert.default_eta()) else {
        if verbose {
            println!("no certified step size; pass --eta to train anyway");
        }
        write_json(&dir.join("summary.json"), &report)?;
        return Ok(report);
    };
    let mut tc = TrainConfig::new(eta, cfg.train.max_steps, cfg.train.stop_loss);
    tc.log_every = cfg.train.log_every;
    let log = run_gd(&s.params, &s.data, &cfg.activation, &tc, Some(&s.cert))?;
    let inv = monitor_invariants(&log, &s.cert);
    match cfg.format {
        Format::Csv => write_string(&dir.join("train_log.csv"), &log_to_csv(&log.records, s.shape.depth())?)?,
        Format::Json => write_json(&dir.join("train_log.json"), &log.records)?,
    }
    save_params(&dir.join("params_final.json"), &log.final_params)?;
    let summary = TrainSummary::from_log(&log, eta);
    report.trained = true;
    report.first_violation = inv.first_violation;
    report.distance_violations = inv.distance_violations;
    if verbose {
        println!(
            "trained {} steps at eta = {eta:e}: loss {} -> {} ({:?})",
            summary.steps, summary.initial_loss, summary.final_loss, summary.outcome
        );
        println!(
            "invariant violations [{}] = {:?}",
            inv.flag_names.join(", "),
            summary.tally.violations
        );
    }
    report.summary = Some(summary);
    write_json(&dir.join("summary.json"), &report)?;
    Ok(report)
}

pub fn train(cfg: &ExperimentConfig) -> Result<bool> {
    let dir = cfg.out_dir();
    let report = train_in(cfg, &dir, true)?;
    println!("wrote {}", dir.display());
    Ok(report.success())
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepReport {
    command: SweepCommand,
    entries: Vec<TrainReport>,
    total_violations: u64,
    certified: usize,
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<bool> {
    let dir = cfg.out_dir();
    prepare_dir(cfg, &dir)?;
    let grid: Vec<(u64, usize, f64)> = cfg
        .sweep
        .seeds
        .iter()
        .flat_map(|&s| cfg.sweep.c.iter().enumerate().map(move |(i, &c)| (s, i, c)))
        .collect();
    let many_c = cfg.sweep.c.len() > 1;
    let entries = grid
        .par_iter()
        .map(|&(seed, i, c)| {
            let mut entry = cfg.clone();
            entry.seed = seed;
            entry.init.c = c;
            let name = if many_c {
                format!("seed_{seed}_c{i}")
            } else {
                format!("seed_{seed}")
            };
            let sub = dir.join(name);
            entry.out = Some(sub.clone());
            match cfg.sweep.command {
                SweepCommand::Train => train_in(&entry, &sub, false),
                SweepCommand::Certify => {
                    prepare_dir(&entry, &sub)?;
                    let s = start(&entry)?;
                    write_start(&sub, &s)?;
                    Ok(TrainReport {
                        seed,
                        c: s.tuned.map(|t| t.0),
                        certificate_holds: s.cert.holds(),
                        trained: false,
                        summary: None,
                        first_violation: None,
                        distance_violations: None,
                    })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let total_violations = entries
        .iter()
        .filter_map(|e| e.summary.as_ref())
        .map(|s| s.tally.violations.iter().sum::<u64>())
        .sum();
    let report = SweepReport {
        command: cfg.sweep.command,
        certified: entries.iter().filter(|e| e.certificate_holds).count(),
        total_violations,
        entries,
    };
    write_json(&dir.join("sweep.json"), &report)?;
    println!(
        "{} entries, {} certified, {} invariant violations; wrote {}",
        report.entries.len(),
        report.certified,
        total_violations,
        dir.join("sweep.json").display()
    );
    Ok(match cfg.sweep.command {
        SweepCommand::Train => report.entries.iter().all(TrainReport::success),
        SweepCommand::Certify => report.certified == report.entries.len(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Discrepancy {
    max_abs_entry: f64,
    /// Largest `|H - MC| / (5 stderr + tail)` over entries; at most 1 when consistent.
    max_normalized: f64,
    lambda_min_diff: f64,
    consistent: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct LambdaReport {
    sigma: Nonlinearity,
    n: usize,
    d: usize,
    seed: u64,
    mc: Option<GramSummary>,
    hermite: Option<GramSummary>,
    discrepancy: Option<Discrepancy>,
}

fn discrepancy(h: &GramEstimate, m: &GramEstimate) -> Discrepancy {
    let tail = h.tail.unwrap_or(0.0);
    let se = m
        .stderr
        .clone()
        .unwrap_or_else(|| DMatrix::zeros(m.gram.nrows(), m.gram.ncols()));
    let diff = &h.gram - &m.gram;
    let max_normalized = diff
        .iter()
        .zip(se.iter())
        .map(|(e, s)| e.abs() / (5.0 * s + tail))
        .fold(0.0, f64::max);
    Discrepancy {
        max_abs_entry: diff.amax(),
        max_normalized,
        lambda_min_diff: h.lambda_min - m.lambda_min,
        consistent: max_normalized <= 1.0,
    }
}

pub fn lambda_star(cfg: &ExperimentConfig) -> Result<bool> {
    let dir = cfg.out_dir();
    prepare_dir(cfg, &dir)?;
    let x = cfg.inputs()?;
    let ls = &cfg.lambda_star;
    let sigma = ls.sigma.nonlinearity(&cfg.activation);
    let mc = match ls.method {
        Method::Mc | Method::Both => Some(gram_mc(&x, &sigma, ls.samples, cfg.seed)?),
        Method::Hermite => None,
    };
    let hermite = match ls.method {
        Method::Hermite | Method::Both => {
            let spec = HermiteSpec::compute(sigma, ls.r_max, ls.quad_order)?;
            Some(gram_hermite(&x, &spec, ls.r_max)?)
        }
        Method::Mc => None,
    };
    if cfg.format == Format::Csv {
        for (name, est) in [("gram_mc.csv", &mc), ("gram_hermite.csv", &hermite)] {
            if let Some(e) = est {
                write_matrix_csv(&dir.join(name), &e.gram, "g")?;
            }
        }
    }
    let report = LambdaReport {
        sigma,
        n: x.nrows(),
        d: x.ncols(),
        seed: cfg.seed,
        discrepancy: match (&hermite, &mc) {
            (Some(h), Some(m)) => Some(discrepancy(h, m)),
            _ => None,
        },
        mc: mc.as_ref().map(GramEstimate::summary),
        hermite: hermite.as_ref().map(GramEstimate::summary),
    };
    let path = dir.join("lambda_star.json");
    write_json(&path, &report)?;
    for (name, s) in [("monte carlo", &report.mc), ("hermite", &report.hermite)] {
        if let Some(s) = s {
            println!("{name}: lambda_min = {}", s.lambda_min);
        }
    }
    if let Some(d) = &report.discrepancy {
        println!(
            "discrepancy: max |H - MC| = {:e}, normalized {:.3} ({})",
            d.max_abs_entry,
            d.max_normalized,
            if d.consistent { "consistent" } else { "INCONSISTENT" }
        );
    }
    println!("wrote {}", path.display());
    Ok(true)
}

#[derive(Debug, Serialize, Deserialize)]
struct KrRow {
    seed: u64,
    sigma_min: f64,
    bound: f64,
    pass: bool,
}

pub fn kr(cfg: &ExperimentConfig) -> Result<bool> {
    let dir = cfg.out_dir();
    prepare_dir(cfg, &dir)?;
    let r = cfg.kr.r;
    if r == 0 {
        bail!("Khatri-Rao power needs r >= 1");
    }
    let inputs: Vec<(u64, DMatrix<f64>)> = match &cfg.data {
        crate::config::DataSource::Synthetic { n, d, .. } => (cfg.seed..cfg.seed + cfg.kr.seeds)
            .map(|s| Ok((s, sphere_data(*n, *d, (*d as f64).sqrt(), s)?)))
            .collect::<Result<_>>()?,
        _ => vec![(cfg.seed, cfg.inputs()?)],
    };
    let rows: Vec<KrRow> = inputs
        .par_iter()
        .map(|(seed, x)| {
            let floor = (x.ncols() as f64).powf(r as f64 / 2.0) / 2.0;
            let s = kr_min_singular(x, r)?;
            Ok(KrRow {
                seed: *seed,
                sigma_min: s.sigma_min,
                bound: s.lower_bound,
                pass: s.sigma_min >= floor,
            })
        })
        .collect::<Result<_>>()?;
    let path = match cfg.format {
        Format::Csv => {
            let mut text = String::from("seed,sigma_min,bound,pass\n");
            for row in &rows {
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    row.seed,
                    fmt_real(row.sigma_min),
                    fmt_real(row.bound),
                    row.pass
                ));
            }
            let p = dir.join("kr.csv");
            write_string(&p, &text)?;
            p
        }
        Format::Json => {
            let p = dir.join("kr.json");
            write_json(&p, &rows)?;
            p
        }
    };
    let passed = rows.iter().filter(|r| r.pass).count();
    println!(
        "sigma_min >= d^(r/2)/2 in {passed}/{} inputs; wrote {}",
        rows.len(),
        path.display()
    );
    Ok(true)
}

pub fn hermite(cfg: &ExperimentConfig) -> Result<bool> {
    let dir = cfg.out_dir();
    prepare_dir(cfg, &dir)?;
    let h = &cfg.hermite;
    let spec = HermiteSpec::compute(h.sigma.nonlinearity(&cfg.activation), h.r_max, h.quad_order)?;
    let path: PathBuf = match cfg.format {
        Format::Csv => {
            let mut text = String::from("r,mu,tail_after\n");
            for (r, mu) in spec.coeffs.iter().enumerate() {
                text.push_str(&format!("{r},{},{}\n", fmt_real(*mu), fmt_real(spec.tail_after(r))));
            }
            let p = dir.join("hermite.csv");
            write_string(&p, &text)?;
            p
        }
        Format::Json => {
            let p = dir.join("hermite.json");
            write_json(&p, &spec)?;
            p
        }
    };
    println!(
        "E[sigma(Z)^2] = {}, tail after r = {}: {:e}, quadrature converged: {}; wrote {}",
        spec.norm_sq,
        spec.r_max(),
        spec.tail,
        spec.converged,
        path.display()
    );
    Ok(true)
}
