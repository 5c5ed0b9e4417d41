//! Subcommand bodies. Each writes its artifacts under the output directory
//! and returns the file names it produced, which end up in the manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use diamond::arrays::{apply_e, apply_l, apply_q, apply_q_n, EdgeArray};
use diamond::disorder::DisorderSpec;
use diamond::graph::{path_sum_bond, shared_edges_exact, DiamondParams};
use diamond::io;
use diamond::montecarlo::{
    bond_disorder_array, conditional_reduction_oracle, pool_at, sample_many, ReplicaConfig,
};
use diamond::recursion::{exact_finite_n_moments, LimitMomentTable, LimitRow, RSolver};
use diamond::scaling::{beta_exact, ScalingSchedule};
use diamond::stats::{w2_from_w1_bound, EmpiricalSample, MetricReport};
use diamond::Model;
use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, SampleFormat};
use crate::CliError;

pub struct Outcome {
    pub files: Vec<String>,
    /// Extra manifest fields, e.g. rows that failed.
    pub notes: serde_json::Value,
    pub failed: bool,
}

impl Outcome {
    fn ok(files: Vec<String>) -> Self {
        Self {
            files,
            notes: serde_json::Value::Null,
            failed: false,
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = out.join(name);
    let f = File::create(&path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut w = create(out, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(run_err)?;
    w.write_all(b"\n").map_err(run_err)?;
    w.flush().map_err(run_err)
}

fn beta_for(cfg: &ExperimentConfig, n: u64) -> Result<f64, CliError> {
    match cfg.beta {
        Some(b) => Ok(b),
        None => ScalingSchedule {
            model: cfg.model,
            b: cfg.b,
            r: cfg.r_or_zero(),
            spec: cfg.disorder,
            mode: cfg.schedule,
        }
        .beta(n.max(2))
        .map_err(run_err),
    }
}

pub fn limits(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let solver = RSolver::new(cfg.b, cfg.tolerances.r_tol).map_err(run_err)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in cfg.r_points() {
        match LimitMomentTable::row(&solver, r, cfg.m_max, cfg.depth) {
            Ok(row) => rows.push(row),
            Err(e) => {
                failures.push(json!({"r": r, "error": e.to_string()}));
                rows.push(LimitRow {
                    r,
                    big_r: f64::NAN,
                    r_prime: f64::NAN,
                    higher: vec![f64::NAN; cfg.m_max - 2],
                });
            }
        }
    }
    let mut w = create(out, "limits.csv")?;
    io::write_limit_rows(cfg.m_max, &rows, &mut w).map_err(run_err)?;
    Ok(Outcome {
        files: vec!["limits.csv".into()],
        notes: json!({ "failed_rows": failures }),
        failed: false,
    })
}

pub fn beta(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let schedule = ScalingSchedule {
        model: cfg.model,
        b: cfg.b,
        r: cfg.r_or_zero(),
        spec: cfg.disorder,
        mode: cfg.schedule,
    };
    let rows = schedule.table(&cfg.n_points()).map_err(run_err)?;
    let mut w = create(out, "schedule.csv")?;
    io::write_schedule(&rows, &mut w).map_err(run_err)?;
    Ok(Outcome::ok(vec!["schedule.csv".into()]))
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let n = cfg.n.ok_or_else(|| CliError::Config("simulate needs n".into()))?;
    let n32 = u32::try_from(n).map_err(|_| CliError::Config(format!("n = {n} is too deep to simulate")))?;
    let beta = beta_for(cfg, n)?;
    let rc = ReplicaConfig {
        model: cfg.model,
        b: cfg.b,
        n: n32,
        beta,
        spec: cfg.disorder,
        replicas: cfg.replicas,
        seed: cfg.seed,
    };
    let xs = sample_many(&rc).map_err(run_err)?;
    let mut files = Vec::new();
    match cfg.output.format {
        SampleFormat::Csv => {
            let mut w = create(out, "samples.csv")?;
            io::write_samples_csv(&xs, &mut w).map_err(run_err)?;
            files.push("samples.csv".into());
        }
        SampleFormat::Bin => {
            let mut w = create(out, "samples.bin")?;
            io::write_samples_bin(&xs, &mut w).map_err(run_err)?;
            w.flush().map_err(run_err)?;
            let side = io::SampleSidecar::new(cfg.seed, serde_json::to_value(rc).map_err(run_err)?, &xs);
            write_json(out, "samples.json", &side)?;
            files.extend(["samples.bin".into(), "samples.json".into()]);
        }
    }
    let summary = json!({
        "N": xs.len(),
        "beta": beta,
        "summary": io::SampleSummary::of(&xs),
    });
    write_json(out, "summary.json", &summary)?;
    files.push("summary.json".into());
    Ok(Outcome::ok(files))
}

pub fn moments(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut w = create(out, "moments.csv")?;
    let mut head = vec!["n".to_string(), "beta".to_string()];
    head.extend((2..=cfg.m_max).map(|m| format!("mu{m}")));
    writeln!(w, "{}", head.join(",")).map_err(run_err)?;
    for n in cfg.n_points() {
        let beta = beta_for(cfg, n)?;
        let mv = exact_finite_n_moments(cfg.b, n, &cfg.disorder, beta, cfg.model, cfg.m_max).map_err(run_err)?;
        let mut rec = vec![n.to_string(), beta.to_string()];
        rec.extend((2..=cfg.m_max).map(|m| mv.get(m).to_string()));
        writeln!(w, "{}", rec.join(",")).map_err(run_err)?;
    }
    w.flush().map_err(run_err)?;
    Ok(Outcome::ok(vec!["moments.csv".into()]))
}

fn distance_metrics(tag: &str, x: &EmpiricalSample, y: &EmpiricalSample, m: u32) -> Result<Vec<MetricReport>, CliError> {
    let b = w2_from_w1_bound(x, y, m).map_err(run_err)?;
    Ok(vec![
        // Jensen: ρ₁ never exceeds ρ₂
        MetricReport::upper(format!("rho1{tag}"), b.rho1, b.rho2),
        MetricReport {
            metric: format!("rho2{tag}"),
            value: b.rho2,
            bound: b.bound,
            pass: b.holds(),
        },
    ])
}

/// Two sample files, or the finite-n versus pool probe over `n_grid`.
pub fn converge(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let c = &cfg.converge;
    let load = |p: &PathBuf| {
        let xs = io::read_samples_path(p).map_err(|e| CliError::Config(e.to_string()))?;
        EmpiricalSample::new(xs).map_err(run_err)
    };
    let report = if let (Some(px), Some(py)) = (&c.x, &c.y) {
        distance_metrics("", &load(px)?, &load(py)?, c.moment)?
    } else {
        let r = cfg.r_or_zero();
        let end = c.pool_r0 + c.pool_steps as f64;
        if (end - r).abs() > 1e-12 {
            return Err(CliError::Config(format!(
                "pool ends at r = {end} but the probe targets r = {r}; adjust converge.pool_r0 or pool_steps"
            )));
        }
        let solver = RSolver::new(cfg.b, cfg.tolerances.r_tol).map_err(run_err)?;
        let pool = pool_at(&solver, c.pool_r0, c.pool_steps, c.pool_size, cfg.seed).map_err(run_err)?;
        let pool = EmpiricalSample::new(pool.samples).map_err(run_err)?;
        let mut report = Vec::new();
        let mut rho2s = Vec::new();
        for n in cfg.n_points() {
            let n32 = u32::try_from(n).map_err(|_| CliError::Config(format!("n = {n} is too deep")))?;
            let beta = beta_exact(cfg.model, &cfg.disorder, cfg.b, n.max(2), r).map_err(run_err)?;
            let rc = ReplicaConfig {
                model: cfg.model,
                b: cfg.b,
                n: n32,
                beta,
                spec: cfg.disorder,
                replicas: cfg.replicas,
                seed: cfg.seed,
            };
            let xs = EmpiricalSample::new(sample_many(&rc).map_err(run_err)?).map_err(run_err)?;
            let m = distance_metrics(&format!("[n={n}]"), &xs, &pool, c.moment)?;
            rho2s.push(m[1].value);
            report.extend(m);
        }
        let violations = rho2s.windows(2).filter(|w| w[1] >= w[0]).count();
        report.push(MetricReport::upper("rho2_trend_violations", violations as f64, 0.0));
        report
    };
    write_json(out, "converge.json", &report)?;
    Ok(Outcome::ok(vec!["converge.json".into()]))
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub pass: bool,
    pub worst: f64,
    pub tolerance: f64,
}

/// The exact small-graph suites: path sums, the conditional-expectation
/// identity, `Q = L + E`, and the overlap law.
pub fn oracle_checks(seed: u64) -> Result<Vec<OracleCheck>, CliError> {
    let params = DiamondParams::symmetric(2).map_err(run_err)?;
    let mut checks = Vec::new();
    let mut push = |name: String, worst: f64, tolerance: f64| {
        checks.push(OracleCheck {
            pass: worst < tolerance,
            name,
            worst,
            tolerance,
        })
    };
    for n in 1..=3u32 {
        let rc = ReplicaConfig {
            model: Model::Bond,
            b: 2,
            n,
            beta: 0.7,
            spec: DisorderSpec::UniformCentered,
            replicas: 100,
            seed,
        };
        let mut worst: f64 = 0.0;
        for rep in 0..100 {
            let x = bond_disorder_array(&rc, rep).map_err(run_err)?;
            let brute = path_sum_bond(params, n, &x.values, u128::MAX).map_err(run_err)?;
            let q = 1.0 + apply_q_n(&x, n).map_err(run_err)?.values[0];
            worst = worst.max((brute - q).abs() / brute.abs());
        }
        push(format!("path_sum_vs_q[n={n}]"), worst, 1e-12);
    }
    for k in 0..=2u32 {
        let rc = ReplicaConfig {
            model: Model::Site,
            b: 2,
            n: 2,
            beta: 0.5,
            spec: DisorderSpec::Rademacher,
            replicas: 100,
            seed,
        };
        let mut worst: f64 = 0.0;
        for rep in 0..100 {
            worst = worst.max(conditional_reduction_oracle(&rc, k, rep).map_err(run_err)?.gap);
        }
        push(format!("conditional_reduction[n=2,k={k}]"), worst, 1e-12);
    }
    let mut rng = diamond::rng::CounterRng::new(seed ^ 0xa11a);
    for (b, level) in [(2usize, 1u32), (2, 2), (3, 1), (3, 2)] {
        let len = diamond::arrays::array_len(b, level).map_err(run_err)?;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let values = (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let a = EdgeArray::new(b, level, values).map_err(run_err)?;
            let q = apply_q(&a).map_err(run_err)?;
            let l = apply_l(&a).map_err(run_err)?;
            let e = apply_e(&a).map_err(run_err)?;
            for i in 0..q.len() {
                worst = worst.max((q.values[i] - l.values[i] - e.values[i]).abs());
            }
        }
        push(format!("q_equals_l_plus_e[b={b},k={level}]"), worst, 1e-12);
    }
    for n in 1..=3u32 {
        let exact = shared_edges_exact(params, n, u128::MAX).map_err(run_err)?;
        let gap = if exact.numer() == exact.denom() { 0.0 } else { 1.0 };
        push(format!("overlap_is_one[n={n}]"), gap, 0.5);
    }
    Ok(checks)
}

pub fn oracle(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let checks = oracle_checks(cfg.seed)?;
    let failed = checks.iter().any(|c| !c.pass);
    write_json(out, "oracle.json", &checks)?;
    Ok(Outcome {
        files: vec!["oracle.json".into()],
        notes: json!({ "all_pass": !failed }),
        failed,
    })
}
