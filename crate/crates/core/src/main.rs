use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use hris_isac::config::ScenarioConfig;
use hris_isac::error::Error;
use hris_isac::harness::{self, ExperimentResult, Provenance, Scenario};
use hris_isac::report::{self, Series};

#[derive(Parser)]
#[command(name = "hris-isac", version, about = "Near-field HRIS-assisted ISAC simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML scenario file; missing keys take the reference defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use the reference scenario (ignored when --config is given).
    #[arg(long, global = true)]
    paper_profile: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the config and run invariant self-checks.
    Validate,
    /// Optimise one trial and map the PEB over the AoI.
    PebMap,
    /// Optimise one trial and write the design and convergence trace.
    Optimize,
    /// Rate and coverage against the power splitting ratio.
    SweepRho {
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])]
        rho: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [5usize])]
        q: Vec<usize>,
    },
    /// Target RMSE against transmit power.
    RmseVsPower {
        #[arg(long, value_delimiter = ',', default_values_t = [16.0, 31.0, 46.0, 61.0, 76.0])]
        pmax: Vec<f64>,
        /// PEB thresholds in metres (default: the config value).
        #[arg(long, value_delimiter = ',')]
        gamma: Vec<f64>,
    },
    /// Write the channels of trial 0 to a binary dump.
    ChannelDump,
}

enum Failure {
    Config(String),
    Solver(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::Format(_) | Error::Io(_) => Failure::Config(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load_config(c: &Common) -> std::result::Result<ScenarioConfig, Failure> {
    let mut cfg = match (&c.config, c.paper_profile) {
        (Some(p), _) => ScenarioConfig::load(p).map_err(|e| Failure::Config(e.to_string()))?,
        (None, true) => ScenarioConfig::paper(),
        (None, false) => return Err(Failure::Config("pass --config <path> or --paper-profile".into())),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.trials {
        cfg.trials = t;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: &str) -> Outcome {
    let p = report::write_file(dir, name, contents)?;
    println!("wrote {}", p.display());
    Ok(())
}

fn write_meta(dir: &Path, cmd: &str, cfg: &ScenarioConfig, extra: serde_json::Value) -> Outcome {
    let meta = json!({
        "command": cmd,
        "provenance": Provenance::of(cfg),
        "parallel": hris_isac::par::is_parallel(),
        "config": cfg,
        "result": extra,
    });
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Failure::Config(e.to_string()))?;
    write(dir, &format!("{cmd}.json"), &text)
}

fn write_experiment(dir: &Path, res: &ExperimentResult, cfg: &ScenarioConfig) -> Outcome {
    write(dir, &format!("{}_trials.csv", res.id), &res.records_csv())?;
    write(dir, &format!("{}_summary.csv", res.id), &res.aggregates_csv())?;
    write_meta(
        dir,
        &res.id,
        cfg,
        json!({ "aggregates": res.aggregates, "failures": res.failures(), "consistent": res.consistent() }),
    )?;
    if res.failures() > 0 {
        return Err(Failure::Solver(format!("{} of {} trials failed", res.failures(), res.records.len())));
    }
    Ok(())
}

fn validate(cfg: &ScenarioConfig, out: &Path) -> Outcome {
    let sc = Scenario::new(cfg.clone())?;
    let checks = harness::self_checks(&sc)?;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    write_meta(out, "validate", cfg, json!({ "checks": checks }))?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} self-check(s) failed")));
    }
    Ok(())
}

fn peb_map(cfg: &ScenarioConfig, out: &Path) -> Outcome {
    let m = harness::peb_map(cfg)?;
    let prov = Provenance::of(cfg).csv_comment();
    let mut csv = format!("{prov}r,theta_deg,phi_deg,peb,satisfied\n");
    let mut values = Vec::with_capacity(m.report.grid.len());
    for ((p, v), ok) in m.report.grid.iter().zip(&m.report.peb).zip(&m.report.satisfied) {
        let x = v.value().unwrap_or(f64::INFINITY);
        values.push(x);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            harness::num(p.r),
            harness::num(p.theta.to_degrees()),
            harness::num(p.phi.to_degrees()),
            harness::num(x),
            *ok as u8
        ));
    }
    write(out, "peb_map.csv", &csv)?;
    let aoi = cfg.aoi()?;
    let svg = report::heatmap(
        &format!("PEB [m], coverage {:.3}", m.report.coverage),
        "azimuth [deg]",
        "range [m]",
        (aoi.phi.0.to_degrees(), aoi.phi.1.to_degrees()),
        aoi.r,
        m.shape.0,
        m.shape.1,
        &values,
    );
    write(out, "peb_map.svg", &svg)?;
    println!("coverage {:.4}, rate {:.4} bit/s/Hz", m.report.coverage, m.record.rate);
    write_meta(out, "peb-map", cfg, json!({ "record": m.record, "boresight": m.boresight, "coverage": m.report.coverage }))
}

fn optimize(cfg: &ScenarioConfig, out: &Path) -> Outcome {
    let sc = Scenario::new(cfg.clone())?;
    let o = sc.run_trial_full(0, harness::trial_seed(cfg.seed, 0))?;
    let rec = o.record;
    if let Some(sol) = &o.solution {
        write(out, "design.csv", &format!("{}{}", Provenance::of(cfg).csv_comment(), harness::design_csv(&sol.design)))?;
        write(out, "trace.csv", &format!("{}{}", Provenance::of(cfg).csv_comment(), sol.trace.to_csv()))?;
    }
    write_meta(out, "optimize", cfg, json!({ "record": rec }))?;
    if rec.failed {
        return Err(Failure::Solver(rec.failure));
    }
    println!(
        "rate {:.4} bit/s/Hz, coverage {:.4}, {} iterations ({:?})",
        rec.rate, rec.coverage, rec.iterations, rec.status
    );
    Ok(())
}

fn sweep_rho(cfg: &ScenarioConfig, out: &Path, rhos: &[f64], qs: &[usize]) -> Outcome {
    let res = harness::sweep_rho(cfg, rhos, qs)?;
    let mut rate = Vec::new();
    let mut cov = Vec::new();
    for q in qs {
        let pts = |f: fn(&harness::Aggregate) -> f64| {
            res.aggregates.iter().filter(|a| a.q == *q).map(|a| (a.rho, f(a))).collect::<Vec<_>>()
        };
        rate.push(Series { name: format!("Q={q}"), points: pts(|a| a.mean_rate) });
        cov.push(Series { name: format!("Q={q}"), points: pts(|a| a.mean_coverage) });
    }
    write(out, "sweep_rho_rate.svg", &report::line_plot("Mean rate", "rho", "rate [bit/s/Hz]", &rate))?;
    write(out, "sweep_rho_coverage.svg", &report::line_plot("Mean coverage", "rho", "coverage", &cov))?;
    write_experiment(out, &res, cfg)
}

fn rmse_vs_power(cfg: &ScenarioConfig, out: &Path, pmax: &[f64], gammas: &[f64]) -> Outcome {
    let gammas = if gammas.is_empty() { vec![cfg.gamma_s] } else { gammas.to_vec() };
    let res = harness::rmse_vs_power(cfg, pmax, &gammas)?;
    let series: Vec<Series> = gammas
        .iter()
        .map(|g| Series {
            name: format!("gamma={g}"),
            points: res.aggregates.iter().filter(|a| a.gamma_s == *g).map(|a| (a.p_max_dbm, a.rmse)).collect(),
        })
        .collect();
    write(out, "rmse_vs_power.svg", &report::line_plot("Target RMSE", "P_max [dBm]", "RMSE [m]", &series))?;
    write_experiment(out, &res, cfg)
}

fn channel_dump(cfg: &ScenarioConfig, out: &Path) -> Outcome {
    let sc = Scenario::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(harness::trial_seed(cfg.seed, 0));
    let ch = sc.draw_channels(&mut rng)?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    let path = out.join("channels.bin");
    hris_isac::channel::write_channel_dump(&path, &ch)?;
    println!("wrote {}", path.display());
    let sources: Vec<_> = ch
        .sources
        .iter()
        .map(|s| json!({ "kind": format!("{:?}", s.kind), "r": s.position.r, "theta": s.position.theta, "phi": s.position.phi, "beta": [s.beta.re, s.beta.im] }))
        .collect();
    write_meta(out, "channel-dump", cfg, json!({ "sources": sources }))
}

fn run(cli: &Cli) -> Outcome {
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.as_path();
    hris_isac::par::with_workers(cli.common.workers, || match &cli.cmd {
        Cmd::Validate => validate(&cfg, out),
        Cmd::PebMap => peb_map(&cfg, out),
        Cmd::Optimize => optimize(&cfg, out),
        Cmd::SweepRho { rho, q } => sweep_rho(&cfg, out, rho, q),
        Cmd::RmseVsPower { pmax, gamma } => rmse_vs_power(&cfg, out, pmax, gamma),
        Cmd::ChannelDump => channel_dump(&cfg, out),
    })
    .map_err(|e| Failure::Config(e.to_string()))?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver failure: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Check(m)) => {
            eprintln!("validate: {m}");
            ExitCode::from(3)
        }
    }
}
