use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use strip_lab::band::{CheminLernerAccumulator, TimeExponent};
use strip_lab::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use strip_lab::config::RunConfig;
use strip_lab::lab::{fit_decay, run_aniso, run_hydro, sweep, LabConfig, RunStatus, SingleRun};
use strip_lab::lp::DyadicFilterBank;
use strip_lab::report::{loglog_svg, write_csv, write_json, SweepSummary};
use strip_lab::selftest::run_selftest;
use strip_lab::{LabError, ScalarField};

const EXIT_CONFIG: u8 = 2;
const EXIT_BLOWUP: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "strip-lab",
    version,
    about = "Thin-strip nematic flow experiments"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// ε for single runs, or a comma-separated ladder for sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Vec<f64>,

    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,

    /// Worker threads for sweeps.
    #[arg(long, global = true, env = "STRIP_LAB_THREADS")]
    threads: Option<usize>,

    /// Seed of the random initial profile.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Refuse to run when the shear-flow or small-data gates fail.
    #[arg(long = "strict-gates", global = true)]
    strict_gates: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the anisotropic solver and write its time series and checkpoints.
    SimulateAniso,
    /// Run the hydrostatic solver and write its time series and checkpoints.
    SimulateHydro,
    /// Run the ε-ladder against the hydrostatic limit and write the report.
    Sweep,
    /// Besov and Chemin-Lerner norms of checkpointed fields.
    Besov {
        /// Checkpoint manifests, in any order.
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        /// Regularity index.
        #[arg(long, default_value_t = 0.5)]
        s: f64,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

enum Failure {
    Config(String),
    Blowup(String),
    Acceptance(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Blowup(_) => EXIT_BLOWUP,
            Failure::Acceptance(_) => EXIT_ACCEPTANCE,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m)
            | Failure::Blowup(m)
            | Failure::Acceptance(m)
            | Failure::Other(m) => m,
        }
    }
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Config(_) | LabError::InvalidParameter(_) | LabError::InvalidGrid(_) => {
                Failure::Config(e.to_string())
            }
            LabError::BlowupDetected { .. }
            | LabError::Overflow { .. }
            | LabError::BandExhausted { .. } => Failure::Blowup(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    strict_gates: bool,
}

fn load_config(cli: &Cli) -> Result<Context, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(first) = cli.eps.first() {
        cfg.params.eps = *first;
        cfg.params.eps_ladder = cli.eps.clone();
    }
    if let Some(t) = cli.t_end {
        cfg.params.t_end = t;
    }
    if let Some(seed) = cli.seed {
        cfg.initial.seed = seed;
    }
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Context {
        cfg,
        out,
        strict_gates: cli.strict_gates,
    })
}

fn prepare_out(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Other(format!("cannot create {}: {e}", dir.display())))
}

/// Shear-flow gates and the small-data condition at `t = 0`.
fn check_gates(ctx: &Context, lab: &LabConfig, eps: f64) -> Outcome {
    let report = lab.flow.check_gates(ctx.cfg.flow.gate_threshold);
    let g = lab.grid;
    let (q1, q2) = lab.initial.q_pair(g);
    let st = strip_lab::state::FlowState {
        eps,
        t: 0.0,
        u: lab.initial.velocity(g),
        v: lab.initial.vertical_velocity(g),
        q1,
        q2,
    };
    let band = strip_lab::band::BandState::eta(lab.band.a, lab.band.lambda, lab.band.delta)?;
    let m = strip_lab::aniso::maxt_monitor(&st, &DyadicFilterBank::new(&g), &band)?;
    eprintln!(
        "gates: sum m|c| = {:.3e}, sum |c|/m = {:.3e}, threshold {:.3e}, small data {:.3e} <= {:.3e}",
        report.sum_m_abs, report.sum_div_m, report.threshold, m.value, m.bound
    );
    if ctx.strict_gates && (!report.all_pass() || m.violated) {
        return Err(Failure::Config(
            "gate check failed under --strict-gates".into(),
        ));
    }
    Ok(())
}

fn status_outcome(status: &RunStatus) -> Outcome {
    match status {
        RunStatus::Completed => Ok(()),
        RunStatus::Blowup { t, reason } => {
            Err(Failure::Blowup(format!("blowup at t = {t}: {reason}")))
        }
        RunStatus::BandExhausted { t } => Err(Failure::Blowup(format!(
            "analytic band exhausted at t = {t}"
        ))),
    }
}

#[derive(Serialize)]
struct DecaySummary {
    column: String,
    sigma: Option<f64>,
    r2: Option<f64>,
    note: Option<String>,
}

fn decay_summaries(run: &SingleRun, columns: &[&str]) -> Vec<DecaySummary> {
    columns
        .iter()
        .map(|c| match run.series.pairs(c).map(|p| fit_decay(&p)) {
            Some(Ok(f)) => DecaySummary {
                column: c.to_string(),
                sigma: Some(f.slope),
                r2: Some(f.r2),
                note: None,
            },
            Some(Err(e)) => DecaySummary {
                column: c.to_string(),
                sigma: None,
                r2: None,
                note: Some(e.to_string()),
            },
            None => DecaySummary {
                column: c.to_string(),
                sigma: None,
                r2: None,
                note: Some("missing column".into()),
            },
        })
        .collect()
}

#[derive(Serialize)]
struct RunSummary<'a> {
    run: &'a SingleRun,
    decay: Vec<DecaySummary>,
}

fn simulate(ctx: &Context, aniso: bool) -> Outcome {
    let lab = ctx.cfg.lab_config()?;
    let eps = ctx.cfg.params.eps;
    check_gates(ctx, &lab, eps)?;
    prepare_out(&ctx.out)?;
    let g = lab.grid;
    let (tag, run, fields0, decay_cols) = if aniso {
        let (q1, q2) = lab.initial.q_pair(g);
        let fields0 = vec![
            ("u".to_string(), lab.initial.velocity(g)),
            ("v".to_string(), lab.initial.vertical_velocity(g)),
            ("q1".to_string(), q1),
            ("q2".to_string(), q2),
        ];
        (
            "aniso",
            run_aniso(&lab, eps)?,
            fields0,
            vec!["B12_u", "B12_q"],
        )
    } else {
        let u0 = lab.initial.velocity(g);
        let v0 = strip_lab::hydro::HydroState::new(u0.clone()).v();
        let fields0 = vec![("u".to_string(), u0), ("v".to_string(), v0)];
        ("hydro", run_hydro(&lab)?, fields0, vec!["B12_u"])
    };
    let ck_eps = if aniso { Some(eps) } else { None };
    let checkpoint = |t: f64, fields: Vec<(String, ScalarField)>| Checkpoint {
        grid: g,
        params: lab.params.clone(),
        eps: ck_eps,
        t,
        fields,
    };
    write_checkpoint(
        &ctx.out.join(format!("{tag}_initial")),
        &checkpoint(0.0, fields0),
    )?;
    write_checkpoint(
        &ctx.out.join(format!("{tag}_final")),
        &checkpoint(run.final_t, run.final_fields.clone()),
    )?;
    let csv = ctx.out.join(format!("{tag}.csv"));
    write_csv(&csv, &run.series)?;
    let summary = RunSummary {
        run: &run,
        decay: decay_summaries(&run, &decay_cols),
    };
    write_json(&ctx.out.join(format!("{tag}_summary.json")), &summary)?;
    eprintln!(
        "wrote {} ({} samples, {} steps)",
        csv.display(),
        run.series.len(),
        run.steps
    );
    for d in &summary.decay {
        match d.sigma {
            Some(s) => eprintln!("decay rate of {}: {s:.4}", d.column),
            None => eprintln!(
                "decay rate of {}: n/a ({})",
                d.column,
                d.note.as_deref().unwrap_or("")
            ),
        }
    }
    status_outcome(&run.status)
}

fn run_sweep(ctx: &Context) -> Outcome {
    let lab = ctx.cfg.sweep_config()?;
    let ladder = ctx.cfg.params.eps_ladder.clone();
    for &eps in &ladder {
        check_gates(ctx, &lab, eps)?;
    }
    prepare_out(&ctx.out)?;
    let rep = sweep(&lab, &ladder)?;
    for r in &rep.records {
        write_csv(
            &ctx.out.join(format!("sweep_eps{}.csv", r.eps)),
            &r.time_series,
        )?;
    }
    write_json(&ctx.out.join("sweep.json"), &rep)?;
    let s = &ctx.cfg.sweep;
    let summary = SweepSummary::new(&rep, s.min_slope, s.min_r2, s.max_m_hat_drift);
    write_json(&ctx.out.join("report.json"), &summary)?;
    if let Some(fit) = &summary.fit {
        std::fs::write(
            ctx.out.join("sweep.svg"),
            loglog_svg(fit, "sup_t ||(eps w1, eps^2 w2)_Theta||_B1/2"),
        )?;
    }
    for r in &summary.records {
        eprintln!("eps {:<8} Y {:.4e}  status {:?}", r.eps, r.y, r.status);
    }
    if !summary.y_monotone {
        eprintln!("note: Y grows as eps decreases somewhere on the ladder");
    }
    for c in &summary.criteria {
        eprintln!(
            "{} {}: {:.4} (threshold {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    for r in &rep.records {
        status_outcome(&r.terminal_status)?;
    }
    if summary.all_pass() {
        Ok(())
    } else {
        Err(Failure::Acceptance(
            "sweep acceptance criteria failed".into(),
        ))
    }
}

#[derive(Serialize)]
struct FieldNorms {
    name: String,
    /// `‖f(t)‖_{B^s}` per checkpoint, in time order.
    besov: Vec<f64>,
    chemin_lerner_inf: f64,
    chemin_lerner_1: f64,
    chemin_lerner_2: f64,
}

#[derive(Serialize)]
struct BesovReport {
    s: f64,
    times: Vec<f64>,
    fields: Vec<FieldNorms>,
}

fn besov(ctx: &Context, paths: &[PathBuf], s: f64) -> Outcome {
    let mut cks = paths
        .iter()
        .map(|p| read_checkpoint(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    cks.sort_by(|a, b| a.t.total_cmp(&b.t));
    let grid = cks[0].grid;
    if cks.iter().any(|c| c.grid != grid) {
        return Err(Failure::Config("checkpoints are on different grids".into()));
    }
    let bank = DyadicFilterBank::new(&grid);
    let weights = bank.block_weights(s);
    let names: Vec<String> = cks[0].fields.iter().map(|(n, _)| n.clone()).collect();
    let mut fields = Vec::new();
    for name in names {
        let snaps: Vec<&ScalarField> = cks.iter().filter_map(|c| c.field(&name)).collect();
        if snaps.len() != cks.len() {
            continue;
        }
        let mut acc: Vec<CheminLernerAccumulator> =
            [TimeExponent::Infinity, TimeExponent::One, TimeExponent::Two]
                .into_iter()
                .map(|p| CheminLernerAccumulator::new(s, p, weights.clone()))
                .collect();
        let mut norms = Vec::new();
        for (k, f) in snaps.iter().enumerate() {
            let blocks = bank.block_norms(f);
            norms.push(blocks.iter().zip(&weights).map(|(b, w)| b * w).sum());
            let dt = cks.get(k + 1).map_or(0.0, |n| n.t - cks[k].t);
            for a in &mut acc {
                a.accumulate(&blocks, 1.0, dt);
            }
        }
        fields.push(FieldNorms {
            name,
            besov: norms,
            chemin_lerner_inf: acc[0].finalize(),
            chemin_lerner_1: acc[1].finalize(),
            chemin_lerner_2: acc[2].finalize(),
        });
    }
    let report = BesovReport {
        s,
        times: cks.iter().map(|c| c.t).collect(),
        fields,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Other(e.to_string()))?;
    println!("{text}");
    prepare_out(&ctx.out)?;
    std::fs::write(ctx.out.join("besov.json"), text)?;
    Ok(())
}

fn selftest() -> Outcome {
    let checks = run_selftest()?;
    for c in &checks {
        println!(
            "{} {:<22} {:.3e} (tolerance {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    if checks.iter().all(|c| c.pass) {
        Ok(())
    } else {
        Err(Failure::Acceptance("selftest failed".into()))
    }
}

fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Other(e.to_string()))?;
    }
    match &cli.command {
        Command::Selftest => selftest(),
        Command::SimulateAniso => simulate(&load_config(cli)?, true),
        Command::SimulateHydro => simulate(&load_config(cli)?, false),
        Command::Sweep => run_sweep(&load_config(cli)?),
        Command::Besov { checkpoints, s } => besov(&load_config(cli)?, checkpoints, *s),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
