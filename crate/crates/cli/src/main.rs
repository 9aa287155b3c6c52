//! `fdm`: data generation, training, evaluation and planning from one
//! sectioned config file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fdm_core::eval::{
    episodes_csv, final_error_svg, finetune_report_csv, plan_report_csv, run_fdm_benchmark, run_finetune_experiment, run_planning_benchmark,
    step_error_csv, step_error_svg, fdm_report_csv, PlanMethod, PLAN_REPORT_HEADER,
};
use fdm_core::fileio::write_atomic;
use fdm_core::geom::Se2Pose;
use fdm_core::model::{collect_dataset, metrics_csv, read_checkpoint, train, write_checkpoint, Fdm, PlannerHook, METRICS_HEADER};
use fdm_core::mppi::{episode_csv, parse_episode_csv, plan_overlay_svg, run_receding_horizon, EpisodeLimits, MppiHook, PlannerModel, EPISODE_HEADER};
use fdm_core::par::{set_thread_limit, Parallelism};
use fdm_core::plot::{box_chart, line_chart, path_overlay, Path2, Series};
use fdm_core::replay::{write_dataset, Dataset};
use fdm_core::rng::rng_from_seed;
use fdm_core::run::RunConfig;
use fdm_core::terrain::{generate_terrain, sample_free_pose, write_terrain, check_failure};
use fdm_core::FdmError;

const EXAMPLES: &str = "Config values come from --config FILE, then the FDM_OUT variable (output \
directory), then --section.key=value flags, e.g. --mppi.gamma=0.05 or --sim.kind=plane.";

#[derive(Parser, Debug)]
#[command(name = "fdm", version, about = "Perceptive forward dynamics model and MPPI planner", after_help = EXAMPLES)]
struct Cli {
    /// Sectioned key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker thread cap; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate random-command episodes and write a dataset.
    GenData {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train a model from scratch with alternating collection rounds.
    Train,
    /// Fine-tune on the shifted dynamics of the [shift] section.
    Finetune {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Held-out prediction accuracy against constant velocity.
    EvalFdm {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// One receding-horizon episode on the first terrain kind.
    Plan {
        /// Goal `x,y,yaw` in the start frame.
        #[arg(long, value_parser = parse_pose)]
        goal: Se2Pose,
        /// Start `x,y,yaw` in the world frame; defaults to the terrain centre.
        #[arg(long, value_parser = parse_pose)]
        start: Option<Se2Pose>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// `fdm` or `cv`.
        #[arg(long, default_value = "fdm")]
        planner: String,
    },
    /// Success rates of the planner variants.
    BenchPlan {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated subset of mppi_fdm, mppi_fdm_norisk, mppi_cv.
        #[arg(long, default_value = "mppi_fdm,mppi_fdm_norisk,mppi_cv")]
        methods: String,
    },
    /// Render a CSV written by another subcommand as SVG.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl From<FdmError> for CliError {
    fn from(e: FdmError) -> Self {
        match e {
            FdmError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn parse_pose(s: &str) -> Result<Se2Pose, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, yaw] if v.iter().all(|a| a.is_finite()) => Ok(Se2Pose::new(x, y, yaw)),
        _ => Err(format!("expected x,y,yaw, got '{s}'")),
    }
}

/// Splits `--section.key=value` (or `--section.key value`) overrides from the
/// arguments clap understands.
fn split_overrides(args: Vec<String>) -> CliResult<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let (name, value) = match body.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !name.contains('.') {
            rest.push(a);
            continue;
        }
        let value = match value {
            Some(v) => v,
            None => it.next().ok_or_else(|| CliError::Config(format!("missing value for --{name}")))?,
        };
        overrides.push((name, value));
    }
    Ok((rest, overrides))
}

fn resolve_config(file: Option<&Path>, env_out: Option<String>, overrides: &[(String, String)]) -> CliResult<RunConfig> {
    let mut rc = RunConfig::default();
    if let Some(p) = file {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
        rc.apply_text(&text)?;
    }
    if let Some(out) = env_out.filter(|s| !s.is_empty()) {
        rc.set("run.out", &out)?;
    }
    for (k, v) in overrides {
        rc.set(k, v)?;
    }
    rc.validate()?;
    Ok(rc)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn model_path(rc: &RunConfig, model: Option<PathBuf>) -> PathBuf {
    model.unwrap_or_else(|| rc.run.out.join("model.fdmck"))
}

fn load_model(rc: &RunConfig, model: Option<PathBuf>) -> CliResult<Fdm> {
    let p = model_path(rc, model);
    read_checkpoint(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
}

fn gen_data(rc: &RunConfig, count: usize, output: Option<PathBuf>, par: Parallelism) -> CliResult<()> {
    if count == 0 {
        return Err(CliError::Config("--count must be positive".into()));
    }
    let samples = collect_dataset(&rc.fdm, &rc.collect_config(), count, 0.0, None, rc.run.seed, par)?;
    let f = &rc.fdm;
    let mut ds = Dataset::new(f.n, f.scan.u, f.scan.v, f.dt_h, f.dt_p);
    for s in samples {
        ds.push(s)?;
    }
    let path = output.unwrap_or_else(|| rc.run.out.join("dataset.fdmrb"));
    write_dataset(&path, &ds)?;
    let failed = ds.samples.iter().filter(|s| s.failed()).count();
    println!("wrote {} samples ({failed} with failures) to {}", ds.len(), path.display());
    Ok(())
}

fn train_cmd(rc: &RunConfig) -> CliResult<()> {
    let out = rc.run.out.clone();
    let hook = MppiHook { cfg: rc.collect_mppi() };
    let hook_ref: Option<&dyn PlannerHook> = if rc.run.use_planner { Some(&hook) } else { None };
    let ck = out.join("model.fdmck");
    let (fdm, rows) = train(&rc.fdm, &rc.train_config(), &rc.collect_config(), hook_ref, |round, fdm, rows| {
        write_checkpoint(&ck, fdm)?;
        write_atomic(&out.join("metrics.csv"), metrics_csv(rows).as_bytes())?;
        if let Some(r) = rows.last() {
            println!("round {round}: L_total {:.5}", r.losses.total);
        }
        Ok(())
    })?;
    write_checkpoint(&ck, &fdm)?;
    let csv = metrics_csv(&rows);
    write_text(&out.join("metrics.csv"), &csv)?;
    write_text(&out.join("metrics.svg"), &plot_csv(&csv)?)?;
    println!("wrote {} ({} parameters)", ck.display(), fdm.param_count());
    Ok(())
}

fn finetune_cmd(rc: &RunConfig, model: Option<PathBuf>, par: Parallelism) -> CliResult<()> {
    let fdm = load_model(rc, model)?;
    let shifted = rc.shift.apply(&rc.sim.params);
    let rep = run_finetune_experiment(&fdm, &rc.train_config(), &rc.collect_config(), &shifted, &rc.eval, rc.shift.train_samples, par)?;
    let out = &rc.run.out;
    write_checkpoint(&out.join("finetuned.fdmck"), &rep.model)?;
    let csv = finetune_report_csv(&rep);
    write_text(&out.join("finetune.csv"), &csv)?;
    write_text(&out.join("finetune_metrics.csv"), &metrics_csv(&rep.metrics))?;
    print!("{csv}");
    Ok(())
}

fn eval_fdm_cmd(rc: &RunConfig, model: Option<PathBuf>, par: Parallelism) -> CliResult<()> {
    let fdm = load_model(rc, model)?;
    let reports = run_fdm_benchmark(&fdm, &rc.collect_config(), &rc.eval, par)?;
    let out = &rc.run.out;
    let csv = fdm_report_csv(&reports, "fdm");
    write_text(&out.join("fdm_report.csv"), &csv)?;
    write_text(&out.join("step_error.csv"), &step_error_csv(&reports, "fdm"))?;
    write_text(&out.join("step_error.svg"), &step_error_svg(&reports, "fdm", fdm.cfg.dt_p))?;
    write_text(&out.join("final_error.svg"), &final_error_svg(&reports, "fdm"))?;
    print!("{csv}");
    Ok(())
}

fn plan_cmd(rc: &RunConfig, goal: Se2Pose, start: Option<Se2Pose>, model: Option<PathBuf>, planner: &str, par: Parallelism) -> CliResult<()> {
    let kind = rc.sim.kinds[0];
    let grid = generate_terrain(kind, rc.sim.terrain_seed, rc.sim.terrain)?;
    let params = &rc.sim.params;
    let start = match start {
        Some(s) => s,
        None => {
            let (w, h) = grid.extent();
            let centre = Se2Pose::new(w / 2.0, h / 2.0, 0.0);
            if check_failure(&centre, &grid, params) {
                sample_free_pose(&grid, params, &mut rng_from_seed(rc.run.seed))
                    .ok_or_else(|| CliError::Runtime(format!("no free start on {kind} terrain")))?
            } else {
                centre
            }
        }
    };
    let model = match planner {
        "fdm" => PlannerModel::fdm(&load_model(rc, model)?),
        "cv" => PlannerModel::ConstantVelocity(rc.fdm.clone()),
        other => return Err(CliError::Config(format!("--planner must be fdm or cv, got '{other}'"))),
    };
    let goal_world = start.compose(&goal);
    let limits = EpisodeLimits {
        record_plan: true,
        ..rc.eval.limits()
    };
    let log = run_receding_horizon(&grid, params, start, goal_world, &model, &rc.mppi, &limits, rc.run.seed, par)?;
    let out = &rc.run.out;
    write_text(&out.join("episode.csv"), &episode_csv(&log.rows))?;
    write_terrain(&out.join("terrain.fdmtg"), &grid)?;
    let title = format!("{kind}: {} after {:.1} s, {:.2} m", log.outcome.as_str(), log.path_time, log.path_length);
    write_text(&out.join("plan.svg"), &plan_overlay_svg(&grid, &log, &title))?;
    println!(
        "{}: outcome {}, path {:.3} m in {:.2} s, {} replans",
        kind,
        log.outcome.as_str(),
        log.path_length,
        log.path_time,
        log.replans
    );
    Ok(())
}

fn bench_plan_cmd(rc: &RunConfig, model: Option<PathBuf>, methods: &str, par: Parallelism) -> CliResult<()> {
    let methods: Vec<PlanMethod> = methods
        .split(',')
        .map(|m| {
            PlanMethod::ALL
                .into_iter()
                .find(|p| p.as_str() == m.trim())
                .ok_or_else(|| CliError::Config(format!("unknown method '{}'", m.trim())))
        })
        .collect::<CliResult<_>>()?;
    let fdm = if methods.iter().any(|m| m.needs_model()) { Some(load_model(rc, model)?) } else { None };
    let reports = run_planning_benchmark(fdm.as_ref(), &methods, &rc.sim.params, rc.sim.terrain, &rc.mppi, &rc.eval, par)?;
    let out = &rc.run.out;
    let csv = plan_report_csv(&reports);
    write_text(&out.join("plan_report.csv"), &csv)?;
    write_text(&out.join("episodes.csv"), &episodes_csv(&reports))?;
    for r in &reports {
        if let Some(log) = &r.first_log {
            let grid = generate_terrain(r.kind, rc.eval.terrain_seed, rc.sim.terrain)?;
            let title = format!("{} {}: {}", r.kind, r.method.as_str(), log.outcome.as_str());
            let svg = plan_overlay_svg(&grid, log, &title);
            write_text(&out.join(format!("plan_{}_{}.svg", r.kind, r.method.as_str())), &svg)?;
        }
    }
    print!("{csv}");
    Ok(())
}

fn columns(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn num(s: &str, line: usize) -> CliResult<f64> {
    s.parse().map_err(|_| CliError::Runtime(format!("line {line}: '{s}' is not a number")))
}

/// SVG for any CSV layout the tool writes.
fn plot_csv(text: &str) -> CliResult<String> {
    let header = text.lines().next().unwrap_or("").trim();
    let body: Vec<(usize, Vec<&str>)> = text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()).map(|(i, l)| (i + 1, columns(l))).collect();
    if header == METRICS_HEADER {
        let names = ["L_pose", "L_risk", "L_stop", "L_total"];
        let mut series: Vec<Series> = names.iter().map(|n| Series { label: n.to_string(), points: Vec::new() }).collect();
        for (i, (line, c)) in body.iter().enumerate() {
            for (k, s) in series.iter_mut().enumerate() {
                s.points.push(((i + 1) as f64, num(c[2 + k], *line)?));
            }
        }
        return Ok(line_chart("Training losses", "epoch", "loss", &series));
    }
    if header == "env,model,step,mean,std" {
        let mut series: Vec<Series> = Vec::new();
        for (line, c) in &body {
            let label = format!("{} {}", c[0], c[1]);
            let p = (num(c[2], *line)?, num(c[3], *line)?);
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push(p),
                None => series.push(Series { label, points: vec![p] }),
            }
        }
        return Ok(line_chart("Position error over the horizon", "step", "error [m]", &series));
    }
    if header == EPISODE_HEADER {
        let rows = parse_episode_csv(text)?;
        let path = Path2 {
            points: rows.iter().map(|r| (r.pose.x, r.pose.y)).collect(),
            color: "black".into(),
            width: 2.0,
        };
        let mut markers = Vec::new();
        if let (Some(a), Some(b)) = (rows.first(), rows.last()) {
            markers.push(((a.pose.x, a.pose.y), "blue"));
            markers.push(((b.pose.x, b.pose.y), if b.failed { "red" } else { "green" }));
        }
        return Ok(path_overlay("Executed path", None, &[path], &markers));
    }
    if header == PLAN_REPORT_HEADER {
        let mut groups = Vec::new();
        for (line, c) in &body {
            let (s, lo, hi) = (num(c[3], *line)?, num(c[4], *line)?, num(c[5], *line)?);
            groups.push((format!("{} {}", c[0], c[1]), [lo, lo, s, hi, hi]));
        }
        return Ok(box_chart("Success rate with 95% interval", "success [%]", &groups));
    }
    if header.starts_with("env,model,samples,final_mean") {
        let mut groups = Vec::new();
        for (line, c) in &body {
            let q: Vec<f64> = c[4..8].iter().map(|v| num(v, *line)).collect::<CliResult<_>>()?;
            groups.push((format!("{} {}", c[0], c[1]), [q[0], q[0], q[1], q[2], q[3]]));
        }
        return Ok(box_chart("Final-step position error (25/50/75/95%)", "error [m]", &groups));
    }
    if header == "domain,pre_error,post_error,reduction_pct" {
        let mut series = vec![
            Series { label: "pre".into(), points: Vec::new() },
            Series { label: "post".into(), points: Vec::new() },
        ];
        for (i, (line, c)) in body.iter().enumerate() {
            series[0].points.push((i as f64, num(c[1], *line)?));
            series[1].points.push((i as f64, num(c[2], *line)?));
        }
        return Ok(line_chart("Fine-tuning: shifted domain then base", "domain index", "final error [m]", &series));
    }
    Err(CliError::Runtime(format!("unrecognised CSV header '{header}'")))
}

fn plot_cmd(csv: &Path, output: Option<PathBuf>) -> CliResult<()> {
    let text = std::fs::read_to_string(csv).map_err(|e| CliError::Runtime(format!("{}: {e}", csv.display())))?;
    let svg = plot_csv(&text)?;
    let out = output.unwrap_or_else(|| csv.with_extension("svg"));
    write_text(&out, &svg)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli, overrides: &[(String, String)]) -> CliResult<()> {
    if let Command::Plot { csv, output } = cli.command {
        return plot_cmd(&csv, output);
    }
    let mut rc = resolve_config(cli.config.as_deref(), std::env::var("FDM_OUT").ok(), overrides)?;
    if let Some(t) = cli.threads {
        rc.run.threads = t;
    }
    if rc.run.threads > 0 {
        set_thread_limit(rc.run.threads);
    }
    let par = Parallelism::default();
    std::fs::create_dir_all(&rc.run.out).map_err(|e| CliError::Runtime(format!("{}: {e}", rc.run.out.display())))?;
    write_text(&rc.run.out.join("config.resolved"), &rc.render())?;
    match cli.command {
        Command::GenData { count, output } => gen_data(&rc, count, output, par),
        Command::Train => train_cmd(&rc),
        Command::Finetune { model } => finetune_cmd(&rc, model, par),
        Command::EvalFdm { model } => eval_fdm_cmd(&rc, model, par),
        Command::Plan { goal, start, model, planner } => plan_cmd(&rc, goal, start, model, &planner, par),
        Command::BenchPlan { model, methods } => bench_plan_cmd(&rc, model, &methods, par),
        Command::Plot { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(CliError::Config(m) | CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
