//! `disagg` — capacity planning and simulation for co-located vs.
//! disaggregated LLM serving.
//!
//! Subcommands: `plan` (Pareto frontiers for one config), `sweep`
//! (traffic/model/nvlink/ratio comparisons), `bandwidth` (KV-transfer
//! provisioning analysis), `simulate` (discrete-event validation runs).
//!
//! Exit codes: 0 success, 2 user/config error, 3 infeasible or empty result,
//! 4 internal error.

mod manifest;
mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use disagg_core::enumerate::SearchSpace;
use disagg_core::kvbw::{bandwidth_sweep, BandwidthVerdict, BindingDirection};
use disagg_core::pareto::{
    build_colocated_frontier, build_disagg_frontier, compare, frontier_area, pareto_filter,
    plan_candidates, CompareCell, Frontier, FrontierPoint, PlanError, Provenance,
};
use disagg_core::ratematch::{fixed_ratio_match, rate_match, DeploymentPoint};
use disagg_core::simulate::{
    compare_dynamic_vs_p50, nominal_lengths, parse_trace, run_colocated, run_disagg,
    sample_traffic, DynVsP50Options, Request, SimResult,
};
use disagg_core::workload::{load_config, ConfigDoc, HardwareSpec, ModelArch, TrafficPattern};

use manifest::RunManifest;
use svg::{chart, chart_grid, ChartSpec, Series};

#[derive(Parser)]
#[command(name = "disagg", version, about = "Capacity planner for disaggregated LLM serving")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build disaggregated and co-located throughput-interactivity frontiers.
    Plan(PlanArgs),
    /// Compare serving modes across a declared sweep axis.
    Sweep(SweepArgs),
    /// KV-transfer bandwidth requirements for planned deployments.
    Bandwidth(BandwidthArgs),
    /// Discrete-event simulation of a planned operating point.
    Simulate(SimArgs),
}

#[derive(clap::Args)]
struct PlanArgs {
    /// JSON config document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if absent).
    #[arg(long)]
    out: PathBuf,
    /// Override the config's TTL targets, comma-separated seconds.
    #[arg(long, value_name = "SECONDS,..")]
    ttl_targets: Option<String>,
    /// Also write per-point cost breakdowns to explain.json.
    #[arg(long)]
    explain: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SweepAxis {
    Traffic,
    Model,
    Nvlink,
    Ratio,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Sweep axis; cells come from the config's `sweep` section.
    #[arg(long, value_enum)]
    sweep: SweepAxis,
    /// Override the ratio list for --sweep ratio, comma-separated.
    #[arg(long, value_name = "R,..")]
    ratio: Option<String>,
}

#[derive(clap::Args)]
struct BandwidthArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Deployment selector: `frontier`, `all`, or `ttl:<seconds>`.
    #[arg(long, default_value = "frontier")]
    select: String,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SimMode {
    Colocated,
    Disagg,
    #[value(name = "dynamic-vs-p50")]
    DynamicVsP50,
}

#[derive(clap::Args)]
struct SimArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: SimMode,
    /// Request trace CSV (arrival_time,isl,osl); sampled traffic when absent.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Seed for traffic sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Closed-loop request count when sampling traffic.
    #[arg(long, default_value_t = 256)]
    requests: usize,
    /// Simulated-time horizon in seconds.
    #[arg(long, default_value_t = 1e6)]
    horizon: f64,
}

enum CliError {
    /// Bad input: config, flags, trace. Exit 2.
    User(String),
    /// Valid input, empty/infeasible result. Exit 3.
    Infeasible(String),
    /// Bug or environment failure. Exit 4.
    Internal(String),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Internal(format!("{e:#}"))
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        CliError::Infeasible(e.to_string())
    }
}

fn main() -> ExitCode {
    init_workers();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan(args) => cmd_plan(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bandwidth(args) => cmd_bandwidth(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(4)
        }
    }
}

/// Worker count from DISAGG_WORKERS (parallel builds only).
fn init_workers() {
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var("DISAGG_WORKERS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn load(path: &Path) -> Result<(ConfigDoc, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::User(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = load_config(&text).map_err(|e| CliError::User(e.to_string()))?;
    Ok((cfg, text))
}

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::User(format!("cannot create output dir {}: {e}", dir.display())))
}

fn write_output(
    man: &mut RunManifest,
    dir: &Path,
    name: &str,
    content: &str,
) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CliError::Internal(format!("write {}: {e}", path.display())))?;
    man.record(&path);
    Ok(())
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| CliError::User(format!("bad {what} value `{t}`: {e}")))
        })
        .collect()
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

fn frontier_csv_rows(out: &mut String, frontier: &Frontier) {
    for p in frontier.points() {
        match &p.provenance {
            Provenance::Disagg(d) => {
                let _ = writeln!(
                    out,
                    "disagg,{},{},{},{},{},{},{},{},{},{},{},{},",
                    num(p.interactivity),
                    num(p.per_gpu_throughput),
                    num(d.decode.latency),
                    num(d.prefill.latency),
                    d.prefill.mapping.label(),
                    d.prefill.batch,
                    d.num_prefill_gpus,
                    d.decode.mapping.label(),
                    d.decode.batch,
                    d.num_decode_gpus,
                    d.alpha,
                    d.prefill
                        .mapping
                        .cpp_chunk_tokens
                        .map(|c| c.to_string())
                        .unwrap_or_default(),
                );
            }
            Provenance::Colocated(c) => {
                let _ = writeln!(
                    out,
                    "colocated,{},{},{},{},,,,{},{},{},,{},{}",
                    num(p.interactivity),
                    num(p.per_gpu_throughput),
                    num(c.ttl_effective),
                    num(c.ftl_effective),
                    c.mapping.label(),
                    c.batch,
                    c.mapping.gpus(),
                    c.chunk_tokens.map(|v| v.to_string()).unwrap_or_default(),
                    c.piggybacked,
                );
            }
        }
    }
}

fn frontier_series(frontier: &Frontier, label: &str) -> Series {
    Series {
        label: label.to_string(),
        points: frontier
            .points()
            .iter()
            .map(|p| (p.interactivity, p.per_gpu_throughput))
            .collect(),
    }
}

fn cmd_plan(args: &PlanArgs) -> Result<(), CliError> {
    let (mut cfg, text) = load(&args.config)?;
    if let Some(list) = &args.ttl_targets {
        cfg.sla.ttl_targets = parse_f64_list(list, "ttl target")?;
        cfg.sla
            .validate()
            .map_err(|e| CliError::User(e.to_string()))?;
    }
    ensure_out(&args.out)?;
    let space = SearchSpace::from_config(&cfg.model, &cfg.hardware, &cfg.search);

    let disagg = build_disagg_frontier(
        &cfg.model,
        &cfg.hardware,
        &space,
        &cfg.sla,
        &cfg.traffic,
        cfg.budget.max_total_gpus,
    )?;
    let coloc = build_colocated_frontier(&cfg.model, &cfg.hardware, &space, &cfg.sla, &cfg.traffic);

    let any_target_met = cfg.sla.ttl_targets.iter().any(|&t| {
        disagg.frontier.best_at_ttl(t).is_some() || coloc.frontier.best_at_ttl(t).is_some()
    });
    if !any_target_met {
        let best = disagg
            .frontier
            .points()
            .iter()
            .chain(coloc.frontier.points())
            .map(|p| 1.0 / p.interactivity)
            .fold(f64::INFINITY, f64::min);
        return Err(CliError::Infeasible(format!(
            "no operating point meets any ttl_target (binding constraint: ttl_targets; best achievable TTL is {best:.6}s)"
        )));
    }

    let mut params = BTreeMap::new();
    params.insert("config".into(), args.config.display().to_string());
    params.insert(
        "ttl_targets".into(),
        cfg.sla
            .ttl_targets
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    let mut man = RunManifest::new(&text, "plan", params)?;

    let mut csv = String::from(
        "mode,interactivity,per_gpu_throughput,ttl_s,ftl_s,prefill_mapping,prefill_batch,num_prefill_gpus,decode_mapping,decode_batch,num_decode_gpus,alpha,chunk_tokens,piggybacked\n",
    );
    frontier_csv_rows(&mut csv, &disagg.frontier);
    frontier_csv_rows(&mut csv, &coloc.frontier);
    write_output(&mut man, &args.out, "frontier.csv", &csv)?;

    let spec = ChartSpec {
        title: format!("{} Pareto frontier", cfg.model.name),
        x_label: "interactivity (tokens/s/user)".into(),
        y_label: "throughput (tokens/s/GPU)".into(),
        log_x: true,
        log_y: true,
    };
    let svg_doc = chart(
        &spec,
        vec![
            frontier_series(&disagg.frontier, "disaggregated"),
            frontier_series(&coloc.frontier, "co-located"),
        ],
    );
    write_output(&mut man, &args.out, "frontier.svg", &svg_doc)?;

    if args.explain {
        #[derive(serde::Serialize)]
        struct Explain<'a> {
            disagg: &'a [FrontierPoint],
            colocated: &'a [FrontierPoint],
            prefill_stats: disagg_core::enumerate::EnumStats,
            decode_stats: disagg_core::enumerate::EnumStats,
            colocated_stats: disagg_core::enumerate::EnumStats,
        }
        let explain = Explain {
            disagg: disagg.frontier.points(),
            colocated: coloc.frontier.points(),
            prefill_stats: disagg.prefill_stats,
            decode_stats: disagg.decode_stats,
            colocated_stats: coloc.stats,
        };
        let mut json = serde_json::to_string_pretty(&explain)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        json.push('\n');
        write_output(&mut man, &args.out, "explain.json", &json)?;
    }

    let path = man.write(&args.out)?;
    let _ = path;
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

fn comparison_outputs(
    report: &disagg_core::pareto::ComparisonReport,
    man: &mut RunManifest,
    out_dir: &Path,
) -> Result<(), CliError> {
    let mut csv =
        String::from("cell,mode,ttl_target,interactivity,per_gpu_throughput,area,area_ratio\n");
    let mut panels = Vec::new();
    for cell in &report.cells {
        for row in &cell.targets {
            let _ = writeln!(
                csv,
                "{},disagg,{},{},{},{},{}",
                cell.label,
                num(row.ttl_target),
                opt_num(row.disagg.map(|d| d.0)),
                opt_num(row.disagg.map(|d| d.1)),
                num(cell.disagg_area),
                num(cell.area_ratio),
            );
            let _ = writeln!(
                csv,
                "{},colocated,{},{},{},{},{}",
                cell.label,
                num(row.ttl_target),
                opt_num(row.coloc.map(|c| c.0)),
                opt_num(row.coloc.map(|c| c.1)),
                num(cell.coloc_area),
                num(cell.area_ratio),
            );
        }
        panels.push((
            ChartSpec {
                title: cell.label.clone(),
                x_label: "interactivity (tokens/s/user)".into(),
                y_label: "throughput (tokens/s/GPU)".into(),
                log_x: true,
                log_y: true,
            },
            vec![
                frontier_series(&cell.disagg.frontier, "disaggregated"),
                frontier_series(&cell.coloc.frontier, "co-located"),
            ],
        ));
    }
    write_output(man, out_dir, "comparison.csv", &csv)?;
    write_output(man, out_dir, "sweep.svg", &chart_grid(&panels))?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let (cfg, text) = load(&args.config)?;
    ensure_out(&args.out)?;
    let axis_name = match args.sweep {
        SweepAxis::Traffic => "traffic",
        SweepAxis::Model => "model",
        SweepAxis::Nvlink => "nvlink",
        SweepAxis::Ratio => "ratio",
    };
    let mut params = BTreeMap::new();
    params.insert("config".into(), args.config.display().to_string());
    params.insert("sweep".into(), axis_name.to_string());
    let mut man = RunManifest::new(&text, "sweep", params)?;

    let cell_for = |label: String, model: ModelArch, hw: HardwareSpec, traffic: TrafficPattern| {
        let space = SearchSpace::from_config(&model, &hw, &cfg.search);
        CompareCell {
            label,
            model,
            hw,
            space,
            traffic,
        }
    };

    match args.sweep {
        SweepAxis::Traffic => {
            let cells_cfg = cfg
                .sweep
                .traffic
                .as_ref()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| {
                    CliError::User("empty sweep list: config `sweep.traffic` is missing or empty".into())
                })?;
            let cells = cells_cfg
                .iter()
                .map(|c| {
                    cell_for(
                        c.label.clone(),
                        cfg.model.clone(),
                        cfg.hardware.clone(),
                        TrafficPattern::Static {
                            isl: c.isl,
                            osl: c.osl,
                            saturation: true,
                        },
                    )
                })
                .collect();
            let report = compare(cells, &cfg.sla, cfg.budget.max_total_gpus)?;
            comparison_outputs(&report, &mut man, &args.out)?;
        }
        SweepAxis::Model => {
            let cells_cfg = cfg
                .sweep
                .models
                .as_ref()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| {
                    CliError::User("empty sweep list: config `sweep.models` is missing or empty".into())
                })?;
            let mut cells = Vec::new();
            for c in cells_cfg {
                let model = c.model.resolve().map_err(|e| CliError::User(e.to_string()))?;
                cells.push(cell_for(
                    c.label.clone(),
                    model,
                    cfg.hardware.clone(),
                    cfg.traffic.clone(),
                ));
            }
            let report = compare(cells, &cfg.sla, cfg.budget.max_total_gpus)?;
            comparison_outputs(&report, &mut man, &args.out)?;
        }
        SweepAxis::Nvlink => {
            let domains = cfg
                .sweep
                .nvlink_domains
                .as_ref()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| {
                    CliError::User(
                        "empty sweep list: config `sweep.nvlink_domains` is missing or empty".into(),
                    )
                })?;
            let cells = domains
                .iter()
                .map(|&d| {
                    let mut hw = cfg.hardware.clone();
                    hw.nvlink_domain_size = d;
                    cell_for(
                        format!("nvl{d}"),
                        cfg.model.clone(),
                        hw,
                        cfg.traffic.clone(),
                    )
                })
                .collect();
            let report = compare(cells, &cfg.sla, cfg.budget.max_total_gpus)?;
            comparison_outputs(&report, &mut man, &args.out)?;
        }
        SweepAxis::Ratio => {
            let ratios = match &args.ratio {
                Some(list) => parse_f64_list(list, "ratio")?,
                None => cfg.sweep.ratios.clone().unwrap_or_default(),
            };
            if ratios.is_empty() {
                return Err(CliError::User(
                    "empty sweep list: give --ratio or config `sweep.ratios`".into(),
                ));
            }
            ratio_sweep(&cfg, &ratios, &mut man, &args.out)?;
        }
    }

    man.write(&args.out)?;
    Ok(())
}

fn deployments_to_frontier(points: &[DeploymentPoint]) -> Frontier {
    pareto_filter(
        points
            .iter()
            .map(|d| FrontierPoint {
                interactivity: d.interactivity,
                per_gpu_throughput: d.overall_tokens_per_sec_per_gpu,
                provenance: Provenance::Disagg(Box::new(d.clone())),
            })
            .collect(),
    )
}

fn ratio_sweep(
    cfg: &ConfigDoc,
    ratios: &[f64],
    man: &mut RunManifest,
    out_dir: &Path,
) -> Result<(), CliError> {
    let space = SearchSpace::from_config(&cfg.model, &cfg.hardware, &cfg.search);
    let (isl, osl) = nominal_lengths(&cfg.traffic);
    let (prefill, decode_candidates) =
        plan_candidates(&cfg.model, &cfg.hardware, &space, &cfg.sla, isl, osl)
            .map_err(CliError::from)?;

    let optimal = rate_match(
        &prefill,
        &decode_candidates,
        osl,
        0.03,
        cfg.budget.max_total_gpus,
    );
    let optimal_frontier = deployments_to_frontier(&optimal.points);
    let window = cfg.sla.window();
    let optimal_area = frontier_area(&optimal_frontier, window);

    let mut curves = vec![("optimal".to_string(), optimal_frontier)];
    for &r in ratios {
        if !(r > 0.0) {
            return Err(CliError::User(format!("ratio must be positive, got {r}")));
        }
        let fixed = fixed_ratio_match(
            &prefill,
            &decode_candidates,
            osl,
            r,
            cfg.budget.max_total_gpus,
        );
        curves.push((format!("ratio-{r}"), deployments_to_frontier(&fixed.points)));
    }

    let mut csv =
        String::from("cell,mode,ttl_target,interactivity,per_gpu_throughput,area,area_ratio\n");
    for (label, frontier) in &curves {
        let area = frontier_area(frontier, window);
        for &ttl in &cfg.sla.ttl_targets {
            let best = frontier.best_at_ttl(ttl);
            let _ = writeln!(
                csv,
                "{label},disagg,{},{},{},{},{}",
                num(ttl),
                opt_num(best.map(|p| p.interactivity)),
                opt_num(best.map(|p| p.per_gpu_throughput)),
                num(area),
                num(area / optimal_area),
            );
        }
    }
    write_output(man, out_dir, "comparison.csv", &csv)?;

    let series: Vec<Series> = curves
        .iter()
        .map(|(label, f)| frontier_series(f, label))
        .collect();
    let svg_doc = chart(
        &ChartSpec {
            title: format!("{} fixed vs dynamic prefill:decode ratio", cfg.model.name),
            x_label: "interactivity (tokens/s/user)".into(),
            y_label: "throughput (tokens/s/GPU)".into(),
            log_x: true,
            log_y: true,
        },
        series,
    );
    write_output(man, out_dir, "sweep.svg", &svg_doc)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// bandwidth
// ---------------------------------------------------------------------------

fn cmd_bandwidth(args: &BandwidthArgs) -> Result<(), CliError> {
    let (cfg, text) = load(&args.config)?;
    ensure_out(&args.out)?;
    let space = SearchSpace::from_config(&cfg.model, &cfg.hardware, &cfg.search);
    let plan = build_disagg_frontier(
        &cfg.model,
        &cfg.hardware,
        &space,
        &cfg.sla,
        &cfg.traffic,
        cfg.budget.max_total_gpus,
    )?;

    let frontier_deployments: Vec<DeploymentPoint> = plan
        .frontier
        .points()
        .iter()
        .filter_map(|p| match &p.provenance {
            Provenance::Disagg(d) => Some((**d).clone()),
            Provenance::Colocated(_) => None,
        })
        .collect();
    let selected: Vec<DeploymentPoint> = if args.select == "frontier" {
        frontier_deployments
    } else if args.select == "all" {
        plan.deployments.clone()
    } else if let Some(ttl) = args.select.strip_prefix("ttl:") {
        let ttl: f64 = ttl
            .parse()
            .map_err(|e| CliError::User(format!("bad ttl selector: {e}")))?;
        frontier_deployments
            .into_iter()
            .filter(|d| d.decode.latency <= ttl)
            .collect()
    } else {
        return Err(CliError::User(format!(
            "unknown selector `{}` (expected frontier, all, or ttl:<seconds>)",
            args.select
        )));
    };
    if selected.is_empty() {
        return Err(CliError::Infeasible(format!(
            "selector `{}` matched no deployments",
            args.select
        )));
    }

    let reports = bandwidth_sweep(&cfg.model, &cfg.hardware, &selected, &cfg.traffic);
    let mut csv = String::from(
        "ttl_target,isl,osl,egress_Bps,ingress_Bps,binding,duplication_factor,provisioned_Bps,verdict\n",
    );
    for r in &reports {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            num(r.ttl),
            r.isl,
            r.osl,
            num(r.egress_per_gpu),
            num(r.ingress_per_gpu),
            match r.binding {
                BindingDirection::Egress => "egress",
                BindingDirection::Ingress => "ingress",
            },
            num(r.duplication_factor),
            num(r.provisioned_per_gpu),
            match r.verdict {
                BandwidthVerdict::Sufficient => "sufficient",
                BandwidthVerdict::Insufficient => "insufficient",
            },
        );
    }

    let mut params = BTreeMap::new();
    params.insert("config".into(), args.config.display().to_string());
    params.insert("select".into(), args.select.clone());
    let mut man = RunManifest::new(&text, "bandwidth", params)?;
    write_output(&mut man, &args.out, "bandwidth.csv", &csv)?;
    man.write(&args.out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn sim_requests(args: &SimArgs, traffic: &TrafficPattern) -> Result<Vec<Request>, CliError> {
    match &args.trace {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::User(format!("cannot read trace {}: {e}", path.display())))?;
            parse_trace(&text).map_err(|e| CliError::User(e.to_string()))
        }
        None => Ok(sample_traffic(traffic, args.requests, args.seed)),
    }
}

fn requests_csv(result: &SimResult) -> String {
    let mut csv = String::from("id,arrival,first_token_time,finish_time\n");
    for r in &result.records {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            r.id,
            num(r.arrival_time),
            opt_num(r.first_token_time),
            opt_num(r.finish_time),
        );
    }
    csv
}

fn cmd_simulate(args: &SimArgs) -> Result<(), CliError> {
    let (cfg, text) = load(&args.config)?;
    ensure_out(&args.out)?;
    let space = SearchSpace::from_config(&cfg.model, &cfg.hardware, &cfg.search);
    let relaxed_ttl = *cfg
        .sla
        .ttl_targets
        .last()
        .expect("validated: ttl_targets non-empty");

    let mut params = BTreeMap::new();
    params.insert("config".into(), args.config.display().to_string());
    params.insert("seed".into(), args.seed.to_string());
    params.insert("requests".into(), args.requests.to_string());
    params.insert("horizon".into(), args.horizon.to_string());
    if let Some(t) = &args.trace {
        params.insert("trace".into(), t.display().to_string());
    }

    match args.mode {
        SimMode::Colocated => {
            params.insert("mode".into(), "colocated".into());
            let mut man = RunManifest::new(&text, "simulate", params)?;
            let plan =
                build_colocated_frontier(&cfg.model, &cfg.hardware, &space, &cfg.sla, &cfg.traffic);
            let point = plan
                .frontier
                .best_at_ttl(relaxed_ttl)
                .and_then(|p| match &p.provenance {
                    Provenance::Colocated(c) => Some((**c).clone()),
                    Provenance::Disagg(_) => None,
                })
                .ok_or_else(|| {
                    CliError::Infeasible(format!(
                        "no colocated operating point meets ttl_target {relaxed_ttl}"
                    ))
                })?;
            let requests = sim_requests(args, &cfg.traffic)?;
            let result = run_colocated(&cfg.model, &cfg.hardware, &point, &requests, args.horizon);
            let mut json = serde_json::to_string_pretty(&result)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            json.push('\n');
            write_output(&mut man, &args.out, "simresult.json", &json)?;
            write_output(&mut man, &args.out, "requests.csv", &requests_csv(&result))?;
            man.write(&args.out)?;
        }
        SimMode::Disagg => {
            params.insert("mode".into(), "disagg".into());
            let mut man = RunManifest::new(&text, "simulate", params)?;
            let plan = build_disagg_frontier(
                &cfg.model,
                &cfg.hardware,
                &space,
                &cfg.sla,
                &cfg.traffic,
                cfg.budget.max_total_gpus,
            )?;
            let deployment = plan
                .frontier
                .best_at_ttl(relaxed_ttl)
                .and_then(|p| match &p.provenance {
                    Provenance::Disagg(d) => Some((**d).clone()),
                    Provenance::Colocated(_) => None,
                })
                .ok_or_else(|| {
                    CliError::Infeasible(format!(
                        "no disaggregated operating point meets ttl_target {relaxed_ttl}"
                    ))
                })?;
            let requests = sim_requests(args, &cfg.traffic)?;
            let result = run_disagg(
                &cfg.model,
                &cfg.hardware,
                &deployment,
                &requests,
                args.horizon,
                cfg.hardware.scaleout_bw_per_gpu,
            );
            let mut json = serde_json::to_string_pretty(&result)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            json.push('\n');
            write_output(&mut man, &args.out, "simresult.json", &json)?;
            write_output(&mut man, &args.out, "requests.csv", &requests_csv(&result))?;
            man.write(&args.out)?;
        }
        SimMode::DynamicVsP50 => {
            params.insert("mode".into(), "dynamic-vs-p50".into());
            let mut man = RunManifest::new(&text, "simulate", params)?;
            let report = compare_dynamic_vs_p50(
                &cfg.model,
                &cfg.hardware,
                &space,
                &cfg.sla,
                &cfg.traffic,
                args.seed,
                cfg.budget.max_total_gpus,
                DynVsP50Options {
                    requests: args.requests,
                    horizon: args.horizon,
                },
            )?;
            let mut csv = String::from("ttl_target,dynamic_tps,p50_tps,gap\n");
            for row in &report.rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    num(row.ttl_target),
                    opt_num(row.dynamic_tps),
                    opt_num(row.p50_tps),
                    opt_num(row.gap),
                );
            }
            write_output(&mut man, &args.out, "dyn_vs_p50.csv", &csv)?;
            let mut json = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            json.push('\n');
            write_output(&mut man, &args.out, "dyn_vs_p50.json", &json)?;
            man.write(&args.out)?;
        }
    }
    Ok(())
}
