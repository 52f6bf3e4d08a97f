//! `owc-sim`: plans LiFi grids, runs the hybrid-network experiments and
//! emits handover traces. Every command is deterministic for a given
//! configuration and seed.
//!
//! Exit codes: 0 success, 2 invalid input, 3 runtime failure.

mod config;
mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use owc_hybrid::protocol::{self, FaultPlan, HandoverKind, LatencyModel, Topology};
use owc_hybrid::{engine, transport, zoning, SCHEMA_VERSION};

use crate::config::{Config, ConfigError};
use crate::manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "owc-sim", version, about = "Hybrid LiFi/femtocell and vehicle-link simulator")]
struct Cli {
    /// TOML configuration; every key is optional.
    #[arg(long, global = true, env = "OWCSIM_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true, env = "OWCSIM_SEED")]
    seed: Option<u64>,
    /// Output directory for CSV files and manifests.
    #[arg(long, global = true, env = "OWCSIM_OUT", default_value = "out")]
    out: PathBuf,
    /// Overrides every Monte Carlo sample, drop or crossing count.
    #[arg(long, global = true, env = "OWCSIM_SAMPLES")]
    samples: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Plan the LiFi grid for a room and report zone areas.
    Plan {
        /// Room size as AxB in metres.
        #[arg(long, value_parser = parse_room)]
        room: Option<(f64, f64)>,
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Write Monte Carlo zone areas and probabilities as CSV.
    Zones {
        #[arg(long, value_parser = parse_room)]
        room: Option<(f64, f64)>,
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Run one figure-reproduction experiment.
    Experiment { name: Experiment },
    /// Execute one handover flow and write its trace.
    Trace {
        #[arg(value_parser = parse_kind)]
        kind: HandoverKind,
        /// Per-hop latency in milliseconds; overrides the config.
        #[arg(long)]
        hop_ms: Option<f64>,
        /// Uniform extra delay per hop in milliseconds.
        #[arg(long)]
        jitter_ms: Option<f64>,
        /// Lose one transmission of this step; repeat to lose more.
        #[arg(long)]
        drop_step: Vec<u32>,
        /// Retransmissions allowed per message.
        #[arg(long, default_value_t = 0)]
        retries: u32,
    },
    /// Run the indoor discrete-event simulation and write its metrics.
    IndoorSim,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Experiment {
    Fig16,
    Fig17,
    Fig18,
    Fig19,
    Fig20,
    Fig21,
}

fn parse_room(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected AxB, got '{s}'"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"));
    Ok((num(a)?, num(b)?))
}

fn parse_kind(s: &str) -> Result<HandoverKind, String> {
    s.parse().map_err(|e: owc_hybrid::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<owc_hybrid::Error>() {
        Some(owc_hybrid::Error::Io(_) | owc_hybrid::Error::Csv(_)) | None => 3,
        Some(_) => 2,
    }
}

struct Ctx {
    config: Config,
    out: PathBuf,
    started: Instant,
}

impl Ctx {
    fn create(&self, name: &str) -> anyhow::Result<(PathBuf, BufWriter<File>)> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok((path, BufWriter::new(file)))
    }

    fn finish(&self, command: &str, outputs: Vec<PathBuf>, outcome: Option<String>) -> anyhow::Result<()> {
        let manifest = RunManifest {
            command: command.to_owned(),
            config_digest: self.config.digest(),
            seed: self.config.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            schema_version: SCHEMA_VERSION,
            outputs: outputs.clone(),
            duration_s: self.started.elapsed().as_secs_f64(),
            outcome,
        };
        let path = self.out.join(format!("{command}.manifest.json"));
        manifest.write(&path)?;
        for p in &outputs {
            println!("wrote {}", p.display());
        }
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(samples) = cli.samples {
        config = config.with_samples(samples);
    }
    let ctx = Ctx { config, out: cli.out, started: Instant::now() };
    match cli.command {
        Command::Plan { room, radius } => cmd_plan(&ctx, room, radius),
        Command::Zones { room, radius } => cmd_zones(&ctx, room, radius),
        Command::Experiment { name } => cmd_experiment(&ctx, name),
        Command::Trace { kind, hop_ms, jitter_ms, drop_step, retries } => {
            cmd_trace(&ctx, kind, hop_ms, jitter_ms, &drop_step, retries)
        }
        Command::IndoorSim => cmd_indoor(&ctx),
    }
}

fn room_args(ctx: &Ctx, room: Option<(f64, f64)>, radius: Option<f64>) -> engine::RoomConfig {
    let mut r = ctx.config.room();
    if let Some((a, b)) = room {
        r.a_m = a;
        r.b_m = b;
    }
    if let Some(radius) = radius {
        r.radius_m = radius;
    }
    r
}

fn cmd_plan(ctx: &Ctx, room: Option<(f64, f64)>, radius: Option<f64>) -> anyhow::Result<()> {
    let room = room_args(ctx, room, radius);
    let plan = room.plan()?;
    let model = zoning::monte_carlo_zone_model(&plan, ctx.config.zoning.samples, ctx.config.seed)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "room: {} m x {} m, coverage radius {} m", plan.room_x_m, plan.room_y_m, plan.coverage_radius_m)?;
    writeln!(out, "lifi_aps: {} ({} x {})", plan.ap_count(), plan.n_x, plan.n_y)?;
    writeln!(out, "spacing_m: {} x {}", plan.d_x_m, plan.d_y_m)?;
    writeln!(out, "overlap_m: {} x {}", plan.l_x_m, plan.l_y_m)?;
    for (i, c) in plan.ap_centers.iter().enumerate() {
        writeln!(out, "ap {i}: ({}, {})", c.x, c.y)?;
    }
    writeln!(out, "fap: ({}, {})", plan.fap_center.x, plan.fap_center.y)?;
    writeln!(out, "zone  analytic_m2  mc_m2  probability")?;
    for z in zoning::Zone::ALL {
        let i = z.index();
        writeln!(
            out,
            "{z}  {:.4}  {:.4}  {:.6}",
            model.analytic_areas_m2[i], model.mc_areas_m2[i], model.zone_probs[i]
        )?;
    }
    let total: f64 = model.analytic_areas_m2.iter().sum();
    writeln!(out, "analytic_total_m2: {total:.4} (room {:.4})", plan.room_area())?;
    writeln!(out, "samples: {} seed: {}", model.sample_count, model.seed)?;
    Ok(())
}

fn cmd_zones(ctx: &Ctx, room: Option<(f64, f64)>, radius: Option<f64>) -> anyhow::Result<()> {
    let plan = room_args(ctx, room, radius).plan()?;
    let model = zoning::monte_carlo_zone_model(&plan, ctx.config.zoning.samples, ctx.config.seed)?;
    let (path, mut w) = ctx.create("zones.csv")?;
    model.write_csv(&mut w)?;
    w.flush()?;
    ctx.finish("zones", vec![path], None)
}

fn cmd_experiment(ctx: &Ctx, name: Experiment) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let (label, file) = match name {
        Experiment::Fig16 => ("fig16", "fig16_idle_probability.csv"),
        Experiment::Fig17 => ("fig17", "fig17_femto_sinr.csv"),
        Experiment::Fig18 => ("fig18", "fig18_handover_success.csv"),
        Experiment::Fig19 => ("fig19", "fig19_vehicle_capacity.csv"),
        Experiment::Fig20 => ("fig20", "fig20_vehicle_outage.csv"),
        Experiment::Fig21 => ("fig21", "fig21_link_reliability.csv"),
    };
    // Compute before touching the output so a failure leaves no partial file.
    let mut buf = Vec::new();
    match name {
        Experiment::Fig16 => engine::idle_probability_experiment(&cfg.idle())?.write_csv(&mut buf)?,
        Experiment::Fig17 => engine::femto_sinr_experiment(&cfg.femto())?.write_csv(&mut buf)?,
        Experiment::Fig18 => engine::handover_success_experiment(&cfg.handover())?.write_csv(&mut buf)?,
        Experiment::Fig19 => transport::write_capacity_csv(&transport::capacity_sweep(&cfg.vehicle())?, &mut buf)?,
        Experiment::Fig20 => transport::write_outage_csv(&transport::outage_sweep(&cfg.vehicle())?, &mut buf)?,
        Experiment::Fig21 => {
            transport::write_reliability_csv(&transport::reliability_sweep(&cfg.reliability())?, &mut buf)?
        }
    }
    let (path, mut w) = ctx.create(file)?;
    w.write_all(&buf)?;
    w.flush()?;
    ctx.finish(label, vec![path], None)
}

fn cmd_trace(
    ctx: &Ctx,
    kind: HandoverKind,
    hop_ms: Option<f64>,
    jitter_ms: Option<f64>,
    drop_steps: &[u32],
    retries: u32,
) -> anyhow::Result<()> {
    let pc = &ctx.config.protocol;
    let base_s = hop_ms.map_or(pc.hop_latency_s, |ms| ms / 1000.0);
    let jitter_s = jitter_ms.map_or(pc.jitter_s, |ms| ms / 1000.0);
    let latency = if jitter_s > 0.0 {
        LatencyModel::Jittered { base_s, jitter_s, seed: ctx.config.seed }
    } else {
        LatencyModel::Fixed { per_hop_s: base_s }
    };
    let mut faults = FaultPlan { retry_budget: retries, retransmit_timeout_s: pc.retransmit_timeout_s, ..FaultPlan::none() };
    for &s in drop_steps {
        *faults.drops.entry(s).or_insert(0) += 1;
    }
    let trace = protocol::run_handover(kind, &Topology::for_kind(kind), &latency, &faults)?;
    if let Err(v) = protocol::validate_trace(&trace) {
        anyhow::bail!("trace failed validation at {v}");
    }
    let name = format!("trace-{kind}");
    let (path, mut w) = ctx.create(&format!("{name}.csv"))?;
    trace.write_csv(&mut w)?;
    w.flush()?;
    println!("outcome: {} steps: {} latency_s: {}", trace.outcome, trace.messages.len(), trace.latency_s);
    ctx.finish(&name, vec![path], Some(trace.outcome.to_string()))
}

fn cmd_indoor(ctx: &Ctx) -> anyhow::Result<()> {
    let metrics = engine::simulate_indoor(&ctx.config.scenario())?;
    let (path, mut w) = ctx.create("indoor_metrics.json")?;
    serde_json::to_writer_pretty(&mut w, &metrics)?;
    w.write_all(b"\n")?;
    w.flush()?;
    let a = &metrics.admissions;
    println!(
        "admissions: fap {} lifi {} redirected {} blocked {}",
        a.accept_on_fap, a.accept_on_lifi, a.redirected, a.blocked
    );
    for kind in HandoverKind::ALL {
        let h = metrics.handovers(kind);
        println!("{kind}: attempted {} completed {} failed {} blocked {}", h.attempted, h.completed, h.failed, h.blocked);
    }
    println!(
        "fap_idle_time_fraction: {:.4} dropped_calls: {} invariant_violations: {}",
        metrics.fap_idle_time_fraction, metrics.dropped_calls, metrics.invariant_violations
    );
    ctx.finish("indoor-sim", vec![path], None)
}

