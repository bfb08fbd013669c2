use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use usar_providers::bridge::{echo_handler, oracle_handler};
use usar_providers::{serve_bridge, ArtifactMode, LatencyModel, ProviderKind};
use usar_server::ServerConfig;
use usar_evalbench::{
    bench_latency, eval_measurements, eval_segmentation, BenchConfig, Dataset, PhantomDataset,
};

#[derive(Parser)]
#[command(name = "usar", version, about = "Ultrasound kidney segmentation streaming and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Stream frames and segmentations to datagram and WebSocket clients.
    Serve(ServeArgs),
    /// Score a provider on a replay dataset.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Measure pipeline latency over loopback.
    Bench(BenchArgs),
    /// Write a phantom dataset with reference dimensions.
    GenPhantom(GenArgs),
    /// Run a reference segmentation process for `--provider bridge:<addr>`.
    Bridge(BridgeArgs),
}

#[derive(Args)]
struct ServeArgs {
    /// key=value settings file, applied before the options below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// phantom or replay:<dir>
    #[arg(long)]
    source: Option<String>,
    /// oracle, oracle:erode=<r> or bridge:<host:port>
    #[arg(long)]
    provider: Option<String>,
    /// Simulated oracle delay as mean,std in ms, or nnunet, segmenter, zero.
    #[arg(long)]
    latency_profile: Option<String>,
    #[arg(long)]
    fps: Option<String>,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    udp_port: Option<String>,
    #[arg(long)]
    ws_port: Option<String>,
    /// Millimetres per pixel.
    #[arg(long)]
    pixel_spacing: Option<String>,
    #[arg(long)]
    max_in_flight: Option<String>,
    /// Stop after this many frames.
    #[arg(long)]
    frames: Option<String>,
    /// JSON-lines event log; `-` for standard error.
    #[arg(long)]
    event_log: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Any other setting, e.g. `--set phantom_noise=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    settings: Vec<String>,
}

impl ServeArgs {
    fn into_config(self) -> Result<ServerConfig> {
        let mut config = ServerConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        let flags = [
            ("source", self.source),
            ("provider", self.provider),
            ("latency_profile", self.latency_profile),
            ("fps", self.fps),
            ("bind", self.bind),
            ("udp_port", self.udp_port),
            ("ws_port", self.ws_port),
            ("pixel_spacing", self.pixel_spacing),
            ("max_in_flight", self.max_in_flight),
            ("frames", self.frames),
            ("event_log", self.event_log),
            ("seed", self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.apply(key, &v)?;
            }
        }
        for s in &self.settings {
            let Some((k, v)) = s.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {s:?}");
            };
            config.apply(k.trim(), v.trim())?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum EvalCmd {
    /// DICE, IoU and mAP per class.
    Seg(EvalArgs),
    /// Length, width and thickness errors against the reference dimensions.
    Measure(EvalArgs),
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "oracle")]
    provider: ProviderKind,
    #[arg(long, default_value = "zero")]
    latency_profile: LatencyModel,
    /// Spacing for entries without one in their sidecar.
    #[arg(long)]
    pixel_spacing: Option<f64>,
    /// Write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    #[arg(long, default_value = "512x512", value_parser = parse_size)]
    size: (usize, usize),
    /// Seconds of streaming.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value = "zero")]
    latency_profile: LatencyModel,
    #[arg(long, default_value = "oracle")]
    provider: ProviderKind,
    #[arg(long, default_value_t = 64)]
    max_in_flight: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    coronal: usize,
    #[arg(long, default_value_t = 50)]
    transverse: usize,
    #[arg(long, default_value = "320x320", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, default_value_t = 0.5)]
    pixel_spacing: f64,
    /// none, mild or severe
    #[arg(long, default_value = "none")]
    artifact: ArtifactMode,
    #[arg(long, default_value_t = 0.25)]
    noise: f64,
    /// Orient each kidney at random instead of along the x axis.
    #[arg(long)]
    rotate: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BridgeArgs {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:9200")]
    listen: String,
    /// Server settings file; its phantom settings must match the server's.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Erosion radius applied to the regenerated phantom mask.
    #[arg(long, default_value_t = 0)]
    erode: u32,
    /// Reply with all-background masks instead.
    #[arg(long)]
    echo: bool,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad size {s:?}"));
    match (parse(w)?, parse(h)?) {
        (0, _) | (_, 0) => Err(format!("empty size {s:?}")),
        size => Ok(size),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

async fn eval(cmd: EvalCmd) -> Result<()> {
    let (kind, args) = match cmd {
        EvalCmd::Seg(a) => ("segmentation", a),
        EvalCmd::Measure(a) => ("measurement", a),
    };
    let dataset = Dataset::load(&args.dataset, args.pixel_spacing)?;
    let provider = args.provider.build(args.latency_profile, args.seed);
    if kind == "segmentation" {
        let report = eval_segmentation(&dataset, provider.as_ref()).await?;
        print!("{}", report.to_table());
        if let Some(out) = &args.out {
            write_json(out, &Tagged { kind, body: &report })?;
        }
    } else {
        let report = eval_measurements(&dataset, provider.as_ref()).await?;
        print!("{}", report.to_table());
        if let Some(out) = &args.out {
            write_json(out, &Tagged { kind, body: &report })?;
        }
    }
    Ok(())
}

async fn bench(args: BenchArgs) -> Result<()> {
    if !(args.duration > 0.0 && args.duration.is_finite()) {
        bail!("--duration must be positive");
    }
    if !(args.fps > 0.0 && args.fps.is_finite()) {
        bail!("--fps must be positive");
    }
    let config = BenchConfig {
        fps: args.fps,
        width: args.size.0,
        height: args.size.1,
        duration: Duration::from_secs_f64(args.duration),
        provider: args.provider,
        latency: args.latency_profile,
        max_in_flight: args.max_in_flight,
        seed: args.seed,
    };
    let report = bench_latency(&config).await?;
    print!("{}", report.to_table());
    if let Some(out) = &args.out {
        write_json(out, &Tagged { kind: "latency", body: &report })?;
    }
    Ok(())
}

fn gen_phantom(args: GenArgs) -> Result<()> {
    let spec = PhantomDataset {
        coronal: args.coronal,
        transverse: args.transverse,
        width: args.size.0,
        height: args.size.1,
        pixel_spacing: args.pixel_spacing,
        artifact: args.artifact,
        noise: args.noise,
        rotate: args.rotate,
        seed: args.seed,
    };
    let samples = spec.write(&args.out)?;
    println!("wrote {} entries to {}", samples.len(), args.out.display());
    Ok(())
}

async fn bridge(args: BridgeArgs) -> Result<()> {
    let mut config = ServerConfig::default();
    if let Some(path) = &args.config {
        config.apply_file(path)?;
    }
    let handler = if args.echo {
        echo_handler()
    } else {
        oracle_handler(config.phantom.clone(), args.erode)
    };
    let listener = tokio::net::TcpListener::bind(&args.listen)
        .await
        .with_context(|| format!("binding {}", args.listen))?;
    log::info!("bridge listening on {}", listener.local_addr()?);
    serve_bridge(listener, handler).await?;
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Cmd::Serve(args) => {
            let summary = usar_server::serve(args.into_config()?).await?;
            log::info!(
                "done: {} frames, {} segmented, {} failed, {} skipped",
                summary.frames,
                summary.segmented,
                summary.failed,
                summary.skipped
            );
        }
        Cmd::Eval(cmd) => eval(cmd).await?,
        Cmd::Bench(args) => bench(args).await?,
        Cmd::GenPhantom(args) => gen_phantom(args)?,
        Cmd::Bridge(args) => bridge(args).await?,
    }
    Ok(())
}
