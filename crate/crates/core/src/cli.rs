//! Command-line experiment runner.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 for
//! runtime failures.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{parse_config, to_toml, RunConfig};
use crate::crossbar::{trace_pair, Scheme};
use crate::device::{DeviceModel, DevicePreset};
use crate::error::{Error, Result};
use crate::latency_theory::{latency_bound, mc_write_latency, LatencyMode};
use crate::modem::{format_mer, gray_encode};
use crate::pipeline::{
    digital_cost, sweep_antennas, sweep_snr, transmit_image, GrayImage, LatencyRow, MetricsRow, ProcessorProfile, Transceiver,
    Variant, Workload,
};
use crate::rng;

#[derive(Debug, Parser)]
#[command(name = "rram-baseband", version, about = "RRAM crossbar MIMO-OFDM baseband simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Configuration file (TOML).
    #[arg(long, global = true, env = "RRAM_BASEBAND_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; a manifest is written next to it. Defaults to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate frames and write per-frame metrics.
    Simulate {
        /// Number of frames.
        #[arg(long, default_value_t = 1)]
        frames: usize,
    },
    /// MER/BER versus SNR for each configured variant.
    SweepSnr,
    /// Frame latency and energy versus antenna count.
    SweepAntennas,
    /// Per-pulse trace of programming one differential pair.
    ProgramTrace {
        /// Signed target as a fraction of the full range.
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        value: f64,
        /// Write scheme; defaults to the configured one.
        #[arg(long)]
        scheme: Option<String>,
    },
    /// Monte Carlo write latency against the closed-form bounds.
    Bounds {
        /// Array sizes (n x n); defaults to the configured list.
        #[arg(long, num_args = 1..)]
        n: Vec<usize>,
        /// Monte Carlo trials per point.
        #[arg(long)]
        trials: Option<usize>,
        /// Device preset; defaults to the configured device.
        #[arg(long)]
        preset: Option<String>,
        /// `analytic` or `discrete`; defaults to the configured modes.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Send a binary PGM image through the link.
    Image {
        /// Binary (P5) PGM image to send.
        #[arg(long)]
        input: PathBuf,
        /// Recovered image path.
        #[arg(long)]
        output: PathBuf,
    },
    /// Binary to Gray code table.
    Gray {
        /// Code width in bits (1 to 16).
        #[arg(long, default_value_t = 4)]
        width: u32,
    },
    /// Digital baseline latency and energy for the configured frame.
    Cost {
        /// Processor profile (TOML); defaults to the combined 65 nm profile.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::SweepSnr => "sweep-snr",
            Command::SweepAntennas => "sweep-antennas",
            Command::ProgramTrace { .. } => "program-trace",
            Command::Bounds { .. } => "bounds",
            Command::Image { .. } => "image",
            Command::Gray { .. } => "gray",
            Command::Cost { .. } => "cost",
        }
    }
}

/// Entry point used by the binary.
pub fn main() -> i32 {
    run_command(std::env::args_os())
}

/// Parses `argv` (including the program name) and runs it.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.global.config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        cfg.frame.seed = s;
    }
    let jobs = cli.global.jobs.unwrap_or(0);
    if cli.global.jobs == Some(0) {
        return Err(Error::config("jobs", "must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let start = Instant::now();
    let (body, extra) = pool.install(|| produce(&cli.command, &cfg))?;
    match &cli.global.out {
        None => {
            std::io::stdout().write_all(body.as_bytes())?;
        }
        Some(path) => {
            std::fs::write(path, &body)?;
            let mut artifacts = vec![artifact(path, body.as_bytes())];
            artifacts.extend(extra.iter().map(|(p, b)| artifact(p, b)));
            write_manifest(path, cli.command.name(), &cfg, artifacts, start.elapsed().as_secs_f64())?;
        }
    }
    Ok(())
}

type Extra = Vec<(PathBuf, Vec<u8>)>;

fn produce(cmd: &Command, cfg: &RunConfig) -> Result<(String, Extra)> {
    let f = &cfg.frame;
    let mut extra = Vec::new();
    let body = match cmd {
        Command::Simulate { frames } => {
            if *frames == 0 {
                return Err(Error::config("frames", "must be positive"));
            }
            let tr = Transceiver::new(f)?;
            let variant = if f.processing == crate::pipeline::Processing::Digital {
                Variant::Digital
            } else {
                Variant::Rram(f.scheme)
            };
            let mut rows = Vec::new();
            for i in 0..*frames {
                let r = tr.run_frame(i as u64, None)?.result;
                eprintln!(
                    "frame {i}: mer_db={} ber={} latency_s={} (program {} + data {}) energy_j={} throughput_bps={} efficiency_bpj={} failures={}",
                    format_mer(r.metrics.mer_db),
                    r.metrics.ber,
                    r.latency(),
                    r.latency_program,
                    r.latency_data,
                    r.energy(),
                    r.throughput,
                    r.energy_efficiency,
                    r.detection_failures
                );
                rows.push(MetricsRow {
                    snr_db: f.snr_db,
                    scheme: variant.scheme_label().into(),
                    mode: variant.mode_label().into(),
                    trial: i,
                    mer_db: r.metrics.mer_db,
                    ber: r.metrics.ber,
                });
            }
            metrics_csv(&rows)
        }
        Command::SweepSnr => metrics_csv(&sweep_snr(f, &cfg.sweep.variants, &cfg.sweep.snr_db, cfg.sweep.trials)?),
        Command::SweepAntennas => {
            let schemes: Vec<Scheme> = cfg
                .sweep
                .variants
                .iter()
                .filter_map(|v| match v {
                    Variant::Rram(s) => Some(*s),
                    Variant::Digital => None,
                })
                .collect();
            latency_csv(&sweep_antennas(f, &schemes, &cfg.sweep.antennas, cfg.sweep.trials)?)
        }
        Command::ProgramTrace { value, scheme } => {
            let scheme = match scheme {
                Some(s) => s.parse()?,
                None => f.scheme,
            };
            if !value.is_finite() || value.abs() > 1.0 {
                return Err(Error::config("value", "must lie in [-1, 1]"));
            }
            let events = trace_pair(*value, scheme, &f.device, &f.program, &mut rng::stream(f.seed, &[0x7ace]));
            let mut s = String::from("pulse_index,target,side,voltage_v,conductance_s,latency_s,energy_j\n");
            let (mut t, mut e) = (0.0, 0.0);
            for (i, ev) in events.iter().enumerate() {
                t += ev.duration;
                e += ev.energy;
                s += &format!("{},{},{},{},{},{},{}\n", i, ev.target, ev.side.name(), ev.voltage, ev.conductance, t, e);
            }
            s
        }
        Command::Bounds { n, trials, preset, mode } => {
            let model: DeviceModel = match preset {
                Some(p) => p.parse::<DevicePreset>()?.model(),
                None => f.device.clone(),
            };
            let ns = if n.is_empty() { cfg.bounds.n.clone() } else { n.clone() };
            let trials = trials.unwrap_or(cfg.bounds.trials);
            let modes = match mode.as_deref() {
                None => cfg.bounds.modes.clone(),
                Some("analytic") => vec![LatencyMode::Analytic],
                Some("discrete") => vec![LatencyMode::Discrete],
                Some(m) => return Err(Error::config("mode", format!("unknown latency mode `{m}`"))),
            };
            let mut s = String::from("n,scheme,mode,mc_mean,ci95,bound\n");
            for &k in &ns {
                for scheme in [Scheme::WithoutVerification, Scheme::WithVerification] {
                    let bound = latency_bound(scheme, k, k, &model)?.bound;
                    for &m in &modes {
                        let mut r = rng::stream(f.seed, &[k as u64, scheme as u64, m as u64]);
                        let mc = mc_write_latency(k, k, &model, scheme, m, trials, &mut r)?;
                        s += &format!("{},{},{},{},{},{}\n", k, scheme.name(), m.name(), mc.write.mean, opt(mc.write.ci95), bound);
                    }
                }
            }
            s
        }
        Command::Image { input, output } => {
            let data = std::fs::read(input).map_err(|e| Error::Image(format!("cannot read {}: {e}", input.display())))?;
            let img = GrayImage::read_pgm(&data)?;
            let (rec, m) = transmit_image(&img, f)?;
            let bytes = rec.to_pgm();
            std::fs::write(output, &bytes)?;
            extra.push((output.clone(), bytes));
            let v = if f.processing == crate::pipeline::Processing::Digital {
                Variant::Digital
            } else {
                Variant::Rram(f.scheme)
            };
            metrics_csv(&[MetricsRow {
                snr_db: f.snr_db,
                scheme: v.scheme_label().into(),
                mode: v.mode_label().into(),
                trial: 0,
                mer_db: m.mer_db,
                ber: m.ber,
            }])
        }
        Command::Gray { width } => {
            if !(1..=16).contains(width) {
                return Err(Error::config("width", "must lie in 1..=16"));
            }
            let w = *width as usize;
            let mut s = String::from("decimal,binary,gray\n");
            for n in 0..(1u64 << w) {
                s += &format!("{},{:0w$b},{:0w$b}\n", n, n, gray_encode(n), w = w);
            }
            s
        }
        Command::Cost { profile } => {
            let p = match profile {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    toml::from_str::<ProcessorProfile>(&text).map_err(|e| Error::Parse {
                        line: e.span().map_or(0, |sp| text[..sp.start].matches('\n').count() + 1),
                        message: e.message().to_string(),
                    })?
                }
                None => ProcessorProfile::combined_65nm(),
            };
            let c = digital_cost(&Workload::from(f), &p)?;
            format!(
                "profile,latency_s,energy_j,fft_latency_s,detection_latency_s,fft_energy_j,detection_energy_j\n{},{},{},{},{},{},{}\n",
                p.name,
                c.latency(),
                c.energy(),
                c.fft_latency,
                c.detection_latency,
                c.fft_energy,
                c.detection_energy
            )
        }
    };
    Ok((body, extra))
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("snr_db,scheme,mode,trial,mer_db,ber\n");
    for r in rows {
        s += &format!("{},{},{},{},{},{}\n", r.snr_db, r.scheme, r.mode, r.trial, format_mer(r.mer_db), r.ber);
    }
    s
}

pub fn latency_csv(rows: &[LatencyRow]) -> String {
    let mut s = String::from("n_antennas,scheme,latency_s,energy_j,ci95\n");
    for r in rows {
        s += &format!("{},{},{},{},{}\n", r.n_antennas, r.scheme, r.latency_s, r.energy_j, opt(r.ci95));
    }
    s
}

#[derive(Serialize)]
struct Artifact {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    wall_clock_s: f64,
    notes: Vec<&'a str>,
    config: String,
    artifacts: Vec<Artifact>,
}

fn artifact(path: &Path, bytes: &[u8]) -> Artifact {
    let digest = Sha256::digest(bytes);
    Artifact {
        path: path.display().to_string(),
        sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.toml");
    out.with_file_name(name)
}

fn write_manifest(out: &Path, command: &str, cfg: &RunConfig, artifacts: Vec<Artifact>, wall: f64) -> Result<()> {
    let mut notes = Vec::new();
    if command == "bounds" {
        notes.push("bounds use the full conductance range g_max - g_min in place of G_max");
    }
    let m = Manifest {
        command,
        seed: cfg.frame.seed,
        wall_clock_s: wall,
        notes,
        config: to_toml(cfg)?,
        artifacts,
    };
    let text = toml::to_string(&m).map_err(|e| Error::InvalidInput(format!("cannot serialize manifest: {e}")))?;
    std::fs::write(manifest_path(out), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_command(["rram-baseband", "no-such-command"]), 1);
        assert_eq!(run_command(["rram-baseband", "gray", "--width", "0"]), 1);
    }

    #[test]
    fn manifest_name() {
        assert_eq!(manifest_path(Path::new("/tmp/x.csv")), PathBuf::from("/tmp/x.csv.manifest.toml"));
    }
}
