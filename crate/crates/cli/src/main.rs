//! `vlp`: run positioning sweeps, comparisons and channel dumps.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vlp_core::channel::{
    dc_gain, rms_delay_spread, simulate_impulse_response, worst_case_cp_samples,
};
use vlp_core::experiment::{
    compare_runs, run_sweep, summarize, write_compare_csv, write_summary_csv, ChannelCache,
    ErrorMap, ExperimentConfig, Modulation, Preset, Summary,
};

type CliResult<T> = std::result::Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(
    name = "vlp",
    version,
    about = "Indoor visible-light positioning simulator (ACO-OFDM vs OOK)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the receiver grid and write points, probes and summary CSVs.
    Sweep(Common),
    /// Sweep several configurations and tabulate their summaries.
    Compare {
        #[command(flatten)]
        common: Common,
        /// One axis to vary, `key=v1,v2,...`; keys: snr, power, m, n,
        /// modulation, seed.
        #[arg(long)]
        vary: Option<String>,
    },
    /// Dump the impulse responses seen by a receiver at (x, y).
    Channel {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
    },
    /// Recompute summary.csv from a finished run directory.
    Summarize {
        /// Directory written by `vlp sweep`.
        run: PathBuf,
        /// Where to write summary.csv (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; `compare` accepts it more than once.
    #[arg(long)]
    config: Vec<PathBuf>,
    /// Experiment seed for payloads and noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Preset applied on top of the configuration; repeatable.
    #[arg(long, value_parser = parse_preset)]
    preset: Vec<Preset>,
    /// Disable receiver noise.
    #[arg(long)]
    no_noise: bool,
    /// Grid size, `N` or `NXxNY`.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse::<Preset>().map_err(|e| e.to_string())
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let num = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|e| format!("grid '{s}': {e}"))
    };
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((num(a)?, num(b)?)),
        None => num(s).map(|n| (n, n)),
    }
}

impl Common {
    fn configs(&self) -> CliResult<Vec<ExperimentConfig>> {
        let base = if self.config.is_empty() {
            vec![ExperimentConfig::default()]
        } else {
            self.config
                .iter()
                .map(|p| ExperimentConfig::load(p))
                .collect::<vlp_core::Result<_>>()?
        };
        Ok(base.into_iter().map(|c| self.apply(c)).collect())
    }

    fn single(&self) -> CliResult<ExperimentConfig> {
        let mut cfgs = self.configs()?;
        if cfgs.len() != 1 {
            return Err("this subcommand takes at most one --config".into());
        }
        Ok(cfgs.remove(0))
    }

    fn apply(&self, cfg: ExperimentConfig) -> ExperimentConfig {
        let mut cfg = cfg.with_presets(&self.preset);
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.no_noise {
            cfg.noise.enabled = false;
        }
        if let Some((nx, ny)) = self.grid {
            cfg.grid_nx = nx;
            cfg.grid_ny = ny;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg
    }
}

fn print_summaries(labels: &[String], summaries: &[Summary]) {
    println!(
        "{:<18} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10}",
        "run", "corner_m", "edge_m", "center_m", "rect_m", "total_m", "unresolved"
    );
    for (l, s) in labels.iter().zip(summaries) {
        println!(
            "{:<18} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>10}",
            l, s.corner, s.edge, s.center, s.rms_rect, s.rms_total, s.unresolved
        );
    }
}

fn sweep(common: &Common) -> CliResult<()> {
    let cfg = common.single()?;
    let map = run_sweep(&cfg, &ChannelCache::new())?;
    let summary = map.write_run(&cfg.output_dir, &cfg)?;
    print_summaries(&[cfg.modulation.to_string()], &[summary]);
    eprintln!("wrote {}", cfg.output_dir.display());
    Ok(())
}

/// Expand `key=v1,v2,...` over `base` into labelled configurations.
fn vary(base: &ExperimentConfig, spec: &str) -> CliResult<Vec<(String, ExperimentConfig)>> {
    let (key, values) = spec.split_once('=').ok_or("--vary expects key=v1,v2,...")?;
    let key = key.trim();
    let mut out = Vec::new();
    for v in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        let mut c = base.clone();
        match key {
            "snr" => c.set_snr_db(v.parse()?),
            "power" => c.target_power_dbm = v.parse()?,
            "m" => c.ofdm.qam_order = v.parse()?,
            "n" => c.ofdm.n_subcarriers = v.parse()?,
            "modulation" => c.modulation = v.parse::<Modulation>()?,
            "seed" => c.seed = v.parse()?,
            _ => return Err(format!("unknown --vary key '{key}'").into()),
        }
        out.push((format!("{key}={v}"), c));
    }
    Ok(out)
}

fn compare(common: &Common, spec: Option<&str>) -> CliResult<()> {
    let configs = common.configs()?;
    let runs: Vec<(String, ExperimentConfig)> = match (spec, configs.len()) {
        (Some(spec), 1) => vary(&configs[0], spec)?,
        (Some(_), _) => return Err("--vary needs exactly one base configuration".into()),
        (None, _) => common
            .config
            .iter()
            .zip(configs)
            .map(|(p, c)| {
                (
                    p.file_stem()
                        .unwrap_or_default()
                        .to_string_lossy()
                        .into_owned(),
                    c,
                )
            })
            .collect(),
    };
    if runs.len() < 2 {
        return Err("compare needs at least two runs: repeat --config or pass --vary".into());
    }
    let (labels, cfgs): (Vec<String>, Vec<ExperimentConfig>) = runs.into_iter().unzip();
    let summaries = compare_runs(&cfgs, &ChannelCache::new())?;

    let out = common
        .out
        .clone()
        .unwrap_or_else(|| cfgs[0].output_dir.clone());
    std::fs::create_dir_all(&out)?;
    write_compare_csv(File::create(out.join("compare.csv"))?, &labels, &summaries)?;
    print_summaries(&labels, &summaries);
    eprintln!("wrote {}", out.join("compare.csv").display());
    Ok(())
}

fn channel(common: &Common, x: f64, y: f64) -> CliResult<()> {
    let cfg = common.single()?;
    cfg.validate()?;
    let rcv = cfg.receiver.at(x, y);
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut irs = Vec::new();
    println!(
        "{:<6} {:>4} {:>12} {:>12} {:>10}",
        "link", "id", "dc_gain", "rms_spread_s", "non_los"
    );
    for (k, lum) in cfg.luminaires.iter().enumerate() {
        // same stream as the sweep would use for this link
        let params = ChannelCache::link_params(&cfg.channel, &rcv, k);
        let ir = simulate_impulse_response(&cfg.room, lum, &rcv, &params)?;
        let path = cfg
            .output_dir
            .join(format!("ir_link{}_id{}.csv", k + 1, lum.id_code));
        ir.write_csv(File::create(&path)?)?;
        let spread = rms_delay_spread(&ir).unwrap_or(f64::NAN);
        println!(
            "{:<6} {:>4} {:>12.4e} {:>12.4e} {:>10.4}",
            k + 1,
            lum.id_code,
            dc_gain(&ir),
            spread,
            ir.non_los_fraction()
        );
        irs.push(ir);
    }
    println!(
        "cyclic prefix at {:.0} MHz: {} samples",
        cfg.ofdm.sample_rate / 1e6,
        worst_case_cp_samples(&irs, cfg.ofdm.sample_rate)?
    );
    eprintln!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn summarize_run(run: &Path, out: Option<&Path>) -> CliResult<()> {
    let (cfg, map): (ExperimentConfig, ErrorMap) = ErrorMap::read_run(run)?;
    let summary = summarize(&map);
    let dir = out.unwrap_or(run);
    std::fs::create_dir_all(dir)?;
    write_summary_csv(
        File::create(dir.join("summary.csv"))?,
        std::slice::from_ref(&summary),
    )?;
    print_summaries(&[cfg.modulation.to_string()], &[summary]);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep(common) => sweep(common),
        Command::Compare { common, vary } => compare(common, vary.as_deref()),
        Command::Channel { common, x, y } => channel(common, *x, *y),
        Command::Summarize { run, out } => summarize_run(run, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
