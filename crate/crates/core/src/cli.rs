//! Command-line front end. Every subcommand writes its CSV output and a
//! `manifest.json` into `--out`; files land via temp-file-and-rename so a
//! reader never sees a partial artifact.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::allowlist::{extract_allowlist, write_feasible_dump, LinkMode, OpCounter, SiProjection};
use crate::codebook::{azimuth_cut, write_array_factor_csv};
use crate::config::{ScenarioConfig, VariantChoice};
use crate::error::{Error, Result};
use crate::evaluate::{results_path, write_results_csv, write_sweep_csv, EvalResult, Method, Scenario};
use crate::validate::{run_suite, CheckReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fdbeam", version, about = "Saturation-safe beam allowlists for mmWave full-duplex links")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML); defaults apply when absent.
    #[arg(long, global = true, env = "FDBEAM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Restrict the run to one method (e.g. `proposed-c4`, `ideal-fd`, or `proposed`).
    #[arg(long, global = true, env = "FDBEAM_METHOD")]
    pub method: Option<String>,
    /// Saturation test used by `proposed` and `allowlist`: c3, c4 or c4-pruned.
    #[arg(long, global = true, env = "FDBEAM_VARIANT")]
    pub variant: Option<String>,
    /// SI source: `stochastic` or a path-list CSV.
    #[arg(long, global = true, env = "FDBEAM_SI")]
    pub si: Option<String>,
    #[arg(long, global = true, env = "FDBEAM_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, env = "FDBEAM_TRIALS")]
    pub trials: Option<usize>,
    #[arg(long, global = true, env = "FDBEAM_OUT", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Monte Carlo SNR sweep of every configured method.
    Run,
    /// Sweep LNA caps and ADC resolutions.
    SweepRx,
    /// Build and dump the allowlist for the configured SI channel (trial 0).
    Allowlist,
    /// Beam patterns of the DFT codebook along an azimuth cut.
    ArrayFactor {
        #[arg(long, default_value_t = 45.0)]
        elevation_deg: f64,
        #[arg(long, default_value_t = 1.0)]
        step_deg: f64,
        /// Comma-separated beam ids; the whole codebook when absent.
        #[arg(long, value_delimiter = ',')]
        beams: Option<Vec<u32>>,
    },
    /// Seeded property suite on random instances.
    Validate,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub codebook_sha256: String,
    pub outputs: Vec<OutputEntry>,
    pub counters: OpCounter,
    pub notes: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` to `dir/name` through a sibling temp file and a rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<OutputEntry> {
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, dir.join(name))?;
    Ok(OutputEntry {
        path: name.to_string(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(bytes),
    })
}

/// Loads the config and applies flag overrides, revalidating the result.
pub fn resolve_config(args: &CommonArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(v) = &args.variant {
        cfg.link.variant = VariantChoice::parse(v).ok_or_else(|| Error::Config(format!("--variant: unknown variant `{v}`")))?;
    }
    if let Some(s) = &args.si {
        cfg.si.source = s.clone();
    }
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.run.trials = t;
    }
    if let Some(m) = &args.method {
        let method = if m == "proposed" {
            cfg.link.variant.method()
        } else {
            Method::parse(m).ok_or_else(|| Error::Config(format!("--method: unknown method `{m}`")))?
        };
        cfg.run.methods = vec![method];
        cfg.sweep.methods = vec![method];
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Outcome {
    outputs: Vec<OutputEntry>,
    counters: OpCounter,
    notes: Vec<String>,
    codebook_sha256: String,
    code: i32,
}

fn total_ops(results: &[&EvalResult]) -> OpCounter {
    let mut c = OpCounter::default();
    for r in results {
        for t in &r.trials {
            c.merge(&t.ops);
        }
    }
    c
}

fn infeasible_notes(results: &[&EvalResult]) -> (Vec<String>, bool) {
    let proposed: Vec<_> = results.iter().filter(|r| r.method.condition().is_some()).collect();
    let mut notes: Vec<String> = results
        .iter()
        .filter(|r| r.fallback_trials > 0)
        .map(|r| format!("{}: {} of {} trials had an empty feasible set", r.method.label(), r.fallback_trials, r.trials.len()))
        .collect();
    for r in results {
        notes.extend(r.invariant_violations());
    }
    let everywhere = !proposed.is_empty() && proposed.iter().all(|r| r.infeasible_everywhere());
    (notes, everywhere)
}

fn cmd_run(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let sc = Scenario::new(cfg.clone())?;
    let results = sc.run_methods(&cfg.run.methods)?;
    let mut buf = Vec::new();
    write_results_csv(&mut buf, &results, cfg.run.hd_reference)?;
    let name = results_path(Path::new("")).to_string_lossy().into_owned();
    let entry = write_atomic(out, &name, &buf)?;
    let refs: Vec<&EvalResult> = results.iter().collect();
    let (notes, everywhere) = infeasible_notes(&refs);
    Ok(Outcome {
        outputs: vec![entry],
        counters: total_ops(&refs),
        notes,
        codebook_sha256: sc.codebook.hash(),
        code: if everywhere { EXIT_INFEASIBLE } else { EXIT_OK },
    })
}

fn cmd_sweep(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let sc = Scenario::new(cfg.clone())?;
    let cells = sc.sweep_rx_components(&cfg.sweep.lna_grid_dbm, &cfg.sweep.adc_bits_grid, &cfg.sweep.methods)?;
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &cells)?;
    let entry = write_atomic(out, "sweep_rx.csv", &buf)?;
    let refs: Vec<&EvalResult> = cells.iter().map(|c| &c.result).collect();
    let (notes, everywhere) = infeasible_notes(&refs);
    Ok(Outcome {
        outputs: vec![entry],
        counters: total_ops(&refs),
        notes,
        codebook_sha256: sc.codebook.hash(),
        code: if everywhere { EXIT_INFEASIBLE } else { EXIT_OK },
    })
}

fn cmd_allowlist(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let sc = Scenario::new(cfg.clone())?;
    let cb = &sc.codebook;
    let eta = sc.eta(&cfg.thresholds())?;
    let w_rf = match &cfg.allowlist.rx_combiner {
        Some(ids) => Some(cb.columns_for(ids)?),
        None => None,
    };
    let taps = sc.si_taps(0)?;
    let proj = SiProjection::transmit_taps(cb, &taps, cfg.link.num_subcarriers, &eta, w_rf.as_ref())?;
    let mut counters = OpCounter::default();
    let fs = match cfg.link.variant {
        VariantChoice::C4Pruned => proj.build_pruned(cfg.link.l_t, LinkMode::TxOnly, &mut counters)?,
        v => proj.build(cfg.link.l_t, v.condition(), LinkMode::TxOnly, &mut counters)?,
    };
    let al = extract_allowlist(&fs, cb);
    let mut dump = Vec::new();
    write_feasible_dump(&mut dump, &fs, &al)?;
    let mut csv_buf = Vec::new();
    {
        let mut wtr = csv::Writer::from_writer(&mut csv_buf);
        wtr.write_record(["beam_id"])?;
        for id in &al.beam_ids {
            wtr.write_record([id.to_string()])?;
        }
        wtr.flush()?;
    }
    let outputs = vec![write_atomic(out, "feasible_set.txt", &dump)?, write_atomic(out, "allowlist.csv", &csv_buf)?];
    let empty = fs.is_empty();
    Ok(Outcome {
        outputs,
        counters,
        notes: if empty { vec!["no beam combination passes the saturation test".into()] } else { vec![] },
        codebook_sha256: cb.hash(),
        code: if empty { EXIT_INFEASIBLE } else { EXIT_OK },
    })
}

fn cmd_array_factor(cfg: &ScenarioConfig, out: &Path, elevation_deg: f64, step_deg: f64, beams: Option<&[u32]>) -> Result<Outcome> {
    if !(step_deg > 0.0 && step_deg <= 360.0) {
        return Err(Error::Config(format!("--step-deg: must lie in (0, 360], got {step_deg}")));
    }
    let geometry = cfg.geometry();
    let full = crate::codebook::gen_dft_codebook(&geometry);
    let cb = match beams {
        Some(ids) => full.subset(ids)?,
        None => full,
    };
    let grid = azimuth_cut(elevation_deg.to_radians(), step_deg);
    let mut buf = Vec::new();
    write_array_factor_csv(&mut buf, &cb, &geometry, &grid)?;
    Ok(Outcome {
        outputs: vec![write_atomic(out, "array_factor.csv", &buf)?],
        counters: OpCounter::default(),
        notes: vec![],
        codebook_sha256: cb.hash(),
        code: EXIT_OK,
    })
}

fn write_report(reports: &[CheckReport]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        wtr.write_record(["check", "instances", "violations", "status"])?;
        for r in reports {
            let status = if r.passed() { "PASS" } else { "FAIL" };
            wtr.write_record([r.name.to_string(), r.instances.to_string(), r.violations.to_string(), status.to_string()])?;
        }
        wtr.flush()?;
    }
    Ok(buf)
}

fn cmd_validate(cfg: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    let reports = run_suite(cfg.run.seed);
    for r in &reports {
        println!("{:<22} {:>6} instances {:>4} violations  {}", r.name, r.instances, r.violations, if r.passed() { "PASS" } else { "FAIL" });
    }
    let buf = write_report(&reports)?;
    let ok = reports.iter().all(CheckReport::passed);
    Ok(Outcome {
        outputs: vec![write_atomic(out, "validate.csv", &buf)?],
        counters: OpCounter::default(),
        notes: reports.iter().filter(|r| !r.passed()).map(|r| format!("{} failed", r.name)).collect(),
        codebook_sha256: String::new(),
        code: if ok { EXIT_OK } else { EXIT_VALIDATION },
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Run => "run",
        Command::SweepRx => "sweep-rx",
        Command::Allowlist => "allowlist",
        Command::ArrayFactor { .. } => "array-factor",
        Command::Validate => "validate",
    }
}

fn execute(cli: &Cli, cfg: &ScenarioConfig) -> Result<i32> {
    let out = &cli.common.out;
    std::fs::create_dir_all(out)?;
    let outcome = match &cli.command {
        Command::Run => cmd_run(cfg, out)?,
        Command::SweepRx => cmd_sweep(cfg, out)?,
        Command::Allowlist => cmd_allowlist(cfg, out)?,
        Command::ArrayFactor {
            elevation_deg,
            step_deg,
            beams,
        } => cmd_array_factor(cfg, out, *elevation_deg, *step_deg, beams.as_deref())?,
        Command::Validate => cmd_validate(cfg, out)?,
    };
    for n in &outcome.notes {
        eprintln!("note: {n}");
    }
    let manifest = RunManifest {
        tool: "fdbeam",
        version: env!("CARGO_PKG_VERSION"),
        command: command_name(&cli.command).to_string(),
        seed: cfg.run.seed,
        config: cfg.clone(),
        codebook_sha256: outcome.codebook_sha256,
        outputs: outcome.outputs,
        counters: outcome.counters,
        notes: outcome.notes,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    write_atomic(out, "manifest.json", &json)?;
    Ok(outcome.code)
}

/// Parses `args` and runs the requested subcommand; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cfg = match resolve_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match execute(&cli, &cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
