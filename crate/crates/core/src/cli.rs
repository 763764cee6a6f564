//! Command-line front end. Every subcommand reads the same configuration
//! (`--config FILE`, one `--<key>` flag per configuration key, and
//! `--set key=value`), applied in command-line order after the file, and
//! writes its outputs into `output_dir` under the file names used by
//! [`pipeline::run`].

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Arg, ArgAction, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};
use log::{info, warn};

use crate::config::{PsiSource, RunConfig, KEYS};
use crate::error::{Error, Result, Warning};
use crate::extraction::{extract_endmembers_vca, find_pure_pixels};
use crate::io;
use crate::metrics::{self, METRICS_HEADER};
use crate::model::{AbundanceMatrix, EndmemberMatrix, EndmemberTensor, ImageCube};
use crate::pipeline::{self, trace_csv};
use crate::synthgen::generate;
use crate::unmixing::{fcls, unmix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ARGUMENT: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "hyperunmix", version, about = "Hyperspectral unmixing with spatially and spectrally varying endmember scaling")]
pub struct Cli {
    /// Treat non-convergence warnings as errors (exit code 4).
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate a synthetic scene and its ground truth.
    Synth(ConfigArgs),
    /// Extract reference endmembers with VCA.
    Extract(ConfigArgs),
    /// Select pure pixels for each reference endmember.
    Purepix(ConfigArgs),
    /// Estimate the scaling-factor tensor.
    Variability {
        /// Pure pixel CSV; selected with the configured policy when omitted.
        #[arg(long, value_name = "FILE")]
        pure_pixels: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Estimate abundances and per-pixel endmembers.
    Unmix {
        /// Pure pixel CSV, used when `psi = estimate`.
        #[arg(long, value_name = "FILE")]
        pure_pixels: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Fully constrained least squares baseline.
    Fcls(ConfigArgs),
    /// Score an estimate against ground truth.
    Metrics(MetricsArgs),
    /// Write heatmaps of abundances and band-mean scaling factors.
    Render {
        /// Abundances as CSV or tensor file.
        #[arg(long, value_name = "FILE")]
        abundances: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run every stage end to end.
    Pipeline(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Estimated abundances (CSV).
    #[arg(long, value_name = "FILE")]
    pub abundances: PathBuf,
    /// True abundances (CSV).
    #[arg(long, value_name = "FILE")]
    pub truth_abundances: PathBuf,
    /// Estimated per-pixel endmembers (tensor); `m0` is used for every pixel when omitted.
    #[arg(long, value_name = "FILE")]
    pub estimated_endmembers: Option<PathBuf>,
    /// True per-pixel endmembers (tensor).
    #[arg(long, value_name = "FILE")]
    pub truth_endmembers: Option<PathBuf>,
    /// True scaling factors (tensor), compared with the `psi` file.
    #[arg(long, value_name = "FILE")]
    pub truth_psi: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Configuration file plus overrides, in command-line order.
#[derive(Debug, Clone, Default)]
pub struct ConfigArgs {
    pub config: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> std::result::Result<Self, clap::Error> {
        let mut items: Vec<(usize, String, String)> = Vec::new();
        for key in KEYS {
            if let (Some(values), Some(idx)) = (m.get_many::<String>(key), m.indices_of(key)) {
                items.extend(idx.zip(values).map(|(i, v)| (i, key.to_string(), v.clone())));
            }
        }
        if let (Some(values), Some(idx)) = (m.get_many::<String>("set"), m.indices_of("set")) {
            for (i, v) in idx.zip(values) {
                let (k, val) = v.split_once('=').ok_or_else(|| {
                    clap::Error::raw(ErrorKind::InvalidValue, format!("--set expects key=value, got `{v}`\n"))
                })?;
                items.push((i, k.trim().to_string(), val.trim().to_string()));
            }
        }
        items.sort_by_key(|t| t.0);
        Ok(Self {
            config: m.get_one::<PathBuf>("config").cloned(),
            overrides: items.into_iter().map(|(_, k, v)| (k, v)).collect(),
        })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> std::result::Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: Command) -> Command {
        let mut cmd = cmd
            .arg(
                Arg::new("config")
                    .long("config")
                    .short('c')
                    .value_name("FILE")
                    .value_parser(clap::value_parser!(PathBuf))
                    .help("Configuration file of `key = value` lines"),
            )
            .arg(
                Arg::new("set")
                    .long("set")
                    .value_name("KEY=VALUE")
                    .action(ArgAction::Append)
                    .help("Set any configuration key"),
            );
        for key in KEYS {
            let mut arg = Arg::new(*key)
                .long(key.replace('_', "-"))
                .value_name("VALUE")
                .action(ArgAction::Append)
                .help(format!("Configuration key `{key}`"))
                .help_heading("Configuration");
            if *key == "output_dir" {
                arg = arg.short('o');
            }
            cmd = cmd.arg(arg);
        }
        cmd
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

/// Warning lines for the log, with ADMM non-convergence folded into one line
/// carrying the count and the worst residuals.
fn summarize(warnings: &[Warning]) -> Vec<String> {
    let mut lines = Vec::new();
    let (mut count, mut iterations, mut primal, mut dual) = (0, 0, 0.0f64, 0.0f64);
    for w in warnings {
        match w {
            Warning::AdmmNotConverged { iterations: it, primal: p, dual: d } => {
                count += 1;
                iterations = *it;
                primal = primal.max(*p);
                dual = dual.max(*d);
            }
            other => lines.push(other.to_string()),
        }
    }
    if count == 1 {
        lines.push(format!("ADMM did not converge in {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})"));
    } else if count > 1 {
        lines.push(format!(
            "ADMM did not converge in {count} solves of {iterations} iterations (worst primal {primal:.3e}, dual {dual:.3e})"
        ));
    }
    lines
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ARGUMENT } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(warnings) => {
            for line in summarize(&warnings) {
                warn!("{line}");
            }
            if cli.strict && warnings.iter().any(Warning::is_convergence) {
                eprintln!("error: did not converge (--strict)");
                EXIT_NOT_CONVERGED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_argument_error() {
                EXIT_ARGUMENT
            } else {
                EXIT_DATA
            }
        }
    }
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str, cmd: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("`{cmd}` needs `{key}` (--{})", key.replace('_', "-"))))
}

fn output_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    Ok(&cfg.output_dir)
}

fn write_text(path: PathBuf, body: &str) -> Result<()> {
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn inputs(cfg: &RunConfig, cmd: &str) -> Result<(ImageCube, EndmemberMatrix)> {
    let cube = io::read_cube(required(&cfg.cube, "cube", cmd)?)?;
    let m0 = io::read_endmembers(required(&cfg.m0, "m0", cmd)?)?;
    Ok((cube, m0))
}

fn pure_sets(cfg: &RunConfig, cube: &ImageCube, m0: &EndmemberMatrix, file: &Option<PathBuf>) -> Result<crate::extraction::PurePixelSets> {
    match file {
        Some(p) => io::read_pure_pixels(p, m0.count()),
        None => find_pure_pixels(cube, m0, &cfg.pure),
    }
}

fn read_abundances_any(path: &Path) -> Result<AbundanceMatrix> {
    if path.extension().is_some_and(|e| e == "csv") {
        io::read_abundances(path)
    } else {
        io::abundances_from_tensor(&io::read_tensor(path)?)
    }
}

/// Runs one subcommand and returns the warnings it produced.
pub fn execute(cmd: &Cmd) -> Result<Vec<Warning>> {
    match cmd {
        Cmd::Synth(args) => {
            let cfg = args.resolve()?;
            cfg.synth.validate().map_err(config_error)?;
            let library = match &cfg.library {
                Some(p) => io::read_endmembers(p)?,
                None => io::bundled_library(),
            };
            let gt = generate(&cfg.synth, &library.resample(cfg.synth.bands)?)?;
            for f in pipeline::write_scene(output_dir(&cfg)?, &gt, cfg.dtype)? {
                info!("wrote {}", f.display());
            }
            info!("measured SNR {:.3} dB", gt.measured_snr_db());
            Ok(Vec::new())
        }
        Cmd::Extract(args) => {
            let cfg = args.resolve()?;
            let cube = io::read_cube(required(&cfg.cube, "cube", "extract")?)?;
            let ex = extract_endmembers_vca(&cube, cfg.synth.endmembers, cfg.vca_seed)?;
            info!("extracted pixels {:?}", ex.pixel_indices);
            write_text(output_dir(&cfg)?.join("m0.csv"), &io::format_endmembers(&ex.endmembers)?)?;
            Ok(Vec::new())
        }
        Cmd::Purepix(args) => {
            let cfg = args.resolve()?;
            let (cube, m0) = inputs(&cfg, "purepix")?;
            let pure = find_pure_pixels(&cube, &m0, &cfg.pure)?;
            write_text(output_dir(&cfg)?.join("pure_pixels.csv"), &io::format_pure_pixels(&pure))?;
            Ok(pure.warnings)
        }
        Cmd::Variability { pure_pixels, config } => {
            let mut cfg = config.resolve()?;
            cfg.psi = PsiSource::Estimate;
            cfg.variability.validate().map_err(config_error)?;
            let (cube, m0) = inputs(&cfg, "variability")?;
            let pure = pure_sets(&cfg, &cube, &m0, pure_pixels)?;
            let (psi, trace, warnings) = pipeline::scaling_factors(&cfg, &cube, &m0, &pure)?;
            let out = output_dir(&cfg)?;
            io::write_tensor(out.join("psi.hsten"), &psi, cfg.dtype)?;
            write_text(out.join("variability_trace.csv"), &trace_csv(&trace))?;
            Ok(warnings)
        }
        Cmd::Unmix { pure_pixels, config } => {
            let cfg = config.resolve()?;
            cfg.unmix.validate().map_err(config_error)?;
            let (cube, m0) = inputs(&cfg, "unmix")?;
            let pure = match cfg.psi {
                PsiSource::Estimate => pure_sets(&cfg, &cube, &m0, pure_pixels)?,
                _ => crate::extraction::PurePixelSets::empty(m0.count()),
            };
            let (psi, _, mut warnings) = pipeline::scaling_factors(&cfg, &cube, &m0, &pure)?;
            let baseline = fcls(&cube, &m0)?;
            let res = unmix(&cube, &m0, &psi, &cfg.unmix, Some(&baseline))?;
            warnings.extend(res.warnings);
            let out = output_dir(&cfg)?;
            let names = m0.names.as_deref();
            write_text(out.join("abundances.csv"), &io::format_abundances(&res.abundances, names)?)?;
            io::write_tensor(out.join("abundances.hsten"), &io::abundances_to_tensor(&res.abundances), cfg.dtype)?;
            io::write_tensor(
                out.join("endmembers.hsten"),
                &res.endmembers.to_tensor(cube.rows(), cube.cols())?,
                cfg.dtype,
            )?;
            write_text(out.join("unmix_trace.csv"), &trace_csv(&res.objective_trace))?;
            Ok(warnings)
        }
        Cmd::Fcls(args) => {
            let cfg = args.resolve()?;
            let (cube, m0) = inputs(&cfg, "fcls")?;
            let a = fcls(&cube, &m0)?;
            let body = io::format_abundances(&a, m0.names.as_deref())?;
            write_text(output_dir(&cfg)?.join("fcls_abundances.csv"), &body)?;
            Ok(Vec::new())
        }
        Cmd::Metrics(args) => {
            let cfg = args.config.resolve()?;
            let cube = io::read_cube(required(&cfg.cube, "cube", "metrics")?)?;
            let a_est = io::read_abundances(&args.abundances)?;
            let a_true = io::read_abundances(&args.truth_abundances)?;
            let m_est = match &args.estimated_endmembers {
                Some(p) => EndmemberTensor::from_tensor(&io::read_tensor(p)?),
                None => EndmemberTensor::constant(&io::read_endmembers(required(&cfg.m0, "m0", "metrics")?)?, cube.pixels()),
            };
            let m_true = match &args.truth_endmembers {
                Some(p) => Some(EndmemberTensor::from_tensor(&io::read_tensor(p)?)),
                None => None,
            };
            let perm = match &m_true {
                Some(t) => metrics::match_endmembers(&m_est, t)?,
                None => metrics::match_abundances(&a_est, &a_true)?,
            };
            let mut report =
                metrics::evaluate(&cube, &a_est, &m_est, &a_true, m_true.as_ref(), &perm, cfg.sam_per_pair)?;
            if let (Some(truth), PsiSource::File(p)) = (&args.truth_psi, &cfg.psi) {
                let psi_true = io::read_tensor(truth)?;
                let psi = io::read_tensor_with_dims(p, psi_true.dims())?;
                let [n1, n2, l, r] = psi.dims();
                let aligned = crate::tensor::Tensor4::from_fn([n1, n2, l, r], |[i, j, b, k]| psi.get([i, j, b, perm[k]]));
                report.rmse_psi = Some(metrics::rmse_tensor(&aligned, &psi_true)?);
            }
            write_text(
                output_dir(&cfg)?.join("metrics.csv"),
                &format!("{METRICS_HEADER}\n{}\n", report.csv_row()),
            )?;
            println!("{report}");
            Ok(Vec::new())
        }
        Cmd::Render { abundances, config } => {
            let cfg = config.resolve()?;
            let out = output_dir(&cfg)?;
            let mut files = Vec::new();
            if let Some(p) = abundances {
                files.extend(io::render_abundances(out, &read_abundances_any(p)?)?);
            }
            if let PsiSource::File(p) = &cfg.psi {
                files.extend(io::render_psi(out, &io::read_tensor(p)?)?);
            }
            if files.is_empty() {
                return Err(Error::Config("`render` needs --abundances or a --psi file".into()));
            }
            for f in files {
                info!("wrote {}", f.display());
            }
            Ok(Vec::new())
        }
        Cmd::Pipeline(args) => {
            let cfg = args.resolve()?;
            let report = pipeline::run(&cfg)?;
            for (method, m) in &report.metrics {
                println!("{method}\n{m}\n");
            }
            info!("wrote {} files to {}", report.files.len(), cfg.output_dir.display());
            Ok(report.warnings)
        }
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}
