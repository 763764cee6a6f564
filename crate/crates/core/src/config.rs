//! Run configuration in a plain `key = value` format.
//!
//! Blank lines are ignored and `#` starts a comment. Every key is optional;
//! unset keys keep their defaults. Unknown keys are rejected with the list of
//! valid ones. [`RunConfig::to_text`] writes every key, and parsing that text
//! gives back an identical configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::extraction::PurePolicy;
use crate::io::Dtype;
use crate::synthgen::SynthConfig;
use crate::unmixing::UnmixConfig;
use crate::variability::VariabilityConfig;

/// Where the scaling tensor comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PsiSource {
    /// Run the variability estimator.
    Estimate,
    /// Use all ones (no variability correction).
    Ones,
    /// Read a tensor file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Scene generator settings, used when `cube` is unset.
    pub synth: SynthConfig,
    pub cube: Option<PathBuf>,
    /// Spectral library for the synthetic scene; the bundled one when unset.
    pub library: Option<PathBuf>,
    /// Reference endmembers; extracted with VCA when unset.
    pub m0: Option<PathBuf>,
    pub vca_seed: u64,
    pub pure: PurePolicy,
    pub psi: PsiSource,
    pub variability: VariabilityConfig,
    pub unmix: UnmixConfig,
    pub sam_per_pair: bool,
    pub output_dir: PathBuf,
    pub render: bool,
    pub dtype: Dtype,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            cube: None,
            library: None,
            m0: None,
            vca_seed: 0,
            pure: PurePolicy::Counts(vec![100, 50, 10]),
            psi: PsiSource::Estimate,
            variability: VariabilityConfig::default(),
            unmix: UnmixConfig::default(),
            sam_per_pair: false,
            output_dir: PathBuf::from("out"),
            render: true,
            dtype: Dtype::F32,
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "n1",
    "n2",
    "bands",
    "endmembers",
    "snr_db",
    "variability_amplitude",
    "sigma_spatial",
    "sigma_spectral",
    "abundance_sigma",
    "temperature",
    "pure_region_fraction",
    "cube",
    "library",
    "m0",
    "vca_seed",
    "pure_counts",
    "pure_threshold",
    "psi",
    "lambda_psi",
    "epsilon",
    "rank",
    "psi_max_iter",
    "psi_rel_tol",
    "cp_seed",
    "cp_max_iter",
    "cp_rel_tol",
    "lambda_m",
    "lambda_a",
    "admm_rho",
    "admm_max_iter",
    "admm_tol",
    "outer_max_iter",
    "outer_rel_tol",
    "sam_per_pair",
    "output_dir",
    "render",
    "dtype",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

/// Text of the bundled desk-scale configuration.
pub const DESK_CONFIG: &str = include_str!("../configs/desk.cfg");

impl RunConfig {
    /// The bundled desk-scale configuration.
    pub fn desk() -> RunConfig {
        RunConfig::parse(DESK_CONFIG).expect("bundled config parses")
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got `{line}`", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                    other => other,
                })?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.synth;
        let v = &mut self.variability;
        let u = &mut self.unmix;
        match key {
            "seed" => s.seed = parse_num(key, value)?,
            "n1" => s.n1 = parse_num(key, value)?,
            "n2" => s.n2 = parse_num(key, value)?,
            "bands" => s.bands = parse_num(key, value)?,
            "endmembers" => s.endmembers = parse_num(key, value)?,
            "snr_db" => s.snr_db = parse_num(key, value)?,
            "variability_amplitude" => s.variability_amplitude = parse_num(key, value)?,
            "sigma_spatial" => s.sigma_spatial = parse_num(key, value)?,
            "sigma_spectral" => s.sigma_spectral = parse_num(key, value)?,
            "abundance_sigma" => s.abundance_sigma = parse_num(key, value)?,
            "temperature" => s.temperature = parse_num(key, value)?,
            "pure_region_fraction" => s.pure_region_fraction = parse_num(key, value)?,
            "cube" => self.cube = optional_path(value),
            "library" => self.library = optional_path(value),
            "m0" => self.m0 = optional_path(value),
            "vca_seed" => self.vca_seed = parse_num(key, value)?,
            "pure_counts" => {
                let counts: Result<Vec<usize>> = value.split(',').map(|c| parse_num(key, c.trim())).collect();
                self.pure = PurePolicy::Counts(counts?);
            }
            "pure_threshold" => self.pure = PurePolicy::Threshold(parse_num(key, value)?),
            "psi" => {
                self.psi = match value {
                    "estimate" => PsiSource::Estimate,
                    "ones" => PsiSource::Ones,
                    "" => return Err(Error::Config("`psi` must be estimate, ones or a path".into())),
                    path => PsiSource::File(PathBuf::from(path)),
                }
            }
            "lambda_psi" => v.lambda_psi = parse_num(key, value)?,
            "epsilon" => v.epsilon = parse_num(key, value)?,
            "rank" => v.rank = parse_num(key, value)?,
            "psi_max_iter" => v.max_outer_iter = parse_num(key, value)?,
            "psi_rel_tol" => v.rel_tol = parse_num(key, value)?,
            "cp_seed" => v.cp_seed = parse_num(key, value)?,
            "cp_max_iter" => v.cp_max_iter = parse_num(key, value)?,
            "cp_rel_tol" => v.cp_rel_tol = parse_num(key, value)?,
            "lambda_m" => u.lambda_m = parse_num(key, value)?,
            "lambda_a" => u.lambda_a = parse_num(key, value)?,
            "admm_rho" => {
                u.admm_rho = match value {
                    "auto" => None,
                    x => Some(parse_num(key, x)?),
                }
            }
            "admm_max_iter" => u.admm_max_iter = parse_num(key, value)?,
            "admm_tol" => u.admm_tol = parse_num(key, value)?,
            "outer_max_iter" => u.outer_max_iter = parse_num(key, value)?,
            "outer_rel_tol" => u.outer_rel_tol = parse_num(key, value)?,
            "sam_per_pair" => self.sam_per_pair = parse_bool(key, value)?,
            "output_dir" => {
                if value.is_empty() {
                    return Err(Error::Config("`output_dir` must not be empty".into()));
                }
                self.output_dir = PathBuf::from(value)
            }
            "render" => self.render = parse_bool(key, value)?,
            "dtype" => self.dtype = value.parse().map_err(|_| Error::Config(format!("`dtype`: expected f32 or f64, got `{value}`")))?,
            other => {
                return Err(Error::Config(format!(
                    "unknown key `{other}`; valid keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Checks every section; argument errors are reported as config errors.
    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| {
            r.map_err(|e| match e {
                Error::InvalidArgument(m) => Error::Config(m),
                other => other,
            })
        };
        if self.cube.is_none() {
            wrap(self.synth.validate())?;
        }
        if self.psi == PsiSource::Estimate {
            wrap(self.variability.validate())?;
        }
        wrap(self.unmix.validate())?;
        match &self.pure {
            PurePolicy::Counts(c) if c.len() != self.synth.endmembers => Err(Error::Config(format!(
                "pure_counts has {} entries for {} endmembers",
                c.len(),
                self.synth.endmembers
            ))),
            PurePolicy::Threshold(t) if !(*t >= 0.0) => Err(Error::Config(format!("pure_threshold must be >= 0, got {t}"))),
            _ => Ok(()),
        }
    }

    /// Every key with its current value, one per line, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let s = &self.synth;
        let v = &self.variability;
        let u = &self.unmix;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut out = String::new();
        let mut kv = |k: &str, val: String| writeln!(out, "{k} = {val}").unwrap();
        kv("seed", s.seed.to_string());
        kv("n1", s.n1.to_string());
        kv("n2", s.n2.to_string());
        kv("bands", s.bands.to_string());
        kv("endmembers", s.endmembers.to_string());
        kv("snr_db", s.snr_db.to_string());
        kv("variability_amplitude", s.variability_amplitude.to_string());
        kv("sigma_spatial", s.sigma_spatial.to_string());
        kv("sigma_spectral", s.sigma_spectral.to_string());
        kv("abundance_sigma", s.abundance_sigma.to_string());
        kv("temperature", s.temperature.to_string());
        kv("pure_region_fraction", s.pure_region_fraction.to_string());
        kv("cube", path(&self.cube));
        kv("library", path(&self.library));
        kv("m0", path(&self.m0));
        kv("vca_seed", self.vca_seed.to_string());
        match &self.pure {
            PurePolicy::Counts(c) => kv(
                "pure_counts",
                c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            ),
            PurePolicy::Threshold(t) => kv("pure_threshold", t.to_string()),
        }
        kv(
            "psi",
            match &self.psi {
                PsiSource::Estimate => "estimate".into(),
                PsiSource::Ones => "ones".into(),
                PsiSource::File(p) => p.display().to_string(),
            },
        );
        kv("lambda_psi", v.lambda_psi.to_string());
        kv("epsilon", v.epsilon.to_string());
        kv("rank", v.rank.to_string());
        kv("psi_max_iter", v.max_outer_iter.to_string());
        kv("psi_rel_tol", v.rel_tol.to_string());
        kv("cp_seed", v.cp_seed.to_string());
        kv("cp_max_iter", v.cp_max_iter.to_string());
        kv("cp_rel_tol", v.cp_rel_tol.to_string());
        kv("lambda_m", u.lambda_m.to_string());
        kv("lambda_a", u.lambda_a.to_string());
        kv("admm_rho", u.admm_rho.map_or("auto".into(), |r| r.to_string()));
        kv("admm_max_iter", u.admm_max_iter.to_string());
        kv("admm_tol", u.admm_tol.to_string());
        kv("outer_max_iter", u.outer_max_iter.to_string());
        kv("outer_rel_tol", u.outer_rel_tol.to_string());
        kv("sam_per_pair", self.sam_per_pair.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("render", self.render.to_string());
        kv("dtype", self.dtype.as_str().to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn desk_config_is_the_desk_scene() {
        let cfg = RunConfig::desk();
        cfg.validate().unwrap();
        let s = &cfg.synth;
        assert_eq!((s.n1, s.n2, s.bands, s.endmembers, s.snr_db), (50, 50, 50, 3, 30.0));
        assert_eq!(cfg.pure, PurePolicy::Counts(vec![100, 50, 10]));
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn every_key_is_written() {
        let text = RunConfig::default().to_text();
        let written: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        for k in KEYS {
            if *k != "pure_threshold" {
                assert!(written.contains(k), "{k}");
            }
        }
    }

    #[test]
    fn comments_and_overrides() {
        let cfg = RunConfig::parse("# scene\nseed = 7   # inline\n\nlambda_a=0.05\npsi = ones\nadmm_rho = 0.5\npure_threshold = 0.1\n").unwrap();
        assert_eq!(cfg.synth.seed, 7);
        assert_eq!(cfg.unmix.lambda_a, 0.05);
        assert_eq!(cfg.psi, PsiSource::Ones);
        assert_eq!(cfg.unmix.admm_rho, Some(0.5));
        assert_eq!(cfg.pure, PurePolicy::Threshold(0.1));
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = RunConfig::parse("lamda_a = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lamda_a") && msg.contains("lambda_a") && msg.contains("line 1"), "{msg}");
        assert!(err.is_argument_error());
    }

    #[test]
    fn bad_values_rejected() {
        assert!(RunConfig::parse("rank = ten").is_err());
        assert!(RunConfig::parse("render = maybe").is_err());
        assert!(RunConfig::parse("no equals sign").is_err());
        let cfg = RunConfig::parse("pure_counts = 1,2").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = RunConfig::parse("lambda_m = -1").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn random_configs_round_trip(
            seed in any::<u64>(),
            snr in prop_oneof![Just(f64::INFINITY), 0.0f64..60.0],
            lambda_a in 0.0f64..1.0,
            rho in proptest::option::of(1e-6f64..10.0),
            counts in proptest::collection::vec(0usize..500, 1..5),
            render in any::<bool>(),
        ) {
            let mut cfg = RunConfig::default();
            cfg.synth.seed = seed;
            cfg.synth.snr_db = snr;
            cfg.unmix.lambda_a = lambda_a;
            cfg.unmix.admm_rho = rho;
            cfg.pure = PurePolicy::Counts(counts);
            cfg.render = render;
            cfg.psi = PsiSource::File(PathBuf::from("dir/psi.hsten"));
            prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }
    }
}
