//! End-to-end run: scene → endmembers → pure pixels → scaling factors →
//! abundances (and the FCLS baseline) → metrics, with every artifact written
//! to the output directory.
//!
//! Files written to `output_dir`:
//!
//! | file | content |
//! |---|---|
//! | `manifest.txt` | the full configuration, plus `#` lines with version and metrics |
//! | `cube.hscube` | the synthetic cube (only when generated) |
//! | `truth_abundances.csv`, `truth_psi.hsten`, `truth_endmembers.csv`, `truth_endmember_tensor.hsten` | ground truth (synthetic runs) |
//! | `m0.csv` | reference endmembers |
//! | `pure_pixels.csv` | pure pixel sets |
//! | `psi.hsten` | scaling factors used for unmixing |
//! | `abundances.csv`, `abundances.hsten`, `endmembers.hsten` | the estimate |
//! | `fcls_abundances.csv` | the baseline |
//! | `variability_trace.csv`, `unmix_trace.csv` | objective per outer iteration |
//! | `metrics.csv` | one row per method (synthetic runs) |
//! | `maps/*.ppm` | abundance and band-mean scaling maps (when `render`) |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use crate::config::{PsiSource, RunConfig};
use crate::error::{Error, Result, Warning};
use crate::extraction::{extract_endmembers_vca, find_pure_pixels, PurePixelSets};
use crate::io::{self, Dtype};
use crate::metrics::{self, MetricsReport, METRICS_HEADER};
use crate::model::{AbundanceMatrix, EndmemberMatrix, EndmemberTensor, ImageCube};
use crate::synthgen::{generate, GroundTruth};
use crate::tensor::Tensor4;
use crate::unmixing::{fcls, unmix};
use crate::variability::estimate_variability;

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub cube: ImageCube,
    pub truth: Option<GroundTruth>,
    pub m0: EndmemberMatrix,
    pub pure: PurePixelSets,
    pub psi: Tensor4,
    pub abundances: AbundanceMatrix,
    pub endmembers: EndmemberTensor,
    pub fcls: AbundanceMatrix,
    pub variability_trace: Vec<f64>,
    pub unmix_trace: Vec<f64>,
    /// `(method, report)` for `fcls` and `proposed`; empty without ground truth.
    pub metrics: Vec<(String, MetricsReport)>,
    pub warnings: Vec<Warning>,
    pub files: Vec<PathBuf>,
}

impl PipelineReport {
    pub fn metric(&self, method: &str) -> Option<&MetricsReport> {
        self.metrics.iter().find(|(m, _)| m == method).map(|(_, r)| r)
    }

    pub fn has_convergence_warnings(&self) -> bool {
        self.warnings.iter().any(Warning::is_convergence)
    }
}

/// Runs every stage and writes the artifacts listed in the module docs.
pub fn run(cfg: &RunConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    stage("write", fs::create_dir_all(&out).map_err(|e| Error::io(&out, e)))?;
    let mut files = Vec::new();
    let mut warnings = Vec::new();

    let (cube, truth) = stage(if cfg.cube.is_some() { "load" } else { "synth" }, load_scene(cfg))?;
    let m0 = stage("extract", reference_endmembers(cfg, &cube))?;

    let pure = stage("purepix", find_pure_pixels(&cube, &m0, &cfg.pure))?;
    info!("pure pixels per endmember: {:?}", pure.sets.iter().map(Vec::len).collect::<Vec<_>>());

    let (psi, variability_trace, psi_warnings) = stage("variability", scaling_factors(cfg, &cube, &m0, &pure))?;
    warnings.extend(psi_warnings);

    info!("FCLS baseline");
    let baseline = stage("fcls", fcls(&cube, &m0))?;
    info!("unmixing (lambda_m {}, lambda_a {})", cfg.unmix.lambda_m, cfg.unmix.lambda_a);
    let result = stage("unmix", unmix(&cube, &m0, &psi, &cfg.unmix, Some(&baseline)))?;
    warnings.extend(result.warnings.iter().cloned());

    let metrics = match &truth {
        Some(gt) => stage("metrics", score(cfg, gt, &cube, &m0, &psi, &baseline, &result.abundances, &result.endmembers))?,
        None => Vec::new(),
    };
    for (method, rep) in &metrics {
        info!("{method}: RMSE_A {:.5}", rep.rmse_a);
    }

    let report = PipelineReport {
        cube,
        truth,
        m0,
        pure,
        psi,
        abundances: result.abundances,
        endmembers: result.endmembers,
        fcls: baseline,
        variability_trace,
        unmix_trace: result.objective_trace,
        metrics,
        warnings,
        files: Vec::new(),
    };
    stage("write", write_artifacts(cfg, &report, &out, &mut files))?;
    Ok(PipelineReport { files, ..report })
}

#[allow(clippy::too_many_arguments)]
fn score(
    cfg: &RunConfig,
    gt: &GroundTruth,
    cube: &ImageCube,
    m0: &EndmemberMatrix,
    psi: &Tensor4,
    baseline: &AbundanceMatrix,
    a: &AbundanceMatrix,
    m: &EndmemberTensor,
) -> Result<Vec<(String, MetricsReport)>> {
    let perm = metrics::match_endmember_matrices(m0, &gt.m_true)?;
    let m_true = gt.endmember_tensor()?;
    let constant = EndmemberTensor::constant(m0, cube.pixels());
    let fcls_report = metrics::evaluate(cube, baseline, &constant, &gt.a_true, None, &perm, cfg.sam_per_pair)?;
    let mut proposed = metrics::evaluate(cube, a, m, &gt.a_true, Some(&m_true), &perm, cfg.sam_per_pair)?;
    let [n1, n2, l, r] = psi.dims();
    let aligned = Tensor4::from_fn([n1, n2, l, r], |[i, j, b, k]| psi.get([i, j, b, perm[k]]));
    proposed.rmse_psi = Some(metrics::rmse_tensor(&aligned, &gt.psi_true)?);
    Ok(vec![("fcls".into(), fcls_report), ("proposed".into(), proposed)])
}

/// The cube from `cfg.cube`, or a synthetic scene with its ground truth.
pub fn load_scene(cfg: &RunConfig) -> Result<(ImageCube, Option<GroundTruth>)> {
    if let Some(path) = &cfg.cube {
        return Ok((io::read_cube(path)?, None));
    }
    info!("generating synthetic scene (seed {})", cfg.synth.seed);
    let library = match &cfg.library {
        Some(p) => io::read_endmembers(p)?,
        None => io::bundled_library(),
    };
    let gt = generate(&cfg.synth, &library.resample(cfg.synth.bands)?)?;
    Ok((gt.cube.clone(), Some(gt)))
}

/// `M0` from `cfg.m0`, or extracted from `cube` with VCA.
pub fn reference_endmembers(cfg: &RunConfig, cube: &ImageCube) -> Result<EndmemberMatrix> {
    let r = cfg.synth.endmembers;
    let m0 = match &cfg.m0 {
        Some(path) => io::read_endmembers(path)?,
        None => {
            info!("extracting {r} endmembers with VCA");
            extract_endmembers_vca(cube, r, cfg.vca_seed)?.endmembers
        }
    };
    if m0.count() != r || m0.bands() != cube.bands() {
        return Err(Error::shape(format!(
            "reference endmembers are {}x{}, expected {}x{r}",
            m0.bands(),
            m0.count(),
            cube.bands()
        )));
    }
    Ok(m0)
}

/// `Ψ` according to `cfg.psi`, with the variability trace (empty unless
/// estimated) and any warnings, including those from pure-pixel selection.
pub fn scaling_factors(
    cfg: &RunConfig,
    cube: &ImageCube,
    m0: &EndmemberMatrix,
    pure: &PurePixelSets,
) -> Result<(Tensor4, Vec<f64>, Vec<Warning>)> {
    let dims = [cube.rows(), cube.cols(), cube.bands(), m0.count()];
    match &cfg.psi {
        PsiSource::Estimate => {
            info!("estimating scaling factors (rank {})", cfg.variability.rank);
            let v = estimate_variability(cube, m0, pure, &cfg.variability)?;
            Ok((v.psi, v.objective_trace, v.warnings))
        }
        PsiSource::Ones => Ok((Tensor4::ones(dims), Vec::new(), pure.warnings.clone())),
        PsiSource::File(p) => Ok((io::read_tensor_with_dims(p, dims)?, Vec::new(), pure.warnings.clone())),
    }
}

/// Writes the cube and ground-truth files of a synthetic scene.
pub fn write_scene(dir: &Path, gt: &GroundTruth, dtype: Dtype) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (n1, n2) = (gt.cube.rows(), gt.cube.cols());
    let files = vec![
        dir.join("cube.hscube"),
        dir.join("truth_abundances.csv"),
        dir.join("truth_endmembers.csv"),
        dir.join("truth_psi.hsten"),
        dir.join("truth_endmember_tensor.hsten"),
    ];
    io::write_cube(&files[0], &gt.cube, dtype)?;
    io::write_abundances(&files[1], &gt.a_true, gt.m_true.names.as_deref())?;
    io::write_endmembers(&files[2], &gt.m_true)?;
    io::write_tensor(&files[3], &gt.psi_true, dtype)?;
    io::write_tensor(&files[4], &gt.endmember_tensor()?.to_tensor(n1, n2)?, dtype)?;
    Ok(files)
}

/// `iteration,objective` CSV of an objective trace.
pub fn trace_csv(trace: &[f64]) -> String {
    let mut s = String::from("iteration,objective\n");
    for (i, v) in trace.iter().enumerate() {
        writeln!(s, "{},{v}", i + 1).unwrap();
    }
    s
}

/// `metrics.csv` body: a `method` column followed by [`METRICS_HEADER`].
pub fn metrics_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut s = format!("method,{METRICS_HEADER}\n");
    for (m, r) in rows {
        writeln!(s, "{m},{}", r.csv_row()).unwrap();
    }
    s
}

fn write_artifacts(cfg: &RunConfig, rep: &PipelineReport, out: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let text = |name: &str, body: &str, files: &mut Vec<PathBuf>| -> Result<()> {
        let p = out.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        files.push(p);
        Ok(())
    };
    let names = rep.m0.names.clone();
    if let Some(gt) = &rep.truth {
        files.extend(write_scene(out, gt, cfg.dtype)?);
    }
    text("m0.csv", &io::format_endmembers(&rep.m0)?, files)?;
    text("pure_pixels.csv", &io::format_pure_pixels(&rep.pure), files)?;
    let p = out.join("psi.hsten");
    io::write_tensor(&p, &rep.psi, cfg.dtype)?;
    files.push(p);
    text("abundances.csv", &io::format_abundances(&rep.abundances, names.as_deref())?, files)?;
    let p = out.join("abundances.hsten");
    io::write_tensor(&p, &io::abundances_to_tensor(&rep.abundances), cfg.dtype)?;
    files.push(p);
    let p = out.join("endmembers.hsten");
    io::write_tensor(&p, &rep.endmembers.to_tensor(rep.cube.rows(), rep.cube.cols())?, cfg.dtype)?;
    files.push(p);
    text("fcls_abundances.csv", &io::format_abundances(&rep.fcls, names.as_deref())?, files)?;
    text("variability_trace.csv", &trace_csv(&rep.variability_trace), files)?;
    text("unmix_trace.csv", &trace_csv(&rep.unmix_trace), files)?;
    if !rep.metrics.is_empty() {
        text("metrics.csv", &metrics_csv(&rep.metrics), files)?;
    }

    let mut manifest = format!("# hyperunmix {}\n", env!("CARGO_PKG_VERSION"));
    manifest.push_str(&cfg.to_text());
    for (m, r) in &rep.metrics {
        writeln!(manifest, "# {m}: {}", r.csv_row()).unwrap();
    }
    for w in &rep.warnings {
        writeln!(manifest, "# warning: {w}").unwrap();
    }
    text("manifest.txt", &manifest, files)?;

    if cfg.render {
        let maps = out.join("maps");
        fs::create_dir_all(&maps).map_err(|e| Error::io(&maps, e))?;
        files.extend(io::render_abundances(&maps, &rep.abundances)?);
        files.extend(io::render_psi(&maps, &rep.psi)?);
    }
    Ok(())
}
