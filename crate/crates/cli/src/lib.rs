//! Configuration and subcommands of the `hydrosplit` executable.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use hydrosplit::assembly::DataSampling;
use hydrosplit::fe_spaces::ElementKind;
use hydrosplit::hydrostatic_stokes::{compute_infsup, SolverConfig};
use hydrosplit::mesh::{refine_uniform, Bathymetry, SurfaceDomainSpec};
use hydrosplit::stepper::{
    write_checkpoint, CoriolisMode, Discretization, InitMode, KrylovConfig, SchemeConfig, StateSnapshot, StepRecord,
    Stepper, Variant,
};
use hydrosplit::verification::{
    check_thresholds, convergence_study, manufactured_default, Coupling, ErrorAccumulator, StudyConfig, ThresholdCheck,
};
use hydrosplit::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthConfig {
    pub d0: f64,
    pub gradient: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Counterclockwise vertices; mesh generation supports axis-aligned rectangles.
    pub polygon: Vec<[f64; 2]>,
    /// Affine depth `d0 + gradient . x`.
    pub depth: DepthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub target_h: f64,
    pub layers: usize,
    pub level: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Element {
    TaylorHood,
    Mini,
}

impl Element {
    pub fn kind(self) -> ElementKind {
        match self {
            Element::TaylorHood => ElementKind::P2,
            Element::Mini => ElementKind::P1Bubble,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacesConfig {
    pub element: Element,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub variant: Variant,
    pub coriolis: CoriolisMode,
    pub nu: f64,
    pub f_cor: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "M")]
    pub steps: usize,
    pub data_sampling: DataSampling,
    pub init: InitMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolversConfig {
    pub substep0_tol: f64,
    pub substep1: KrylovConfig,
    pub substep2: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub dir: String,
    pub ledger: bool,
    /// Checkpoint interval in steps, 0 disables checkpoints.
    pub checkpoints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub levels: Vec<u32>,
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub mesh: MeshConfig,
    pub spaces: SpacesConfig,
    pub scheme: SchemeSection,
    pub solvers: SolversConfig,
    pub outputs: OutputsConfig,
    pub study: StudySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SchemeConfig { steps: 8, init: InitMode::StokesProjection, ..Default::default() };
        Self {
            domain: DomainConfig {
                polygon: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                depth: DepthConfig { d0: 1.0, gradient: [0.0, 0.0] },
            },
            mesh: MeshConfig { target_h: 0.25, layers: 4, level: 0 },
            spaces: SpacesConfig { element: Element::TaylorHood },
            scheme: SchemeSection {
                variant: s.variant,
                coriolis: s.coriolis,
                nu: s.nu,
                f_cor: s.f_cor,
                t_final: s.t_final,
                steps: s.steps,
                data_sampling: s.data_sampling,
                init: s.init,
            },
            solvers: SolversConfig { substep0_tol: s.substep0_tol, substep1: s.substep1, substep2: s.substep2 },
            outputs: OutputsConfig { dir: "out".into(), ledger: true, checkpoints: 0 },
            study: StudySection { levels: vec![0, 1], coupling: Coupling::KEqH2 },
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn domain_spec(&self) -> SurfaceDomainSpec {
        let d = &self.domain.depth;
        let depths: Vec<f64> =
            self.domain.polygon.iter().map(|p| d.d0 + d.gradient[0] * p[0] + d.gradient[1] * p[1]).collect();
        SurfaceDomainSpec {
            polygon: self.domain.polygon.clone(),
            bathymetry: Bathymetry::Affine { d0: d.d0, gradient: d.gradient },
            d_min: depths.iter().copied().fold(f64::INFINITY, f64::min),
            d_max: depths.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        let s = &self.scheme;
        SchemeConfig {
            variant: s.variant,
            coriolis: s.coriolis,
            nu: s.nu,
            f_cor: s.f_cor,
            t_final: s.t_final,
            steps: s.steps,
            data_sampling: s.data_sampling,
            init: s.init,
            substep0_tol: self.solvers.substep0_tol,
            substep1: self.solvers.substep1,
            substep2: self.solvers.substep2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.domain_spec();
        spec.validate_polygon()?;
        if !(spec.d_min > 0.0) || !spec.d_max.is_finite() {
            return Err(Error::InvalidDomain(format!("depth must be positive on the domain, minimum {}", spec.d_min)));
        }
        if !(self.mesh.target_h > 0.0) || !self.mesh.target_h.is_finite() {
            return Err(Error::DegenerateTarget(self.mesh.target_h));
        }
        if self.mesh.layers == 0 {
            return Err(Error::Config("mesh.layers must be at least 1".into()));
        }
        if self.study.levels.is_empty() || self.study.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("study.levels must be strictly increasing and nonempty".into()));
        }
        if self.outputs.dir.is_empty() {
            return Err(Error::Config("outputs.dir must not be empty".into()));
        }
        self.scheme_config().validate()
    }
}

/// Process exit code for an error: 2 for invalid input, 3 for solver failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::SolverDiverged { .. }
        | Error::SingularSystem(_)
        | Error::EigSolverStalled(_)
        | Error::RayEscape(_)
        | Error::EvaluatorDomain(_)
        | Error::HaltedByHook(_) => 3,
        _ => 2,
    }
}

/// Seed for randomized start vectors, from `HYDROSPLIT_SEED` when set.
pub fn seed_from_env() -> Result<u64> {
    match std::env::var("HYDROSPLIT_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| Error::Config(format!("HYDROSPLIT_SEED is not an integer: {s:?}"))),
        Err(_) => Ok(0),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

fn discretization(cfg: &RunConfig, level: u32) -> Result<(Discretization, f64)> {
    let spec = cfg.domain_spec();
    let mesh = Arc::new(refine_uniform(&spec, cfg.mesh.target_h, cfg.mesh.layers, level)?);
    let h = cfg.mesh.target_h / 2f64.powi(level as i32);
    Ok((Discretization::new(&mesh, cfg.spaces.element.kind())?, h))
}

/// Writes the column mesh of `mesh.level` and returns a one-line summary.
pub fn cmd_mesh(cfg: &RunConfig, out: &Path) -> Result<String> {
    let spec = cfg.domain_spec();
    let mesh = refine_uniform(&spec, cfg.mesh.target_h, cfg.mesh.layers, cfg.mesh.level)?;
    fs::create_dir_all(out)?;
    let mut f = std::io::BufWriter::new(fs::File::create(out.join("mesh.txt"))?);
    mesh.write_text(&mut f)?;
    f.flush()?;
    Ok(format!(
        "surface_nodes={} layers={} nodes={} tets={} boundary_faces={} h={:.6e}",
        mesh.n_surface_nodes(),
        mesh.layer_count(),
        mesh.nodes.len(),
        mesh.tets.len(),
        mesh.boundary_faces.len(),
        mesh.h
    ))
}

/// Runs the scheme on the manufactured problem and writes the step ledger,
/// final fields, optional checkpoints and the error report.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<String> {
    let (disc, h) = discretization(cfg, cfg.mesh.level)?;
    let scheme = cfg.scheme_config();
    let ms = manufactured_default(&cfg.domain_spec())?.with_physics(scheme.nu, scheme.f_cor);
    let stepper = Stepper::new(&scheme, &disc, &ms.problem_data())?;
    fs::create_dir_all(out)?;
    let mut acc = ErrorAccumulator::new(&disc, &ms, stepper.k(), h, scheme.variant);
    let mut ledger = String::from(StepRecord::HEADER);
    ledger.push('\n');
    let every = cfg.outputs.checkpoints;
    let ckpt_dir = out.join("checkpoints");
    let history = {
        let mut hook = |s: &StateSnapshot, r: &StepRecord| -> Result<()> {
            ledger += &r.csv_row();
            ledger.push('\n');
            acc.push(s)?;
            if every > 0 && s.m % every == 0 {
                write_checkpoint(&ckpt_dir, s)?;
            }
            Ok(())
        };
        stepper.run(false, &mut [&mut hook])?
    };
    if cfg.outputs.ledger {
        write_file(&out.join("ledger.csv"), &ledger)?;
    }
    let last = history.last();
    let mut buf = Vec::new();
    last.u.write_csv(&mut buf)?;
    write_file(&out.join("u_final.csv"), &String::from_utf8_lossy(&buf))?;
    buf.clear();
    last.p.write_csv(&mut buf)?;
    write_file(&out.join("p_final.csv"), &String::from_utf8_lossy(&buf))?;
    let report = acc.report();
    write_file(&out.join("errors.json"), &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    let a = report.aggregates;
    Ok(format!(
        "steps={} k={:.6e} u_linf_l2={:.6e} u_l2_h1={:.6e} p_l2_l2={:.6e}",
        history.records.len() - 1,
        stepper.k(),
        a.u_linf_l2,
        a.u_l2_h1,
        a.p_l2_l2
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: u32,
    pub h: f64,
    pub k: f64,
    pub steps: usize,
    pub k_over_h2: f64,
    pub max_divergence: f64,
    pub max_energy_residual: f64,
    pub first_step_dt_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergeSummary {
    pub element: Element,
    pub variant: Variant,
    pub coupling: Coupling,
    pub levels: Vec<LevelSummary>,
    pub fitted_orders: Vec<(String, f64)>,
    pub thresholds: Vec<ThresholdCheck>,
    /// `max |B u| <= 10 tol` over every step of every level.
    pub divergence_pass: bool,
    pub pass: bool,
}

/// Convergence study over `study.levels`; writes `rates.csv` and `summary.json`.
pub fn cmd_converge(cfg: &RunConfig, out: &Path) -> Result<ConvergeSummary> {
    let scheme = cfg.scheme_config();
    let study = StudyConfig {
        scheme: scheme.clone(),
        element: cfg.spaces.element.kind(),
        domain: cfg.domain_spec(),
        h0: cfg.mesh.target_h,
        layers0: cfg.mesh.layers,
        levels: cfg.study.levels.clone(),
        coupling: cfg.study.coupling,
    };
    let result = convergence_study(&study)?;
    let table = &result.table;
    write_file(&out.join("rates.csv"), &table.to_csv())?;
    let thresholds = check_thresholds(table, study.element, scheme.variant);
    let bound = 10.0 * scheme.substep2.tol;
    let divergence_pass = result.levels.iter().all(|l| l.max_divergence <= bound);
    let summary = ConvergeSummary {
        element: cfg.spaces.element,
        variant: scheme.variant,
        coupling: cfg.study.coupling,
        levels: result
            .levels
            .iter()
            .map(|l| LevelSummary {
                level: l.level,
                h: l.h,
                k: l.k,
                steps: l.steps,
                k_over_h2: l.k_over_h2,
                max_divergence: l.max_divergence,
                max_energy_residual: l.max_energy_residual,
                first_step_dt_error: l.first_step_dt_error,
            })
            .collect(),
        fitted_orders: table.norms.iter().enumerate().map(|(i, n)| (n.clone(), table.fitted_order(i))).collect(),
        pass: divergence_pass && thresholds.iter().all(|t| t.pass),
        thresholds,
        divergence_pass,
    };
    write_file(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
    Ok(summary)
}

/// Inf-sup constants on every study level; writes and returns `infsup.csv`.
pub fn cmd_infsup(cfg: &RunConfig, out: &Path) -> Result<String> {
    let seed = seed_from_env()?;
    let mut csv = String::from("h,dim_x,dim_q,beta,iterations\n");
    for &level in &cfg.study.levels {
        let (disc, h) = discretization(cfg, level)?;
        let r = compute_infsup(&disc.xh, &disc.qh, seed)?;
        csv += &format!("{:.16e},{},{},{:.16e},{}\n", h, disc.xh.n_dofs(), disc.qh.n_dofs(), r.beta, r.iterations);
    }
    write_file(&out.join("infsup.csv"), &csv)?;
    Ok(csv)
}

/// Output directory: `--out` when given, otherwise `outputs.dir`.
pub fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from(&cfg.outputs.dir))
}
