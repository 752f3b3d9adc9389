//! Run configuration: TOML schema, defaults and validation.
//!
//! ```toml
//! name = "desk-b"
//! seed = 7
//!
//! [mesh]
//! lengths = [1.0]
//! nodes = [129]
//!
//! [physics]            # all default to 1
//! ell = 1.0
//! kappa = 1.0
//! nu = 1.0
//! gamma = 1.0
//! c0_heat = 1.0
//!
//! [potential]
//! kind = "regular"     # regular | logarithmic | obstacle
//! # c0 = 2.0           # logarithmic (default 2) and obstacle (default 1)
//!
//! [problem]
//! variant = "B"        # A | B | C
//! target = "0"         # η* for A, φ* for B and C
//! rho_factor = 2.0     # or rho = 5.0
//! pilot_rho = 1.0
//! eps = 1e-3
//! mode = "prox"        # prox | regularized
//!
//! [data]
//! theta0 = "neumann-mode"
//! phi0 = "0.5*cos(pi*x)"
//! f = "zero"
//!
//! [time]
//! t_final = 1.0
//! dt = 1e-3           # optional in regularized mode: eps/(rho+1)
//! sample_every = 10
//! ```
//!
//! Field entries are a preset (`zero`, `neumann-mode`), an expression in
//! `x`, `y`, `z` (and `t` for `f`), or `file:<path>` pointing at a node CSV
//! relative to the config file.
//!
//! Defaults are resolved once at parse time, so sweep cells inherit the
//! base config's time step.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use pfsmc_core::dynamics::Mode;
use pfsmc_core::extinction::VerifyOptions;
use pfsmc_core::operators::PotentialKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub mesh: MeshConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    pub problem: ProblemConfig,
    pub data: DataConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub lengths: Vec<f64>,
    pub nodes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub ell: f64,
    pub kappa: f64,
    pub nu: f64,
    pub gamma: f64,
    pub c0_heat: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            ell: 1.0,
            kappa: 1.0,
            nu: 1.0,
            gamma: 1.0,
            c0_heat: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PotentialKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantName {
    A,
    B,
    C,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub variant: VariantName,
    /// Manifold weight for variant A; defaults to `ell`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_zero_field")]
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Gain as a multiple of the threshold from the pilot run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_factor: Option<f64>,
    #[serde(default = "default_pilot_rho")]
    pub pilot_rho: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub theta0: String,
    pub phi0: String,
    #[serde(default = "default_zero_field")]
    pub f: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    /// Required in prox mode; in regularized mode defaults to `eps/(rho+1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub tol: f64,
    pub comparison_tol: f64,
    pub remark_decreasing: bool,
    /// Persist full fields at every sample (always on for variant C).
    pub snapshots: bool,
    pub embedding_samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let d = VerifyOptions::default();
        VerifyConfig {
            tol: d.tol,
            comparison_tol: d.comparison_tol,
            remark_decreasing: d.remark_decreasing,
            snapshots: false,
            embedding_samples: 32,
        }
    }
}

impl VerifyConfig {
    pub fn options(&self) -> VerifyOptions {
        VerifyOptions {
            tol: self.tol,
            comparison_tol: self.comparison_tol,
            remark_decreasing: self.remark_decreasing,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "runs".into() }
    }
}

/// Parameter grid for `sweep`; the cells are the product of the non-empty
/// axes, with `rho` and `rho_factor` forming a single gain axis.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub rho: Vec<f64>,
    pub rho_factor: Vec<f64>,
    pub eps: Vec<f64>,
    pub nodes: Vec<Vec<usize>>,
}

fn default_name() -> String {
    "run".into()
}
fn default_zero_field() -> String {
    "zero".into()
}
fn default_pilot_rho() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    1e-3
}
fn default_mode() -> Mode {
    Mode::Prox
}
fn default_sample_every() -> usize {
    10
}

/// A validated configuration plus the directory its file references are
/// resolved against.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

pub fn parse_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let config = parse_str(&text).with_context(|| format!("in config {}", path.display()))?;
    let loaded = LoadedConfig { config, base_dir };
    loaded.check_files()?;
    Ok(loaded)
}

/// Parses, fills defaults and validates scalar invariants.
pub fn parse_str(text: &str) -> Result<RunConfig> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
    cfg.resolve_defaults()?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        bail!("invalid `{name}`: must be positive, got {v}");
    }
    Ok(())
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        bail!("invalid `{name}`: must be nonnegative, got {v}");
    }
    Ok(())
}

impl RunConfig {
    fn resolve_defaults(&mut self) -> Result<()> {
        let kind = self.potential.kind.ok_or_else(|| {
            anyhow!("missing `potential.kind`; allowed kinds: regular, logarithmic, obstacle")
        })?;
        if self.potential.c0.is_none() {
            self.potential.c0 = match kind {
                PotentialKind::Regular => None,
                PotentialKind::Logarithmic => Some(2.0),
                PotentialKind::Obstacle => Some(1.0),
            };
        }
        if self.time.dt.is_none() {
            let p = &self.problem;
            self.time.dt = match (p.mode, p.rho) {
                (Mode::Regularized, Some(rho)) if rho.is_finite() && rho >= 0.0 => {
                    Some(p.eps / (rho + 1.0))
                }
                (Mode::Regularized, _) => {
                    bail!(
                        "missing `dt`: the regularized default eps/(rho+1) needs an explicit `rho`"
                    )
                }
                (Mode::Prox, _) => bail!("missing `dt`: required in prox mode"),
            };
        }
        if self.problem.variant == VariantName::A && self.problem.alpha.is_none() {
            self.problem.alpha = Some(self.physics.ell);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            bail!("invalid `name`: must be non-empty and contain no path separators");
        }
        let m = &self.mesh;
        if m.lengths.is_empty() || m.lengths.len() > 3 || m.lengths.len() != m.nodes.len() {
            bail!("invalid `mesh`: `lengths` and `nodes` need the same length, 1 to 3");
        }
        for &l in &m.lengths {
            positive("mesh.lengths", l)?;
        }
        if m.nodes.iter().any(|&n| n < 2) {
            bail!("invalid `mesh.nodes`: need at least 2 nodes per axis");
        }
        let p = &self.physics;
        positive("ell", p.ell)?;
        positive("kappa", p.kappa)?;
        positive("nu", p.nu)?;
        nonnegative("gamma", p.gamma)?;
        positive("c0_heat", p.c0_heat)?;
        match (self.potential.kind, self.potential.c0) {
            (Some(PotentialKind::Logarithmic), Some(c)) if !(c.is_finite() && c > 1.0) => {
                bail!("invalid `potential.c0`: the logarithmic potential needs c0 > 1, got {c}")
            }
            (Some(PotentialKind::Obstacle), Some(c)) => positive("potential.c0", c)?,
            (Some(PotentialKind::Regular), Some(_)) => {
                bail!("invalid `potential.c0`: the regular potential takes no c0")
            }
            _ => {}
        }
        let pr = &self.problem;
        if let Some(a) = pr.alpha {
            if pr.variant != VariantName::A {
                bail!("invalid `alpha`: only used by variant A");
            }
            if !a.is_finite() {
                bail!("invalid `alpha`: must be finite");
            }
        }
        match (pr.rho, pr.rho_factor) {
            (Some(r), None) => nonnegative("rho", r)?,
            (None, Some(f)) => nonnegative("rho_factor", f)?,
            (Some(_), Some(_)) => {
                bail!("invalid `rho`: give either `rho` or `rho_factor`, not both")
            }
            (None, None) => bail!("missing `rho`: give `rho` or `rho_factor`"),
        }
        nonnegative("pilot_rho", pr.pilot_rho)?;
        positive("eps", pr.eps)?;
        positive("t_final", self.time.t_final)?;
        positive("dt", self.dt())?;
        if self.time.sample_every == 0 {
            bail!("invalid `sample_every`: must be at least 1");
        }
        nonnegative("tol", self.verify.tol)?;
        nonnegative("comparison_tol", self.verify.comparison_tol)?;
        if self.verify.embedding_samples == 0 {
            bail!("invalid `embedding_samples`: must be at least 1");
        }
        if let Some(s) = &self.sweep {
            for &r in &s.rho {
                nonnegative("sweep.rho", r)?;
            }
            for &f in &s.rho_factor {
                nonnegative("sweep.rho_factor", f)?;
            }
            for &e in &s.eps {
                positive("sweep.eps", e)?;
            }
            if s.nodes
                .iter()
                .any(|n| n.len() != m.lengths.len() || n.iter().any(|&k| k < 2))
            {
                bail!("invalid `sweep.nodes`: each entry needs one count (at least 2) per axis");
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.time.dt.expect("resolved config has a time step")
    }

    pub fn variant_name(&self) -> VariantName {
        self.problem.variant
    }

    pub fn kind(&self) -> PotentialKind {
        self.potential
            .kind
            .expect("resolved config has a potential kind")
    }

    /// Every field entry as `(key, value)`.
    pub fn field_entries(&self) -> [(&'static str, &str); 4] {
        [
            ("target", &self.problem.target),
            ("theta0", &self.data.theta0),
            ("phi0", &self.data.phi0),
            ("f", &self.data.f),
        ]
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The dump of a single run: everything except the sweep grid.
    pub fn run_toml(&self) -> String {
        RunConfig {
            sweep: None,
            ..self.clone()
        }
        .to_toml()
    }
}

impl LoadedConfig {
    pub fn resolve_path(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    fn check_files(&self) -> Result<()> {
        for (key, value) in self.config.field_entries() {
            if let Some(rel) = value.strip_prefix("file:") {
                let p = self.resolve_path(rel.trim());
                if !p.is_file() {
                    bail!(
                        "invalid `{key}`: referenced file {} does not exist",
                        p.display()
                    );
                }
            }
        }
        Ok(())
    }

    /// Run identity: `sha256` of the resolved config (output location and
    /// sweep grid excluded) and of every referenced file.
    pub fn run_hash(&self) -> Result<String> {
        let mut c = self.config.clone();
        c.output = OutputConfig::default();
        c.sweep = None;
        self.hash_of(&c)
    }

    /// Identity of a whole sweep, grid included.
    pub fn sweep_hash(&self) -> Result<String> {
        let mut c = self.config.clone();
        c.output = OutputConfig::default();
        self.hash_of(&c)
    }

    fn hash_of(&self, c: &RunConfig) -> Result<String> {
        let mut h = Sha256::new();
        h.update(c.to_toml().as_bytes());
        for (key, value) in c.field_entries() {
            if let Some(rel) = value.strip_prefix("file:") {
                let bytes = std::fs::read(self.resolve_path(rel.trim()))
                    .with_context(|| format!("cannot read file referenced by `{key}`"))?;
                h.update(key.as_bytes());
                h.update(Sha256::digest(&bytes));
            }
        }
        Ok(hex::encode(&h.finalize()[..6]))
    }

    pub fn run_id(&self) -> Result<String> {
        Ok(format!("{}-{}", self.config.name, self.run_hash()?))
    }
}
