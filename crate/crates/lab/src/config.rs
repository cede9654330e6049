//! JSON run configuration. Unknown keys are errors; every pass/fail
//! threshold is a required field of the section that uses it.

use std::path::Path;

use neass_core::dynamics::{PropagationOptions, Schedule};
use neass_core::interactions::WeightProfile;
use neass_core::lattice::Geometry;
use neass_core::liouvillian::WeightParams;
use neass_core::neass::GapPolicy;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::LabError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub name: String,
    pub seed: u64,
    pub lattice: LatticeSpec,
    pub model: Vec<Term>,
    #[serde(default)]
    pub perturbation: Vec<Term>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagation: Option<PropagationOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invliou_check: Option<InvliouSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_cone: Option<LrSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adiabatic_sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bulk_boundary: Option<BulkBoundarySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tdl_convergence: Option<TdlSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub dim: usize,
    pub side: usize,
    pub geometry: Geometry,
    #[serde(default = "one")]
    pub spin: usize,
    /// Fixed particle number, or the full Fock space when absent.
    #[serde(default)]
    pub particles: Option<usize>,
}

fn one() -> usize {
    1
}

/// A real number, or `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Real(f64),
    Complex([f64; 2]),
}

impl Amplitude {
    pub fn re(self) -> f64 {
        match self {
            Amplitude::Real(x) => x,
            Amplitude::Complex([re, _]) => re,
        }
    }

    pub fn im(self) -> f64 {
        match self {
            Amplitude::Real(_) => 0.0,
            Amplitude::Complex([_, im]) => im,
        }
    }
}

fn unit_schedule() -> Schedule {
    Schedule::constant(1.0)
}

/// One model or perturbation term; the schedule multiplies the term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    /// `t a*_x a_{x+r e_i} + h.c.` along every axis.
    Hopping {
        range: usize,
        amplitude: Amplitude,
        #[serde(default = "unit_schedule")]
        schedule: Schedule,
    },
    /// Alternating real nearest-neighbour amplitudes along `axis`.
    DimerizedHopping {
        axis: usize,
        intra: Amplitude,
        inter: Amplitude,
        #[serde(default = "unit_schedule")]
        schedule: Schedule,
    },
    Staggered {
        amplitude: Amplitude,
        #[serde(default = "unit_schedule")]
        schedule: Schedule,
    },
    /// Potential on a single site.
    Onsite {
        site: Vec<i64>,
        amplitude: Amplitude,
        #[serde(default = "unit_schedule")]
        schedule: Schedule,
    },
    ChemicalPotential {
        mu: Amplitude,
        #[serde(default = "unit_schedule")]
        schedule: Schedule,
    },
    DensityDensity {
        range: usize,
        strength: Amplitude,
        #[serde(default = "unit_schedule")]
        schedule: Schedule,
    },
    /// `v(x) = slope·x_axis + offset`.
    LinearField {
        axis: usize,
        slope: f64,
        offset: f64,
        #[serde(default = "unit_schedule")]
        schedule: Schedule,
    },
    /// `v(x) = amplitude·cos(2π x_axis / wavelength)`.
    CosineField {
        axis: usize,
        amplitude: f64,
        wavelength: f64,
        #[serde(default = "unit_schedule")]
        schedule: Schedule,
    },
}

impl Term {
    pub fn schedule(&self) -> &Schedule {
        match self {
            Term::Hopping { schedule, .. }
            | Term::DimerizedHopping { schedule, .. }
            | Term::Staggered { schedule, .. }
            | Term::Onsite { schedule, .. }
            | Term::ChemicalPotential { schedule, .. }
            | Term::DensityDensity { schedule, .. }
            | Term::LinearField { schedule, .. }
            | Term::CosineField { schedule, .. } => schedule,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Term::Hopping { .. } => "hopping",
            Term::DimerizedHopping { .. } => "dimerized_hopping",
            Term::Staggered { .. } => "staggered",
            Term::Onsite { .. } => "onsite",
            Term::ChemicalPotential { .. } => "chemical_potential",
            Term::DensityDensity { .. } => "density_density",
            Term::LinearField { .. } => "linear_field",
            Term::CosineField { .. } => "cosine_field",
        }
    }

    /// Amplitudes that must be real for the term to be Hermitian.
    fn real_fields(&self) -> Vec<(&'static str, Amplitude)> {
        match self {
            Term::Hopping { .. } | Term::LinearField { .. } | Term::CosineField { .. } => vec![],
            Term::DimerizedHopping { intra, inter, .. } => vec![("intra", *intra), ("inter", *inter)],
            Term::Staggered { amplitude, .. } | Term::Onsite { amplitude, .. } => vec![("amplitude", *amplitude)],
            Term::ChemicalPotential { mu, .. } => vec![("mu", *mu)],
            Term::DensityDensity { strength, .. } => vec![("strength", *strength)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub gap: f64,
    #[serde(default = "default_n_terms")]
    pub n_terms: usize,
    #[serde(default = "default_s_max")]
    pub s_max_factor: f64,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

fn default_n_terms() -> usize {
    15
}
fn default_s_max() -> f64 {
    400.0
}
fn default_grid() -> usize {
    1 << 16
}

impl WeightSpec {
    pub fn params(&self) -> WeightParams {
        WeightParams {
            gap: self.gap,
            n_terms: self.n_terms,
            s_max_factor: self.s_max_factor,
            grid_points: self.grid_points,
        }
    }
}

/// An observable given by lattice coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    /// `n_x` summed over internal states.
    SiteNumber { site: Vec<i64> },
    /// `a*_x a_y + a*_y a_x` summed over internal states.
    Bond { from: Vec<i64>, to: Vec<i64> },
}

impl ObservableSpec {
    pub fn sites(&self) -> Vec<Vec<i64>> {
        match self {
            ObservableSpec::SiteNumber { site } => vec![site.clone()],
            ObservableSpec::Bond { from, to } => vec![from.clone(), to.clone()],
        }
    }

    pub fn label(&self) -> String {
        let fmt = |c: &[i64]| c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(":");
        match self {
            ObservableSpec::SiteNumber { site } => format!("n[{}]", fmt(site)),
            ObservableSpec::Bond { from, to } => format!("bond[{}|{}]", fmt(from), fmt(to)),
        }
    }
}

/// Explicit list, or `count` evenly spaced points from `start` to `stop`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, count } => match count {
                0 => vec![],
                1 => vec![*start],
                n => (0..*n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvliouSpec {
    /// Frozen time at which the model is evaluated.
    #[serde(default)]
    pub t: f64,
    pub pairs: usize,
    /// Sites carrying the random `A` and `B`.
    pub a_sites: Vec<Vec<i64>>,
    pub b_sites: Vec<Vec<i64>>,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivative: Option<DerivativeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureCheck {
    pub operators: usize,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeSpec {
    pub t: f64,
    pub h_t: f64,
    pub observables: Vec<ObservableSpec>,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSpec {
    pub site: Vec<i64>,
    #[serde(default)]
    pub t0: f64,
    pub times: Grid,
    /// Decay rate `a` of `ζ(r) = e^{−ar}` defining `v_a`.
    pub decay_rate: f64,
    /// Side of the box on which the convolution constant is evaluated.
    pub convolution_box: usize,
    /// Commutator level whose first crossing defines the front.
    pub front_level: f64,
    /// Norms below this are treated as round-off in the exterior check.
    pub noise_floor: f64,
    pub min_exterior_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub epsilons: Vec<f64>,
    /// `η = eta_ratio · ε`.
    pub eta_ratio: f64,
    pub orders: Vec<usize>,
    pub t0: f64,
    pub t1: f64,
    pub observables: Vec<ObservableSpec>,
    #[serde(default = "require")]
    pub gap_policy: GapPolicy,
    /// Pass requires `slope(n) ≥ n − d − slope_margin`.
    pub slope_margin: f64,
    /// ε at which the highest order must beat the lowest.
    pub compare_at: f64,
}

fn require() -> GapPolicy {
    GapPolicy::Require
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BulkBoundarySpec {
    pub epsilon: f64,
    pub eta: f64,
    pub order: usize,
    pub t0: f64,
    pub t1: f64,
    pub edge_site: Vec<i64>,
    /// Bulk sites ordered from the edge inwards; the last is the mid-chain site.
    pub bulk_sites: Vec<Vec<i64>>,
    #[serde(default = "report")]
    pub gap_policy: GapPolicy,
    /// Required edge-to-mid-chain defect ratio.
    pub min_ratio: f64,
}

fn report() -> GapPolicy {
    GapPolicy::Report
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdlSpec {
    pub sides: Vec<usize>,
    pub t0: f64,
    pub t: f64,
    pub observable: ObservableSpec,
    /// Required ratio of the first to the last volume difference.
    pub min_decay: f64,
    pub gamma: f64,
    pub zeta: WeightProfile,
    pub n: u32,
    pub lambda: f64,
    pub windows: Vec<usize>,
    pub times: Vec<f64>,
}

/// Canonical serialization hash of a configuration.
pub fn config_hash(cfg: &Config) -> String {
    let canonical = serde_json::to_string(cfg).expect("configuration serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn load(path: &Path) -> Result<Config, LabError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Config, LabError> {
    let cfg: Config = serde_json::from_str(text).map_err(|e| LabError::Invalid(format!("config: {e}")))?;
    validate(&cfg)?;
    Ok(cfg)
}

/// Structural checks that do not need any operator assembly.
pub fn validate(cfg: &Config) -> Result<(), LabError> {
    let bad = |m: String| Err(LabError::Invalid(m));
    for (section, terms) in [("model", &cfg.model), ("perturbation", &cfg.perturbation)] {
        for (i, term) in terms.iter().enumerate() {
            for (field, a) in term.real_fields() {
                if a.im() != 0.0 {
                    return bad(format!(
                        "{section}[{i}].{field}: a {} amplitude must be real for the Hamiltonian to be Hermitian (got imaginary part {})",
                        term.label(),
                        a.im()
                    ));
                }
            }
            if let Err(e) = term.schedule().validate() {
                return bad(format!("{section}[{i}].schedule: {e}"));
            }
        }
    }
    if cfg.model.is_empty() {
        return bad("model: at least one term is required".into());
    }
    if let Some(w) = &cfg.weight {
        if !(w.gap > 0.0) {
            return bad("weight.gap: must be positive".into());
        }
    }
    if let Some(s) = &cfg.adiabatic_sweep {
        if s.epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) || !(s.eta_ratio > 0.0) {
            return bad("adiabatic_sweep: ε must lie in [0, 1] and eta_ratio must be positive".into());
        }
        if s.orders.is_empty() || s.orders.iter().any(|n| *n == 0) {
            return bad("adiabatic_sweep.orders: orders must be positive".into());
        }
    }
    Ok(())
}
