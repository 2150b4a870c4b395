//! The versioned JSON job file.

use std::path::Path;

use mflo_core::fitting::centers_from_box;
use mflo_core::{
    Axis, AxisFunctions, ContractedGaussianAO, LorentzianBasisSpec, MolecularOrbital,
    SimulationCell,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobFile {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub molecule: Molecule,
    pub cell: CellSpec,
    pub lorentzian: LorentzianJob,
    #[serde(default)]
    pub optimizer: OptimizerJob,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpd: Option<CpdJob>,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub aos: Vec<AoJob>,
    pub orbitals: Vec<OrbitalJob>,
    /// Rescale AOs whose contraction is not unit-norm instead of rejecting them.
    #[serde(default)]
    pub auto_renormalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub symbol: String,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Coefficients multiply unit-norm primitives; the contraction is then
    /// normalized.
    NormalizedPrimitives,
    /// Coefficients multiply bare `x^a y^b z^c e^{−γr²}` primitives.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AoJob {
    /// Index into `atoms`.
    pub atom: usize,
    #[serde(default)]
    pub powers: [u32; 3],
    pub exponents: Vec<f64>,
    pub coefficients: Vec<f64>,
    #[serde(default = "default_convention")]
    pub convention: Convention,
}

fn default_convention() -> Convention {
    Convention::NormalizedPrimitives
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitalJob {
    pub name: String,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub origin: [f64; 3],
    pub edge_lengths: [f64; 3],
    pub qubits_per_axis: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerAxis<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub z: Vec<T>,
}

impl<T> PerAxis<T> {
    pub fn get(&self, axis: Axis) -> &[T] {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxGenerator {
    pub box_min: [f64; 3],
    pub box_edges: [f64; 3],
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialWidths {
    Uniform(f64),
    PerAxis(PerAxis<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorentzianJob {
    /// Explicit grid indices per direction. Exclusive with `box`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<PerAxis<usize>>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub box_generator: Option<BoxGenerator>,
    pub initial_widths: InitialWidths,
    #[serde(default)]
    pub penalty: f64,
    /// Per-orbital overrides of `centers`/`box` and `penalty`, keyed by
    /// orbital name.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<LorentzianOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorentzianOverride {
    pub orbital: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<PerAxis<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerJob {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "one")]
    pub restarts: usize,
}

impl Default for OptimizerJob {
    fn default() -> Self {
        Self {
            max_iter: default_max_iter(),
            restarts: 1,
        }
    }
}

fn default_max_iter() -> usize {
    2000
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpdJob {
    /// Strictly increasing ranks to sweep.
    pub ranks: Vec<usize>,
    #[serde(default = "default_cp_restarts")]
    pub restarts: usize,
    /// Defaults to the job seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_cp_restarts() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Report path, relative to the job file. Printed to stdout when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    /// Write ideal, Tucker and canonical statevectors next to the report.
    #[serde(default)]
    pub export_states: bool,
    #[serde(default)]
    pub export_format: ExportFormat,
    /// Optimizer `F` after every accepted step, one CSV per orbital.
    #[serde(default)]
    pub history_csv: bool,
    /// Deviation and success probability against rank, one CSV per orbital.
    #[serde(default)]
    pub rank_csv: bool,
}

fn pointer_escape(s: &str) -> String {
    s.replace('~', "~0").replace('/', "~1")
}

/// Converts a `serde_path_to_error` path into an RFC 6901 JSON pointer.
fn path_to_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => {
                out.push('/');
                out.push_str(&pointer_escape(key));
            }
            Segment::Enum { variant } => {
                out.push('/');
                out.push_str(&pointer_escape(variant));
            }
            Segment::Unknown => {}
        }
    }
    out
}

/// Deserializes `text`, reporting the JSON pointer of the first offending
/// field.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = path_to_pointer(e.path());
        CliError::schema(pointer, e.into_inner().to_string())
    })
}

pub fn load_job(path: &Path) -> CliResult<JobFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let job: JobFile = parse_json(&text)?;
    job.validate()?;
    Ok(job)
}

impl JobFile {
    pub fn from_str(text: &str) -> CliResult<Self> {
        let job: JobFile = parse_json(text)?;
        job.validate()?;
        Ok(job)
    }

    /// Cross-reference checks that serde cannot express.
    pub fn validate(&self) -> CliResult<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::schema(
                "/schema",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema),
            ));
        }
        let m = &self.molecule;
        if m.orbitals.is_empty() {
            return Err(CliError::schema("/molecule/orbitals", "no orbitals to fit"));
        }
        for (i, ao) in m.aos.iter().enumerate() {
            if ao.atom >= m.atoms.len() {
                return Err(CliError::schema(
                    format!("/molecule/aos/{i}/atom"),
                    format!("atom index {} out of range ({} atoms)", ao.atom, m.atoms.len()),
                ));
            }
        }
        for (i, o) in m.orbitals.iter().enumerate() {
            if o.coefficients.len() != m.aos.len() {
                return Err(CliError::schema(
                    format!("/molecule/orbitals/{i}/coefficients"),
                    format!(
                        "orbital '{}' has {} coefficients for {} AOs",
                        o.name,
                        o.coefficients.len(),
                        m.aos.len()
                    ),
                ));
            }
            if m.orbitals[..i].iter().any(|p| p.name == o.name) {
                return Err(CliError::schema(
                    format!("/molecule/orbitals/{i}/name"),
                    format!("duplicate orbital name '{}'", o.name),
                ));
            }
        }
        let l = &self.lorentzian;
        if l.centers.is_some() == l.box_generator.is_some() {
            return Err(CliError::schema(
                "/lorentzian",
                "give exactly one of 'centers' and 'box'",
            ));
        }
        for (i, o) in l.overrides.iter().enumerate() {
            if !m.orbitals.iter().any(|x| x.name == o.orbital) {
                return Err(CliError::schema(
                    format!("/lorentzian/overrides/{i}/orbital"),
                    format!("no orbital named '{}'", o.orbital),
                ));
            }
        }
        if self.optimizer.restarts == 0 {
            return Err(CliError::schema("/optimizer/restarts", "must be at least 1"));
        }
        if let Some(cpd) = &self.cpd {
            if cpd.ranks.is_empty() || cpd.ranks.windows(2).any(|w| w[0] >= w[1]) || cpd.ranks[0] == 0 {
                return Err(CliError::schema(
                    "/cpd/ranks",
                    "ranks must be non-empty, positive and strictly increasing",
                ));
            }
            if cpd.restarts == 0 {
                return Err(CliError::schema("/cpd/restarts", "must be at least 1"));
            }
        }
        // Build everything once so the remaining argument errors carry a pointer.
        self.cell()?;
        for o in &m.orbitals {
            self.orbital(&o.name)?;
            self.basis_spec(&o.name)?;
        }
        Ok(())
    }

    pub fn cell(&self) -> CliResult<SimulationCell> {
        let c = &self.cell;
        SimulationCell::new(c.origin, c.edge_lengths, c.qubits_per_axis).map_err(|e| CliError::at("/cell", e))
    }

    fn aos(&self) -> CliResult<Vec<ContractedGaussianAO>> {
        let m = &self.molecule;
        m.aos
            .iter()
            .enumerate()
            .map(|(i, ao)| {
                let at = |e| CliError::at(&format!("/molecule/aos/{i}"), e);
                let center = m.atoms[ao.atom].position;
                let built = match ao.convention {
                    Convention::NormalizedPrimitives => ContractedGaussianAO::from_normalized_primitives(
                        ao.exponents.clone(),
                        ao.coefficients.clone(),
                        ao.powers,
                        center,
                    ),
                    Convention::Raw => {
                        ContractedGaussianAO::new(ao.exponents.clone(), ao.coefficients.clone(), ao.powers, center)
                    }
                }
                .map_err(at)?;
                if built.is_normalized() {
                    Ok(built)
                } else if m.auto_renormalize {
                    built.normalized().map_err(at)
                } else {
                    Err(CliError::schema(
                        format!("/molecule/aos/{i}/coefficients"),
                        format!(
                            "AO norm² is {}, not 1; fix the coefficients or set auto_renormalize",
                            built.norm_sq()
                        ),
                    ))
                }
            })
            .collect()
    }

    fn orbital_index(&self, name: &str) -> CliResult<usize> {
        self.molecule
            .orbitals
            .iter()
            .position(|o| o.name == name)
            .ok_or_else(|| CliError::schema("/molecule/orbitals", format!("no orbital named '{name}'")))
    }

    pub fn orbital(&self, name: &str) -> CliResult<MolecularOrbital> {
        let i = self.orbital_index(name)?;
        let coefficients = self.molecule.orbitals[i].coefficients.clone();
        MolecularOrbital::new(self.aos()?, coefficients)
            .map_err(|e| CliError::at(&format!("/molecule/orbitals/{i}"), e))
    }

    fn override_for(&self, name: &str) -> Option<(usize, &LorentzianOverride)> {
        self.lorentzian.overrides.iter().enumerate().find(|(_, o)| o.orbital == name)
    }

    pub fn penalty(&self, name: &str) -> f64 {
        self.override_for(name)
            .and_then(|(_, o)| o.penalty)
            .unwrap_or(self.lorentzian.penalty)
    }

    /// The starting basis for orbital `name`.
    pub fn basis_spec(&self, name: &str) -> CliResult<LorentzianBasisSpec> {
        let cell = self.cell()?;
        let l = &self.lorentzian;
        let (centers, pointer): (Vec<Vec<usize>>, String) = match (self.override_for(name), &l.centers, &l.box_generator) {
            (Some((i, LorentzianOverride { centers: Some(c), .. })), _, _) => (
                Axis::ALL.iter().map(|&a| c.get(a).to_vec()).collect(),
                format!("/lorentzian/overrides/{i}/centers"),
            ),
            (_, Some(c), _) => (
                Axis::ALL.iter().map(|&a| c.get(a).to_vec()).collect(),
                "/lorentzian/centers".into(),
            ),
            (_, None, Some(b)) => {
                let mut out = Vec::with_capacity(3);
                for a in Axis::ALL {
                    let i = a.index();
                    out.push(
                        centers_from_box(&cell, a, b.box_min[i], b.box_edges[i], b.counts[i])
                            .map_err(|e| CliError::at("/lorentzian/box", e))?,
                    );
                }
                (out, "/lorentzian/box".into())
            }
            (_, None, None) => unreachable!("checked in validate"),
        };
        let mut axes = Vec::with_capacity(3);
        for (a, c) in Axis::ALL.iter().zip(centers) {
            let widths = match &l.initial_widths {
                InitialWidths::Uniform(w) => vec![*w; c.len()],
                InitialWidths::PerAxis(p) => {
                    let w = p.get(*a).to_vec();
                    if w.len() != c.len() {
                        return Err(CliError::schema(
                            format!("/lorentzian/initial_widths/{}", a.name()),
                            format!("{} widths for {} centers", w.len(), c.len()),
                        ));
                    }
                    w
                }
            };
            axes.push(AxisFunctions { widths, centers: c });
        }
        let axes: [AxisFunctions; 3] = axes.try_into().expect("three axes");
        let spec = LorentzianBasisSpec::new(axes);
        spec.validate(cell.qubits_per_axis).map_err(|e| CliError::at(&pointer, e))?;
        let alpha = self.penalty(name);
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(CliError::schema("/lorentzian/penalty", format!("must be finite and ≥ 0, got {alpha}")));
        }
        if let Some(cpd) = &self.cpd {
            let n_prod = spec.n_prod();
            if let Some(&r) = cpd.ranks.iter().find(|&&r| r > n_prod) {
                return Err(CliError::schema(
                    "/cpd/ranks",
                    format!("rank {r} exceeds the {n_prod} product functions of orbital '{name}'"),
                ));
            }
        }
        Ok(spec)
    }
}
