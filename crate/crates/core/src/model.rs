//! Problem definition: configuration document, validated system spec and
//! channel energies.
//!
//! The configuration is a JSON document with top-level keys `box`, `grid`,
//! `base_potential`, `perturbation`, `energy`, `truncation` and `modes`.
//! Potentials are given either as grid samples or as analytic presets that
//! are sampled when the spec is built.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::trapezoid_weights;

/// Relative tolerance for the conjugate-symmetry check of real potentials.
const CONJUGATE_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Configuration document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(rename = "box")]
    pub box_section: BoxSection,
    pub grid: GridSection,
    pub base_potential: Profile,
    pub perturbation: PerturbationSection,
    pub energy: f64,
    pub truncation: TruncationSection,
    #[serde(default)]
    pub modes: ModesSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    pub n_base: usize,
    pub n_prime: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesSection {
    #[serde(default)]
    pub denominator: DenominatorMode,
    #[serde(default)]
    pub basis: BasisBackend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSection {
    #[serde(flatten)]
    pub drive: Drive,
    /// Declares the physical total potential real, which requires
    /// `V_{-g} = conj(V_g)` for every harmonic.
    #[serde(default = "default_true")]
    pub real: bool,
    /// Common factor applied to every harmonic amplitude.
    #[serde(default = "default_one")]
    pub amplitude_scale: f64,
    pub harmonics: Vec<HarmonicSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drive {
    Spatial {
        period: f64,
        #[serde(default)]
        bloch_wavenumber: f64,
    },
    Temporal {
        frequency: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicSection {
    pub index: i32,
    pub profile: Profile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imag_profile: Option<Profile>,
    /// Complex prefactor `[re, im]`.
    #[serde(default = "unit_coefficient")]
    pub coefficient: [f64; 2],
}

/// A real function on `[0, L]`, either analytic or sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `amplitude * cos(2π periods x / L + phase)`
    Cosine {
        amplitude: f64,
        #[serde(default = "default_one")]
        periods: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude * exp(-(x - center)^2 / (2 width^2))`
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    Samples {
        values: Vec<f64>,
    },
}

fn default_true() -> bool {
    true
}

fn default_one() -> f64 {
    1.0
}

fn unit_coefficient() -> [f64; 2] {
    [1.0, 0.0]
}

impl ConfigDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config document serializes")
    }
}

impl Profile {
    pub fn zero() -> Self {
        Profile::Constant { value: 0.0 }
    }

    /// Samples the profile on `grid`. Sampled profiles must match the grid
    /// size unless `interpolate` is set, in which case they are linearly
    /// resampled.
    pub fn sample(&self, grid: &Grid, interpolate: bool) -> Result<Vec<f64>> {
        let l = grid.length;
        let xs = grid.coordinates();
        let out = match self {
            Profile::Constant { value } => vec![*value; xs.len()],
            Profile::Cosine {
                amplitude,
                periods,
                phase,
            } => xs
                .iter()
                .map(|x| amplitude * (2.0 * PI * periods * x / l + phase).cos())
                .collect(),
            Profile::Gaussian {
                amplitude,
                center,
                width,
            } => {
                if !(*width > 0.0) {
                    return Err(Error::invalid("gaussian width must be positive"));
                }
                xs.iter()
                    .map(|x| amplitude * (-(x - center).powi(2) / (2.0 * width * width)).exp())
                    .collect()
            }
            Profile::Samples { values } => {
                if values.len() == grid.points {
                    values.clone()
                } else if interpolate && values.len() >= 2 {
                    resample_linear(values, grid.points)
                } else {
                    return Err(Error::invalid(format!(
                        "sampled profile has {} values but the grid has {} points",
                        values.len(),
                        grid.points
                    )));
                }
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("profile produced non-finite samples"));
        }
        Ok(out)
    }
}

fn resample_linear(values: &[f64], points: usize) -> Vec<f64> {
    let m = values.len() - 1;
    (0..points)
        .map(|i| {
            let s = i as f64 * m as f64 / (points - 1) as f64;
            let k = (s.floor() as usize).min(m - 1);
            let t = s - k as f64;
            values[k] * (1.0 - t) + values[k + 1] * t
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Validated spec
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorMode {
    /// Drops the root's energy dependence: `√(E ε_p)` instead of `√((E-ε)ε_p)`.
    #[default]
    Approximate,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisBackend {
    /// Channel functions approximated by the unperturbed eigenbasis.
    #[default]
    Unperturbed,
    /// Channel `k` uses the eigenbasis of `h0 + V1`, `V1 = V(t=0) - V_k`.
    #[serde(rename = "v1")]
    SelfConsistentV1,
}

/// Uniform grid on `[0, L]` with both endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub length: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(length: f64, points: usize) -> Self {
        Self { length, points }
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }

    pub fn quadrature_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.points, self.spacing())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbationKind {
    SpatialPeriodic { period: f64, bloch_wavenumber: f64 },
    TimePeriodic { frequency: f64 },
}

impl PerturbationKind {
    pub fn is_temporal(&self) -> bool {
        matches!(self, PerturbationKind::TimePeriodic { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Harmonic {
    pub index: i32,
    pub profile: Profile,
    pub imag_profile: Option<Profile>,
    pub coefficient: Complex64,
    /// Sampled amplitude `V_g(x_i)`, including the global amplitude scale.
    pub amplitude: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub grid: Grid,
    pub base_profile: Profile,
    pub base_potential: Vec<f64>,
    pub perturbation: PerturbationKind,
    pub real_potential: bool,
    pub amplitude_scale: f64,
    /// Sorted by index.
    pub harmonics: Vec<Harmonic>,
    pub energy: f64,
    pub n_base: usize,
    pub n_prime: usize,
    pub denominator_mode: DenominatorMode,
    pub basis_backend: BasisBackend,
    pub warnings: Vec<String>,
}

/// Per-channel energetics of one harmonic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEnergy {
    pub index: i32,
    /// `E - (K_p + g_p)^2/2` (spatial) or `E - ω_p k` (temporal).
    pub epsilon_s_channel: f64,
    /// `g_p^2/2`; zero for temporal channels.
    pub epsilon_p: f64,
    /// `±1` in one dimension, the sign of the harmonic index.
    pub cos_alpha: f64,
    /// `ω_p k` for temporal channels.
    pub drive_shift: Option<f64>,
}

/// Parses and validates a configuration document.
pub fn build_spec(doc: &ConfigDocument) -> Result<SystemSpec> {
    SystemSpec::from_document(doc)
}

/// One [`ChannelEnergy`] per harmonic, in index order.
pub fn channel_energies(spec: &SystemSpec) -> Vec<ChannelEnergy> {
    spec.harmonics
        .iter()
        .map(|h| {
            spec.channel_energy(h.index)
                .expect("harmonic index is nonzero")
        })
        .collect()
}

impl SystemSpec {
    pub fn from_document(doc: &ConfigDocument) -> Result<Self> {
        Self::build(doc, doc.grid.points, false)
    }

    /// Rebuilds the spec on a grid with `points` nodes. Sampled profiles are
    /// linearly interpolated; presets are re-evaluated exactly.
    pub fn with_grid_points(&self, points: usize) -> Result<Self> {
        let mut doc = self.to_document();
        doc.grid.points = points;
        Self::build(&doc, points, true)
    }

    fn build(doc: &ConfigDocument, points: usize, interpolate: bool) -> Result<Self> {
        let length = doc.box_section.length;
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid("box length must be finite and positive"));
        }
        let n_base = doc.truncation.n_base;
        let n_prime = doc.truncation.n_prime;
        if n_base < 1 {
            return Err(Error::invalid("n_base must be at least 1"));
        }
        if n_prime < 1 {
            return Err(Error::invalid("n_prime must be at least 1"));
        }
        let n_states = n_base.max(n_prime);
        let min_points = 64usize.max(8 * n_states);
        if points < min_points {
            return Err(Error::invalid(format!(
                "grid points {points} below required minimum {min_points} (max(64, 8·max(N_s, N_p')))"
            )));
        }
        if !doc.energy.is_finite() {
            return Err(Error::invalid("energy must be finite"));
        }
        let grid = Grid::new(length, points);
        let base_potential = doc.base_potential.sample(&grid, interpolate)?;

        let section = &doc.perturbation;
        let perturbation = match section.drive {
            Drive::Spatial {
                period,
                bloch_wavenumber,
            } => {
                if !(period.is_finite() && period > 0.0) {
                    return Err(Error::invalid("perturbation period must be positive"));
                }
                if !bloch_wavenumber.is_finite() {
                    return Err(Error::invalid("Bloch wavenumber must be finite"));
                }
                PerturbationKind::SpatialPeriodic {
                    period,
                    bloch_wavenumber,
                }
            }
            Drive::Temporal { frequency } => {
                if !(frequency.is_finite() && frequency > 0.0) {
                    return Err(Error::invalid("perturbation frequency must be positive"));
                }
                PerturbationKind::TimePeriodic { frequency }
            }
        };
        if !section.amplitude_scale.is_finite() {
            return Err(Error::invalid("amplitude_scale must be finite"));
        }

        let mut harmonics = Vec::with_capacity(section.harmonics.len());
        for h in &section.harmonics {
            if h.index == 0 {
                return Err(Error::ZeroHarmonicIndex);
            }
            if harmonics.iter().any(|o: &Harmonic| o.index == h.index) {
                return Err(Error::invalid(format!(
                    "duplicate harmonic index {}",
                    h.index
                )));
            }
            let coefficient = Complex64::new(h.coefficient[0], h.coefficient[1]);
            if !(coefficient.re.is_finite() && coefficient.im.is_finite()) {
                return Err(Error::invalid("harmonic coefficient must be finite"));
            }
            let re = h.profile.sample(&grid, interpolate)?;
            let im = match &h.imag_profile {
                Some(p) => p.sample(&grid, interpolate)?,
                None => vec![0.0; points],
            };
            let factor = coefficient * section.amplitude_scale;
            let amplitude = re
                .iter()
                .zip(&im)
                .map(|(&a, &b)| factor * Complex64::new(a, b))
                .collect();
            harmonics.push(Harmonic {
                index: h.index,
                profile: h.profile.clone(),
                imag_profile: h.imag_profile.clone(),
                coefficient,
                amplitude,
            });
        }
        harmonics.sort_by_key(|h| h.index);

        let mut spec = SystemSpec {
            grid,
            base_profile: doc.base_potential.clone(),
            base_potential,
            perturbation,
            real_potential: section.real,
            amplitude_scale: section.amplitude_scale,
            harmonics,
            energy: doc.energy,
            n_base,
            n_prime,
            denominator_mode: doc.modes.denominator,
            basis_backend: doc.modes.basis,
            warnings: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&mut self) -> Result<()> {
        if self.basis_backend == BasisBackend::SelfConsistentV1 && !self.perturbation.is_temporal()
        {
            return Err(Error::invalid(
                "the v1 basis backend requires a temporal perturbation",
            ));
        }
        if self.real_potential {
            let scale = self.amplitude_max().max(f64::MIN_POSITIVE);
            for h in &self.harmonics {
                let partner = self.harmonic(-h.index).ok_or_else(|| {
                    Error::invalid(format!(
                        "real potential requires harmonic {} to accompany {}",
                        -h.index, h.index
                    ))
                })?;
                let worst = h
                    .amplitude
                    .iter()
                    .zip(&partner.amplitude)
                    .map(|(a, b)| (a - b.conj()).norm())
                    .fold(0.0, f64::max);
                if worst > CONJUGATE_TOL * scale {
                    return Err(Error::invalid(format!(
                        "real potential requires V_{{{}}} = conj(V_{{{}}}); mismatch {worst:e}",
                        -h.index, h.index
                    )));
                }
            }
        }
        if let PerturbationKind::SpatialPeriodic { .. } = self.perturbation {
            let max_offset = channel_energies(self)
                .iter()
                .map(|c| c.epsilon_p)
                .fold(0.0, f64::max);
            if self.denominator_mode == DenominatorMode::Approximate {
                if self.energy < 0.0 && !self.harmonics.is_empty() {
                    return Err(Error::invalid(
                        "approximate spatial denominators need a nonnegative energy",
                    ));
                }
                if self.energy <= max_offset && !self.harmonics.is_empty() {
                    let msg = format!(
                        "energy {} does not exceed the largest channel kinetic offset {max_offset}; \
                         the approximate denominator regime assumes E well above it",
                        self.energy
                    );
                    log::warn!("{msg}");
                    self.warnings.push(msg);
                }
            }
        }
        Ok(())
    }

    /// Reconstructs the configuration document this spec was built from.
    pub fn to_document(&self) -> ConfigDocument {
        let drive = match self.perturbation {
            PerturbationKind::SpatialPeriodic {
                period,
                bloch_wavenumber,
            } => Drive::Spatial {
                period,
                bloch_wavenumber,
            },
            PerturbationKind::TimePeriodic { frequency } => Drive::Temporal { frequency },
        };
        ConfigDocument {
            box_section: BoxSection {
                length: self.grid.length,
            },
            grid: GridSection {
                points: self.grid.points,
            },
            base_potential: self.base_profile.clone(),
            perturbation: PerturbationSection {
                drive,
                real: self.real_potential,
                amplitude_scale: self.amplitude_scale,
                harmonics: self
                    .harmonics
                    .iter()
                    .map(|h| HarmonicSection {
                        index: h.index,
                        profile: h.profile.clone(),
                        imag_profile: h.imag_profile.clone(),
                        coefficient: [h.coefficient.re, h.coefficient.im],
                    })
                    .collect(),
            },
            energy: self.energy,
            truncation: TruncationSection {
                n_base: self.n_base,
                n_prime: self.n_prime,
            },
            modes: ModesSection {
                denominator: self.denominator_mode,
                basis: self.basis_backend,
            },
        }
    }

    /// Number of harmonics `N_p`.
    pub fn n_harmonics(&self) -> usize {
        self.harmonics.len()
    }

    /// Number of eigenpairs each basis must provide.
    pub fn n_states(&self) -> usize {
        self.n_base.max(self.n_prime)
    }

    pub fn harmonic(&self, index: i32) -> Option<&Harmonic> {
        self.harmonics
            .binary_search_by_key(&index, |h| h.index)
            .ok()
            .map(|i| &self.harmonics[i])
    }

    /// Largest `|V_g(x)|` over all harmonics and grid points.
    pub fn amplitude_max(&self) -> f64 {
        self.harmonics
            .iter()
            .flat_map(|h| h.amplitude.iter().map(|a| a.norm()))
            .fold(0.0, f64::max)
    }

    /// `g_p = 2π g / d_p` for spatial perturbations.
    pub fn reciprocal_vector(&self, index: i32) -> Option<f64> {
        match self.perturbation {
            PerturbationKind::SpatialPeriodic { period, .. } => {
                Some(2.0 * PI * index as f64 / period)
            }
            PerturbationKind::TimePeriodic { .. } => None,
        }
    }

    pub fn channel_energy(&self, index: i32) -> Result<ChannelEnergy> {
        if index == 0 {
            return Err(Error::ZeroHarmonicIndex);
        }
        let cos_alpha = f64::from(index.signum());
        Ok(match self.perturbation {
            PerturbationKind::SpatialPeriodic {
                period,
                bloch_wavenumber,
            } => {
                let g = 2.0 * PI * index as f64 / period;
                ChannelEnergy {
                    index,
                    epsilon_s_channel: self.energy - 0.5 * (bloch_wavenumber + g).powi(2),
                    epsilon_p: 0.5 * g * g,
                    cos_alpha,
                    drive_shift: None,
                }
            }
            PerturbationKind::TimePeriodic { frequency } => {
                let shift = frequency * index as f64;
                ChannelEnergy {
                    index,
                    epsilon_s_channel: self.energy - shift,
                    epsilon_p: 0.0,
                    cos_alpha,
                    drive_shift: Some(shift),
                }
            }
        })
    }

    /// Returns a copy with the given modes.
    pub fn with_modes(&self, mode: DenominatorMode, backend: BasisBackend) -> Result<Self> {
        let mut doc = self.to_document();
        doc.modes.denominator = mode;
        doc.modes.basis = backend;
        Self::from_document(&doc)
    }

    /// `V(x, t = 0) = V0(x) + Σ_k V_k(x)` minus harmonic `excluded`.
    pub fn v1_potential(&self, excluded: i32) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = self
            .base_potential
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        for h in self.harmonics.iter().filter(|h| h.index != excluded) {
            for (acc, a) in v.iter_mut().zip(&h.amplitude) {
                *acc += a;
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spatial_doc(period: f64, indices: &[i32]) -> ConfigDocument {
        ConfigDocument {
            box_section: BoxSection { length: PI },
            grid: GridSection { points: 128 },
            base_potential: Profile::zero(),
            perturbation: PerturbationSection {
                drive: Drive::Spatial {
                    period,
                    bloch_wavenumber: 0.0,
                },
                real: true,
                amplitude_scale: 1.0,
                harmonics: indices
                    .iter()
                    .map(|&index| HarmonicSection {
                        index,
                        profile: Profile::Gaussian {
                            amplitude: 0.3,
                            center: 1.0,
                            width: 0.4,
                        },
                        imag_profile: None,
                        coefficient: [1.0, 0.0],
                    })
                    .collect(),
            },
            energy: 4.0,
            truncation: TruncationSection {
                n_base: 1,
                n_prime: 2,
            },
            modes: ModesSection::default(),
        }
    }

    #[test]
    fn reciprocal_vector_from_period() {
        let spec = build_spec(&spatial_doc(2.0 * PI, &[-1, 1])).unwrap();
        assert!((spec.reciprocal_vector(1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_index_is_rejected() {
        let err = build_spec(&spatial_doc(2.0 * PI, &[0])).unwrap_err();
        assert!(matches!(err, Error::ZeroHarmonicIndex));
        assert_eq!(err.to_string(), "zero harmonic index");
    }

    #[test]
    fn figure_one_a_harmonic_count() {
        let spec = build_spec(&spatial_doc(2.0 * PI, &[-2, -1, 1, 2])).unwrap();
        assert_eq!(spec.n_harmonics(), 4);
        assert_eq!(spec.n_prime, 2);
    }

    #[test]
    fn spatial_channel_energy() {
        let spec = build_spec(&spatial_doc(2.0 * PI, &[-1, 1])).unwrap();
        let c = spec.channel_energy(1).unwrap();
        assert!((c.epsilon_s_channel - 3.5).abs() < 1e-14);
        assert!((c.epsilon_p - 0.5).abs() < 1e-14);
        assert_eq!(c.cos_alpha, 1.0);
        assert_eq!(spec.channel_energy(-1).unwrap().cos_alpha, -1.0);
        assert!(matches!(
            spec.channel_energy(0),
            Err(Error::ZeroHarmonicIndex)
        ));
    }

    #[test]
    fn temporal_channel_energy() {
        let mut doc = spatial_doc(1.0, &[-2, 2]);
        doc.perturbation.drive = Drive::Temporal { frequency: 1.0 };
        let spec = build_spec(&doc).unwrap();
        let c = spec.channel_energy(2).unwrap();
        assert_eq!(c.epsilon_s_channel, 2.0);
        assert_eq!(c.drive_shift, Some(2.0));
    }

    #[test]
    fn mirrored_channels_share_kinetic_offset() {
        let spec = build_spec(&spatial_doc(1.7, &[-3, -1, 1, 3])).unwrap();
        for c in channel_energies(&spec) {
            let m = spec.channel_energy(-c.index).unwrap();
            assert_eq!(c.epsilon_p, m.epsilon_p);
        }
    }

    #[test]
    fn real_potential_requires_partner() {
        let err = build_spec(&spatial_doc(2.0, &[1])).unwrap_err();
        assert!(err.to_string().contains("accompany"));
        let mut doc = spatial_doc(2.0, &[1]);
        doc.perturbation.real = false;
        assert!(build_spec(&doc).is_ok());
    }

    #[test]
    fn complex_conjugate_pair_passes_realness_check() {
        let mut doc = spatial_doc(2.0, &[-1, 1]);
        doc.perturbation.harmonics[0].coefficient = [0.5, -0.25];
        doc.perturbation.harmonics[1].coefficient = [0.5, 0.25];
        assert!(build_spec(&doc).is_ok());
        doc.perturbation.harmonics[1].coefficient = [0.5, -0.25];
        assert!(build_spec(&doc).is_err());
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let mut doc = spatial_doc(2.0, &[-1, 1]);
        doc.grid.points = 63;
        assert!(build_spec(&doc).is_err());
        doc.grid.points = 64;
        doc.truncation.n_base = 9;
        assert!(build_spec(&doc).is_err());
    }

    #[test]
    fn sample_length_must_match_grid() {
        let mut doc = spatial_doc(2.0, &[-1, 1]);
        doc.base_potential = Profile::Samples {
            values: vec![0.0; 10],
        };
        assert!(build_spec(&doc).is_err());
    }

    #[test]
    fn v1_backend_needs_temporal_drive() {
        let mut doc = spatial_doc(2.0, &[-1, 1]);
        doc.modes.basis = BasisBackend::SelfConsistentV1;
        assert!(build_spec(&doc).is_err());
    }

    #[test]
    fn low_energy_emits_warning() {
        let mut doc = spatial_doc(2.0 * PI, &[-2, 2]);
        doc.energy = 1.0;
        let spec = build_spec(&doc).unwrap();
        assert_eq!(spec.warnings.len(), 1);
    }

    #[test]
    fn document_json_round_trip() {
        let doc = spatial_doc(2.0 * PI, &[-1, 1]);
        let parsed = ConfigDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(parsed, doc);
        let spec = build_spec(&parsed).unwrap();
        assert_eq!(spec.to_document(), doc);
    }

    #[test]
    fn defaults_are_filled_on_parse() {
        let text = r#"{
            "box": {"length": 3.0},
            "grid": {"points": 64},
            "base_potential": {"kind": "cosine", "amplitude": 2.0},
            "perturbation": {"kind": "temporal", "frequency": 1.5,
                "harmonics": [{"index": 1, "profile": {"kind": "constant", "value": 0.1}},
                              {"index": -1, "profile": {"kind": "constant", "value": 0.1}}]},
            "energy": 2.0,
            "truncation": {"n_base": 1, "n_prime": 1}
        }"#;
        let doc = ConfigDocument::from_json(text).unwrap();
        assert!(doc.perturbation.real);
        assert_eq!(doc.perturbation.amplitude_scale, 1.0);
        assert_eq!(doc.modes.denominator, DenominatorMode::Approximate);
        let spec = build_spec(&doc).unwrap();
        assert_eq!(spec.harmonics[0].index, -1);
        assert!((spec.base_potential[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn malformed_document_is_a_config_error() {
        assert!(matches!(
            ConfigDocument::from_json("{\"box\": 3}"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn v1_potential_drops_excluded_harmonic() {
        let mut doc = spatial_doc(1.0, &[-1, 1]);
        doc.perturbation.drive = Drive::Temporal { frequency: 1.0 };
        doc.perturbation.harmonics[0].profile = Profile::Constant { value: 0.25 };
        doc.perturbation.harmonics[1].profile = Profile::Constant { value: 0.25 };
        let spec = build_spec(&doc).unwrap();
        let v1 = spec.v1_potential(1);
        assert!(v1
            .iter()
            .all(|v| (v.re - 0.25).abs() < 1e-15 && v.im == 0.0));
    }
}
