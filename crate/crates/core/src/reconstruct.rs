//! Component functions, total wavefunctions and probability densities.
//!
//! Spatial drive: `Ψ(x, r) = Σ_n c_n e^{i K_n r} [ψ0_n(x) + Σ_g ψ_gn(x) e^{i g_p r}]`
//! with `K_n = √(2(E - ε_n))`. Temporal drive:
//! `Ψ(x, t) = Σ_n c_n e^{-i ε_n t} [ψ0_n(x) + Σ_k ψ_kn(x) e^{i ω k t}]`.
//! Fields are not renormalized; norms are per unit cell of the second axis.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::effpot::{channel_denominator, ChannelBases, MERGE_REL};
use crate::eigenbasis::{matrix_element, EigenBasis};
use crate::error::{Error, Result};
use crate::model::{PerturbationKind, SystemSpec};
use crate::spectra::{Realisation, SpectrumResult};

/// `ψ_gn` on the full grid for every channel, at one root.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    pub n: usize,
    pub root: f64,
    /// `(g, ψ_gn)` in harmonic order.
    pub components: Vec<(i32, Vec<Complex64>)>,
}

impl ComponentSet {
    /// `Σ_g ‖ψ_gn‖²` in the quadrature norm.
    pub fn channel_norm_sqr(&self, weights: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|(_, c)| {
                c.iter()
                    .zip(weights)
                    .map(|(v, w)| w * v.norm_sqr())
                    .sum::<f64>()
            })
            .sum()
    }
}

/// `ψ_gn(x) = Σ_{n'} ψ_{gn'}(x) V^g_{n'n} / D_{gn'}(root)`.
pub fn component_functions(
    spec: &SystemSpec,
    bases: &ChannelBases,
    root: f64,
    n: usize,
) -> Result<ComponentSet> {
    let base = bases.base();
    base.eigenvalue(n)?;
    let mut terms = Vec::with_capacity(spec.harmonics.len());
    let mut poles = Vec::new();
    for h in &spec.harmonics {
        let channel = spec.channel_energy(h.index)?;
        let cb = bases.channel(h.index)?;
        let mut coefficients = Vec::with_capacity(spec.n_prime);
        for n_prime in 1..=spec.n_prime {
            let element = matrix_element(cb, base, &h.amplitude, n_prime, n)?;
            let aux = cb.eigenvalue(n_prime)?;
            let den = channel_denominator(&channel, aux, root, spec.denominator_mode, spec.energy)?;
            poles.push((root - den, den));
            coefficients.push(element / den);
        }
        terms.push((h.index, cb, coefficients));
    }
    let (lo, hi) = poles
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (p, _)| {
            (lo.min(*p), hi.max(*p))
        });
    let tol = if poles.is_empty() {
        0.0
    } else {
        MERGE_REL * (hi - lo)
    };
    for &(pole, den) in &poles {
        if den == 0.0 || den.abs() <= tol {
            return Err(Error::PoleProximity {
                energy: root,
                pole,
                tolerance: tol,
            });
        }
    }
    let points = spec.grid.points;
    let components = terms
        .into_iter()
        .map(|(index, cb, coefficients)| {
            let mut psi = vec![Complex64::new(0.0, 0.0); points];
            for (k, c) in coefficients.iter().enumerate() {
                for (acc, &v) in psi.iter_mut().zip(&cb.eigenfunctions[k]) {
                    *acc += c * v;
                }
            }
            (index, psi)
        })
        .collect();
    Ok(ComponentSet {
        n,
        root,
        components,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// Periodic coordinate `r_p`.
    Space,
    Time,
}

/// Samples of `Ψ` on `x × axis`, row-major in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub x: Vec<f64>,
    pub axis: Vec<f64>,
    pub axis_kind: AxisKind,
    /// Period of the second axis.
    pub period: f64,
    pub psi: Vec<Complex64>,
    pub rho: Vec<f64>,
    /// Base states assembled with an evanescent `K_n`.
    pub evanescent: Vec<usize>,
}

impl WaveField {
    pub fn at(&self, i: usize, m: usize) -> Complex64 {
        self.psi[i * self.axis.len() + m]
    }

    pub fn density_at(&self, i: usize, m: usize) -> f64 {
        self.rho[i * self.axis.len() + m]
    }

    /// `∫∫ ρ` over the sampled cell, trapezoid in `x` and rectangle along the
    /// periodic axis. Exact for band-limited periodic dependence when `axis`
    /// uniformly covers one period.
    pub fn cell_integral(&self, x_weights: &[f64]) -> f64 {
        let step = self.period / self.axis.len() as f64;
        let mut acc = 0.0;
        for (i, w) in x_weights.iter().enumerate() {
            let row = &self.rho[i * self.axis.len()..(i + 1) * self.axis.len()];
            acc += w * step * row.iter().sum::<f64>();
        }
        acc
    }
}

/// `ρ = |Ψ|²` pointwise.
pub fn pdd(psi: &[Complex64]) -> Vec<f64> {
    psi.iter().map(|v| v.norm_sqr()).collect()
}

/// Period of the second axis: `d_p` or `2π/ω`.
pub fn cell_period(spec: &SystemSpec) -> f64 {
    match spec.perturbation {
        PerturbationKind::SpatialPeriodic { period, .. } => period,
        PerturbationKind::TimePeriodic { frequency } => 2.0 * std::f64::consts::PI / frequency,
    }
}

/// `samples` uniform points covering one period, right endpoint excluded.
pub fn cell_axis(spec: &SystemSpec, samples: usize) -> Vec<f64> {
    let period = cell_period(spec);
    (0..samples)
        .map(|m| period * m as f64 / samples as f64)
        .collect()
}

/// Coefficients `c_n = ⟨ψ0_n|χ⟩` for `n = 1..N_s`, or `e_1` when no profile is
/// supplied.
pub fn default_coefficients(
    base: &EigenBasis,
    n_base: usize,
    profile: Option<&[f64]>,
) -> Result<Vec<Complex64>> {
    match profile {
        None => {
            let mut c = vec![Complex64::new(0.0, 0.0); n_base];
            if let Some(first) = c.first_mut() {
                *first = Complex64::new(1.0, 0.0);
            }
            Ok(c)
        }
        Some(chi) => Ok(base
            .project(chi)?
            .into_iter()
            .take(n_base)
            .map(|v| Complex64::new(v, 0.0))
            .collect()),
    }
}

/// Assembles `Ψ` from one component set per term with coefficients `c`.
pub fn assemble_wavefunction(
    spec: &SystemSpec,
    base: &EigenBasis,
    sets: &[ComponentSet],
    coefficients: &[Complex64],
    axis: &[f64],
    allow_evanescent: bool,
) -> Result<WaveField> {
    if sets.len() != coefficients.len() {
        return Err(Error::invalid(format!(
            "{} component sets but {} coefficients",
            sets.len(),
            coefficients.len()
        )));
    }
    let points = spec.grid.points;
    let (kind, exponents, evanescent) = phase_rates(spec, sets, allow_evanescent)?;
    let channel_rates: Vec<Vec<f64>> = sets
        .iter()
        .map(|s| {
            s.components
                .iter()
                .map(|(g, _)| match spec.perturbation {
                    PerturbationKind::SpatialPeriodic { .. } => {
                        spec.reciprocal_vector(*g).unwrap_or(0.0)
                    }
                    PerturbationKind::TimePeriodic { frequency } => frequency * f64::from(*g),
                })
                .collect()
        })
        .collect();
    let bases: Vec<&[f64]> = sets
        .iter()
        .map(|s| base.state(s.n))
        .collect::<Result<_>>()?;
    let width = axis.len();
    let psi: Vec<Complex64> = (0..points)
        .into_par_iter()
        .flat_map_iter(|i| {
            let bases = &bases;
            let exponents = &exponents;
            let channel_rates = &channel_rates;
            axis.iter().map(move |&r| {
                let mut total = Complex64::new(0.0, 0.0);
                for (t, set) in sets.iter().enumerate() {
                    let mut bracket = Complex64::new(bases[t][i], 0.0);
                    for ((_, comp), rate) in set.components.iter().zip(&channel_rates[t]) {
                        bracket += comp[i] * Complex64::from_polar(1.0, rate * r);
                    }
                    total += coefficients[t] * (exponents[t] * r).exp() * bracket;
                }
                total
            })
        })
        .collect();
    debug_assert_eq!(psi.len(), points * width);
    let rho = pdd(&psi);
    Ok(WaveField {
        x: spec.grid.coordinates(),
        axis: axis.to_vec(),
        axis_kind: kind,
        period: cell_period(spec),
        psi,
        rho,
        evanescent,
    })
}

/// Per-term complex exponent rates: `i K_n` (spatial) or `-i ε_n` (temporal).
fn phase_rates(
    spec: &SystemSpec,
    sets: &[ComponentSet],
    allow_evanescent: bool,
) -> Result<(AxisKind, Vec<Complex64>, Vec<usize>)> {
    match spec.perturbation {
        PerturbationKind::TimePeriodic { .. } => Ok((
            AxisKind::Time,
            sets.iter().map(|s| Complex64::new(0.0, -s.root)).collect(),
            Vec::new(),
        )),
        PerturbationKind::SpatialPeriodic { .. } => {
            let mut rates = Vec::with_capacity(sets.len());
            let mut evanescent = Vec::new();
            for s in sets {
                let k2 = 2.0 * (spec.energy - s.root);
                if k2 >= 0.0 {
                    rates.push(Complex64::new(0.0, k2.sqrt()));
                } else if allow_evanescent {
                    evanescent.push(s.n);
                    rates.push(Complex64::new(-(-k2).sqrt(), 0.0));
                } else {
                    return Err(Error::Evanescent {
                        n: s.n,
                        energy: s.root,
                    });
                }
            }
            Ok((AxisKind::Space, rates, evanescent))
        }
    }
}

/// Component sets for a realisation: per base state, the member root closest
/// to `ε0_n`. States without members are skipped.
pub fn realisation_components(
    spec: &SystemSpec,
    bases: &ChannelBases,
    spectrum: &SpectrumResult,
    realisation: &Realisation,
) -> Result<Vec<ComponentSet>> {
    spectrum
        .states
        .par_iter()
        .filter_map(|s| {
            realisation
                .members_of(s.n)
                .min_by(|a, b| {
                    (a.energy - s.epsilon0)
                        .abs()
                        .total_cmp(&(b.energy - s.epsilon0).abs())
                        .then(a.j.cmp(&b.j))
                })
                .map(|m| component_functions(spec, bases, m.energy, s.n))
        })
        .collect()
}
