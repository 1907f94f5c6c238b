//! Effective-potential machinery: pole positions, pole/weight tables for the
//! diagonal projection `V_nn(ε)`, the nonlocal kernel and its action, and
//! the first-order series kernel of the auxiliary problem.
//!
//! In the approximate regime `V_nn(ε) = Σ_j w_j / (ε - p_j)` with
//! `w_j = |V_{nn'}^g|² ≥ 0`, one term per retained `(g, n')`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::eigenbasis::{
    matrix_element, solve_base_eigenproblem, solve_v1_eigenproblem, EigenBasis,
};
use crate::error::{Error, Result};
use crate::model::{BasisBackend, ChannelEnergy, DenominatorMode, SystemSpec};
use crate::numeric::{CompensatedComplexSum, CompensatedSum};

/// Relative pole-merge tolerance (times the pole spread).
pub const MERGE_REL: f64 = 1e-9;

/// Matrix elements below this fraction of `max |V_g|` are numerical zeros
/// (typically symmetry-forbidden) and their entries are dropped.
pub const WEIGHT_FLOOR_REL: f64 = 1e-12;

/// Base eigenbasis plus one eigenbasis per harmonic channel.
#[derive(Debug, Clone)]
pub struct ChannelBases {
    base: Arc<EigenBasis>,
    channels: Vec<(i32, Arc<EigenBasis>)>,
}

impl ChannelBases {
    /// Solves the bases required by the spec's backend.
    pub fn solve(spec: &SystemSpec) -> Result<Self> {
        let base = Arc::new(solve_base_eigenproblem(spec)?);
        let channels = match spec.basis_backend {
            BasisBackend::Unperturbed => spec
                .harmonics
                .iter()
                .map(|h| (h.index, Arc::clone(&base)))
                .collect(),
            BasisBackend::SelfConsistentV1 => spec
                .harmonics
                .par_iter()
                .map(|h| Ok((h.index, Arc::new(solve_v1_eigenproblem(spec, h.index)?))))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Self { base, channels })
    }

    /// All channels share `base`.
    pub fn uniform(spec: &SystemSpec, base: EigenBasis) -> Self {
        let base = Arc::new(base);
        let channels = spec
            .harmonics
            .iter()
            .map(|h| (h.index, Arc::clone(&base)))
            .collect();
        Self { base, channels }
    }

    pub fn base(&self) -> &EigenBasis {
        &self.base
    }

    pub fn channel(&self, index: i32) -> Result<&EigenBasis> {
        self.channels
            .iter()
            .find(|(i, _)| *i == index)
            .map(|(_, b)| b.as_ref())
            .ok_or_else(|| Error::IndexOutOfRange(format!("no basis for channel {index}")))
    }
}

// ---------------------------------------------------------------------------
// Pole positions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolePosition {
    pub pole: f64,
    /// `(ε+, ε-)` of the exact one-dimensional spatial form.
    pub exact_pair: Option<(f64, f64)>,
}

/// Singularity of the `(channel, n')` term whose auxiliary eigenvalue is
/// `aux_energy`.
///
/// * temporal: `ε0 + ω_p k`
/// * spatial, approximate: `ε0 + ε_p + 2 cosα √(E ε_p)`
/// * spatial, exact: `ε0 - ε_p ± 2√(ε_p (E - ε0))`, the `+` branch for
///   `cosα = +1` and the `-` branch for `cosα = -1`.
pub fn pole_position(
    channel: &ChannelEnergy,
    aux_energy: f64,
    mode: DenominatorMode,
    energy: f64,
) -> Result<PolePosition> {
    if let Some(shift) = channel.drive_shift {
        return Ok(PolePosition {
            pole: aux_energy + shift,
            exact_pair: None,
        });
    }
    let ep = channel.epsilon_p;
    match mode {
        DenominatorMode::Approximate => {
            let arg = energy * ep;
            if arg < 0.0 {
                return Err(Error::SqrtDomain { argument: arg });
            }
            Ok(PolePosition {
                pole: aux_energy + ep + 2.0 * channel.cos_alpha * arg.sqrt(),
                exact_pair: None,
            })
        }
        DenominatorMode::Exact => {
            let arg = ep * (energy - aux_energy);
            if arg < 0.0 {
                return Err(Error::SqrtDomain { argument: arg });
            }
            let root = 2.0 * arg.sqrt();
            let plus = aux_energy - ep + root;
            let minus = aux_energy - ep - root;
            let pole = if channel.cos_alpha > 0.0 { plus } else { minus };
            Ok(PolePosition {
                pole,
                exact_pair: Some((plus, minus)),
            })
        }
    }
}

/// General-angle singularity
/// `ε0 + ε_p(1 - 2cos²α) + 2cosα √(ε_p (E - ε_p sin²α - ε0))`.
///
/// Only `cos²α = 1` (one-dimensional perturbations) is supported.
pub fn general_angle_pole(
    aux_energy: f64,
    epsilon_p: f64,
    cos_alpha: f64,
    energy: f64,
) -> Result<f64> {
    let cos2 = cos_alpha * cos_alpha;
    if (cos2 - 1.0).abs() > 1e-12 {
        return Err(Error::UnsupportedMode(format!(
            "cos α = {cos_alpha}: only one-dimensional perturbations (cos²α = 1) are supported"
        )));
    }
    let sin2 = 1.0 - cos2;
    let arg = epsilon_p * (energy - epsilon_p * sin2 - aux_energy);
    if arg < 0.0 {
        return Err(Error::SqrtDomain { argument: arg });
    }
    Ok(aux_energy + epsilon_p * (1.0 - 2.0 * cos2) + 2.0 * cos_alpha * arg.sqrt())
}

/// Denominator of the `(channel, n')` term at energy `eps`, sign convention
/// `ε - pole`.
pub fn channel_denominator(
    channel: &ChannelEnergy,
    aux_energy: f64,
    eps: f64,
    mode: DenominatorMode,
    energy: f64,
) -> Result<f64> {
    if let Some(shift) = channel.drive_shift {
        return Ok(eps - aux_energy - shift);
    }
    let ep = channel.epsilon_p;
    match mode {
        DenominatorMode::Approximate => {
            let p = pole_position(channel, aux_energy, mode, energy)?.pole;
            Ok(eps - p)
        }
        DenominatorMode::Exact => {
            let arg = (energy - eps) * ep;
            if arg < 0.0 {
                return Err(Error::SqrtDomain { argument: arg });
            }
            Ok(eps - aux_energy - ep - 2.0 * channel.cos_alpha * arg.sqrt())
        }
    }
}

// ---------------------------------------------------------------------------
// Pole/weight tables
// ---------------------------------------------------------------------------

/// One `(g, n')` contribution before merging.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleLabel {
    pub index: i32,
    pub n_prime: usize,
    pub weight: f64,
    pub aux_energy: f64,
    pub channel: ChannelEnergy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleEntry {
    pub pole: f64,
    pub weight: f64,
    pub labels: Vec<PoleLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleWeightTable {
    pub base_state: usize,
    /// Sorted ascending by pole; adjacent poles differ by more than
    /// `merge_tol`.
    pub entries: Vec<PoleEntry>,
    pub merge_tol: f64,
    pub mode: DenominatorMode,
    pub energy: f64,
    /// `(g, n')` terms dropped as numerically zero.
    pub dropped: usize,
}

impl PoleWeightTable {
    /// Approximate-mode table from raw `(pole, weight)` pairs. Weights must be
    /// nonnegative; zero weights are dropped and coincident poles merged.
    pub fn from_pairs(base_state: usize, pairs: &[(f64, f64)]) -> Result<Self> {
        let mut raw = Vec::with_capacity(pairs.len());
        let mut dropped = 0;
        for &(pole, weight) in pairs {
            if !(pole.is_finite() && weight.is_finite()) || weight < 0.0 {
                return Err(Error::invalid(format!(
                    "pole/weight pair ({pole}, {weight}) must be finite with weight >= 0"
                )));
            }
            if weight == 0.0 {
                dropped += 1;
                continue;
            }
            raw.push(PoleEntry {
                pole,
                weight,
                labels: Vec::new(),
            });
        }
        Ok(Self::assemble(
            base_state,
            raw,
            DenominatorMode::Approximate,
            f64::INFINITY,
            dropped,
        ))
    }

    fn assemble(
        base_state: usize,
        mut raw: Vec<PoleEntry>,
        mode: DenominatorMode,
        energy: f64,
        dropped: usize,
    ) -> Self {
        raw.sort_by(|a, b| {
            a.pole.total_cmp(&b.pole).then_with(|| {
                let ka = a.labels.first().map(|l| (l.index, l.n_prime));
                let kb = b.labels.first().map(|l| (l.index, l.n_prime));
                ka.cmp(&kb)
            })
        });
        let spread = match (raw.first(), raw.last()) {
            (Some(a), Some(b)) => b.pole - a.pole,
            _ => 0.0,
        };
        let merge_tol = MERGE_REL * spread;
        let mut entries: Vec<PoleEntry> = Vec::with_capacity(raw.len());
        for e in raw {
            match entries.last_mut() {
                Some(last) if e.pole - last.pole <= merge_tol => {
                    let total = last.weight + e.weight;
                    last.pole = (last.pole * last.weight + e.pole * e.weight) / total;
                    last.weight = total;
                    last.labels.extend(e.labels);
                }
                _ => entries.push(e),
            }
        }
        Self {
            base_state,
            entries,
            merge_tol,
            mode,
            energy,
            dropped,
        }
    }

    pub fn poles(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.pole).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.weight).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    /// Number of `(g, n')` terms absorbed into other entries by merging.
    pub fn merged_away(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.labels.len().saturating_sub(1))
            .sum()
    }

    /// Approximate-form `Σ w_j / (ε - p_j)` without proximity checks.
    pub fn rational(&self, eps: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        for e in &self.entries {
            acc.add(e.weight / (eps - e.pole));
        }
        acc.value()
    }

    fn check_proximity(&self, eps: f64) -> Result<()> {
        for e in &self.entries {
            if (eps - e.pole).abs() <= self.merge_tol || eps == e.pole {
                return Err(Error::PoleProximity {
                    energy: eps,
                    pole: e.pole,
                    tolerance: self.merge_tol,
                });
            }
        }
        Ok(())
    }

    fn exact_sum(&self, eps: f64) -> Result<f64> {
        let mut acc = CompensatedSum::new();
        for e in &self.entries {
            if e.labels.is_empty() {
                acc.add(e.weight / (eps - e.pole));
                continue;
            }
            for l in &e.labels {
                let den =
                    channel_denominator(&l.channel, l.aux_energy, eps, self.mode, self.energy)?;
                if den == 0.0 {
                    return Err(Error::PoleProximity {
                        energy: eps,
                        pole: e.pole,
                        tolerance: 0.0,
                    });
                }
                acc.add(l.weight / den);
            }
        }
        Ok(acc.value())
    }
}

/// Builds the table for base state `n` (one-based).
pub fn build_pole_weight_table(
    spec: &SystemSpec,
    bases: &ChannelBases,
    n: usize,
) -> Result<PoleWeightTable> {
    let base = bases.base();
    base.eigenvalue(n)?;
    let floor = WEIGHT_FLOOR_REL * spec.amplitude_max();
    let mut raw = Vec::new();
    let mut dropped = 0;
    for h in &spec.harmonics {
        let channel = spec.channel_energy(h.index)?;
        let cb = bases.channel(h.index)?;
        for n_prime in 1..=spec.n_prime {
            let element = matrix_element(cb, base, &h.amplitude, n_prime, n)?;
            if element.norm() <= floor {
                dropped += 1;
                continue;
            }
            let weight = element.norm_sqr();
            let aux_energy = cb.eigenvalue(n_prime)?;
            let pos = pole_position(&channel, aux_energy, spec.denominator_mode, spec.energy)?;
            raw.push(PoleEntry {
                pole: pos.pole,
                weight,
                labels: vec![PoleLabel {
                    index: h.index,
                    n_prime,
                    weight,
                    aux_energy,
                    channel,
                }],
            });
        }
    }
    Ok(PoleWeightTable::assemble(
        n,
        raw,
        spec.denominator_mode,
        spec.energy,
        dropped,
    ))
}

/// `V_nn(ε)`. Approximate tables sum `w_j/(ε - p_j)`; exact tables evaluate
/// the full square-root denominator of every constituent term.
pub fn vnn_eval(table: &PoleWeightTable, eps: f64) -> Result<f64> {
    table.check_proximity(eps)?;
    match table.mode {
        DenominatorMode::Approximate => Ok(table.rational(eps)),
        DenominatorMode::Exact => table.exact_sum(eps),
    }
}

/// Full-denominator sum without the pole-proximity check; used by scanning.
pub(crate) fn vnn_exact_unchecked(table: &PoleWeightTable, eps: f64) -> Result<f64> {
    table.exact_sum(eps)
}

// ---------------------------------------------------------------------------
// Nonlocal kernel
// ---------------------------------------------------------------------------

struct KernelTerm {
    /// `V_{-g}(x) ψ_{gn'}(x)`
    left: Vec<Complex64>,
    /// `V_g(x') ψ*_{gn'}(x')`
    right: Vec<Complex64>,
    inv_den: f64,
}

/// Kernel `K(x, x')` of the nonlocal part of the effective potential at a
/// fixed energy.
pub struct EffectiveKernel {
    terms: Vec<KernelTerm>,
    weights: Vec<f64>,
    points: usize,
}

impl EffectiveKernel {
    pub fn new(spec: &SystemSpec, bases: &ChannelBases, eps: f64) -> Result<Self> {
        let zero = vec![Complex64::new(0.0, 0.0); spec.grid.points];
        let mut terms = Vec::new();
        let mut poles = Vec::new();
        for h in &spec.harmonics {
            let channel = spec.channel_energy(h.index)?;
            let cb = bases.channel(h.index)?;
            let mirror = spec.harmonic(-h.index).map_or(&zero, |m| &m.amplitude);
            for n_prime in 1..=spec.n_prime {
                let aux = cb.eigenvalue(n_prime)?;
                let psi = cb.state(n_prime)?;
                let den =
                    channel_denominator(&channel, aux, eps, spec.denominator_mode, spec.energy)?;
                poles.push((eps - den, den));
                terms.push(KernelTerm {
                    left: mirror.iter().zip(psi).map(|(v, p)| v * *p).collect(),
                    right: h.amplitude.iter().zip(psi).map(|(v, p)| v * *p).collect(),
                    inv_den: 1.0 / den,
                });
            }
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
            if den.abs() <= tol || den == 0.0 {
                return Err(Error::PoleProximity {
                    energy: eps,
                    pole,
                    tolerance: tol,
                });
            }
        }
        Ok(Self {
            terms,
            weights: spec.grid.quadrature_weights(),
            points: spec.grid.points,
        })
    }

    pub fn eval(&self, i: usize, j: usize) -> Complex64 {
        let mut acc = CompensatedComplexSum::default();
        for t in &self.terms {
            acc.add(t.left[i] * t.right[j] * t.inv_den);
        }
        acc.value()
    }

    /// Dense `K(x_i, x_j)`, row-major.
    pub fn matrix(&self) -> Vec<Complex64> {
        (0..self.points)
            .into_par_iter()
            .flat_map_iter(|i| (0..self.points).map(move |j| self.eval(i, j)))
            .collect()
    }

    /// `(Ĵφ)(x_i) = Σ_j w_j K(x_i, x_j) φ(x_j)`.
    pub fn apply(&self, phi: &[Complex64]) -> Vec<Complex64> {
        if self.terms.is_empty() {
            return vec![Complex64::new(0.0, 0.0); self.points];
        }
        let weighted: Vec<Complex64> = phi.iter().zip(&self.weights).map(|(p, w)| p * *w).collect();
        (0..self.points)
            .into_par_iter()
            .map(|i| {
                let mut acc = CompensatedComplexSum::default();
                for (j, wp) in weighted.iter().enumerate() {
                    acc.add(self.eval(i, j) * wp);
                }
                acc.value()
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| {
            t.left.iter().all(|v| *v == Complex64::new(0.0, 0.0))
                || t.right.iter().all(|v| *v == Complex64::new(0.0, 0.0))
        })
    }
}

/// `K(x_i, x_j)` at energy `eps`.
pub fn ep_kernel_eval(
    spec: &SystemSpec,
    bases: &ChannelBases,
    eps: f64,
    i: usize,
    j: usize,
) -> Result<Complex64> {
    if i >= spec.grid.points || j >= spec.grid.points {
        return Err(Error::IndexOutOfRange(format!(
            "grid indices ({i}, {j}) outside 0..{}",
            spec.grid.points
        )));
    }
    Ok(EffectiveKernel::new(spec, bases, eps)?.eval(i, j))
}

/// `V_eff φ = V0 φ + Ĵ(ε) φ` on the spec grid.
pub fn apply_effective_potential(
    spec: &SystemSpec,
    bases: &ChannelBases,
    eps: f64,
    phi: &[Complex64],
) -> Result<Vec<Complex64>> {
    if phi.len() != spec.grid.points {
        return Err(Error::GridMismatch {
            left: phi.len(),
            right: spec.grid.points,
        });
    }
    let kernel = EffectiveKernel::new(spec, bases, eps)?;
    let mut out = kernel.apply(phi);
    for ((o, p), v) in out.iter_mut().zip(phi).zip(&spec.base_potential) {
        *o += p * *v;
    }
    Ok(out)
}

/// `⟨ψ_n| Ĵ(ε) |ψ_n⟩` through the kernel quadrature.
pub fn kernel_diagonal(
    spec: &SystemSpec,
    bases: &ChannelBases,
    eps: f64,
    n: usize,
) -> Result<Complex64> {
    let psi = bases.base().state(n)?;
    let phi: Vec<Complex64> = psi.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let action = EffectiveKernel::new(spec, bases, eps)?.apply(&phi);
    let mut acc = CompensatedComplexSum::default();
    for ((a, p), w) in action.iter().zip(psi).zip(&bases.base().quad_weights) {
        acc.add(a * (p * w));
    }
    Ok(acc.value())
}

/// First term of the auxiliary-problem kernel series for channel `k`:
///
/// `Σ_n Σ_{k'≠k} V_{k'}(x) V_{-k'}(x') ψ_n(x) ψ_n(x') / (ε0_k - ε_{0n} + ω_p k)`
///
/// with `aux_energy = ε0_k` supplied by the caller.
pub fn series_ep_kernel(
    spec: &SystemSpec,
    base: &EigenBasis,
    k: i32,
    aux_energy: f64,
    i: usize,
    j: usize,
) -> Result<Complex64> {
    let shift = spec
        .channel_energy(k)?
        .drive_shift
        .ok_or_else(|| Error::UnsupportedMode("series kernel needs a temporal drive".into()))?;
    if spec.harmonic(k).is_none() {
        return Err(Error::IndexOutOfRange(format!("harmonic {k} not in spec")));
    }
    if i >= spec.grid.points || j >= spec.grid.points {
        return Err(Error::IndexOutOfRange(format!(
            "grid indices ({i}, {j}) outside 0..{}",
            spec.grid.points
        )));
    }
    let mut coupling = Complex64::new(0.0, 0.0);
    for h in spec.harmonics.iter().filter(|h| h.index != k) {
        if let Some(m) = spec.harmonic(-h.index) {
            coupling += h.amplitude[i] * m.amplitude[j];
        }
    }
    let n_terms = spec.n_base.min(base.len());
    let mut acc = CompensatedComplexSum::default();
    for n in 0..n_terms {
        let den = aux_energy - base.eigenvalues[n] + shift;
        if den.abs() <= f64::EPSILON * (1.0 + aux_energy.abs() + base.eigenvalues[n].abs()) {
            return Err(Error::VanishingDenominator {
                value: den,
                index: n + 1,
            });
        }
        let psi = &base.eigenfunctions[n];
        acc.add(coupling * (psi[i] * psi[j] / den));
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_spec, BoxSection, ConfigDocument, Drive, GridSection, HarmonicSection, ModesSection,
        PerturbationSection, Profile, TruncationSection,
    };
    use std::f64::consts::PI;

    fn harmonic(index: i32, amplitude: f64, center: f64) -> HarmonicSection {
        HarmonicSection {
            index,
            profile: Profile::Gaussian {
                amplitude,
                center,
                width: 0.45,
            },
            imag_profile: None,
            coefficient: [1.0, 0.0],
        }
    }

    fn doc(
        drive: Drive,
        indices: &[i32],
        amplitude: f64,
        n_base: usize,
        n_prime: usize,
    ) -> ConfigDocument {
        ConfigDocument {
            box_section: BoxSection { length: PI },
            grid: GridSection { points: 160 },
            base_potential: Profile::Cosine {
                amplitude: 0.8,
                periods: 1.0,
                phase: 0.4,
            },
            perturbation: PerturbationSection {
                drive,
                real: true,
                amplitude_scale: 1.0,
                harmonics: indices
                    .iter()
                    .map(|&i| harmonic(i, amplitude, 1.0 + 0.1 * i.abs() as f64))
                    .collect(),
            },
            energy: 20.0,
            truncation: TruncationSection { n_base, n_prime },
            modes: ModesSection::default(),
        }
    }

    fn spatial() -> Drive {
        Drive::Spatial {
            period: 2.0 * PI,
            bloch_wavenumber: 0.0,
        }
    }

    fn temporal() -> Drive {
        Drive::Temporal { frequency: 1.37 }
    }

    #[test]
    fn temporal_pole_positions() {
        let spec = build_spec(&doc(
            Drive::Temporal { frequency: 1.0 },
            &[-2, 2],
            0.1,
            1,
            1,
        ))
        .unwrap();
        let up = spec.channel_energy(2).unwrap();
        let down = spec.channel_energy(-2).unwrap();
        let mode = DenominatorMode::Approximate;
        assert_eq!(pole_position(&up, 0.5, mode, 4.0).unwrap().pole, 2.5);
        assert_eq!(pole_position(&down, 0.5, mode, 4.0).unwrap().pole, -1.5);
    }

    #[test]
    fn exact_spatial_pole_pair() {
        let ch = ChannelEnergy {
            index: 1,
            epsilon_s_channel: 0.0,
            epsilon_p: 1.0,
            cos_alpha: 1.0,
            drive_shift: None,
        };
        let pos = pole_position(&ch, 0.0, DenominatorMode::Exact, 4.0).unwrap();
        assert_eq!(pos.exact_pair, Some((3.0, -5.0)));
        assert_eq!(pos.pole, 3.0);
        let mirrored = ChannelEnergy {
            cos_alpha: -1.0,
            ..ch
        };
        assert_eq!(
            pole_position(&mirrored, 0.0, DenominatorMode::Exact, 4.0)
                .unwrap()
                .pole,
            -5.0
        );
        assert!(matches!(
            pole_position(&ch, 5.0, DenominatorMode::Exact, 4.0),
            Err(Error::SqrtDomain { .. })
        ));
    }

    #[test]
    fn general_angle_form_rejects_oblique_angles() {
        assert!(general_angle_pole(0.0, 1.0, 0.5, 4.0).is_err());
        assert_eq!(general_angle_pole(0.0, 1.0, 1.0, 4.0).unwrap(), 3.0);
        assert_eq!(general_angle_pole(0.0, 1.0, -1.0, 4.0).unwrap(), -5.0);
    }

    #[test]
    fn zero_amplitudes_give_empty_table() {
        let spec = build_spec(&doc(spatial(), &[-1, 1], 0.0, 2, 2)).unwrap();
        let bases = ChannelBases::solve(&spec).unwrap();
        let table = build_pole_weight_table(&spec, &bases, 1).unwrap();
        assert!(table.is_empty());
        assert_eq!(table.dropped, 4);
        assert_eq!(vnn_eval(&table, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn figure_one_a_shape_has_eight_poles() {
        let spec = build_spec(&doc(spatial(), &[-2, -1, 1, 2], 0.6, 1, 2)).unwrap();
        let bases = ChannelBases::solve(&spec).unwrap();
        let table = build_pole_weight_table(&spec, &bases, 1).unwrap();
        assert_eq!(table.len(), 8);
        assert!(table.weights().iter().all(|&w| w > 0.0));
        assert!(table
            .poles()
            .windows(2)
            .all(|w| w[1] - w[0] > table.merge_tol));
    }

    #[test]
    fn coincident_poles_merge_with_summed_weight() {
        // Temporal poles sit at ε_{n'} + ω k. With identical amplitudes on
        // k = -1 and k = +1 and ω = (ε_2 - ε_1)/2, the (k=+1, n'=1) and
        // (k=-1, n'=2) poles coincide at (ε_1 + ε_2)/2.
        let probe = build_spec(&doc(temporal(), &[-1, 1], 0.5, 1, 2)).unwrap();
        let base = solve_base_eigenproblem(&probe).unwrap();
        let omega = 0.5 * (base.eigenvalues[1] - base.eigenvalues[0]);
        let mut d = doc(Drive::Temporal { frequency: omega }, &[-1, 1], 0.5, 1, 2);
        for h in d.perturbation.harmonics.iter_mut() {
            h.profile = Profile::Gaussian {
                amplitude: 0.5,
                center: 1.0,
                width: 0.45,
            };
        }
        let spec = build_spec(&d).unwrap();
        let bases = ChannelBases::solve(&spec).unwrap();
        let table = build_pole_weight_table(&spec, &bases, 1).unwrap();
        assert_eq!(table.len(), 3);
        let merged = table.entries.iter().find(|e| e.labels.len() == 2).unwrap();
        let expect = 0.5 * (base.eigenvalues[0] + base.eigenvalues[1]);
        assert!((merged.pole - expect).abs() < 1e-9);
        let sum: f64 = merged.labels.iter().map(|l| l.weight).sum();
        assert_eq!(merged.weight, sum);
        assert_eq!(table.merged_away(), 1);
    }

    #[test]
    fn vnn_eval_arithmetic() {
        let t = PoleWeightTable::from_pairs(1, &[(0.0, 1.0)]).unwrap();
        assert_eq!(vnn_eval(&t, 1.0).unwrap(), 1.0);
        let t = PoleWeightTable::from_pairs(1, &[(-1.0, 1.0), (1.0, 2.0)]).unwrap();
        assert_eq!(vnn_eval(&t, 0.0).unwrap(), -1.0);
        assert!(matches!(
            vnn_eval(&t, 1.0),
            Err(Error::PoleProximity { .. })
        ));
        assert!(PoleWeightTable::from_pairs(1, &[(0.0, -1.0)]).is_err());
    }

    #[test]
    fn approximate_and_exact_agree_asymptotically() {
        let discrepancy = |energy: f64| {
            let mut d = doc(spatial(), &[-1, 1], 0.5, 1, 2);
            d.energy = energy;
            let approx = build_spec(&d).unwrap();
            d.modes.denominator = DenominatorMode::Exact;
            let exact = build_spec(&d).unwrap();
            let bases = ChannelBases::solve(&approx).unwrap();
            let ta = build_pole_weight_table(&approx, &bases, 1).unwrap();
            let te = build_pole_weight_table(&exact, &bases, 1).unwrap();
            let eps = 0.9;
            (vnn_eval(&ta, eps).unwrap() - vnn_eval(&te, eps).unwrap()).abs()
        };
        let mut previous = discrepancy(50.0);
        for energy in [200.0, 800.0] {
            let next = discrepancy(energy);
            assert!(previous / next >= 1.8, "{previous} -> {next}");
            previous = next;
        }
    }

    #[test]
    fn exact_eval_rejects_energies_above_total() {
        let mut d = doc(spatial(), &[-1, 1], 0.5, 1, 1);
        d.modes.denominator = DenominatorMode::Exact;
        let spec = build_spec(&d).unwrap();
        let bases = ChannelBases::solve(&spec).unwrap();
        let table = build_pole_weight_table(&spec, &bases, 1).unwrap();
        assert!(matches!(
            vnn_eval(&table, 25.0),
            Err(Error::SqrtDomain { .. })
        ));
    }

    #[test]
    fn zero_amplitude_kernel_vanishes() {
        let spec = build_spec(&doc(spatial(), &[-1, 1], 0.0, 1, 2)).unwrap();
        let bases = ChannelBases::solve(&spec).unwrap();
        let k = EffectiveKernel::new(&spec, &bases, 0.3).unwrap();
        assert!(k.is_zero());
        assert!(k.matrix().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
        let phi: Vec<Complex64> = (0..160).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let out = apply_effective_potential(&spec, &bases, 0.3, &phi).unwrap();
        for ((o, p), v) in out.iter().zip(&phi).zip(&spec.base_potential) {
            assert_eq!(*o, p * *v);
        }
    }

    #[test]
    fn kernel_is_hermitian_for_real_potentials() {
        let mut d = doc(spatial(), &[-2, -1, 1, 2], 0.4, 2, 3);
        d.perturbation.harmonics[0].coefficient = [0.3, -0.7];
        d.perturbation.harmonics[3].coefficient = [0.3, 0.7];
        let spec = build_spec(&d).unwrap();
        let bases = ChannelBases::solve(&spec).unwrap();
        let k = EffectiveKernel::new(&spec, &bases, 0.31).unwrap();
        for (i, j) in [(3, 90), (40, 41), (12, 150), (77, 77)] {
            assert!((k.eval(i, j) - k.eval(j, i).conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn single_term_kernel_matches_hand_assembly() {
        let spec = build_spec(&doc(spatial(), &[-1, 1], 0.4, 1, 1)).unwrap();
        let bases = ChannelBases::solve(&spec).unwrap();
        let base = bases.base();
        let psi = base.state(1).unwrap();
        let eps = 0.2;
        let (i, j) = (50, 110);
        let mut expect = Complex64::new(0.0, 0.0);
        for g in [-1, 1] {
            let c = spec.channel_energy(g).unwrap();
            let pole = base.eigenvalues[0]
                + c.epsilon_p
                + 2.0 * c.cos_alpha * (spec.energy * c.epsilon_p).sqrt();
            let vg = spec.harmonic(g).unwrap().amplitude[j];
            let vmg = spec.harmonic(-g).unwrap().amplitude[i];
            expect += vmg * vg * psi[i] * psi[j] / (eps - pole);
        }
        let got = ep_kernel_eval(&spec, &bases, eps, i, j).unwrap();
        assert!((got - expect).norm() < 1e-14);
    }

    #[test]
    fn kernel_diagonal_matches_table() {
        for drive in [spatial(), temporal()] {
            let spec = build_spec(&doc(drive, &[-2, -1, 1, 2], 0.5, 3, 2)).unwrap();
            let bases = ChannelBases::solve(&spec).unwrap();
            for n in 1..=3 {
                let table = build_pole_weight_table(&spec, &bases, n).unwrap();
                let eps = 0.123 + n as f64;
                let direct = vnn_eval(&table, eps).unwrap();
                let through_kernel = kernel_diagonal(&spec, &bases, eps, n).unwrap();
                assert!(
                    (through_kernel.re - direct).abs() < 1e-8,
                    "{through_kernel} {direct}"
                );
                assert!(through_kernel.im.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn kernel_action_is_linear() {
        let spec = build_spec(&doc(temporal(), &[-1, 1], 0.5, 1, 2)).unwrap();
        let bases = ChannelBases::solve(&spec).unwrap();
        let f1: Vec<Complex64> = (0..160)
            .map(|i| Complex64::new((i as f64 * 0.1).sin(), 0.0))
            .collect();
        let f2: Vec<Complex64> = (0..160)
            .map(|i| Complex64::new(0.0, (i as f64 * 0.05).cos()))
            .collect();
        let a = Complex64::new(0.3, -1.2);
        let b = Complex64::new(2.0, 0.5);
        let mix: Vec<Complex64> = f1.iter().zip(&f2).map(|(x, y)| a * x + b * y).collect();
        let eps = 0.77;
        let l = apply_effective_potential(&spec, &bases, eps, &mix).unwrap();
        let r1 = apply_effective_potential(&spec, &bases, eps, &f1).unwrap();
        let r2 = apply_effective_potential(&spec, &bases, eps, &f2).unwrap();
        for i in 0..160 {
            assert!((l[i] - (a * r1[i] + b * r2[i])).norm() < 1e-12);
        }
    }

    #[test]
    fn kernel_pole_proximity_is_reported() {
        let spec = build_spec(&doc(temporal(), &[-1, 1], 0.5, 1, 1)).unwrap();
        let bases = ChannelBases::solve(&spec).unwrap();
        let pole = bases.base().eigenvalues[0] + 1.37;
        assert!(matches!(
            EffectiveKernel::new(&spec, &bases, pole),
            Err(Error::PoleProximity { .. })
        ));
    }

    #[test]
    fn series_kernel_properties() {
        let spec = build_spec(&doc(temporal(), &[-1, 1], 0.5, 2, 1)).unwrap();
        let base = solve_base_eigenproblem(&spec).unwrap();
        for (i, j) in [(10, 100), (55, 56)] {
            let a = series_ep_kernel(&spec, &base, 1, 0.3, i, j).unwrap();
            let b = series_ep_kernel(&spec, &base, 1, 0.3, j, i).unwrap();
            assert!((a - b.conj()).norm() < 1e-12);
        }

        let mut single = doc(temporal(), &[1], 0.5, 1, 1);
        single.perturbation.real = false;
        let spec1 = build_spec(&single).unwrap();
        let base1 = solve_base_eigenproblem(&spec1).unwrap();
        assert_eq!(
            series_ep_kernel(&spec1, &base1, 1, 0.3, 10, 20).unwrap(),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn series_kernel_single_state_hand_formula() {
        let spec = build_spec(&doc(temporal(), &[-1, 1], 0.5, 1, 1)).unwrap();
        let base = solve_base_eigenproblem(&spec).unwrap();
        let (i, j) = (30, 120);
        let aux = 0.3;
        let psi = &base.eigenfunctions[0];
        let v_minus = spec.harmonic(-1).unwrap().amplitude[i];
        let v_plus = spec.harmonic(1).unwrap().amplitude[j];
        let expect = v_minus * v_plus * psi[i] * psi[j] / (aux - base.eigenvalues[0] + 1.37);
        let got = series_ep_kernel(&spec, &base, 1, aux, i, j).unwrap();
        assert!((got - expect).norm() < 1e-14);
        let collide = base.eigenvalues[0] - 1.37;
        assert!(matches!(
            series_ep_kernel(&spec, &base, 1, collide, i, j),
            Err(Error::VanishingDenominator { .. })
        ));
    }
}
