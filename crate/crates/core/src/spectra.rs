//! Self-consistent dispersion equation `V_nn(ε) = ε - ε0_n`: bracketed root
//! finding, solution counting, realisation grouping, separation estimates and
//! the auxiliary-problem (appendix) graphical analysis.
//!
//! In the approximate regime `f(ε) = V_nn(ε) - ε + ε0` decreases strictly from
//! `+∞` to `-∞` on each interval between consecutive poles and on both outer
//! half-lines, so every interval holds exactly one root.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::effpot::{
    apply_effective_potential, build_pole_weight_table, channel_denominator, pole_position,
    ChannelBases, PoleWeightTable, WEIGHT_FLOOR_REL,
};
use crate::eigenbasis::{apply_hamiltonian, matrix_element, EigenBasis};
use crate::error::{Error, Result};
use crate::model::{DenominatorMode, PerturbationKind, SystemSpec};

/// Bisection stops at this fraction of the interval width.
const BISECT_REL: f64 = 1e-10;
/// Secant polish target for `|f|` relative to the local energy scale.
const POLISH_REL: f64 = 1e-12;
/// Initial pole offset of inner brackets, relative to the local gap.
const BRACKET_REL: f64 = 1e-8;
/// Residual bound of the spectrum invariants.
pub const RESIDUAL_REL: f64 = 1e-9;
/// Samples per interval of the exact-mode scan.
const SCAN_SAMPLES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Bracket {
    /// `hi` is the float immediately above `lo`: the root is known to the
    /// last representable digit even if `|f|` is large there.
    pub fn is_float_resolved(&self) -> bool {
        self.lo.next_up() == self.hi
    }

    /// `f(lo) > 0 > f(hi)` with `lo < hi`.
    pub fn is_decreasing_certificate(&self) -> bool {
        self.lo < self.hi && self.f_lo > 0.0 && self.f_hi < 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Root {
    pub energy: f64,
    /// `|V_nn(ε) - (ε - ε0)|` at the returned energy.
    pub residual: f64,
    pub bracket: Bracket,
}

/// `f(ε) = V_nn(ε) - ε + ε0` in the rational form, without proximity checks.
fn rational_secular(table: &PoleWeightTable, eps0: f64, eps: f64) -> f64 {
    table.rational(eps) - eps + eps0
}

fn is_rational(table: &PoleWeightTable) -> bool {
    table.mode == DenominatorMode::Approximate
        || table
            .entries
            .iter()
            .all(|e| e.labels.iter().all(|l| l.channel.drive_shift.is_some()))
}

/// Roots of `V_nn(ε) = ε - ε0`, sorted ascending.
///
/// Rational tables (approximate mode, or any temporal drive) give exactly one
/// certified root per interval. Exact spatial tables are scanned for sign
/// changes on `(-∞, E]` with no count guarantee.
pub fn find_roots(table: &PoleWeightTable, eps0: f64) -> Result<Vec<Root>> {
    if !eps0.is_finite() {
        return Err(Error::invalid(format!("epsilon0 = {eps0} must be finite")));
    }
    if is_rational(table) {
        rational_roots(table, eps0)
    } else {
        scanned_roots(table, eps0)
    }
}

fn rational_roots(table: &PoleWeightTable, eps0: f64) -> Result<Vec<Root>> {
    let poles = table.poles();
    if poles.is_empty() {
        return Ok(vec![Root {
            energy: eps0,
            residual: 0.0,
            bracket: Bracket {
                lo: eps0 - 1.0,
                hi: eps0 + 1.0,
                f_lo: 1.0,
                f_hi: -1.0,
            },
        }]);
    }
    let f = |eps: f64| rational_secular(table, eps0, eps);
    let weight = table.total_weight();
    let p = poles.len();
    let mut roots = Vec::with_capacity(p + 1);

    // Lower half-line.
    let first = poles[0];
    let lower_gap = if p > 1 {
        poles[1] - first
    } else {
        1.0 + weight.sqrt()
    };
    let (hi, f_hi) = approach_pole(&f, first, -lower_gap, false)?;
    let mut t = 2.0 * weight.sqrt() + (first - eps0).max(0.0) + 1.0;
    let (lo, f_lo) = expand(&f, first, -1.0, &mut t, true)?;
    roots.push(refine(
        &f,
        lo,
        hi,
        f_lo,
        f_hi,
        hi - lo,
        scale_of(&[lo, hi, eps0]),
    ));

    for w in poles.windows(2) {
        let gap = w[1] - w[0];
        let (lo, f_lo) = approach_pole(&f, w[0], gap, true)?;
        let (hi, f_hi) = approach_pole(&f, w[1], -gap, false)?;
        roots.push(refine(
            &f,
            lo,
            hi,
            f_lo,
            f_hi,
            gap,
            scale_of(&[lo, hi, eps0]),
        ));
    }

    // Upper half-line.
    let last = poles[p - 1];
    let upper_gap = if p > 1 {
        last - poles[p - 2]
    } else {
        1.0 + weight.sqrt()
    };
    let (lo, f_lo) = approach_pole(&f, last, upper_gap, true)?;
    let mut t = 2.0 * weight.sqrt() + (eps0 - last).max(0.0) + 1.0;
    let (hi, f_hi) = expand(&f, last, 1.0, &mut t, false)?;
    roots.push(refine(
        &f,
        lo,
        hi,
        f_lo,
        f_hi,
        hi - lo,
        scale_of(&[lo, hi, eps0]),
    ));
    Ok(roots)
}

fn scale_of(values: &[f64]) -> f64 {
    values.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// Point next to `pole` (offset sign given by `gap`) where `f` has the sign
/// of the adjacent branch: positive right of a pole, negative left of it.
fn approach_pole<F: Fn(f64) -> f64>(f: &F, pole: f64, gap: f64, right: bool) -> Result<(f64, f64)> {
    let mut delta = BRACKET_REL * gap;
    loop {
        let mut x = pole + delta;
        if x == pole {
            x = if right {
                pole.next_up()
            } else {
                pole.next_down()
            };
            let fx = f(x);
            if (right && fx > 0.0) || (!right && fx < 0.0) {
                return Ok((x, fx));
            }
            return Err(Error::BracketFailure {
                lo: pole.min(pole + BRACKET_REL * gap),
                hi: pole.max(pole + BRACKET_REL * gap),
                reason: "root unresolvable from pole at float resolution".into(),
            });
        }
        let fx = f(x);
        if (right && fx > 0.0) || (!right && fx < 0.0) {
            return Ok((x, fx));
        }
        delta *= 0.1;
    }
}

/// Moves away from `pole` in `direction` until `f` is positive (`want_positive`)
/// or negative.
fn expand<F: Fn(f64) -> f64>(
    f: &F,
    pole: f64,
    direction: f64,
    t: &mut f64,
    want_positive: bool,
) -> Result<(f64, f64)> {
    for _ in 0..2100 {
        let x = pole + direction * *t;
        if !x.is_finite() {
            break;
        }
        let fx = f(x);
        if (want_positive && fx > 0.0) || (!want_positive && fx < 0.0) {
            return Ok((x, fx));
        }
        *t *= 2.0;
    }
    Err(Error::BracketFailure {
        lo: if direction < 0.0 {
            f64::NEG_INFINITY
        } else {
            pole
        },
        hi: if direction < 0.0 { pole } else { f64::INFINITY },
        reason: "outer bracket did not close".into(),
    })
}

/// Bisection to `BISECT_REL · width`, then Illinois regula falsi inside the
/// bracket. Requires `f(lo) > 0 > f(hi)`.
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    mut lo: f64,
    mut hi: f64,
    mut f_lo: f64,
    mut f_hi: f64,
    width: f64,
    scale: f64,
) -> Root {
    let target = BISECT_REL * width;
    let ftol = POLISH_REL * scale;
    let exact = |x: f64, lo: f64, hi: f64, f_lo: f64, f_hi: f64| Root {
        energy: x,
        residual: 0.0,
        bracket: Bracket { lo, hi, f_lo, f_hi },
    };
    while hi - lo > target {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return exact(mid, lo, hi, f_lo, f_hi);
        }
        if fm > 0.0 {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
            f_hi = fm;
        }
    }
    let (mut w_lo, mut w_hi) = (f_lo, f_hi);
    let mut side = 0i8;
    for _ in 0..200 {
        if f_lo.min(-f_hi) <= ftol {
            break;
        }
        let mut x = (lo * w_hi - hi * w_lo) / (w_hi - w_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
            if !(x > lo && x < hi) {
                break;
            }
        }
        let fx = f(x);
        if fx == 0.0 {
            return exact(x, lo, hi, f_lo, f_hi);
        }
        if fx > 0.0 {
            lo = x;
            f_lo = fx;
            w_lo = fx;
            if side == 1 {
                w_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = x;
            f_hi = fx;
            w_hi = fx;
            if side == -1 {
                w_lo *= 0.5;
            }
            side = -1;
        }
    }
    if f_lo.min(-f_hi) > ftol {
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = f(mid);
            if fm == 0.0 {
                return exact(mid, lo, hi, f_lo, f_hi);
            }
            if fm > 0.0 {
                lo = mid;
                f_lo = fm;
            } else {
                hi = mid;
                f_hi = fm;
            }
        }
    }
    let (energy, residual) = if f_lo <= -f_hi {
        (lo, f_lo)
    } else {
        (hi, -f_hi)
    };
    Root {
        energy,
        residual,
        bracket: Bracket { lo, hi, f_lo, f_hi },
    }
}

/// Real zeros of every exact denominator at or below `E`.
fn exact_singularities(table: &PoleWeightTable) -> Vec<f64> {
    let mut out = Vec::new();
    for e in &table.entries {
        for l in &e.labels {
            let Ok(pos) = pole_position(&l.channel, l.aux_energy, table.mode, table.energy) else {
                continue;
            };
            let candidates = match pos.exact_pair {
                Some((a, b)) => vec![a, b],
                None => vec![pos.pole],
            };
            for s in candidates {
                if s > table.energy {
                    continue;
                }
                if let Ok(d) =
                    channel_denominator(&l.channel, l.aux_energy, s, table.mode, table.energy)
                {
                    let tol = 1e-8 * scale_of(&[s, l.channel.epsilon_p, l.aux_energy]);
                    if d.abs() <= tol {
                        out.push(s);
                    }
                }
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn scanned_roots(table: &PoleWeightTable, eps0: f64) -> Result<Vec<Root>> {
    let top = table.energy;
    let f = |eps: f64| -> f64 {
        crate::effpot::vnn_exact_unchecked(table, eps)
            .map(|v| v - eps + eps0)
            .unwrap_or(f64::NAN)
    };
    let sing = exact_singularities(table);
    let weight = table.total_weight();
    let anchor = sing.first().copied().unwrap_or(top).min(top);
    let mut t = 2.0 * weight.sqrt() + (anchor - eps0).max(0.0) + 1.0;
    let (floor, _) = expand(&f, anchor, -1.0, &mut t, true)?;

    let mut edges = vec![floor];
    edges.extend(sing.iter().copied());
    if sing.last().is_none_or(|&s| s < top) {
        edges.push(top);
    }
    let mut roots = Vec::new();
    for (i, w) in edges.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let open_left = i > 0;
        let open_right = sing.binary_search_by(|s| s.total_cmp(&b)).is_ok();
        let margin = 1e-9 * (b - a);
        let lo_end = if open_left { a + margin } else { a };
        let hi_end = if open_right { b - margin } else { b };
        let mut prev: Option<(f64, f64)> = None;
        for m in 0..=SCAN_SAMPLES {
            let u = m as f64 / SCAN_SAMPLES as f64;
            let s = 0.5 * (1.0 - (std::f64::consts::PI * u).cos());
            let x = lo_end + (hi_end - lo_end) * s;
            let fx = f(x);
            if !fx.is_finite() {
                prev = None;
                continue;
            }
            if fx == 0.0 {
                roots.push(Root {
                    energy: x,
                    residual: 0.0,
                    bracket: Bracket {
                        lo: x,
                        hi: x,
                        f_lo: 0.0,
                        f_hi: 0.0,
                    },
                });
                prev = None;
                continue;
            }
            if let Some((px, pf)) = prev {
                if pf.signum() != fx.signum() {
                    let scale = scale_of(&[px, x, eps0]);
                    let root = if pf > 0.0 {
                        refine(&f, px, x, pf, fx, x - px, scale)
                    } else {
                        let g = |e: f64| -f(e);
                        let r = refine(&g, px, x, -pf, -fx, x - px, scale);
                        Root {
                            bracket: Bracket {
                                f_lo: -r.bracket.f_lo,
                                f_hi: -r.bracket.f_hi,
                                ..r.bracket
                            },
                            ..r
                        }
                    };
                    if root.residual <= 1e-6 * scale_of(&[root.energy, eps0]) {
                        roots.push(root);
                    }
                }
            }
            prev = Some((x, fx));
        }
    }
    roots.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(roots)
}

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------

/// Solution counts for `N_p` harmonics, `N_p'` channel states and `N_s` base
/// states. Reduced forms are per base state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolutionCounts {
    pub n_p: usize,
    pub n_p_prime: usize,
    pub n_s: usize,
    pub n_max: usize,
    pub n_0: usize,
    pub n_delta: usize,
    pub n_max_r: usize,
    pub n_0_r: usize,
    pub n_delta_r: usize,
    /// `(N_p N_p' + 1) / (N_p' + 1)`
    pub n_max_ratio: f64,
}

pub fn solution_counts(n_p: usize, n_p_prime: usize, n_s: usize) -> SolutionCounts {
    let n_max_r = n_p * n_p_prime + 1;
    let n_0_r = n_p_prime + 1;
    let n_delta_r = n_p_prime * n_p.saturating_sub(1);
    SolutionCounts {
        n_p,
        n_p_prime,
        n_s,
        n_max: n_max_r * n_s,
        n_0: n_0_r * n_s,
        n_delta: n_delta_r * n_s,
        n_max_r,
        n_0_r,
        n_delta_r,
        n_max_ratio: n_max_r as f64 / n_0_r as f64,
    }
}

pub fn count_solutions(spec: &SystemSpec) -> SolutionCounts {
    solution_counts(spec.n_harmonics(), spec.n_prime, spec.n_base)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountReport {
    pub predicted: SolutionCounts,
    pub observed_total: usize,
    pub observed_per_state: Vec<usize>,
    pub distinct_poles_per_state: Vec<usize>,
    /// `N_max - observed` when positive.
    pub degeneracy_deficit: usize,
    pub merged_entries: usize,
    pub dropped_entries: usize,
}

// ---------------------------------------------------------------------------
// Spectrum
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpectrum {
    /// One-based base-state index.
    pub n: usize,
    pub epsilon0: f64,
    pub table: PoleWeightTable,
    pub roots: Vec<Root>,
}

impl StateSpectrum {
    pub fn energies(&self) -> Vec<f64> {
        self.roots.iter().map(|r| r.energy).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub states: Vec<StateSpectrum>,
    pub counts: CountReport,
    pub mode: DenominatorMode,
    pub warnings: Vec<String>,
}

impl SpectrumResult {
    /// Assembles a result from per-state tables, checking the invariants.
    pub fn from_tables(
        predicted: SolutionCounts,
        tables: Vec<(f64, PoleWeightTable)>,
    ) -> Result<Self> {
        let mode = tables
            .first()
            .map_or(DenominatorMode::Approximate, |(_, t)| t.mode);
        let states = tables
            .into_par_iter()
            .map(|(epsilon0, table)| {
                let roots = find_roots(&table, epsilon0)?;
                Ok(StateSpectrum {
                    n: table.base_state,
                    epsilon0,
                    table,
                    roots,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut warnings = Vec::new();
        for s in &states {
            if is_rational(&s.table) {
                check_invariants(s)?;
            }
        }
        let observed_per_state: Vec<usize> = states.iter().map(|s| s.roots.len()).collect();
        let observed_total = observed_per_state.iter().sum();
        let degeneracy_deficit = predicted.n_max.saturating_sub(observed_total);
        let merged_entries = states.iter().map(|s| s.table.merged_away()).sum();
        let dropped_entries = states.iter().map(|s| s.table.dropped).sum();
        if degeneracy_deficit > 0 {
            let msg = format!(
                "observed {observed_total} roots, {degeneracy_deficit} short of N_max = {} \
                 ({merged_entries} merged, {dropped_entries} zero-weight entries)",
                predicted.n_max
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(Self {
            counts: CountReport {
                predicted,
                observed_total,
                observed_per_state,
                distinct_poles_per_state: states.iter().map(|s| s.table.len()).collect(),
                degeneracy_deficit,
                merged_entries,
                dropped_entries,
            },
            states,
            mode,
            warnings,
        })
    }

    pub fn total_roots(&self) -> usize {
        self.counts.observed_total
    }

    pub fn state(&self, n: usize) -> Result<&StateSpectrum> {
        self.states
            .iter()
            .find(|s| s.n == n)
            .ok_or_else(|| Error::IndexOutOfRange(format!("base state {n} not in spectrum")))
    }
}

fn check_invariants(s: &StateSpectrum) -> Result<()> {
    let poles = s.table.poles();
    if s.roots.len() != poles.len() + 1 {
        return Err(Error::InvariantViolation(format!(
            "state {}: {} roots for {} distinct poles",
            s.n,
            s.roots.len(),
            poles.len()
        )));
    }
    for (j, r) in s.roots.iter().enumerate() {
        let below = j.checked_sub(1).map(|i| poles[i]);
        let above = poles.get(j).copied();
        if below.is_some_and(|p| r.energy <= p) || above.is_some_and(|p| r.energy >= p) {
            return Err(Error::InvariantViolation(format!(
                "state {}: root {} = {} breaks interlacing",
                s.n,
                j + 1,
                r.energy
            )));
        }
        if !r.bracket.is_decreasing_certificate() && r.residual != 0.0 {
            return Err(Error::InvariantViolation(format!(
                "state {}: root {} has no valid bracket certificate",
                s.n,
                j + 1
            )));
        }
        if r.residual > RESIDUAL_REL * r.energy.abs().max(1.0) && !r.bracket.is_float_resolved() {
            return Err(Error::InvariantViolation(format!(
                "state {}: root {} residual {:e} above tolerance",
                s.n,
                j + 1,
                r.residual
            )));
        }
    }
    Ok(())
}

/// Tables for every base state `1..=N_s`, in order.
pub fn pole_weight_tables(
    spec: &SystemSpec,
    bases: &ChannelBases,
) -> Result<Vec<(f64, PoleWeightTable)>> {
    (1..=spec.n_base)
        .into_par_iter()
        .map(|n| {
            let table = build_pole_weight_table(spec, bases, n)?;
            Ok((bases.base().eigenvalue(n)?, table))
        })
        .collect()
}

pub fn solve_spectrum_with(spec: &SystemSpec, bases: &ChannelBases) -> Result<SpectrumResult> {
    let mut result =
        SpectrumResult::from_tables(count_solutions(spec), pole_weight_tables(spec, bases)?)?;
    let mut warnings = spec.warnings.clone();
    warnings.append(&mut result.warnings);
    result.warnings = warnings;
    Ok(result)
}

pub fn solve_spectrum(spec: &SystemSpec) -> Result<SpectrumResult> {
    let bases = ChannelBases::solve(spec)?;
    solve_spectrum_with(spec, &bases)
}

// ---------------------------------------------------------------------------
// Realisations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealisationCount {
    /// `N_R = N_p`, clamped to `[1, min roots per state]`.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealisationMember {
    pub n: usize,
    /// One-based root index within state `n`.
    pub j: usize,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Realisation {
    pub index: usize,
    /// Sorted by energy, then `n`.
    pub members: Vec<RealisationMember>,
}

impl Realisation {
    /// Members belonging to base state `n`.
    pub fn members_of(&self, n: usize) -> impl Iterator<Item = &RealisationMember> {
        self.members.iter().filter(move |m| m.n == n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealisationEnsemble {
    pub realisations: Vec<Realisation>,
    pub method: String,
    pub n_r: usize,
    /// `N_p'(N_p - 1) + 1`
    pub bound: usize,
}

/// Splits sorted `values` at the `groups - 1` largest gaps (ties to the lower
/// index); returns group boundaries as index ranges.
pub fn split_at_largest_gaps(values: &[f64], groups: usize) -> Result<Vec<std::ops::Range<usize>>> {
    if groups == 0 || groups > values.len() {
        return Err(Error::RealisationCount {
            requested: groups,
            reason: format!("need 1..={} groups", values.len()),
        });
    }
    let mut gaps: Vec<(f64, usize)> = values
        .windows(2)
        .enumerate()
        .map(|(i, w)| (w[1] - w[0], i + 1))
        .collect();
    gaps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut cuts: Vec<usize> = gaps.iter().take(groups - 1).map(|g| g.1).collect();
    cuts.sort_unstable();
    let mut ranges = Vec::with_capacity(groups);
    let mut start = 0;
    for c in cuts {
        ranges.push(start..c);
        start = c;
    }
    ranges.push(start..values.len());
    Ok(ranges)
}

pub fn group_realisations(
    result: &SpectrumResult,
    count: RealisationCount,
) -> Result<RealisationEnsemble> {
    let min_roots = result
        .states
        .iter()
        .map(|s| s.roots.len())
        .min()
        .unwrap_or(0);
    if min_roots == 0 {
        return Err(Error::RealisationCount {
            requested: match count {
                RealisationCount::Auto => 0,
                RealisationCount::Fixed(k) => k,
            },
            reason: "spectrum has no roots".into(),
        });
    }
    let pred = result.counts.predicted;
    let bound = (pred.n_p_prime * pred.n_p.saturating_sub(1) + 1).max(1);
    let (n_r, method) = match count {
        RealisationCount::Auto => (pred.n_p.clamp(1, min_roots), "largest-gaps/auto"),
        RealisationCount::Fixed(k) => (k, "largest-gaps/fixed"),
    };
    if n_r == 0 || n_r > min_roots {
        return Err(Error::RealisationCount {
            requested: n_r,
            reason: format!("a base state has only {min_roots} roots"),
        });
    }
    if n_r > bound {
        return Err(Error::RealisationCount {
            requested: n_r,
            reason: format!("exceeds the bound N_p'(N_p - 1) + 1 = {bound}"),
        });
    }
    let mut realisations: Vec<Realisation> = (0..n_r)
        .map(|i| Realisation {
            index: i + 1,
            members: Vec::new(),
        })
        .collect();
    for s in &result.states {
        let energies = s.energies();
        for (i, range) in split_at_largest_gaps(&energies, n_r)?
            .into_iter()
            .enumerate()
        {
            for j in range {
                realisations[i].members.push(RealisationMember {
                    n: s.n,
                    j: j + 1,
                    energy: energies[j],
                });
            }
        }
    }
    for r in &mut realisations {
        r.members
            .sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.n.cmp(&b.n)));
    }
    Ok(RealisationEnsemble {
        realisations,
        method: method.into(),
        n_r,
        bound,
    })
}

// ---------------------------------------------------------------------------
// Separation estimates
// ---------------------------------------------------------------------------

/// Mean level spacing of the first `N_s` base levels.
pub fn max_separation_estimate(spec: &SystemSpec, basis: &EigenBasis) -> Result<f64> {
    let n = spec.n_base;
    if n < 2 || basis.len() < n {
        return Err(Error::invalid(format!(
            "mean level spacing needs at least two base levels (N_s = {n}, basis has {})",
            basis.len()
        )));
    }
    Ok((basis.eigenvalues[n - 1] - basis.eigenvalues[0]) / (n - 1) as f64)
}

/// `2π √(2E) / d_p`.
pub fn min_separation_estimate(spec: &SystemSpec) -> Result<f64> {
    match spec.perturbation {
        PerturbationKind::SpatialPeriodic { period, .. } => {
            if spec.energy < 0.0 {
                return Err(Error::SqrtDomain {
                    argument: 2.0 * spec.energy,
                });
            }
            Ok(2.0 * std::f64::consts::PI * (2.0 * spec.energy).sqrt() / period)
        }
        PerturbationKind::TimePeriodic { .. } => Err(Error::UnsupportedMode(
            "the minimum separation estimate needs a spatial period".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationEstimates {
    pub max_estimate: f64,
    pub min_estimate: f64,
}

pub fn realisation_separation(
    spec: &SystemSpec,
    basis: &EigenBasis,
) -> Result<SeparationEstimates> {
    Ok(SeparationEstimates {
        min_estimate: min_separation_estimate(spec)?,
        max_estimate: max_separation_estimate(spec, basis)?,
    })
}

// ---------------------------------------------------------------------------
// Auxiliary-problem analysis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AppendixRoots {
    pub k: i32,
    pub n: usize,
    pub epsilon0: f64,
    pub table: PoleWeightTable,
    pub roots: Vec<Root>,
}

/// Table with poles `ε0_{n'} - ω_p k` (`n' = 1..N_s`) and weights
/// `Σ_{k'≠k} |V^{k'}_{nn'}|²` on the base basis.
pub fn appendix_table(
    spec: &SystemSpec,
    base: &EigenBasis,
    k: i32,
    n: usize,
) -> Result<PoleWeightTable> {
    let shift = spec.channel_energy(k)?.drive_shift.ok_or_else(|| {
        Error::UnsupportedMode("auxiliary analysis needs a temporal drive".into())
    })?;
    if spec.harmonic(k).is_none() {
        return Err(Error::IndexOutOfRange(format!("harmonic {k} not in spec")));
    }
    base.eigenvalue(n)?;
    let floor = (WEIGHT_FLOOR_REL * spec.amplitude_max()).powi(2);
    let mut pairs = Vec::with_capacity(spec.n_base);
    for n_prime in 1..=spec.n_base {
        let mut weight = 0.0;
        for h in spec.harmonics.iter().filter(|h| h.index != k) {
            weight += matrix_element(base, base, &h.amplitude, n, n_prime)?.norm_sqr();
        }
        if weight > floor {
            pairs.push((base.eigenvalue(n_prime)? - shift, weight));
        }
    }
    let mut table = PoleWeightTable::from_pairs(n, &pairs)?;
    table.dropped = spec.n_base - pairs.len();
    Ok(table)
}

pub fn appendix_auxiliary_roots(
    spec: &SystemSpec,
    base: &EigenBasis,
    k: i32,
    n: usize,
) -> Result<AppendixRoots> {
    let table = appendix_table(spec, base, k, n)?;
    let epsilon0 = base.eigenvalue(n)?;
    let roots = find_roots(&table, epsilon0)?;
    Ok(AppendixRoots {
        k,
        n,
        epsilon0,
        table,
        roots,
    })
}

/// How much the auxiliary root sets depend on `k`.
///
/// Each root is labelled by its zero-coupling limit: the sorted union of the
/// table poles and `ε0_n`. Its displacement from that limit removes the
/// `-ω_p k` offset of the pole-attached roots. `spread` is the largest range
/// over `k` of the displacement of any label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KShiftDiagnostic {
    pub n: usize,
    pub ks: Vec<i32>,
    /// Per `k`: `(label, displacement)`; label 0 is the `ε0_n` line, label
    /// `n'` the pole `ε0_{n'} - ω_p k`.
    pub displacements: Vec<Vec<(usize, f64)>>,
    pub spread: f64,
}

pub fn k_shift_diagnostic(
    spec: &SystemSpec,
    base: &EigenBasis,
    n: usize,
) -> Result<KShiftDiagnostic> {
    let ks: Vec<i32> = spec.harmonics.iter().map(|h| h.index).collect();
    let mut displacements = Vec::with_capacity(ks.len());
    for &k in &ks {
        let aux = appendix_auxiliary_roots(spec, base, k, n)?;
        let shift = spec.channel_energy(k)?.drive_shift.unwrap_or(0.0);
        let mut limits: Vec<(f64, usize)> = aux
            .table
            .poles()
            .into_iter()
            .map(|p| {
                let n_prime = (1..=spec.n_base)
                    .min_by(|&a, &b| {
                        let da = (base.eigenvalues[a - 1] - shift - p).abs();
                        let db = (base.eigenvalues[b - 1] - shift - p).abs();
                        da.total_cmp(&db)
                    })
                    .unwrap_or(0);
                (p, n_prime)
            })
            .collect();
        limits.push((aux.epsilon0, 0));
        limits.sort_by(|a, b| a.0.total_cmp(&b.0));
        displacements.push(
            aux.roots
                .iter()
                .zip(&limits)
                .map(|(r, &(limit, label))| (label, r.energy - limit))
                .collect::<Vec<_>>(),
        );
    }
    let mut spread = 0.0f64;
    for label in 0..=spec.n_base {
        let values: Vec<f64> = displacements
            .iter()
            .flat_map(|d| d.iter().filter(|(l, _)| *l == label).map(|(_, v)| *v))
            .collect();
        if let (Some(lo), Some(hi)) = (
            values.iter().copied().reduce(f64::min),
            values.iter().copied().reduce(f64::max),
        ) {
            spread = spread.max(hi - lo);
        }
    }
    Ok(KShiftDiagnostic {
        n,
        ks,
        displacements,
        spread,
    })
}

/// `‖(h0 + V_eff(ε) - ε) ψ0_n‖ / ‖ψ0_n‖` in the quadrature norm.
pub fn modified_equation_residual(
    spec: &SystemSpec,
    bases: &ChannelBases,
    root: f64,
    n: usize,
) -> Result<f64> {
    let base = bases.base();
    let psi: Vec<Complex64> = base
        .state(n)?
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let zero = vec![0.0; spec.grid.points];
    let kinetic = apply_hamiltonian(&spec.grid, &zero, &psi);
    let potential = apply_effective_potential(spec, bases, root, &psi)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..psi.len() {
        let r = kinetic[i] + potential[i] - psi[i] * root;
        num += base.quad_weights[i] * r.norm_sqr();
        den += base.quad_weights[i] * psi[i].norm_sqr();
    }
    Ok((num / den).sqrt())
}
