//! Brute-force verifiers that share no evaluation code with the solver:
//! a companion-matrix root oracle for the cleared secular polynomial, a
//! truncated coupled-channel diagonalization, and a refined-grid re-solve.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::effpot::{ChannelBases, PoleWeightTable};
use crate::eigenbasis::{matrix_element, solve_base_eigenproblem, EigenBasis};
use crate::error::{Error, Result};
use crate::model::{DenominatorMode, SystemSpec};

/// Largest distinct-pole count accepted by the polynomial oracle.
pub const MAX_ORACLE_POLES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub quantity: String,
    /// Nonnegative, in item order.
    pub discrepancies: Vec<f64>,
    pub max_discrepancy: f64,
    pub tolerance: f64,
    /// `max_discrepancy <= tolerance`
    pub pass: bool,
}

impl OracleReport {
    pub fn new(name: &str, quantity: &str, discrepancies: Vec<f64>, tolerance: f64) -> Self {
        let max_discrepancy = discrepancies.iter().fold(0.0f64, |m, d| m.max(*d));
        Self {
            name: name.into(),
            quantity: quantity.into(),
            pass: max_discrepancy <= tolerance,
            discrepancies,
            max_discrepancy,
            tolerance,
        }
    }
}

// ---------------------------------------------------------------------------
// Polynomial oracle
// ---------------------------------------------------------------------------

/// Cleared secular polynomial in the scaled variable `z = (ε - c)/s`:
/// `g(z) = Σ_j a_j Π_{i≠j}(z - q_i) + (e - z) Π_i (z - q_i)`.
struct Cleared {
    q: Vec<f64>,
    a: Vec<f64>,
    e: f64,
    center: f64,
    scale: f64,
}

impl Cleared {
    fn new(poles: &[f64], weights: &[f64], eps0: f64) -> Self {
        let mut center = eps0;
        for p in poles {
            center += p;
        }
        center /= (poles.len() + 1) as f64;
        let total: f64 = weights.iter().sum();
        let scale = poles
            .iter()
            .chain(std::iter::once(&eps0))
            .fold(total.sqrt(), |m, v| m.max((v - center).abs()))
            .max(f64::MIN_POSITIVE);
        Self {
            q: poles.iter().map(|p| (p - center) / scale).collect(),
            a: weights.iter().map(|w| w / (scale * scale)).collect(),
            e: (eps0 - center) / scale,
            center,
            scale,
        }
    }

    /// Monomial coefficients, lowest degree first, leading coefficient -1.
    fn coefficients(&self) -> Vec<f64> {
        let full = poly_from_roots(&self.q);
        let mut out = vec![0.0; self.q.len() + 2];
        // (e - z) Π(z - q_i)
        for (k, c) in full.iter().enumerate() {
            out[k] += self.e * c;
            out[k + 1] -= c;
        }
        for j in 0..self.q.len() {
            let others: Vec<f64> = self
                .q
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, v)| *v)
                .collect();
            for (k, c) in poly_from_roots(&others).iter().enumerate() {
                out[k] += self.a[j] * c;
            }
        }
        out
    }

    /// `(g(z), g'(z))` evaluated in product form.
    fn eval(&self, z: f64) -> (f64, f64) {
        let d: Vec<f64> = self.q.iter().map(|q| z - q).collect();
        let prod_except = |skip: &[usize]| -> f64 {
            d.iter()
                .enumerate()
                .filter(|(i, _)| !skip.contains(i))
                .map(|(_, v)| *v)
                .product()
        };
        let n = d.len();
        let full = prod_except(&[]);
        let mut g = (self.e - z) * full;
        let mut dg = -full;
        for k in 0..n {
            dg += (self.e - z) * prod_except(&[k]);
        }
        for j in 0..n {
            g += self.a[j] * prod_except(&[j]);
            for k in (0..n).filter(|&k| k != j) {
                dg += self.a[j] * prod_except(&[j, k]);
            }
        }
        (g, dg)
    }
}

/// Coefficients of `Π (z - r_i)`, lowest degree first.
fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (k, v) in c.iter().enumerate() {
            next[k + 1] += v;
            next[k] -= r * v;
        }
        c = next;
    }
    c
}

/// All roots of the cleared degree-`P+1` polynomial of
/// `Σ w_j/(ε - p_j) - ε + ε0`, sorted, from companion-matrix eigenvalues
/// polished by safeguarded Newton steps on the product form.
pub fn polynomial_roots_oracle(table: &PoleWeightTable, eps0: f64) -> Result<Vec<f64>> {
    if table.mode != DenominatorMode::Approximate {
        return Err(Error::UnsupportedMode(
            "polynomial oracle needs the approximate regime".into(),
        ));
    }
    let poles = table.poles();
    if poles.len() > MAX_ORACLE_POLES {
        return Err(Error::invalid(format!(
            "polynomial oracle supports at most {MAX_ORACLE_POLES} poles, got {}",
            poles.len()
        )));
    }
    let cleared = Cleared::new(&poles, &table.weights(), eps0);
    let coeffs = cleared.coefficients();
    let degree = coeffs.len() - 1;
    let lead = coeffs[degree];
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..degree {
        companion[(i, degree - 1)] = -coeffs[i] / lead;
    }
    let eigen = companion.complex_eigenvalues();
    let mut roots = Vec::with_capacity(degree);
    for z in eigen.iter() {
        if z.im.abs() > 1e-8 * z.re.abs().max(1.0) {
            return Err(Error::Oracle(format!(
                "companion eigenvalue {z} has a residual imaginary part"
            )));
        }
        roots.push(polish(&cleared, z.re));
    }
    roots.sort_by(f64::total_cmp);
    Ok(roots
        .into_iter()
        .map(|z| cleared.center + cleared.scale * z)
        .collect())
}

fn polish(cleared: &Cleared, mut z: f64) -> f64 {
    let (mut g, mut dg) = cleared.eval(z);
    for _ in 0..30 {
        if g == 0.0 || dg == 0.0 {
            break;
        }
        let next = z - g / dg;
        let (gn, dgn) = cleared.eval(next);
        if !(gn.abs() < g.abs()) {
            break;
        }
        z = next;
        g = gn;
        dg = dgn;
    }
    z
}

/// Relative discrepancies `|a - b| / max(1, |b|)` of two equally long sorted
/// root lists; a length mismatch is reported as infinite discrepancy.
pub fn compare_roots(name: &str, solver: &[f64], oracle: &[f64], tolerance: f64) -> OracleReport {
    let discrepancies = if solver.len() == oracle.len() {
        solver
            .iter()
            .zip(oracle)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .collect()
    } else {
        vec![f64::INFINITY]
    };
    OracleReport::new(name, "relative root difference", discrepancies, tolerance)
}

// ---------------------------------------------------------------------------
// Coupled-channel oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledSpectrum {
    pub eigenvalues: Vec<f64>,
    pub dimension: usize,
    /// `max |M - M^H|`
    pub hermiticity_error: f64,
}

/// Diagonal offset of channel `g` state with auxiliary energy `aux`:
/// `ω k` (temporal) or `ε_p + 2 cosα √(E ε_p)` (spatial).
fn channel_offset(spec: &SystemSpec, index: i32) -> Result<f64> {
    let c = spec.channel_energy(index)?;
    match c.drive_shift {
        Some(shift) => Ok(shift),
        None => {
            let arg = spec.energy * c.epsilon_p;
            if arg < 0.0 {
                return Err(Error::SqrtDomain { argument: arg });
            }
            Ok(c.epsilon_p + 2.0 * c.cos_alpha * arg.sqrt())
        }
    }
}

/// Truncated coupled-channel matrix: channel 0 with `N_s` base states and
/// every channel `g` with `N_p'` states, coupled through `V_{a-b}`.
pub fn coupled_matrix(spec: &SystemSpec, bases: &ChannelBases) -> Result<DMatrix<Complex64>> {
    struct Block<'a> {
        index: i32,
        basis: &'a EigenBasis,
        states: usize,
        offset: f64,
    }
    let mut blocks = vec![Block {
        index: 0,
        basis: bases.base(),
        states: spec.n_base,
        offset: 0.0,
    }];
    for h in &spec.harmonics {
        blocks.push(Block {
            index: h.index,
            basis: bases.channel(h.index)?,
            states: spec.n_prime,
            offset: channel_offset(spec, h.index)?,
        });
    }
    let dim: usize = blocks.iter().map(|b| b.states).sum();
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let mut row = 0;
    for a in &blocks {
        let mut col = 0;
        for b in &blocks {
            if a.index == b.index {
                for i in 0..a.states {
                    m[(row + i, col + i)] =
                        Complex64::new(a.basis.eigenvalue(i + 1)? + a.offset, 0.0);
                }
            } else if let Some(h) = spec.harmonic(a.index - b.index) {
                for i in 0..a.states {
                    for j in 0..b.states {
                        m[(row + i, col + j)] =
                            matrix_element(a.basis, b.basis, &h.amplitude, i + 1, j + 1)?;
                    }
                }
            }
            col += b.states;
        }
        row += a.states;
    }
    Ok(m)
}

pub fn coupled_matrix_diagonalization(
    spec: &SystemSpec,
    bases: &ChannelBases,
) -> Result<CoupledSpectrum> {
    let m = coupled_matrix(spec, bases)?;
    let dim = m.nrows();
    let mut herm = 0.0f64;
    let mut peak = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            herm = herm.max((m[(i, j)] - m[(j, i)].conj()).norm());
            peak = peak.max(m[(i, j)].norm());
        }
    }
    if herm > 1e-12 * peak.max(1.0) {
        return Err(Error::Oracle(format!(
            "coupled matrix is not Hermitian (max |M - M^H| = {herm:e})"
        )));
    }
    let mut eigenvalues: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(CoupledSpectrum {
        eigenvalues,
        dimension: dim,
        hermiticity_error: herm,
    })
}

/// For each oracle eigenvalue, the distance to the nearest EP root; the
/// `keep` smallest distances are returned, ascending.
pub fn subset_distances(ep_roots: &[f64], oracle: &[f64], keep: usize) -> Vec<f64> {
    let mut d: Vec<f64> = oracle
        .iter()
        .map(|e| {
            ep_roots
                .iter()
                .map(|r| (r - e).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    d.sort_by(f64::total_cmp);
    d.truncate(keep);
    d
}

/// Largest of the `N_0` nearest-match distances.
pub fn subset_distance(ep_roots: &[f64], oracle: &[f64], n_0: usize) -> f64 {
    subset_distances(ep_roots, oracle, n_0)
        .last()
        .copied()
        .unwrap_or(0.0)
}

// ---------------------------------------------------------------------------
// Refined-grid oracle
// ---------------------------------------------------------------------------

/// Base eigenvalues on a grid refined by `factor`, nested so every original
/// node is kept: `(N_x - 1)·factor + 1` points.
pub fn refined_grid_eigen_oracle(spec: &SystemSpec, factor: usize) -> Result<Vec<f64>> {
    if !matches!(factor, 1 | 2 | 4) {
        return Err(Error::invalid(format!(
            "refinement factor {factor} not in {{1, 2, 4}}"
        )));
    }
    let refined = if factor == 1 {
        spec.clone()
    } else {
        spec.with_grid_points((spec.grid.points - 1) * factor + 1)?
    };
    Ok(solve_base_eigenproblem(&refined)?.eigenvalues)
}
