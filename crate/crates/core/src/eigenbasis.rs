//! Hard-wall eigenbases of one-dimensional Hamiltonians `h0 + V` on the spec
//! grid, matrix elements between them, and the channel Green function.
//!
//! `h0 = -1/2 d²/dx²` is discretized by second-order central differences on
//! the interior nodes; eigenfunctions vanish at both walls and are normalized
//! under the trapezoid rule.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Grid, SystemSpec};
use crate::numeric::CompensatedComplexSum;
use crate::tridiag::Tridiagonal;

/// Relative size of `Im V1` tolerated before the V1 problem is rejected.
const V1_IMAG_TOL: f64 = 1e-12;

/// Which potential was diagonalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisTag {
    Unperturbed,
    /// `h0 + V1` with harmonic `excluded` removed from `V(x, t = 0)`.
    V1 {
        excluded: i32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub eigenvalues: Vec<f64>,
    /// `eigenfunctions[n][i] = ψ_{n+1}(x_i)`, including the zero wall samples.
    pub eigenfunctions: Vec<Vec<f64>>,
    pub quad_weights: Vec<f64>,
    pub grid: Grid,
    pub tag: BasisTag,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalue of state `n` (one-based).
    pub fn eigenvalue(&self, n: usize) -> Result<f64> {
        self.check_index(n)?;
        Ok(self.eigenvalues[n - 1])
    }

    /// Samples of state `n` (one-based).
    pub fn state(&self, n: usize) -> Result<&[f64]> {
        self.check_index(n)?;
        Ok(&self.eigenfunctions[n - 1])
    }

    fn check_index(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.len() {
            return Err(Error::IndexOutOfRange(format!(
                "basis state {n} outside 1..={}",
                self.len()
            )));
        }
        Ok(())
    }

    /// `⟨ψ_m|ψ_n⟩` under the stored quadrature.
    pub fn overlap(&self, m: usize, n: usize) -> Result<f64> {
        let a = self.state(m)?;
        let b = self.state(n)?;
        Ok(a.iter()
            .zip(b)
            .zip(&self.quad_weights)
            .map(|((x, y), w)| w * x * y)
            .sum())
    }

    /// Projection coefficients `⟨ψ_n|χ⟩` of a sampled profile.
    pub fn project(&self, profile: &[f64]) -> Result<Vec<f64>> {
        if profile.len() != self.grid.points {
            return Err(Error::GridMismatch {
                left: profile.len(),
                right: self.grid.points,
            });
        }
        Ok(self
            .eigenfunctions
            .iter()
            .map(|psi| {
                psi.iter()
                    .zip(profile)
                    .zip(&self.quad_weights)
                    .map(|((a, b), w)| w * a * b)
                    .sum()
            })
            .collect())
    }
}

/// Lowest `count` eigenpairs of `h0 + potential` with hard walls.
pub fn solve_hamiltonian(
    grid: &Grid,
    potential: &[f64],
    count: usize,
    tag: BasisTag,
) -> Result<EigenBasis> {
    let h = grid.spacing();
    let fail = |message: String| Error::EigenSolver {
        message,
        grid_points: grid.points,
        spacing: h,
    };
    if potential.len() != grid.points {
        return Err(Error::GridMismatch {
            left: potential.len(),
            right: grid.points,
        });
    }
    let interior = grid.points.saturating_sub(2);
    if count == 0 || count > interior {
        return Err(fail(format!(
            "requested {count} states from {interior} interior points"
        )));
    }
    let inv_h2 = 1.0 / (h * h);
    let diag: Vec<f64> = potential[1..grid.points - 1]
        .iter()
        .map(|v| inv_h2 + v)
        .collect();
    let matrix = Tridiagonal {
        diag: &diag,
        off: -0.5 * inv_h2,
    };
    let pairs = matrix.lowest(count);

    for w in pairs.values.windows(2) {
        if !(w[1] > w[0]) {
            return Err(fail(format!(
                "eigenvalues not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if pairs.values.iter().any(|v| !v.is_finite()) {
        return Err(fail("non-finite eigenvalue".into()));
    }

    let norm = 1.0 / h.sqrt();
    let eigenfunctions = pairs
        .vectors
        .iter()
        .map(|v| {
            let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let first = v
                .iter()
                .find(|x| x.abs() > 1e-6 * peak)
                .copied()
                .unwrap_or(1.0);
            let sign = if first < 0.0 { -norm } else { norm };
            let mut psi = Vec::with_capacity(grid.points);
            psi.push(0.0);
            psi.extend(v.iter().map(|x| sign * x));
            psi.push(0.0);
            psi
        })
        .collect();

    Ok(EigenBasis {
        eigenvalues: pairs.values,
        eigenfunctions,
        quad_weights: grid.quadrature_weights(),
        grid: *grid,
        tag,
    })
}

/// Lowest `max(N_s, N_p')` eigenpairs of `h0 + V0`.
pub fn solve_base_eigenproblem(spec: &SystemSpec) -> Result<EigenBasis> {
    solve_hamiltonian(
        &spec.grid,
        &spec.base_potential,
        spec.n_states(),
        BasisTag::Unperturbed,
    )
}

/// Eigenbasis of `h0 + V1` with `V1 = V0 + Σ_{k'≠k} V_{k'}`.
pub fn solve_v1_eigenproblem(spec: &SystemSpec, excluded: i32) -> Result<EigenBasis> {
    if !spec.perturbation.is_temporal() {
        return Err(Error::UnsupportedMode(
            "the V1 eigenproblem is defined for temporal perturbations".into(),
        ));
    }
    if spec.harmonic(excluded).is_none() {
        return Err(Error::IndexOutOfRange(format!(
            "harmonic {excluded} is not part of the spec"
        )));
    }
    let v1 = spec.v1_potential(excluded);
    let peak = v1.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let max_imag = v1.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    let limit = V1_IMAG_TOL * peak;
    if max_imag > limit {
        return Err(Error::NonRealPotential { max_imag, limit });
    }
    let real: Vec<f64> = v1.iter().map(|v| v.re).collect();
    solve_hamiltonian(
        &spec.grid,
        &real,
        spec.n_states(),
        BasisTag::V1 { excluded },
    )
}

/// `∫ dx ψ*_{n'}(x) V(x) ψ_n(x)` with `ψ_{n'}` from `bra` and `ψ_n` from
/// `ket`; both indices one-based.
pub fn matrix_element(
    bra: &EigenBasis,
    ket: &EigenBasis,
    amplitude: &[Complex64],
    n_prime: usize,
    n: usize,
) -> Result<Complex64> {
    if bra.grid != ket.grid {
        return Err(Error::GridMismatch {
            left: bra.grid.points,
            right: ket.grid.points,
        });
    }
    if amplitude.len() != ket.grid.points {
        return Err(Error::GridMismatch {
            left: amplitude.len(),
            right: ket.grid.points,
        });
    }
    let left = bra.state(n_prime)?;
    let right = ket.state(n)?;
    let mut acc = CompensatedComplexSum::default();
    for i in 0..amplitude.len() {
        acc.add(amplitude[i] * (ket.quad_weights[i] * left[i] * right[i]));
    }
    Ok(acc.value())
}

/// `G(x, x') = Σ_n ψ_n(x) ψ_n(x') / (ε_n - ε_channel)` over the stored states.
pub fn green_function(
    basis: &EigenBasis,
    epsilon_channel: f64,
    x_index: usize,
    x_prime_index: usize,
) -> Result<Complex64> {
    if x_index >= basis.grid.points || x_prime_index >= basis.grid.points {
        return Err(Error::IndexOutOfRange(format!(
            "grid indices ({x_index}, {x_prime_index}) outside 0..{}",
            basis.grid.points
        )));
    }
    let tol = collision_tolerance(basis);
    let mut sum = 0.0;
    for (n, (&e, psi)) in basis
        .eigenvalues
        .iter()
        .zip(&basis.eigenfunctions)
        .enumerate()
    {
        let den = e - epsilon_channel;
        if den.abs() <= tol {
            return Err(Error::PoleCollision {
                index: n + 1,
                energy: epsilon_channel,
            });
        }
        sum += psi[x_index] * psi[x_prime_index] / den;
    }
    Ok(Complex64::new(sum, 0.0))
}

fn collision_tolerance(basis: &EigenBasis) -> f64 {
    let spread = match (basis.eigenvalues.first(), basis.eigenvalues.last()) {
        (Some(a), Some(b)) => (b - a).abs(),
        _ => 0.0,
    };
    1e-9 * spread.max(basis.eigenvalues.iter().fold(1.0f64, |m, e| m.max(e.abs())))
}

/// Applies the discrete `h0 + V` (hard walls) to complex samples; the wall
/// samples of the result are zero.
pub fn apply_hamiltonian(grid: &Grid, potential: &[f64], phi: &[Complex64]) -> Vec<Complex64> {
    let n = grid.points;
    let h2 = grid.spacing().powi(2);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for i in 1..n - 1 {
        let lap = (phi[i + 1] - phi[i] * 2.0 + phi[i - 1]) / h2;
        out[i] = -lap * 0.5 + phi[i] * potential[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_spec, BoxSection, ConfigDocument, Drive, GridSection, HarmonicSection, ModesSection,
        PerturbationSection, Profile, TruncationSection,
    };
    use std::f64::consts::PI;

    fn well(points: usize, n_base: usize, base: Profile) -> SystemSpec {
        let doc = ConfigDocument {
            box_section: BoxSection { length: PI },
            grid: GridSection { points },
            base_potential: base,
            perturbation: PerturbationSection {
                drive: Drive::Temporal { frequency: 1.0 },
                real: true,
                amplitude_scale: 1.0,
                harmonics: vec![],
            },
            energy: 4.0,
            truncation: TruncationSection { n_base, n_prime: 1 },
            modes: ModesSection::default(),
        };
        build_spec(&doc).unwrap()
    }

    fn temporal_pair(amplitude: f64) -> SystemSpec {
        let mut spec = well(
            256,
            3,
            Profile::Cosine {
                amplitude: 1.0,
                periods: 1.0,
                phase: 0.3,
            },
        );
        let mut doc = spec.to_document();
        doc.perturbation.harmonics = [-1, 1]
            .iter()
            .map(|&index| HarmonicSection {
                index,
                profile: Profile::Gaussian {
                    amplitude,
                    center: 1.1,
                    width: 0.5,
                },
                imag_profile: None,
                coefficient: [1.0, 0.0],
            })
            .collect();
        spec = build_spec(&doc).unwrap();
        spec
    }

    #[test]
    fn infinite_well_ground_state() {
        let basis = solve_base_eigenproblem(&well(2000, 1, Profile::zero())).unwrap();
        assert!((basis.eigenvalues[0] - 0.5).abs() / 0.5 < 5e-3);
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let free = solve_base_eigenproblem(&well(300, 4, Profile::zero())).unwrap();
        let shifted =
            solve_base_eigenproblem(&well(300, 4, Profile::Constant { value: 2.5 })).unwrap();
        for (a, b) in free.eigenvalues.iter().zip(&shifted.eigenvalues) {
            assert!((b - a - 2.5).abs() < 1e-11);
        }
    }

    #[test]
    fn cosine_well_matches_reference_tridiagonal_solver() {
        // Reference values from an independent LAPACK tridiagonal solve
        // (stebz/stein) of the same discretization.
        let reference = [
            -2.895_041_538_760_13,
            1.049_725_089_607_842,
            4.618_151_241_487_755,
            8.324_080_355_162_98,
        ];
        let spec = well(
            2000,
            4,
            Profile::Cosine {
                amplitude: 5.0,
                periods: 1.0,
                phase: 0.0,
            },
        );
        let basis = solve_base_eigenproblem(&spec).unwrap();
        for (a, b) in basis.eigenvalues.iter().zip(reference) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn basis_is_orthonormal_and_sign_fixed() {
        let spec = well(
            400,
            6,
            Profile::Gaussian {
                amplitude: -3.0,
                center: 1.0,
                width: 0.3,
            },
        );
        let basis = solve_base_eigenproblem(&spec).unwrap();
        for m in 1..=6 {
            for n in 1..=6 {
                let expect = if m == n { 1.0 } else { 0.0 };
                assert!((basis.overlap(m, n).unwrap() - expect).abs() < 1e-8);
            }
            let psi = basis.state(m).unwrap();
            let first = psi.iter().find(|v| v.abs() > 1e-8).unwrap();
            assert!(*first > 0.0);
        }
        assert!(basis.eigenvalues.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn second_order_convergence() {
        let coarse = solve_base_eigenproblem(&well(501, 1, Profile::zero())).unwrap();
        let fine = solve_base_eigenproblem(&well(1001, 1, Profile::zero())).unwrap();
        let ratio = (coarse.eigenvalues[0] - 0.5) / (fine.eigenvalues[0] - 0.5);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn v1_basis_includes_other_harmonics() {
        let spec = temporal_pair(0.4);
        let v1 = solve_v1_eigenproblem(&spec, 1).unwrap();
        let mut potential = spec.base_potential.clone();
        for (p, a) in potential
            .iter_mut()
            .zip(&spec.harmonic(-1).unwrap().amplitude)
        {
            *p += a.re;
        }
        let direct =
            solve_hamiltonian(&spec.grid, &potential, 3, BasisTag::V1 { excluded: 1 }).unwrap();
        assert_eq!(v1, direct);
    }

    #[test]
    fn v1_with_zero_amplitudes_equals_base() {
        let spec = temporal_pair(0.0);
        let base = solve_base_eigenproblem(&spec).unwrap();
        let v1 = solve_v1_eigenproblem(&spec, -1).unwrap();
        assert_eq!(base.eigenvalues, v1.eigenvalues);
        assert_eq!(base.eigenfunctions, v1.eigenfunctions);
    }

    #[test]
    fn v1_rejects_complex_potential() {
        let spec = temporal_pair(0.4);
        let mut doc = spec.to_document();
        doc.perturbation.real = false;
        doc.perturbation.harmonics[0].coefficient = [0.0, 1.0];
        let spec = build_spec(&doc).unwrap();
        assert!(matches!(
            solve_v1_eigenproblem(&spec, 1),
            Err(Error::NonRealPotential { .. })
        ));
        assert!(solve_v1_eigenproblem(&spec, 7).is_err());
    }

    #[test]
    fn constant_amplitude_matrix_element_is_diagonal() {
        let spec = well(256, 4, Profile::zero());
        let basis = solve_base_eigenproblem(&spec).unwrap();
        let amp = vec![Complex64::new(0.7, -0.2); 256];
        for m in 1..=4 {
            for n in 1..=4 {
                let v = matrix_element(&basis, &basis, &amp, m, n).unwrap();
                let expect = if m == n {
                    amp[0]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert!((v - expect).norm() < 1e-10);
            }
        }
        let zero = vec![Complex64::new(0.0, 0.0); 256];
        assert_eq!(
            matrix_element(&basis, &basis, &zero, 1, 2).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        assert!(matrix_element(&basis, &basis, &zero, 5, 1).is_err());
        assert!(matrix_element(&basis, &basis, &zero[..10], 1, 1).is_err());
    }

    #[test]
    fn cosine_matrix_elements_match_closed_form() {
        // (2/L)∫ sin(aθ) sin(bθ) cos(2θ) dx with θ = πx/L equals
        // ½δ_{|a-b|,2} - ½δ_{a+b,2}.
        let analytic = |a: i32, b: i32| {
            0.5 * f64::from(u8::from((a - b).abs() == 2)) - 0.5 * f64::from(u8::from(a + b == 2))
        };
        let spec = well(1000, 4, Profile::zero());
        let basis = solve_base_eigenproblem(&spec).unwrap();
        let amp: Vec<Complex64> = spec
            .grid
            .coordinates()
            .iter()
            .map(|x| Complex64::new((2.0 * x).cos(), 0.0))
            .collect();
        for a in 1..=4 {
            for b in 1..=4 {
                let v = matrix_element(&basis, &basis, &amp, a, b).unwrap();
                assert!(
                    (v.re - analytic(a as i32, b as i32)).abs() < 1e-5 && v.im.abs() < 1e-15,
                    "({a},{b}) {v}"
                );
            }
        }
    }

    #[test]
    fn matrix_element_conjugate_symmetry() {
        let spec = well(256, 3, Profile::zero());
        let basis = solve_base_eigenproblem(&spec).unwrap();
        let amp: Vec<Complex64> = spec
            .grid
            .coordinates()
            .iter()
            .map(|x| Complex64::new(x.sin(), 0.3 * x))
            .collect();
        let conj: Vec<Complex64> = amp.iter().map(|a| a.conj()).collect();
        for m in 1..=3 {
            for n in 1..=3 {
                let a = matrix_element(&basis, &basis, &amp, m, n).unwrap();
                let b = matrix_element(&basis, &basis, &conj, n, m).unwrap().conj();
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn green_function_single_term_and_symmetry() {
        let spec = well(128, 1, Profile::zero());
        let basis = solve_base_eigenproblem(&spec).unwrap();
        let psi = basis.state(1).unwrap();
        let g = green_function(&basis, 2.0, 30, 70).unwrap();
        let expect = psi[30] * psi[70] / (basis.eigenvalues[0] - 2.0);
        assert!((g.re - expect).abs() < 1e-14);

        let spec = well(128, 5, Profile::zero());
        let basis = solve_base_eigenproblem(&spec).unwrap();
        for (i, j) in [(3, 90), (50, 51), (10, 117)] {
            let a = green_function(&basis, 1.3, i, j).unwrap();
            let b = green_function(&basis, 1.3, j, i).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn green_function_reports_collision() {
        let spec = well(128, 3, Profile::zero());
        let basis = solve_base_eigenproblem(&spec).unwrap();
        let err = green_function(&basis, basis.eigenvalues[1], 5, 6).unwrap_err();
        assert!(matches!(err, Error::PoleCollision { index: 2, .. }));
    }

    #[test]
    fn green_function_resolvent_identity() {
        // (h0 + V0 - ε) G(·, x') equals the basis-projected delta
        // Σ_n ψ_n(x) ψ_n(x').
        let spec = well(
            300,
            6,
            Profile::Gaussian {
                amplitude: 2.0,
                center: 2.0,
                width: 0.4,
            },
        );
        let basis = solve_base_eigenproblem(&spec).unwrap();
        let eps = 0.77;
        let column = 120;
        let g: Vec<Complex64> = (0..300)
            .map(|i| green_function(&basis, eps, i, column).unwrap())
            .collect();
        let hg = apply_hamiltonian(&spec.grid, &spec.base_potential, &g);
        for i in 1..299 {
            let lhs = hg[i] - g[i] * eps;
            let delta: f64 = basis
                .eigenfunctions
                .iter()
                .map(|psi| psi[i] * psi[column])
                .sum();
            assert!((lhs.re - delta).abs() < 1e-6 * (1.0 + delta.abs()), "{i}");
        }
    }
}
