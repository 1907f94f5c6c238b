//! Lowest eigenpairs of a real symmetric tridiagonal matrix with constant
//! off-diagonal, as produced by the three-point finite-difference Laplacian.
//!
//! Eigenvalues are located by Sturm-count bisection, eigenvectors by inverse
//! iteration with a pivoted tridiagonal LU, and each eigenvalue is finally
//! replaced by the Rayleigh quotient written in difference form, which has
//! no cancellation against the large `1/h^2` diagonal.

pub(crate) struct Eigenpairs {
    pub values: Vec<f64>,
    /// Euclidean-normalized eigenvectors of length `diag.len()`.
    pub vectors: Vec<Vec<f64>>,
}

pub(crate) struct Tridiagonal<'a> {
    pub diag: &'a [f64],
    pub off: f64,
}

impl Tridiagonal<'_> {
    fn len(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `lambda`.
    fn sturm_count(&self, lambda: f64) -> usize {
        let e2 = self.off * self.off;
        let tiny = f64::MIN_POSITIVE.sqrt() * (1.0 + e2.sqrt());
        let mut count = 0;
        let mut q = 1.0;
        for (i, &d) in self.diag.iter().enumerate() {
            q = if i == 0 {
                d - lambda
            } else {
                d - lambda - e2 / q
            };
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let r = 2.0 * self.off.abs();
        let lo = self.diag.iter().fold(f64::INFINITY, |m, &d| m.min(d - r));
        let hi = self
            .diag
            .iter()
            .fold(f64::NEG_INFINITY, |m, &d| m.max(d + r));
        (lo, hi)
    }

    /// `k`-th smallest eigenvalue (zero-based) by bisection.
    fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.sturm_count(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `(v^T A v) / (v^T v)` with the kinetic part summed as squared
    /// differences. Assumes the diagonal is `-2·off + potential`.
    fn rayleigh_quotient(&self, v: &[f64]) -> f64 {
        let n = self.len();
        let c = -self.off;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..=n {
            let left = if i == 0 { 0.0 } else { v[i - 1] };
            let right = if i == n { 0.0 } else { v[i] };
            num += c * (right - left).powi(2);
        }
        for i in 0..n {
            let potential = self.diag[i] - 2.0 * c;
            num += potential * v[i] * v[i];
            den += v[i] * v[i];
        }
        num / den
    }

    /// Solves `(A - shift I) x = b` in place with partial pivoting.
    fn shifted_solve(&self, shift: f64, b: &mut [f64], scale: f64) {
        let n = self.len();
        if n == 1 {
            let d = self.diag[0] - shift;
            b[0] /= if d == 0.0 { f64::EPSILON * scale } else { d };
            return;
        }
        let mut d: Vec<f64> = self.diag.iter().map(|&v| v - shift).collect();
        let mut dl = vec![self.off; n - 1];
        let mut du = vec![self.off; n - 1];
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n - 1];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                } else {
                    dl[i] = 0.0;
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i < n - 2 {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        let floor = f64::EPSILON * scale;
        for di in d.iter_mut() {
            if di.abs() < floor {
                *di = if *di < 0.0 { -floor } else { floor };
            }
        }
        for i in 0..n - 1 {
            if swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - dl[i] * b[i];
            } else {
                b[i + 1] -= dl[i] * b[i];
            }
        }
        b[n - 1] /= d[n - 1];
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
        }
    }

    /// Lowest `count` eigenpairs.
    pub fn lowest(&self, count: usize) -> Eigenpairs {
        let n = self.len();
        let (glo, ghi) = self.gershgorin();
        let scale = glo.abs().max(ghi.abs()).max(1.0);
        let mut values = Vec::with_capacity(count);
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
        for k in 0..count {
            let lambda = self.eigenvalue(k);
            // Deterministic, non-symmetric start vector.
            let mut v: Vec<f64> = (0..n)
                .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
                .collect();
            for _ in 0..3 {
                self.shifted_solve(lambda, &mut v, scale);
                for prev in &vectors {
                    let dot: f64 = prev.iter().zip(&v).map(|(a, b)| a * b).sum();
                    for (x, p) in v.iter_mut().zip(prev) {
                        *x -= dot * p;
                    }
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                for x in v.iter_mut() {
                    *x /= norm;
                }
            }
            values.push(self.rayleigh_quotient(&v));
            vectors.push(v);
        }
        Eigenpairs { values, vectors }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_laplacian_matches_closed_form() {
        // -1/2 second difference on n interior points with unit spacing:
        // eigenvalues 1 - cos(k π / (n + 1)).
        let n = 50;
        let diag = vec![1.0; n];
        let t = Tridiagonal {
            diag: &diag,
            off: -0.5,
        };
        let pairs = t.lowest(5);
        for (k, v) in pairs.values.iter().enumerate() {
            let exact = 1.0 - ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-14, "{v} vs {exact}");
        }
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let n = 200;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + (i as f64 * 0.1).sin()).collect();
        let t = Tridiagonal {
            diag: &diag,
            off: -1.0,
        };
        let pairs = t.lowest(6);
        for a in 0..6 {
            for b in 0..6 {
                let dot: f64 = pairs.vectors[a]
                    .iter()
                    .zip(&pairs.vectors[b])
                    .map(|(x, y)| x * y)
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
    }
}
