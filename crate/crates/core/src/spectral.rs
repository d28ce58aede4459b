//! Dirichlet sine eigenbasis on (0, 1).
//!
//! Fields are stored as coefficients on the L²-orthonormal eigenfunctions
//! `e_k(ξ) = √2 sin(kπξ)` of `-∂²_ξ`, with eigenvalues `λ_k = (kπ)²`. The
//! heat semigroup is diagonal in this basis and is applied exactly.
//!
//! Physical-space work (the Burgers product, quadrature of the trilinear
//! form) goes through the odd periodic extension of a field to (-1, 1): a
//! sine series on `G` uniform intervals becomes a length-`2G` Fourier series,
//! so every transform is a single complex FFT. With `G ≥ 2N + 1` the product
//! of two `N`-mode fields is resolved without aliasing into the retained modes,
//! which makes the Burgers term an exact Galerkin projection.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Coefficients of a function on (0, 1) in the sine eigenbasis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(n_modes: usize) -> Self {
        Self {
            coeffs: vec![0.0; n_modes],
        }
    }

    /// `value · e_k`, with `k` counted from 1.
    pub fn mode(n_modes: usize, k: usize, value: f64) -> Self {
        assert!(k >= 1 && k <= n_modes, "mode index {k} outside 1..={n_modes}");
        let mut f = Self::zeros(n_modes);
        f.coeffs[k - 1] = value;
        f
    }

    /// Projection of the constant function `value` onto the first `n_modes`
    /// eigenfunctions. Uses the closed form `⟨c, e_k⟩ = c√2(1 - (-1)^k)/(kπ)`;
    /// the boundary mismatch with the Dirichlet condition shows up as the
    /// usual slow `1/k` coefficient decay.
    pub fn constant(n_modes: usize, value: f64) -> Self {
        let coeffs = (1..=n_modes)
            .map(|k| {
                if k % 2 == 1 {
                    2.0 * SQRT_2 * value / (k as f64 * PI)
                } else {
                    0.0
                }
            })
            .collect();
        Self { coeffs }
    }

    /// L² projection of an arbitrary function by composite Simpson quadrature.
    pub fn from_fn(n_modes: usize, f: impl Fn(f64) -> f64) -> Self {
        let intervals = (64 * n_modes).max(4096);
        let h = 1.0 / intervals as f64;
        let values: Vec<f64> = (0..=intervals).map(|i| f(i as f64 * h)).collect();
        let coeffs = (1..=n_modes)
            .map(|k| {
                let kpi = k as f64 * PI;
                let mut acc = 0.0;
                for (i, v) in values.iter().enumerate() {
                    let w = if i == 0 || i == intervals {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    acc += w * v * (kpi * i as f64 * h).sin();
                }
                SQRT_2 * acc * h / 3.0
            })
            .collect();
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// L² norm; Parseval makes this the coefficient 2-norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &SpectralField) -> f64 {
        assert_eq!(self.len(), other.len(), "field length mismatch");
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    /// `self += a · other`
    pub fn add_scaled(&mut self, a: f64, other: &SpectralField) {
        assert_eq!(self.len(), other.len(), "field length mismatch");
        for (s, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *s += a * o;
        }
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        SpectralField {
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    pub fn distance(&self, other: &SpectralField) -> f64 {
        assert_eq!(self.len(), other.len(), "field length mismatch");
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Index<usize> for SpectralField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coeffs[i]
    }
}

impl Add<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.add_scaled(1.0, rhs);
        out
    }
}

impl Add for SpectralField {
    type Output = SpectralField;
    fn add(mut self, rhs: SpectralField) -> SpectralField {
        self.add_scaled(1.0, &rhs);
        self
    }
}

impl AddAssign<&SpectralField> for SpectralField {
    fn add_assign(&mut self, rhs: &SpectralField) {
        self.add_scaled(1.0, rhs);
    }
}

impl Sub<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.add_scaled(-1.0, rhs);
        out
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}

impl Neg for SpectralField {
    type Output = SpectralField;
    fn neg(mut self) -> SpectralField {
        self.coeffs.iter_mut().for_each(|c| *c = -*c);
        self
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, a: f64) -> SpectralField {
        self.scaled(a)
    }
}

/// Mode count, eigenvalues, collocation grid and FFT plans for the basis.
///
/// Immutable after construction and cheap to clone; the FFT plans are shared.
#[derive(Clone)]
pub struct BasisSpec {
    n_modes: usize,
    grid_size: usize,
    eigenvalues: Vec<f64>,
    grid: Vec<f64>,
    weights: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisSpec")
            .field("n_modes", &self.n_modes)
            .field("grid_size", &self.grid_size)
            .finish()
    }
}

impl PartialEq for BasisSpec {
    fn eq(&self, other: &Self) -> bool {
        self.n_modes == other.n_modes && self.grid_size == other.grid_size
    }
}

/// Build the basis for `n_modes` sine modes on a uniform grid of
/// `grid_size` intervals. Requires `grid_size ≥ 2·n_modes + 1`.
pub fn build_basis(n_modes: usize, grid_size: usize) -> Result<BasisSpec> {
    if n_modes == 0 {
        return Err(SimError::config("n_modes must be positive"));
    }
    if grid_size < 2 * n_modes + 1 {
        return Err(SimError::config(format!(
            "grid_size {grid_size} too small for {n_modes} modes (need at least {})",
            2 * n_modes + 1
        )));
    }
    let eigenvalues = (1..=n_modes)
        .map(|k| {
            let kpi = k as f64 * PI;
            kpi * kpi
        })
        .collect();
    let h = 1.0 / grid_size as f64;
    let grid = (1..grid_size).map(|j| j as f64 * h).collect();
    let weights = vec![h; grid_size - 1];
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(2 * grid_size);
    let inverse = planner.plan_fft_inverse(2 * grid_size);
    Ok(BasisSpec {
        n_modes,
        grid_size,
        eigenvalues,
        grid,
        weights,
        forward,
        inverse,
    })
}

impl BasisSpec {
    /// Basis with the default grid of `2·n_modes + 1` intervals.
    pub fn with_modes(n_modes: usize) -> Result<BasisSpec> {
        build_basis(n_modes, 2 * n_modes + 1)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// `λ_k = (kπ)²`, k = 1..N.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Interior collocation points `j/G`, j = 1..G-1.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn ext_len(&self) -> usize {
        2 * self.grid_size
    }

    fn check(&self, field: &SpectralField) {
        assert_eq!(
            field.len(),
            self.n_modes,
            "field has {} modes, basis has {}",
            field.len(),
            self.n_modes
        );
    }

    /// Odd extension of the field on the `2G` periodic grid, in the real parts.
    fn odd_extension(&self, field: &SpectralField) -> Vec<Complex64> {
        self.check(field);
        let n = self.ext_len();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (i, &c) in field.coeffs.iter().enumerate() {
            let k = i + 1;
            buf[k] = Complex64::new(0.0, -c / SQRT_2);
            buf[n - k] = Complex64::new(0.0, c / SQRT_2);
        }
        self.inverse.process(&mut buf);
        buf
    }

    /// Grid values of the field at the interior collocation points.
    pub fn to_physical(&self, field: &SpectralField) -> Vec<f64> {
        let buf = self.odd_extension(field);
        buf[1..self.grid_size].iter().map(|z| z.re).collect()
    }

    /// Discrete sine projection of interior grid values onto the first
    /// `n_modes` modes. Exact inverse of [`to_physical`](Self::to_physical).
    pub fn to_spectral(&self, values: &[f64]) -> SpectralField {
        assert_eq!(values.len(), self.grid_size - 1, "grid length mismatch");
        let n = self.ext_len();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (j, &v) in values.iter().enumerate() {
            buf[j + 1] = Complex64::new(v, 0.0);
            buf[n - j - 1] = Complex64::new(-v, 0.0);
        }
        self.forward.process(&mut buf);
        let scale = SQRT_2 / self.grid_size as f64;
        let coeffs = (1..=self.n_modes).map(|k| -0.5 * buf[k].im * scale).collect();
        SpectralField { coeffs }
    }

    /// `e^{-diffusion·λ_k·t}` per mode.
    pub fn semigroup_factors(&self, t: f64, diffusion: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| (-diffusion * l * t).exp()).collect()
    }

    /// Exact action of `e^{t·diffusion·Δ}`.
    pub fn semigroup_apply(&self, field: &SpectralField, t: f64, diffusion: f64) -> SpectralField {
        self.check(field);
        assert!(
            t >= 0.0 && t.is_finite(),
            "semigroup time must be finite and non-negative"
        );
        let coeffs = field
            .coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| c * (-diffusion * l * t).exp())
            .collect();
        SpectralField { coeffs }
    }

    /// Galerkin projection of `½ ∂_ξ (X²)` onto the retained modes.
    ///
    /// The square is formed on the padded grid; `X²` is a cosine series whose
    /// derivative lands back on the sine modes with coefficient
    /// `-kπ a_k / (2√2)`.
    pub fn burgers_nonlinearity(&self, field: &SpectralField) -> SpectralField {
        let mut buf = self.odd_extension(field);
        for z in buf.iter_mut() {
            *z = Complex64::new(z.re * z.re, 0.0);
        }
        self.forward.process(&mut buf);
        let g = self.grid_size as f64;
        let coeffs = (1..=self.n_modes)
            .map(|k| {
                let a_k = buf[k].re / g;
                -(k as f64) * PI * a_k / (2.0 * SQRT_2)
            })
            .collect();
        SpectralField { coeffs }
    }

    /// Grid values of `∂_ξ y` at the interior collocation points.
    fn derivative_values(&self, field: &SpectralField) -> Vec<f64> {
        self.check(field);
        let n = self.ext_len();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (i, &c) in field.coeffs.iter().enumerate() {
            let k = i + 1;
            let d = 0.5 * SQRT_2 * k as f64 * PI * c;
            buf[k] = Complex64::new(d, 0.0);
            buf[n - k] = Complex64::new(d, 0.0);
        }
        self.inverse.process(&mut buf);
        buf[1..self.grid_size].iter().map(|z| z.re).collect()
    }

    /// Quadrature of `∫₀¹ x · ∂_ξ y · z dξ`.
    ///
    /// The integrand carries wavenumbers up to `3N < 2G`, so the trapezoid
    /// rule on the periodic extension is exact up to rounding.
    pub fn trilinear_b(&self, x: &SpectralField, y: &SpectralField, z: &SpectralField) -> f64 {
        let xv = self.to_physical(x);
        let dy = self.derivative_values(y);
        let zv = self.to_physical(z);
        xv.iter()
            .zip(&dy)
            .zip(&zv)
            .zip(&self.weights)
            .map(|(((a, b), c), w)| w * a * b * c)
            .sum()
    }

    /// `(Σ λ_k^α c_k²)^{1/2}`; `alpha = 0` is the L² norm.
    pub fn h_alpha_norm(&self, field: &SpectralField, alpha: f64) -> f64 {
        self.check(field);
        field
            .coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| l.powf(alpha) * c * c)
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn random_field(n: usize, seed: u64) -> SpectralField {
        // Small LCG keeps this module's tests free of the noise code.
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let coeffs = (1..=n)
            .map(|k| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u = (s >> 11) as f64 / (1u64 << 53) as f64;
                (2.0 * u - 1.0) / k as f64
            })
            .collect();
        SpectralField::new(coeffs)
    }

    #[test]
    fn eigenvalues_closed_form() {
        let b = build_basis(1, 8).unwrap();
        assert_relative_eq!(b.eigenvalues()[0], PI * PI, max_relative = 1e-15);
        let b = build_basis(3, 16).unwrap();
        for (k, l) in b.eigenvalues().iter().enumerate() {
            let kk = (k + 1) as f64;
            assert_relative_eq!(*l, kk * kk * PI * PI, max_relative = 1e-15);
        }
        assert!(b.eigenvalues().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(build_basis(4, 4).is_err());
        assert!(build_basis(0, 16).is_err());
        assert!(build_basis(4, 8).is_err());
        assert!(build_basis(4, 9).is_ok());
    }

    #[test]
    fn build_is_idempotent() {
        assert_eq!(build_basis(5, 20).unwrap(), build_basis(5, 20).unwrap());
    }

    #[test]
    fn discrete_gram_matrix_is_identity() {
        let b = build_basis(16, 33).unwrap();
        for i in 1..=16 {
            let vi = b.to_physical(&SpectralField::mode(16, i, 1.0));
            for j in 1..=16 {
                let vj = b.to_physical(&SpectralField::mode(16, j, 1.0));
                let g: f64 = vi.iter().zip(&vj).zip(b.weights()).map(|((a, c), w)| a * c * w).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).abs() < 1e-10, "gram[{i}][{j}] = {g}");
            }
        }
    }

    #[test]
    fn physical_values_match_direct_sum() {
        let b = build_basis(5, 11).unwrap();
        let f = random_field(5, 3);
        let v = b.to_physical(&f);
        for (j, xi) in b.grid().iter().enumerate() {
            let direct: f64 = (1..=5).map(|k| f[k - 1] * SQRT_2 * (k as f64 * PI * xi).sin()).sum();
            assert!((v[j] - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn semigroup_examples() {
        let b = build_basis(4, 9).unwrap();
        let e1 = SpectralField::mode(4, 1, 1.0);
        assert_eq!(b.semigroup_apply(&e1, 0.0, 1.0), e1);
        let out = b.semigroup_apply(&e1, 0.1, 1.0);
        assert_relative_eq!(out[0], (-0.1 * PI * PI).exp(), max_relative = 1e-14);
        assert_relative_eq!(out[0], 0.372708, max_relative = 1e-5);
        let f = random_field(4, 9);
        let decayed = b.semigroup_apply(&f, 10.0, 1.0);
        assert!(decayed.norm() <= (-10.0 * PI * PI).exp() * f.norm());
    }

    #[test]
    fn nonlinearity_of_first_mode() {
        let b = build_basis(8, 17).unwrap();
        let e1 = SpectralField::mode(8, 1, 1.0);
        let out = b.burgers_nonlinearity(&e1);
        for (i, c) in out.coeffs().iter().enumerate() {
            let expect = if i == 1 { PI / SQRT_2 } else { 0.0 };
            assert!((c - expect).abs() < 1e-12, "mode {}: {c}", i + 1);
        }
        assert_relative_eq!(out[1], 2.2214, max_relative = 1e-4);
    }

    #[test]
    fn nonlinearity_zero_and_homogeneity() {
        let b = build_basis(8, 17).unwrap();
        assert!(b.burgers_nonlinearity(&SpectralField::zeros(8)).norm() == 0.0);
        let one = b.burgers_nonlinearity(&SpectralField::mode(8, 1, 1.0));
        let two = b.burgers_nonlinearity(&SpectralField::mode(8, 1, 2.0));
        for (a, c) in one.coeffs().iter().zip(two.coeffs()) {
            assert!((4.0 * a - c).abs() < 1e-12);
        }
    }

    /// Independent oracle: Galerkin coefficient by brute-force quadrature on a
    /// fine grid, `⟨½(X²)', e_k⟩ = ∫ X X' e_k`.
    #[test]
    fn nonlinearity_matches_brute_force_quadrature() {
        let n = 6;
        let b = build_basis(n, 13).unwrap();
        let f = random_field(n, 11);
        let out = b.burgers_nonlinearity(&f);
        let m = 20_000;
        let h = 1.0 / m as f64;
        for k in 1..=n {
            let mut acc = 0.0;
            for i in 0..m {
                let xi = (i as f64 + 0.5) * h;
                let (mut u, mut du) = (0.0, 0.0);
                for (j, c) in f.coeffs().iter().enumerate() {
                    let w = (j + 1) as f64 * PI;
                    u += c * SQRT_2 * (w * xi).sin();
                    du += c * SQRT_2 * w * (w * xi).cos();
                }
                acc += u * du * SQRT_2 * (k as f64 * PI * xi).sin() * h;
            }
            assert!((acc - out[k - 1]).abs() < 1e-6, "mode {k}: {acc} vs {}", out[k - 1]);
        }
    }

    #[test]
    fn trilinear_examples() {
        let b = build_basis(10, 21).unwrap();
        let e1 = SpectralField::mode(10, 1, 1.0);
        let e2 = SpectralField::mode(10, 2, 1.0);
        // ∫ e1 e1' e2 = ∫ π sin(2πξ) √2 sin(2πξ) = π/√2
        assert_relative_eq!(b.trilinear_b(&e1, &e1, &e2), PI / SQRT_2, max_relative = 1e-12);
        let y = random_field(10, 1);
        let z = random_field(10, 2);
        assert_eq!(b.trilinear_b(&SpectralField::zeros(10), &y, &z), 0.0);
        // consistency with the Burgers term: b(x, x, z) = ⟨B(x), z⟩
        let x = random_field(10, 5);
        let lhs = b.trilinear_b(&x, &x, &z);
        let rhs = b.burgers_nonlinearity(&x).dot(&z);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn trilinear_integration_by_parts() {
        // b(x,y,z) + b(x,z,y) = -∫ x' y z, and b(y,y,y) = 0.
        let b = build_basis(10, 21).unwrap();
        let x = random_field(10, 21);
        let y = random_field(10, 22);
        let z = random_field(10, 23);
        let dx = b.derivative_values(&x);
        let yv = b.to_physical(&y);
        let zv = b.to_physical(&z);
        let rhs: f64 = -dx
            .iter()
            .zip(&yv)
            .zip(&zv)
            .zip(b.weights())
            .map(|(((a, c), d), w)| w * a * c * d)
            .sum::<f64>();
        let lhs = b.trilinear_b(&x, &y, &z) + b.trilinear_b(&x, &z, &y);
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(b.trilinear_b(&y, &y, &y).abs() < 1e-13);
    }

    #[test]
    fn h_alpha_examples() {
        let b = build_basis(3, 7).unwrap();
        let e1 = SpectralField::mode(3, 1, 1.0);
        let e2 = SpectralField::mode(3, 2, 1.0);
        assert_relative_eq!(b.h_alpha_norm(&e1, 0.0), 1.0);
        assert_relative_eq!(b.h_alpha_norm(&e1, 1.0), PI, max_relative = 1e-15);
        assert_relative_eq!(b.h_alpha_norm(&e2, 2.0), 4.0 * PI * PI, max_relative = 1e-15);
    }

    #[test]
    fn constant_projection_matches_quadrature() {
        let exact = SpectralField::constant(8, 2.0);
        let quad = SpectralField::from_fn(8, |_| 2.0);
        assert!(exact.distance(&quad) < 1e-10);
        assert_relative_eq!(exact[0], 4.0 * SQRT_2 / PI, max_relative = 1e-15);
        assert_eq!(exact[1], 0.0);
    }

    proptest! {
        #[test]
        fn semigroup_property(seed in 0u64..1000, s in 0.0f64..0.3, t in 0.0f64..0.3) {
            let b = build_basis(12, 25).unwrap();
            let f = random_field(12, seed);
            let two = b.semigroup_apply(&b.semigroup_apply(&f, s, 1.0), t, 1.0);
            let one = b.semigroup_apply(&f, s + t, 1.0);
            for (a, c) in two.coeffs().iter().zip(one.coeffs()) {
                prop_assert!((a - c).abs() <= 1e-12 * c.abs().max(1e-300) + 1e-300);
            }
        }

        #[test]
        fn transform_round_trip(seed in 0u64..1000) {
            let b = build_basis(16, 40).unwrap();
            let f = random_field(16, seed);
            let back = b.to_spectral(&b.to_physical(&f));
            prop_assert!(f.distance(&back) < 1e-12);
        }

        #[test]
        fn nonlinearity_is_energy_neutral(seed in 0u64..1000, scale in 0.1f64..10.0) {
            let b = build_basis(32, 65).unwrap();
            let x = random_field(32, seed).scaled(scale);
            let e = b.burgers_nonlinearity(&x).dot(&x);
            prop_assert!(e.abs() <= 1e-8 * x.norm().powi(3).max(1.0));
        }
    }
}
