//! The anisotropic diffusion tensor a·I + (‖v‖−a)·vvᵀ/‖v‖², its spectral
//! range, analytic first/second parameter derivatives of the auxiliary
//! fields vvᵀ and vᵀv, and the constants of the parametric regularity bound.

use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Vec3};
use crate::kl::{EllipticityEstimate, KlExpansion};
use crate::scalar::{real, Real};

/// Smallest admissible field norm in `diffusion_tensor`.
pub const MIN_FIELD_NORM: f64 = 1e-14;

/// Diffusion strengths: isotropic strength `a` perpendicular to the field,
/// with the global ellipticity constants a_min ≤ a ≤ a_max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionParams<T> {
    pub a: T,
    pub a_min: T,
    pub a_max: T,
}

impl<T: Real> DiffusionParams<T> {
    pub fn new(a: T, a_min: T, a_max: T) -> Result<Self> {
        if !(a_min > T::zero() && a_min <= T::one() && a_max >= T::one()) {
            return Err(Error::Domain(format!(
                "ellipticity constants must satisfy 0 < a_min <= 1 <= a_max, got ({a_min}, {a_max})"
            )));
        }
        if !(a_min <= a && a <= a_max) {
            return Err(Error::Domain(format!(
                "transverse strength {a} outside [{a_min}, {a_max}]"
            )));
        }
        Ok(DiffusionParams { a, a_min, a_max })
    }

    /// Merges the transverse strength into the field envelope, so that
    /// a_min ≤ min(1, a, envelope) and a_max ≥ max(1, a, envelope). Uses the
    /// certified lower bound when it is positive, otherwise the sampled
    /// minimum (the triangle-inequality certificate is too pessimistic for
    /// fields whose mode norms stack beyond the mean).
    pub fn from_ellipticity(a: T, est: &EllipticityEstimate<T>) -> Result<Self> {
        if a <= T::zero() {
            return Err(Error::Domain(format!(
                "transverse strength must be positive, got {a}"
            )));
        }
        let low = envelope_low(est)?;
        let a_min = low.min(a).min(T::one());
        let a_max = est.certified_high.max(a).max(T::one());
        DiffusionParams::new(a, a_min, a_max)
    }
}

/// a·I + (‖v‖₂ − a)·vvᵀ/‖v‖₂². Symmetric with eigenvalues {a, a, ‖v‖₂}.
pub fn diffusion_tensor<T: Real>(v: Vec3<T>, a: T) -> Result<Mat3<T>> {
    let n = geom::norm(v);
    if n < real(MIN_FIELD_NORM) {
        return Err(Error::Domain(format!(
            "field direction degenerate: ‖v‖ = {n}"
        )));
    }
    let coeff = (n - a) / (n * n);
    let mut m = geom::mat_scale(coeff, geom::outer(v, v));
    for i in 0..3 {
        m[i][i] = m[i][i] + a;
    }
    Ok(m)
}

/// Spectral range of the diffusion tensor: (min(a,‖v‖), max(a,‖v‖)).
pub fn eigen_range<T: Real>(v: Vec3<T>, a: T) -> Result<(T, T)> {
    let n = geom::norm(v);
    if n < real(MIN_FIELD_NORM) {
        return Err(Error::Domain(format!(
            "field direction degenerate: ‖v‖ = {n}"
        )));
    }
    Ok((a.min(n), a.max(n)))
}

fn envelope_low<T: Real>(est: &EllipticityEstimate<T>) -> Result<T> {
    let low = if est.is_certified() {
        est.certified_low
    } else {
        est.probe_min
    };
    if low <= T::zero() {
        return Err(Error::Domain(
            "field envelope has no positive lower bound; ellipticity constants unavailable".into(),
        ));
    }
    Ok(low)
}

fn check_mode_index<T: Real>(modes: &[Vec3<T>], i: usize) -> Result<()> {
    if i == 0 || i >= modes.len() {
        return Err(Error::Domain(format!(
            "mode index {i} outside 1..={}",
            modes.len() - 1
        )));
    }
    Ok(())
}

/// Field value mode₀ + Σ_k mode_k y_k from explicit per-tetrahedron modes.
pub fn field_value<T: Real>(modes: &[Vec3<T>], y: &[T]) -> Vec3<T> {
    debug_assert_eq!(y.len(), modes.len() - 1);
    let mut v = modes[0];
    for (k, &yk) in y.iter().enumerate() {
        v = geom::add(v, geom::scale(yk, modes[k + 1]));
    }
    v
}

/// ∂_{y_i} (V Vᵀ) = mode_i V(y)ᵀ + V(y) mode_iᵀ.
pub fn outer_first_derivative<T: Real>(modes: &[Vec3<T>], y: &[T], i: usize) -> Result<Mat3<T>> {
    check_mode_index(modes, i)?;
    let v = field_value(modes, y);
    let m = modes[i];
    Ok(geom::mat_add(geom::outer(m, v), geom::outer(v, m)))
}

/// ∂_{y_j}∂_{y_i} (V Vᵀ) = mode_i mode_jᵀ + mode_j mode_iᵀ, independent of y;
/// all higher derivatives vanish.
pub fn outer_second_derivative<T: Real>(modes: &[Vec3<T>], i: usize, j: usize) -> Result<Mat3<T>> {
    check_mode_index(modes, i)?;
    check_mode_index(modes, j)?;
    let (mi, mj) = (modes[i], modes[j]);
    Ok(geom::mat_add(geom::outer(mi, mj), geom::outer(mj, mi)))
}

/// ∂_{y_i} (VᵀV) = 2⟨mode_i, V(y)⟩.
pub fn sqnorm_first_derivative<T: Real>(modes: &[Vec3<T>], y: &[T], i: usize) -> Result<T> {
    check_mode_index(modes, i)?;
    let v = field_value(modes, y);
    Ok(real::<T>(2.0) * geom::dot(modes[i], v))
}

/// ∂_{y_j}∂_{y_i} (VᵀV) = 2⟨mode_i, mode_j⟩, independent of y.
pub fn sqnorm_second_derivative<T: Real>(modes: &[Vec3<T>], i: usize, j: usize) -> Result<T> {
    check_mode_index(modes, i)?;
    check_mode_index(modes, j)?;
    Ok(real::<T>(2.0) * geom::dot(modes[i], modes[j]))
}

/// Constants of the parametric regularity bound
///
///   ‖∂ᵧᵅ A‖_F ≤ (|α|+1)! · (2 a_max) · 6 a_max²/a_min²
///               · (2 a_max²/(a_min² log 2))^{|α|} · γᵅ,
///
/// summarized as ‖∂ᵧᵅ A‖_F ≤ |α|! · c_A · μᵅ.
#[derive(Debug, Clone)]
pub struct RegularityBounds<T> {
    pub a_min: T,
    pub a_max: T,
    /// γ₀..γ_M of the expansion.
    pub gamma: Vec<T>,
}

impl<T: Real> RegularityBounds<T> {
    pub fn new(a_min: T, a_max: T, gamma: Vec<T>) -> Result<Self> {
        if !(a_min > T::zero() && a_min <= T::one() && a_max >= T::one()) {
            return Err(Error::Domain(format!(
                "bound constants must satisfy 0 < a_min <= 1 <= a_max, got ({a_min}, {a_max})"
            )));
        }
        Ok(RegularityBounds {
            a_min,
            a_max,
            gamma,
        })
    }

    /// Takes a_min/a_max from the field envelope, widened so that
    /// a_min ≤ 1 ≤ a_max. Falls back to the sampled minimum when the
    /// triangle-inequality certificate is not positive.
    pub fn from_ellipticity(est: &EllipticityEstimate<T>, gamma: &[T]) -> Result<Self> {
        RegularityBounds::new(
            envelope_low(est)?.min(T::one()),
            est.certified_high.max(T::one()),
            gamma.to_vec(),
        )
    }

    /// μ_k = 4 a_max² / (a_min² log 2) · γ_k.
    pub fn mu(&self, k: usize) -> T {
        let four: T = real(4.0);
        let ln2: T = real(std::f64::consts::LN_2);
        four * self.a_max * self.a_max / (self.a_min * self.a_min * ln2) * self.gamma[k]
    }

    /// c_A = (2 a_max) · 6 a_max² / a_min², always at least 12.
    pub fn c_a(&self) -> T {
        let two: T = real(2.0);
        let six: T = real(6.0);
        two * self.a_max * six * self.a_max * self.a_max / (self.a_min * self.a_min)
    }

    /// The full derivative bound for the multiindex given as a list of mode
    /// indices with multiplicity (|α| = alpha.len()). For |α| = 0 the sharp
    /// spectral bound √3·a_max is returned instead.
    pub fn derivative_bound(&self, alpha: &[usize]) -> T {
        let order = alpha.len() as u32;
        if order == 0 {
            return real::<T>(3.0f64.sqrt()) * self.a_max;
        }
        let ln2: T = real(std::f64::consts::LN_2);
        let factorial: T = real((1..=(order as u64 + 1)).product::<u64>() as f64);
        let ratio = real::<T>(2.0) * self.a_max * self.a_max / (self.a_min * self.a_min * ln2);
        let mut bound =
            factorial * real::<T>(2.0) * self.a_max * real::<T>(6.0) * self.a_max * self.a_max
                / (self.a_min * self.a_min)
                * ratio.powi(order as i32);
        for &i in alpha {
            bound = bound * self.gamma[i];
        }
        bound
    }
}

/// Result of a finite-difference probe of one derivative of the tensor.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeCheck<T> {
    pub fd_norm: T,
    pub bound: T,
}

impl<T: Real> DerivativeCheck<T> {
    /// Whether the probe respects the bound with the standard 5% slack for
    /// finite-difference truncation.
    pub fn passes(&self) -> bool {
        self.fd_norm <= self.bound * real(1.05)
    }
}

/// Central finite-difference approximation of ‖∂ᵧᵅ A‖_F on one tetrahedron,
/// together with the regularity bound it must not exceed. `alpha` lists the
/// differentiated mode indices with multiplicity (|α| ≤ 2).
pub fn fd_tensor_derivative<T: Real>(
    kl: &KlExpansion<T>,
    a: T,
    tet: usize,
    alpha: &[usize],
    y: &[T],
    h: T,
    bounds: &RegularityBounds<T>,
) -> Result<DerivativeCheck<T>> {
    if alpha.len() > 2 {
        return Err(Error::Domain(format!(
            "only derivative orders up to 2 are probed, got |alpha| = {}",
            alpha.len()
        )));
    }
    if h < real(1e-6) || h > real(1e-2) {
        return Err(Error::Domain(format!(
            "finite-difference step {h} outside [1e-6, 1e-2]"
        )));
    }
    kl.check_parameter(y)?;
    for &i in alpha {
        if i == 0 || i > kl.mode_count() {
            return Err(Error::Domain(format!(
                "mode index {i} outside 1..={}",
                kl.mode_count()
            )));
        }
        let yi = y[i - 1];
        if yi.abs() + h > T::one() {
            return Err(Error::Domain(format!(
                "parameter component {yi} too close to the box boundary for step {h}"
            )));
        }
    }

    let tensor_at =
        |y: &[T]| -> Result<Mat3<T>> { diffusion_tensor(kl.value_at_unchecked(tet, y), a) };

    let fd = match alpha {
        [] => tensor_at(y)?,
        [i] => {
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[i - 1] = yp[i - 1] + h;
            ym[i - 1] = ym[i - 1] - h;
            let diff = geom::mat_sub(tensor_at(&yp)?, tensor_at(&ym)?);
            geom::mat_scale(T::one() / (real::<T>(2.0) * h), diff)
        }
        [i, j] if i == j => {
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[i - 1] = yp[i - 1] + h;
            ym[i - 1] = ym[i - 1] - h;
            let two: T = real(2.0);
            let sum = geom::mat_add(tensor_at(&yp)?, tensor_at(&ym)?);
            let diff = geom::mat_sub(sum, geom::mat_scale(two, tensor_at(y)?));
            geom::mat_scale(T::one() / (h * h), diff)
        }
        [i, j] => {
            let shift = |si: T, sj: T| -> Vec<T> {
                let mut ys = y.to_vec();
                ys[i - 1] = ys[i - 1] + si * h;
                ys[j - 1] = ys[j - 1] + sj * h;
                ys
            };
            let one = T::one();
            let pp = tensor_at(&shift(one, one))?;
            let pm = tensor_at(&shift(one, -one))?;
            let mp = tensor_at(&shift(-one, one))?;
            let mm = tensor_at(&shift(-one, -one))?;
            let diff = geom::mat_add(geom::mat_sub(pp, pm), geom::mat_sub(mm, mp));
            geom::mat_scale(T::one() / (real::<T>(4.0) * h * h), diff)
        }
        _ => unreachable!(),
    };

    Ok(DerivativeCheck {
        fd_norm: geom::frobenius(fd),
        bound: bounds.derivative_bound(alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const E1: Vec3<f64> = [1.0, 0.0, 0.0];
    const E2: Vec3<f64> = [0.0, 1.0, 0.0];

    #[test]
    fn tensor_along_x_axis() {
        let a = diffusion_tensor(E1, 0.12).unwrap();
        let expect = [[1.0, 0.0, 0.0], [0.0, 0.12, 0.0], [0.0, 0.0, 0.12]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tensor_along_scaled_y_axis() {
        let a = diffusion_tensor::<f64>([0.0, 2.0, 0.0], 0.12).unwrap();
        let expect = [[0.12, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 0.12]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tensor_action_on_eigen_directions() {
        let v: Vec3<f64> = [3.0, 4.0, 0.0];
        let a = diffusion_tensor(v, 0.12).unwrap();
        let av = geom::mat_vec(a, v);
        for c in 0..3 {
            assert!((av[c] - 5.0 * v[c]).abs() < 1e-12);
        }
        let perp = [-4.0, 3.0, 0.0];
        let ap = geom::mat_vec(a, perp);
        for c in 0..3 {
            assert!((ap[c] - 0.12 * perp[c]).abs() < 1e-12);
        }
        assert_eq!(eigen_range(v, 0.12).unwrap(), (0.12, 5.0));
    }

    #[test]
    fn isotropic_when_norm_equals_a() {
        let (lo, hi) = eigen_range::<f64>([0.12, 0.0, 0.0], 0.12).unwrap();
        assert_eq!((lo, hi), (0.12, 0.12));
        let a = diffusion_tensor::<f64>([0.12, 0.0, 0.0], 0.12).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.12 } else { 0.0 };
                assert!((a[i][j] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn eigen_range_examples() {
        assert_eq!(eigen_range(E1, 0.12).unwrap(), (0.12, 1.0));
        assert_eq!(eigen_range([3.0, 4.0, 0.0], 0.12).unwrap(), (0.12, 5.0));
    }

    #[test]
    fn degenerate_direction_is_rejected() {
        assert!(diffusion_tensor([0.0, 1e-15, 0.0], 0.12).is_err());
        assert!(eigen_range([0.0, 0.0, 0.0], 0.12).is_err());
    }

    #[test]
    fn sign_flip_invariance() {
        let v = [0.3, -1.2, 0.7];
        let a1 = diffusion_tensor(v, 0.12).unwrap();
        let a2 = diffusion_tensor(geom::scale(-1.0, v), 0.12).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a1[i][j], a2[i][j]);
            }
        }
    }

    #[test]
    fn outer_derivative_hand_case() {
        // V(y) = e₁ + y₁ e₂, so ∂₁(VVᵀ) at y = 0 is e₂e₁ᵀ + e₁e₂ᵀ.
        let modes = vec![E1, E2];
        let d = outer_first_derivative(&modes, &[0.0], 1).unwrap();
        let expect = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d[i][j], expect[i][j]);
            }
        }
        assert!((geom::frobenius(d) - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn outer_second_derivative_hand_case() {
        let modes = vec![E1, E2];
        let d = outer_second_derivative(&modes, 1, 1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == 1 && j == 1 { 2.0 } else { 0.0 };
                assert_eq!(d[i][j], expect);
            }
        }
    }

    #[test]
    fn sqnorm_derivatives_hand_case() {
        // C(y) = 1 + y₁² for V(y) = e₁ + y₁ e₂.
        let modes = vec![E1, E2];
        for y1 in [-0.7, 0.0, 0.4] {
            let d = sqnorm_first_derivative(&modes, &[y1], 1).unwrap();
            assert!((d - 2.0 * y1).abs() < 1e-15);
        }
        assert_eq!(sqnorm_second_derivative(&modes, 1, 1).unwrap(), 2.0);
    }

    #[test]
    fn orthogonal_modes_have_zero_mixed_sqnorm_derivative() {
        let modes = vec![E1, E2, [0.0, 0.0, 0.5]];
        assert_eq!(sqnorm_second_derivative(&modes, 1, 2).unwrap(), 0.0);
    }

    #[test]
    fn mode_index_bounds() {
        let modes = vec![E1, E2];
        assert!(outer_first_derivative(&modes, &[0.0], 0).is_err());
        assert!(outer_first_derivative(&modes, &[0.0], 2).is_err());
    }

    #[test]
    fn regularity_constants() {
        let b = RegularityBounds::new(0.5f64, 2.0, vec![1.0, 0.25]).unwrap();
        let c_a = b.c_a();
        assert!((c_a - 2.0 * 2.0 * 6.0 * 4.0 / 0.25).abs() < 1e-12);
        assert!(c_a >= 12.0);
        let mu1 = b.mu(1);
        let expect = 4.0 * 4.0 / (0.25 * std::f64::consts::LN_2) * 0.25;
        assert!((mu1 - expect).abs() < 1e-12);
        assert!(mu1 > 0.0);
    }

    #[test]
    fn zero_order_bound_is_spectral() {
        let b = RegularityBounds::new(1.0, 1.5, vec![1.0]).unwrap();
        assert!((b.derivative_bound(&[]) - 3.0f64.sqrt() * 1.5).abs() < 1e-14);
    }

    #[test]
    fn params_validation() {
        assert!(DiffusionParams::new(0.12, 0.12, 1.2).is_ok());
        assert!(DiffusionParams::new(0.12, 0.5, 1.2).is_err());
        assert!(DiffusionParams::new(0.12, 0.0, 1.2).is_err());
        assert!(DiffusionParams::new(2.0, 0.5, 1.5).is_err());
    }
}
