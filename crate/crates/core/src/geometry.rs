//! Axis-aligned boxes, their Gaussian embedding, and the Wasserstein-based
//! regression losses built on top of it.
//!
//! A box `(cx, cy, w, h)` is modelled as the 2-D Gaussian with mean `(cx, cy)`
//! and covariance `diag(w²/4, h²/4)`. The squared 2-Wasserstein distance
//! between two such Gaussians has a closed form because the covariances
//! commute, which is what [`wasserstein_closed`] evaluates. The general
//! matrix form lives in [`wasserstein_general`] and is kept as an
//! independent route for cross-checking.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Axis-aligned box in center form, pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    /// Builds a box from its top-left corner and size.
    pub fn from_ltwh(left: f64, top: f64, w: f64, h: f64) -> Self {
        Self::new(left + w / 2.0, top + h / 2.0, w, h)
    }

    /// Checks the box invariants: finite fields, non-negative size.
    pub fn validate(&self) -> Result<(), GeometryError> {
        if ![self.cx, self.cy, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(GeometryError::NonFinite);
        }
        if self.w < 0.0 || self.h < 0.0 {
            return Err(GeometryError::NegativeSize {
                w: self.w,
                h: self.h,
            });
        }
        Ok(())
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Scales all four coordinates by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.cx * s, self.cy * s, self.w * s, self.h * s)
    }

    /// Intersection with the rectangle `[x0, x1] × [y0, y1]`; empty results
    /// collapse to a zero-size box on the rectangle boundary.
    pub fn clamp_to(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        let l = self.left().clamp(x0, x1);
        let r = self.right().clamp(x0, x1);
        let t = self.top().clamp(y0, y1);
        let b = self.bottom().clamp(y0, y1);
        let (l, r) = if r < l { (l, l) } else { (l, r) };
        let (t, b) = if b < t { (t, t) } else { (t, b) };
        Self::new((l + r) / 2.0, (t + b) / 2.0, r - l, b - t)
    }

    /// The box as a Gaussian: mean at the center, covariance `diag(w²/4, h²/4)`.
    pub fn to_gaussian(&self) -> GaussianBox {
        GaussianBox {
            mu: [self.cx, self.cy],
            sigma: [[self.w * self.w / 4.0, 0.0], [0.0, self.h * self.h / 4.0]],
        }
    }
}

/// Gaussian with mean `mu` and symmetric PSD covariance `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBox {
    pub mu: [f64; 2],
    pub sigma: [[f64; 2]; 2],
}

type Mat2 = [[f64; 2]; 2];

const PSD_TOL: f64 = 1e-9;

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

fn check_psd(m: &Mat2) -> Result<(), GeometryError> {
    let scale = 1.0 + m[0][0].abs().max(m[1][1].abs()).max(m[0][1].abs());
    let all_finite = m.iter().flatten().all(|v| v.is_finite());
    let symmetric = (m[0][1] - m[1][0]).abs() <= PSD_TOL * scale;
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !all_finite
        || !symmetric
        || m[0][0] < -PSD_TOL * scale
        || m[1][1] < -PSD_TOL * scale
        || det < -PSD_TOL * scale * scale
    {
        return Err(GeometryError::NotPsd);
    }
    Ok(())
}

/// Principal square root of a symmetric PSD 2×2 matrix.
///
/// Diagonal inputs take elementwise roots. Otherwise uses
/// `sqrt(A) = (A + s·I) / t` with `s = sqrt(det A)`, `t = sqrt(tr A + 2s)`.
fn sqrt_psd(m: &Mat2) -> Mat2 {
    if m[0][1] == 0.0 && m[1][0] == 0.0 {
        return [
            [m[0][0].max(0.0).sqrt(), 0.0],
            [0.0, m[1][1].max(0.0).sqrt()],
        ];
    }
    let s = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).max(0.0).sqrt();
    let t = (m[0][0] + m[1][1] + 2.0 * s).max(0.0).sqrt();
    if t == 0.0 {
        return [[0.0; 2]; 2];
    }
    [
        [(m[0][0] + s) / t, m[0][1] / t],
        [m[1][0] / t, (m[1][1] + s) / t],
    ]
}

/// Trace of the principal square root of a symmetric PSD 2×2 matrix.
fn trace_sqrt_psd(m: &Mat2) -> f64 {
    if m[0][1] == 0.0 && m[1][0] == 0.0 {
        return m[0][0].max(0.0).sqrt() + m[1][1].max(0.0).sqrt();
    }
    let s = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).max(0.0).sqrt();
    (m[0][0] + m[1][1] + 2.0 * s).max(0.0).sqrt()
}

/// Squared Wasserstein distance between two Gaussians, general matrix form:
/// `‖μ1−μ2‖² + Tr(Σ1 + Σ2 − 2(Σ1^½ Σ2 Σ1^½)^½)`.
pub fn wasserstein_general(g1: &GaussianBox, g2: &GaussianBox) -> Result<f64, GeometryError> {
    check_psd(&g1.sigma)?;
    check_psd(&g2.sigma)?;
    let dx = g1.mu[0] - g2.mu[0];
    let dy = g1.mu[1] - g2.mu[1];
    let root1 = sqrt_psd(&g1.sigma);
    let inner = mat_mul(&mat_mul(&root1, &g2.sigma), &root1);
    let cross = trace_sqrt_psd(&inner);
    let trace = g1.sigma[0][0] + g1.sigma[1][1] + g2.sigma[0][0] + g2.sigma[1][1];
    Ok(dx * dx + dy * dy + trace - 2.0 * cross)
}

/// Squared Wasserstein distance between two boxes via the commuting-covariance
/// closed form `Δx² + Δy² + (Δw² + Δh²)/4`.
pub fn wasserstein_closed(b1: &BBox, b2: &BBox) -> f64 {
    let dx = b1.cx - b2.cx;
    let dy = b1.cy - b2.cy;
    let dw = b1.w - b2.w;
    let dh = b1.h - b2.h;
    dx * dx + dy * dy + (dw * dw + dh * dh) / 4.0
}

/// Loss weights and the GWD modulation constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_size: f64,
    pub lambda_off: f64,
    pub lambda_gwd: f64,
    pub lambda_l1: f64,
    /// Must be at least 1.
    pub tau: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_size: 0.1,
            lambda_off: 1.0,
            lambda_gwd: 2.0,
            lambda_l1: 0.5,
            tau: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let lambdas = [
            ("lambda_size", self.lambda_size),
            ("lambda_off", self.lambda_off),
            ("lambda_gwd", self.lambda_gwd),
            ("lambda_l1", self.lambda_l1),
        ];
        for (name, v) in lambdas {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(GeometryError::InvalidConfig(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        if !(self.tau >= 1.0 && self.tau.is_finite()) {
            return Err(GeometryError::InvalidConfig(format!(
                "tau must be >= 1, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// `1 − 1/(τ + ln(1 + W²))` as a function of the squared distance.
///
/// Evaluated as `(τ − 1 + f)/(τ + f)` so small losses keep full relative
/// precision.
pub fn gwd_loss_from_w2(w2: f64, tau: f64) -> f64 {
    let f = w2.ln_1p();
    (tau - 1.0 + f) / (tau + f)
}

/// GWD loss between a predicted and a ground-truth box.
pub fn gwd_loss(pred: &BBox, gt: &BBox, cfg: &LossConfig) -> f64 {
    gwd_loss_from_w2(wasserstein_closed(pred, gt), cfg.tau)
}

/// Derivative of the GWD loss (τ = 1) with respect to the unsquared distance `W`:
/// `2W / ((1 + W²)(1 + ln(1 + W²))²)`.
pub fn gwd_gradient_wrt_w(w: f64) -> f64 {
    gwd_gradient_wrt_w_tau(w, 1.0)
}

/// Same as [`gwd_gradient_wrt_w`] for arbitrary `τ`.
pub fn gwd_gradient_wrt_w_tau(w: f64, tau: f64) -> f64 {
    let w2 = w * w;
    let denom = tau + w2.ln_1p();
    2.0 * w / ((1.0 + w2) * denom * denom)
}

/// Gradient of [`gwd_loss`] with respect to the predicted box `(cx, cy, w, h)`.
pub fn gwd_gradient_wrt_box(pred: &BBox, gt: &BBox, cfg: &LossConfig) -> [f64; 4] {
    let w2 = wasserstein_closed(pred, gt);
    let denom = cfg.tau + w2.ln_1p();
    // dL/dW² = 1 / ((1 + W²)(τ + ln(1 + W²))²)
    let dl_dw2 = 1.0 / ((1.0 + w2) * denom * denom);
    [
        dl_dw2 * 2.0 * (pred.cx - gt.cx),
        dl_dw2 * 2.0 * (pred.cy - gt.cy),
        dl_dw2 * 0.5 * (pred.w - gt.w),
        dl_dw2 * 0.5 * (pred.h - gt.h),
    ]
}

/// Heatmap + size + offset objective: `L_k + λ_size·L_size + λ_off·L_off`.
pub fn detection_loss_l1(l_k: f64, l_size: f64, l_off: f64, cfg: &LossConfig) -> f64 {
    l_k + cfg.lambda_size * l_size + cfg.lambda_off * l_off
}

/// Heatmap + GWD + L1 objective: `L_k + λ_gwd·L_gwd + λ_l1·L_1`.
///
/// With `lambda_l1 = 0` this is the GWD-only objective.
pub fn detection_loss_gwd(l_k: f64, l_gwd: f64, l_1: f64, cfg: &LossConfig) -> f64 {
    l_k + cfg.lambda_gwd * l_gwd + cfg.lambda_l1 * l_1
}

/// L1 size regression term: `|Δw| + |Δh|`.
pub fn l1_size_loss(pred: &BBox, gt: &BBox) -> f64 {
    (pred.w - gt.w).abs() + (pred.h - gt.h).abs()
}

/// L1 center offset term: `|Δcx| + |Δcy|`.
pub fn l1_offset_loss(pred: &BBox, gt: &BBox) -> f64 {
    (pred.cx - gt.cx).abs() + (pred.cy - gt.cy).abs()
}

/// Intersection over union; zero when the union has no area.
pub fn iou(b1: &BBox, b2: &BBox) -> f64 {
    let iw = (b1.right().min(b2.right()) - b1.left().max(b2.left())).max(0.0);
    let ih = (b1.bottom().min(b2.bottom()) - b1.top().max(b2.top())).max(0.0);
    let inter = iw * ih;
    let union = b1.area() + b2.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gaussian_embedding() {
        let g = BBox::new(0.0, 0.0, 0.0, 0.0).to_gaussian();
        assert_eq!(g.mu, [0.0, 0.0]);
        assert_eq!(g.sigma, [[0.0, 0.0], [0.0, 0.0]]);

        let g = BBox::new(2.0, 3.0, 4.0, 6.0).to_gaussian();
        assert_eq!(g.mu, [2.0, 3.0]);
        assert_eq!(g.sigma, [[4.0, 0.0], [0.0, 9.0]]);

        let g = BBox::new(1.0, 1.0, 2.0, 2.0).to_gaussian();
        assert_eq!(g.sigma, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn general_form_examples() {
        let g = GaussianBox {
            mu: [1.0, 2.0],
            sigma: [[3.0, 0.5], [0.5, 2.0]],
        };
        assert!(close(wasserstein_general(&g, &g).unwrap(), 0.0, 1e-12));

        let g1 = GaussianBox {
            mu: [0.0, 0.0],
            sigma: [[4.0, 0.0], [0.0, 4.0]],
        };
        let g2 = GaussianBox {
            mu: [3.0, 4.0],
            ..g1
        };
        assert!(close(wasserstein_general(&g1, &g2).unwrap(), 25.0, 1e-12));

        let g1 = GaussianBox {
            mu: [0.0, 0.0],
            sigma: [[4.0, 0.0], [0.0, 0.0]],
        };
        let g2 = GaussianBox {
            mu: [0.0, 0.0],
            sigma: [[16.0, 0.0], [0.0, 0.0]],
        };
        assert!(close(wasserstein_general(&g1, &g2).unwrap(), 4.0, 1e-12));
    }

    #[test]
    fn general_form_rejects_non_psd() {
        let ok = GaussianBox {
            mu: [0.0, 0.0],
            sigma: [[1.0, 0.0], [0.0, 1.0]],
        };
        let neg = GaussianBox {
            mu: [0.0, 0.0],
            sigma: [[-1.0, 0.0], [0.0, 1.0]],
        };
        let indefinite = GaussianBox {
            mu: [0.0, 0.0],
            sigma: [[1.0, 2.0], [2.0, 1.0]],
        };
        let asymmetric = GaussianBox {
            mu: [0.0, 0.0],
            sigma: [[1.0, 0.5], [0.0, 1.0]],
        };
        for bad in [neg, indefinite, asymmetric] {
            assert_eq!(wasserstein_general(&ok, &bad), Err(GeometryError::NotPsd));
            assert_eq!(wasserstein_general(&bad, &ok), Err(GeometryError::NotPsd));
        }
    }

    #[test]
    fn general_form_rotated_covariance() {
        // Equal covariances cancel in the trace term regardless of rotation.
        let sigma = [[5.0, 2.0], [2.0, 3.0]];
        let g1 = GaussianBox {
            mu: [0.0, 0.0],
            sigma,
        };
        let g2 = GaussianBox {
            mu: [1.0, 1.0],
            sigma,
        };
        assert!(close(wasserstein_general(&g1, &g2).unwrap(), 2.0, 1e-12));
        // sqrt_psd really squares back.
        let r = sqrt_psd(&sigma);
        let sq = mat_mul(&r, &r);
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(sq[i][j], sigma[i][j], 1e-12));
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let b = BBox::new(5.0, 6.0, 7.0, 8.0);
        assert_eq!(wasserstein_closed(&b, &b), 0.0);
        assert_eq!(
            wasserstein_closed(
                &BBox::new(0.0, 0.0, 4.0, 4.0),
                &BBox::new(3.0, 4.0, 4.0, 4.0)
            ),
            25.0
        );
        assert_eq!(
            wasserstein_closed(
                &BBox::new(0.0, 0.0, 2.0, 2.0),
                &BBox::new(0.0, 0.0, 6.0, 2.0)
            ),
            4.0
        );
    }

    #[test]
    fn loss_examples() {
        let cfg = LossConfig::default();
        let b = BBox::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(gwd_loss(&b, &b, &cfg), 0.0);
        let e = std::f64::consts::E;
        assert!(close(gwd_loss_from_w2(e - 1.0, 1.0), 0.5, 1e-15));
        assert!(close(gwd_loss_from_w2(e.powi(3) - 1.0, 1.0), 0.75, 1e-15));
    }

    #[test]
    fn gradient_wrt_w_examples() {
        assert_eq!(gwd_gradient_wrt_w(0.0), 0.0);
        let ln2 = std::f64::consts::LN_2;
        let expected = 2.0 / (2.0 * (1.0 + ln2) * (1.0 + ln2));
        assert!(close(gwd_gradient_wrt_w(1.0), expected, 1e-15));
        assert!(gwd_gradient_wrt_w(100.0) < 1e-3);
    }

    #[test]
    fn gradient_wrt_box_vanishes_at_target() {
        let b = BBox::new(3.0, 4.0, 5.0, 6.0);
        assert_eq!(
            gwd_gradient_wrt_box(&b, &b, &LossConfig::default()),
            [0.0; 4]
        );
    }

    #[test]
    fn combined_losses() {
        let cfg = LossConfig::default();
        assert_eq!(detection_loss_l1(0.0, 0.0, 0.0, &cfg), 0.0);
        assert!(close(detection_loss_l1(1.0, 2.0, 0.5, &cfg), 1.7, 1e-12));
        assert_eq!(detection_loss_l1(1.0, 0.0, 0.0, &cfg), 1.0);

        assert_eq!(detection_loss_gwd(0.0, 0.0, 0.0, &cfg), 0.0);
        assert!(close(detection_loss_gwd(1.0, 0.5, 2.0, &cfg), 3.0, 1e-12));
        let no_l1 = LossConfig {
            lambda_l1: 0.0,
            ..cfg
        };
        assert_eq!(detection_loss_gwd(1.0, 0.5, 123.0, &no_l1), 1.0 + 2.0 * 0.5);
    }

    #[test]
    fn l1_terms() {
        let a = BBox::new(10.0, 10.0, 8.0, 6.0);
        assert_eq!(l1_size_loss(&a, &a), 0.0);
        let b = BBox::new(10.0, 10.0, 11.0, 5.0);
        assert_eq!(l1_size_loss(&a, &b), 4.0);
        assert_eq!(l1_offset_loss(&a, &BBox::new(12.0, 7.0, 8.0, 6.0)), 5.0);
    }

    #[test]
    fn equal_l1_different_iou() {
        let gt = BBox::new(0.0, 0.0, 10.0, 10.0);
        // Both predictions are off by 4 px of total size error.
        let wider = BBox::new(0.0, 0.0, 14.0, 10.0);
        let mixed = BBox::new(0.0, 0.0, 12.0, 8.0);
        assert_eq!(l1_size_loss(&wider, &gt), l1_size_loss(&mixed, &gt));
        assert!((iou(&wider, &gt) - iou(&mixed, &gt)).abs() > 1e-3);
        // GWD separates them too.
        assert_ne!(
            wasserstein_closed(&wider, &gt),
            wasserstein_closed(&mixed, &gt)
        );
    }

    #[test]
    fn iou_examples() {
        let b = BBox::new(3.0, 3.0, 2.0, 2.0);
        assert_eq!(iou(&b, &b), 1.0);
        assert_eq!(iou(&b, &BBox::new(30.0, 3.0, 2.0, 2.0)), 0.0);
        let a = BBox::new(0.5, 0.5, 1.0, 1.0);
        let c = BBox::new(1.0, 0.5, 1.0, 1.0);
        assert!(close(iou(&a, &c), 1.0 / 3.0, 1e-15));
        let z = BBox::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(iou(&z, &z), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let bad = LossConfig {
            tau: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = LossConfig {
            lambda_gwd: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn clamp_to_rect() {
        let b = BBox::from_ltwh(-5.0, 2.0, 10.0, 4.0);
        let c = b.clamp_to(0.0, 0.0, 100.0, 100.0);
        assert_eq!((c.left(), c.top(), c.w, c.h), (0.0, 2.0, 5.0, 4.0));
        let outside = BBox::new(200.0, 200.0, 4.0, 4.0).clamp_to(0.0, 0.0, 100.0, 100.0);
        assert_eq!((outside.w, outside.h), (0.0, 0.0));
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..1024.0f64, 0.0..1024.0f64, 0.0..512.0f64, 0.0..512.0f64)
            .prop_map(|(cx, cy, w, h)| BBox::new(cx, cy, w, h))
    }

    proptest! {
        #[test]
        fn closed_form_symmetric(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(wasserstein_closed(&a, &b), wasserstein_closed(&b, &a));
        }

        #[test]
        fn closed_form_zero_iff_equal(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(wasserstein_closed(&a, &b) == 0.0, a == b);
        }

        #[test]
        fn closed_form_homogeneous(a in arb_box(), b in arb_box(), s in 0.01..50.0f64) {
            let w = wasserstein_closed(&a, &b).sqrt();
            let ws = wasserstein_closed(&a.scaled(s), &b.scaled(s)).sqrt();
            prop_assert!((ws - s * w).abs() <= 1e-9 * (1.0 + s * w));
        }

        #[test]
        fn closed_matches_general(a in arb_box(), b in arb_box()) {
            let w2 = wasserstein_closed(&a, &b);
            let g = wasserstein_general(&a.to_gaussian(), &b.to_gaussian()).unwrap();
            prop_assert!((w2 - g).abs() <= 1e-9 * (1.0 + w2));
        }

        #[test]
        fn loss_in_unit_interval(a in arb_box(), b in arb_box()) {
            let l = gwd_loss(&a, &b, &LossConfig::default());
            prop_assert!((0.0..1.0).contains(&l));
        }

        #[test]
        fn loss_monotone_in_w2(x in 0.0..1e6f64, dx in 0.0..1e3f64) {
            prop_assert!(gwd_loss_from_w2(x + dx, 1.0) >= gwd_loss_from_w2(x, 1.0));
        }
    }
}
