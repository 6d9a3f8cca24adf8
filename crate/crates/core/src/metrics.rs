//! Evaluation metrics and the reflectance/normal losses used as quality
//! measures.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{PanoError, Result};
use crate::geometry::NormalMap;
use crate::image::{EquirectImage, Mask};
use crate::refine::spherical_gradient;
use crate::render::least_squares_scale;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    /// May be `+inf` (PSNR of identical images).
    pub value: f64,
    pub pixel_count: usize,
    pub mask_coverage: f64,
}

impl MetricReport {
    pub fn new(name: impl Into<String>, value: f64, mask: &Mask) -> Self {
        MetricReport {
            name: name.into(),
            value,
            pixel_count: mask.count(),
            mask_coverage: mask.coverage(),
        }
    }
}

pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let mut s = String::from("name,value,pixel_count,mask_coverage\n");
    for r in reports {
        writeln!(
            s,
            "{},{},{},{}",
            r.name, r.value, r.pixel_count, r.mask_coverage
        )
        .unwrap();
    }
    s
}

fn full_mask(img: &EquirectImage, mask: Option<&Mask>) -> Result<Mask> {
    match mask {
        Some(m) => {
            m.check_dims(img.dims())?;
            Ok(m.clone())
        }
        None => Ok(Mask::new(img.dims(), true)),
    }
}

/// Masked squared error sum and entry count.
fn masked_sse(a: &EquirectImage, b: &EquirectImage, scale: f64, mask: &Mask) -> (f64, usize) {
    let c = a.channels();
    let mut sse = 0.0;
    let mut n = 0;
    for p in 0..a.dims().len() {
        if mask.get(p) {
            for k in 0..c {
                sse += (scale * a.at(p)[k] - b.at(p)[k]).powi(2);
            }
            n += c;
        }
    }
    (sse, n)
}

/// Scale-invariant mean squared error: `mean((s·pred − gt)²)` over masked
/// pixels and channels with `s` the least-squares scale of `pred` onto `gt`.
pub fn smse(pred: &EquirectImage, gt: &EquirectImage, mask: Option<&Mask>) -> Result<f64> {
    pred.same_shape(gt)?;
    let mask = full_mask(pred, mask)?;
    if mask.count() == 0 {
        return Err(PanoError::domain("empty mask"));
    }
    let s = least_squares_scale(pred, gt, Some(&mask))?;
    let (sse, n) = masked_sse(pred, gt, s, &mask);
    Ok(sse / n as f64)
}

/// Mean angular error in degrees between two normal maps.
pub fn mae_degrees(pred: &NormalMap, gt: &NormalMap, mask: Option<&Mask>) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(PanoError::mismatch(gt.dims(), pred.dims()));
    }
    let mask = full_mask(&pred.normals, mask)?;
    if mask.count() == 0 {
        return Err(PanoError::domain("empty mask"));
    }
    let sum: f64 = (0..pred.dims().len())
        .filter(|&p| mask.get(p))
        .map(|p| {
            pred.normal(p)
                .dot(&gt.normal(p))
                .clamp(-1.0, 1.0)
                .acos()
                .to_degrees()
        })
        .sum();
    Ok(sum / mask.count() as f64)
}

/// `10·log₁₀(peak² / MSE)`; `+inf` when the images agree exactly. `peak`
/// defaults to the largest ground-truth value on the mask.
pub fn psnr(
    pred: &EquirectImage,
    gt: &EquirectImage,
    mask: Option<&Mask>,
    peak: Option<f64>,
) -> Result<f64> {
    pred.same_shape(gt)?;
    let mask = full_mask(pred, mask)?;
    if mask.count() == 0 {
        return Err(PanoError::domain("empty mask"));
    }
    let peak = match peak {
        Some(p) => p,
        None => (0..gt.dims().len())
            .filter(|&p| mask.get(p))
            .flat_map(|p| gt.at(p).iter().copied())
            .fold(f64::NEG_INFINITY, f64::max),
    };
    if !(peak > 0.0) {
        return Err(PanoError::domain(format!(
            "PSNR peak must be positive, got {peak}"
        )));
    }
    let (sse, n) = masked_sse(pred, gt, 1.0, &mask);
    let mse = sse / n as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    })
}

/// `‖s·R − R*‖² + ‖s·∇R − ∇R*‖₁` over the whole image, `s` the
/// least-squares scale of `pred` onto `gt`.
pub fn loss_reflectance(pred: &EquirectImage, gt: &EquirectImage) -> Result<f64> {
    pred.same_shape(gt)?;
    let s = least_squares_scale(pred, gt, None)?;
    let data: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (s * a - b).powi(2))
        .sum();
    let (gp, gg) = (spherical_gradient(pred), spherical_gradient(gt));
    let grad: f64 = [(&gp.du, &gg.du), (&gp.dv, &gg.dv)]
        .iter()
        .flat_map(|(a, b)| a.data().iter().zip(b.data()))
        .map(|(a, b)| (s * a - b).abs())
        .sum();
    Ok(data + grad)
}

/// `Σ_p −n_p·n*_p + ‖∇N − ∇N*‖₁`, summed over pixels.
pub fn loss_normal(pred: &NormalMap, gt: &NormalMap) -> Result<f64> {
    pred.normals.same_shape(&gt.normals)?;
    let cos: f64 = (0..pred.dims().len())
        .map(|p| -pred.normal(p).dot(&gt.normal(p)))
        .sum();
    let (gp, gg) = (
        spherical_gradient(&pred.normals),
        spherical_gradient(&gt.normals),
    );
    let grad: f64 = [(&gp.du, &gg.du), (&gp.dv, &gg.dv)]
        .iter()
        .flat_map(|(a, b)| a.data().iter().zip(b.data()))
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(cos + grad)
}
