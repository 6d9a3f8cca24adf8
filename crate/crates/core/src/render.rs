//! Diffuse shading from light-field illumination maps.
//!
//! The shading of a surface point is the cosine-weighted sum of the
//! illumination map reconstructed at that point. Helpers here also rescale
//! and recombine reflectance and shading, and render mirror-sphere probes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envlight::{IlluminationBuilder, IlluminationMap, PointLightSet};
use crate::equirect::{
    dir_to_pixel_raw, pixel_solid_angle, sample_into, CameraRig, DirectionTable, SampleMode,
    SphereDir, Vec3,
};
use crate::error::{PanoError, Result};
use crate::geometry::NormalMap;
use crate::image::{Dims, EquirectImage, Mask};
use crate::stereo::DepthMap;

const UNIT_TOLERANCE: f64 = 1e-6;

/// How illumination-map pixels are weighted in the shading sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Each pixel weighted by its solid angle.
    #[default]
    SolidAngle,
    /// Every pixel weighted equally by `4π / (H·W)`, the plain unweighted sum
    /// rescaled to the sphere. Over-counts the poles.
    Uniform,
}

impl std::str::FromStr for Weighting {
    type Err = PanoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "solid_angle" => Ok(Weighting::SolidAngle),
            "uniform" => Ok(Weighting::Uniform),
            _ => Err(PanoError::domain(format!("unknown weighting {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Resolution of the per-pixel illumination maps.
    pub illum_resolution: Dims,
    pub weighting: Weighting,
    /// Shade every `stride`-th pixel and bilinearly fill the rest.
    pub stride: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            illum_resolution: Dims {
                height: 128,
                width: 256,
            },
            weighting: Weighting::SolidAngle,
            stride: 1,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        Dims::new(self.illum_resolution.height, self.illum_resolution.width)?;
        if self.stride == 0 {
            return Err(PanoError::domain("stride must be at least 1"));
        }
        Ok(())
    }
}

/// Per-row pixel weights for a map resolution.
pub fn row_weights(dims: Dims, weighting: Weighting) -> Vec<f64> {
    match weighting {
        Weighting::SolidAngle => (0..dims.height)
            .map(|v| pixel_solid_angle(v, dims))
            .collect(),
        Weighting::Uniform => {
            vec![4.0 * std::f64::consts::PI / dims.len() as f64; dims.height]
        }
    }
}

fn check_unit(n: &Vec3) -> Result<()> {
    if (n.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(PanoError::domain(format!(
            "normal has length {}, expected 1",
            n.norm()
        )));
    }
    Ok(())
}

/// `Σ_j c_j · max(l_j·n, 0) · w_j` over the map's pixels.
pub fn shade_point(map: &IlluminationMap, n: &Vec3, weighting: Weighting) -> Result<[f64; 3]> {
    check_unit(n)?;
    let dims = map.dims();
    let table = DirectionTable::new(dims);
    let weights = row_weights(dims, weighting);
    let mut s = [0.0; 3];
    for v in 0..dims.height {
        for u in 0..dims.width {
            let p = dims.index(u, v);
            let cos = table.dir(p).dot(n);
            if cos > 0.0 {
                let c = map.radiance.at(p);
                let k = cos * weights[v];
                for i in 0..3 {
                    s[i] += c[i] * k;
                }
            }
        }
    }
    Ok(s)
}

/// Reusable state for shading many points against one light field.
pub struct Shader {
    builder: IlluminationBuilder,
    weights: Vec<f64>,
    wanted: Vec<bool>,
}

impl Shader {
    pub fn new(dims: Dims, weighting: Weighting) -> Self {
        Shader {
            builder: IlluminationBuilder::new(dims),
            weights: row_weights(dims, weighting),
            wanted: vec![false; dims.len()],
        }
    }

    /// Shading at `point` with unit normal `n`. Only map pixels in front of
    /// the surface are resolved.
    pub fn shade(&mut self, lights: &PointLightSet, point: &Vec3, n: &Vec3) -> Result<[f64; 3]> {
        check_unit(n)?;
        let dims = self.builder.dims();
        let table = self.builder.table();
        for (p, w) in self.wanted.iter_mut().enumerate() {
            *w = table.dir(p).dot(n) > 0.0;
        }
        let (idx, _) = self
            .builder
            .light_indices_where(lights, point, Some(&self.wanted))?;
        let table = self.builder.table();
        let mut s = [0.0; 3];
        for v in 0..dims.height {
            let w = self.weights[v];
            for u in 0..dims.width {
                let p = dims.index(u, v);
                if !self.wanted[p] {
                    continue;
                }
                let k = table.dir(p).dot(n) * w;
                let c = &lights.lights()[idx[p] as usize].intensity;
                for i in 0..3 {
                    s[i] += c[i] * k;
                }
            }
        }
        Ok(s)
    }
}

/// Sample positions along one axis for a stride: every `stride`-th index,
/// plus the last index when `closed` (rows) so interpolation never
/// extrapolates.
fn stride_samples(len: usize, stride: usize, closed: bool) -> Vec<usize> {
    let mut s: Vec<usize> = (0..len).step_by(stride).collect();
    if closed && *s.last().unwrap() != len - 1 {
        s.push(len - 1);
    }
    s
}

/// Shading map for a depth/normal pair lit by a light field.
///
/// Each shaded pixel `i` is lifted to `x_i = depth · ray`, an illumination
/// map is reconstructed there and shaded with the pixel's normal. With
/// `stride > 1` the skipped pixels are bilinearly interpolated (azimuth
/// wraps).
pub fn render_shading(
    lights: &PointLightSet,
    depth: &DepthMap,
    normals: &NormalMap,
    _rig: &CameraRig,
    cfg: &RenderConfig,
) -> Result<EquirectImage> {
    cfg.validate()?;
    let dims = depth.dims();
    if normals.dims() != dims {
        return Err(PanoError::mismatch(dims, normals.dims()));
    }
    if let Some(p) = depth.values.data().iter().position(|&d| !(d > 0.0)) {
        return Err(PanoError::domain(format!(
            "depth must be dense and positive (pixel {p})"
        )));
    }
    if lights.is_empty() {
        return Err(PanoError::domain("light field is empty"));
    }
    let table = DirectionTable::new(dims);
    let rows = stride_samples(dims.height, cfg.stride, true);
    let cols = stride_samples(dims.width, cfg.stride, false);

    let shaded: Vec<Vec<[f64; 3]>> = rows
        .par_iter()
        .map_init(
            || Shader::new(cfg.illum_resolution, cfg.weighting),
            |shader, &v| {
                cols.iter()
                    .map(|&u| {
                        let p = dims.index(u, v);
                        let x = table.dir(p) * depth.depth(p);
                        shader.shade(lights, &x, &normals.normal(p))
                    })
                    .collect::<Result<Vec<_>>>()
            },
        )
        .collect::<Result<_>>()?;

    if cfg.stride == 1 {
        let data = shaded.into_iter().flatten().flatten().collect();
        return EquirectImage::from_vec(dims, 3, data);
    }
    let s = cfg.stride;
    let mut out = EquirectImage::zeros(dims, 3)?;
    for v in 0..dims.height {
        let (r0, tv) = if rows.len() == 1 {
            (0, 0.0)
        } else {
            let r0 = (v / s).min(rows.len() - 2);
            (r0, (v - rows[r0]) as f64 / (rows[r0 + 1] - rows[r0]) as f64)
        };
        let r1 = (r0 + 1).min(rows.len() - 1);
        for u in 0..dims.width {
            let c0 = u / s;
            let c1 = (c0 + 1) % cols.len();
            let span = if c0 + 1 == cols.len() {
                dims.width - cols[c0]
            } else {
                s
            };
            let tu = (u - cols[c0]) as f64 / span as f64;
            let px = out.pixel_mut(u, v);
            for i in 0..3 {
                let top = shaded[r0][c0][i] * (1.0 - tu) + shaded[r0][c1][i] * tu;
                let bottom = shaded[r1][c0][i] * (1.0 - tu) + shaded[r1][c1][i] * tu;
                px[i] = top * (1.0 - tv) + bottom * tv;
            }
        }
    }
    Ok(out)
}

/// `Σ a·b / Σ a·a` over masked pixels with all channels pooled: the scalar
/// that best maps `a` onto `b`.
pub fn least_squares_scale(
    a: &EquirectImage,
    b: &EquirectImage,
    mask: Option<&Mask>,
) -> Result<f64> {
    a.same_shape(b)?;
    if let Some(m) = mask {
        m.check_dims(a.dims())?;
    }
    let c = a.channels();
    let (num, den) = a
        .data()
        .chunks_exact(c)
        .zip(b.data().chunks_exact(c))
        .enumerate()
        .filter(|(p, _)| mask.is_none_or(|m| m.get(*p)))
        .fold((0.0, 0.0), |(num, den), (_, (pa, pb))| {
            let ab: f64 = pa.iter().zip(pb).map(|(x, y)| x * y).sum();
            let aa: f64 = pa.iter().map(|x| x * x).sum();
            (num + ab, den + aa)
        });
    if den == 0.0 {
        return Err(PanoError::domain(
            "least-squares scale of an all-zero image",
        ));
    }
    Ok(num / den)
}

/// `s · (R ⊙ S)`.
pub fn reconstruct_image(
    reflectance: &EquirectImage,
    shading: &EquirectImage,
    s: f64,
) -> Result<EquirectImage> {
    reflectance.same_shape(shading)?;
    let data = reflectance
        .data()
        .iter()
        .zip(shading.data())
        .map(|(r, sh)| s * r * sh)
        .collect();
    EquirectImage::from_vec(reflectance.dims(), reflectance.channels(), data)
}

/// An orthographic rendering of a mirror sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB, top row first.
    pub rgb: Vec<f64>,
    /// Pixels covered by the sphere.
    pub coverage: Vec<bool>,
}

/// Orthographic camera basis for a viewing direction: `(right, up)`.
/// `up` follows +Y unless the view is (nearly) vertical.
pub fn view_basis(view: &Vec3) -> (Vec3, Vec3) {
    let world_up = if view.y.abs() > 1.0 - 1e-9 {
        Vec3::z()
    } else {
        Vec3::y()
    };
    let right = view.cross(&world_up).normalize();
    let up = right.cross(view);
    (right, up)
}

/// Mirror reflection of `d` about unit normal `n`.
#[inline]
pub fn reflect(d: &Vec3, n: &Vec3) -> Vec3 {
    d - n * (2.0 * d.dot(n))
}

/// Renders a perfect mirror sphere placed at `center` and viewed
/// orthographically along `view`. Each covered pixel reflects the view
/// direction about the sphere normal and looks up the illumination map
/// reconstructed at `center` (bilinear).
pub fn render_mirror_probe(
    lights: &PointLightSet,
    center: &Vec3,
    radius: f64,
    view: &SphereDir,
    out: (usize, usize),
    probe_dims: Dims,
) -> Result<(ProbeImage, IlluminationMap)> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(PanoError::domain("probe radius must be positive"));
    }
    let (height, width) = out;
    if height == 0 || width == 0 {
        return Err(PanoError::domain("probe image must be non-empty"));
    }
    let map = IlluminationBuilder::new(probe_dims).reconstruct(lights, center)?;
    let d = view.vec();
    let (right, up) = view_basis(&d);
    let mut rgb = vec![0.0; height * width * 3];
    let mut coverage = vec![false; height * width];
    for i in 0..height {
        let y = 1.0 - 2.0 * (i as f64 + 0.5) / height as f64;
        for j in 0..width {
            let x = 2.0 * (j as f64 + 0.5) / width as f64 - 1.0;
            let rr = x * x + y * y;
            if rr > 1.0 {
                continue;
            }
            let n = right * x + up * y - d * (1.0 - rr).sqrt();
            let r = reflect(&d, &n);
            let (u, v) = dir_to_pixel_raw(&r, probe_dims);
            let k = i * width + j;
            sample_into(
                &map.radiance,
                u,
                v,
                SampleMode::Bilinear,
                &mut rgb[3 * k..3 * k + 3],
            );
            coverage[k] = true;
        }
    }
    Ok((
        ProbeImage {
            width,
            height,
            rgb,
            coverage,
        },
        map,
    ))
}
