//! Analytic box rooms with exact ground truth.
//!
//! A scene is an axis-aligned box centered at the origin whose six faces are
//! Lambertian with per-face albedo (optionally modulated by a smooth random
//! texture), lit by rectangular emitters lying on faces plus a uniform
//! ambient term. The forward model is one bounce: a surface point's shading
//! is ambient plus the direct irradiance from every emitter, and its
//! radiance is `albedo · shading`. Pixels that see an emitter carry unit
//! reflectance and the emitter's radiance as shading, so `image =
//! reflectance ⊙ shading` holds everywhere.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equirect::{azimuth_of_col, dir_from_angles, polar_of_row, CameraRig, SphereDir, Vec3};
use crate::error::{PanoError, Result};
use crate::geometry::NormalMap;
use crate::image::{Dims, EquirectImage, Mask};
use crate::stereo::{nadir_angle_of_row, DepthMap, DisparityMap};

/// Largest solid angle a quadrature sub-patch may subtend.
pub const QUADRATURE_MAX_SOLID_ANGLE: f64 = 1e-3;
const QUADRATURE_MAX_DEPTH: u32 = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-z")]
    NegZ,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::PosX,
        Face::NegX,
        Face::PosY,
        Face::NegY,
        Face::PosZ,
        Face::NegZ,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn axis(self) -> usize {
        self.id() / 2
    }

    pub fn sign(self) -> f64 {
        if self.id().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Normal pointing into the room.
    pub fn inward_normal(self) -> Vec3 {
        let mut n = Vec3::zeros();
        n[self.axis()] = -self.sign();
        n
    }

    /// The two in-face axes, in increasing order. Face coordinates `(a, b)`
    /// are the world coordinates along these axes.
    pub fn tangent_axes(self) -> (usize, usize) {
        match self.axis() {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }

    fn from_axis(axis: usize, sign: f64) -> Face {
        Face::ALL[2 * axis + usize::from(sign < 0.0)]
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = ["+x", "-x", "+y", "-y", "+z", "-z"][self.id()];
        f.write_str(s)
    }
}

impl FromStr for Face {
    type Err = PanoError;

    fn from_str(s: &str) -> Result<Self> {
        Face::ALL
            .into_iter()
            .find(|f| f.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| PanoError::domain(format!("unknown face {s:?}")))
    }
}

/// Rectangular Lambertian emitter on a face: `a ∈ [a0, a1]`, `b ∈ [b0, b1]`
/// in the face's tangent coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    pub face: Face,
    pub rect: [f64; 4],
    pub radiance: [f64; 3],
}

impl Emitter {
    pub fn area(&self) -> f64 {
        (self.rect[1] - self.rect[0]) * (self.rect[3] - self.rect[2])
    }

    fn contains(&self, a: f64, b: f64) -> bool {
        a >= self.rect[0] && a <= self.rect[1] && b >= self.rect[2] && b <= self.rect[3]
    }

    /// World-space corner in face coordinates `(a, b)`.
    pub fn point(&self, half: &[f64; 3], a: f64, b: f64) -> Vec3 {
        let (ia, ib) = self.face.tangent_axes();
        let mut p = Vec3::zeros();
        p[self.face.axis()] = self.face.sign() * half[self.face.axis()];
        p[ia] = a;
        p[ib] = b;
        p
    }

    fn corners(&self, half: &[f64; 3]) -> [Vec3; 4] {
        let [a0, a1, b0, b1] = self.rect;
        [
            self.point(half, a0, b0),
            self.point(half, a1, b0),
            self.point(half, a1, b1),
            self.point(half, a0, b1),
        ]
    }
}

/// Smooth random albedo modulation: value noise on a square lattice of the
/// given cell size, quintic interpolation, multiplying albedo by
/// `1 - amplitude · noise`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub cell: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for Texture {
    fn default() -> Self {
        Texture {
            cell: 0.04,
            amplitude: 0.6,
            seed: 7,
        }
    }
}

impl Texture {
    fn lattice(&self, face: Face, i: i64, j: i64) -> f64 {
        // splitmix64 over (seed, face, i, j)
        let mut z = self
            .seed
            .wrapping_add((face.id() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add((i as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
            .wrapping_add((j as u64).wrapping_mul(0x94D0_49BB_1331_11EB));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn modulation(&self, face: Face, a: f64, b: f64) -> f64 {
        let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
        let (x, y) = (a / self.cell, b / self.cell);
        let (i, j) = (x.floor(), y.floor());
        let (fx, fy) = (fade(x - i), fade(y - j));
        let (i, j) = (i as i64, j as i64);
        let n00 = self.lattice(face, i, j);
        let n10 = self.lattice(face, i + 1, j);
        let n01 = self.lattice(face, i, j + 1);
        let n11 = self.lattice(face, i + 1, j + 1);
        let n0 = n00 + fx * (n10 - n00);
        let n1 = n01 + fx * (n11 - n01);
        1.0 - self.amplitude * (n0 + fy * (n1 - n0))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrradianceMethod {
    /// Closed-form projected solid angle of the emitter polygon.
    #[default]
    Analytic,
    /// Adaptive midpoint quadrature over the emitter with the cos·cos/r²
    /// kernel.
    Quadrature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxScene {
    pub half_extents: [f64; 3],
    /// Indexed by [`Face::id`].
    pub face_albedo: [[f64; 3]; 6],
    #[serde(default)]
    pub emitters: Vec<Emitter>,
    #[serde(default)]
    pub ambient: [f64; 3],
    pub camera_top: [f64; 3],
    #[serde(default)]
    pub texture: Option<Texture>,
    #[serde(default)]
    pub irradiance: IrradianceMethod,
}

impl Default for BoxScene {
    /// A 4 × 2.8 × 5 m room with one ceiling light.
    fn default() -> Self {
        BoxScene {
            half_extents: [2.0, 1.4, 2.5],
            face_albedo: [
                [0.75, 0.45, 0.35],
                [0.35, 0.55, 0.75],
                [0.85, 0.85, 0.80],
                [0.50, 0.40, 0.30],
                [0.40, 0.70, 0.45],
                [0.70, 0.70, 0.40],
            ],
            emitters: vec![Emitter {
                face: Face::PosY,
                rect: [-0.6, 0.6, -0.5, 0.7],
                radiance: [6.0, 5.6, 5.2],
            }],
            ambient: [2.0, 2.0, 2.0],
            camera_top: [0.3, 0.15, -0.2],
            texture: None,
            irradiance: IrradianceMethod::Analytic,
        }
    }
}

/// Result of casting a ray from inside the box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub face: Face,
    pub point: Vec3,
    /// Inward (room-facing) face normal.
    pub normal: Vec3,
}

/// Per-pixel ground truth for one camera position.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub image: EquirectImage,
    pub depth: DepthMap,
    pub normals: NormalMap,
    pub reflectance: EquirectImage,
    pub shading: EquirectImage,
    /// Face id per pixel.
    pub faces: Vec<u8>,
    /// Pixels that see an emitter.
    pub emissive: Mask,
}

/// Top and bottom renders plus top-frame ground truth.
#[derive(Clone, Debug)]
pub struct StereoPair {
    pub top: GroundTruth,
    pub bottom: EquirectImage,
    pub disparity: DisparityMap,
}

impl BoxScene {
    pub fn validate(&self) -> Result<()> {
        if !self.half_extents.iter().all(|&h| h.is_finite() && h > 0.0) {
            return Err(PanoError::domain("half extents must be positive"));
        }
        if !self.inside(&Vec3::from(self.camera_top)) {
            return Err(PanoError::domain("camera must be strictly inside the box"));
        }
        for a in self.face_albedo.iter().flatten() {
            if !(0.0..=1.0).contains(a) {
                return Err(PanoError::domain(format!("albedo {a} outside [0, 1]")));
            }
        }
        if !self.ambient.iter().all(|&a| a >= 0.0 && a.is_finite()) {
            return Err(PanoError::domain("ambient must be non-negative"));
        }
        for (i, e) in self.emitters.iter().enumerate() {
            let (ia, ib) = e.face.tangent_axes();
            let [a0, a1, b0, b1] = e.rect;
            let (ha, hb) = (self.half_extents[ia], self.half_extents[ib]);
            if !(a0 < a1 && b0 < b1 && a0 >= -ha && a1 <= ha && b0 >= -hb && b1 <= hb) {
                return Err(PanoError::domain(format!(
                    "emitter {i} does not fit on face {}",
                    e.face
                )));
            }
            if !e.radiance.iter().all(|&c| c >= 0.0 && c.is_finite()) {
                return Err(PanoError::domain(format!(
                    "emitter {i} has negative radiance"
                )));
            }
        }
        let lit = self.ambient.iter().any(|&a| a > 0.0)
            || self
                .emitters
                .iter()
                .any(|e| e.radiance.iter().any(|&c| c > 0.0));
        if !lit {
            return Err(PanoError::domain("scene needs an emitter or ambient light"));
        }
        if let Some(t) = &self.texture {
            if !(t.cell > 0.0 && (0.0..=1.0).contains(&t.amplitude)) {
                return Err(PanoError::domain(
                    "texture needs cell > 0 and amplitude in [0, 1]",
                ));
            }
        }
        Ok(())
    }

    pub fn inside(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i].abs() < self.half_extents[i])
    }

    pub fn camera(&self) -> Vec3 {
        Vec3::from(self.camera_top)
    }

    /// Parses the key-value format, or JSON when the text starts with `{`.
    ///
    /// ```text
    /// # comment
    /// half_extents = 2 1.4 2.5
    /// camera_top   = 0.3 0.15 -0.2
    /// ambient      = 2 2 2
    /// albedo +x    = 0.75 0.45 0.35       # one line per face
    /// emitter      = +y -0.6 0.6 -0.5 0.7 6 5.6 5.2  # face a0 a1 b0 b1 r g b
    /// texture      = 0.04 0.6 7           # cell amplitude seed, or "off"
    /// irradiance   = analytic             # or quadrature
    /// ```
    ///
    /// Keys not given keep the values of [`BoxScene::default`]; the first
    /// `emitter` line replaces the default emitter list.
    pub fn parse(text: &str) -> Result<Self> {
        let scene = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            parse_key_values(text)?
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Renders this scene in the key-value format.
    pub fn to_config_text(&self) -> String {
        let v = |x: &[f64]| {
            x.iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut s = format!(
            "half_extents = {}\ncamera_top = {}\nambient = {}\n",
            v(&self.half_extents),
            v(&self.camera_top),
            v(&self.ambient)
        );
        for f in Face::ALL {
            s.push_str(&format!("albedo {f} = {}\n", v(&self.face_albedo[f.id()])));
        }
        for e in &self.emitters {
            s.push_str(&format!(
                "emitter = {} {} {}\n",
                e.face,
                v(&e.rect),
                v(&e.radiance)
            ));
        }
        match &self.texture {
            Some(t) => s.push_str(&format!(
                "texture = {} {} {}\n",
                t.cell, t.amplitude, t.seed
            )),
            None => s.push_str("texture = off\n"),
        }
        let m = match self.irradiance {
            IrradianceMethod::Analytic => "analytic",
            IrradianceMethod::Quadrature => "quadrature",
        };
        s.push_str(&format!("irradiance = {m}\n"));
        s
    }

    /// Albedo at a surface point, including texture modulation.
    pub fn albedo_at(&self, face: Face, point: &Vec3) -> [f64; 3] {
        let base = self.face_albedo[face.id()];
        match &self.texture {
            None => base,
            Some(t) => {
                let (ia, ib) = face.tangent_axes();
                let m = t.modulation(face, point[ia], point[ib]);
                base.map(|c| c * m)
            }
        }
    }

    /// The emitter covering a surface point, if any.
    pub fn emitter_at(&self, face: Face, point: &Vec3) -> Option<&Emitter> {
        let (ia, ib) = face.tangent_axes();
        self.emitters
            .iter()
            .find(|e| e.face == face && e.contains(point[ia], point[ib]))
    }

    /// Direct irradiance from one emitter at a surface point with normal `n`.
    pub fn emitter_irradiance(&self, emitter: &Emitter, point: &Vec3, n: &Vec3) -> f64 {
        let en = emitter.face.inward_normal();
        // Same plane: no direct light.
        if (en - n).norm() < 1e-12 {
            return 0.0;
        }
        match self.irradiance {
            IrradianceMethod::Analytic => {
                projected_solid_angle(&emitter.corners(&self.half_extents), point, n)
            }
            IrradianceMethod::Quadrature => {
                let [a0, a1, b0, b1] = emitter.rect;
                quadrature(self, emitter, point, n, (a0, a1, b0, b1), 0)
            }
        }
    }

    /// Shading (ambient + direct) at a non-emissive surface point.
    pub fn shading_at(&self, point: &Vec3, n: &Vec3) -> [f64; 3] {
        let mut s = self.ambient;
        for e in &self.emitters {
            let g = self.emitter_irradiance(e, point, n);
            for c in 0..3 {
                s[c] += e.radiance[c] * g;
            }
        }
        s
    }
}

fn parse_key_values(text: &str) -> Result<BoxScene> {
    let mut scene = BoxScene::default();
    let mut emitters: Option<Vec<Emitter>> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| PanoError::domain(format!("scene line {}: {m}", lineno + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
        let key: Vec<&str> = key.split_whitespace().collect();
        let words: Vec<&str> = value.split_whitespace().collect();
        let nums = |ws: &[&str], n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = ws
                .iter()
                .map(|w| w.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(format!("{e}")))?;
            if v.len() != n {
                return Err(err(format!("expected {n} numbers, got {}", v.len())));
            }
            Ok(v)
        };
        let three = |ws: &[&str]| -> Result<[f64; 3]> {
            let v = nums(ws, 3)?;
            Ok([v[0], v[1], v[2]])
        };
        match key.as_slice() {
            ["half_extents"] => scene.half_extents = three(&words)?,
            ["camera_top"] => scene.camera_top = three(&words)?,
            ["ambient"] => scene.ambient = three(&words)?,
            ["albedo", face] => scene.face_albedo[face.parse::<Face>()?.id()] = three(&words)?,
            ["emitter"] => {
                let face: Face = words
                    .first()
                    .ok_or_else(|| err("emitter needs a face".into()))?
                    .parse()?;
                let v = nums(&words[1..], 7)?;
                emitters.get_or_insert_with(Vec::new).push(Emitter {
                    face,
                    rect: [v[0], v[1], v[2], v[3]],
                    radiance: [v[4], v[5], v[6]],
                });
            }
            ["texture"] => {
                scene.texture = if words == ["off"] {
                    None
                } else {
                    let v = nums(&words, 3)?;
                    Some(Texture {
                        cell: v[0],
                        amplitude: v[1],
                        seed: v[2] as u64,
                    })
                }
            }
            ["irradiance"] => {
                scene.irradiance = match words.as_slice() {
                    ["analytic"] => IrradianceMethod::Analytic,
                    ["quadrature"] => IrradianceMethod::Quadrature,
                    _ => return Err(err(format!("unknown irradiance method {value:?}"))),
                }
            }
            _ => return Err(err(format!("unknown key {:?}", key.join(" ")))),
        }
    }
    if let Some(e) = emitters {
        scene.emitters = e;
    }
    Ok(scene)
}

/// Projected solid angle of a planar polygon seen from `x` with normal `n`
/// (Lambert's formula). Irradiance from a uniform Lambertian emitter is its
/// radiance times this value.
pub fn projected_solid_angle(corners: &[Vec3], x: &Vec3, n: &Vec3) -> f64 {
    let r: Vec<Vec3> = corners.iter().map(|c| (c - x).normalize()).collect();
    let mut sum = 0.0;
    for i in 0..r.len() {
        let (a, b) = (&r[i], &r[(i + 1) % r.len()]);
        let cross = a.cross(b);
        let len = cross.norm();
        if len < 1e-15 {
            continue;
        }
        let angle = len.atan2(a.dot(b));
        sum += angle * n.dot(&(cross / len));
    }
    0.5 * sum.abs()
}

fn quadrature(
    scene: &BoxScene,
    e: &Emitter,
    x: &Vec3,
    n: &Vec3,
    (a0, a1, b0, b1): (f64, f64, f64, f64),
    depth: u32,
) -> f64 {
    let (am, bm) = (0.5 * (a0 + a1), 0.5 * (b0 + b1));
    let area = (a1 - a0) * (b1 - b0);
    let r = e.point(&scene.half_extents, am, bm) - x;
    let d2 = r.norm_squared();
    let d = d2.sqrt();
    let cos_e = (-r).dot(&e.face.inward_normal()) / d;
    let solid = area * cos_e.max(0.0) / d2;
    if solid > QUADRATURE_MAX_SOLID_ANGLE && depth < QUADRATURE_MAX_DEPTH {
        return quadrature(scene, e, x, n, (a0, am, b0, bm), depth + 1)
            + quadrature(scene, e, x, n, (am, a1, b0, bm), depth + 1)
            + quadrature(scene, e, x, n, (a0, am, bm, b1), depth + 1)
            + quadrature(scene, e, x, n, (am, a1, bm, b1), depth + 1);
    }
    let cos_r = (n.dot(&r) / d).max(0.0);
    solid * cos_r
}

/// Nearest face intersection of a ray from an interior point.
pub fn raycast_box(origin: &Vec3, dir: &SphereDir, scene: &BoxScene) -> Result<Hit> {
    if !scene.inside(origin) {
        return Err(PanoError::domain(
            "ray origin must be strictly inside the box",
        ));
    }
    Ok(raycast_inside(origin, &dir.vec(), &scene.half_extents))
}

fn raycast_inside(origin: &Vec3, dir: &Vec3, half: &[f64; 3]) -> Hit {
    let mut best = (f64::INFINITY, 0usize, 1.0);
    for axis in 0..3 {
        let d = dir[axis];
        if d == 0.0 {
            continue;
        }
        let sign = d.signum();
        let t = (sign * half[axis] - origin[axis]) / d;
        if t < best.0 {
            best = (t, axis, sign);
        }
    }
    let (t, axis, sign) = best;
    let face = Face::from_axis(axis, sign);
    let mut point = origin + dir * t;
    point[axis] = sign * half[axis];
    Hit {
        distance: t,
        face,
        point,
        normal: face.inward_normal(),
    }
}

/// Renders depth, normals, reflectance, shading and image from `camera`.
pub fn render_ground_truth(scene: &BoxScene, camera: &Vec3, dims: Dims) -> Result<GroundTruth> {
    scene.validate()?;
    if !scene.inside(camera) {
        return Err(PanoError::domain("camera must be strictly inside the box"));
    }
    let w = dims.width;
    let rows: Vec<_> = (0..dims.height)
        .into_par_iter()
        .map(|v| {
            let polar = polar_of_row(v as f64, dims.height);
            let mut row = Vec::with_capacity(w);
            for u in 0..w {
                let dir = dir_from_angles(polar, azimuth_of_col(u as f64, w));
                let hit = raycast_inside(camera, &dir, &scene.half_extents);
                let (refl, shade, emissive) = match scene.emitter_at(hit.face, &hit.point) {
                    Some(e) => ([1.0; 3], e.radiance, true),
                    None => (
                        scene.albedo_at(hit.face, &hit.point),
                        scene.shading_at(&hit.point, &hit.normal),
                        false,
                    ),
                };
                row.push((hit, refl, shade, emissive));
            }
            row
        })
        .collect();

    let n = dims.len();
    let (mut image, mut depth, mut normals) = (
        Vec::with_capacity(3 * n),
        Vec::with_capacity(n),
        Vec::with_capacity(3 * n),
    );
    let (mut refl, mut shading) = (Vec::with_capacity(3 * n), Vec::with_capacity(3 * n));
    let (mut faces, mut emissive) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (hit, r, s, e) in rows.into_iter().flatten() {
        depth.push(hit.distance);
        normals.extend_from_slice(hit.normal.as_slice());
        refl.extend_from_slice(&r);
        shading.extend_from_slice(&s);
        image.extend((0..3).map(|c| r[c] * s[c]));
        faces.push(hit.face.id() as u8);
        emissive.push(e);
    }
    Ok(GroundTruth {
        image: EquirectImage::from_vec(dims, 3, image)?,
        depth: DepthMap::dense(EquirectImage::from_vec(dims, 1, depth)?)?,
        normals: NormalMap::from_image(EquirectImage::from_vec(dims, 3, normals)?)?,
        reflectance: EquirectImage::from_vec(dims, 3, refl)?,
        shading: EquirectImage::from_vec(dims, 3, shading)?,
        faces,
        emissive: Mask::from_vec(dims, emissive)?,
    })
}

/// Δθ that produces `depth` at nadir angle `theta_t` for a given baseline:
/// the algebraic inverse of the triangulation formula.
pub fn disparity_from_depth(theta_t: f64, depth: f64, baseline: f64) -> f64 {
    theta_t.sin().atan2(depth / baseline - theta_t.cos())
}

/// Renders both cameras of the rig and the ground-truth disparity of the top
/// view.
pub fn generate_stereo_pair(scene: &BoxScene, rig: &CameraRig, dims: Dims) -> Result<StereoPair> {
    let top_cam = scene.camera();
    let bottom_cam = top_cam + rig.bottom_center();
    if !scene.inside(&bottom_cam) {
        return Err(PanoError::domain(
            "bottom camera must be strictly inside the box",
        ));
    }
    let top = render_ground_truth(scene, &top_cam, dims)?;
    let bottom = render_ground_truth(scene, &bottom_cam, dims)?.image;
    let mut values = vec![0.0; dims.len()];
    for v in 0..dims.height {
        let theta_t = nadir_angle_of_row(v as f64, dims.height);
        for u in 0..dims.width {
            let p = dims.index(u, v);
            values[p] = disparity_from_depth(theta_t, top.depth.depth(p), rig.baseline());
        }
    }
    let disparity = DisparityMap {
        values: EquirectImage::from_vec(dims, 1, values)?,
        valid: Mask::new(dims, true),
    };
    Ok(StereoPair {
        top,
        bottom,
        disparity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stereo::depth_from_disparity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn cube(h: [f64; 3]) -> BoxScene {
        BoxScene {
            half_extents: h,
            camera_top: [0.0; 3],
            ..BoxScene::default()
        }
    }

    #[test]
    fn raycast_examples() {
        let s = cube([2.0, 2.0, 2.0]);
        let hit = raycast_box(&Vec3::zeros(), &SphereDir::new(Vec3::x()).unwrap(), &s).unwrap();
        assert_eq!(hit.distance, 2.0);
        assert_eq!(hit.face, Face::PosX);
        assert_eq!(hit.normal, Vec3::new(-1.0, 0.0, 0.0));

        let s = cube([2.0, 3.0, 2.0]);
        let d = SphereDir::normalize(Vec3::new(1.0, 1.0, 0.0)).unwrap();
        let hit = raycast_box(&Vec3::zeros(), &d, &s).unwrap();
        assert_eq!(hit.face, Face::PosX);
        assert!((hit.distance - 2.0 * 2f64.sqrt()).abs() < 1e-12);

        assert!(raycast_box(&Vec3::new(5.0, 0.0, 0.0), &d, &s).is_err());
    }

    #[test]
    fn random_interior_rays_hit_one_face() {
        let s = BoxScene::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let o = Vec3::new(
                rng.random_range(-1.9..1.9),
                rng.random_range(-1.3..1.3),
                rng.random_range(-2.4..2.4),
            );
            let d = SphereDir::normalize(Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ))
            .unwrap();
            let hit = raycast_box(&o, &d, &s).unwrap();
            assert!(hit.distance > 0.0);
            let on_faces = (0..3)
                .filter(|&i| (hit.point[i].abs() - s.half_extents[i]).abs() < 1e-9)
                .count();
            assert!(on_faces >= 1);
            assert!((0..3).all(|i| hit.point[i].abs() <= s.half_extents[i] + 1e-9));
        }
    }

    #[test]
    fn ambient_only_scene() {
        let scene = BoxScene {
            emitters: vec![],
            ambient: [0.5, 0.25, 1.0],
            ..BoxScene::default()
        };
        let gt =
            render_ground_truth(&scene, &scene.camera(), Dims::with_height(8).unwrap()).unwrap();
        for p in 0..gt.image.dims().len() {
            assert_eq!(gt.shading.at(p), &[0.5, 0.25, 1.0]);
            let a = scene.face_albedo[gt.faces[p] as usize];
            for c in 0..3 {
                assert_eq!(gt.image.at(p)[c], a[c] * scene.ambient[c]);
            }
        }
    }

    #[test]
    fn small_patch_approaches_point_source() {
        for method in [IrradianceMethod::Analytic, IrradianceMethod::Quadrature] {
            let scene = BoxScene {
                emitters: vec![Emitter {
                    face: Face::PosY,
                    rect: [-0.01, 0.01, -0.01, 0.01],
                    radiance: [5.0; 3],
                }],
                irradiance: method,
                ..BoxScene::default()
            };
            let floor = Vec3::new(0.0, -1.4, 0.0);
            let e = scene.emitter_irradiance(&scene.emitters[0], &floor, &Vec3::y()) * 5.0;
            let h = 2.8f64;
            let want = 5.0 * 4e-4 / (h * h);
            assert!((e / want - 1.0).abs() < 1e-4, "{method:?}: {e} vs {want}");
        }
    }

    #[test]
    fn analytic_and_quadrature_agree() {
        let analytic = BoxScene::default();
        let quad = BoxScene {
            irradiance: IrradianceMethod::Quadrature,
            ..BoxScene::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = &analytic.emitters[0];
        for _ in 0..200 {
            let face = [Face::PosX, Face::NegX, Face::NegY, Face::PosZ, Face::NegZ]
                [rng.random_range(0..5)];
            let (ia, ib) = face.tangent_axes();
            let mut p = Vec3::zeros();
            p[face.axis()] = face.sign() * analytic.half_extents[face.axis()];
            p[ia] = rng.random_range(-0.95..0.95) * analytic.half_extents[ia];
            p[ib] = rng.random_range(-0.95..0.95) * analytic.half_extents[ib];
            let n = face.inward_normal();
            let a = analytic.emitter_irradiance(e, &p, &n);
            let q = quad.emitter_irradiance(e, &p, &n);
            assert!(
                (a - q).abs() <= 1e-2 * a.max(1e-3),
                "{face} {p:?}: {a} vs {q}"
            );
        }
    }

    #[test]
    fn image_is_reflectance_times_shading() {
        let scene = BoxScene {
            texture: Some(Texture::default()),
            ..BoxScene::default()
        };
        let gt =
            render_ground_truth(&scene, &scene.camera(), Dims::with_height(32).unwrap()).unwrap();
        for i in 0..gt.image.data().len() {
            assert_eq!(
                gt.image.data()[i],
                gt.reflectance.data()[i] * gt.shading.data()[i]
            );
        }
        assert!(gt.emissive.count() > 0);
        assert!(gt.shading.data().iter().all(|&s| s > 0.0));
        // Depth is the raycast distance along each pixel ray.
        let table = crate::equirect::DirectionTable::new(gt.image.dims());
        for p in (0..gt.image.dims().len()).step_by(17) {
            let hit = raycast_box(
                &scene.camera(),
                &SphereDir::new(table.dir(p)).unwrap(),
                &scene,
            )
            .unwrap();
            assert_eq!(gt.depth.depth(p), hit.distance);
        }
    }

    #[test]
    fn disparity_inversion_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let theta = rng.random_range(0.05..PI - 0.05);
            let d = rng.random_range(0.2..20.0);
            let b = rng.random_range(0.05..1.0);
            let delta = disparity_from_depth(theta, d, b);
            let back = depth_from_disparity(theta, delta, b).unwrap();
            assert!((back / d - 1.0).abs() < 1e-9);
        }
        // Equatorial wall at 2 m with b = 0.2.
        let delta = disparity_from_depth(PI / 2.0, 2.0, 0.2);
        assert!((delta - (0.1f64).atan()).abs() < 1e-15);
    }

    #[test]
    fn stereo_pair_geometry() {
        let scene = BoxScene {
            texture: Some(Texture::default()),
            ..BoxScene::default()
        };
        let dims = Dims::with_height(16).unwrap();
        let rig = CameraRig::new(0.2).unwrap();
        let pair = generate_stereo_pair(&scene, &rig, dims).unwrap();
        let table = crate::equirect::DirectionTable::new(dims);
        for p in 0..dims.len() {
            // Disparity equals the polar-angle difference seen from the bottom camera.
            let x = scene.camera() + table.dir(p) * pair.top.depth.depth(p);
            let from_bottom = x - (scene.camera() + rig.bottom_center());
            let nadir_t = PI - table.dir(p).y.clamp(-1.0, 1.0).acos();
            let nadir_b = PI - (from_bottom.y / from_bottom.norm()).clamp(-1.0, 1.0).acos();
            assert!((pair.disparity.values.data()[p] - (nadir_b - nadir_t)).abs() < 1e-9);
        }
        // Vanishing baseline, vanishing disparity.
        let tiny = generate_stereo_pair(&scene, &CameraRig::new(1e-9).unwrap(), dims).unwrap();
        assert!(tiny.disparity.values.data().iter().all(|&d| d.abs() < 1e-8));
    }

    #[test]
    fn views_agree_on_shared_points() {
        let scene = BoxScene {
            texture: Some(Texture::default()),
            ..BoxScene::default()
        };
        let rig = CameraRig::new(0.2).unwrap();
        let dims = Dims::with_height(32).unwrap();
        let pair = generate_stereo_pair(&scene, &rig, dims).unwrap();
        let table = crate::equirect::DirectionTable::new(dims);
        let bottom_cam = scene.camera() + rig.bottom_center();
        let mut checked = 0;
        for p in (0..dims.len()).step_by(7) {
            let x = scene.camera() + table.dir(p) * pair.top.depth.depth(p);
            let d = SphereDir::normalize(x - bottom_cam).unwrap();
            let hit = raycast_box(&bottom_cam, &d, &scene).unwrap();
            if (hit.point - x).norm() < 1e-9 && !pair.top.emissive.get(p) {
                let a = scene.albedo_at(hit.face, &hit.point);
                let s = scene.shading_at(&hit.point, &hit.normal);
                for c in 0..3 {
                    assert!((a[c] * s[c] - pair.top.image.at(p)[c]).abs() < 1e-12);
                }
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn config_text_and_json_round_trip() {
        let scene = BoxScene {
            texture: Some(Texture::default()),
            irradiance: IrradianceMethod::Quadrature,
            ..BoxScene::default()
        };
        assert_eq!(BoxScene::parse(&scene.to_config_text()).unwrap(), scene);
        let json = serde_json::to_string(&scene).unwrap();
        assert_eq!(BoxScene::parse(&json).unwrap(), scene);

        let partial =
            BoxScene::parse("ambient = 1 1 1\nemitter = -x -0.2 0.2 -0.3 0.3 4 4 4\n").unwrap();
        assert_eq!(partial.ambient, [1.0; 3]);
        assert_eq!(partial.emitters.len(), 1);
        assert_eq!(partial.emitters[0].face, Face::NegX);

        assert!(BoxScene::parse("camera_top = 9 0 0").is_err());
        assert!(BoxScene::parse("bogus = 1").is_err());
        assert!(BoxScene::parse("emitter = +y -5 5 0 1 1 1 1").is_err());
        assert!(BoxScene::parse("ambient = 0 0 0\nemitter = +y 0 0.1 0 0.1 0 0 0").is_err());
    }
}
