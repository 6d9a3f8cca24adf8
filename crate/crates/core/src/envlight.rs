//! Near-field environment light and spatially varying illumination maps.
//!
//! Every observed pixel becomes a point light at `depth · ray` carrying the
//! pixel's RGB value. An illumination map at a query point is obtained by
//! projecting all lights onto a panorama centered there, keeping the nearest
//! light per pixel (occlusion) and extrapolating empty pixels from the
//! nearest filled one.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::equirect::{nearest_pixel, CameraRig, DirectionTable, Vec3};
use crate::error::{PanoError, Result};
use crate::image::{Dims, EquirectImage, Mask};
use crate::io::write_atomic;
use crate::nearest::{nearest_sources, nearest_sources_where};
use crate::stereo::DepthMap;

/// Lights closer than this to the query point are ignored.
pub const NEAR_EPS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLight {
    pub position: Vec3,
    pub intensity: [f64; 3],
}

/// The near-field environment light: one point light per source pixel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointLightSet {
    lights: Vec<PointLight>,
}

impl PointLightSet {
    pub fn new(lights: Vec<PointLight>) -> Result<Self> {
        for (i, l) in lights.iter().enumerate() {
            if !l.position.iter().all(|x| x.is_finite()) {
                return Err(PanoError::domain(format!(
                    "light {i} has a non-finite position"
                )));
            }
            if !l.intensity.iter().all(|&c| c >= 0.0 && c.is_finite()) {
                return Err(PanoError::domain(format!(
                    "light {i} has a negative intensity"
                )));
            }
        }
        Ok(PointLightSet { lights })
    }

    pub fn len(&self) -> usize {
        self.lights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lights.is_empty()
    }

    pub fn lights(&self) -> &[PointLight] {
        &self.lights
    }

    /// Binary table: little-endian `u64` count, then `x y z r g b` as `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.len() * 24);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for l in &self.lights {
            for x in l.position.iter().chain(l.intensity.iter()) {
                out.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| PanoError::domain(format!("light table: {m}"));
        if bytes.len() < 8 {
            return Err(bad("missing header"));
        }
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() != n.checked_mul(24).ok_or_else(|| bad("count overflow"))? {
            return Err(bad(&format!(
                "expected {n} records, payload is {} bytes",
                body.len()
            )));
        }
        let lights = body
            .chunks_exact(24)
            .map(|r| {
                let f =
                    |i: usize| f32::from_le_bytes(r[4 * i..4 * i + 4].try_into().unwrap()) as f64;
                PointLight {
                    position: Vec3::new(f(0), f(1), f(2)),
                    intensity: [f(3), f(4), f(5)],
                }
            })
            .collect();
        PointLightSet::new(lights)
    }

    /// One light per line: `x y z r g b`. Lines starting with `#` are comments.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# x y z r g b\n");
        for l in &self.lights {
            let p = l.position;
            let c = l.intensity;
            s.push_str(&format!(
                "{} {} {} {} {} {}\n",
                p.x, p.y, p.z, c[0], c[1], c[2]
            ));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lights = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| PanoError::domain(format!("line {}: {e}", lineno + 1)))?;
            let [x, y, z, r, g, b] = vals[..] else {
                return Err(PanoError::domain(format!(
                    "line {}: expected 6 values, got {}",
                    lineno + 1,
                    vals.len()
                )));
            };
            lights.push(PointLight {
                position: Vec3::new(x, y, z),
                intensity: [r, g, b],
            });
        }
        PointLightSet::new(lights)
    }

    /// Writes the binary table, or text when the extension is `.txt`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "txt") {
            write_atomic(path, self.to_text().as_bytes())
        } else {
            write_atomic(path, &self.to_bytes())
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = BufReader::new(std::fs::File::open(path)?);
        if path.extension().is_some_and(|e| e == "txt") {
            let mut s = String::new();
            reader.read_to_string(&mut s)?;
            Self::from_text(&s)
        } else {
            let mut bytes = Vec::new();
            reader.fill_buf()?;
            reader.read_to_end(&mut bytes)?;
            Self::from_bytes(&bytes)
        }
    }
}

/// Turns every pixel of `img` into a point light at `depth · ray` in the
/// rig's reference (top camera) frame.
pub fn build_light_field(
    img: &EquirectImage,
    depth: &DepthMap,
    _rig: &CameraRig,
) -> Result<PointLightSet> {
    if img.dims() != depth.dims() {
        return Err(PanoError::mismatch(img.dims(), depth.dims()));
    }
    if img.channels() != 3 {
        return Err(PanoError::domain("light field needs a 3-channel image"));
    }
    if let Some(p) = depth.values.data().iter().position(|&d| !(d > 0.0)) {
        return Err(PanoError::domain(format!(
            "depth must be dense and positive (pixel {p}); inpaint invalid pixels first"
        )));
    }
    let table = DirectionTable::new(img.dims());
    let lights = (0..img.dims().len())
        .map(|p| {
            let c = img.at(p);
            PointLight {
                position: table.dir(p) * depth.depth(p),
                intensity: [c[0], c[1], c[2]],
            }
        })
        .collect();
    PointLightSet::new(lights)
}

/// A light landing on an illumination-map pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat {
    pub pixel: usize,
    pub intensity: [f64; 3],
    pub distance: f64,
    pub source: usize,
}

#[inline]
fn project_one(light: &PointLight, query: &Vec3, dims: Dims) -> Option<(usize, f64)> {
    let rel = light.position - query;
    let distance = rel.norm();
    (distance >= NEAR_EPS).then(|| (nearest_pixel(&rel, dims), distance))
}

/// Projects every light onto a panorama of `dims` centered at `query`,
/// rounding to the nearest pixel.
pub fn project_lights(lights: &PointLightSet, query: &Vec3, dims: Dims) -> Vec<Splat> {
    lights
        .lights
        .iter()
        .enumerate()
        .filter_map(|(i, l)| {
            project_one(l, query, dims).map(|(pixel, distance)| Splat {
                pixel,
                intensity: l.intensity,
                distance,
                source: i,
            })
        })
        .collect()
}

/// Panorama of incoming radiance and source distance centered at a 3D point.
#[derive(Clone, Debug, PartialEq)]
pub struct IlluminationMap {
    pub radiance: EquirectImage,
    /// Distance from `center` to the light shown at each pixel.
    pub depth: EquirectImage,
    /// True where a light projected directly; false where hole-filled.
    pub filled: Mask,
    /// Index of the light shown at each pixel, `None` for unfilled pixels of
    /// a partial map.
    pub source: Vec<Option<usize>>,
    pub center: Vec3,
}

impl IlluminationMap {
    pub fn dims(&self) -> Dims {
        self.radiance.dims()
    }
}

/// Keeps the nearest splat per pixel; ties go to the lowest source index.
pub fn resolve_zbuffer(splats: &[Splat], dims: Dims, center: Vec3) -> IlluminationMap {
    let mut best: Vec<Option<&Splat>> = vec![None; dims.len()];
    for s in splats {
        let slot = &mut best[s.pixel];
        let replace = match slot {
            None => true,
            Some(cur) => {
                s.distance < cur.distance || (s.distance == cur.distance && s.source < cur.source)
            }
        };
        if replace {
            *slot = Some(s);
        }
    }
    let mut radiance = vec![0.0; dims.len() * 3];
    let mut depth = vec![0.0; dims.len()];
    let mut filled = vec![false; dims.len()];
    let mut source = vec![None; dims.len()];
    for (p, b) in best.iter().enumerate() {
        if let Some(s) = b {
            radiance[3 * p..3 * p + 3].copy_from_slice(&s.intensity);
            depth[p] = s.distance;
            filled[p] = true;
            source[p] = Some(s.source);
        }
    }
    IlluminationMap {
        radiance: EquirectImage::from_vec(dims, 3, radiance).expect("finite radiance"),
        depth: EquirectImage::from_vec(dims, 1, depth).expect("finite depth"),
        filled: Mask::from_vec(dims, filled).expect("dims"),
        source,
        center,
    }
}

/// Copies radiance and depth into every unfilled pixel from the nearest
/// filled pixel in angular distance. `filled` is kept as provenance.
pub fn fill_holes_nearest(partial: &IlluminationMap) -> Result<IlluminationMap> {
    let table = DirectionTable::new(partial.dims());
    fill_holes_with(partial, &table)
}

fn fill_holes_with(partial: &IlluminationMap, table: &DirectionTable) -> Result<IlluminationMap> {
    let src = nearest_sources(table, partial.filled.bits())
        .map_err(|_| PanoError::domain("illumination map has no filled pixel"))?;
    let mut out = partial.clone();
    for (p, &s) in src.iter().enumerate() {
        if s != p {
            let c: [f64; 3] = partial.radiance.at(s).try_into().unwrap();
            out.radiance.at_mut(p).copy_from_slice(&c);
            out.depth.data_mut()[p] = partial.depth.data()[s];
            out.source[p] = partial.source[s];
        }
    }
    Ok(out)
}

/// Reusable scratch space for reconstructing many maps of one resolution.
pub struct IlluminationBuilder {
    table: DirectionTable,
    zbuf: Vec<(f64, u32)>,
    filled: Vec<bool>,
}

impl IlluminationBuilder {
    pub fn new(dims: Dims) -> Self {
        IlluminationBuilder {
            table: DirectionTable::new(dims),
            zbuf: vec![(f64::INFINITY, u32::MAX); dims.len()],
            filled: vec![false; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.table.dims()
    }

    pub fn table(&self) -> &DirectionTable {
        &self.table
    }

    /// For every map pixel, the index of the light it shows after z-buffer
    /// resolution and hole filling, plus whether it was directly filled.
    pub fn light_indices(
        &mut self,
        lights: &PointLightSet,
        query: &Vec3,
    ) -> Result<(Vec<u32>, &[bool])> {
        self.light_indices_where(lights, query, None)
    }

    /// [`light_indices`](Self::light_indices) restricted to pixels where
    /// `wanted` is true; other entries are `u32::MAX`.
    pub fn light_indices_where(
        &mut self,
        lights: &PointLightSet,
        query: &Vec3,
        wanted: Option<&[bool]>,
    ) -> Result<(Vec<u32>, &[bool])> {
        let dims = self.dims();
        self.zbuf.fill((f64::INFINITY, u32::MAX));
        for (i, l) in lights.lights.iter().enumerate() {
            if let Some((p, d)) = project_one(l, query, dims) {
                // Ascending source order makes strict `<` the lowest-index tie rule.
                if d < self.zbuf[p].0 {
                    self.zbuf[p] = (d, i as u32);
                }
            }
        }
        for (f, z) in self.filled.iter_mut().zip(&self.zbuf) {
            *f = z.1 != u32::MAX;
        }
        let src = nearest_sources_where(&self.table, &self.filled, wanted)
            .map_err(|_| PanoError::domain("no light projects onto the illumination map"))?;
        let idx = src
            .iter()
            .map(|&s| {
                if s == usize::MAX {
                    u32::MAX
                } else {
                    self.zbuf[s].1
                }
            })
            .collect();
        Ok((idx, &self.filled))
    }

    /// Full map at `query`: projection, occlusion and hole filling.
    pub fn reconstruct(&mut self, lights: &PointLightSet, query: &Vec3) -> Result<IlluminationMap> {
        let dims = self.dims();
        let (idx, filled) = self.light_indices(lights, query)?;
        let filled = Mask::from_vec(dims, filled.to_vec())?;
        let mut radiance = vec![0.0; dims.len() * 3];
        let mut depth = vec![0.0; dims.len()];
        for (p, &i) in idx.iter().enumerate() {
            let l = &lights.lights[i as usize];
            radiance[3 * p..3 * p + 3].copy_from_slice(&l.intensity);
            depth[p] = (l.position - query).norm();
        }
        Ok(IlluminationMap {
            radiance: EquirectImage::from_vec(dims, 3, radiance)?,
            depth: EquirectImage::from_vec(dims, 1, depth)?,
            filled,
            source: idx.iter().map(|&i| Some(i as usize)).collect(),
            center: *query,
        })
    }
}

/// Illumination map at `query`: nearest-light z-buffer followed by nearest
/// hole filling.
pub fn reconstruct_illumination(
    lights: &PointLightSet,
    query: &Vec3,
    dims: Dims,
) -> Result<IlluminationMap> {
    if !query.iter().all(|x| x.is_finite()) {
        return Err(PanoError::domain("query point must be finite"));
    }
    IlluminationBuilder::new(dims).reconstruct(lights, query)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equirect::{pixel_to_dir, SampleMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rig() -> CameraRig {
        CameraRig::new(0.2).unwrap()
    }

    fn light(p: [f64; 3], c: [f64; 3]) -> PointLight {
        PointLight {
            position: Vec3::new(p[0], p[1], p[2]),
            intensity: c,
        }
    }

    fn random_scene(dims: Dims, seed: u64) -> (EquirectImage, DepthMap) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = EquirectImage::from_fn(dims, 3, |_, _, p| {
            for c in p {
                *c = rng.random::<f64>();
            }
        })
        .unwrap();
        let depth =
            EquirectImage::from_fn(dims, 1, |_, _, p| p[0] = rng.random_range(0.5..3.0)).unwrap();
        (img, DepthMap::dense(depth).unwrap())
    }

    #[test]
    fn unit_depth_two_pixel_field() {
        let dims = Dims::new(1, 2).unwrap();
        let img = EquirectImage::filled(dims, 3, 0.3).unwrap();
        let depth = DepthMap::dense(EquirectImage::filled(dims, 1, 1.0).unwrap()).unwrap();
        let e = build_light_field(&img, &depth, &rig()).unwrap();
        assert_eq!(e.len(), 2);
        for (p, l) in e.lights().iter().enumerate() {
            assert!((l.position.norm() - 1.0).abs() < 1e-12);
            let want = pixel_to_dir(p as f64, 0.0, dims).unwrap().vec();
            assert!((l.position - want).norm() < 1e-12);
            assert_eq!(l.intensity, [0.3; 3]);
        }
    }

    #[test]
    fn horizon_pixels_lift_along_their_rays() {
        // A 1x2 grid has both pixel centers on the horizon, at φ = π/2 and 3π/2.
        let dims = Dims::new(1, 2).unwrap();
        let img = EquirectImage::filled(dims, 3, 1.0).unwrap();
        let depth = DepthMap::dense(EquirectImage::filled(dims, 1, 3.0).unwrap()).unwrap();
        let e = build_light_field(&img, &depth, &rig()).unwrap();
        assert!((e.lights()[0].position - Vec3::new(0.0, 0.0, 3.0)).norm() < 1e-12);
        assert!((e.lights()[1].position - Vec3::new(0.0, 0.0, -3.0)).norm() < 1e-12);
        // The ray at ϑ = π/2, φ = π scaled by 3.
        let d = pixel_to_dir(511.5, 255.5, Dims::new(512, 1024).unwrap()).unwrap();
        assert!((d.vec() * 3.0 - Vec3::new(-3.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn build_rejects_mismatch_and_sparse_depth() {
        let (img, depth) = random_scene(Dims::new(2, 4).unwrap(), 1);
        let (_, other) = random_scene(Dims::new(4, 8).unwrap(), 1);
        assert!(build_light_field(&img, &other, &rig()).is_err());
        let mut sparse = depth.clone();
        sparse.values.data_mut()[3] = 0.0;
        assert!(build_light_field(&img, &sparse, &rig()).is_err());
    }

    #[test]
    fn projection_from_source_center_is_identity() {
        let dims = Dims::new(8, 16).unwrap();
        let (img, depth) = random_scene(dims, 2);
        let e = build_light_field(&img, &depth, &rig()).unwrap();
        let splats = project_lights(&e, &Vec3::zeros(), dims);
        assert_eq!(splats.len(), dims.len());
        for s in &splats {
            assert_eq!(s.pixel, s.source);
            assert!((s.distance - depth.depth(s.source)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_light_projection() {
        let e = PointLightSet::new(vec![light([0.0, 0.0, 2.0], [1.0, 0.5, 0.25])]).unwrap();
        let dims = Dims::new(8, 16).unwrap();
        let s = project_lights(&e, &Vec3::zeros(), dims);
        assert_eq!(s.len(), 1);
        // ϑ = π/2, φ = π/2 sits between rows 3/4 and at column 3.5; rounding
        // picks (4, 4) since .5 rounds away from zero.
        let (u, v) =
            crate::equirect::dir_to_pixel(&crate::SphereDir::new(Vec3::z()).unwrap(), dims);
        assert!((u - 3.5).abs() < 1e-12 && (v - 3.5).abs() < 1e-12);
        assert_eq!(s[0].pixel, dims.index(4, 4));
        assert!((s[0].distance - 2.0).abs() < 1e-15);
        // Coincident query skips the light.
        assert!(project_lights(&e, &Vec3::new(0.0, 0.0, 2.0), dims).is_empty());
        assert!(project_lights(&e, &Vec3::new(0.0, 0.0, 2.0 - 5e-5), dims).is_empty());
    }

    #[test]
    fn zbuffer_keeps_nearest_and_breaks_ties_by_index() {
        let dims = Dims::new(2, 4).unwrap();
        let splat = |pixel, d, source, c| Splat {
            pixel,
            intensity: [c; 3],
            distance: d,
            source,
        };
        let m = resolve_zbuffer(
            &[
                splat(1, 2.0, 0, 0.9),
                splat(1, 1.0, 1, 0.1),
                splat(5, 3.0, 4, 0.7),
                splat(5, 3.0, 2, 0.2),
            ],
            dims,
            Vec3::zeros(),
        );
        assert_eq!(m.radiance.at(1), &[0.1; 3]);
        assert_eq!(m.depth.data()[1], 1.0);
        assert_eq!(m.source[5], Some(2));
        assert_eq!(m.filled.count(), 2);

        let empty = resolve_zbuffer(&[], dims, Vec3::zeros());
        assert_eq!(empty.filled.count(), 0);
        assert!(fill_holes_nearest(&empty).is_err());

        let all: Vec<Splat> = (0..8)
            .map(|p| splat(p, 1.0 + p as f64, p, p as f64))
            .collect();
        let full = resolve_zbuffer(&all, dims, Vec3::zeros());
        for p in 0..8 {
            assert_eq!(full.radiance.at(p), &[p as f64; 3]);
        }
        assert_eq!(fill_holes_nearest(&full).unwrap(), full);
    }

    #[test]
    fn one_filled_pixel_gives_constant_map() {
        let dims = Dims::new(4, 8).unwrap();
        let s = Splat {
            pixel: 13,
            intensity: [0.4, 0.5, 0.6],
            distance: 2.5,
            source: 0,
        };
        let m = fill_holes_nearest(&resolve_zbuffer(&[s], dims, Vec3::zeros())).unwrap();
        for p in 0..dims.len() {
            assert_eq!(m.radiance.at(p), &[0.4, 0.5, 0.6]);
            assert_eq!(m.depth.data()[p], 2.5);
        }
        assert_eq!(m.filled.count(), 1);
    }

    #[test]
    fn antipodal_fill_matches_brute_force() {
        let dims = Dims::new(8, 16).unwrap();
        let table = DirectionTable::new(dims);
        let (a, b) = (dims.index(2, 1), dims.index(10, 6));
        let splats = [
            Splat {
                pixel: a,
                intensity: [1.0, 0.0, 0.0],
                distance: 1.0,
                source: 0,
            },
            Splat {
                pixel: b,
                intensity: [0.0, 0.0, 1.0],
                distance: 1.0,
                source: 1,
            },
        ];
        let m = fill_holes_nearest(&resolve_zbuffer(&splats, dims, Vec3::zeros())).unwrap();
        let filled: Vec<bool> = (0..dims.len()).map(|p| p == a || p == b).collect();
        let brute = crate::nearest::nearest_sources_brute(&table, &filled);
        for p in 0..dims.len() {
            let want = if brute[p] == a {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 0.0, 1.0]
            };
            assert_eq!(m.radiance.at(p), &want);
        }
    }

    #[test]
    fn builder_matches_composed_operations() {
        let src = Dims::new(16, 32).unwrap();
        let (img, depth) = random_scene(src, 3);
        let e = build_light_field(&img, &depth, &rig()).unwrap();
        for (q, dims) in [
            (Vec3::new(0.1, -0.2, 0.3), Dims::new(8, 16).unwrap()),
            (Vec3::new(-0.4, 0.1, 0.0), Dims::new(32, 64).unwrap()),
        ] {
            let composed =
                fill_holes_nearest(&resolve_zbuffer(&project_lights(&e, &q, dims), dims, q))
                    .unwrap();
            let fused = reconstruct_illumination(&e, &q, dims).unwrap();
            assert_eq!(composed.radiance, fused.radiance);
            assert_eq!(composed.filled, fused.filled);
            assert_eq!(composed.source, fused.source);
            for (a, b) in composed.depth.data().iter().zip(fused.depth.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn occlusion_and_value_conservation() {
        let src = Dims::new(16, 32).unwrap();
        let (img, depth) = random_scene(src, 4);
        let e = build_light_field(&img, &depth, &rig()).unwrap();
        let q = Vec3::new(0.2, 0.1, -0.15);
        let dims = Dims::new(8, 16).unwrap();
        let splats = project_lights(&e, &q, dims);
        let m = reconstruct_illumination(&e, &q, dims).unwrap();
        for p in 0..dims.len() {
            if m.filled.get(p) {
                for s in splats.iter().filter(|s| s.pixel == p) {
                    assert!(m.depth.data()[p] <= s.distance);
                }
            }
            let l = &e.lights()[m.source[p].unwrap()];
            assert_eq!(m.radiance.at(p), &l.intensity);
        }
    }

    #[test]
    fn identity_at_source_center() {
        let dims = Dims::new(16, 32).unwrap();
        let (img, depth) = random_scene(dims, 5);
        let e = build_light_field(&img, &depth, &rig()).unwrap();
        let m = reconstruct_illumination(&e, &Vec3::zeros(), dims).unwrap();
        assert_eq!(m.filled.count(), dims.len());
        assert_eq!(m.radiance, img);
        for (a, b) in m.depth.data().iter().zip(depth.values.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Degenerate 1x2 map: two hemispheres.
        let tiny = reconstruct_illumination(&e, &Vec3::zeros(), Dims::new(1, 2).unwrap()).unwrap();
        assert_eq!(tiny.filled.count(), 2);
        let _ = crate::equirect::sample(&tiny.radiance, 0.5, 0.0, SampleMode::Bilinear);
    }

    #[test]
    fn deterministic_under_parallel_queries() {
        use rayon::prelude::*;
        let src = Dims::new(16, 32).unwrap();
        let (img, depth) = random_scene(src, 6);
        let e = build_light_field(&img, &depth, &rig()).unwrap();
        let dims = Dims::new(8, 16).unwrap();
        let q = Vec3::new(0.05, 0.02, -0.1);
        let serial = reconstruct_illumination(&e, &q, dims).unwrap();
        let par: Vec<_> = (0..8)
            .into_par_iter()
            .map(|_| reconstruct_illumination(&e, &q, dims).unwrap())
            .collect();
        assert!(par.iter().all(|m| *m == serial));
    }

    #[test]
    fn binary_and_text_round_trip() {
        let e = PointLightSet::new(vec![
            light([0.5, -1.25, 2.0], [1.0, 0.5, 0.25]),
            light([-3.0, 0.0, 0.125], [0.0, 2.0, 4.0]),
        ])
        .unwrap();
        assert_eq!(PointLightSet::from_bytes(&e.to_bytes()).unwrap(), e);
        assert_eq!(PointLightSet::from_text(&e.to_text()).unwrap(), e);
        let bytes = e.to_bytes();
        assert_eq!(bytes.len(), 8 + 2 * 24);
        assert_eq!(&bytes[..8], &2u64.to_le_bytes());
        assert!(PointLightSet::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        assert!(PointLightSet::from_text("1 2 3").is_err());
        assert!(PointLightSet::new(vec![light([0.0; 3], [-1.0, 0.0, 0.0])]).is_err());
    }
}
