//! Box-room properties across stage boundaries, checked against the
//! analytic scene and an independent Monte Carlo irradiance estimate.

use pano_core::envlight::{build_light_field, reconstruct_illumination};
use pano_core::equirect::DirectionTable;
use pano_core::geometry::{normals_from_depth, reflectance_init};
use pano_core::metrics::{mae_degrees, smse};
use pano_core::refine::{tv_refine, RefineConfig};
use pano_core::render::{reconstruct_image, render_shading, RenderConfig};
use pano_core::stereo::{disparity_to_depth, match_vertical, MatchConfig};
use pano_core::synth::{
    generate_stereo_pair, render_ground_truth, BoxScene, Emitter, Face, Texture,
};
use pano_core::{CameraRig, Dims, EquirectImage, Mask, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn rig() -> CameraRig {
    CameraRig::new(0.2).unwrap()
}

fn textured() -> BoxScene {
    BoxScene {
        texture: Some(Texture::default()),
        ..BoxScene::default()
    }
}

/// Direct irradiance from a rectangular emitter on the ceiling, estimated by
/// uniform area sampling.
fn monte_carlo_irradiance(
    half: &[f64; 3],
    e: &Emitter,
    x: &Vec3,
    n: &Vec3,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    assert_eq!(e.face, Face::PosY);
    let mut acc = 0.0;
    for _ in 0..samples {
        let y = Vec3::new(
            rng.random_range(e.rect[0]..e.rect[1]),
            half[1],
            rng.random_range(e.rect[2]..e.rect[3]),
        );
        let r = y - x;
        let d2 = r.norm_squared();
        let d = d2.sqrt();
        // The emitter faces down; r points up at it.
        acc += (n.dot(&r) / d).max(0.0) * (r.y / d).max(0.0) / d2;
    }
    e.area() * acc / samples as f64
}

#[test]
fn stereo_recovers_box_depth() {
    let dims = Dims::with_height(256).unwrap();
    let pair = generate_stereo_pair(&textured(), &rig(), dims).unwrap();
    let disp = match_vertical(&pair.top.image, &pair.bottom, &MatchConfig::default()).unwrap();
    let depth = disparity_to_depth(&disp, &rig());
    let px = dims.height as f64 / std::f64::consts::PI;
    let (mut n, mut close, mut errs) = (0, 0, vec![]);
    for p in 0..dims.len() {
        if disp.valid.get(p) {
            n += 1;
            if (disp.values.data()[p] - pair.disparity.values.data()[p]).abs() * px <= 1.0 {
                close += 1;
            }
        }
        if depth.valid.get(p) {
            let g = pair.top.depth.depth(p);
            errs.push((depth.values.data()[p] - g).abs() / g);
        }
    }
    assert!(n as f64 > 0.5 * dims.len() as f64);
    assert!(close as f64 >= 0.9 * n as f64, "{close}/{n}");
    errs.sort_by(f64::total_cmp);
    assert!(
        errs[errs.len() / 2] < 0.02,
        "median {}",
        errs[errs.len() / 2]
    );
}

#[test]
fn normals_from_true_depth() {
    let scene = BoxScene::default();
    let dims = Dims::with_height(128).unwrap();
    let gt = render_ground_truth(&scene, &scene.camera(), dims).unwrap();
    let est = normals_from_depth(&gt.depth, &rig()).unwrap();
    let mae = mae_degrees(&est, &gt.normals, Some(&est.valid)).unwrap();
    assert!(mae < 5.0, "{mae}");
    assert!(est.valid.coverage() > 0.9);
}

#[test]
fn reflectance_from_true_shading() {
    let scene = BoxScene::default();
    let gt = render_ground_truth(&scene, &scene.camera(), Dims::with_height(64).unwrap()).unwrap();
    let r = reflectance_init(&gt.image, &gt.shading).unwrap();
    assert!(smse(&r, &gt.reflectance, None).unwrap() < 0.01);
    let rebuilt = reconstruct_image(&gt.reflectance, &gt.shading, 1.0).unwrap();
    for (a, b) in rebuilt.data().iter().zip(gt.image.data()) {
        assert!((a - b).abs() <= 1e-6);
    }
}

#[test]
fn emitter_shading_matches_monte_carlo() {
    let scene = BoxScene::default();
    let e = &scene.emitters[0];
    let source =
        render_ground_truth(&scene, &scene.camera(), Dims::with_height(128).unwrap()).unwrap();
    let mut img = source.image.clone();
    for p in 0..img.dims().len() {
        if !source.emissive.get(p) {
            img.at_mut(p).fill(0.0);
        }
    }
    let lights = build_light_field(&img, &source.depth, &rig()).unwrap();
    let probe =
        render_ground_truth(&scene, &scene.camera(), Dims::with_height(16).unwrap()).unwrap();
    let shading = render_shading(
        &lights,
        &probe.depth,
        &probe.normals,
        &rig(),
        &RenderConfig::default(),
    )
    .unwrap();

    let table = DirectionTable::new(probe.depth.dims());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut err, mut norm, mut synth_err) = (0.0, 0.0, 0.0);
    for p in 0..table.dims().len() {
        if probe.emissive.get(p) {
            continue;
        }
        let x = scene.camera() + table.dir(p) * probe.depth.depth(p);
        let n = probe.normals.normal(p);
        let mc = e.radiance[0]
            * monte_carlo_irradiance(&scene.half_extents, e, &x, &n, 20_000, &mut rng);
        let analytic = e.radiance[0] * scene.emitter_irradiance(e, &x, &n);
        err += (shading.at(p)[0] - mc).powi(2);
        synth_err += (analytic - mc).powi(2);
        norm += mc * mc;
    }
    let (rel, synth_rel) = ((err / norm).sqrt(), (synth_err / norm).sqrt());
    assert!(synth_rel < 0.02, "analytic vs Monte Carlo {synth_rel}");
    assert!(rel < 0.05, "rendered vs Monte Carlo {rel}");
}

#[test]
fn displaced_query_enlarges_the_approached_wall() {
    let scene = BoxScene::default();
    let dims = Dims::with_height(64).unwrap();
    let gt = render_ground_truth(&scene, &scene.camera(), dims).unwrap();
    let lights = build_light_field(&gt.image, &gt.depth, &rig()).unwrap();
    let table = DirectionTable::new(dims);
    let wall = Face::PosX.id() as u8;
    let extent = |query: Vec3| {
        let map = reconstruct_illumination(&lights, &query, dims).unwrap();
        (0..dims.len())
            .filter(|&p| gt.faces[map.source[p].unwrap()] == wall)
            .map(|p| table.solid_angle(p))
            .sum::<f64>()
    };
    // Light positions are relative to the top camera.
    let near = extent(Vec3::new(1.0, 0.0, 0.0));
    let here = extent(Vec3::zeros());
    assert!(near > here * 1.5, "{near} vs {here}");
}

fn noisy_reflectance(gt: &EquirectImage, seed: u64) -> EquirectImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let noisy = gt
        .data()
        .iter()
        .map(|x| (x * (1.0 + noise.sample(&mut rng))).max(0.0))
        .collect();
    EquirectImage::from_vec(gt.dims(), gt.channels(), noisy).unwrap()
}

/// Pixels more than `grow` pixels (Chebyshev) from any pixel of `mask`.
fn away_from(mask: &Mask, grow: isize) -> Mask {
    let dims = mask.dims();
    let mut far = Mask::new(dims, true);
    for v in 0..dims.height {
        for u in 0..dims.width {
            let near = (-grow..=grow).any(|dv| {
                (-grow..=grow).any(|du| {
                    mask.get(
                        dims.index(dims.wrap_u(u as isize + du), dims.clamp_v(v as isize + dv)),
                    )
                })
            });
            far.set(dims.index(u, v), !near);
        }
    }
    far
}

#[test]
fn refinement_denoises_reflectance() {
    let scene = BoxScene::default();
    let gt = render_ground_truth(&scene, &scene.camera(), Dims::with_height(64).unwrap()).unwrap();
    let r0 = noisy_reflectance(&gt.reflectance, 2);
    let out = tv_refine(&gt.image, &r0, &gt.shading, &RefineConfig::default()).unwrap();
    assert!(out.trace.is_non_increasing());
    assert!(out.reflectance.data().iter().all(|&r| r >= 0.0));
    assert!(out.shading.is_non_negative());
    // At this resolution the emitter's shading edge spreads over a few
    // pixels; elsewhere the noise is removed.
    let far = away_from(&gt.emissive, 3);
    let before = smse(&r0, &gt.reflectance, Some(&far)).unwrap();
    let after = smse(&out.reflectance, &gt.reflectance, Some(&far)).unwrap();
    assert!(after < 0.1 * before, "{after} vs {before}");
}

#[test]
fn bright_emitter_edges_leak_into_reflectance() {
    // With a visible emitter far brighter than its surroundings the
    // quadratic shading prior smooths the jump and reflectance absorbs it
    // next to the emitter; away from it refinement still denoises.
    let mut scene = BoxScene::default();
    scene.emitters[0].radiance = [20.0, 18.0, 16.0];
    let gt = render_ground_truth(&scene, &scene.camera(), Dims::with_height(64).unwrap()).unwrap();
    let r0 = noisy_reflectance(&gt.reflectance, 3);
    let out = tv_refine(&gt.image, &r0, &gt.shading, &RefineConfig::default()).unwrap();
    let far = away_from(&gt.emissive, 3);
    let everywhere_before = smse(&r0, &gt.reflectance, None).unwrap();
    let everywhere_after = smse(&out.reflectance, &gt.reflectance, None).unwrap();
    assert!(everywhere_after > everywhere_before);
    let before = smse(&r0, &gt.reflectance, Some(&far)).unwrap();
    let after = smse(&out.reflectance, &gt.reflectance, Some(&far)).unwrap();
    assert!(after < 0.5 * before, "{after} vs {before}");
}

#[test]
fn refinement_is_nearly_invariant_to_joint_rescaling() {
    let scene = BoxScene::default();
    let gt = render_ground_truth(&scene, &scene.camera(), Dims::with_height(32).unwrap()).unwrap();
    let r0 = noisy_reflectance(&gt.reflectance, 4);
    let cfg = RefineConfig::default();
    let a = tv_refine(&gt.image, &r0, &gt.shading, &cfg).unwrap();
    // The smoothness terms are not scale invariant; the gap grows roughly
    // linearly in |k - 1|.
    for k in [1.1, 1.0 / 1.1] {
        let b = tv_refine(
            &gt.image,
            &r0.map(|x| x * k),
            &gt.shading.map(|x| x / k),
            &cfg,
        )
        .unwrap();
        let pa = reconstruct_image(&a.reflectance, &a.shading, a.scale).unwrap();
        let pb = reconstruct_image(&b.reflectance, &b.shading, b.scale).unwrap();
        let rms = |x: &EquirectImage| {
            (x.data().iter().map(|v| v * v).sum::<f64>() / x.data().len() as f64).sqrt()
        };
        let diff = EquirectImage::from_vec(
            pa.dims(),
            3,
            pa.data()
                .iter()
                .zip(pb.data())
                .map(|(x, y)| x - y)
                .collect(),
        )
        .unwrap();
        assert!(
            rms(&diff) < 0.01 * rms(&pa),
            "k={k}: {} vs {}",
            rms(&diff),
            rms(&pa)
        );
    }
}

#[test]
fn illumination_identity_on_box_scene() {
    let scene = textured();
    let dims = Dims::with_height(64).unwrap();
    let gt = render_ground_truth(&scene, &scene.camera(), dims).unwrap();
    let lights = build_light_field(&gt.image, &gt.depth, &rig()).unwrap();
    let map = reconstruct_illumination(&lights, &Vec3::zeros(), dims).unwrap();
    let exact = (0..dims.len())
        .filter(|&p| map.source[p] == Some(p))
        .count();
    assert!(exact as f64 >= 0.99 * dims.len() as f64);
}
