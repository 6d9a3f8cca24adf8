//! One function per subcommand. Each loads and validates every input and
//! computes all results before the first output file is written.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use pano_core::decompose::ClassicalEstimator;
use pano_core::envlight::{build_light_field, PointLightSet};
use pano_core::geometry::{IntrinsicEstimator, NormalMap};
use pano_core::io::{
    read_mask_png, read_pfm, write_atomic, write_mask_png, write_pfm, write_png_preview,
    write_png_rgba, Preview,
};
use pano_core::metrics::{
    loss_normal, loss_reflectance, mae_degrees, psnr, reports_to_csv, smse, MetricReport,
};
use pano_core::refine::{tv_refine, RefineConfig};
use pano_core::render::{render_mirror_probe, RenderConfig, Weighting};
use pano_core::stereo::{disparity_to_depth, match_vertical, DepthMap, MatchConfig, MatchCost};
use pano_core::synth::{generate_stereo_pair, BoxScene, Texture};
use pano_core::{CameraRig, Dims, EquirectImage, Mask, PanoError, SphereDir, Vec3};
use serde::Serialize;

use crate::manifest::{PipelineManifest, MANIFEST_FILE};

/// Where a stage reads its inputs and writes its outputs.
struct Stage {
    manifest: PipelineManifest,
    out: PathBuf,
}

impl Stage {
    /// Loads `--manifest` if given; outputs go to `--out`, else next to the
    /// manifest. An existing manifest in the output directory is extended.
    fn open(manifest: Option<&Path>, out: Option<&Path>) -> Result<Self> {
        let loaded = manifest.map(PipelineManifest::load).transpose()?;
        let out = match (out, &loaded) {
            (Some(o), _) => o.to_path_buf(),
            (None, Some(m)) => m.dir.clone(),
            (None, None) => bail!("either --out or --manifest is required"),
        };
        let manifest = match loaded {
            Some(m) => m.moved_to(&out)?,
            None if out.join(MANIFEST_FILE).exists() => PipelineManifest::load(&out)?,
            None => PipelineManifest::new(&out),
        };
        Ok(Stage { manifest, out })
    }

    /// An explicit path wins over the manifest entry.
    fn input(&self, flag: &Option<PathBuf>, name: &str, what: &str) -> Result<PathBuf> {
        match flag {
            Some(p) => Ok(p.clone()),
            None => self
                .manifest
                .artifact(name)
                .with_context(|| format!("no {what} given (pass it explicitly or via --manifest)")),
        }
    }

    fn baseline(&self, flag: Option<f64>) -> Result<CameraRig> {
        let b = flag
            .or(self.manifest.baseline)
            .context("no baseline given (pass --baseline or a manifest with one)")?;
        Ok(CameraRig::new(b)?)
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn prepare(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("cannot create output directory {}", self.out.display()))
    }

    fn finish(mut self, stage: &str, params: &impl Serialize, dims: Dims) -> Result<PathBuf> {
        self.manifest.height = Some(dims.height);
        self.manifest.width = Some(dims.width);
        self.manifest.record_stage(stage, params)?;
        self.manifest.save()
    }
}

fn read_image(path: &Path, what: &str) -> Result<EquirectImage> {
    read_pfm(path).with_context(|| format!("cannot read {what} {}", path.display()))
}

fn read_color(path: &Path, what: &str) -> Result<EquirectImage> {
    let img = read_image(path, what)?;
    if img.channels() != 3 {
        bail!("{what} {} must have 3 channels", path.display());
    }
    Ok(img)
}

fn read_dense_depth(path: &Path) -> Result<DepthMap> {
    let img = read_image(path, "depth")?;
    DepthMap::dense(img)
        .with_context(|| format!("depth {} must be dense and positive", path.display()))
}

fn same_dims(a: Dims, b: Dims, what: &str) -> Result<()> {
    if a != b {
        bail!("{what}: dimensions {a} and {b} differ");
    }
    Ok(())
}

// ---------------------------------------------------------------- synth

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    /// Scene description (key = value text or JSON); the built-in room when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Panorama height in pixels (width is twice this).
    #[arg(long, env = "PANO_HEIGHT", default_value_t = 256)]
    pub height: usize,
    /// Vertical camera separation in meters.
    #[arg(long, env = "PANO_BASELINE", default_value_t = 0.2)]
    pub baseline: f64,
    /// Render untextured faces. By default a scene without a texture gets
    /// the standard one so stereo matching has features.
    #[arg(long)]
    pub no_texture: bool,
}

pub fn synth(args: &SynthArgs, seed: Option<u64>) -> Result<()> {
    let mut scene = match &args.scene {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read scene {}", p.display()))?;
            BoxScene::parse(&text).with_context(|| format!("invalid scene {}", p.display()))?
        }
        None => BoxScene::default(),
    };
    if args.no_texture {
        scene.texture = None;
    } else if scene.texture.is_none() {
        scene.texture = Some(Texture::default());
    }
    if let (Some(s), Some(t)) = (seed, scene.texture.as_mut()) {
        t.seed = s;
    }
    let dims = Dims::with_height(args.height)?;
    let rig = CameraRig::new(args.baseline)?;
    let stage = Stage::open(None, Some(&args.out))?;
    let pair = generate_stereo_pair(&scene, &rig, dims)?;
    let gt = &pair.top;

    stage.prepare()?;
    let mut m = stage;
    let files: [(&str, &str, &EquirectImage); 7] = [
        ("top", "top.pfm", &gt.image),
        ("bottom", "bottom.pfm", &pair.bottom),
        ("gt_depth", "gt_depth.pfm", &gt.depth.values),
        ("gt_normals", "gt_normals.pfm", &gt.normals.normals),
        ("gt_reflectance", "gt_reflectance.pfm", &gt.reflectance),
        ("gt_shading", "gt_shading.pfm", &gt.shading),
        ("gt_disparity", "gt_disparity.pfm", &pair.disparity.values),
    ];
    for (name, file, img) in files {
        let path = m.path(file);
        write_pfm(img, &path)?;
        m.manifest.set_artifact(name, &path);
    }
    let path = m.path("emissive.png");
    write_mask_png(&gt.emissive, &path)?;
    m.manifest.set_artifact("emissive", &path);
    let path = m.path("top.png");
    write_png_preview(&gt.image, Preview::auto(&gt.image), None, &path)?;
    m.manifest.set_artifact("top_preview", &path);
    let path = m.path("scene.json");
    write_atomic(
        &path,
        (serde_json::to_string_pretty(&scene)? + "\n").as_bytes(),
    )?;
    m.manifest.set_artifact("scene", &path);
    m.manifest.baseline = Some(args.baseline);

    #[derive(Serialize)]
    struct Params<'a> {
        args: &'a SynthArgs,
        scene: &'a BoxScene,
    }
    let saved = m.finish(
        "synth",
        &Params {
            args,
            scene: &scene,
        },
        dims,
    )?;
    println!("{}", saved.display());
    Ok(())
}

// ---------------------------------------------------------------- depth

#[derive(Args, Debug, Serialize)]
pub struct MatchArgs {
    /// Matching window side (odd).
    #[arg(long, env = "PANO_WINDOW", default_value_t = 9)]
    pub window: usize,
    /// Largest row offset searched.
    #[arg(long, env = "PANO_MAX_DISPARITY", default_value_t = 64)]
    pub max_disparity: usize,
    /// `zncc` or `sad`.
    #[arg(long, env = "PANO_COST", default_value = "zncc")]
    pub cost: String,
    #[arg(long)]
    pub no_subpixel: bool,
    /// Largest top/bottom consistency gap in pixels.
    #[arg(long, env = "PANO_LR_THRESHOLD", default_value_t = 1.0)]
    pub lr_threshold: f64,
    /// Fraction of rows at each pole left unmatched.
    #[arg(long, env = "PANO_POLE_BAND", default_value_t = 0.05)]
    pub pole_band: f64,
    /// Windows with lower intensity standard deviation are unmatched.
    #[arg(long, env = "PANO_MIN_TEXTURE", default_value_t = 1e-4)]
    pub min_texture: f64,
}

impl MatchArgs {
    fn config(&self) -> Result<MatchConfig> {
        let cfg = MatchConfig {
            window: self.window,
            max_disparity: self.max_disparity,
            cost: self.cost.parse::<MatchCost>()?,
            subpixel: !self.no_subpixel,
            lr_check_threshold: self.lr_threshold,
            pole_band: self.pole_band,
            min_texture: self.min_texture,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct DepthArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Top panorama (PFM); defaults to the manifest's `top`.
    #[arg(long)]
    pub top: Option<PathBuf>,
    /// Bottom panorama (PFM); defaults to the manifest's `bottom`.
    #[arg(long)]
    pub bottom: Option<PathBuf>,
    #[arg(long, env = "PANO_BASELINE")]
    pub baseline: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub matching: MatchArgs,
}

pub fn depth(args: &DepthArgs) -> Result<()> {
    let mut stage = Stage::open(args.manifest.as_deref(), args.out.as_deref())?;
    let top = read_image(&stage.input(&args.top, "top", "top image")?, "top image")?;
    let bottom = read_image(
        &stage.input(&args.bottom, "bottom", "bottom image")?,
        "bottom image",
    )?;
    same_dims(top.dims(), bottom.dims(), "top and bottom images")?;
    let rig = stage.baseline(args.baseline)?;
    let cfg = args.matching.config()?;

    let disp = match_vertical(&top, &bottom, &cfg)?;
    let depth = disparity_to_depth(&disp, &rig);
    let dense = depth
        .fill_invalid_nearest()
        .map_err(|e| anyhow::anyhow!("no pixel could be matched: {e}"))?;

    stage.prepare()?;
    let outputs: [(&str, &str, &EquirectImage); 3] = [
        ("disparity", "disparity.pfm", &disp.values),
        ("depth", "depth.pfm", &depth.values),
        ("depth_dense", "depth_dense.pfm", &dense.values),
    ];
    for (name, file, img) in outputs {
        let path = stage.path(file);
        write_pfm(img, &path)?;
        stage.manifest.set_artifact(name, &path);
    }
    let path = stage.path("depth_valid.png");
    write_mask_png(&depth.valid, &path)?;
    stage.manifest.set_artifact("depth_valid", &path);
    let path = stage.path("depth.png");
    let inverse = dense.values.map(|d| 1.0 / d);
    write_png_preview(&inverse, Preview::auto(&inverse), None, &path)?;
    stage.manifest.set_artifact("depth_preview", &path);
    stage.manifest.baseline = Some(rig.baseline());
    println!("valid pixels: {:.1}%", 100.0 * depth.valid.coverage());
    let dims = top.dims();
    stage.finish("depth", args, dims)?;
    Ok(())
}

// ---------------------------------------------------------------- lightfield

#[derive(Args, Debug, Serialize)]
pub struct LightfieldArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Reference (top) panorama; defaults to the manifest's `top`.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Dense depth; defaults to the manifest's `depth_dense`.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long, env = "PANO_BASELINE")]
    pub baseline: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the light table as text (`lights.txt`) instead of binary.
    #[arg(long)]
    pub text: bool,
}

pub fn lightfield(args: &LightfieldArgs) -> Result<()> {
    let mut stage = Stage::open(args.manifest.as_deref(), args.out.as_deref())?;
    let image = read_color(&stage.input(&args.image, "top", "image")?, "image")?;
    let depth = read_dense_depth(&stage.input(&args.depth, "depth_dense", "dense depth")?)?;
    same_dims(image.dims(), depth.dims(), "image and depth")?;
    let rig = stage.baseline(args.baseline)?;
    let lights = build_light_field(&image, &depth, &rig)?;

    stage.prepare()?;
    let path = stage.path(if args.text {
        "lights.txt"
    } else {
        "lights.bin"
    });
    lights.write(&path)?;
    stage.manifest.set_artifact("lights", &path);
    stage.manifest.baseline = Some(rig.baseline());
    println!("{} lights", lights.len());
    stage.finish("lightfield", args, image.dims())?;
    Ok(())
}

// ---------------------------------------------------------------- probe

#[derive(Args, Debug, Serialize)]
pub struct ProbeArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Light field; defaults to the manifest's `lights`.
    #[arg(long)]
    pub lights: Option<PathBuf>,
    /// Query point in the top camera frame (meters).
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true, default_values_t = [0.0, 0.0, 0.0])]
    pub at: Vec<f64>,
    /// Illumination map height (width is twice this).
    #[arg(long, env = "PANO_PROBE_HEIGHT", default_value_t = 256)]
    pub height: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also render a mirror sphere of this radius at the query point.
    #[arg(long, env = "PANO_MIRROR_RADIUS")]
    pub mirror_radius: Option<f64>,
    /// Viewing direction for the mirror sphere.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true, default_values_t = [0.0, 0.0, 1.0])]
    pub view: Vec<f64>,
    /// Side of the square mirror-sphere image in pixels.
    #[arg(long, env = "PANO_MIRROR_SIZE", default_value_t = 256)]
    pub mirror_size: usize,
}

pub fn probe(args: &ProbeArgs) -> Result<()> {
    let mut stage = Stage::open(args.manifest.as_deref(), args.out.as_deref())?;
    let lights_path = stage.input(&args.lights, "lights", "light field")?;
    let lights = PointLightSet::read(&lights_path)
        .with_context(|| format!("cannot read light field {}", lights_path.display()))?;
    let at = Vec3::new(args.at[0], args.at[1], args.at[2]);
    let dims = Dims::with_height(args.height)?;
    let view = SphereDir::normalize(Vec3::new(args.view[0], args.view[1], args.view[2]))?;
    let radius = args.mirror_radius.unwrap_or(1.0);
    let size = if args.mirror_radius.is_some() {
        args.mirror_size
    } else {
        1
    };
    let (probe, map) = render_mirror_probe(&lights, &at, radius, &view, (size, size), dims)?;

    stage.prepare()?;
    let path = stage.path("illumination.pfm");
    write_pfm(&map.radiance, &path)?;
    stage.manifest.set_artifact("illumination", &path);
    let path = stage.path("illumination.png");
    write_png_preview(&map.radiance, Preview::auto(&map.radiance), None, &path)?;
    stage.manifest.set_artifact("illumination_preview", &path);
    let path = stage.path("illumination_filled.png");
    write_mask_png(&map.filled, &path)?;
    stage.manifest.set_artifact("illumination_filled", &path);
    if args.mirror_radius.is_some() {
        let preview = Preview::auto(&map.radiance);
        let mut rgba = Vec::with_capacity(size * size * 4);
        for (k, &covered) in probe.coverage.iter().enumerate() {
            rgba.extend(
                probe.rgb[3 * k..3 * k + 3]
                    .iter()
                    .map(|&x| preview.encode(x)),
            );
            rgba.push(if covered { 255 } else { 0 });
        }
        let path = stage.path("mirror.png");
        write_png_rgba(size, size, &rgba, &path)?;
        stage.manifest.set_artifact("mirror", &path);
    }
    println!("directly lit pixels: {:.1}%", 100.0 * map.filled.coverage());
    stage.finish("probe", args, dims)?;
    Ok(())
}

// ---------------------------------------------------------------- decompose

#[derive(Args, Debug, Serialize)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Dense depth; defaults to the manifest's `depth_dense`.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long)]
    pub lights: Option<PathBuf>,
    #[arg(long, env = "PANO_BASELINE")]
    pub baseline: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Height of the per-pixel illumination maps.
    #[arg(long, env = "PANO_ILLUM_HEIGHT", default_value_t = 128)]
    pub illum_height: usize,
    /// Shade every n-th pixel and interpolate the rest.
    #[arg(long, env = "PANO_STRIDE", default_value_t = 1)]
    pub stride: usize,
    /// `solid_angle` or `uniform`.
    #[arg(long, env = "PANO_WEIGHTING", default_value = "solid_angle")]
    pub weighting: String,
}

pub fn decompose(args: &DecomposeArgs) -> Result<()> {
    let mut stage = Stage::open(args.manifest.as_deref(), args.out.as_deref())?;
    let image = read_color(&stage.input(&args.image, "top", "image")?, "image")?;
    let depth = read_dense_depth(&stage.input(&args.depth, "depth_dense", "dense depth")?)?;
    same_dims(image.dims(), depth.dims(), "image and depth")?;
    let lights_path = stage.input(&args.lights, "lights", "light field")?;
    let lights = PointLightSet::read(&lights_path)
        .with_context(|| format!("cannot read light field {}", lights_path.display()))?;
    let rig = stage.baseline(args.baseline)?;
    let render = RenderConfig {
        illum_resolution: Dims::with_height(args.illum_height)?,
        weighting: args.weighting.parse::<Weighting>()?,
        stride: args.stride,
    };
    render.validate()?;
    let estimator = ClassicalEstimator {
        rig,
        lights,
        render,
    };
    let out = estimator.estimate(&image, &depth)?;
    let shading = out.shading.expect("classical estimator renders shading");

    stage.prepare()?;
    let files: [(&str, &str, &EquirectImage); 3] = [
        ("normals", "normals.pfm", &out.normals.normals),
        ("shading", "shading.pfm", &shading),
        ("reflectance", "reflectance.pfm", &out.reflectance),
    ];
    for (name, file, img) in files {
        let path = stage.path(file);
        write_pfm(img, &path)?;
        stage.manifest.set_artifact(name, &path);
    }
    let path = stage.path("normals_valid.png");
    write_mask_png(&out.normals.valid, &path)?;
    stage.manifest.set_artifact("normals_valid", &path);
    for (name, file, img, preview) in [
        (
            "normals_preview",
            "normals.png",
            &out.normals.normals,
            Preview::Signed,
        ),
        (
            "shading_preview",
            "shading.png",
            &shading,
            Preview::auto(&shading),
        ),
        (
            "reflectance_preview",
            "reflectance.png",
            &out.reflectance,
            Preview::Gamma { exposure: 1.0 },
        ),
    ] {
        let path = stage.path(file);
        write_png_preview(img, preview, None, &path)?;
        stage.manifest.set_artifact(name, &path);
    }
    stage.finish("decompose", args, image.dims())?;
    Ok(())
}

// ---------------------------------------------------------------- refine

#[derive(Args, Debug, Serialize)]
pub struct RefineArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Initial reflectance; defaults to the manifest's `reflectance`.
    #[arg(long)]
    pub reflectance: Option<PathBuf>,
    /// Initial shading; defaults to the manifest's `shading`.
    #[arg(long)]
    pub shading: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Weight of the reflectance smoothness term.
    #[arg(long, env = "PANO_LAMBDA1", default_value_t = 0.1)]
    pub lambda1: f64,
    /// Weight of the shading smoothness term.
    #[arg(long, env = "PANO_LAMBDA2", default_value_t = 10.0)]
    pub lambda2: f64,
    /// Weight of the pull toward the initial maps.
    #[arg(long, env = "PANO_LAMBDA_PROX", default_value_t = 0.01)]
    pub lambda_prox: f64,
    #[arg(long, env = "PANO_LEARNING_RATE", default_value_t = 1e-4)]
    pub learning_rate: f64,
    #[arg(long, env = "PANO_ITERATIONS", default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, env = "PANO_CHARBONNIER_EPS", default_value_t = 1e-3)]
    pub charbonnier_eps: f64,
    /// Trace every n-th iteration (plus the first and last).
    #[arg(long, env = "PANO_LOG_EVERY", default_value_t = 50)]
    pub log_every: usize,
}

pub fn refine(args: &RefineArgs) -> Result<()> {
    let mut stage = Stage::open(args.manifest.as_deref(), args.out.as_deref())?;
    let image = read_color(&stage.input(&args.image, "top", "image")?, "image")?;
    let r0 = read_color(
        &stage.input(&args.reflectance, "reflectance", "reflectance")?,
        "reflectance",
    )?;
    let s0 = read_color(
        &stage.input(&args.shading, "shading", "shading")?,
        "shading",
    )?;
    same_dims(image.dims(), r0.dims(), "image and reflectance")?;
    same_dims(image.dims(), s0.dims(), "image and shading")?;
    let cfg = RefineConfig {
        lambda1: args.lambda1,
        lambda2: args.lambda2,
        lambda_prox: args.lambda_prox,
        learning_rate: args.learning_rate,
        iterations: args.iterations,
        charbonnier_eps: args.charbonnier_eps,
        log_every: args.log_every,
        ..RefineConfig::default()
    };
    let out = match tv_refine(&image, &r0, &s0, &cfg) {
        Ok(out) => out,
        Err(PanoError::NonFinite { iteration, trace }) => {
            let last = trace.entries.last().map_or(f64::NAN, |e| e.total);
            bail!("refinement diverged at iteration {iteration} (last energy {last})");
        }
        Err(e) => return Err(e.into()),
    };

    stage.prepare()?;
    for (name, file, img) in [
        (
            "refined_reflectance",
            "refined_reflectance.pfm",
            &out.reflectance,
        ),
        ("refined_shading", "refined_shading.pfm", &out.shading),
    ] {
        let path = stage.path(file);
        write_pfm(img, &path)?;
        stage.manifest.set_artifact(name, &path);
    }
    let path = stage.path("trace.csv");
    write_atomic(&path, out.trace.to_csv().as_bytes())?;
    stage.manifest.set_artifact("trace", &path);
    let first = out.trace.entries.first().map_or(f64::NAN, |e| e.total);
    let last = out.trace.entries.last().map_or(f64::NAN, |e| e.total);
    println!("energy {first} -> {last}, scale {}", out.scale);
    stage.finish("refine", args, image.dims())?;
    Ok(())
}

// ---------------------------------------------------------------- metrics

#[derive(Args, Debug, Serialize)]
pub struct MetricsArgs {
    /// Predicted map (PFM).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth map (PFM).
    #[arg(long)]
    pub gt: PathBuf,
    /// `image` (sMSE, PSNR), `reflectance` (sMSE, scale-invariant loss) or
    /// `normals` (angular error, normal loss).
    #[arg(long, default_value = "image")]
    pub kind: String,
    /// Evaluate only where this mask PNG is non-zero.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// PSNR peak; the ground-truth maximum on the mask when omitted.
    #[arg(long, env = "PANO_PEAK")]
    pub peak: Option<f64>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn metrics(args: &MetricsArgs) -> Result<()> {
    let pred = read_image(&args.pred, "prediction")?;
    let gt = read_image(&args.gt, "ground truth")?;
    same_dims(pred.dims(), gt.dims(), "prediction and ground truth")?;
    let mask = match &args.mask {
        Some(p) => read_mask_png(p).with_context(|| format!("cannot read mask {}", p.display()))?,
        None => Mask::new(gt.dims(), true),
    };
    same_dims(mask.dims(), gt.dims(), "mask and ground truth")?;
    let reports = match args.kind.as_str() {
        "image" => vec![
            MetricReport::new("smse", smse(&pred, &gt, Some(&mask))?, &mask),
            MetricReport::new("psnr", psnr(&pred, &gt, Some(&mask), args.peak)?, &mask),
        ],
        "reflectance" => {
            let all = Mask::new(gt.dims(), true);
            vec![
                MetricReport::new("smse", smse(&pred, &gt, Some(&mask))?, &mask),
                MetricReport::new("loss_reflectance", loss_reflectance(&pred, &gt)?, &all),
            ]
        }
        "normals" => {
            let (p, g) = (NormalMap::from_image(pred)?, NormalMap::from_image(gt)?);
            let all = Mask::new(g.dims(), true);
            vec![
                MetricReport::new("mae_degrees", mae_degrees(&p, &g, Some(&mask))?, &mask),
                MetricReport::new("loss_normal", loss_normal(&p, &g)?, &all),
            ]
        }
        other => bail!("unknown metric kind {other:?} (expected image, reflectance or normals)"),
    };
    let csv = reports_to_csv(&reports);
    match &args.out {
        Some(p) => write_atomic(p, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}
