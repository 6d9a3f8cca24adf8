//! Joint refinement of reflectance and shading.
//!
//! Minimizes
//!
//! ```text
//! E(R, S) = ‖I − s·R⊙S‖² + λ₁ Σ ρ(∇R) + λ₂ ‖∇S‖² + λ_prox (‖R − R₀‖² + ‖S − S₀‖²)
//! ```
//!
//! where `ρ(x) = √(x² + ε²) − ε` is a smoothed absolute value, `∇` is the
//! forward difference on the sphere (azimuth wraps, the last row has no
//! vertical difference) and `s` is the least-squares scale between `R⊙S`
//! and `I`. Descent is plain gradient descent with step halving, so the
//! energy never increases.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PanoError, Result};
use crate::geometry::REFLECTANCE_MAX;
use crate::image::{Dims, EquirectImage};
use crate::render::least_squares_scale;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_prox: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub charbonnier_eps: f64,
    pub log_every: usize,
    /// Halvings tried before an iteration's step is rejected.
    pub max_halvings: u32,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            lambda1: 0.1,
            lambda2: 10.0,
            lambda_prox: 0.01,
            learning_rate: 1e-4,
            iterations: 1000,
            charbonnier_eps: 1e-3,
            log_every: 50,
            max_halvings: 5,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.lambda1,
            self.lambda2,
            self.lambda_prox,
            self.learning_rate,
        ];
        if !weights.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(PanoError::domain(
                "weights and learning rate must be finite and non-negative",
            ));
        }
        if self.iterations == 0 {
            return Err(PanoError::domain("iterations must be at least 1"));
        }
        if !(self.charbonnier_eps > 0.0) {
            return Err(PanoError::domain("charbonnier_eps must be positive"));
        }
        if self.log_every == 0 {
            return Err(PanoError::domain("log_every must be at least 1"));
        }
        Ok(())
    }
}

/// Energy terms, each already multiplied by its weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub data: f64,
    pub tv_r: f64,
    pub tv_s: f64,
    pub prox: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.data + self.tv_r + self.tv_s + self.prox
    }

    fn add(self, o: EnergyTerms) -> EnergyTerms {
        EnergyTerms {
            data: self.data + o.data,
            tv_r: self.tv_r + o.tv_r,
            tv_s: self.tv_s + o.tv_s,
            prox: self.prox + o.prox,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub total: f64,
    pub terms: EnergyTerms,
    pub scale: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineTrace {
    pub entries: Vec<TraceEntry>,
}

impl RefineTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,total,data,tv_r,tv_s,prox,scale\n");
        for e in &self.entries {
            let t = &e.terms;
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                e.iteration, e.total, t.data, t.tv_r, t.tv_s, t.prox, e.scale
            )
            .unwrap();
        }
        s
    }

    pub fn is_non_increasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].total <= w[0].total)
    }
}

/// Forward differences of every channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalGradient {
    /// `x(u+1, v) − x(u, v)`, with `u + 1` wrapping.
    pub du: EquirectImage,
    /// `x(u, v+1) − x(u, v)`; zero on the last row.
    pub dv: EquirectImage,
}

pub fn spherical_gradient(img: &EquirectImage) -> SphericalGradient {
    let (dims, c) = (img.dims(), img.channels());
    let x = img.data();
    let mut du = vec![0.0; x.len()];
    let mut dv = vec![0.0; x.len()];
    for v in 0..dims.height {
        for u in 0..dims.width {
            let p = dims.index(u, v);
            let right = dims.index((u + 1) % dims.width, v);
            for k in 0..c {
                du[c * p + k] = x[c * right + k] - x[c * p + k];
                if v + 1 < dims.height {
                    dv[c * p + k] = x[c * (p + dims.width) + k] - x[c * p + k];
                }
            }
        }
    }
    SphericalGradient {
        du: EquirectImage::from_vec(dims, c, du).expect("finite differences"),
        dv: EquirectImage::from_vec(dims, c, dv).expect("finite differences"),
    }
}

#[derive(Clone, Copy)]
enum Penalty {
    Charbonnier(f64),
    Quadratic,
}

impl Penalty {
    #[inline]
    fn value(self, g: f64) -> f64 {
        match self {
            Penalty::Charbonnier(eps) => (g * g + eps * eps).sqrt() - eps,
            Penalty::Quadratic => g * g,
        }
    }

    #[inline]
    fn deriv(self, g: f64) -> f64 {
        match self {
            Penalty::Charbonnier(eps) => g / (g * g + eps * eps).sqrt(),
            Penalty::Quadratic => 2.0 * g,
        }
    }
}

/// Starting maps that the proximity term pulls toward.
#[derive(Clone, Copy, Debug)]
pub struct Anchors<'a> {
    pub reflectance: &'a EquirectImage,
    pub shading: &'a EquirectImage,
}

/// The refinement problem for one image.
struct Problem<'a> {
    image: &'a EquirectImage,
    cfg: &'a RefineConfig,
    anchors: Option<Anchors<'a>>,
}

impl Problem<'_> {
    fn dims(&self) -> Dims {
        self.image.dims()
    }

    fn channels(&self) -> usize {
        self.image.channels()
    }

    /// Smoothness penalty of row `v` of `x`.
    fn row_penalty(&self, x: &[f64], v: usize, pen: Penalty) -> f64 {
        let (dims, c) = (self.dims(), self.channels());
        let w = dims.width;
        let mut sum = 0.0;
        for u in 0..w {
            let p = c * (v * w + u);
            let right = c * (v * w + (u + 1) % w);
            for k in 0..c {
                sum += pen.value(x[right + k] - x[p + k]);
                if v + 1 < dims.height {
                    sum += pen.value(x[p + c * w + k] - x[p + k]);
                }
            }
        }
        sum
    }

    /// Adds `weight · ∂(Σ penalty)/∂x` for row `v` into `out`.
    fn row_penalty_grad(&self, x: &[f64], v: usize, pen: Penalty, weight: f64, out: &mut [f64]) {
        let (dims, c) = (self.dims(), self.channels());
        let w = dims.width;
        for u in 0..w {
            let p = c * (v * w + u);
            let right = c * (v * w + (u + 1) % w);
            let left = c * (v * w + (u + w - 1) % w);
            for k in 0..c {
                let xp = x[p + k];
                let mut g = pen.deriv(xp - x[left + k]) - pen.deriv(x[right + k] - xp);
                if v > 0 {
                    g += pen.deriv(xp - x[p - c * w + k]);
                }
                if v + 1 < dims.height {
                    g -= pen.deriv(x[p + c * w + k] - xp);
                }
                out[c * u + k] += weight * g;
            }
        }
    }

    fn energy(&self, r: &EquirectImage, sh: &EquirectImage, s: f64) -> EnergyTerms {
        let cfg = self.cfg;
        let (dims, c) = (self.dims(), self.channels());
        let row_len = dims.width * c;
        let (i, rd, sd) = (self.image.data(), r.data(), sh.data());
        let rows: Vec<EnergyTerms> = (0..dims.height)
            .into_par_iter()
            .map(|v| {
                let span = v * row_len..(v + 1) * row_len;
                let data = span
                    .clone()
                    .map(|j| (i[j] - s * rd[j] * sd[j]).powi(2))
                    .sum::<f64>();
                let prox = match &self.anchors {
                    Some(a) => {
                        let (r0, s0) = (a.reflectance.data(), a.shading.data());
                        span.map(|j| (rd[j] - r0[j]).powi(2) + (sd[j] - s0[j]).powi(2))
                            .sum::<f64>()
                    }
                    None => 0.0,
                };
                EnergyTerms {
                    data,
                    tv_r: self.row_penalty(rd, v, Penalty::Charbonnier(cfg.charbonnier_eps)),
                    tv_s: self.row_penalty(sd, v, Penalty::Quadratic),
                    prox,
                }
            })
            .collect();
        let raw = rows
            .into_iter()
            .fold(EnergyTerms::default(), EnergyTerms::add);
        EnergyTerms {
            data: raw.data,
            tv_r: cfg.lambda1 * raw.tv_r,
            tv_s: cfg.lambda2 * raw.tv_s,
            prox: cfg.lambda_prox * raw.prox,
        }
    }

    /// `(∂E/∂R, ∂E/∂S)` at fixed scale `s`.
    fn gradient(
        &self,
        r: &EquirectImage,
        sh: &EquirectImage,
        s: f64,
    ) -> (EquirectImage, EquirectImage) {
        let cfg = self.cfg;
        let (dims, c) = (self.dims(), self.channels());
        let row_len = dims.width * c;
        let (i, rd, sd) = (self.image.data(), r.data(), sh.data());
        let mut gr = vec![0.0; rd.len()];
        let mut gs = vec![0.0; sd.len()];
        gr.par_chunks_mut(row_len)
            .zip(gs.par_chunks_mut(row_len))
            .enumerate()
            .for_each(|(v, (gr_row, gs_row))| {
                let off = v * row_len;
                for j in 0..row_len {
                    let k = off + j;
                    let resid = i[k] - s * rd[k] * sd[k];
                    gr_row[j] = -2.0 * s * sd[k] * resid;
                    gs_row[j] = -2.0 * s * rd[k] * resid;
                }
                if let Some(a) = &self.anchors {
                    let (r0, s0) = (a.reflectance.data(), a.shading.data());
                    for j in 0..row_len {
                        let k = off + j;
                        gr_row[j] += 2.0 * cfg.lambda_prox * (rd[k] - r0[k]);
                        gs_row[j] += 2.0 * cfg.lambda_prox * (sd[k] - s0[k]);
                    }
                }
                if cfg.lambda1 != 0.0 {
                    let pen = Penalty::Charbonnier(cfg.charbonnier_eps);
                    self.row_penalty_grad(rd, v, pen, cfg.lambda1, gr_row);
                }
                if cfg.lambda2 != 0.0 {
                    self.row_penalty_grad(sd, v, Penalty::Quadratic, cfg.lambda2, gs_row);
                }
            });
        (
            EquirectImage::from_vec(dims, c, gr).expect("finite gradient"),
            EquirectImage::from_vec(dims, c, gs).expect("finite gradient"),
        )
    }

    /// Least-squares scale of `R⊙S` onto the image; 1 when `R⊙S` vanishes.
    fn scale(&self, r: &EquirectImage, sh: &EquirectImage) -> f64 {
        let prod = r.data().iter().zip(sh.data()).map(|(a, b)| a * b).collect();
        let prod = EquirectImage::from_vec(r.dims(), r.channels(), prod).expect("finite product");
        least_squares_scale(&prod, self.image, None).unwrap_or(1.0)
    }
}

fn check_shapes(i: &EquirectImage, r: &EquirectImage, s: &EquirectImage) -> Result<()> {
    i.same_shape(r)?;
    i.same_shape(s)
}

/// Energy without the proximity term.
pub fn tv_energy(
    i: &EquirectImage,
    r: &EquirectImage,
    sh: &EquirectImage,
    s: f64,
    cfg: &RefineConfig,
) -> Result<EnergyTerms> {
    energy(i, r, sh, s, cfg, None)
}

/// Energy including the proximity term when `anchors` are given.
pub fn energy(
    i: &EquirectImage,
    r: &EquirectImage,
    sh: &EquirectImage,
    s: f64,
    cfg: &RefineConfig,
    anchors: Option<Anchors<'_>>,
) -> Result<EnergyTerms> {
    check_shapes(i, r, sh)?;
    Ok(Problem {
        image: i,
        cfg,
        anchors,
    }
    .energy(r, sh, s))
}

/// Analytic `(∂E/∂R, ∂E/∂S)` at fixed scale `s`.
pub fn energy_gradient(
    i: &EquirectImage,
    r: &EquirectImage,
    sh: &EquirectImage,
    s: f64,
    cfg: &RefineConfig,
    anchors: Option<Anchors<'_>>,
) -> Result<(EquirectImage, EquirectImage)> {
    check_shapes(i, r, sh)?;
    if let Some(a) = &anchors {
        check_shapes(i, a.reflectance, a.shading)?;
    }
    Ok(Problem {
        image: i,
        cfg,
        anchors,
    }
    .gradient(r, sh, s))
}

#[derive(Clone, Debug)]
pub struct RefineOutput {
    pub reflectance: EquirectImage,
    pub shading: EquirectImage,
    pub scale: f64,
    pub trace: RefineTrace,
}

/// Gradient descent on the energy starting from `(R₀, S₀)`.
///
/// Each iteration recomputes `s`, steps both maps along the negative
/// gradient, projects reflectance onto `[0, REFLECTANCE_MAX]` and shading
/// onto `[0, ∞)`, and halves the step while the energy would increase. A
/// step still increasing the energy after `max_halvings` halvings is
/// skipped.
pub fn tv_refine(
    i: &EquirectImage,
    r0: &EquirectImage,
    s0: &EquirectImage,
    cfg: &RefineConfig,
) -> Result<RefineOutput> {
    cfg.validate()?;
    check_shapes(i, r0, s0)?;
    if !r0.is_non_negative() || !s0.is_non_negative() {
        return Err(PanoError::domain(
            "initial reflectance and shading must be non-negative",
        ));
    }
    let problem = Problem {
        image: i,
        cfg,
        anchors: Some(Anchors {
            reflectance: r0,
            shading: s0,
        }),
    };
    let mut r = r0.clone();
    let mut sh = s0.clone();
    let mut trace = RefineTrace::default();
    let mut s = problem.scale(&r, &sh);
    let terms = problem.energy(&r, &sh, s);
    let log = |trace: &mut RefineTrace, iteration, terms: EnergyTerms, scale| {
        trace.entries.push(TraceEntry {
            iteration,
            total: terms.total(),
            terms,
            scale,
        })
    };
    log(&mut trace, 0, terms, s);
    if !terms.total().is_finite() {
        return Err(PanoError::NonFinite {
            iteration: 0,
            trace: Box::new(trace),
        });
    }

    let n = r.data().len();
    let mut r_try = vec![0.0; n];
    let mut s_try = vec![0.0; n];
    for it in 1..=cfg.iterations {
        s = problem.scale(&r, &sh);
        let current = problem.energy(&r, &sh, s);
        let (gr, gs) = problem.gradient(&r, &sh, s);
        if !current.total().is_finite() || !gr.data().iter().chain(gs.data()).all(|g| g.is_finite())
        {
            log(&mut trace, it, current, s);
            return Err(PanoError::NonFinite {
                iteration: it,
                trace: Box::new(trace),
            });
        }
        let mut step = cfg.learning_rate;
        let mut accepted = current;
        for _ in 0..=cfg.max_halvings {
            for j in 0..n {
                r_try[j] = (r.data()[j] - step * gr.data()[j]).clamp(0.0, REFLECTANCE_MAX);
                s_try[j] = (sh.data()[j] - step * gs.data()[j]).max(0.0);
            }
            let rt = EquirectImage::from_vec(r.dims(), r.channels(), std::mem::take(&mut r_try))?;
            let st = EquirectImage::from_vec(sh.dims(), sh.channels(), std::mem::take(&mut s_try))?;
            let e = problem.energy(&rt, &st, s);
            if e.total().is_nan() {
                log(&mut trace, it, e, s);
                return Err(PanoError::NonFinite {
                    iteration: it,
                    trace: Box::new(trace),
                });
            }
            if e.total() <= current.total() {
                r_try = std::mem::replace(&mut r, rt).into_vec();
                s_try = std::mem::replace(&mut sh, st).into_vec();
                accepted = e;
                break;
            }
            r_try = rt.into_vec();
            s_try = st.into_vec();
            step *= 0.5;
        }
        if it % cfg.log_every == 0 || it == cfg.iterations {
            log(&mut trace, it, accepted, s);
        }
    }
    Ok(RefineOutput {
        reflectance: r,
        shading: sh,
        scale: s,
        trace,
    })
}

/// Largest relative difference between analytic and central finite
/// difference (`h = 1e-5`) partial derivatives over `probes` random entries
/// of each of `R` and `S`, at the least-squares scale of the given maps.
/// Relative errors use `max(|analytic|, |numeric|, 1e-3)` as denominator so
/// entries with vanishing gradient are compared absolutely.
pub fn numeric_gradient_check(
    i: &EquirectImage,
    r: &EquirectImage,
    sh: &EquirectImage,
    anchors: Option<Anchors<'_>>,
    cfg: &RefineConfig,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    const H: f64 = 1e-5;
    check_shapes(i, r, sh)?;
    if i.dims().len() > 16 * 32 {
        return Err(PanoError::domain(
            "gradient check is limited to 16x32 images",
        ));
    }
    let problem = Problem {
        image: i,
        cfg,
        anchors,
    };
    let s = problem.scale(r, sh);
    let (gr, gs) = problem.gradient(r, sh, s);
    let n = r.data().len();
    // xorshift64*: probe positions only need to be spread out, not strong.
    let mut state = seed.wrapping_mul(0x2545_F491_4F6C_DD1D) | 1;
    let mut next = move || {
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        (state.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 11) as usize % n
    };
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        for which in 0..2 {
            let j = next();
            let (analytic, numeric) = {
                let (base, other) = if which == 0 { (r, sh) } else { (sh, r) };
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus.data_mut()[j] += H;
                minus.data_mut()[j] -= H;
                let e = |m: &EquirectImage| {
                    if which == 0 {
                        problem.energy(m, other, s).total()
                    } else {
                        problem.energy(other, m, s).total()
                    }
                };
                let numeric = (e(&plus) - e(&minus)) / (2.0 * H);
                let analytic = if which == 0 {
                    gr.data()[j]
                } else {
                    gs.data()[j]
                };
                (analytic, numeric)
            };
            let denom = analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
