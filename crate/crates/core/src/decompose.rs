//! Classical intrinsic decomposition: normals from depth, shading rendered
//! from the image's own light field, reflectance as image over shading.

use crate::envlight::{build_light_field, PointLightSet};
use crate::equirect::CameraRig;
use crate::error::Result;
use crate::geometry::{normals_from_depth, reflectance_init, IntrinsicEstimator, Intrinsics};
use crate::image::EquirectImage;
use crate::render::{render_shading, RenderConfig};
use crate::stereo::DepthMap;

/// Estimator that shades each pixel from a fixed light field.
#[derive(Clone, Debug)]
pub struct ClassicalEstimator {
    pub rig: CameraRig,
    pub lights: PointLightSet,
    pub render: RenderConfig,
}

impl IntrinsicEstimator for ClassicalEstimator {
    fn estimate(&self, image: &EquirectImage, depth: &DepthMap) -> Result<Intrinsics> {
        let normals = normals_from_depth(depth, &self.rig)?;
        let shading = render_shading(&self.lights, depth, &normals, &self.rig, &self.render)?;
        let reflectance = reflectance_init(image, &shading)?;
        Ok(Intrinsics {
            reflectance,
            normals,
            shading: Some(shading),
        })
    }
}

/// Builds the light field from `image` and `depth`, then runs
/// [`ClassicalEstimator`] on the same pair.
pub fn decompose(
    image: &EquirectImage,
    depth: &DepthMap,
    rig: &CameraRig,
    render: &RenderConfig,
) -> Result<Intrinsics> {
    let lights = build_light_field(image, depth, rig)?;
    ClassicalEstimator {
        rig: *rig,
        lights,
        render: *render,
    }
    .estimate(image, depth)
}
