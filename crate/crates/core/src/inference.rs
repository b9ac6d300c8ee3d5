//! Prediction on images of arbitrary size.

use crate::error::Result;
use crate::network::{Network, NetworkInput, NetworkParams, Weights};
use crate::raster::{check_dims, AlphaMatte, RgbImage, Trimap, TrimapLabel};
use crate::resample::{resize_bilinear, resize_nearest};

/// Resizes the inputs to the model size, predicts, resizes the matte back
/// and overwrites known trimap regions (1 on Foreground, 0 on Background).
pub fn infer(params: &NetworkParams, image: &RgbImage, trimap: &Trimap) -> Result<AlphaMatte> {
    check_dims(image.dims(), trimap.dims())?;
    let net = Network::new(&params.config)?;
    let weights = Weights::from_params(params)?;
    let (h, w) = image.dims();
    let s = params.config.input_size;
    let small_image = image.map_planes(s, s, |p| resize_bilinear(p, h, w, s, s));
    let small_trimap = trimap.map_plane(s, s, |p| resize_nearest(p, h, w, s, s));
    let pred = net.predict(&weights, &NetworkInput::new(&small_image, &small_trimap)?)?;
    let restored = pred.map_plane(h, w, |p| resize_bilinear(p, s, s, h, w));
    Ok(apply_known_regions(&restored, trimap))
}

pub fn apply_known_regions(alpha: &AlphaMatte, trimap: &Trimap) -> AlphaMatte {
    let (h, w) = alpha.dims();
    AlphaMatte::from_fn(h, w, |y, x| match trimap.get(y, x) {
        TrimapLabel::Foreground => 1.0,
        TrimapLabel::Background => 0.0,
        TrimapLabel::Unknown => alpha.get(y, x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ModelConfig;

    #[test]
    fn known_regions_are_forced() {
        let params = NetworkParams::init(&ModelConfig::desk(32)).unwrap();
        let img = RgbImage::filled(45, 50, [0.3, 0.6, 0.2]);
        for (label, want) in [(TrimapLabel::Foreground, 1.0), (TrimapLabel::Background, 0.0)] {
            let tri = Trimap::filled(45, 50, label);
            let a = infer(&params, &img, &tri).unwrap();
            assert_eq!(a.dims(), (45, 50));
            assert!(a.data().iter().all(|&v| v == want));
        }
    }

    #[test]
    fn mismatched_trimap_is_rejected() {
        let params = NetworkParams::init(&ModelConfig::desk(32)).unwrap();
        let img = RgbImage::filled(40, 40, [0.0; 3]);
        let tri = Trimap::filled(41, 40, TrimapLabel::Unknown);
        assert!(infer(&params, &img, &tri).unwrap_err().is_config());
    }
}
