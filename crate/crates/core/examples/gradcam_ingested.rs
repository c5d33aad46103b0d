//! Grad-CAM, CAM and ingested weights on a hand-built feature map, without
//! any model backend.

use conceptor_cam::cam::{cam_weights, gradcam_weights, saliency, ChannelWeights, FeatureMap, SaliencyMode};
use conceptor_cam::tensor::Matrix;

fn main() -> conceptor_cam::Result<()> {
    // Two channels on a 3x3 grid: a left blob and a right blob.
    let f = FeatureMap::new(
        Matrix::from_fn(9, 2, |p, k| {
            let x = p % 3;
            if k == 0 { (2 - x) as f64 } else { x as f64 }
        }),
        (3, 3),
    )?;
    let gradients = Matrix::from_fn(9, 2, |_, k| if k == 0 { 0.4 } else { -0.1 });
    let fc = Matrix::from_rows(&[[0.2, 0.9], [0.7, -0.3]])?;
    let fc_class0 = Matrix::from_rows(&[[fc.get(0, 0), fc.get(0, 1)]])?;

    let schemes = [
        ("grad", gradcam_weights(&gradients)?),
        ("cam", cam_weights(&fc_class0)?),
        ("ingested", ChannelWeights::ingested(vec![0.1, 2.0])?),
    ];
    for (name, w) in schemes {
        let (map, _) = saliency(&f, &w, SaliencyMode::Comprehensive, 1.0, (6, 6))?;
        let row: Vec<String> = (0..6).map(|x| format!("{:.2}", map.get(3, x))).collect();
        println!("{name:>8} weights {:?} -> middle row {}", w.values(), row.join(" "));
    }
    Ok(())
}
