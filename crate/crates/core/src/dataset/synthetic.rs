use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, LabeledImage};
use crate::error::{Error, Result};
use crate::imaging::{hsv_to_rgb, HsvPixel, RgbImage};

/// Classes are spaced around the hue circle; beyond this count neighbouring
/// signatures overlap once jitter is applied.
pub const MAX_SYNTHETIC_CLASSES: usize = 24;

const HUE_JITTER_DEG: f64 = 8.0;
const PIXEL_HUE_NOISE_DEG: f64 = 3.0;
const BACKGROUND_MAX_SATURATION: f64 = 0.12;

/// Signature petal hue of class `k` in degrees.
pub fn signature_hue(k: usize, num_classes: usize) -> f64 {
    k as f64 * 360.0 / num_classes as f64
}

struct Rosette {
    cx: f64,
    cy: f64,
    radius: f64,
    petals: f64,
    rotation: f64,
    hue: f64,
}

impl Rosette {
    /// Petal outline in polar form: full radius at the petal tips, 35% of it
    /// between petals.
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let r = dx.hypot(dy);
        let phi = dy.atan2(dx) - self.rotation;
        let lobe = (self.petals * phi / 2.0).cos().abs();
        r <= self.radius * (0.35 + 0.65 * lobe)
    }
}

fn render(rng: &mut ChaCha8Rng, size: usize, class_hue: f64) -> RgbImage {
    let s = size as f64;
    let radius = rng.random_range(0.25..=0.4) * s;
    // keep petal tips clear of the outermost pixels
    let margin = (radius + 0.05 * s + 1.0).min(s / 2.0);
    let rosette = Rosette {
        cx: rng.random_range(margin..=s - margin),
        cy: rng.random_range(margin..=s - margin),
        radius,
        petals: rng.random_range(5..=8) as f64,
        rotation: rng.random_range(0.0..TAU),
        hue: (class_hue + rng.random_range(-HUE_JITTER_DEG..=HUE_JITTER_DEG)).rem_euclid(360.0),
    };
    let petal_saturation: f64 = rng.random_range(0.75..=1.0);
    let petal_value: f64 = rng.random_range(0.7..=1.0);

    let bg_hue = rng.random_range(0.0..360.0);
    let bg_saturation: f64 = rng.random_range(0.0..=0.08);
    let bg_value = rng.random_range(0.3..=0.75);
    let (fx, fy) = (rng.random_range(0.2..1.2), rng.random_range(0.2..1.2));
    let phase = rng.random_range(0.0..TAU);

    RgbImage::from_fn(size, size, |x, y| {
        let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
        let hsv = if rosette.contains(xf, yf) {
            HsvPixel {
                hue: Some(rosette.hue + rng.random_range(-PIXEL_HUE_NOISE_DEG..=PIXEL_HUE_NOISE_DEG)),
                saturation: (petal_saturation + rng.random_range(-0.05..=0.05)).clamp(0.7, 1.0),
                value: (petal_value + rng.random_range(-0.05..=0.05)).clamp(0.6, 1.0),
            }
        } else {
            let wave = (fx * xf + phase).sin() * (fy * yf).cos();
            HsvPixel {
                hue: Some(bg_hue + rng.random_range(-20.0..=20.0)),
                saturation: (bg_saturation + rng.random_range(0.0..=0.03)).min(BACKGROUND_MAX_SATURATION),
                value: (bg_value + 0.12 * wave + rng.random_range(-0.04..=0.04)).clamp(0.05, 0.95),
            }
        };
        hsv_to_rgb(hsv)
    })
}

/// Renders `per_class` rosettes for each of `num_classes` hue classes.
///
/// Output depends only on the arguments. Item `i` of class `k` gets id
/// `c{k:02}_{i:04}` and draws from its own random stream, so items are
/// independent of one another.
pub fn generate_synthetic_flowers(
    num_classes: usize,
    per_class: usize,
    image_size: usize,
    seed: u64,
) -> Result<Dataset> {
    if num_classes > MAX_SYNTHETIC_CLASSES {
        return Err(Error::TooManyClasses(num_classes));
    }
    if num_classes < 2 || per_class == 0 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 classes and 1 item per class, got {num_classes} x {per_class}"
        )));
    }
    if image_size < 8 {
        return Err(Error::InvalidConfig(format!("image size must be >= 8, got {image_size}")));
    }
    let class_names: Vec<String> = (0..num_classes)
        .map(|k| format!("hue{:03}", signature_hue(k, num_classes).round() as u32))
        .collect();
    let mut items = Vec::with_capacity(num_classes * per_class);
    for k in 0..num_classes {
        for i in 0..per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((k * per_class + i) as u64);
            items.push(LabeledImage {
                id: format!("c{k:02}_{i:04}"),
                image: render(&mut rng, image_size, signature_hue(k, num_classes)),
                label: k,
                class_name: class_names[k].clone(),
            });
        }
    }
    Dataset::new(items, class_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::rgb_to_hsv;

    fn circular_distance(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(360.0);
        d.min(360.0 - d)
    }

    /// Circular mean hue over strongly saturated pixels.
    fn mean_foreground_hue(image: &RgbImage) -> Option<f64> {
        let (mut sx, mut sy) = (0.0, 0.0);
        for px in image.pixels() {
            let hsv = rgb_to_hsv(px[0], px[1], px[2]);
            if let (Some(h), true) = (hsv.hue, hsv.saturation > 0.5) {
                sx += h.to_radians().cos();
                sy += h.to_radians().sin();
            }
        }
        (sx != 0.0 || sy != 0.0).then(|| sy.atan2(sx).to_degrees().rem_euclid(360.0))
    }

    #[test]
    fn shape_and_determinism() {
        let a = generate_synthetic_flowers(8, 50, 32, 7).unwrap();
        assert_eq!(a.len(), 400);
        assert_eq!(a.num_classes(), 8);
        assert_eq!(a.class_names()[1], "hue045");
        let b = generate_synthetic_flowers(8, 50, 32, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_flowers(8, 50, 32, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn same_class_items_differ() {
        let ds = generate_synthetic_flowers(3, 2, 32, 1).unwrap();
        let items = ds.items();
        assert_eq!(items[0].label, items[1].label);
        assert_ne!(items[0].image, items[1].image);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(generate_synthetic_flowers(25, 1, 32, 0), Err(Error::TooManyClasses(25))));
        assert!(generate_synthetic_flowers(1, 1, 32, 0).is_err());
        assert!(generate_synthetic_flowers(2, 0, 32, 0).is_err());
        assert!(generate_synthetic_flowers(2, 1, 4, 0).is_err());
    }

    #[test]
    fn background_stays_below_saturation_floor() {
        let ds = generate_synthetic_flowers(4, 5, 32, 3).unwrap();
        for item in ds.items() {
            let corner = item.image.get(0, 0);
            let hsv = rgb_to_hsv(corner[0], corner[1], corner[2]);
            let flower = hsv.saturation > 0.5;
            assert!(flower || hsv.saturation < 0.15, "{}: {hsv:?}", item.id);
        }
    }

    #[test]
    fn hue_centroid_classifier_is_accurate() {
        for (classes, seed) in [(8, 7), (24, 11)] {
            let ds = generate_synthetic_flowers(classes, 20, 32, seed).unwrap();
            let correct = ds
                .items()
                .iter()
                .filter(|item| {
                    let hue = mean_foreground_hue(&item.image).expect("flower pixels present");
                    let nearest = (0..classes)
                        .min_by(|&a, &b| {
                            circular_distance(hue, signature_hue(a, classes))
                                .total_cmp(&circular_distance(hue, signature_hue(b, classes)))
                        })
                        .unwrap();
                    nearest == item.label
                })
                .count();
            let accuracy = correct as f64 / ds.len() as f64;
            assert!(accuracy >= 0.9, "{classes} classes: accuracy {accuracy}");
        }
    }
}
