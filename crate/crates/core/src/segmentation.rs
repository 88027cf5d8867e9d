//! Hue-histogram background removal.
//!
//! The background starts as the image border band. Each pass histograms the
//! hues of the current background, takes the most frequent hue bin that has
//! not been removed yet, and relabels every pixel in the image carrying that
//! hue as background. The first pass also sweeps away achromatic and
//! low-saturation pixels. Whatever survives is the foreground, which is
//! written out on a pure black background.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{border_mask, rgb_to_hsv, HsvPixel, PixelMask, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub bin_count: usize,
    pub border_band_fraction: f64,
    pub saturation_floor: f64,
    pub background_stop_fraction: f64,
    pub max_iterations: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            bin_count: 36,
            border_band_fraction: 0.02,
            saturation_floor: 0.15,
            background_stop_fraction: 0.98,
            max_iterations: 16,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.bin_count < 2 {
            return bad(format!("bin_count must be >= 2, got {}", self.bin_count));
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be >= 1".into());
        }
        if !(self.border_band_fraction > 0.0 && self.border_band_fraction <= 0.5) {
            return bad(format!(
                "border_band_fraction must be in (0, 0.5], got {}",
                self.border_band_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.saturation_floor) {
            return bad(format!(
                "saturation_floor must be in [0, 1], got {}",
                self.saturation_floor
            ));
        }
        if !(self.background_stop_fraction > 0.0 && self.background_stop_fraction <= 1.0) {
            return bad(format!(
                "background_stop_fraction must be in (0, 1], got {}",
                self.background_stop_fraction
            ));
        }
        Ok(())
    }

    /// Bin of a hue in degrees.
    pub fn bin_of(&self, hue: f64) -> usize {
        let width = 360.0 / self.bin_count as f64;
        ((hue / width).floor() as usize).min(self.bin_count - 1)
    }

    /// The bin a pixel votes for, or `None` when it is achromatic or below the
    /// saturation floor.
    pub fn eligible_bin(&self, hsv: &HsvPixel) -> Option<usize> {
        match hsv.hue {
            Some(h) if hsv.saturation >= self.saturation_floor => Some(self.bin_of(h)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HueHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl HueHistogram {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationResult {
    /// `true` marks foreground.
    pub mask: PixelMask,
    pub output: RgbImage,
    pub iterations_used: usize,
    pub removed_bins: Vec<usize>,
}

impl SegmentationResult {
    pub fn foreground_fraction(&self) -> f64 {
        self.mask.count() as f64 / self.mask.len() as f64
    }
}

/// Tallies the hue bins of masked pixels that have a defined hue and enough
/// saturation.
pub fn build_hue_histogram(
    image: &RgbImage,
    mask: &PixelMask,
    config: &SegmentationConfig,
) -> Result<HueHistogram> {
    mask.check_same_size(image.dimensions())?;
    let mut counts = vec![0u64; config.bin_count];
    for (px, &selected) in image.pixels().iter().zip(mask.bits()) {
        if !selected {
            continue;
        }
        if let Some(bin) = config.eligible_bin(&rgb_to_hsv(px[0], px[1], px[2])) {
            counts[bin] += 1;
        }
    }
    Ok(HueHistogram::from_counts(counts))
}

/// Index of the largest count; ties go to the lowest index.
pub fn dominant_hue_bin(hist: &HueHistogram) -> Result<usize> {
    if hist.total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let mut best = 0;
    for (i, &c) in hist.counts.iter().enumerate() {
        if c > hist.counts[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Keeps pixels where the mask is set and blacks out the rest.
pub fn apply_black_background(image: &RgbImage, mask: &PixelMask) -> Result<RgbImage> {
    mask.check_same_size(image.dimensions())?;
    let pixels = image
        .pixels()
        .iter()
        .zip(mask.bits())
        .map(|(&px, &keep)| if keep { px } else { [0, 0, 0] })
        .collect();
    RgbImage::new(image.width(), image.height(), pixels)
}

pub fn segment(image: &RgbImage, config: &SegmentationConfig) -> Result<SegmentationResult> {
    config.validate()?;
    let (w, h) = image.dimensions();
    let n = w * h;
    let bins: Vec<Option<usize>> = image
        .pixels()
        .iter()
        .map(|px| config.eligible_bin(&rgb_to_hsv(px[0], px[1], px[2])))
        .collect();

    let mut background = border_mask(image, config.border_band_fraction);
    let mut removed = vec![false; config.bin_count];
    let mut removed_bins = Vec::new();
    let mut iterations_used = 0;
    let mut background_count = background.count();

    for iteration in 0..config.max_iterations {
        iterations_used += 1;
        if iteration == 0 {
            for (i, bin) in bins.iter().enumerate() {
                if bin.is_none() && !background.bits()[i] {
                    background.set(i % w, i / w, true);
                    background_count += 1;
                }
            }
        }

        let mut counts = vec![0u64; config.bin_count];
        for (bin, &bg) in bins.iter().zip(background.bits()) {
            if let (Some(b), true) = (bin, bg) {
                if !removed[*b] {
                    counts[*b] += 1;
                }
            }
        }
        let hist = HueHistogram::from_counts(counts);
        let Ok(dominant) = dominant_hue_bin(&hist) else {
            break;
        };
        removed[dominant] = true;
        removed_bins.push(dominant);
        for (i, bin) in bins.iter().enumerate() {
            if *bin == Some(dominant) && !background.bits()[i] {
                background.set(i % w, i / w, true);
                background_count += 1;
            }
        }
        if background_count as f64 >= config.background_stop_fraction * n as f64 {
            break;
        }
    }

    let mask = background.invert();
    if mask.count() == 0 {
        return Err(Error::EmptyForeground);
    }
    let output = apply_black_background(image, &mask)?;
    Ok(SegmentationResult {
        mask,
        output,
        iterations_used,
        removed_bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::hsv_to_rgb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hue_px(h: f64) -> [u8; 3] {
        hsv_to_rgb(HsvPixel {
            hue: Some(h),
            saturation: 0.9,
            value: 0.8,
        })
    }

    #[test]
    fn uniform_red_single_bin() {
        let img = RgbImage::filled(6, 4, [255, 0, 0]);
        let cfg = SegmentationConfig::default();
        let hist = build_hue_histogram(&img, &PixelMask::new(6, 4, true), &cfg).unwrap();
        assert_eq!(hist.counts()[0], 24);
        assert_eq!(hist.total(), 24);
        assert!(hist.counts()[1..].iter().all(|&c| c == 0));
    }

    #[test]
    fn red_cyan_halves() {
        let img = RgbImage::from_fn(8, 8, |x, _| if x < 4 { [255, 0, 0] } else { [0, 255, 255] });
        let cfg = SegmentationConfig::default();
        let hist = build_hue_histogram(&img, &PixelMask::new(8, 8, true), &cfg).unwrap();
        assert_eq!(hist.counts()[0], 32);
        assert_eq!(hist.counts()[18], 32);
        assert_eq!(hist.total(), 64);
    }

    #[test]
    fn histogram_matches_tally_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = SegmentationConfig::default();
        for _ in 0..20 {
            let (w, h) = (rng.random_range(1..30), rng.random_range(1..30));
            let img = RgbImage::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()]);
            let mask = PixelMask::from_fn(w, h, |_, _| rng.random_bool(0.5));
            let hist = build_hue_histogram(&img, &mask, &cfg).unwrap();
            let mut expected = vec![0u64; 36];
            for y in 0..h {
                for x in 0..w {
                    if !mask.get(x, y) {
                        continue;
                    }
                    let [r, g, b] = img.get(x, y);
                    let hsv = rgb_to_hsv(r, g, b);
                    if let Some(hue) = hsv.hue {
                        if hsv.saturation >= 0.15 {
                            expected[(hue / 10.0) as usize] += 1;
                        }
                    }
                }
            }
            assert_eq!(hist.counts(), &expected[..]);
            assert_eq!(hist.total(), expected.iter().sum::<u64>());
        }
    }

    #[test]
    fn histogram_rejects_mismatched_mask() {
        let img = RgbImage::filled(4, 4, [1, 2, 3]);
        let err = build_hue_histogram(&img, &PixelMask::new(4, 5, true), &Default::default());
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn dominant_bin_rules() {
        assert_eq!(dominant_hue_bin(&HueHistogram::from_counts(vec![5, 3, 9])).unwrap(), 2);
        assert_eq!(dominant_hue_bin(&HueHistogram::from_counts(vec![4, 4])).unwrap(), 0);
        assert!(matches!(
            dominant_hue_bin(&HueHistogram::from_counts(vec![0, 0, 0])),
            Err(Error::EmptyHistogram)
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let counts: Vec<u64> = (0..rng.random_range(1..40)).map(|_| rng.random_range(0..6)).collect();
            let hist = HueHistogram::from_counts(counts.clone());
            if hist.total() == 0 {
                continue;
            }
            let max = *counts.iter().max().unwrap();
            let first = counts.iter().position(|&c| c == max).unwrap();
            assert_eq!(dominant_hue_bin(&hist).unwrap(), first);
        }
    }

    #[test]
    fn black_background_select() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = RgbImage::from_fn(9, 7, |_, _| [rng.random(), rng.random(), rng.random()]);
        assert_eq!(apply_black_background(&img, &PixelMask::new(9, 7, true)).unwrap(), img);
        let black = apply_black_background(&img, &PixelMask::new(9, 7, false)).unwrap();
        assert!(black.pixels().iter().all(|&p| p == [0, 0, 0]));

        let checker = PixelMask::from_fn(9, 7, |x, y| (x + y) % 2 == 0);
        let out = apply_black_background(&img, &checker).unwrap();
        for y in 0..7 {
            for x in 0..9 {
                let expected = if (x + y) % 2 == 0 { img.get(x, y) } else { [0, 0, 0] };
                assert_eq!(out.get(x, y), expected);
            }
        }
        assert!(apply_black_background(&img, &PixelMask::new(7, 9, true)).is_err());
    }

    fn frame_and_disk(size: usize, frame_hue: f64, disk_hue: f64) -> (RgbImage, PixelMask) {
        let c = (size as f64 - 1.0) / 2.0;
        let r = size as f64 * 0.3;
        let inside = |x: usize, y: usize| {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            dx * dx + dy * dy <= r * r
        };
        let img = RgbImage::from_fn(size, size, |x, y| {
            if inside(x, y) { hue_px(disk_hue) } else { hue_px(frame_hue) }
        });
        (img, PixelMask::from_fn(size, size, inside))
    }

    #[test]
    fn green_frame_red_disk() {
        let (img, truth) = frame_and_disk(64, 120.0, 0.0);
        let res = segment(&img, &SegmentationConfig::default()).unwrap();
        assert!(res.mask.iou(&truth).unwrap() >= 0.99);
        assert_eq!(res.removed_bins, vec![12]);
        for (i, (&px, &fg)) in res.output.pixels().iter().zip(res.mask.bits()).enumerate() {
            if fg {
                assert_eq!(px, img.pixels()[i]);
            } else {
                assert_eq!(px, [0, 0, 0]);
            }
        }
    }

    #[test]
    fn uniform_image_has_no_foreground() {
        let img = RgbImage::filled(20, 20, [30, 200, 40]);
        assert!(matches!(
            segment(&img, &SegmentationConfig::default()),
            Err(Error::EmptyForeground)
        ));
        let gray = RgbImage::filled(20, 20, [90, 90, 90]);
        assert!(matches!(
            segment(&gray, &SegmentationConfig::default()),
            Err(Error::EmptyForeground)
        ));
    }

    #[test]
    fn low_saturation_swept_on_first_pass() {
        // gray field, blue square: only the square should survive
        let img = RgbImage::from_fn(30, 30, |x, y| {
            if (10..20).contains(&x) && (10..20).contains(&y) {
                [20, 40, 230]
            } else {
                [120, 118, 121]
            }
        });
        let res = segment(&img, &SegmentationConfig::default()).unwrap();
        assert_eq!(res.mask.count(), 100);
        assert!(res.removed_bins.is_empty());
        assert_eq!(res.iterations_used, 1);
    }

    #[test]
    fn invalid_config_rejected() {
        let img = RgbImage::filled(4, 4, [0, 0, 0]);
        for cfg in [
            SegmentationConfig { bin_count: 1, ..Default::default() },
            SegmentationConfig { max_iterations: 0, ..Default::default() },
            SegmentationConfig { border_band_fraction: 0.0, ..Default::default() },
            SegmentationConfig { background_stop_fraction: 0.0, ..Default::default() },
        ] {
            assert!(matches!(segment(&img, &cfg), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn bin_boundaries() {
        let cfg = SegmentationConfig::default();
        assert_eq!(cfg.bin_of(0.0), 0);
        assert_eq!(cfg.bin_of(9.999), 0);
        assert_eq!(cfg.bin_of(10.0), 1);
        assert_eq!(cfg.bin_of(359.99), 35);
    }
}
