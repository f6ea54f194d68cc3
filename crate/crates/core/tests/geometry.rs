use gazekit::geometry::{
    eye_band_bounds, eye_region_band, flux_resize_dims, pair_integrity, rasterize_soft_mask, FaceBBox, GeometryError,
    ImageRaster, MaskRecord, MaskRect, DEFAULT_DILATION, DEFAULT_TOLERANCE, INPAINT_PROMPT,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pixel `(r, c)` lies in the band iff, in percent of the face box,
/// `25 <= r - y_min <= 55` and `5 <= c - x_min`, `5 <= x_max - c`.
fn in_band(b: &FaceBBox, r: i64, c: i64) -> bool {
    let (h, w) = (b.height(), b.width());
    100 * (r - b.y_min) >= 25 * h
        && 100 * (r - b.y_min) <= 55 * h
        && 100 * (c - b.x_min) >= 5 * w
        && 100 * (b.x_max - c) >= 5 * w
}

/// Bounding rectangle of the in-band pixels of a `w x h` image, after
/// checking they form a full rectangle.
fn brute_force(b: &FaceBBox, w: u32, h: u32) -> Option<MaskRect> {
    let mut hits = Vec::new();
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            if in_band(b, r, c) {
                hits.push((r as u32, c as u32));
            }
        }
    }
    let (first, _) = hits.split_first()?;
    let mut rect = MaskRect {
        row_lo: first.0,
        row_hi: first.0,
        col_lo: first.1,
        col_hi: first.1,
    };
    for &(r, c) in &hits {
        rect.row_lo = rect.row_lo.min(r);
        rect.row_hi = rect.row_hi.max(r);
        rect.col_lo = rect.col_lo.min(c);
        rect.col_hi = rect.col_hi.max(c);
    }
    assert_eq!(hits.len() as u64, rect.area(), "band is not a rectangle for {b:?}");
    Some(rect)
}

fn random_bbox(rng: &mut ChaCha8Rng, w: u32, h: u32) -> FaceBBox {
    let x0 = rng.gen_range(-40..w as i64);
    let y0 = rng.gen_range(-40..h as i64);
    FaceBBox::new(x0, y0, x0 + rng.gen_range(1..160), y0 + rng.gen_range(1..160))
}

#[test]
fn band_matches_per_pixel_predicate_on_1000_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut empty = 0;
    for _ in 0..1000 {
        let (w, h) = (rng.gen_range(8..160), rng.gen_range(8..160));
        let b = random_bbox(&mut rng, w, h);
        match (eye_region_band(&b, w, h), brute_force(&b, w, h)) {
            (Ok(rect), Some(oracle)) => assert_eq!(rect, oracle, "{b:?} in {w}x{h}"),
            (Err(GeometryError::EmptyBand(..)), None) => empty += 1,
            (got, want) => panic!("{b:?} in {w}x{h}: {got:?} vs {want:?}"),
        }
    }
    assert!(empty < 500);
}

#[test]
fn square_face_example() {
    let rect = eye_region_band(&FaceBBox::new(100, 100, 300, 300), 640, 480).unwrap();
    assert_eq!(
        rect,
        MaskRect {
            row_lo: 150,
            row_hi: 210,
            col_lo: 110,
            col_hi: 290
        }
    );
    assert!(matches!(
        eye_region_band(&FaceBBox::new(0, 0, 0, 10), 640, 480),
        Err(GeometryError::DegenerateBBox(_))
    ));
}

#[test]
fn discrete_band_height_can_drop_by_one() {
    // the real-valued extent 0.3h always grows, the integer row count need not
    let rows = |h: i64| {
        let (lo, hi, _, _) = eye_band_bounds(&FaceBBox::new(0, 0, 100, h));
        hi - lo + 1
    };
    assert_eq!(rows(4), 2);
    assert_eq!(rows(5), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn band_grows_once_extent_grows_a_pixel(
        x in -50i64..200, y in -50i64..200, w in 1i64..300, h in 1i64..300,
        dx0 in 0i64..20, dy0 in 0i64..20, dx1 in 0i64..20, dy1 in 0i64..20,
    ) {
        let small = FaceBBox::new(x, y, x + w, y + h);
        let big = FaceBBox::new(x - dx0, y - dy0, x + w + dx1, y + h + dy1);
        let (r0, r1, c0, c1) = eye_band_bounds(&small);
        let (br0, br1, bc0, bc1) = eye_band_bounds(&big);
        let (dh, dw) = (big.height() - h, big.width() - w);
        // real-valued extents 0.3h and 0.9w never shrink
        prop_assert!(3 * big.height() >= 3 * h && 9 * big.width() >= 9 * w);
        // integer counts are within one of the real extent
        prop_assert!((br1 - br0 + 1) >= (r1 - r0 + 1) - 1);
        prop_assert!((bc1 - bc0 + 1) >= (c1 - c0 + 1) - 1);
        if 3 * dh >= 10 {
            prop_assert!(br1 - br0 >= r1 - r0);
        }
        if 9 * dw >= 10 {
            prop_assert!(bc1 - bc0 >= c1 - c0);
        }
    }

    #[test]
    fn resize_is_on_grid(w in 1u32..8000, h in 1u32..8000, max_size in 16u32..4096) {
        match flux_resize_dims(w, h, max_size) {
            Ok((nw, nh)) => {
                prop_assert!(nw % 16 == 0 && nh % 16 == 0);
                let ratio = max_size as f64 / w.max(h) as f64;
                prop_assert!(nw as f64 <= w as f64 * ratio + 1e-9);
                prop_assert!(nh as f64 <= h as f64 * ratio + 1e-9);
                prop_assert!(nw.max(nh) <= max_size);
            }
            Err(GeometryError::ZeroDimension { .. }) => {
                let ratio = max_size as f64 / w.max(h) as f64;
                prop_assert!((w.min(h) as f64 * ratio) < 16.0);
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn self_pair_always_passes(w in 1u32..24, h in 1u32..24, seed in any::<u64>(), dilation in 0u32..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<u8> = (0..w * h * 3).map(|_| rng.gen()).collect();
        let x = ImageRaster::new(w, h, 3, samples).unwrap();
        let rect = MaskRect { row_lo: 0, row_hi: 0, col_lo: 0, col_hi: 0 };
        let report = pair_integrity(&x, &x, &rect, dilation, 0).unwrap();
        prop_assert!(report.pass);
        prop_assert_eq!(report.max_outside_diff, 0);
    }

    #[test]
    fn centered_mask_is_symmetric(half_w in 1u32..10, half_h in 1u32..10, pad in 0u32..12, radius in 0.0f64..4.0) {
        let (w, h) = (2 * (half_w + pad) + 1, 2 * (half_h + pad) + 1);
        let rect = MaskRect { row_lo: pad, row_hi: h - 1 - pad, col_lo: pad, col_hi: w - 1 - pad };
        let m = rasterize_soft_mask(&rect, w, h, radius);
        for r in 0..h {
            for c in 0..w {
                let v = m.pixel(r, c)[0];
                prop_assert_eq!(v, m.pixel(h - 1 - r, c)[0]);
                prop_assert_eq!(v, m.pixel(r, w - 1 - c)[0]);
            }
        }
    }
}

/// Straight 2-D convolution with the full Gaussian, no separability.
fn dense_blur_sum(rect: &MaskRect, w: u32, h: u32, sigma: f64) -> f64 {
    let r = (3.0 * sigma).ceil() as i64;
    let mut total = 0.0;
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (mut acc, mut norm) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                        continue;
                    }
                    let k = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
                    norm += k;
                    if rect.contains(yy as u32, xx as u32) {
                        acc += 255.0 * k;
                    }
                }
            }
            total += acc / norm;
        }
    }
    total
}

#[test]
fn blurred_mask_preserves_mass() {
    let rect = MaskRect {
        row_lo: 30,
        row_hi: 49,
        col_lo: 25,
        col_hi: 74,
    };
    let (w, h) = (100, 80);
    let binary = 255.0 * rect.area() as f64;
    let m = rasterize_soft_mask(&rect, w, h, 3.0);
    let sum: f64 = m.samples().iter().map(|v| *v as f64).sum();
    assert!((sum - binary).abs() / binary < 0.005, "{sum} vs {binary}");
    let dense = dense_blur_sum(&rect, w, h, 3.0);
    assert!((dense - binary).abs() / binary < 0.005);
    assert!((sum - dense).abs() / binary < 0.005);
}

#[test]
fn resize_examples() {
    assert_eq!(flux_resize_dims(1920, 1080, 1024).unwrap(), (1024, 576));
    assert_eq!(flux_resize_dims(512, 512, 1024).unwrap(), (1024, 1024));
    // int(800 * 1.024) = 819, floored to the grid
    assert_eq!(flux_resize_dims(1000, 800, 1024).unwrap(), (1024, 816));
}

fn checker(w: u32, h: u32) -> ImageRaster {
    let samples = (0..h)
        .flat_map(|r| (0..w).flat_map(move |c| [(r * 7 + c * 3) as u8, (r ^ c) as u8, 128]))
        .collect();
    ImageRaster::new(w, h, 3, samples).unwrap()
}

#[test]
fn edit_inside_mask_passes() {
    let real = checker(64, 48);
    let rect = eye_region_band(&FaceBBox::new(10, 4, 54, 44), 64, 48).unwrap();
    let mut fake = real.clone();
    for r in rect.row_lo..=rect.row_hi {
        for c in rect.col_lo..=rect.col_hi {
            for v in fake.pixel_mut(r, c) {
                *v = 255 - *v;
            }
        }
    }
    let report = pair_integrity(&real, &fake, &rect, DEFAULT_DILATION, DEFAULT_TOLERANCE).unwrap();
    assert!(report.pass);
    assert_eq!(report.violating_pixel_count, 0);
}

#[test]
fn single_flip_outside_fails() {
    let real = checker(64, 48);
    let rect = MaskRect {
        row_lo: 20,
        row_hi: 25,
        col_lo: 20,
        col_hi: 40,
    };
    let mut fake = real.clone();
    fake.pixel_mut(2, 60)[1] ^= 0x40;
    let report = pair_integrity(&real, &fake, &rect, DEFAULT_DILATION, DEFAULT_TOLERANCE).unwrap();
    assert!(!report.pass);
    assert_eq!(report.violating_pixel_count, 1);
    assert_eq!(report.max_outside_diff, 0x40);

    // within tolerance is not a violation
    let mut noisy = real.clone();
    let v = &mut noisy.pixel_mut(2, 60)[2];
    *v += DEFAULT_TOLERANCE;
    assert!(
        pair_integrity(&real, &noisy, &rect, DEFAULT_DILATION, DEFAULT_TOLERANCE)
            .unwrap()
            .pass
    );

    // inside the dilation margin is ignored
    let mut margin = real.clone();
    margin.pixel_mut(25 + DEFAULT_DILATION, 30)[0] ^= 0xff;
    assert!(
        pair_integrity(&real, &margin, &rect, DEFAULT_DILATION, DEFAULT_TOLERANCE)
            .unwrap()
            .pass
    );
}

#[test]
fn png_round_trip_and_mask_record() {
    let dir = tempfile::tempdir().unwrap();
    let (record, mask) = MaskRecord::build("img1", FaceBBox::new(100, 100, 300, 300), 640, 480, 3.0).unwrap();
    assert_eq!(record.prompt_text, INPAINT_PROMPT);
    assert_eq!((record.new_w, record.new_h), (1024, 768));
    let path = dir.path().join("mask.png");
    mask.save_png(&path).unwrap();
    let back = ImageRaster::load(&path).unwrap();
    assert_eq!(back, mask);
    let rgb = checker(9, 5);
    let path = dir.path().join("rgb.png");
    rgb.save_png(&path).unwrap();
    assert_eq!(ImageRaster::load(&path).unwrap(), rgb);
}
