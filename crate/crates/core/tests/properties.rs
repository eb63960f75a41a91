use gramtex::edit::{
    bilinear_resize, jpeg_codec, l0_smooth, nonzero_gradient_count, EditSpec, ResizeTarget,
};
use gramtex::gram::{gram_matrix, GramBlock, GramBlockConfig, GramNet, GramNetConfig, ModelKind};
use gramtex::image::{load_image, save_image, Image};
use gramtex::nn::{conv2d_forward, linear_forward, ConvGeom, Mode, Module, Tensor4};
use gramtex::synth;
use gramtex::texture::{compute_glcm, dataset_contrast, image_contrast, pearson, pooled_glcms, Angle};
use proptest::collection::vec;
use proptest::prelude::*;

fn gray(max_side: usize) -> impl Strategy<Value = Image> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        vec(any::<u8>(), w * h).prop_map(move |d| Image::from_u8(w, h, 1, d).unwrap())
    })
}

fn any_u8_image(max_side: usize) -> impl Strategy<Value = Image> {
    (1..=max_side, 1..=max_side, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(w, h, c)| {
        vec(any::<u8>(), w * h * c).prop_map(move |d| Image::from_u8(w, h, c, d).unwrap())
    })
}

fn floats(n: usize) -> impl Strategy<Value = Vec<f32>> {
    vec(-1.0f32..1.0, n)
}

fn brute_counts(img: &Image, d: usize, angle: Angle) -> Vec<u64> {
    let px = img.as_u8().unwrap();
    let (w, h) = (img.width() as isize, img.height() as isize);
    let (dx, dy) = angle.offset(d);
    let mut counts = vec![0u64; 256 * 256];
    for y in 0..h {
        for x in 0..w {
            let (nx, ny) = (x + dx, y + dy);
            if (0..w).contains(&nx) && (0..h).contains(&ny) {
                counts[px[(y * w + x) as usize] as usize * 256 + px[(ny * w + nx) as usize] as usize] += 1;
            }
        }
    }
    counts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn save_then_load_is_identity(img in any_u8_image(20), ext in prop_oneof![Just("png"), Just("pnm")]) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("x.{ext}"));
        save_image(&img, &path).unwrap();
        prop_assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn grayscale_is_idempotent(img in any_u8_image(12)) {
        let g = img.to_grayscale();
        prop_assert_eq!(g.to_grayscale(), g);
    }

    #[test]
    fn center_crop_selects_pixels(img in any_u8_image(12), fw in 0.0f64..1.0, fh in 0.0f64..1.0) {
        let (w, h) = (1 + (fw * (img.width() - 1) as f64) as usize, 1 + (fh * (img.height() - 1) as f64) as usize);
        let crop = img.center_crop(w, h).unwrap();
        let (ox, oy) = ((img.width() - w) / 2, (img.height() - h) / 2);
        for y in 0..h {
            for x in 0..w {
                for c in 0..img.channels() {
                    prop_assert_eq!(crop.get(x, y, c), img.get(x + ox, y + oy, c));
                }
            }
        }
    }

    #[test]
    fn glcm_matches_brute_force(img in gray(16), d in 1usize..=5) {
        for angle in Angle::ALL {
            let g = compute_glcm(&img, d, angle).unwrap();
            let expect = brute_counts(&img, d, angle);
            prop_assert_eq!(g.counts(), expect.as_slice());
        }
    }

    #[test]
    fn contrast_ignores_flips_and_transpose(img in gray(14)) {
        let (w, h) = (img.width(), img.height());
        let px = img.as_u8().unwrap();
        let flipped = Image::gray_from_fn(w, h, |x, y| px[y * w + (w - 1 - x)]);
        let turned = Image::gray_from_fn(w, h, |x, y| px[(h - 1 - y) * w + (w - 1 - x)]);
        let transposed = Image::gray_from_fn(h, w, |x, y| px[x * w + y]);
        let distances = [1, 2, 3];
        let reference = image_contrast(&img, &distances);
        for other in [&flipped, &turned, &transposed] {
            match (&reference, image_contrast(other, &distances)) {
                (Ok(a), Ok(b)) => {
                    for (x, y) in a.contrast.iter().zip(&b.contrast) {
                        prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{} vs {}", x, y);
                    }
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }
    }

    #[test]
    fn pooling_adds_counts(a in vec(gray(10), 1..4), b in vec(gray(10), 1..4)) {
        let distances = [1, 3];
        let both: Vec<Image> = a.iter().chain(&b).cloned().collect();
        let (pa, pb, pab) = (
            pooled_glcms(&a, &distances).unwrap(),
            pooled_glcms(&b, &distances).unwrap(),
            pooled_glcms(&both, &distances).unwrap(),
        );
        for ((x, y), z) in pa.iter().zip(&pb).zip(&pab) {
            let sum: Vec<u64> = x.counts().iter().zip(y.counts()).map(|(p, q)| p + q).collect();
            prop_assert_eq!(sum.as_slice(), z.counts());
        }
    }

    #[test]
    fn pearson_affine_invariant(
        pairs in vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
        scale in 0.01f64..100.0,
        offset in -1e3f64..1e3,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(r) = pearson(&x, &y) {
            let x2: Vec<f64> = x.iter().map(|v| scale * v + offset).collect();
            let r2 = pearson(&x2, &y).unwrap();
            prop_assert!((r - r2).abs() < 1e-9, "{} vs {}", r, r2);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn edits_keep_documented_sizes(img in any_u8_image(24), factor in 0.1f64..3.0, tw in 1usize..40, th in 1usize..40) {
        let (w, h) = (img.width(), img.height());
        let same = [
            EditSpec::Identity,
            EditSpec::Jpeg { quality: 60 },
            EditSpec::Blur { kernel_size: 5 },
            EditSpec::Noise { std: 4.0, seed: 3 },
            EditSpec::L0 { lambda: 0.02 },
        ];
        for e in same {
            let out = e.apply(&img).unwrap();
            prop_assert_eq!((out.width(), out.height(), out.channels()), (w, h, img.channels()));
        }
        let out = EditSpec::resize(tw, th).apply(&img).unwrap();
        prop_assert_eq!((out.width(), out.height()), (tw, th));
        let out = EditSpec::Resize(ResizeTarget::Factor { factor }).apply(&img).unwrap();
        let expect = |n: usize| ((n as f64 * factor).round() as usize).max(1);
        prop_assert_eq!((out.width(), out.height()), (expect(w), expect(h)));
    }

    #[test]
    fn edits_are_deterministic(img in any_u8_image(16), seed in any::<u64>()) {
        for e in [EditSpec::Noise { std: 5.0, seed }, EditSpec::Jpeg { quality: 30 }, EditSpec::Blur { kernel_size: 7 }, EditSpec::L0 { lambda: 0.05 }] {
            prop_assert_eq!(e.apply(&img).unwrap(), e.apply(&img).unwrap());
        }
    }

    #[test]
    fn constant_down_then_up_is_exact(v in any::<u8>(), w in 2usize..40, h in 2usize..40, dw in 1usize..20, dh in 1usize..20) {
        let img = Image::from_u8(w, h, 1, vec![v; w * h]).unwrap();
        let back = bilinear_resize(&bilinear_resize(&img, dw, dh).unwrap(), w, h).unwrap();
        prop_assert_eq!(back.to_f32_vec(), img.to_f32_vec());
    }

    #[test]
    fn jpeg_recompression_is_stable_on_textures(seed in any::<u64>(), alpha in 0.8f64..2.0, quality in 20u8..=100) {
        let img = synth::generate_texture(32, alpha, seed).unwrap();
        let once = jpeg_codec(&img, quality).unwrap();
        let twice = jpeg_codec(&once, quality).unwrap();
        let (a, b) = (once.as_u8().unwrap(), twice.as_u8().unwrap());
        for by in 0..4 {
            for bx in 0..4 {
                let idx: Vec<usize> = (0..64).map(|i| (by * 8 + i / 8) * 32 + bx * 8 + i % 8).collect();
                if idx.iter().any(|&i| a[i] == 0 || a[i] == 255) {
                    continue;
                }
                for i in idx {
                    prop_assert!(a[i].abs_diff(b[i]) <= 1, "block ({}, {}) drifts", bx, by);
                }
            }
        }
    }

    #[test]
    fn l0_never_adds_gradients(img in any_u8_image(20), lambda in 0.0f64..0.2) {
        let before = nonzero_gradient_count(&img, 1e-6);
        let after = nonzero_gradient_count(&l0_smooth(&img, lambda).unwrap(), 1e-6);
        prop_assert!(after <= before, "{} > {}", after, before);
    }

    #[test]
    fn l0_flattens_noisy_piecewise_constant(
        (w, h) in (16usize..40, 16usize..40),
        levels in vec(0.1f32..0.9, 4),
        cut in (0.25f64..0.75, 0.25f64..0.75),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (cx, cy) = ((cut.0 * w as f64) as usize, (cut.1 * h as f64) as usize);
        let data: Vec<f32> = (0..w * h)
            .map(|i| {
                let quadrant = usize::from(i % w >= cx) + 2 * usize::from(i / w >= cy);
                levels[quadrant] + rng.gen_range(-0.02f32..0.02)
            })
            .collect();
        let img = Image::from_f32(w, h, 1, data).unwrap();
        let before = nonzero_gradient_count(&img, 1e-6);
        let after = nonzero_gradient_count(&l0_smooth(&img, 0.02).unwrap(), 1e-6);
        prop_assert!(after < before, "{} >= {}", after, before);
    }

    #[test]
    fn conv_and_linear_are_linear(
        x in floats(2 * 2 * 5 * 4),
        y in floats(2 * 2 * 5 * 4),
        w in floats(3 * 2 * 3 * 3),
        lw in floats(2 * 40),
        a in -2.0f32..2.0,
        b in -2.0f32..2.0,
    ) {
        let shape = [2, 2, 5, 4];
        let tx = Tensor4::from_vec(shape, x.clone()).unwrap();
        let ty = Tensor4::from_vec(shape, y.clone()).unwrap();
        let mix = Tensor4::from_vec(shape, x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let g = ConvGeom::square(2, 3, 3, 2, 1);
        let zero3 = [0.0f32; 3];
        let conv = |t: &Tensor4<f32>| conv2d_forward(t, &w, Some(&zero3), &g).unwrap().data;
        let (fx, fy, fm) = (conv(&tx), conv(&ty), conv(&mix));
        for i in 0..fm.len() {
            prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-5 * (1.0 + fm[i].abs()) * 10.0);
        }
        let zero2 = [0.0f32; 2];
        let lin = |t: &Tensor4<f32>| linear_forward(t, &lw, &zero2).unwrap().data;
        let (fx, fy, fm) = (lin(&tx), lin(&ty), lin(&mix));
        for i in 0..fm.len() {
            prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-5 * (1.0 + fm[i].abs()) * 10.0);
        }
    }

    #[test]
    fn gram_is_symmetric_and_replication_stable(c in 1usize..6, h in 1usize..7, w in 1usize..7, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = gram_matrix(&f, c, true);
        for i in 0..c {
            for j in 0..c {
                prop_assert_eq!(g[i * c + j], g[j * c + i]);
            }
        }
        let up: Vec<f64> = (0..c)
            .flat_map(|ch| (0..4 * h * w).map(move |p| (ch, p / (2 * w), p % (2 * w))))
            .map(|(ch, y, x)| f[(ch * h + y / 2) * w + x / 2])
            .collect();
        let gu = gram_matrix(&up, c, true);
        for (a, b) in g.iter().zip(&gu) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn gram_block_ignores_spatial_order(seed in any::<u64>(), h in 1usize..6, w in 1usize..6) {
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cfg = GramBlockConfig { align_channels: 3, refine_channels: 4 };
        let mut block = GramBlock::<f32>::new("g", 2, cfg, || rng.gen_range(-1.0..1.0));
        let x: Vec<f32> = (0..2 * 2 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut order: Vec<usize> = (0..h * w).collect();
        order.shuffle(&mut rng);
        let xp: Vec<f32> = (0..4).flat_map(|plane| order.iter().map(move |&p| (plane, p))).map(|(plane, p)| x[plane * h * w + p]).collect();
        let ya = block.forward(&Tensor4::from_vec([2, 2, h, w], x).unwrap(), Mode::Eval, false).unwrap();
        let yb = block.forward(&Tensor4::from_vec([2, 2, h, w], xp).unwrap(), Mode::Eval, false).unwrap();
        prop_assert_eq!(ya.data, yb.data);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn forward_is_deterministic(seed in any::<u64>()) {
        let mut net = GramNet::<f32>::new(GramNetConfig::tiny(), ModelKind::GramNet, seed).unwrap();
        let x = Tensor4::from_vec([2, 3, 9, 8], (0..2 * 3 * 72).map(|i| ((i * 37) % 11) as f32 / 11.0).collect()).unwrap();
        let a = net.forward(&x, Mode::Eval, false).unwrap();
        let b = net.forward(&x, Mode::Eval, false).unwrap();
        prop_assert_eq!(a.data, b.data);
    }

    #[test]
    fn gram_net_contains_baseline(seed in any::<u64>()) {
        // zeroing every Gram tap leaves exactly the baseline on the head's first columns
        let mut net = GramNet::<f64>::new(GramNetConfig::tiny(), ModelKind::GramNet, seed).unwrap();
        let mut base = net.to_baseline().unwrap();
        let x = Tensor4::from_vec([3, 3, 8, 8], (0..3 * 3 * 64).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect()).unwrap();
        let (pooled, taps) = net.forward_features(&x, Mode::Eval, false).unwrap();
        let width: usize = taps.iter().map(|t| t.c()).sum();
        let dim = pooled.c();
        let mut feat = vec![0.0; 3 * (dim + width)];
        for n in 0..3 {
            feat[n * (dim + width)..n * (dim + width) + dim].copy_from_slice(pooled.sample(n));
        }
        let feat = Tensor4::from_vec([3, dim + width, 1, 1], feat).unwrap();
        let zeroed = linear_forward(&feat, &net.head.weight.value, &net.head.bias.value).unwrap();
        let b = base.forward(&x, Mode::Eval, false).unwrap();
        for (p, q) in zeroed.data.iter().zip(&b.data) {
            prop_assert!((p - q).abs() <= 1e-12, "{} vs {}", p, q);
        }
    }

    #[test]
    fn synthetic_generation_is_reproducible(seed in any::<u64>()) {
        let spec = synth::TextureSpec { size: 32, spectral_exponent: 1.3, count: 3, seed };
        prop_assert_eq!(synth::generate_class(&spec).unwrap(), synth::generate_class(&spec).unwrap());
    }

    #[test]
    fn class_ordering_holds_for_fresh_seeds(seed in any::<u64>()) {
        let (mut a, mut b) = synth::default_specs(seed);
        a.count = 40;
        b.count = 40;
        let distances = [1, 5, 20];
        let ca = dataset_contrast(&synth::generate_class(&a).unwrap(), &distances).unwrap();
        let cb = dataset_contrast(&synth::generate_class(&b).unwrap(), &distances).unwrap();
        for (x, y) in ca.contrast.iter().zip(&cb.contrast) {
            prop_assert!(x > y);
        }
    }
}

#[test]
fn buffers_visit_in_stable_order() {
    let mut a = GramNet::<f32>::new(GramNetConfig::tiny(), ModelKind::GramNet, 1).unwrap();
    let mut b = GramNet::<f32>::new(GramNetConfig::tiny(), ModelKind::GramNet, 2).unwrap();
    let names = |n: &mut GramNet<f32>| {
        let mut v = Vec::new();
        n.visit_buffers(&mut |p| v.push(p.name.clone()));
        v
    };
    assert_eq!(names(&mut a), names(&mut b));
}
