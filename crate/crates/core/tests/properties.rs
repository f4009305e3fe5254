use noise_edit::maskops::{coefficient_field, coefficient_field_with, distance_transform, FarField};
use noise_edit::ngm::{guide_step, GuidanceWindow, Pairing};
use noise_edit::pipeline::{EditConfig, WindowSetting};
use noise_edit::rng::NoiseSource;
use noise_edit::snis::{structural_init, InpaintMode, InversionSource};
use noise_edit::{EditMask, InversionTrajectory, LatentVolume, PlaneShape, SamplerKind, ScheduleKind, Shape};
use proptest::prelude::*;

fn mask_strategy(max_side: usize) -> impl Strategy<Value = EditMask> {
    (1..4usize, 1..=max_side, 1..=max_side).prop_flat_map(|(f, h, w)| {
        prop::collection::vec(prop::bool::weighted(0.1), f * h * w)
            .prop_map(move |bits| EditMask::from_bools(PlaneShape::new(f, h, w).unwrap(), bits).unwrap())
    })
}

fn brute(mask: &EditMask, f: usize, y: usize, x: usize) -> f64 {
    let s = mask.shape();
    let mut best = f64::INFINITY;
    for sy in 0..s.height {
        for sx in 0..s.width {
            if mask.is_set(f, sy, sx) {
                let d = ((sy as f64 - y as f64).powi(2) + (sx as f64 - x as f64).powi(2)).sqrt();
                best = best.min(d);
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_matches_brute_force(mask in mask_strategy(14)) {
        let d = distance_transform(&mask);
        let s = mask.shape();
        for f in 0..s.frames {
            for y in 0..s.height {
                for x in 0..s.width {
                    let (fast, slow) = (d.field().get(f, y, x), brute(&mask, f, y, x));
                    prop_assert!(fast == slow || (fast - slow).abs() <= 1e-9, "{fast} vs {slow}");
                }
            }
        }
    }

    #[test]
    fn coefficients_are_bounded_and_lipschitz(mask in mask_strategy(16), m in 0.5f64..24.0) {
        let c = coefficient_field(&distance_transform(&mask), m).unwrap();
        let s = mask.shape();
        for f in 0..s.frames {
            for y in 0..s.height {
                for x in 0..s.width {
                    let v = c.field().get(f, y, x);
                    prop_assert!((0.0..=1.0).contains(&v));
                    if mask.is_set(f, y, x) {
                        prop_assert_eq!(v, 1.0);
                    }
                    // unit steps bound the slope by 1/m
                    if x + 1 < s.width {
                        prop_assert!((v - c.field().get(f, y, x + 1)).abs() <= 1.0 / m + 1e-12);
                    }
                    if y + 1 < s.height {
                        prop_assert!((v - c.field().get(f, y + 1, x)).abs() <= 1.0 / m + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn far_field_choice_only_touches_the_outside(mask in mask_strategy(12), m in 0.5f64..8.0) {
        let d = distance_transform(&mask);
        let zero = coefficient_field_with(&d, m, FarField::Zero).unwrap();
        let one = coefficient_field_with(&d, m, FarField::One).unwrap();
        for ((a, b), dist) in zero.field().values().iter().zip(one.field().values()).zip(d.field().values()) {
            // empty frames carry no edit under either choice
            if *dist <= m || dist.is_infinite() {
                prop_assert_eq!(a, b);
            } else {
                prop_assert_eq!((*a, *b), (0.0, 1.0));
            }
        }
    }

    #[test]
    fn blend_is_convex(mask in mask_strategy(10), m in 0.5f64..12.0, seed in any::<u64>(), scale in 0.01f64..50.0) {
        let ps = mask.shape();
        let shape = Shape::new(ps.frames, 2, ps.height, ps.width).unwrap();
        let src = NoiseSource::new(seed);
        let a = src.gaussian("a", shape).map(|v| v * scale).unwrap();
        let b = src.gaussian("b", shape).map(|v| v * scale).unwrap();
        let out = structural_init(&a, &b, &mask, m).unwrap();
        for ((o, x), y) in out.values().iter().zip(a.values()).zip(b.values()) {
            let (lo, hi) = (x.min(*y), x.max(*y));
            let slack = 1e-12 * hi.abs().max(lo.abs());
            prop_assert!(*o >= lo - slack && *o <= hi + slack);
        }
    }

    #[test]
    fn guide_step_is_an_exact_masked_replacement(
        mask in mask_strategy(8),
        seed in any::<u64>(),
        level in 0usize..12,
        lo in 0usize..12,
        len in 0usize..12,
    ) {
        let ps = mask.shape();
        let shape = Shape::new(ps.frames, 2, ps.height, ps.width).unwrap();
        let src = NoiseSource::new(seed);
        let entries: Vec<LatentVolume> = (0..12).map(|i| src.gaussian(&format!("entry{i}"), shape)).collect();
        let traj = InversionTrajectory::from_entries(entries).unwrap();
        let state = src.gaussian("state", shape);
        let hi = (lo + len).min(11);
        let window = GuidanceWindow::from_steps(lo, hi, 11).unwrap();
        let out = guide_step(&state, &traj, &mask, level, &window).unwrap();
        let entry = traj.entry(level).unwrap();
        for f in 0..shape.frames {
            for c in 0..shape.channels {
                for y in 0..shape.height {
                    for x in 0..shape.width {
                        let got = out.get(f, c, y, x);
                        let want = if window.contains(level) && !mask.is_set(f, y, x) {
                            entry.get(f, c, y, x)
                        } else {
                            state.get(f, c, y, x)
                        };
                        prop_assert_eq!(got.to_bits(), want.to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn config_text_round_trips(
        total in 10usize..=1000,
        tau_frac in 0.0f64..0.5,
        width in 0.25f64..64.0,
        alpha in 0.0f64..0.5,
        beta in 0.5f64..1.0,
        seed in any::<u64>(),
        flags in prop::collection::vec(any::<bool>(), 7),
        window_kind in 0u8..3,
        sigma in 0.01f64..10.0,
        cond_len in 1usize..64,
    ) {
        let tau = ((total as f64 * tau_frac) as usize).max(1);
        let cfg = EditConfig {
            total_steps: total,
            tau,
            transition_width: width,
            alpha,
            beta,
            t_start: Some(total - tau - usize::from(flags[0])),
            seed,
            schedule: if flags[1] { ScheduleKind::Cosine } else { ScheduleKind::Linear },
            sampler: if flags[2] { SamplerKind::Euler } else { SamplerKind::Ddim },
            inpaint: if flags[3] { InpaintMode::External("http://127.0.0.1:9/x".into()) } else { InpaintMode::Naive },
            condition_length: cond_len,
            world: flags[4].then(|| "/tmp/world/world.txt".into()),
            world_sigma: sigma,
            window: match window_kind {
                0 => WindowSetting::Fractions,
                1 => WindowSetting::Off,
                _ => WindowSetting::Steps(total / 3, total / 2),
            },
            pairing: if flags[5] { Pairing::PreStepLevel } else { Pairing::PostStepLevel },
            far_field: if flags[6] { FarField::One } else { FarField::Zero },
            inversion_source: if flags[6] { InversionSource::Inpainted } else { InversionSource::Original },
        };
        cfg.validate().unwrap();
        let back = EditConfig::parse(&cfg.to_text(), None).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
