//! Property-based invariants from the module contracts.

use pclr_core::data::{
    label_af, label_lvh, prepare_ecg, quality_filter, resample_lead, EcgRecord, FilterProfile,
    Sex, AF_KEYWORDS, LEAD_ORDER, LVH_KEYWORDS,
};
use pclr_core::nn::kernels::{self, Padding};
use pclr_core::tensor::Tensor;
use proptest::prelude::*;
use std::collections::BTreeMap;

proptest! {
    /// Same-padding convolution output length is ceil(L / stride).
    #[test]
    fn conv_same_padding_length(l in 1usize..64, stride_pick in 0usize..3, k in 1usize..9) {
        let stride = [1usize, 2, 4][stride_pick];
        let x = Tensor::<f64>::filled(&[1, l, 1], 0.5);
        let kernel = Tensor::<f64>::filled(&[k, 1, 1], 0.25);
        let out = kernels::conv1d_forward(&x, &kernel, stride, Padding::Same).unwrap();
        prop_assert_eq!(out.dim(1), l.div_ceil(stride));
    }

    /// Non-overlapping max pooling scatters exactly the output gradient
    /// mass back to the input.
    #[test]
    fn maxpool_gradient_mass_is_conserved(
        l_blocks in 1usize..8,
        c in 1usize..4,
        values in proptest::collection::vec(-100i32..100, 1..256),
    ) {
        let pool = 4usize;
        let l = l_blocks * pool;
        let len = l * c;
        let data: Vec<f64> = (0..len)
            .map(|i| values[i % values.len()] as f64 + (i % 13) as f64 * 1e-3)
            .collect();
        let x = Tensor::from_vec(&[1, l, c], data).unwrap();
        let (out, arg) = kernels::maxpool1d_forward(&x, pool, pool).unwrap();
        let go = Tensor::<f64>::filled(out.shape(), 1.25);
        let gin = kernels::maxpool1d_backward(&go, &arg, x.shape()).unwrap();
        let mass_out: f64 = go.data().iter().sum();
        let mass_in: f64 = gin.data().iter().sum();
        prop_assert!((mass_in - mass_out).abs() < 1e-9);
    }

    /// Linear interpolation reproduces affine signals exactly.
    #[test]
    fn resample_is_exact_on_affine_signals(
        l in 2usize..3000,
        a in -5.0f64..5.0,
        b in -100.0f64..100.0,
    ) {
        let signal: Vec<f32> = (0..l).map(|i| (a * i as f64 + b) as f32).collect();
        let out = resample_lead(&signal, 4096).unwrap();
        let step = (l - 1) as f64 / 4095.0;
        for (k, &v) in out.iter().enumerate() {
            let expected = a * (k as f64 * step) + b;
            // f32 storage of the inputs bounds the achievable accuracy.
            let tol = 1e-3 * (expected.abs() + 1.0);
            prop_assert!((v as f64 - expected).abs() < tol, "k={} v={} expected={}", k, v, expected);
        }
        prop_assert_eq!(out[0], signal[0]);
        prop_assert_eq!(out[4095], signal[l - 1]);
    }

    /// Keyword labelers agree with a direct brute-force loop on
    /// case-mangled diagnosis texts.
    #[test]
    fn labelers_agree_with_brute_force(
        base in 0usize..9,
        prefix in "[a-z ]{0,12}",
        suffix in "[a-z ]{0,12}",
        mangle_mask in proptest::collection::vec(any::<bool>(), 64),
        use_af in any::<bool>(),
        drop_keyword in any::<bool>(),
    ) {
        let keyword = if use_af {
            AF_KEYWORDS[base % AF_KEYWORDS.len()]
        } else {
            LVH_KEYWORDS[base % LVH_KEYWORDS.len()]
        };
        let mut text = if drop_keyword {
            format!("{prefix} {suffix}")
        } else {
            format!("{prefix}{keyword}{suffix}")
        };
        text = text
            .chars()
            .enumerate()
            .map(|(i, ch)| {
                if mangle_mask[i % mangle_mask.len()] {
                    ch.to_ascii_uppercase()
                } else {
                    ch
                }
            })
            .collect();
        let lower = text.to_lowercase();
        let brute_af = AF_KEYWORDS.iter().any(|k| lower.contains(k));
        let brute_lvh = LVH_KEYWORDS.iter().any(|k| lower.contains(k));
        prop_assert_eq!(label_af(&text), brute_af);
        prop_assert_eq!(label_lvh(&text), brute_lvh);
    }

    /// Filtering a cohort twice equals filtering once, and the filter
    /// never mutates its input.
    #[test]
    fn quality_filter_is_a_pure_idempotent_predicate(
        age in proptest::option::of(0.0f64..120.0),
        p_axis in proptest::option::of(-1.0f64..90.0),
        drop_pr in any::<bool>(),
        amp in 0i32..120_000,
    ) {
        let wave = vec![amp; 2500];
        let leads: BTreeMap<_, _> = LEAD_ORDER.iter().map(|&l| (l, wave.clone())).collect();
        let rec = EcgRecord {
            ecg_id: "e".into(),
            patient_id: "p".into(),
            acquired_at: 0,
            sample_rate: 250,
            leads,
            age,
            sex: Some(Sex::Male),
            diagnosis_text: Some("text".into()),
            hr: Some(60.0),
            pr: if drop_pr { None } else { Some(150.0) },
            qrs: Some(90.0),
            qt: Some(400.0),
            p_axis,
            r_axis: Some(10.0),
            t_axis: Some(20.0),
        };
        let snapshot = rec.clone();
        let first = quality_filter(&rec, FilterProfile::NonAf);
        let second = quality_filter(&rec, FilterProfile::NonAf);
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(rec, snapshot);
    }

    /// prepare_ecg output does not depend on lead insertion order.
    #[test]
    fn prepare_is_invariant_to_lead_insertion_order(perm_seed in 0u64..1000) {
        let mut order: Vec<usize> = (0..12).collect();
        // Cheap deterministic permutation from the seed.
        for i in (1..12).rev() {
            let j = ((perm_seed as usize).wrapping_mul(31).wrapping_add(i * 7)) % (i + 1);
            order.swap(i, j);
        }
        let make = |ord: &[usize]| {
            let mut leads = BTreeMap::new();
            for &idx in ord {
                let wave: Vec<i32> = (0..2500).map(|t| (t as i32 % 53) * (idx as i32 + 1)).collect();
                leads.insert(LEAD_ORDER[idx], wave);
            }
            EcgRecord {
                ecg_id: "e".into(),
                patient_id: "p".into(),
                acquired_at: 0,
                sample_rate: 250,
                leads,
                age: Some(50.0),
                sex: Some(Sex::Female),
                diagnosis_text: None,
                hr: None,
                pr: None,
                qrs: None,
                qt: None,
                p_axis: None,
                r_axis: None,
                t_axis: None,
            }
        };
        let canonical: Vec<usize> = (0..12).collect();
        let a = prepare_ecg(&make(&canonical)).unwrap();
        let b = prepare_ecg(&make(&order)).unwrap();
        prop_assert_eq!(a, b);
    }
}
