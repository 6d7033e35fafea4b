use std::path::Path;

use deductron::anneal::{self, AcceptRule};
use deductron::decoder::{self, DecoderState, WindowSeq};
use deductron::grad;
use deductron::io::{self, ChainSeq};
use deductron::network::{forward, handcrafted_params, v_gate_scalar, Activation, Shape};
use deductron::wlang::{self, Frame, Image};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn basic(frames: usize, seed: u64) -> Image {
    wlang::states_to_image(&wlang::generate_basic(frames, &mut ChaCha8Rng::seed_from_u64(seed)))
}

fn precise(frames: usize, seed: u64) -> Image {
    wlang::states_to_image(&wlang::generate_precise(frames, &mut ChaCha8Rng::seed_from_u64(seed)))
}

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    None,
    X,
    O,
}

/// Column scan: a character starts when the wave leaves the blank or the
/// opposite extremum, and it emits on arriving at its own extremum.
fn oracle_text(img: &Image) -> String {
    let cols = img.columns();
    let mut mark = Mark::None;
    let mut out = String::new();
    for pair in cols.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b == Frame::E3 && (a == Frame::ZERO || a == Frame::E1) {
            mark = Mark::X;
        } else if b == Frame::E1 && (a == Frame::ZERO || a == Frame::E3) {
            mark = Mark::O;
        }
        if mark == Mark::X && b == Frame::E1 && a != Frame::E1 {
            out.push('X');
        }
        if mark == Mark::O && b == Frame::E3 && a != Frame::E3 {
            out.push('O');
        }
    }
    out
}

fn bits(data: &WindowSeq) -> Vec<Vec<bool>> {
    data.targets
        .iter()
        .map(|t| t.iter().map(|&b| b >= 0.5).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn v_gate_identities(z in 0.0f64..=1.0, u in 0.0f64..=1.0, v in 0.0f64..=1.0) {
        prop_assert_eq!(v_gate_scalar(z, 0.0, 0.0), z);
        prop_assert!((v_gate_scalar(z, u, 1.0) - u).abs() <= 1e-15);
        prop_assert!((v_gate_scalar(z, 1.0, v) - 1.0).abs() <= 1e-15);
        let r = v_gate_scalar(z, u, v);
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn generated_images_are_valid(frames in 2usize..600, seed in any::<u64>()) {
        prop_assert!(wlang::validate_image(&basic(frames, seed)).is_ok());
        prop_assert!(wlang::validate_image(&precise(frames, seed)).is_ok());
    }

    #[test]
    fn decoder_matches_column_scan(frames in 2usize..600, seed in any::<u64>()) {
        for img in [basic(frames, seed), precise(frames, seed)] {
            let d = decoder::decode(&img).unwrap();
            prop_assert_eq!(&d.text, &oracle_text(&img));
            prop_assert_eq!(d.windows.len() + 1, img.n_cols());
        }
    }

    #[test]
    fn valid_images_never_emit_both(frames in 2usize..600, seed in any::<u64>()) {
        let d = decoder::decode(&basic(frames, seed)).unwrap();
        prop_assert!(d.emissions.iter().all(|e| !(e.x && e.o)));
        prop_assert!(d.states.iter().all(|s| *s != DecoderState::new(true, true)));
    }

    #[test]
    fn handcrafted_net_tracks_decoder(frames in 2usize..600, seed in any::<u64>()) {
        for img in [basic(frames, seed), precise(frames, seed)] {
            let data = decoder::decode(&img).unwrap().to_window_seq();
            let out = forward(&handcrafted_params(), Activation::Hard, &data.inputs).unwrap().binary_outputs();
            prop_assert_eq!(out, bits(&data));
        }
    }

    #[test]
    fn image_text_roundtrip(frames in 2usize..200, seed in any::<u64>()) {
        let img = precise(frames, seed);
        let text = io::format_image(&img, &["c".into()]);
        prop_assert_eq!(io::parse_image(&text, Path::new("t")).unwrap(), img);
    }

    #[test]
    fn chain_and_dataset_roundtrip(frames in 2usize..200, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = ChainSeq::Basic(wlang::generate_basic(frames, &mut rng));
        let text = io::format_chain(&seq, &[]);
        prop_assert_eq!(io::parse_chain(&text, Path::new("t")).unwrap(), seq.clone());
        let data = decoder::decode(&seq.to_image()).unwrap().to_window_seq();
        let text = io::format_dataset(&data, &[]);
        prop_assert_eq!(io::parse_dataset(&text, Path::new("t")).unwrap(), data);
    }

    #[test]
    fn params_json_roundtrip(seed in any::<u64>(), m in 1usize..6, scale in 0.0f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = anneal::random_quantized(Shape::new(6, m, 2), false, &mut rng);
        let text = io::params_to_json(&q, None);
        prop_assert_eq!(io::params_from_json(&text, Path::new("t")).unwrap().0, q);
        let c = grad::random_continuous(Shape::new(6, m, 2), scale, &mut rng);
        let text = io::params_to_json(&c, None);
        let back = io::params_from_json(&text, Path::new("t")).unwrap().0;
        prop_assert_eq!(back.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        c.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn worse_states_accepted_at_exp_rate_when_cold() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for delta in [0.3, 1.0, 2.0] {
        let trials = 10_000;
        let hits = (0..trials)
            .filter(|_| anneal::accept(delta, 0.0, AcceptRule::Metropolis, &mut rng))
            .count();
        let p = f64::exp(-delta);
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        let diff = (hits as f64 - trials as f64 * p).abs();
        assert!(
            diff <= 3.0 * sigma,
            "delta {delta}: {hits} hits, expected {}",
            trials as f64 * p
        );
    }
}

#[test]
fn greedy_never_accepts_worse() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    assert!((0..1000).all(|_| !anneal::accept(0.5, 0.0, AcceptRule::Greedy, &mut rng)));
    assert!((0..1000).all(|_| anneal::accept(0.0, 0.0, AcceptRule::Greedy, &mut rng)));
}
