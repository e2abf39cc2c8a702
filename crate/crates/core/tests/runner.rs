use proptest::prelude::*;
use statetrack_core::linalg::Matrix;
use statetrack_core::lrnn::{layer_trajectory, Decoder, LrnnError, LrnnLayer, LrnnModel, Runner, Transition};
use statetrack_core::precision::CastGrid;

/// Nearest grid value from the two neighbours of `x`; ties go low.
fn nearest_oracle(values: &[f64], x: f64) -> f64 {
    let above = values.iter().filter(|&&v| v < x).count();
    if above == 0 {
        return values[0];
    }
    if above == values.len() {
        return values[above - 1];
    }
    let (lo, hi) = (values[above - 1], values[above]);
    if hi - x < x - lo {
        hi
    } else {
        lo
    }
}

fn grid_values() -> impl Strategy<Value = Vec<f64>> {
    // grids that straddle zero must contain it
    proptest::collection::btree_set(-24i32..24, 0..16).prop_map(|mut s| {
        s.insert(0);
        s.into_iter().map(|k| k as f64 * 0.25).collect()
    })
}

fn transition(kind: u8, a: f64) -> Transition<f64> {
    match kind {
        0 => Transition::Scalar { a },
        1 => Transition::Diagonal { diag: vec![a] },
        2 => Transition::Full {
            matrix: Matrix::from_vec(1, 1, vec![a]).unwrap(),
        },
        _ => Transition::Zero,
    }
}

/// Single-entry pass-through layer with coefficients on a quarter grid, so
/// states often land on integers and sometimes do not.
fn scalar_layer() -> impl Strategy<Value = LrnnLayer<f64>> {
    (
        proptest::collection::vec((0u8..4, -4i32..=4, -4i32..=4), 2..4),
        -4i32..=4,
        prop_oneof![Just(0u64), 1u64..4],
        2usize..5,
    )
        .prop_map(|(tokens, h0, every, labels)| LrnnLayer {
            transitions: tokens.iter().map(|&(k, a, _)| transition(k, a as f64 * 0.5)).collect(),
            inputs: tokens.iter().map(|&(_, _, b)| Matrix::column(&[b as f64 * 0.25])).collect(),
            h0: Matrix::column(&[h0 as f64 * 0.5]),
            decoder: Decoder::PassThrough { num_labels: labels },
            renormalize_every: every,
        })
}

fn grid() -> impl Strategy<Value = Option<CastGrid<f64>>> {
    prop_oneof![
        Just(None),
        Just(Some(CastGrid::explicit(vec![-1.0, 0.0, 1.0]).unwrap())),
        grid_values().prop_map(|v| Some(CastGrid::explicit(v).unwrap())),
        Just(Some(CastGrid::uniform(-4.0, 4.0, 0.25).unwrap())),
    ]
}

/// Reference run: each layer's trajectory from the general update, then the
/// layer's decoder, position by position.
fn reference(model: &LrnnModel<f64>, word: &[usize], grid: Option<&CastGrid<f64>>) -> Vec<Result<usize, ()>> {
    let mut toks: Vec<Option<usize>> = word.iter().copied().map(Some).collect();
    for layer in &model.layers {
        // a failed position poisons everything after it in the stream
        let valid = toks.iter().take_while(|t| matches!(t, Some(t) if *t < layer.alphabet_size())).count();
        let prefix: Vec<usize> = toks[..valid].iter().map(|t| t.unwrap()).collect();
        let states = layer_trajectory(layer, &prefix, grid).unwrap_or_default();
        let mut next = vec![None; toks.len()];
        for (k, h) in states.iter().enumerate() {
            match layer.decoder.decode(h, prefix[k]) {
                Ok(z) => next[k] = Some(z),
                Err(_) => break,
            }
        }
        toks = next;
    }
    let ok = toks.iter().take_while(|t| t.is_some()).count();
    (0..word.len()).map(|k| if k < ok { Ok(toks[k].unwrap()) } else { Err(()) }).collect()
}

proptest! {
    #[test]
    fn explicit_cast_is_nearest_with_low_ties(values in grid_values(), k in -60i32..60) {
        let x = k as f64 / 8.0;
        let g = CastGrid::explicit(values.clone()).unwrap();
        prop_assert_eq!(g.cast(x).unwrap(), nearest_oracle(&values, x));
    }

    #[test]
    fn scalar_runner_matches_general_path(
        layers in proptest::collection::vec(scalar_layer(), 1..3),
        word in proptest::collection::vec(0usize..4, 1..40),
        grid in grid(),
    ) {
        let model = LrnnModel { layers };
        let want = reference(&model, &word, grid.as_ref());
        let mut runner = match &grid {
            Some(g) => Runner::with_cast(&model, g),
            None => Runner::new(&model),
        };
        for (k, &w) in word.iter().enumerate() {
            let got = runner.step(w);
            match want[k] {
                Ok(z) => prop_assert_eq!(got, Ok(z), "position {}", k),
                Err(()) => {
                    prop_assert!(got.is_err(), "position {}", k);
                    break;
                }
            }
        }
    }

    #[test]
    fn scalar_runner_states_match_trajectory(
        layer in scalar_layer(),
        word in proptest::collection::vec(0usize..2, 1..40),
        grid in grid(),
    ) {
        let want = layer_trajectory(&layer, &word, grid.as_ref());
        let model = LrnnModel { layers: vec![layer] };
        let mut runner = match &grid {
            Some(g) => Runner::with_cast(&model, g),
            None => Runner::new(&model),
        };
        let want = want.unwrap();
        for (k, &w) in word.iter().enumerate() {
            // decode errors do not stop the state update
            let _ = runner.step(w);
            prop_assert_eq!(runner.state_slice(0), &want[k][..], "position {}", k);
        }
    }
}

#[test]
fn scalar_runner_reports_unknown_token() {
    let model = statetrack_core::compile::compile_parity::<f64>().unwrap();
    let mut r = Runner::new(&model);
    assert_eq!(r.step(1), Ok(1));
    assert_eq!(
        r.step(2),
        Err(LrnnError::UnknownToken {
            layer: 0,
            token: 2,
            alphabet: 2
        })
    );
}

#[test]
fn scalar_runner_reports_decode_position() {
    let layer = LrnnLayer {
        transitions: vec![Transition::Scalar { a: 1.0 }],
        inputs: vec![Matrix::column(&[0.5])],
        h0: Matrix::column(&[0.0]),
        decoder: Decoder::PassThrough { num_labels: 4 },
        renormalize_every: 0,
    };
    let model = LrnnModel { layers: vec![layer] };
    let mut r = Runner::new(&model);
    assert_eq!(r.step(0), Err(r_err(0)));
    assert_eq!(r.step(0), Ok(1));
    assert_eq!(r.step(0), Err(r_err(2)));

    fn r_err(position: usize) -> LrnnError {
        let h = 0.5 * (position + 1) as f64;
        LrnnError::DecodeAt {
            position,
            layer: 0,
            message: LrnnError::Decode(format!("entry {h} is not within 0.25 of an integer")).to_string(),
        }
    }
}

#[test]
fn parity_cast_matches_exact_on_long_word() {
    let model = statetrack_core::compile::compile_parity::<f64>().unwrap();
    let grid = CastGrid::explicit(vec![-1.0, 0.0, 1.0]).unwrap();
    let word: Vec<usize> = (0..10_000).map(|i| (i * 7 + i / 3) % 2).collect();
    let exact = statetrack_core::lrnn::model_run(&model, &word).unwrap();
    let cast = statetrack_core::lrnn::model_run_cast(&model, &word, &grid).unwrap();
    let mut p = 0;
    let oracle: Vec<usize> = word.iter().map(|&b| {
        p ^= b;
        p
    }).collect();
    assert_eq!(exact, oracle);
    assert_eq!(cast, oracle);
}
