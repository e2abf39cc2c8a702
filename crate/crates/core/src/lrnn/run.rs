use super::decoder::pass_through;
use super::{Decoder, LrnnError, LrnnLayer, LrnnModel, Transition};
use crate::linalg::Matrix;
use crate::precision::{nearest_linear, CastGrid};
use crate::scalar::Scalar;

/// `H ← A·H` in place on a row-major `n × d` state.
#[inline]
pub(crate) fn apply_transition<T: Scalar>(a: &Transition<T>, h: &mut [T], d: usize, scratch: &mut [T]) {
    match a {
        Transition::Scalar { a } => {
            if *a != T::one() {
                h.iter_mut().for_each(|x| *x = *a * *x);
            }
        }
        Transition::Diagonal { diag } => {
            for (row, &s) in h.chunks_exact_mut(d).zip(diag) {
                row.iter_mut().for_each(|x| *x = s * *x);
            }
        }
        Transition::Gh { product } => {
            for f in product.factors().iter().rev() {
                let (v, beta) = (f.v(), f.beta());
                for c in 0..d {
                    let mut proj = T::zero();
                    for (i, &vi) in v.iter().enumerate() {
                        proj = proj + vi * h[i * d + c];
                    }
                    let s = beta * proj;
                    for (i, &vi) in v.iter().enumerate() {
                        h[i * d + c] = h[i * d + c] - s * vi;
                    }
                }
            }
        }
        Transition::Full { matrix } => {
            let n = matrix.rows();
            let out = &mut scratch[..n * d];
            for i in 0..n {
                let mrow = matrix.row(i);
                for c in 0..d {
                    let mut acc = T::zero();
                    for (k, &m) in mrow.iter().enumerate() {
                        acc = acc + m * h[k * d + c];
                    }
                    out[i * d + c] = acc;
                }
            }
            h.copy_from_slice(out);
        }
        Transition::Zero => h.iter_mut().for_each(|x| *x = T::zero()),
    }
}

struct LayerState<T> {
    h: Vec<T>,
    /// Whether `B(w)` is nonzero, per token.
    has_input: Vec<bool>,
}

/// A layer with a single-entry state and a pass-through readout.
struct ScalarLayer<T> {
    /// `(A(w), B(w))` per token.
    coef: Vec<(T, T)>,
    renormalize_every: u64,
    num_labels: usize,
}

impl<T: Scalar> ScalarLayer<T> {
    fn new(l: &LrnnLayer<T>) -> Option<Self> {
        match l.decoder {
            Decoder::PassThrough { num_labels } if l.state_dim() == 1 && l.value_dim() == 1 => Some(Self {
                coef: l
                    .transitions
                    .iter()
                    .zip(&l.inputs)
                    .map(|(a, b)| (a.to_matrix(1).as_slice()[0], b.as_slice()[0]))
                    .collect(),
                renormalize_every: l.renormalize_every,
                num_labels,
            }),
            _ => None,
        }
    }
}

impl<T: Scalar> LayerState<T> {
    fn new(l: &LrnnLayer<T>) -> Self {
        Self {
            h: l.h0.as_slice().to_vec(),
            has_input: l.inputs.iter().map(|b| b.as_slice().iter().any(|&x| x != T::zero())).collect(),
        }
    }
}

fn renormalize<T: Scalar>(h: &mut [T]) {
    let norm = h.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
    if norm > T::zero() {
        h.iter_mut().for_each(|x| *x = *x / norm);
    }
}

#[inline]
fn layer_update<T: Scalar>(
    layer: &LrnnLayer<T>,
    st: &mut LayerState<T>,
    scratch: &mut [T],
    token: usize,
    step: u64,
    cast: Option<&CastGrid<T>>,
) -> Result<(), LrnnError> {
    apply_transition(&layer.transitions[token], &mut st.h, layer.value_dim(), scratch);
    if st.has_input[token] {
        for (x, &b) in st.h.iter_mut().zip(layer.inputs[token].as_slice()) {
            *x = *x + b;
        }
    }
    if layer.renormalize_every > 0 && step % layer.renormalize_every == 0 {
        renormalize(&mut st.h);
    }
    if let Some(g) = cast {
        g.cast_slice(&mut st.h)?;
    }
    Ok(())
}

/// [`Runner::step`] when every layer is a [`ScalarLayer`]; same updates and
/// errors as the general path.
#[inline(always)]
fn scalar_step<T: Scalar>(
    scalar: &[ScalarLayer<T>],
    layers: &mut [LayerState<T>],
    cast: Option<&CastGrid<T>>,
    token: usize,
    step: u64,
) -> Result<usize, LrnnError> {
    let mut tok = token;
    for (i, (sl, st)) in scalar.iter().zip(layers.iter_mut()).enumerate() {
        let Some(&(a, b)) = sl.coef.get(tok) else {
            return Err(unknown_token(i, tok, sl.coef.len()));
        };
        let mut x = a * st.h[0] + b;
        if sl.renormalize_every > 0 && step % sl.renormalize_every == 0 {
            let norm = (x * x).sqrt();
            if norm > T::zero() {
                x = x / norm;
            }
        }
        st.h[0] = x;
        if let Some(g) = cast {
            x = match g.short_values() {
                Some(values) if !x.is_nan() => nearest_linear(values, x),
                _ => g.cast(x)?,
            };
            st.h[0] = x;
        }
        tok = pass_through(x, sl.num_labels).map_err(|e| decode_at(step, i, e))?;
    }
    Ok(tok)
}

#[cold]
fn unknown_token(layer: usize, token: usize, alphabet: usize) -> LrnnError {
    LrnnError::UnknownToken { layer, token, alphabet }
}

#[cold]
fn decode_at(step: u64, layer: usize, e: LrnnError) -> LrnnError {
    LrnnError::DecodeAt {
        position: (step - 1) as usize,
        layer,
        message: e.to_string(),
    }
}

/// Streaming evaluator holding one state per layer; no allocation per step
/// apart from permutation readouts.
pub struct Runner<'a, T: Scalar> {
    model: &'a LrnnModel<T>,
    cast: Option<&'a CastGrid<T>>,
    layers: Vec<LayerState<T>>,
    /// Set when every layer is a [`ScalarLayer`].
    scalar: Option<Vec<ScalarLayer<T>>>,
    scratch: Vec<T>,
    steps: u64,
}

impl<'a, T: Scalar> Runner<'a, T> {
    pub fn new(model: &'a LrnnModel<T>) -> Self {
        let layers = model.layers.iter().map(LayerState::new).collect();
        let scratch_len = model.layers.iter().map(|l| l.h0.as_slice().len()).max().unwrap_or(0);
        Self {
            model,
            cast: None,
            layers,
            scalar: model.layers.iter().map(ScalarLayer::new).collect(),
            scratch: vec![T::zero(); scratch_len],
            steps: 0,
        }
    }

    /// Casts every state onto `grid` after every step.
    pub fn with_cast(model: &'a LrnnModel<T>, grid: &'a CastGrid<T>) -> Self {
        let mut r = Self::new(model);
        r.cast = Some(grid);
        r
    }

    pub fn reset(&mut self) {
        for (st, l) in self.layers.iter_mut().zip(&self.model.layers) {
            st.h.copy_from_slice(l.h0.as_slice());
        }
        self.steps = 0;
    }

    /// Number of tokens consumed since the last reset.
    pub fn position(&self) -> u64 {
        self.steps
    }

    /// Feeds one token through every layer and returns the last layer's
    /// decoded output.
    #[inline(always)]
    pub fn step(&mut self, token: usize) -> Result<usize, LrnnError> {
        self.steps += 1;
        match &self.scalar {
            Some(scalar) => scalar_step(scalar, &mut self.layers, self.cast, token, self.steps),
            None => self.general_step(token),
        }
    }

    #[inline(never)]
    fn general_step(&mut self, token: usize) -> Result<usize, LrnnError> {
        let mut tok = token;
        for (i, (layer, st)) in self.model.layers.iter().zip(self.layers.iter_mut()).enumerate() {
            if tok >= layer.alphabet_size() {
                return Err(unknown_token(i, tok, layer.alphabet_size()));
            }
            layer_update(layer, st, &mut self.scratch, tok, self.steps, self.cast)?;
            tok = layer.decoder.decode(&st.h, tok).map_err(|e| decode_at(self.steps, i, e))?;
        }
        Ok(tok)
    }

    pub fn state_slice(&self, layer: usize) -> &[T] {
        &self.layers[layer].h
    }

    pub fn state(&self, layer: usize) -> Matrix<T> {
        let l = &self.model.layers[layer];
        Matrix::from_vec(l.state_dim(), l.value_dim(), self.layers[layer].h.clone()).expect("state shape")
    }
}

/// `A(token)·H + B(token)`.
pub fn layer_step<T: Scalar>(layer: &LrnnLayer<T>, h: &Matrix<T>, token: usize) -> Result<Matrix<T>, LrnnError> {
    if token >= layer.alphabet_size() {
        return Err(LrnnError::UnknownToken {
            layer: 0,
            token,
            alphabet: layer.alphabet_size(),
        });
    }
    if h.shape() != layer.h0.shape() {
        return Err(LrnnError::Shape(format!("state {:?}, expected {:?}", h.shape(), layer.h0.shape())));
    }
    let mut out = h.clone();
    let mut scratch = vec![T::zero(); h.as_slice().len()];
    apply_transition(&layer.transitions[token], out.as_mut_slice(), layer.value_dim(), &mut scratch);
    Ok(out.add(&layer.inputs[token])?)
}

/// Final-layer output at every position.
pub fn model_run<T: Scalar>(model: &LrnnModel<T>, word: &[usize]) -> Result<Vec<usize>, LrnnError> {
    let mut r = Runner::new(model);
    word.iter().map(|&w| r.step(w)).collect()
}

/// As [`model_run`], casting every state onto `grid` after every step.
pub fn model_run_cast<T: Scalar>(model: &LrnnModel<T>, word: &[usize], grid: &CastGrid<T>) -> Result<Vec<usize>, LrnnError> {
    let mut r = Runner::with_cast(model, grid);
    word.iter().map(|&w| r.step(w)).collect()
}

/// Outputs plus every layer's state after every position.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T> {
    pub outputs: Vec<usize>,
    /// `states[layer][position]`
    pub states: Vec<Vec<Matrix<T>>>,
}

pub fn model_trace<T: Scalar>(model: &LrnnModel<T>, word: &[usize], grid: Option<&CastGrid<T>>) -> Result<Trace<T>, LrnnError> {
    let mut r = match grid {
        Some(g) => Runner::with_cast(model, g),
        None => Runner::new(model),
    };
    let mut states = vec![Vec::with_capacity(word.len()); model.layers.len()];
    let mut outputs = Vec::with_capacity(word.len());
    for &w in word {
        outputs.push(r.step(w)?);
        for (i, s) in states.iter_mut().enumerate() {
            s.push(r.state(i));
        }
    }
    Ok(Trace { outputs, states })
}

/// Flattened states of a single layer after every token, without decoding.
pub fn layer_trajectory<T: Scalar>(
    layer: &LrnnLayer<T>,
    word: &[usize],
    grid: Option<&CastGrid<T>>,
) -> Result<Vec<Vec<T>>, LrnnError> {
    let mut st = LayerState {
        h: layer.h0.as_slice().to_vec(),
        has_input: vec![true; layer.alphabet_size()],
    };
    let mut scratch = vec![T::zero(); st.h.len()];
    let mut out = Vec::with_capacity(word.len());
    for (k, &w) in word.iter().enumerate() {
        if w >= layer.alphabet_size() {
            return Err(LrnnError::UnknownToken {
                layer: 0,
                token: w,
                alphabet: layer.alphabet_size(),
            });
        }
        layer_update(layer, &mut st, &mut scratch, w, (k + 1) as u64, grid)?;
        out.push(st.h.clone());
    }
    Ok(out)
}
