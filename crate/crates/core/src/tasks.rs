//! Synthetic sequence tasks: parity, modular arithmetic with and without
//! brackets, and group word problems, with JSONL serialization.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsa::{all_permutations, word_problem_oracle, FsaError, Group, Permutation};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid length range {0}..={1}")]
    LengthRange(usize, usize),
    #[error("modulus must be at least 2, got {0}")]
    Modulus(usize),
    #[error("variant {variant} is not available for {group}")]
    Variant { variant: String, group: String },
    #[error("parse error at token {position}: {message}")]
    Parse { position: usize, message: String },
    #[error(transparent)]
    Fsa(#[from] FsaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One sequence with per-position labels; `mask[i] = 1` marks the positions
/// that count for loss and accuracy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub tokens: Vec<usize>,
    pub labels: Vec<usize>,
    pub mask: Vec<u8>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn masked_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m != 0).map(|(i, _)| i)
    }
}

pub fn write_jsonl<W: Write>(mut w: W, samples: &[Sample]) -> Result<(), TaskError> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Sample>, TaskError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn check_range(lo: usize, hi: usize, min: usize) -> Result<(), TaskError> {
    if lo < min || lo > hi {
        return Err(TaskError::LengthRange(lo, hi));
    }
    Ok(())
}

/// Uniform bit strings of uniform length in `len_min..=len_max`, labelled
/// with the running parity at every position.
pub fn gen_parity(len_min: usize, len_max: usize, count: usize, seed: u64) -> Result<Vec<Sample>, TaskError> {
    check_range(len_min, len_max, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let len = rng.gen_range(len_min..=len_max);
            let tokens: Vec<usize> = (0..len).map(|_| rng.gen_range(0..2)).collect();
            let mut acc = 0;
            let labels = tokens
                .iter()
                .map(|&t| {
                    acc ^= t;
                    acc
                })
                .collect();
            Sample {
                tokens,
                labels,
                mask: vec![1; len],
            }
        })
        .collect())
}

/// Token ids of the arithmetic vocabulary for modulus `m`: digits are
/// `0..m`, followed by the symbols below.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArithVocab {
    pub m: usize,
}

impl ArithVocab {
    pub fn plus(self) -> usize {
        self.m
    }
    pub fn minus(self) -> usize {
        self.m + 1
    }
    pub fn times(self) -> usize {
        self.m + 2
    }
    pub fn equals(self) -> usize {
        self.m + 3
    }
    pub fn pad(self) -> usize {
        self.m + 4
    }
    pub fn open(self) -> usize {
        self.m + 5
    }
    pub fn close(self) -> usize {
        self.m + 6
    }

    pub fn size(self, brackets: bool) -> usize {
        self.m + if brackets { 7 } else { 5 }
    }

    /// Parses a human-readable expression such as `2-3-3*2=`; whitespace is
    /// ignored and digits must be below `m`.
    pub fn encode(self, text: &str) -> Option<Vec<usize>> {
        text.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '+' => Some(self.plus()),
                '-' => Some(self.minus()),
                '*' => Some(self.times()),
                '=' => Some(self.equals()),
                '(' => Some(self.open()),
                ')' => Some(self.close()),
                _ => c.to_digit(10).map(|d| d as usize).filter(|&d| d < self.m),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Add,
    Sub,
    Mul,
}

impl Op {
    fn token(self, v: ArithVocab) -> usize {
        match self {
            Op::Add => v.plus(),
            Op::Sub => v.minus(),
            Op::Mul => v.times(),
        }
    }

    fn random<R: Rng>(rng: &mut R) -> Op {
        [Op::Add, Op::Sub, Op::Mul][rng.gen_range(0..3)]
    }
}

fn md(x: i64, m: usize) -> i64 {
    x.rem_euclid(m as i64)
}

/// Value of a flat chain `d₀ op₁ d₁ …` with `*` binding tighter and
/// left-associative `+`/`−`, via a running sum of products.
fn eval_chain(digits: &[i64], ops: &[Op], m: usize) -> i64 {
    let mut total = 0i64;
    let mut sign = 1i64;
    let mut term = digits[0];
    for (op, &d) in ops.iter().zip(&digits[1..]) {
        match op {
            Op::Mul => term = md(term * d, m),
            Op::Add | Op::Sub => {
                total = md(total + sign * term, m);
                sign = if *op == Op::Add { 1 } else { -1 };
                term = d;
            }
        }
    }
    md(total + sign * term, m)
}

enum Expr {
    Leaf { digit: usize, negate: bool, paren: bool },
    Node { op: Op, left: Box<Expr>, right: Box<Expr> },
}

impl Expr {
    fn value(&self, m: usize) -> i64 {
        match self {
            Expr::Leaf { digit, negate, .. } => md(if *negate { -(*digit as i64) } else { *digit as i64 }, m),
            Expr::Node { op, left, right } => {
                let (a, b) = (left.value(m), right.value(m));
                md(
                    match op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                    },
                    m,
                )
            }
        }
    }

    fn render(&self, v: ArithVocab, top: bool, out: &mut Vec<usize>) {
        match self {
            Expr::Leaf { digit, negate, paren } => {
                if *paren {
                    out.push(v.open());
                }
                if *negate {
                    out.push(v.minus());
                }
                out.push(*digit);
                if *paren {
                    out.push(v.close());
                }
            }
            Expr::Node { op, left, right } => {
                if !top {
                    out.push(v.open());
                }
                left.render(v, false, out);
                out.push(op.token(v));
                right.render(v, false, out);
                if !top {
                    out.push(v.close());
                }
            }
        }
    }
}

/// Probability that a bracketed expression node stops growing.
pub const BRACKET_STOP_PROB: f64 = 0.4;

fn random_leaf<R: Rng>(rng: &mut R, m: usize, budget: usize) -> (Expr, usize) {
    let digit = rng.gen_range(0..m);
    let negate = budget >= 2 && rng.gen_bool(0.25);
    let base = 1 + negate as usize;
    let paren = budget >= base + 2 && rng.gen_bool(0.2);
    (Expr::Leaf { digit, negate, paren }, base + 2 * paren as usize)
}

/// Random tree whose rendering (with brackets around inner nodes) fits in
/// `budget` tokens.
fn random_tree<R: Rng>(rng: &mut R, m: usize, budget: usize, top: bool) -> (Expr, usize) {
    let wrap = if top { 0 } else { 2 };
    // smallest node: a op b, plus brackets when nested
    if budget < 3 + wrap || rng.gen_bool(BRACKET_STOP_PROB) {
        return random_leaf(rng, m, budget);
    }
    let inner = budget - wrap - 1;
    let left_budget = rng.gen_range(1..inner);
    let (left, ll) = random_tree(rng, m, left_budget, false);
    let (right, rl) = random_tree(rng, m, inner - ll, false);
    (
        Expr::Node {
            op: Op::random(rng),
            left: Box::new(left),
            right: Box::new(right),
        },
        ll + rl + 1 + wrap,
    )
}

/// Arithmetic modulo `m`. Each sample has length `L` drawn from
/// `len_min..=len_max`: an expression, `=`, then padding. The label sits at
/// the position right after `=` and is the only masked position. Flat
/// expressions use as many operations as fit; bracketed ones are random
/// trees that fit the budget.
pub fn gen_mod_arith(
    m: usize,
    brackets: bool,
    len_min: usize,
    len_max: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Sample>, TaskError> {
    if m < 2 {
        return Err(TaskError::Modulus(m));
    }
    check_range(len_min, len_max, 3)?;
    let v = ArithVocab { m };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = rng.gen_range(len_min..=len_max);
        let budget = len - 2;
        let (mut tokens, value) = if brackets {
            let (e, _) = random_tree(&mut rng, m, budget, true);
            let mut t = Vec::with_capacity(len);
            e.render(v, true, &mut t);
            (t, e.value(m))
        } else {
            let n_ops = (budget - 1) / 2;
            let digits: Vec<i64> = (0..=n_ops).map(|_| rng.gen_range(0..m) as i64).collect();
            let ops: Vec<Op> = (0..n_ops).map(|_| Op::random(&mut rng)).collect();
            let mut t = vec![digits[0] as usize];
            for (op, &d) in ops.iter().zip(&digits[1..]) {
                t.push(op.token(v));
                t.push(d as usize);
            }
            (t, eval_chain(&digits, &ops, m))
        };
        tokens.push(v.equals());
        let answer = tokens.len();
        tokens.resize(len, v.pad());
        let mut labels = vec![0; len];
        labels[answer] = value as usize;
        let mut mask = vec![0; len];
        mask[answer] = 1;
        out.push(Sample { tokens, labels, mask });
    }
    Ok(out)
}

/// Recursive-descent evaluation of an arithmetic token sequence up to its
/// `=`: `expr := term (('+'|'−') term)*`, `term := unary ('*' unary)*`,
/// `unary := '−' unary | digit | '(' expr ')'`.
pub fn eval_arith(tokens: &[usize], m: usize) -> Result<usize, TaskError> {
    let v = ArithVocab { m };
    let end = tokens.iter().position(|&t| t == v.equals()).unwrap_or(tokens.len());
    let mut p = Parser { t: &tokens[..end], i: 0, v };
    let x = p.expr()?;
    if p.i != p.t.len() {
        return Err(p.err("trailing tokens"));
    }
    Ok(md(x, m) as usize)
}

struct Parser<'a> {
    t: &'a [usize],
    i: usize,
    v: ArithVocab,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> TaskError {
        TaskError::Parse {
            position: self.i,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<usize> {
        self.t.get(self.i).copied()
    }

    fn expr(&mut self) -> Result<i64, TaskError> {
        let mut x = self.term()?;
        while let Some(op) = self.peek().filter(|&o| o == self.v.plus() || o == self.v.minus()) {
            self.i += 1;
            let y = self.term()?;
            x = if op == self.v.plus() { x + y } else { x - y };
            x = md(x, self.v.m);
        }
        Ok(x)
    }

    fn term(&mut self) -> Result<i64, TaskError> {
        let mut x = self.unary()?;
        while self.peek() == Some(self.v.times()) {
            self.i += 1;
            x = md(x * self.unary()?, self.v.m);
        }
        Ok(x)
    }

    fn unary(&mut self) -> Result<i64, TaskError> {
        match self.peek() {
            Some(t) if t == self.v.minus() => {
                self.i += 1;
                Ok(md(-self.unary()?, self.v.m))
            }
            Some(t) if t < self.v.m => {
                self.i += 1;
                Ok(t as i64)
            }
            Some(t) if t == self.v.open() => {
                self.i += 1;
                let x = self.expr()?;
                if self.peek() != Some(self.v.close()) {
                    return Err(self.err("expected ')'"));
                }
                self.i += 1;
                Ok(x)
            }
            _ => Err(self.err("expected an operand")),
        }
    }
}

/// Which group elements a word may contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupVariant {
    Full,
    /// Identity and transpositions.
    SwapsOnly,
    /// Permutations moving at most three points.
    UpTo3,
    /// An element every `k` positions, the special token `|G|` elsewhere;
    /// labels lag by `k − 1` positions.
    KTokens { k: usize },
}

impl std::fmt::Display for GroupVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupVariant::Full => write!(f, "full"),
            GroupVariant::SwapsOnly => write!(f, "swaps_only"),
            GroupVariant::UpTo3 => write!(f, "up_to_3"),
            GroupVariant::KTokens { k } => write!(f, "k_tokens:{k}"),
        }
    }
}

/// Encoded elements a variant samples from.
pub fn variant_elements(group: Group, variant: GroupVariant) -> Result<Vec<usize>, TaskError> {
    group.validate()?;
    let bad = || TaskError::Variant {
        variant: variant.to_string(),
        group: group.to_string(),
    };
    let moved_at_most = |k: usize| -> Result<Vec<usize>, TaskError> {
        match group {
            Group::Symmetric { n } => Ok(all_permutations(n)
                .iter()
                .filter(|p| p.moved_points() <= k)
                .map(|p| p.rank() as usize)
                .collect()),
            Group::Cyclic { .. } => Err(bad()),
        }
    };
    match variant {
        GroupVariant::Full => Ok((0..group.order() as usize).collect()),
        GroupVariant::KTokens { k } if k >= 1 => Ok((0..group.order() as usize).collect()),
        GroupVariant::KTokens { .. } => Err(bad()),
        GroupVariant::SwapsOnly => moved_at_most(2),
        GroupVariant::UpTo3 => moved_at_most(3),
    }
}

/// Word-problem samples of exactly `len` tokens with per-position prefix
/// products as labels.
pub fn gen_group_word(group: Group, variant: GroupVariant, len: usize, count: usize, seed: u64) -> Result<Vec<Sample>, TaskError> {
    gen_group_word_range(group, variant, len, len, count, seed)
}

pub fn gen_group_word_range(
    group: Group,
    variant: GroupVariant,
    len_min: usize,
    len_max: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Sample>, TaskError> {
    check_range(len_min, len_max, 1)?;
    let pool = variant_elements(group, variant)?;
    let special = group.order() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = rng.gen_range(len_min..=len_max);
        let sample = match variant {
            GroupVariant::KTokens { k } => {
                let tokens: Vec<usize> = (0..len)
                    .map(|p| if p % k == 0 { *pool.choose(&mut rng).expect("nonempty") } else { special })
                    .collect();
                let as_elements: Vec<usize> = tokens.iter().map(|&t| if t == special { 0 } else { t }).collect();
                let prefix = word_problem_oracle(group, &as_elements)?;
                let labels = (0..len).map(|p| if p + 1 >= k { prefix[p + 1 - k] } else { 0 }).collect();
                Sample {
                    tokens,
                    labels,
                    mask: vec![1; len],
                }
            }
            _ => {
                let tokens: Vec<usize> = (0..len).map(|_| *pool.choose(&mut rng).expect("nonempty")).collect();
                let labels = word_problem_oracle(group, &tokens)?;
                Sample {
                    tokens,
                    labels,
                    mask: vec![1; len],
                }
            }
        };
        out.push(sample);
    }
    Ok(out)
}

/// A task together with its vocabulary, label set and chance accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskSpec {
    Parity,
    ModArith { m: usize, brackets: bool },
    Group { group: Group, variant: GroupVariant },
}

impl TaskSpec {
    pub fn vocab_size(&self) -> usize {
        match *self {
            TaskSpec::Parity => 2,
            TaskSpec::ModArith { m, brackets } => ArithVocab { m }.size(brackets),
            TaskSpec::Group { group, variant } => {
                group.order() as usize + matches!(variant, GroupVariant::KTokens { .. }) as usize
            }
        }
    }

    pub fn num_classes(&self) -> usize {
        match *self {
            TaskSpec::Parity => 2,
            TaskSpec::ModArith { m, .. } => m,
            TaskSpec::Group { group, .. } => group.order() as usize,
        }
    }

    /// Accuracy of uniform guessing.
    pub fn acc_rand(&self) -> f64 {
        1.0 / self.num_classes() as f64
    }

    /// Group tasks are scored per sequence (every masked position right);
    /// the others on the final masked position, rescaled against chance.
    pub fn sequence_scored(&self) -> bool {
        matches!(self, TaskSpec::Group { .. })
    }

    pub fn generate(&self, len_min: usize, len_max: usize, count: usize, seed: u64) -> Result<Vec<Sample>, TaskError> {
        match *self {
            TaskSpec::Parity => gen_parity(len_min, len_max, count, seed),
            TaskSpec::ModArith { m, brackets } => gen_mod_arith(m, brackets, len_min.max(3), len_max.max(3), count, seed),
            TaskSpec::Group { group, variant } => gen_group_word_range(group, variant, len_min, len_max, count, seed),
        }
    }
}

/// Rank encoding of a permutation, for building words by hand.
pub fn encode_permutation(p: &Permutation) -> usize {
    p.rank() as usize
}
