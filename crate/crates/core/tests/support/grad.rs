//! Finite-difference checks over randomly composed tape programs.

use std::collections::BTreeSet;
use std::sync::Arc;

use grafenne::tensor::{Segments, Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

pub fn random_tensor(rng: &mut impl Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Max relative error between the tape gradient and central differences for
/// every entry of every leaf.
pub fn check(leaves: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|&v| tape.gradient(&grads, v)).collect();

    let eval = |leaves: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = leaves.iter().map(|t| tape.variable(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        tape.value(loss).item()
    };
    let mut worst = 0.0f64;
    let mut work = leaves.to_vec();
    for (l, leaf) in leaves.iter().enumerate() {
        for i in 0..leaf.len() {
            let x = leaf.data()[i];
            work[l].data_mut()[i] = x + STEP;
            let up = eval(&work);
            work[l].data_mut()[i] = x - STEP;
            let down = eval(&work);
            work[l].data_mut()[i] = x;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic[l].data()[i], numeric));
        }
    }
    worst
}

#[derive(Clone, Debug)]
pub enum Step {
    Matmul(usize),
    Add(usize),
    Sub(usize),
    Mul(usize),
    Scale(f64),
    AddBias(usize),
    ConcatRows(usize),
    ConcatCols(usize),
    LeakyRelu(f64),
    Relu,
    Sigmoid,
    Square,
    Gather(Vec<usize>),
    Scatter(Vec<usize>, usize),
    RowScale(usize),
    RowDot(usize),
    /// Scores from a row dot product, softmaxed per segment, then used to scale rows.
    Attend(usize, Arc<Segments>),
}

#[derive(Clone, Debug)]
pub enum Head {
    Sum,
    Mean,
    CrossEntropy(Vec<usize>),
    Bce(Vec<f64>),
}

impl Step {
    pub fn name(&self) -> &'static str {
        match self {
            Step::Matmul(_) => "matmul",
            Step::Add(_) => "add",
            Step::Sub(_) => "sub",
            Step::Mul(_) => "mul",
            Step::Scale(_) => "scale",
            Step::AddBias(_) => "add_bias",
            Step::ConcatRows(_) | Step::ConcatCols(_) => "concat",
            Step::LeakyRelu(_) => "leaky_relu",
            Step::Relu => "relu",
            Step::Sigmoid => "sigmoid",
            Step::Square => "square",
            Step::Gather(_) => "gather_rows",
            Step::Scatter(..) => "scatter_add_rows",
            Step::RowScale(_) => "row_scale",
            Step::RowDot(_) => "row_dot",
            Step::Attend(..) => "segment_softmax",
        }
    }
}

pub struct Plan {
    pub leaves: Vec<Tensor>,
    pub steps: Vec<Step>,
    pub head: Head,
}

fn random_segments(rng: &mut impl Rng, n: usize) -> Segments {
    let k = rng.gen_range(1..=n);
    let mut ids: Vec<usize> = (0..n).map(|i| i % k).collect();
    ids.shuffle(rng);
    Segments::from_ids(&ids, k).unwrap()
}

pub fn random_plan(rng: &mut impl Rng) -> Plan {
    const MAX: usize = 8;
    let (mut r, mut c) = (rng.gen_range(1..=MAX), rng.gen_range(1..=MAX));
    let mut leaves = vec![random_tensor(rng, r, c)];
    let leaf = |rng: &mut ChaCha8Rng, leaves: &mut Vec<Tensor>, r: usize, c: usize| {
        leaves.push(random_tensor(rng, r, c));
        leaves.len() - 1
    };
    let mut local = ChaCha8Rng::seed_from_u64(rng.gen());
    let depth = rng.gen_range(1..=6);
    let mut steps = Vec::with_capacity(depth);
    for _ in 0..depth {
        let step = match rng.gen_range(0..17) {
            0 => {
                let k = rng.gen_range(1..=MAX);
                let s = Step::Matmul(leaf(&mut local, &mut leaves, c, k));
                c = k;
                s
            }
            1 => Step::Add(leaf(&mut local, &mut leaves, r, c)),
            2 => Step::Sub(leaf(&mut local, &mut leaves, r, c)),
            3 => Step::Mul(leaf(&mut local, &mut leaves, r, c)),
            4 => Step::Scale(rng.gen_range(-2.0..2.0)),
            5 => Step::AddBias(leaf(&mut local, &mut leaves, 1, c)),
            6 if r < MAX => {
                let extra = rng.gen_range(1..=MAX - r);
                let s = Step::ConcatRows(leaf(&mut local, &mut leaves, extra, c));
                r += extra;
                s
            }
            7 if c < MAX => {
                let extra = rng.gen_range(1..=MAX - c);
                let s = Step::ConcatCols(leaf(&mut local, &mut leaves, r, extra));
                c += extra;
                s
            }
            8 => Step::LeakyRelu(0.2),
            9 => Step::Relu,
            10 => Step::Sigmoid,
            11 => Step::Square,
            12 => {
                let n = rng.gen_range(1..=MAX);
                let idx = (0..n).map(|_| rng.gen_range(0..r)).collect();
                r = n;
                Step::Gather(idx)
            }
            13 => {
                let rows = rng.gen_range(1..=MAX);
                let idx = (0..r).map(|_| rng.gen_range(0..rows)).collect();
                r = rows;
                Step::Scatter(idx, rows)
            }
            14 => Step::RowScale(leaf(&mut local, &mut leaves, r, 1)),
            15 => {
                let s = Step::RowDot(leaf(&mut local, &mut leaves, r, c));
                c = 1;
                s
            }
            _ => {
                let segs = Arc::new(random_segments(rng, r));
                Step::Attend(leaf(&mut local, &mut leaves, r, c), segs)
            }
        };
        steps.push(step);
    }
    let head = match rng.gen_range(0..4) {
        0 => Head::Sum,
        1 => Head::Mean,
        2 => Head::CrossEntropy((0..r).map(|_| rng.gen_range(0..c)).collect()),
        _ => Head::Bce((0..r * c).map(|_| rng.gen_range(0..2) as f64).collect()),
    };
    Plan { leaves, steps, head }
}

pub fn run_plan(t: &mut Tape, v: &[Var], steps: &[Step], head: &Head) -> Var {
    let mut cur = v[0];
    for step in steps {
        cur = match step {
            Step::Matmul(l) => t.matmul(cur, v[*l]).unwrap(),
            Step::Add(l) => t.add(cur, v[*l]).unwrap(),
            Step::Sub(l) => t.sub(cur, v[*l]).unwrap(),
            Step::Mul(l) => t.mul(cur, v[*l]).unwrap(),
            Step::Scale(s) => t.scale(cur, *s),
            Step::AddBias(l) => t.add_bias(cur, v[*l]).unwrap(),
            Step::ConcatRows(l) => t.concat(&[cur, v[*l]], 0).unwrap(),
            Step::ConcatCols(l) => t.concat(&[cur, v[*l]], 1).unwrap(),
            Step::LeakyRelu(s) => t.leaky_relu(cur, *s),
            Step::Relu => t.relu(cur),
            Step::Sigmoid => t.sigmoid(cur),
            Step::Square => t.square(cur),
            Step::Gather(idx) => t.gather_rows(cur, idx.clone()).unwrap(),
            Step::Scatter(idx, rows) => t.scatter_add_rows(cur, idx.clone(), *rows).unwrap(),
            Step::RowScale(l) => t.row_scale(cur, v[*l]).unwrap(),
            Step::RowDot(l) => t.row_dot(cur, v[*l]).unwrap(),
            Step::Attend(l, segs) => {
                let s = t.row_dot(cur, v[*l]).unwrap();
                let a = t.segment_softmax(s, segs.clone()).unwrap();
                t.row_scale(cur, a).unwrap()
            }
        };
    }
    match head {
        Head::Sum => t.sum(cur),
        Head::Mean => t.mean(cur).unwrap(),
        Head::CrossEntropy(labels) => t.cross_entropy(cur, labels.clone()).unwrap(),
        Head::Bce(targets) => t.bce_with_logits(cur, targets.clone()).unwrap(),
    }
}

/// Worst relative error over `cases` random programs, with the op and head
/// kinds they exercised.
pub struct SuiteReport {
    pub worst: f64,
    pub worst_case: usize,
    pub ops: BTreeSet<&'static str>,
    pub heads: usize,
}

pub fn suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ops = BTreeSet::new();
    let mut heads = BTreeSet::new();
    let (mut worst, mut worst_case) = (0.0f64, 0);
    for case in 0..cases {
        let plan = random_plan(&mut rng);
        for s in &plan.steps {
            ops.insert(s.name());
        }
        heads.insert(format!("{:?}", std::mem::discriminant(&plan.head)));
        let err = check(&plan.leaves, |t, v| run_plan(t, v, &plan.steps, &plan.head));
        if err > worst {
            worst = err;
            worst_case = case;
        }
    }
    SuiteReport {
        worst,
        worst_case,
        ops,
        heads: heads.len(),
    }
}
