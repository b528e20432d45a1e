//! Synthetic datasets.
//!
//! Two task families: a 2-d product regression task (y = x0*x1 + eps with
//! uniform noise) and a classification task labeled by a fixed random
//! teacher network. All generators are pure functions of (spec, seed).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{self, Activation, LossKind, MlpSpec};
use crate::seed::{rng_from_seed, sub_seed};

/// Hidden width of the fixed teacher network used to label classification data.
const TEACHER_HIDDEN: usize = 16;
/// Sample count used to probe a teacher for class balance.
const TEACHER_PROBE_N: usize = 2000;
/// A teacher is degenerate if any class gets less than this frequency on the probe.
const TEACHER_MIN_CLASS_FREQ: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

/// Description of one dataset draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub task: TaskKind,
    pub input_dim: usize,
    pub n: usize,
    /// Half width of the uniform target noise (regression only).
    pub noise_half_width: f64,
    /// Number of classes (classification only).
    pub num_classes: usize,
    /// Seed of the fixed teacher network (classification only).
    pub teacher_seed: u64,
}

impl DataSpec {
    /// The 2-d product regression task: y = x0*x1 + eps.
    pub fn regression(n: usize, noise_half_width: f64) -> Result<Self> {
        let spec = Self {
            task: TaskKind::Regression,
            input_dim: 2,
            n,
            noise_half_width,
            num_classes: 0,
            teacher_seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Classification with labels from a fixed random teacher network.
    pub fn classification(
        input_dim: usize,
        n: usize,
        num_classes: usize,
        teacher_seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            task: TaskKind::Classification,
            input_dim,
            n,
            noise_half_width: 0.0,
            num_classes,
            teacher_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidSpec("n must be at least 1".into()));
        }
        if self.input_dim < 1 {
            return Err(Error::InvalidSpec("input_dim must be at least 1".into()));
        }
        if self.noise_half_width < 0.0 {
            return Err(Error::InvalidSpec("noise_half_width must be nonnegative".into()));
        }
        if self.task == TaskKind::Classification && self.num_classes < 2 {
            return Err(Error::InvalidSpec(
                "classification needs at least 2 classes".into(),
            ));
        }
        Ok(())
    }
}

/// Target of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleTarget {
    Value(f64),
    Label(usize),
}

#[derive(Debug, Clone, PartialEq)]
enum Targets {
    Values(Vec<f64>),
    Labels(Vec<usize>),
}

/// An immutable sampled dataset: n rows of inputs plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Row-major n x input_dim.
    inputs: Vec<f64>,
    targets: Targets,
    input_dim: usize,
    spec: DataSpec,
}

impl Dataset {
    pub fn len(&self) -> usize {
        match &self.targets {
            Targets::Values(v) => v.len(),
            Targets::Labels(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn spec(&self) -> &DataSpec {
        &self.spec
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> SampleTarget {
        match &self.targets {
            Targets::Values(v) => SampleTarget::Value(v[i]),
            Targets::Labels(l) => SampleTarget::Label(l[i]),
        }
    }

    /// Regression target values; errors on classification data.
    pub fn values(&self) -> Result<&[f64]> {
        match &self.targets {
            Targets::Values(v) => Ok(v),
            Targets::Labels(_) => {
                Err(Error::ShapeMismatch("dataset holds class labels, not values".into()))
            }
        }
    }

    /// Class labels; errors on regression data.
    pub fn labels(&self) -> Result<&[usize]> {
        match &self.targets {
            Targets::Labels(l) => Ok(l),
            Targets::Values(_) => {
                Err(Error::ShapeMismatch("dataset holds values, not class labels".into()))
            }
        }
    }

    /// Build a regression dataset from explicit rows (test support).
    pub fn from_regression_rows(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::ShapeMismatch("row/target count mismatch".into()));
        }
        if rows.is_empty() {
            return Err(Error::InvalidSpec("empty dataset".into()));
        }
        let input_dim = rows[0].len();
        if rows.iter().any(|r| r.len() != input_dim) {
            return Err(Error::ShapeMismatch("ragged input rows".into()));
        }
        let spec = DataSpec {
            task: TaskKind::Regression,
            input_dim,
            n: rows.len(),
            noise_half_width: 0.0,
            num_classes: 0,
            teacher_seed: 0,
        };
        let inputs = rows.into_iter().flatten().collect();
        Ok(Self { inputs, targets: Targets::Values(targets), input_dim, spec })
    }
}

/// Generate the product regression dataset: x0, x1 ~ U[-1,1] i.i.d.,
/// y = x0*x1 + eps with eps ~ U[-noise_half_width, noise_half_width].
pub fn gen_regression(spec: &DataSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if spec.task != TaskKind::Regression {
        return Err(Error::InvalidSpec("gen_regression needs a regression spec".into()));
    }
    if spec.input_dim != 2 {
        return Err(Error::InvalidSpec(
            "the product regression task is 2-dimensional".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut inputs = Vec::with_capacity(spec.n * 2);
    let mut values = Vec::with_capacity(spec.n);
    let eta = spec.noise_half_width;
    for _ in 0..spec.n {
        let x0: f64 = rng.gen_range(-1.0..1.0);
        let x1: f64 = rng.gen_range(-1.0..1.0);
        let eps = if eta > 0.0 { rng.gen_range(-eta..eta) } else { 0.0 };
        inputs.push(x0);
        inputs.push(x1);
        values.push(x0 * x1 + eps);
    }
    Ok(Dataset { inputs, targets: Targets::Values(values), input_dim: 2, spec: spec.clone() })
}

/// The fixed teacher network for a classification spec.
pub fn teacher_params(spec: &DataSpec) -> Result<netcore::MlpParams> {
    let teacher_spec = MlpSpec::new(
        vec![spec.input_dim, TEACHER_HIDDEN, spec.num_classes],
        Activation::Relu,
        LossKind::SoftmaxCrossEntropy,
    )?;
    let teacher = netcore::init_params(&teacher_spec, spec.teacher_seed);
    // balance probe on a fixed input stream derived from the teacher seed
    let mut counts = vec![0usize; spec.num_classes];
    let mut rng = rng_from_seed(sub_seed(spec.teacher_seed, u64::MAX >> 1));
    for _ in 0..TEACHER_PROBE_N {
        let x: Vec<f64> = (0..spec.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        counts[argmax(&netcore::forward(&teacher, &x)?.prediction)] += 1;
    }
    let min_freq =
        counts.iter().map(|&c| c as f64 / TEACHER_PROBE_N as f64).fold(f64::INFINITY, f64::min);
    if min_freq < TEACHER_MIN_CLASS_FREQ {
        return Err(Error::Degenerate(format!(
            "teacher_seed {} produces a class with frequency {:.3} (< {}); choose a different teacher_seed",
            spec.teacher_seed, min_freq, TEACHER_MIN_CLASS_FREQ
        )));
    }
    Ok(teacher)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Generate classification data: inputs ~ U[-1,1]^d, labels = argmax of the
/// fixed teacher network's logits.
pub fn gen_classification(spec: &DataSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if spec.task != TaskKind::Classification {
        return Err(Error::InvalidSpec("gen_classification needs a classification spec".into()));
    }
    let teacher = teacher_params(spec)?;
    let mut rng = rng_from_seed(seed);
    let mut inputs = Vec::with_capacity(spec.n * spec.input_dim);
    let mut labels = Vec::with_capacity(spec.n);
    let mut x = vec![0.0; spec.input_dim];
    for _ in 0..spec.n {
        for xi in &mut x {
            *xi = rng.gen_range(-1.0..1.0);
        }
        labels.push(argmax(&netcore::forward(&teacher, &x)?.prediction));
        inputs.extend_from_slice(&x);
    }
    Ok(Dataset {
        inputs,
        targets: Targets::Labels(labels),
        input_dim: spec.input_dim,
        spec: spec.clone(),
    })
}

/// Generate a dataset of either task kind.
pub fn gen_dataset(spec: &DataSpec, seed: u64) -> Result<Dataset> {
    match spec.task {
        TaskKind::Regression => gen_regression(spec, seed),
        TaskKind::Classification => gen_classification(spec, seed),
    }
}

/// Replace each label, independently with probability `p_random`, by a
/// uniform draw over all classes (the original class included).
pub fn corrupt_labels(d: &Dataset, p_random: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&p_random) {
        return Err(Error::InvalidSpec("p_random must lie in [0, 1]".into()));
    }
    let labels = d.labels().map_err(|_| {
        Error::InvalidSpec("corrupt_labels applies to classification datasets only".into())
    })?;
    let k = d.spec.num_classes;
    let mut rng = rng_from_seed(seed);
    let corrupted: Vec<usize> = labels
        .iter()
        .map(|&y| {
            if rng.gen_range(0.0..1.0) < p_random {
                rng.gen_range(0..k)
            } else {
                y
            }
        })
        .collect();
    Ok(Dataset {
        inputs: d.inputs.clone(),
        targets: Targets::Labels(corrupted),
        input_dim: d.input_dim,
        spec: d.spec.clone(),
    })
}

/// M training sets plus one test set, all independent draws from one spec.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub train_sets: Vec<Dataset>,
    pub test_set: Dataset,
}

impl DatasetBundle {
    pub fn m(&self) -> usize {
        self.train_sets.len()
    }
}

/// Draw M training sets of size `n` and a test set of size `n_test`, with
/// sub-seeds derived from (seed, index); the test set uses index M.
pub fn split_bundle(
    spec: &DataSpec,
    m: usize,
    n: usize,
    n_test: usize,
    seed: u64,
) -> Result<DatasetBundle> {
    if m < 2 {
        return Err(Error::InvalidSpec("a bundle needs at least 2 training sets".into()));
    }
    if n < 1 || n_test < 1 {
        return Err(Error::InvalidSpec("bundle set sizes must be positive".into()));
    }
    let train_spec = spec.with_n(n);
    let train_sets = (0..m)
        .map(|i| gen_dataset(&train_spec, sub_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let test_set = gen_dataset(&spec.with_n(n_test), sub_seed(seed, m as u64))?;
    Ok(DatasetBundle { train_sets, test_set })
}
