use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Targets `W*·x + noise` with a low-rank teacher `W*`.
    LowrankTeacherRegression,
    /// Labels `argmax(W*·x)` over `num_classes` outputs.
    SoftmaxClassification,
}

fn default_train_size() -> usize {
    2048
}
fn default_eval_size() -> usize {
    512
}
fn default_teacher_rank() -> usize {
    16
}
fn default_noise_std() -> f64 {
    0.01
}
fn default_dim() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default = "default_dim")]
    pub input_dim: usize,
    /// Regression target width, or the number of classes.
    #[serde(default = "default_dim")]
    pub output_dim: usize,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    #[serde(default = "default_teacher_rank")]
    pub teacher_rank: usize,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
}

impl TaskSpec {
    pub fn regression(data_seed: u64) -> Self {
        Self {
            kind: TaskKind::LowrankTeacherRegression,
            data_seed,
            input_dim: default_dim(),
            output_dim: default_dim(),
            train_size: default_train_size(),
            eval_size: default_eval_size(),
            teacher_rank: default_teacher_rank(),
            noise_std: default_noise_std(),
        }
    }

    pub fn classification(data_seed: u64, num_classes: usize) -> Self {
        Self {
            kind: TaskKind::SoftmaxClassification,
            output_dim: num_classes,
            ..Self::regression(data_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.train_size == 0 || self.eval_size == 0 {
            return Err(Error::Config("task sizes must be positive".into()));
        }
        if self.teacher_rank == 0 || self.teacher_rank > self.input_dim.min(self.output_dim) {
            return Err(Error::Config(format!(
                "teacher_rank must lie in 1..={}",
                self.input_dim.min(self.output_dim)
            )));
        }
        if self.kind == TaskKind::SoftmaxClassification && self.output_dim < 2 {
            return Err(Error::Config("classification needs at least 2 classes".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        Ok(())
    }

    /// Generates the teacher and both splits from `data_seed`.
    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.data_seed);
        let r = self.teacher_rank;
        let a = Matrix::gaussian(self.output_dim, r, &mut rng);
        let b = Matrix::gaussian(self.input_dim, r, &mut rng);
        // Unit-variance inputs then give outputs of roughly unit variance.
        let teacher = a
            .matmul_t(&b)?
            .scale(1.0 / ((r * self.input_dim) as f64).sqrt());
        let train = self.split(&teacher, self.train_size, &mut rng)?;
        let eval = self.split(&teacher, self.eval_size, &mut rng)?;
        Ok(Dataset { teacher, train, eval })
    }

    fn split(&self, teacher: &Matrix, n: usize, rng: &mut ChaCha8Rng) -> Result<Batch> {
        let x = Matrix::gaussian(n, self.input_dim, rng);
        let clean = x.matmul_t(teacher)?;
        let y = match self.kind {
            TaskKind::LowrankTeacherRegression => {
                let mut y = clean;
                for v in y.as_mut_slice() {
                    *v += self.noise_std * rng.sample::<f64, _>(StandardNormal);
                }
                Targets::Values(y)
            }
            TaskKind::SoftmaxClassification => Targets::Labels(
                (0..n)
                    .map(|i| {
                        let row = clean.row(i);
                        (0..row.len())
                            .max_by(|&p, &q| row[p].total_cmp(&row[q]))
                            .expect("at least two classes")
                    })
                    .collect(),
            ),
        };
        Ok(Batch { x, y })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Values(Matrix),
    Labels(Vec<usize>),
}

/// Inputs as rows of `x` with matching targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub y: Targets,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `indices` of this batch, repeats allowed.
    pub fn select(&self, indices: &[usize]) -> Batch {
        let d = self.x.cols();
        let x = Matrix::from_fn(indices.len(), d, |i, j| self.x[(indices[i], j)]);
        let y = match &self.y {
            Targets::Values(y) => {
                Targets::Values(Matrix::from_fn(indices.len(), y.cols(), |i, j| y[(indices[i], j)]))
            }
            Targets::Labels(l) => Targets::Labels(indices.iter().map(|&i| l[i]).collect()),
        };
        Batch { x, y }
    }

    /// Draws `size` rows uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Batch {
        let idx: Vec<usize> = (0..size).map(|_| rng.random_range(0..self.len())).collect();
        self.select(&idx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub teacher: Matrix,
    pub train: Batch,
    pub eval: Batch,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded() {
        let spec = TaskSpec {
            train_size: 32,
            eval_size: 8,
            ..TaskSpec::regression(3)
        };
        let a = spec.generate().unwrap();
        assert_eq!(a, spec.generate().unwrap());
        let other = TaskSpec { data_seed: 4, ..spec.clone() }.generate().unwrap();
        assert_ne!(a.train, other.train);
        let s = crate::linalg::thin_svd(&a.teacher).unwrap().s;
        assert!(s[15] > 1e-6 && s[16] < 1e-10);
    }

    #[test]
    fn classification_labels_in_range() {
        let spec = TaskSpec {
            train_size: 50,
            eval_size: 10,
            teacher_rank: 4,
            ..TaskSpec::classification(1, 5)
        };
        let d = spec.generate().unwrap();
        match &d.train.y {
            Targets::Labels(l) => assert!(l.iter().all(|&c| c < 5)),
            _ => panic!("expected labels"),
        }
    }

    #[test]
    fn validation() {
        let mut spec = TaskSpec::regression(0);
        spec.teacher_rank = 65;
        assert!(spec.validate().is_err());
        let spec = TaskSpec::classification(0, 1);
        assert!(spec.validate().is_err());
    }
}
