//! In-memory dataset processing: one-of-K labels, paired shuffling, batching, corruption.

use alloc::vec::Vec;

use crate::autoencoder::corrupt;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Parallel lists of data and one-of-K label batches.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchedDataset {
    data: Vec<Matrix>,
    labels: Vec<Matrix>,
}

impl BatchedDataset {
    pub fn new(data: Vec<Matrix>, labels: Vec<Matrix>) -> Result<Self> {
        if data.len() != labels.len() {
            return Err(Error::config(alloc::format!(
                "{} data batches but {} label batches",
                data.len(),
                labels.len()
            )));
        }
        for (d, l) in data.iter().zip(&labels) {
            if d.rows() != l.rows() {
                return Err(Error::ShapeMismatch {
                    op: "BatchedDataset::new",
                    expected: (d.rows(), l.cols()),
                    found: l.shape(),
                });
            }
        }
        Ok(BatchedDataset { data, labels })
    }

    pub fn data(&self) -> &[Matrix] {
        &self.data
    }

    pub fn labels(&self) -> &[Matrix] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn samples(&self) -> usize {
        self.data.iter().map(Matrix::rows).sum()
    }

    pub fn batch(&self, i: usize) -> (&Matrix, &Matrix) {
        (&self.data[i], &self.labels[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Matrix, &Matrix)> + '_ {
        self.data.iter().zip(&self.labels)
    }

    /// Same labels, data replaced batch by batch.
    pub fn with_data(&self, data: Vec<Matrix>) -> Result<Self> {
        BatchedDataset::new(data, self.labels.clone())
    }

    pub fn into_parts(self) -> (Vec<Matrix>, Vec<Matrix>) {
        (self.data, self.labels)
    }
}

/// Index labels (`m × 1`) to one-of-K rows (`m × k`).
pub fn one_of_k(labels: &Matrix, k: usize) -> Result<Matrix> {
    labels.ensure_cols("one_of_k", 1)?;
    let mut out = Matrix::zeros(labels.rows(), k);
    for r in 0..labels.rows() {
        let x = labels.get(r, 0);
        if !(x >= 0.0 && x < k as f64 && libm::trunc(x) == x) {
            return Err(Error::domain(
                "one_of_k",
                alloc::format!("label {x} is not a class index in [0, {k})"),
            ));
        }
        out.set(r, x as usize, 1.0);
    }
    Ok(out)
}

/// Checks that every row has a single 1 and zeros elsewhere.
pub fn validate_one_of_k(labels: &Matrix) -> Result<()> {
    for (r, row) in labels.iter_rows().enumerate() {
        let ones = row.iter().filter(|&&x| x == 1.0).count();
        let zeros = row.iter().filter(|&&x| x == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::domain(
                "one_of_k",
                alloc::format!("label row {r} is not one-of-K"),
            ));
        }
    }
    Ok(())
}

/// Applies one random permutation to the rows of both matrices.
pub fn shuffle_paired(data: &Matrix, labels: &Matrix, rng: &mut Rng) -> Result<(Matrix, Matrix)> {
    if data.rows() != labels.rows() {
        return Err(Error::ShapeMismatch {
            op: "shuffle_paired",
            expected: (data.rows(), labels.cols()),
            found: labels.shape(),
        });
    }
    let mut idx: Vec<usize> = (0..data.rows()).collect();
    rng.shuffle(&mut idx);
    Ok((data.select_rows(&idx), labels.select_rows(&idx)))
}

/// Row ranges of a contiguous split; the last batch absorbs the remainder.
pub fn batch_ranges(rows: usize, num_batches: usize) -> Result<Vec<core::ops::Range<usize>>> {
    if num_batches == 0 {
        return Err(Error::config("number of batches must be at least 1"));
    }
    if num_batches > rows {
        return Err(Error::config(alloc::format!(
            "{num_batches} batches requested for {rows} rows"
        )));
    }
    let size = rows / num_batches;
    Ok((0..num_batches)
        .map(|b| {
            let end = if b + 1 == num_batches {
                rows
            } else {
                (b + 1) * size
            };
            b * size..end
        })
        .collect())
}

pub fn make_batches(data: &Matrix, labels: &Matrix, num_batches: usize) -> Result<BatchedDataset> {
    if data.rows() != labels.rows() {
        return Err(Error::ShapeMismatch {
            op: "make_batches",
            expected: (data.rows(), labels.cols()),
            found: labels.shape(),
        });
    }
    let ranges = batch_ranges(data.rows(), num_batches)?;
    let d = ranges.iter().map(|r| data.row_range(r.clone())).collect();
    let l = ranges.iter().map(|r| labels.row_range(r.clone())).collect();
    BatchedDataset::new(d, l)
}

/// Unlabeled variant of [`make_batches`].
pub fn split_batches(data: &Matrix, num_batches: usize) -> Result<Vec<Matrix>> {
    Ok(batch_ranges(data.rows(), num_batches)?
        .into_iter()
        .map(|r| data.row_range(r))
        .collect())
}

pub fn corrupt_batches(set: &BatchedDataset, rate: f64, rng: &mut Rng) -> Result<BatchedDataset> {
    let data = set
        .data()
        .iter()
        .map(|d| corrupt(d, rate, rng))
        .collect::<Result<Vec<_>>>()?;
    set.with_data(data)
}

/// Outcome of a classification pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationReport {
    pub error_rate: f64,
    /// `confusion[actual][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub samples: usize,
}

impl ClassificationReport {
    pub fn from_predictions(predicted: &[usize], actual: &[usize], classes: usize) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::ShapeMismatch {
                op: "ClassificationReport",
                expected: (actual.len(), 1),
                found: (predicted.len(), 1),
            });
        }
        let mut confusion = alloc::vec![alloc::vec![0usize; classes]; classes];
        let mut wrong = 0;
        for (&p, &a) in predicted.iter().zip(actual) {
            if p >= classes || a >= classes {
                return Err(Error::domain(
                    "ClassificationReport",
                    "class index out of range",
                ));
            }
            confusion[a][p] += 1;
            if p != a {
                wrong += 1;
            }
        }
        let samples = actual.len();
        Ok(ClassificationReport {
            error_rate: if samples == 0 {
                0.0
            } else {
                wrong as f64 / samples as f64
            },
            confusion,
            samples,
        })
    }

    /// Scores row-wise scores against one-of-K labels by argmax.
    pub fn from_scores(scores: &Matrix, labels: &Matrix) -> Result<Self> {
        labels.ensure_shape("classify", scores.shape())?;
        ClassificationReport::from_predictions(
            &scores.argmax_rows(),
            &labels.argmax_rows(),
            scores.cols(),
        )
    }

    pub fn accuracy(&self) -> f64 {
        1.0 - self.error_rate
    }

    pub fn correct(&self) -> usize {
        (0..self.confusion.len())
            .map(|i| self.confusion[i][i])
            .sum()
    }
}
