//! Datasets, client partitions, the synthetic Gaussian-mixture task and
//! label flipping.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize) -> Result<Self> {
        if dim == 0 || classes == 0 || features.len() != labels.len() * dim {
            return Err(invalid("feature matrix does not match labels"));
        }
        if labels.iter().any(|&y| y >= classes) {
            return Err(invalid("label out of range"));
        }
        Ok(Self {
            features,
            labels,
            dim,
            classes,
        })
    }

    pub fn empty(dim: usize, classes: usize) -> Self {
        Self {
            features: Vec::new(),
            labels: Vec::new(),
            dim,
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.features
            .chunks(self.dim)
            .zip(self.labels.iter().copied())
    }

    pub fn push(&mut self, x: &[f64], y: usize) {
        debug_assert_eq!(x.len(), self.dim);
        self.features.extend_from_slice(x);
        self.labels.push(y);
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            features: self.features[range.start * self.dim..range.end * self.dim].to_vec(),
            labels: self.labels[range].to_vec(),
            dim: self.dim,
            classes: self.classes,
        }
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut out = Dataset::empty(self.dim, self.classes);
        for &i in idx {
            out.push(self.row(i), self.labels[i]);
        }
        out
    }

    pub fn extend(&mut self, other: &Dataset) {
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
    }
}

/// Label-flipping attack `y -> C - 1 - y`.
pub fn poison(data: &Dataset) -> Dataset {
    let mut out = data.clone();
    for y in &mut out.labels {
        *y = data.classes - 1 - *y;
    }
    out
}

/// Copies `data` with every feature shifted by `deviation * u`, where the
/// `u ~ U(-1, 1)` come from `noise` in row-major order.
pub fn perturb(data: &Dataset, deviation: f64, noise: &[f64]) -> Dataset {
    let mut out = data.clone();
    if deviation != 0.0 {
        for (x, u) in out.features.iter_mut().zip(noise) {
            *x += deviation * u;
        }
    }
    out
}

/// Uniform noise in `[-1, 1]` for `rows` samples of width `dim`.
pub fn uniform_noise<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Vec<f64> {
    (0..rows * dim)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect()
}

/// Class-conditional Gaussians with a shared diagonal covariance whose
/// standard deviations span `[scale_lo, scale_hi]` geometrically. Class means
/// are drawn per dimension in units of that dimension's spread, so the
/// narrow dimensions carry as much signal as the wide ones.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub means: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSpec {
    pub classes: usize,
    pub dim: usize,
    /// Mean spread in units of per-dimension standard deviation.
    pub separation: f64,
    pub scale_lo: f64,
    pub scale_hi: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 20,
            separation: 1.0,
            scale_lo: 0.1,
            scale_hi: 1.0,
        }
    }
}

impl GaussianMixture {
    pub fn new<R: Rng + ?Sized>(spec: &MixtureSpec, rng: &mut R) -> Result<Self> {
        if spec.classes < 2
            || spec.dim == 0
            || !(spec.scale_lo > 0.0 && spec.scale_lo <= spec.scale_hi)
        {
            return Err(invalid(
                "mixture needs >= 2 classes, a positive dimension and 0 < scale_lo <= scale_hi",
            ));
        }
        let scales: Vec<f64> = (0..spec.dim)
            .map(|j| {
                let t = if spec.dim == 1 {
                    0.0
                } else {
                    j as f64 / (spec.dim - 1) as f64
                };
                spec.scale_lo * (spec.scale_hi / spec.scale_lo).powf(t)
            })
            .collect();
        let means = (0..spec.classes)
            .map(|_| {
                scales
                    .iter()
                    .map(|s| {
                        let z: f64 = StandardNormal.sample(rng);
                        spec.separation * s * z
                    })
                    .collect()
            })
            .collect();
        Ok(Self { means, scales })
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    /// `count` samples with labels drawn uniformly from `labels`.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, labels: &[usize], rng: &mut R) -> Dataset {
        let mut out = Dataset::empty(self.dim(), self.classes());
        let mut x = vec![0.0; self.dim()];
        for _ in 0..count {
            let y = labels[rng.random_range(0..labels.len())];
            for (j, v) in x.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                *v = self.means[y][j] + self.scales[j] * z;
            }
            out.push(&x, y);
        }
        out
    }
}

/// How labels are spread over clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    Iid,
    /// Each client sees only this many distinct labels.
    NonIid {
        labels_per_client: usize,
    },
}

/// Label sets per client: all labels for IID, otherwise consecutive blocks
/// starting at a random offset.
pub fn client_labels<R: Rng + ?Sized>(
    clients: usize,
    classes: usize,
    dist: Distribution,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    match dist {
        Distribution::Iid => Ok(vec![(0..classes).collect(); clients]),
        Distribution::NonIid {
            labels_per_client: k,
        } => {
            if k == 0 || k > classes {
                return Err(invalid("labels per client must lie in [1, classes]"));
            }
            Ok((0..clients)
                .map(|_| {
                    let start = rng.random_range(0..classes);
                    (0..k).map(|i| (start + i) % classes).collect()
                })
                .collect())
        }
    }
}

/// Splits an existing dataset across clients: IID by shuffling, non-IID by
/// giving each client samples from its label set only.
pub fn partition<R: Rng + ?Sized>(
    data: &Dataset,
    sizes: &[usize],
    labels: &[Vec<usize>],
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if sizes.len() != labels.len() {
        return Err(invalid("one label set per client required"));
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); data.classes()];
    for i in 0..data.len() {
        pools[data.label(i)].push(i);
    }
    for p in &mut pools {
        p.shuffle(rng);
    }
    let mut cells = Vec::with_capacity(sizes.len());
    for (&size, allowed) in sizes.iter().zip(labels) {
        let mut cell = Vec::with_capacity(size);
        let mut k = 0;
        while cell.len() < size {
            let avail: Vec<usize> = allowed
                .iter()
                .copied()
                .filter(|&c| !pools[c].is_empty())
                .collect();
            if avail.is_empty() {
                return Err(invalid("not enough samples to fill the partition"));
            }
            let c = avail[k % avail.len()];
            cell.push(pools[c].pop().expect("nonempty pool"));
            k += 1;
        }
        cell.shuffle(rng);
        cells.push(cell);
    }
    Ok(cells)
}
