//! Dataset containers, synthetic generators, and evaluation subset selection.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::Tensor;

/// A labelled batch of images with pixels in `[0, 1]`.
///
/// Images are stored per example; all examples share one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// File path or generator spec this batch came from.
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        images: Vec<Tensor>,
        labels: Vec<usize>,
        num_classes: usize,
        provenance: String,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::LengthMismatch(format!(
                "{} images vs {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(first) = images.first() {
            for (i, img) in images.iter().enumerate() {
                if img.shape() != first.shape() {
                    return Err(Error::ShapeMismatch {
                        expected: first.shape().to_vec(),
                        found: img.shape().to_vec(),
                    });
                }
                if img.data().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::InvalidTensor(format!(
                        "image {} has pixels outside [0, 1]",
                        i
                    )));
                }
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                num_classes,
            });
        }
        Ok(Self {
            images,
            labels,
            num_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_shape(&self) -> Option<&[usize]> {
        self.images.first().map(|t| t.shape())
    }

    /// Same pixels viewed under a new per-image shape (e.g. flat 784 to
    /// `[1, 28, 28]`).
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        let images = self
            .images
            .iter()
            .map(|img| img.reshape(shape.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            images,
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            provenance: self.provenance.clone(),
        })
    }

    /// Subset by example indices (cloned).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut images = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::LengthMismatch(format!(
                    "index {} out of range for {} examples",
                    i,
                    self.len()
                )));
            }
            images.push(self.images[i].clone());
            labels.push(self.labels[i]);
        }
        Ok(Self {
            images,
            labels,
            num_classes: self.num_classes,
            provenance: format!("{} (subset of {})", self.provenance, self.len()),
        })
    }
}

/// Isotropic Gaussian blobs around one random center per class, clipped to
/// `[0, 1]`. Centers are drawn uniformly from `[0.25, 0.75]` per coordinate
/// and the noise scale is `0.25 / separation`, so `separation` is roughly the
/// ratio of center spread to noise.
pub fn synth_dataset(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if separation <= 0.0 {
        return Err(Error::InvalidConfig("separation must be positive".into()));
    }
    let sigma = 0.25 / separation;
    let spec = ClusteredSynthSpec {
        num_classes,
        clusters_per_class: 1,
        per_class,
        dim,
        center_spread: 0.25,
        noise_sigma: sigma,
        seed,
    };
    let mut ds = synth_clustered(&spec)?;
    ds.provenance = format!(
        "synth(classes={num_classes},per_class={per_class},dim={dim},sep={separation},seed={seed})"
    );
    Ok(ds)
}

/// Parameters for the clustered generator used to build the local model zoo.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredSynthSpec {
    pub num_classes: usize,
    /// Gaussian modes per class; 1 reduces to plain blobs.
    pub clusters_per_class: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Cluster centers are uniform in `0.5 ± center_spread` per coordinate.
    pub center_spread: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Mixture-of-Gaussians classes: every class owns `clusters_per_class`
/// random centers and examples cycle through them. Multi-modal classes give
/// the trained models genuinely curved decision boundaries, which single
/// blobs do not.
pub fn synth_clustered(spec: &ClusteredSynthSpec) -> Result<Dataset> {
    if spec.num_classes == 0 || spec.dim == 0 || spec.clusters_per_class == 0 {
        return Err(Error::InvalidConfig(
            "num_classes, clusters_per_class and dim must be positive".into(),
        ));
    }
    if !(spec.center_spread > 0.0 && spec.center_spread <= 0.5) {
        return Err(Error::InvalidConfig(
            "center_spread must lie in (0, 0.5]".into(),
        ));
    }
    if spec.noise_sigma < 0.0 {
        return Err(Error::InvalidConfig("noise_sigma must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lo = 0.5 - spec.center_spread;
    let hi = 0.5 + spec.center_spread;
    let mut centers = Vec::with_capacity(spec.num_classes * spec.clusters_per_class);
    for _ in 0..spec.num_classes * spec.clusters_per_class {
        let c: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(lo..hi)).collect();
        centers.push(c);
    }

    let n = spec.num_classes * spec.per_class;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let normal = StandardNormal;
    for class in 0..spec.num_classes {
        for k in 0..spec.per_class {
            let cluster = k % spec.clusters_per_class;
            let center = &centers[class * spec.clusters_per_class + cluster];
            let pixels: Vec<f64> = center
                .iter()
                .map(|&c| {
                    let z: f64 = normal.sample(&mut rng);
                    (c + spec.noise_sigma * z).clamp(0.0, 1.0)
                })
                .collect();
            images.push(Tensor::from_parts(alloc::vec![spec.dim], pixels));
            labels.push(class);
        }
    }
    Dataset::new(
        images,
        labels,
        spec.num_classes,
        format!(
            "synth-clustered(classes={},clusters={},per_class={},dim={},spread={},sigma={},seed={})",
            spec.num_classes,
            spec.clusters_per_class,
            spec.per_class,
            spec.dim,
            spec.center_spread,
            spec.noise_sigma,
            spec.seed
        ),
    )
}

/// Seeded uniformly random subset of `n` examples that every listed model
/// classifies correctly. Errors with the qualifying count when fewer than
/// `n` qualify.
pub fn select_correctly_classified(
    models: &[&Model],
    ds: &Dataset,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("subset size must be >= 1".into()));
    }
    let mut qualifying = Vec::new();
    'example: for (i, (img, &label)) in ds.images.iter().zip(&ds.labels).enumerate() {
        for model in models {
            if model.predict(img)? != label {
                continue 'example;
            }
        }
        qualifying.push(i);
    }
    if qualifying.len() < n {
        return Err(Error::InsufficientExamples {
            requested: n,
            available: qualifying.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    qualifying.shuffle(&mut rng);
    qualifying.truncate(n);
    ds.subset(&qualifying)
}
