//! Synthetic desk-scale translation tasks with known ground-truth bijections.
//!
//! Every task generates two unpaired sample sets with disjoint supports: the
//! Y set is drawn from an independent random stream and pushed through the
//! ground-truth map, so marginals correspond but no pairing exists between
//! the stored samples. The truth oracle is reachable only through
//! [`DomainTask::truth`], which the training path never calls; it exists for
//! evaluation alone.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::subseed;

const X_STREAM: u64 = 0x5a;
const Y_STREAM: u64 = 0xa5;

/// Ground-truth bijection between the domains, for evaluation only.
#[derive(Clone, Debug)]
pub enum TruthOracle {
    /// (u, v) -> (-u, v); a linear involution.
    Reflection,
    /// p -> A p + b with exact inverse; not an involution on its own.
    Affine {
        a: [[f64; 2]; 2],
        a_inv: [[f64; 2]; 2],
        b: [f64; 2],
    },
    /// Intensity inversion x -> -x in tanh range; an involution.
    Negation,
}

impl TruthOracle {
    /// Target in Y for a sample of X.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        match self {
            TruthOracle::Reflection => {
                let d = x.data();
                Tensor::from_parts(x.shape().to_vec(), vec![-d[0], d[1]], false)
            }
            TruthOracle::Affine { a, b, .. } => {
                let d = x.data();
                let out = vec![
                    a[0][0] * d[0] + a[0][1] * d[1] + b[0],
                    a[1][0] * d[0] + a[1][1] * d[1] + b[1],
                ];
                Tensor::from_parts(x.shape().to_vec(), out, false)
            }
            TruthOracle::Negation => {
                let out = x.data().iter().map(|v| -v).collect();
                Tensor::from_parts(x.shape().to_vec(), out, false)
            }
        }
    }

    /// Target in X for a sample of Y.
    pub fn inverse(&self, y: &Tensor) -> Tensor {
        match self {
            TruthOracle::Reflection | TruthOracle::Negation => self.forward(y),
            TruthOracle::Affine { a_inv, b, .. } => {
                let d = y.data();
                let (u, v) = (d[0] - b[0], d[1] - b[1]);
                let out = vec![
                    a_inv[0][0] * u + a_inv[0][1] * v,
                    a_inv[1][0] * u + a_inv[1][1] * v,
                ];
                Tensor::from_parts(y.shape().to_vec(), out, false)
            }
        }
    }
}

#[derive(Clone, Debug)]
enum TaskKind {
    Reflection,
    Affine {
        a: [[f64; 2]; 2],
        b: [f64; 2],
    },
    ImageInversion {
        h: usize,
        w: usize,
    },
    /// User-provided data; sampling ignores seed/count and returns the
    /// loaded sets as-is.
    Files {
        xs: Vec<Tensor>,
        ys: Vec<Tensor>,
    },
}

/// A pair of unpaired sample sources plus an evaluation-only pairing oracle.
#[derive(Clone, Debug)]
pub struct DomainTask {
    name: String,
    kind: TaskKind,
    n: usize,
    seed: u64,
    shape: Vec<usize>,
    truth: Option<TruthOracle>,
}

/// Gaussian mixture component with per-coordinate 3-sigma clipping, so the
/// support bound is exact.
#[derive(Clone, Copy)]
struct MixComponent {
    center: [f64; 2],
    sigma: f64,
    weight: f64,
}

fn sample_mixture(rng: &mut ChaCha8Rng, comps: &[MixComponent]) -> [f64; 2] {
    let toss: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    let mut chosen = comps[comps.len() - 1];
    for c in comps {
        acc += c.weight;
        if toss < acc {
            chosen = *c;
            break;
        }
    }
    let mut draw = |center: f64| {
        let z: f64 = clipped_normal(rng, 3.0);
        center + chosen.sigma * z
    };
    [draw(chosen.center[0]), draw(chosen.center[1])]
}

/// Standard normal via Box-Muller, clamped to [-limit, limit].
fn clipped_normal(rng: &mut ChaCha8Rng, limit: f64) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    z.clamp(-limit, limit)
}

// Component geometry keeps every coordinate inside tanh range and the first
// coordinate strictly negative; weights and widths differ so distribution
// matching pins each component to its true image.
const REFLECTION_MIX: [MixComponent; 3] = [
    MixComponent {
        center: [-0.55, -0.30],
        sigma: 0.05,
        weight: 0.5,
    },
    MixComponent {
        center: [-0.70, 0.15],
        sigma: 0.09,
        weight: 0.3,
    },
    MixComponent {
        center: [-0.45, 0.50],
        sigma: 0.11,
        weight: 0.2,
    },
];

const AFFINE_MIX: [MixComponent; 3] = [
    MixComponent {
        center: [-0.50, -0.10],
        sigma: 0.05,
        weight: 0.5,
    },
    MixComponent {
        center: [-0.62, 0.08],
        sigma: 0.07,
        weight: 0.3,
    },
    MixComponent {
        center: [-0.38, 0.16],
        sigma: 0.08,
        weight: 0.2,
    },
];

/// Minimum |first coordinate| every generated vector sample must respect;
/// X and Y supports are separated by twice this margin.
pub const SUPPORT_MARGIN: f64 = 0.05;

/// 2-D points in the left half-plane mapped to the right half-plane by the
/// reflection (u, v) -> (-u, v).
pub fn make_reflection_task(seed: u64, n: usize) -> Result<DomainTask> {
    if n < 100 {
        return Err(Error::InvalidArg {
            op: "make_reflection_task",
            msg: format!("need n >= 100 samples, got {n}"),
        });
    }
    let task = DomainTask {
        name: "reflection".into(),
        kind: TaskKind::Reflection,
        n,
        seed,
        shape: vec![2],
        truth: Some(TruthOracle::Reflection),
    };
    task.validate_generated()?;
    Ok(task)
}

/// 2-D points mapped by p -> A p + b with A an invertible rotation+scale
/// that is not an involution; supports are separated by the translation.
pub fn make_affine_task(seed: u64, n: usize) -> Result<DomainTask> {
    if n < 100 {
        return Err(Error::InvalidArg {
            op: "make_affine_task",
            msg: format!("need n >= 100 samples, got {n}"),
        });
    }
    let theta = 35f64.to_radians();
    let s = 0.8;
    let a = [
        [s * theta.cos(), -s * theta.sin()],
        [s * theta.sin(), s * theta.cos()],
    ];
    // Place the image of the X center at (0.5, 0).
    let b = [0.5 + 0.5 * a[0][0], 0.0 + 0.5 * a[1][0]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < 1e-6 {
        return Err(Error::InvalidArg {
            op: "make_affine_task",
            msg: format!("map is near-singular (det {det})"),
        });
    }
    let a_inv = [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ];
    let task = DomainTask {
        name: "affine".into(),
        kind: TaskKind::Affine { a, b },
        n,
        seed,
        shape: vec![2],
        truth: Some(TruthOracle::Affine { a, a_inv, b }),
    };
    task.validate_generated()?;
    Ok(task)
}

/// Bright smooth-blob images paired with their intensity inversions.
pub fn make_image_inversion_task(seed: u64, n: usize, h: usize, w: usize) -> Result<DomainTask> {
    if h > 32 || w > 32 || h < 4 || w < 4 {
        return Err(Error::InvalidArg {
            op: "make_image_inversion_task",
            msg: format!("image size must be within 4..=32, got {h}x{w}"),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArg {
            op: "make_image_inversion_task",
            msg: "need at least one sample".into(),
        });
    }
    let task = DomainTask {
        name: "image_inversion".into(),
        kind: TaskKind::ImageInversion { h, w },
        n,
        seed,
        shape: vec![1, h, w],
        truth: Some(TruthOracle::Negation),
    };
    task.validate_generated()?;
    Ok(task)
}

/// Wraps externally loaded sample sets; no truth oracle.
pub fn make_files_task(name: String, xs: Vec<Tensor>, ys: Vec<Tensor>) -> Result<DomainTask> {
    let shape = match (xs.first(), ys.first()) {
        (Some(x), Some(_)) => x.shape().to_vec(),
        _ => {
            return Err(Error::InvalidArg {
                op: "make_files_task",
                msg: "both domains need at least one sample".into(),
            })
        }
    };
    for t in xs.iter().chain(ys.iter()) {
        if t.shape() != shape.as_slice() {
            return Err(Error::DimMismatch {
                op: "make_files_task",
                lhs: shape,
                rhs: t.shape().to_vec(),
            });
        }
    }
    let n = xs.len().max(ys.len());
    Ok(DomainTask {
        name,
        kind: TaskKind::Files { xs, ys },
        n,
        seed: 0,
        shape,
        truth: None,
    })
}

impl DomainTask {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Shape of one sample from either domain.
    pub fn sample_shape(&self) -> &[usize] {
        &self.shape
    }

    /// Stored training-set size (iterations per epoch).
    pub fn epoch_size(&self) -> usize {
        self.n
    }

    pub fn data_seed(&self) -> u64 {
        self.seed
    }

    /// Evaluation-only pairing oracle, absent for file-backed tasks.
    pub fn truth(&self) -> Option<&TruthOracle> {
        self.truth.as_ref()
    }

    /// Draws `n` X-domain samples from the stream keyed by `seed`.
    pub fn sample_x(&self, seed: u64, n: usize) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, X_STREAM));
        match &self.kind {
            TaskKind::Reflection => (0..n)
                .map(|_| {
                    let p = sample_mixture(&mut rng, &REFLECTION_MIX);
                    Tensor::from_parts(vec![2], p.to_vec(), false)
                })
                .collect(),
            TaskKind::Affine { .. } => (0..n)
                .map(|_| {
                    let p = sample_mixture(&mut rng, &AFFINE_MIX);
                    Tensor::from_parts(vec![2], p.to_vec(), false)
                })
                .collect(),
            TaskKind::ImageInversion { h, w } => {
                (0..n).map(|_| blob_image(&mut rng, *h, *w)).collect()
            }
            TaskKind::Files { xs, .. } => xs.clone(),
        }
    }

    /// Draws `n` Y-domain samples: an independent stream pushed through the
    /// ground-truth map, so no element pairs with any X draw.
    pub fn sample_y(&self, seed: u64, n: usize) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, Y_STREAM));
        match &self.kind {
            TaskKind::Reflection => {
                let f = TruthOracle::Reflection;
                (0..n)
                    .map(|_| {
                        let p = sample_mixture(&mut rng, &REFLECTION_MIX);
                        f.forward(&Tensor::from_parts(vec![2], p.to_vec(), false))
                    })
                    .collect()
            }
            TaskKind::Affine { .. } => {
                let f = self.truth.clone().expect("affine task has oracle");
                (0..n)
                    .map(|_| {
                        let p = sample_mixture(&mut rng, &AFFINE_MIX);
                        f.forward(&Tensor::from_parts(vec![2], p.to_vec(), false))
                    })
                    .collect()
            }
            TaskKind::ImageInversion { h, w } => (0..n)
                .map(|_| {
                    let img = blob_image(&mut rng, *h, *w);
                    let neg = img.data().iter().map(|v| -v).collect();
                    Tensor::from_parts(img.shape().to_vec(), neg, false)
                })
                .collect(),
            TaskKind::Files { ys, .. } => ys.clone(),
        }
    }

    /// The seeded training sets.
    pub fn training_sets(&self) -> (Vec<Tensor>, Vec<Tensor>) {
        (self.sample_x(self.seed, self.n), self.sample_y(self.seed, self.n))
    }

    /// Generation-time checks: support separation margins and truth
    /// round-trips on the actual training sets.
    fn validate_generated(&self) -> Result<()> {
        let (xs, ys) = self.training_sets();
        let margin_err = |side: &str, value: f64| {
            Err(Error::InvalidArg {
                op: "domain_task",
                msg: format!(
                    "{side} support violates the separation margin {SUPPORT_MARGIN} (saw {value})"
                ),
            })
        };
        match &self.kind {
            TaskKind::Reflection | TaskKind::Affine { .. } => {
                for x in &xs {
                    if x.data()[0] > -SUPPORT_MARGIN {
                        return margin_err("X", x.data()[0]);
                    }
                    if x.data().iter().any(|v| v.abs() >= 1.0) {
                        return margin_err("X", x.data()[0]);
                    }
                }
                for y in &ys {
                    if y.data()[0] < SUPPORT_MARGIN {
                        return margin_err("Y", y.data()[0]);
                    }
                    if y.data().iter().any(|v| v.abs() >= 1.0) {
                        return margin_err("Y", y.data()[0]);
                    }
                }
            }
            TaskKind::ImageInversion { .. } => {
                for x in &xs {
                    let mean = x.data().iter().sum::<f64>() / x.numel() as f64;
                    if mean <= 0.2 {
                        return margin_err("X", mean);
                    }
                }
                for y in &ys {
                    let mean = y.data().iter().sum::<f64>() / y.numel() as f64;
                    if mean >= -0.2 {
                        return margin_err("Y", mean);
                    }
                }
            }
            TaskKind::Files { .. } => {}
        }
        if let Some(truth) = &self.truth {
            for x in xs.iter().take(64) {
                let back = truth.inverse(&truth.forward(x));
                for (a, b) in back.data().iter().zip(x.data()) {
                    if (a - b).abs() > 1e-12 {
                        return Err(Error::InvalidArg {
                            op: "domain_task",
                            msg: format!("truth oracle round-trip error {}", (a - b).abs()),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Smooth bright image: positive base level plus 2-4 positive Gaussian
/// bumps, clamped inside tanh range.
fn blob_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor {
    let base: f64 = rng.random_range(0.25..0.45);
    let bumps: usize = rng.random_range(2..=4);
    let mut img = vec![base; h * w];
    for _ in 0..bumps {
        let amp: f64 = rng.random_range(0.15..0.5);
        let sigma: f64 = rng.random_range(1.5..3.5);
        let ci: f64 = rng.random_range(0.0..h as f64);
        let cj: f64 = rng.random_range(0.0..w as f64);
        let inv = 1.0 / (2.0 * sigma * sigma);
        for i in 0..h {
            for j in 0..w {
                let d2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                img[i * w + j] += amp * (-d2 * inv).exp();
            }
        }
    }
    for v in &mut img {
        *v = v.clamp(-0.95, 0.95);
    }
    Tensor::from_parts(vec![1, h, w], img, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_is_involution_and_supports_disjoint() {
        let task = make_reflection_task(7, 200).unwrap();
        let truth = task.truth().unwrap().clone();
        let (xs, ys) = task.training_sets();
        assert_eq!(xs.len(), 200);
        for x in &xs {
            let twice = truth.forward(&truth.forward(x));
            for (a, b) in twice.data().iter().zip(x.data()) {
                assert!((a - b).abs() < 1e-15);
            }
            assert!(x.data()[0] < 0.0);
        }
        for y in &ys {
            assert!(y.data()[0] > 0.0);
        }
    }

    #[test]
    fn affine_inverse_and_piecewise_involution() {
        let task = make_affine_task(3, 150).unwrap();
        let truth = task.truth().unwrap().clone();
        let (xs, ys) = task.training_sets();
        for x in &xs {
            let back = truth.inverse(&truth.forward(x));
            for (a, b) in back.data().iter().zip(x.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // The map (f on X-support, f^-1 on Y-support) applied twice is the
        // identity on both supports.
        for x in xs.iter().take(20) {
            let y = truth.forward(x); // lands in Y support
            let back = truth.inverse(&y);
            for (a, b) in back.data().iter().zip(x.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        for y in ys.iter().take(20) {
            let x = truth.inverse(y);
            let fwd = truth.forward(&x);
            for (a, b) in fwd.data().iter().zip(y.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // Not an involution of the plane: f(f(p)) != p.
        let p = &xs[0];
        let ffp = truth.forward(&truth.forward(p));
        let drift: f64 = ffp
            .data()
            .iter()
            .zip(p.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(drift > 0.1, "affine map must not be an involution");
    }

    #[test]
    fn affine_supports_respect_margin() {
        let task = make_affine_task(11, 400).unwrap();
        let (xs, ys) = task.training_sets();
        for x in &xs {
            assert!(x.data()[0] <= -SUPPORT_MARGIN);
            assert!(x.data().iter().all(|v| v.abs() < 1.0));
        }
        for y in &ys {
            assert!(y.data()[0] >= SUPPORT_MARGIN);
            assert!(y.data().iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn image_task_brightness_bias_and_shapes() {
        let task = make_image_inversion_task(5, 120, 16, 16).unwrap();
        let truth = task.truth().unwrap().clone();
        let (xs, ys) = task.training_sets();
        let mean = |t: &Tensor| t.data().iter().sum::<f64>() / t.numel() as f64;
        let x_mean: f64 = xs.iter().map(mean).sum::<f64>() / xs.len() as f64;
        let y_mean: f64 = ys.iter().map(mean).sum::<f64>() / ys.len() as f64;
        assert!(x_mean > 0.2, "X mean pixel {x_mean}");
        assert!(y_mean < -0.2, "Y mean pixel {y_mean}");
        for x in xs.iter().take(5) {
            assert_eq!(x.shape(), &[1, 16, 16]);
            let twice = truth.forward(&truth.forward(x));
            assert_eq!(twice.data(), x.data());
        }
    }

    #[test]
    fn image_task_rejects_oversize() {
        assert!(make_image_inversion_task(0, 10, 64, 16).is_err());
    }

    #[test]
    fn vector_tasks_require_min_samples() {
        assert!(make_reflection_task(0, 99).is_err());
        assert!(make_affine_task(0, 10).is_err());
    }

    #[test]
    fn generation_is_seeded_and_reproducible() {
        let a = make_reflection_task(42, 100).unwrap();
        let b = make_reflection_task(42, 100).unwrap();
        let (xa, ya) = a.training_sets();
        let (xb, yb) = b.training_sets();
        for (p, q) in xa.iter().zip(&xb).chain(ya.iter().zip(&yb)) {
            assert_eq!(
                p.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                q.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
        // Different seeds diverge.
        let c = make_reflection_task(43, 100).unwrap();
        let (xc, _) = c.training_sets();
        assert_ne!(xa[0].data(), xc[0].data());
        // X and Y streams are independent even under one seed.
        assert_ne!(xa[0].data()[1], ya[0].data()[1]);
    }
}
