//! Quantitative evaluation: image-quality scores (PSNR, SSIM) plus the
//! one-to-one diagnostics — self-inverse residual, injectivity score, and
//! bias gap against the ground-truth target.
//!
//! Everything here is a pure function over frozen parameters. Maps are
//! passed as closures so ground-truth oracles and trained models share the
//! same code paths.

use crate::autodiff::{ops, Tape, Tensor};
use crate::data::DomainTask;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::subseed;

/// Dynamic range of tanh-bounded data.
pub const PSNR_RANGE: f64 = 2.0;
/// PSNR reported for zero MSE (keeps CSV output finite).
pub const PSNR_CAP: f64 = 99.0;
/// Local window size at desk scale (full-scale SSIM conventionally uses 11).
pub const SSIM_WINDOW: usize = 7;
const SSIM_SIGMA: f64 = 1.5;

/// Translation direction relative to the task's (X, Y) domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    X2Y,
    Y2X,
}

/// Wraps a model into a plain evaluation map on a private scratch tape.
pub fn model_map(model: &Model) -> impl Fn(&Tensor) -> Result<Tensor> + '_ {
    move |x| {
        let mut tape = Tape::new();
        model.forward(&mut tape, x)
    }
}

/// Peak signal-to-noise ratio in dB: 10*log10(range^2 / MSE), capped at
/// [`PSNR_CAP`] (zero MSE included).
pub fn psnr(a: &Tensor, b: &Tensor, data_range: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimMismatch {
            op: "psnr",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    if data_range <= 0.0 {
        return Err(Error::InvalidArg {
            op: "psnr",
            msg: format!("data_range must be positive, got {data_range}"),
        });
    }
    let n = a.numel() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (data_range * data_range / mse).log10()).min(PSNR_CAP))
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut w = vec![0.0; size * size];
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut total = 0.0;
    for i in 0..size {
        for j in 0..size {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            let v = (-d2 * inv).exp();
            w[i * size + j] = v;
            total += v;
        }
    }
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Mean local structural similarity over valid Gaussian windows
/// (sigma 1.5), constants C1 = (0.01*range)^2 and C2 = (0.03*range)^2.
/// Accepts c×h×w tensors; channels are averaged.
pub fn ssim(a: &Tensor, b: &Tensor, data_range: f64, window: usize) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimMismatch {
            op: "ssim",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let shape = a.shape();
    if shape.len() != 3 {
        return Err(Error::InvalidArg {
            op: "ssim",
            msg: format!("need c*h*w images, got shape {shape:?}"),
        });
    }
    let (channels, h, w) = (shape[0], shape[1], shape[2]);
    if window == 0 || h < window || w < window {
        return Err(Error::InvalidArg {
            op: "ssim",
            msg: format!("image {h}x{w} smaller than window {window}"),
        });
    }
    let c1 = (0.01 * data_range) * (0.01 * data_range);
    let c2 = (0.03 * data_range) * (0.03 * data_range);
    let kernel = gaussian_window(window, SSIM_SIGMA);

    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..channels {
        let pa = &a.data()[c * h * w..(c + 1) * h * w];
        let pb = &b.data()[c * h * w..(c + 1) * h * w];
        for i in 0..=(h - window) {
            for j in 0..=(w - window) {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for r in 0..window {
                    for s in 0..window {
                        let k = kernel[r * window + s];
                        let va = pa[(i + r) * w + j + s];
                        let vb = pb[(i + r) * w + j + s];
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                }
                let var_a = saa - ma * ma;
                let var_b = sbb - mb * mb;
                let cov = sab - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Mean L1 distance between map_back(map_fwd(z)) and z over the samples.
/// With a single shared generator this is the empirical distance of the
/// generator from self-inverseness.
pub fn composite_residual<F, G>(map_fwd: F, map_back: G, samples: &[Tensor]) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
    G: Fn(&Tensor) -> Result<Tensor>,
{
    if samples.is_empty() {
        return Err(Error::InvalidArg {
            op: "composite_residual",
            msg: "need at least one sample".into(),
        });
    }
    let mut total = 0.0;
    for z in samples {
        let round = map_back(&map_fwd(z)?)?;
        let mut tape = Tape::new();
        total += ops::l1_loss(&mut tape, &round, z)?.item();
    }
    Ok(total / samples.len() as f64)
}

/// Self-inverse residual of one shared generator: mean ||G(G(z)) - z||_1.
pub fn self_inverse_residual(generator: &Model, samples: &[Tensor]) -> Result<f64> {
    composite_residual(model_map(generator), model_map(generator), samples)
}

fn euclidean(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Fraction of sample pairs that are farther apart than `eps_in` at the
/// input but closer than `eps_out` at the output; 0 is perfectly injective
/// at the chosen scales.
pub fn injectivity_score<F>(
    map: F,
    samples: &[Tensor],
    eps_in: f64,
    eps_out: f64,
) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if samples.len() < 2 {
        return Err(Error::InvalidArg {
            op: "injectivity_score",
            msg: format!("need at least 2 samples, got {}", samples.len()),
        });
    }
    if !(eps_in > eps_out && eps_out > 0.0) {
        return Err(Error::InvalidArg {
            op: "injectivity_score",
            msg: format!("need eps_in > eps_out > 0, got {eps_in} and {eps_out}"),
        });
    }
    let outputs: Vec<Tensor> = samples.iter().map(&map).collect::<Result<_>>()?;
    let mut violations = 0usize;
    let mut pairs = 0usize;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            pairs += 1;
            if euclidean(&samples[i], &samples[j]) > eps_in
                && euclidean(&outputs[i], &outputs[j]) < eps_out
            {
                violations += 1;
            }
        }
    }
    Ok(violations as f64 / pairs as f64)
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn median_pairwise_distance(samples: &[Tensor]) -> f64 {
    let mut dists = Vec::with_capacity(samples.len() * (samples.len() - 1) / 2);
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            dists.push(euclidean(&samples[i], &samples[j]));
        }
    }
    median(dists)
}

/// Mean distance between the map's output and the ground-truth target:
/// L2 for vector samples, mean L1 for images. Evaluation only; errors when
/// the task carries no oracle.
pub fn bias_gap<F>(
    map: F,
    task: &DomainTask,
    direction: Direction,
    samples: &[Tensor],
) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let truth = task.truth().ok_or_else(|| {
        Error::MetricUnavailable(format!(
            "bias_gap needs a ground-truth oracle; task `{}` has none",
            task.name()
        ))
    })?;
    if samples.is_empty() {
        return Err(Error::InvalidArg {
            op: "bias_gap",
            msg: "need at least one sample".into(),
        });
    }
    let image_like = task.sample_shape().len() == 3;
    let mut total = 0.0;
    for z in samples {
        let pred = map(z)?;
        let target = match direction {
            Direction::X2Y => truth.forward(z),
            Direction::Y2X => truth.inverse(z),
        };
        total += if image_like {
            let mut tape = Tape::new();
            ops::l1_loss(&mut tape, &pred, &target)?.item()
        } else {
            euclidean(&pred, &target)
        };
    }
    Ok(total / samples.len() as f64)
}

/// The two translation maps under evaluation. For the shared-generator
/// system both directions are the same model; for the baseline they are the
/// two independent generators.
pub struct EvalModels<'a> {
    pub x2y: &'a Model,
    pub y2x: &'a Model,
    pub shared_generator: bool,
}

/// Per-evaluation record. Oracle-dependent fields are `None` when the task
/// has no ground truth; SSIM additionally requires image-shaped samples.
#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub epoch: u64,
    pub psnr_x2y: Option<f64>,
    pub psnr_y2x: Option<f64>,
    pub ssim_x2y: Option<f64>,
    pub ssim_y2x: Option<f64>,
    /// Mean round-trip L1 over both domains. For a shared generator this is
    /// the self-inverse residual (kind "gg"); for the baseline it is the
    /// composite residual (kind "fg_gf").
    pub self_inverse_residual: f64,
    pub residual_x: f64,
    pub residual_y: f64,
    pub residual_kind: &'static str,
    pub injectivity_score: Option<f64>,
    pub eps_in: Option<f64>,
    pub eps_out: Option<f64>,
    pub bias_gap_x2y: Option<f64>,
    pub bias_gap_y2x: Option<f64>,
    pub seed: u64,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricsReport {
    pub fn csv_header() -> &'static str {
        "epoch,psnr_x2y,psnr_y2x,ssim_x2y,ssim_y2x,self_inverse_residual,residual_x,residual_y,residual_kind,injectivity_score,eps_in,eps_out,bias_gap_x2y,bias_gap_y2x,config_hash,seed"
    }

    pub fn csv_row(&self, config_hash: &str) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            opt_cell(self.psnr_x2y),
            opt_cell(self.psnr_y2x),
            opt_cell(self.ssim_x2y),
            opt_cell(self.ssim_y2x),
            self.self_inverse_residual,
            self.residual_x,
            self.residual_y,
            self.residual_kind,
            opt_cell(self.injectivity_score),
            opt_cell(self.eps_in),
            opt_cell(self.eps_out),
            opt_cell(self.bias_gap_x2y),
            opt_cell(self.bias_gap_y2x),
            config_hash,
            self.seed,
        )
    }

    fn check_finite(&self) -> Result<()> {
        let cells = [
            Some(self.self_inverse_residual),
            Some(self.residual_x),
            Some(self.residual_y),
            self.psnr_x2y,
            self.psnr_y2x,
            self.ssim_x2y,
            self.ssim_y2x,
            self.injectivity_score,
            self.eps_in,
            self.eps_out,
            self.bias_gap_x2y,
            self.bias_gap_y2x,
        ];
        if cells.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::MetricUnavailable(
                "evaluation produced a non-finite metric".into(),
            ));
        }
        Ok(())
    }
}

/// Runs the full metric suite on held-out sets drawn with `seed` (callers
/// pass one disjoint from the training data seed).
///
/// Injectivity defaults follow the data scale: eps_in is 0.1 times the
/// median pairwise distance among inputs, eps_out 0.01 times the median
/// pairwise distance among targets (ground-truth images of the inputs when
/// an oracle exists, otherwise the map's own outputs). Both are recorded in
/// the report. The score is measured on the X->Y direction.
pub fn evaluate(
    models: &EvalModels<'_>,
    task: &DomainTask,
    n_eval: usize,
    seed: u64,
) -> Result<MetricsReport> {
    if n_eval < 2 {
        return Err(Error::InvalidArg {
            op: "evaluate",
            msg: format!("need n_eval >= 2, got {n_eval}"),
        });
    }
    let xs = task.sample_x(seed, n_eval);
    let ys = task.sample_y(seed, n_eval);
    let x2y = model_map(models.x2y);
    let y2x = model_map(models.y2x);

    let fwd_x: Vec<Tensor> = xs.iter().map(&x2y).collect::<Result<_>>()?;
    let fwd_y: Vec<Tensor> = ys.iter().map(&y2x).collect::<Result<_>>()?;

    let mut residual_x = 0.0;
    for (x, gx) in xs.iter().zip(&fwd_x) {
        let round = y2x(gx)?;
        let mut tape = Tape::new();
        residual_x += ops::l1_loss(&mut tape, &round, x)?.item();
    }
    residual_x /= xs.len() as f64;
    let mut residual_y = 0.0;
    for (y, gy) in ys.iter().zip(&fwd_y) {
        let round = x2y(gy)?;
        let mut tape = Tape::new();
        residual_y += ops::l1_loss(&mut tape, &round, y)?.item();
    }
    residual_y /= ys.len() as f64;

    let image_like = task.sample_shape().len() == 3;
    let spatial_ok = image_like
        && task.sample_shape()[1] >= SSIM_WINDOW
        && task.sample_shape()[2] >= SSIM_WINDOW;

    let truth = task.truth();
    let (mut psnr_x2y, mut psnr_y2x, mut ssim_x2y, mut ssim_y2x) = (None, None, None, None);
    let (mut gap_x2y, mut gap_y2x) = (None, None);
    if truth.is_some() {
        gap_x2y = Some(bias_gap(&x2y, task, Direction::X2Y, &xs)?);
        gap_y2x = Some(bias_gap(&y2x, task, Direction::Y2X, &ys)?);
        let mean_metric = |preds: &[Tensor],
                           targets: &[Tensor],
                           f: &dyn Fn(&Tensor, &Tensor) -> Result<f64>|
         -> Result<f64> {
            let mut total = 0.0;
            for (p, t) in preds.iter().zip(targets) {
                total += f(p, t)?;
            }
            Ok(total / preds.len() as f64)
        };
        let truth = truth.expect("checked");
        let targets_y: Vec<Tensor> = xs.iter().map(|x| truth.forward(x)).collect();
        let targets_x: Vec<Tensor> = ys.iter().map(|y| truth.inverse(y)).collect();
        psnr_x2y = Some(mean_metric(&fwd_x, &targets_y, &|p, t| {
            psnr(p, t, PSNR_RANGE)
        })?);
        psnr_y2x = Some(mean_metric(&fwd_y, &targets_x, &|p, t| {
            psnr(p, t, PSNR_RANGE)
        })?);
        if spatial_ok {
            ssim_x2y = Some(mean_metric(&fwd_x, &targets_y, &|p, t| {
                ssim(p, t, PSNR_RANGE, SSIM_WINDOW)
            })?);
            ssim_y2x = Some(mean_metric(&fwd_y, &targets_x, &|p, t| {
                ssim(p, t, PSNR_RANGE, SSIM_WINDOW)
            })?);
        }
    }

    let eps_in = 0.1 * median_pairwise_distance(&xs);
    let targets_for_eps: Vec<Tensor> = match truth {
        Some(t) => xs.iter().map(|x| t.forward(x)).collect(),
        None => fwd_x.clone(),
    };
    let eps_out = 0.01 * median_pairwise_distance(&targets_for_eps);
    let (injectivity, eps_in, eps_out) = if eps_in > eps_out && eps_out > 0.0 {
        (
            Some(injectivity_score(&x2y, &xs, eps_in, eps_out)?),
            Some(eps_in),
            Some(eps_out),
        )
    } else {
        // Degenerate scale (e.g. collapsed outputs without an oracle).
        (None, None, None)
    };

    let report = MetricsReport {
        epoch: 0,
        psnr_x2y,
        psnr_y2x,
        ssim_x2y,
        ssim_y2x,
        self_inverse_residual: 0.5 * (residual_x + residual_y),
        residual_x,
        residual_y,
        residual_kind: if models.shared_generator { "gg" } else { "fg_gf" },
        injectivity_score: injectivity,
        eps_in,
        eps_out,
        bias_gap_x2y: gap_x2y,
        bias_gap_y2x: gap_y2x,
        seed,
    };
    report.check_finite()?;
    Ok(report)
}

/// Seed for held-out evaluation sets, kept disjoint from the training
/// stream by construction.
pub fn eval_seed(data_seed: u64) -> u64 {
    subseed(data_seed, 0xe7a1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_reflection_task;
    use crate::nn::{build_generator, GeneratorSpec};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor {
        let data = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(vec![1, h, w], data).unwrap()
    }

    #[test]
    fn psnr_cap_arithmetic_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_image(&mut rng, 8, 8);
        assert_eq!(psnr(&a, &a, 2.0).unwrap(), PSNR_CAP);

        // Construct b with exact MSE 0.02 against a.
        let delta = 0.02f64.sqrt();
        let data: Vec<f64> = a.data().iter().map(|v| v + delta).collect();
        let b = Tensor::new(vec![1, 8, 8], data).unwrap();
        let got = psnr(&a, &b, 2.0).unwrap();
        assert!((got - 23.010299956639813).abs() < 1e-9, "psnr {got}");
        assert_eq!(got, psnr(&b, &a, 2.0).unwrap());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = rand_image(&mut rng, 10, 10);
        let noise: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut prev = f64::INFINITY;
        for level in [0.01, 0.05, 0.25] {
            let data: Vec<f64> = base
                .data()
                .iter()
                .zip(&noise)
                .map(|(v, n)| v + level * n)
                .collect();
            let noisy = Tensor::new(vec![1, 10, 10], data).unwrap();
            let p = psnr(&base, &noisy, 2.0).unwrap();
            assert!(p < prev, "psnr must strictly decrease: {p} vs {prev}");
            prev = p;
        }
    }

    #[test]
    fn ssim_identity_bounds_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            let a = rand_image(&mut rng, 12, 9);
            assert_eq!(ssim(&a, &a, 2.0, 7).unwrap(), 1.0);
            let b = rand_image(&mut rng, 12, 9);
            let ab = ssim(&a, &b, 2.0, 7).unwrap();
            let ba = ssim(&b, &a, 2.0, 7).unwrap();
            assert!((-1.0..=1.0).contains(&ab));
            assert!((ab - ba).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_constant_offset_matches_closed_form() {
        let c = -0.25;
        let range = 2.0;
        let a = Tensor::filled(&[1, 9, 9], c);
        let b = Tensor::filled(&[1, 9, 9], c + range);
        let got = ssim(&a, &b, range, 7).unwrap();
        // Constant windows: variances vanish, so each window reduces to
        // (2*mu_a*mu_b + C1) / (mu_a^2 + mu_b^2 + C1).
        let c1 = (0.01 * range) * (0.01 * range);
        let want = (2.0 * c * (c + range) + c1) / (c * c + (c + range) * (c + range) + c1);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!(got < 0.5);
    }

    #[test]
    fn ssim_rejects_undersized_images() {
        let a = Tensor::filled(&[1, 4, 4], 0.0);
        assert!(ssim(&a, &a, 2.0, 7).is_err());
    }

    #[test]
    fn residual_trivial_cases() {
        let identity = |z: &Tensor| Ok(z.clone());
        let zero = |z: &Tensor| Ok(Tensor::zeros(z.shape()));
        let samples = vec![
            Tensor::new(vec![2], vec![0.5, -0.5]).unwrap(),
            Tensor::new(vec![2], vec![0.25, 0.75]).unwrap(),
        ];
        assert_eq!(composite_residual(identity, identity, &samples).unwrap(), 0.0);
        // Zero map: residual equals mean |z|.
        let want = (0.5 + 0.5 + 0.25 + 0.75) / 4.0;
        assert_eq!(composite_residual(&zero, &zero, &samples).unwrap(), want);
    }

    #[test]
    fn injectivity_trivial_and_brute_force() {
        let task = make_reflection_task(5, 200).unwrap();
        let xs = task.sample_x(99, 200);
        let truth = task.truth().unwrap().clone();

        // Exact bijection: no collisions.
        let oracle = |z: &Tensor| Ok(truth.forward(z));
        assert_eq!(injectivity_score(oracle, &xs, 0.05, 0.005).unwrap(), 0.0);

        // Constant map on pairwise-separated inputs: total collapse.
        let constant = |z: &Tensor| Ok(Tensor::zeros(z.shape()));
        let spaced: Vec<Tensor> = (0..20)
            .map(|i| Tensor::new(vec![2], vec![0.1 * i as f64, 0.0]).unwrap())
            .collect();
        assert_eq!(injectivity_score(constant, &spaced, 0.05, 0.005).unwrap(), 1.0);

        // Noisy oracle agrees with an independent pair scan.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let noisy_out: Vec<Tensor> = xs
            .iter()
            .map(|x| {
                let t = truth.forward(x);
                let data: Vec<f64> = t
                    .data()
                    .iter()
                    .map(|v| v + rng.random_range(-1e-4..1e-4))
                    .collect();
                Tensor::new(vec![2], data).unwrap()
            })
            .collect();
        let (eps_in, eps_out) = (0.05, 0.005);
        let idx = std::cell::Cell::new(0usize);
        let lookup = |_: &Tensor| {
            let t = noisy_out[idx.get()].clone();
            idx.set(idx.get() + 1);
            Ok(t)
        };
        let got = injectivity_score(lookup, &xs, eps_in, eps_out).unwrap();
        let mut violations = 0.0;
        let mut pairs = 0.0;
        let dist = |p: &Tensor, q: &Tensor| -> f64 {
            p.data()
                .iter()
                .zip(q.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                pairs += 1.0;
                if dist(&xs[i], &xs[j]) > eps_in && dist(&noisy_out[i], &noisy_out[j]) < eps_out {
                    violations += 1.0;
                }
            }
        }
        assert_eq!(got, violations / pairs);

        // Argument contract.
        assert!(injectivity_score(|z: &Tensor| Ok(z.clone()), &xs[..1], 0.1, 0.01).is_err());
        assert!(injectivity_score(|z: &Tensor| Ok(z.clone()), &xs, 0.01, 0.1).is_err());
    }

    #[test]
    fn injectivity_invariant_under_permutation() {
        let task = make_reflection_task(6, 100).unwrap();
        let mut xs = task.sample_x(4, 100);
        let truth = task.truth().unwrap().clone();
        let score = |samples: &[Tensor]| {
            injectivity_score(|z: &Tensor| Ok(truth.forward(z)), samples, 0.05, 0.005).unwrap()
        };
        let before = score(&xs);
        xs.reverse();
        xs.swap(3, 57);
        assert_eq!(before, score(&xs));
    }

    #[test]
    fn bias_gap_translation_and_oracle() {
        let task = make_reflection_task(8, 150).unwrap();
        let xs = task.sample_x(12, 50);
        let truth = task.truth().unwrap().clone();

        let exact = |z: &Tensor| Ok(truth.forward(z));
        assert!(bias_gap(exact, &task, Direction::X2Y, &xs).unwrap() < 1e-15);

        // Truth plus constant offset c has gap exactly |c|.
        let offset = [0.03, -0.04];
        let shifted = |z: &Tensor| {
            let t = truth.forward(z);
            let data = vec![t.data()[0] + offset[0], t.data()[1] + offset[1]];
            Tensor::new(vec![2], data)
        };
        let want = (offset[0] * offset[0] + offset[1] * offset[1]).sqrt();
        let got = bias_gap(shifted, &task, Direction::X2Y, &xs).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn evaluate_is_deterministic_and_finite() {
        let task = make_reflection_task(31, 120).unwrap();
        let g = build_generator(
            GeneratorSpec::Vector {
                dim: 2,
                hidden: vec![8],
            },
            7,
        )
        .unwrap();
        let models = EvalModels {
            x2y: &g,
            y2x: &g,
            shared_generator: true,
        };
        let a = evaluate(&models, &task, 60, 5).unwrap();
        let b = evaluate(&models, &task, 60, 5).unwrap();
        assert_eq!(a.csv_row("h"), b.csv_row("h"));
        assert_eq!(a.residual_kind, "gg");
        assert!(a.self_inverse_residual.is_finite());
        assert!(a.bias_gap_x2y.is_some());
        // Vector task: PSNR defined, SSIM not.
        assert!(a.psnr_x2y.is_some());
        assert!(a.ssim_x2y.is_none());

        // Untrained generator squashes toward tanh of small values; its
        // bias gap matches a direct recomputation against the targets.
        let xs = task.sample_x(5, 60);
        let truth = task.truth().unwrap();
        let mut direct = 0.0;
        for x in &xs {
            let mut tape = Tape::new();
            let pred = g.forward(&mut tape, x).unwrap();
            let t = truth.forward(x);
            direct += ((pred.data()[0] - t.data()[0]).powi(2)
                + (pred.data()[1] - t.data()[1]).powi(2))
            .sqrt();
        }
        direct /= xs.len() as f64;
        assert!((a.bias_gap_x2y.unwrap() - direct).abs() < 1e-12);
    }
}
