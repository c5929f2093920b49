//! Browser bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string. The same computations are available
//! natively as `*_report` functions for testing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use shapekrrc::classifiers::{extrinsic_mean, Classifier};
use shapekrrc::data::{generate_synthetic, leaf_outline, perturbed_templates};
use shapekrrc::evaluation::{compute_metrics, fit_method, Method};
use shapekrrc::kernels::{gram, min_eigenvalue, KernelFamily, KernelSpec};
use shapekrrc::sampling::random_preshape;
use shapekrrc::shape::{extrinsic_dist_sq, Preshape};
use shapekrrc::{Result, ShapeError};

type Outline = Vec<[f64; 2]>;

fn outline(u: &Preshape) -> Outline {
    u.coords().iter().map(|z| [z.re, z.im]).collect()
}

/// Rotates `u` to its best fit onto `target`.
fn align(u: &Preshape, target: &Preshape) -> Preshape {
    u.rotated(u.inner(target).arg())
}

#[derive(Debug, Serialize)]
pub struct SpectrumReport {
    pub family: KernelFamily,
    pub sigma_sq: Vec<f64>,
    pub min_eigenvalue: Vec<f64>,
}

/// Smallest Gram eigenvalue over a log grid of bandwidths, for `shapes`
/// random configurations of `landmarks` points.
pub fn spectrum_report(family: &str, landmarks: usize, shapes: usize, seed: u64) -> Result<SpectrumReport> {
    let family: KernelFamily = family.parse()?;
    if landmarks < 3 || shapes < 2 {
        return Err(ShapeError::InvalidInput("need at least 3 landmarks and 2 shapes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set: Vec<Preshape> = (0..shapes).map(|_| random_preshape(landmarks, &mut rng)).collect();
    let sigma_sq: Vec<f64> = (0..=16).map(|i| 10f64.powf(-2.0 + 0.25 * i as f64)).collect();
    let min_eigenvalue = sigma_sq
        .iter()
        .map(|&s| Ok(min_eigenvalue(&gram(&KernelSpec::new(family, s)?, &set)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SpectrumReport {
        family,
        sigma_sq,
        min_eigenvalue,
    })
}

#[derive(Debug, Serialize)]
pub struct MethodScore {
    pub method: Method,
    pub accuracy: f64,
    pub f1: f64,
    pub indefinite: bool,
}

#[derive(Debug, Serialize)]
pub struct ClassifyReport {
    pub templates: Vec<Outline>,
    pub train_size: usize,
    pub test_size: usize,
    pub scores: Vec<MethodScore>,
}

/// Synthetic leaf classes; the first `train_per_class` draws of each class
/// train every method and the rest are scored.
#[allow(clippy::too_many_arguments)]
pub fn classify_report(
    classes: usize,
    per_class: usize,
    train_per_class: usize,
    spread: f64,
    noise_sd: f64,
    lambda: f64,
    sigma_sq: f64,
    seed: u64,
) -> Result<ClassifyReport> {
    if classes < 2 || train_per_class == 0 || train_per_class >= per_class {
        return Err(ShapeError::InvalidInput(
            "need 2+ classes and 0 < training size < samples per class".into(),
        ));
    }
    let templates = perturbed_templates(&leaf_outline(15)?, classes, spread, seed)?;
    let data = generate_synthetic(&templates, per_class, noise_sd, seed.wrapping_add(1))?.preshapes()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, s) in data.into_iter().enumerate() {
        if i % per_class < train_per_class {
            train.push(s);
        } else {
            test.push(s);
        }
    }
    let class_labels: Vec<u32> = (0..classes as u32).collect();
    let shapes: Vec<Preshape> = test.iter().map(|s| s.shape.clone()).collect();
    let truth: Vec<u32> = test.iter().map(|s| s.label).collect();

    let mut scores = Vec::new();
    for method in Method::ALL {
        let sigma = method.kernel_family().map(|_| sigma_sq);
        let model = fit_method(method, &train, &class_labels, lambda, sigma, true)?;
        let report = compute_metrics(&model.predict_labels(&shapes), &truth, &class_labels)?;
        scores.push(MethodScore {
            method,
            accuracy: report.avg_accuracy,
            f1: report.f1,
            indefinite: model.used_indefinite_fallback(),
        });
    }
    let reference = templates[0].clone();
    Ok(ClassifyReport {
        templates: templates.iter().map(|t| outline(&align(t, &reference))).collect(),
        train_size: train.len(),
        test_size: test.len(),
        scores,
    })
}

#[derive(Debug, Serialize)]
pub struct MeanReport {
    pub template: Outline,
    pub samples: Vec<Outline>,
    pub mean: Outline,
    /// Squared extrinsic distance from the mean to the template.
    pub mean_to_template: f64,
}

/// Noisy, randomly rotated copies of a leaf outline and their extrinsic
/// mean, all aligned to the mean for display.
pub fn mean_report(count: usize, noise_sd: f64, seed: u64) -> Result<MeanReport> {
    let template = leaf_outline(15)?;
    let mut data = generate_synthetic(std::slice::from_ref(&template), count, noise_sd, seed)?.preshapes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for s in &mut data {
        s.shape = s.shape.rotated(rng.random_range(0.0..std::f64::consts::TAU));
    }
    let shapes: Vec<Preshape> = data.into_iter().map(|s| s.shape).collect();
    let mean = extrinsic_mean(&shapes)?;
    Ok(MeanReport {
        template: outline(&align(&template, &mean)),
        samples: shapes.iter().map(|s| outline(&align(s, &mean))).collect(),
        mean_to_template: extrinsic_dist_sq(&mean, &template),
        mean: outline(&mean),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn kernel_spectrum(family: &str, landmarks: usize, shapes: usize, seed: u32) -> std::result::Result<String, JsError> {
    to_js(spectrum_report(family, landmarks, shapes, seed.into()))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn classify_demo(
    classes: usize,
    per_class: usize,
    train_per_class: usize,
    spread: f64,
    noise_sd: f64,
    lambda: f64,
    sigma_sq: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(classify_report(
        classes,
        per_class,
        train_per_class,
        spread,
        noise_sd,
        lambda,
        sigma_sq,
        seed.into(),
    ))
}

#[wasm_bindgen]
pub fn mean_demo(count: usize, noise_sd: f64, seed: u32) -> std::result::Result<String, JsError> {
    to_js(mean_report(count, noise_sd, seed.into()))
}
