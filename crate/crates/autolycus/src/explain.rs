//! LIME-style tabular explainer: perturb around a query point, weight by an
//! exponential proximity kernel, fit a sparse weighted ridge model, report
//! top-k features with the discretization interval each condition covers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSchema, FeatureKind, LabeledSample, Sample};
use crate::error::{Error, Result};

/// Per-feature discretization state. Numeric features carry quartile cut
/// points; categorical features pass through as their category set.
#[derive(Debug, Clone)]
enum FeatureBins {
    Numeric {
        /// Deduplicated ascending bin boundaries strictly inside the feature
        /// bounds. `boundaries.len() + 1` bins; value `v` falls in the bin
        /// indexed by the number of boundaries `< v`.
        boundaries: Vec<f64>,
    },
    Categorical { n: usize },
}

#[derive(Debug, Clone)]
pub struct Discretizer {
    bins: Vec<FeatureBins>,
    quartiles: Vec<Option<[f64; 3]>>,
}

impl Discretizer {
    /// Raw quartile cut points (q1, q2, q3) for a numeric feature.
    pub fn quartiles(&self, feature: usize) -> Option<[f64; 3]> {
        self.quartiles[feature]
    }

    pub fn bin_count(&self, feature: usize) -> usize {
        match &self.bins[feature] {
            FeatureBins::Numeric { boundaries } => boundaries.len() + 1,
            FeatureBins::Categorical { n } => *n,
        }
    }

    pub fn bin_of(&self, feature: usize, value: f64) -> usize {
        match &self.bins[feature] {
            FeatureBins::Numeric { boundaries } => {
                boundaries.iter().filter(|&&b| value > b).count()
            }
            FeatureBins::Categorical { .. } => value as usize,
        }
    }

    /// The (lower, upper) edges of a numeric bin, `None` encoding ±infinity.
    pub fn bin_interval(&self, feature: usize, bin: usize) -> (Option<f64>, Option<f64>) {
        match &self.bins[feature] {
            FeatureBins::Numeric { boundaries } => {
                let lower = if bin == 0 {
                    None
                } else {
                    Some(boundaries[bin - 1])
                };
                let upper = if bin == boundaries.len() {
                    None
                } else {
                    Some(boundaries[bin])
                };
                (lower, upper)
            }
            FeatureBins::Categorical { .. } => (None, None),
        }
    }

    fn draw_in_bin(
        &self,
        feature: usize,
        bin: usize,
        spec: &crate::data::FeatureSpec,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        match &self.bins[feature] {
            FeatureBins::Categorical { .. } => bin as f64,
            FeatureBins::Numeric { boundaries } => {
                let lo = if bin == 0 {
                    spec.lower
                } else {
                    boundaries[bin - 1].max(spec.lower)
                };
                let hi = if bin == boundaries.len() {
                    spec.upper
                } else {
                    boundaries[bin].min(spec.upper)
                };
                match spec.kind {
                    FeatureKind::Integer => {
                        // bins are open at the lower edge
                        let lo_int = if bin == 0 {
                            spec.lower.ceil() as i64
                        } else {
                            lo.floor() as i64 + 1
                        };
                        let hi_int = hi.floor() as i64;
                        if lo_int >= hi_int {
                            hi_int as f64
                        } else {
                            rng.random_range(lo_int..=hi_int) as f64
                        }
                    }
                    _ => {
                        if lo >= hi {
                            hi
                        } else {
                            rng.random_range(lo..=hi)
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub num_perturbations: usize,
    pub kernel_width: f64,
    pub top_k: usize,
    pub ridge_lambda: f64,
    pub rng_seed: u64,
}

impl ExplainerConfig {
    /// Standard defaults: 1000 perturbations, kernel width `0.75 * sqrt(f_n)`,
    /// top `min(f_n, 5)` features, ridge lambda 1.
    pub fn defaults(feature_count: usize, rng_seed: u64) -> Self {
        ExplainerConfig {
            num_perturbations: 1000,
            kernel_width: 0.75 * (feature_count as f64).sqrt(),
            top_k: feature_count.min(5),
            ridge_lambda: 1.0,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_perturbations < self.top_k + 1 {
            return Err(Error::Argument(format!(
                "num_perturbations ({}) must be >= top_k + 1 ({})",
                self.num_perturbations,
                self.top_k + 1
            )));
        }
        if !(self.kernel_width > 0.0) {
            return Err(Error::Argument("kernel_width must be > 0".into()));
        }
        if self.ridge_lambda < 0.0 {
            return Err(Error::Argument("ridge_lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// One explanation condition. `lower`/`upper` are the edges of the
/// discretizer bin containing the query value (`None` = unbounded);
/// categorical features carry the query's category instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationTerm {
    pub feature: usize,
    pub weight: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub category: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub label: usize,
    pub terms: Vec<ExplanationTerm>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

/// Quartile cut points per numeric feature, linearly interpolated on the
/// sorted training values. Integer features snap cuts to half-integers so
/// every bin contains at least one representable value.
pub fn build_discretizer(train: &[LabeledSample], schema: &DatasetSchema) -> Result<Discretizer> {
    if train.is_empty() {
        return Err(Error::Argument("build_discretizer on empty data".into()));
    }
    let mut bins = Vec::with_capacity(schema.feature_count());
    let mut quartiles = Vec::with_capacity(schema.feature_count());
    for (i, spec) in schema.features.iter().enumerate() {
        match spec.kind {
            FeatureKind::Categorical => {
                bins.push(FeatureBins::Categorical {
                    n: spec.categories.len(),
                });
                quartiles.push(None);
            }
            kind => {
                let mut values: Vec<f64> = train.iter().map(|s| s.sample.values[i]).collect();
                values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in training data"));
                let q = [
                    quantile(&values, 0.25),
                    quantile(&values, 0.5),
                    quantile(&values, 0.75),
                ];
                quartiles.push(Some(q));
                let mut boundaries: Vec<f64> = q
                    .iter()
                    .map(|&c| {
                        if kind == FeatureKind::Integer {
                            c.floor() + 0.5
                        } else {
                            c
                        }
                    })
                    .filter(|&c| c > spec.lower && c < spec.upper)
                    .collect();
                boundaries.dedup();
                bins.push(FeatureBins::Numeric { boundaries });
            }
        }
    }
    Ok(Discretizer { bins, quartiles })
}

/// Bernoulli(0.5) bin-agreement sampling around `center`. The first point is
/// the unmodified center with an all-ones agreement vector.
pub fn perturb(
    center: &Sample,
    discretizer: &Discretizer,
    schema: &DatasetSchema,
    n: usize,
    rng_seed: u64,
) -> Vec<(Sample, Vec<u8>)> {
    assert!(n >= 1, "perturb needs n >= 1");
    let f_n = schema.feature_count();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(n);
    out.push((center.clone(), vec![1u8; f_n]));
    for _ in 1..n {
        let mut values = Vec::with_capacity(f_n);
        let mut agreement = Vec::with_capacity(f_n);
        for (j, spec) in schema.features.iter().enumerate() {
            let m = discretizer.bin_count(j);
            let center_bin = discretizer.bin_of(j, center.values[j]);
            if m <= 1 {
                values.push(discretizer.draw_in_bin(j, center_bin, spec, &mut rng));
                agreement.push(1);
                continue;
            }
            if rng.random_bool(0.5) {
                values.push(discretizer.draw_in_bin(j, center_bin, spec, &mut rng));
                agreement.push(1);
            } else {
                let mut other = rng.random_range(0..m - 1);
                if other >= center_bin {
                    other += 1;
                }
                values.push(discretizer.draw_in_bin(j, other, spec, &mut rng));
                agreement.push(0);
            }
        }
        out.push((Sample::new(values), agreement));
    }
    out
}

/// `exp(-d^2 / w^2)` where `d^2` counts disagreeing features.
pub fn kernel_weight(agreement: &[u8], kernel_width: f64) -> f64 {
    let d2 = agreement.iter().filter(|&&a| a == 0).count() as f64;
    (-d2 / (kernel_width * kernel_width)).exp()
}

/// Weighted ridge regression of the class indicator on the binary agreement
/// features, with an unpenalized intercept absorbed by weighted centering.
/// Feature selection is full-fit-then-refit on the `top_k` largest
/// coefficients by magnitude.
pub fn fit_local(
    points: &[(Vec<u8>, f64, f64)],
    top_k: usize,
    ridge_lambda: f64,
) -> Result<Vec<(usize, f64)>> {
    if points.len() < top_k + 1 {
        return Err(Error::Argument(format!(
            "fit_local needs at least top_k + 1 = {} points, got {}",
            top_k + 1,
            points.len()
        )));
    }
    let d = points[0].0.len();
    let all: Vec<usize> = (0..d).collect();
    let full = ridge_on_subset(points, &all, ridge_lambda)?;

    let mut ranked: Vec<usize> = (0..d).collect();
    ranked.sort_by(|&a, &b| {
        full[b]
            .abs()
            .partial_cmp(&full[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut selected: Vec<usize> = ranked.into_iter().take(top_k.min(d)).collect();
    selected.sort_unstable();

    let refit = ridge_on_subset(points, &selected, ridge_lambda)?;
    let mut terms: Vec<(usize, f64)> = selected.into_iter().zip(refit).collect();
    terms.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap()
            .then(a.0.cmp(&b.0))
    });
    Ok(terms)
}

fn ridge_on_subset(
    points: &[(Vec<u8>, f64, f64)],
    features: &[usize],
    ridge_lambda: f64,
) -> Result<Vec<f64>> {
    let d = features.len();
    if d == 0 {
        return Ok(vec![]);
    }
    let sw: f64 = points.iter().map(|p| p.2).sum();
    if sw <= 0.0 {
        return Err(Error::Numeric("all sample weights are zero".into()));
    }
    let mut x_mean = vec![0.0; d];
    let mut y_mean = 0.0;
    for (x, y, w) in points {
        for (j, &f) in features.iter().enumerate() {
            x_mean[j] += w * x[f] as f64;
        }
        y_mean += w * y;
    }
    for m in &mut x_mean {
        *m /= sw;
    }
    y_mean /= sw;

    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(d);
    for (x, y, w) in points {
        let yc = y - y_mean;
        for (j, &fj) in features.iter().enumerate() {
            let xj = x[fj] as f64 - x_mean[j];
            b[j] += w * xj * yc;
            for (k, &fk) in features.iter().enumerate().skip(j) {
                let xk = x[fk] as f64 - x_mean[k];
                a[(j, k)] += w * xj * xk;
            }
        }
    }
    for j in 0..d {
        a[(j, j)] += ridge_lambda;
        for k in 0..j {
            a[(j, k)] = a[(k, j)];
        }
    }
    let solution = a.lu().solve(&b).ok_or_else(|| {
        Error::Numeric(
            "singular weighted normal matrix; use a positive ridge_lambda".into(),
        )
    })?;
    Ok(solution.iter().copied().collect())
}

/// Queries the oracle once per perturbation point (the center is point 0)
/// and assembles the top-k explanation for the center's predicted label.
pub fn explain<F>(
    predict: F,
    center: &Sample,
    discretizer: &Discretizer,
    schema: &DatasetSchema,
    config: &ExplainerConfig,
) -> Result<Explanation>
where
    F: Fn(&Sample) -> usize,
{
    config.validate()?;
    let points = perturb(
        center,
        discretizer,
        schema,
        config.num_perturbations,
        config.rng_seed,
    );
    let labels: Vec<usize> = points.iter().map(|(s, _)| predict(s)).collect();
    let predicted_label = labels[0];

    let regression_points: Vec<(Vec<u8>, f64, f64)> = points
        .iter()
        .zip(&labels)
        .map(|((_, agreement), &label)| {
            let indicator = if label == predicted_label { 1.0 } else { 0.0 };
            let weight = kernel_weight(agreement, config.kernel_width);
            (agreement.clone(), indicator, weight)
        })
        .collect();

    let coefficients = fit_local(&regression_points, config.top_k, config.ridge_lambda)?;
    let terms = coefficients
        .into_iter()
        .map(|(feature, weight)| {
            let spec = &schema.features[feature];
            match spec.kind {
                FeatureKind::Categorical => ExplanationTerm {
                    feature,
                    weight,
                    lower: None,
                    upper: None,
                    category: Some(center.values[feature] as usize),
                },
                _ => {
                    let bin = discretizer.bin_of(feature, center.values[feature]);
                    let (lower, upper) = discretizer.bin_interval(feature, bin);
                    ExplanationTerm {
                        feature,
                        weight,
                        lower,
                        upper,
                        category: None,
                    }
                }
            }
        })
        .collect();
    Ok(Explanation {
        label: predicted_label,
        terms,
    })
}
