//! Output-plane detectors, class-score heads, the training loss and the
//! signal-contrast / power diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::PowerLedger;
use crate::optics::{ComplexField, GridSpec};

/// Guard for ratio forms with possibly empty denominators.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    /// One detector per class.
    Standard,
    /// A (+, -) detector pair per class.
    Differential,
    /// Detector intensities feed a trainable linear layer.
    Hybrid,
}

/// Axis-aligned square detector; centre and side in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub cx: f64,
    pub cy: f64,
    pub side: f64,
}

impl Region {
    fn contains(&self, x: f64, y: f64) -> bool {
        let h = self.side / 2.0;
        x >= self.cx - h && x < self.cx + h && y >= self.cy - h && y < self.cy + h
    }

    fn overlaps(&self, other: &Region) -> bool {
        let reach = (self.side + other.side) / 2.0;
        (self.cx - other.cx).abs() < reach && (self.cy - other.cy).abs() < reach
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorLayout {
    pub mode: HeadMode,
    pub num_classes: usize,
    /// Differential layouts order regions `[class0+, class0-, class1+, ...]`.
    pub regions: Vec<Region>,
}

impl DetectorLayout {
    /// Classes on two rows centred on the axis. Differential pairs are stacked
    /// vertically around each class position, separated by `pair_gap`.
    pub fn grid_layout(
        grid: &GridSpec,
        mode: HeadMode,
        num_classes: usize,
        side: f64,
        row_separation: f64,
        column_pitch: f64,
        pair_gap: f64,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Config("a layout needs at least one class".into()));
        }
        let rows = if num_classes == 1 { 1 } else { 2 };
        let cols = num_classes.div_ceil(rows);
        let mut regions = Vec::new();
        for c in 0..num_classes {
            let (row, col) = (c / cols, c % cols);
            let in_row = if row + 1 == rows {
                num_classes - row * cols
            } else {
                cols
            };
            let cx = (col as f64 - (in_row as f64 - 1.0) / 2.0) * column_pitch;
            let cy = if rows == 1 {
                0.0
            } else {
                row_separation / 2.0 - row as f64 * row_separation
            };
            match mode {
                HeadMode::Differential => {
                    let off = (side + pair_gap) / 2.0;
                    regions.push(Region { cx, cy: cy + off, side });
                    regions.push(Region { cx, cy: cy - off, side });
                }
                _ => regions.push(Region { cx, cy, side }),
            }
        }
        let layout = DetectorLayout {
            mode,
            num_classes,
            regions,
        };
        layout.validate(grid)?;
        Ok(layout)
    }

    /// Ten 6.4-wavelength detectors on two rows 25 wavelengths apart with an
    /// 18-wavelength column pitch; pairs separated by 3.2 wavelengths.
    pub fn default_layout(grid: &GridSpec, mode: HeadMode) -> Result<Self> {
        Self::grid_layout(grid, mode, 10, 6.4, 25.0, 18.0, 3.2)
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let expected = match self.mode {
            HeadMode::Differential => 2 * self.num_classes,
            _ => self.num_classes,
        };
        if self.num_classes == 0 || self.regions.len() != expected {
            return Err(Error::Config(format!(
                "{:?} layout for {} classes needs {} regions, found {}",
                self.mode,
                self.num_classes,
                expected,
                self.regions.len()
            )));
        }
        let half = grid.aperture() / 2.0 + 1e-9;
        for (i, r) in self.regions.iter().enumerate() {
            if !(r.side > 0.0) || r.cx.abs() + r.side / 2.0 > half || r.cy.abs() + r.side / 2.0 > half {
                return Err(Error::Config(format!(
                    "detector {i} at ({}, {}) side {} does not fit the {}-wavelength aperture",
                    r.cx,
                    r.cy,
                    r.side,
                    grid.aperture()
                )));
            }
            for (j, o) in self.regions.iter().enumerate().skip(i + 1) {
                if r.overlaps(o) {
                    return Err(Error::Config(format!("detectors {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    /// Sample indices whose centres fall inside each region.
    pub fn pixel_indices(&self, grid: &GridSpec) -> Vec<Vec<usize>> {
        let n = grid.n;
        self.regions
            .iter()
            .map(|r| {
                let mut idx = Vec::new();
                for y in 0..n {
                    let py = grid.coord(y);
                    for x in 0..n {
                        if r.contains(grid.coord(x), py) {
                            idx.push(y * n + x);
                        }
                    }
                }
                idx
            })
            .collect()
    }
}

/// Single fully connected layer on normalised detector signals.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectronicHead {
    k_in: usize,
    k_out: usize,
    /// Row-major `k_in x k_out`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ElectronicHead {
    pub fn new(k_in: usize, k_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let head = ElectronicHead {
            k_in,
            k_out,
            weights,
            bias,
        };
        head.validate()?;
        Ok(head)
    }

    /// Square heads start as a scaled identity so the hybrid network initially
    /// ranks classes like the standard head; other shapes start at zero.
    pub fn initial(k_in: usize, k_out: usize) -> Self {
        let mut weights = vec![0.0; k_in * k_out];
        if k_in == k_out {
            for i in 0..k_in {
                weights[i * k_out + i] = 10.0;
            }
        }
        ElectronicHead {
            k_in,
            k_out,
            weights,
            bias: vec![0.0; k_out],
        }
    }

    pub fn inputs(&self) -> usize {
        self.k_in
    }

    pub fn outputs(&self) -> usize {
        self.k_out
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.k_in * self.k_out || self.bias.len() != self.k_out {
            return Err(Error::Dimension(format!(
                "electronic head {}x{} has {} weights and {} biases",
                self.k_in,
                self.k_out,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|w| !w.is_finite()) {
            return Err(Error::Dimension("electronic head parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Per-region integrated intensity `sum |u|^2 * pitch^2`.
pub fn detect(field: &ComplexField, layout: &DetectorLayout) -> Result<Vec<f64>> {
    layout.validate(field.grid())?;
    Ok(detect_with(field, &layout.pixel_indices(field.grid())))
}

pub(crate) fn detect_with(field: &ComplexField, pixels: &[Vec<usize>]) -> Vec<f64> {
    let p2 = field.grid().pitch * field.grid().pitch;
    let v = field.values();
    pixels
        .iter()
        .map(|idx| idx.iter().map(|&i| v[i].norm_sqr()).sum::<f64>() * p2)
        .collect()
}

/// Derivative of a real loss with respect to the conjugate field, given its
/// derivative with respect to each detector intensity.
pub fn detect_backward(field: &ComplexField, pixels: &[Vec<usize>], grad_intensity: &[f64]) -> ComplexField {
    let p2 = field.grid().pitch * field.grid().pitch;
    let mut out = ComplexField::zeros(*field.grid());
    let v = field.values();
    let o = out.values_mut();
    for (idx, &g) in pixels.iter().zip(grad_intensity) {
        for &i in idx {
            o[i] = v[i] * (g * p2);
        }
    }
    out
}

/// Index of the largest score; ties resolve to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn normalize(intensities: &[f64]) -> (Vec<f64>, f64) {
    let total: f64 = intensities.iter().sum();
    if total > 0.0 {
        (intensities.iter().map(|i| i / total).collect(), total)
    } else {
        let k = intensities.len() as f64;
        (vec![1.0 / k; intensities.len()], 0.0)
    }
}

/// Back through `x = I / sum(I)`.
fn normalize_backward(x: &[f64], total: f64, grad_x: &[f64]) -> Vec<f64> {
    if total <= 0.0 {
        return vec![0.0; x.len()];
    }
    let dot: f64 = x.iter().zip(grad_x).map(|(a, b)| a * b).sum();
    grad_x.iter().map(|g| (g - dot) / total).collect()
}

/// Intensities normalised to sum to one (uniform when all are zero).
pub fn standard_scores(intensities: &[f64]) -> Vec<f64> {
    normalize(intensities).0
}

/// `(I+ - I-) / (I+ + I- + eps)` for every detector pair.
pub fn differential_scores(intensities: &[f64]) -> Vec<f64> {
    intensities
        .chunks_exact(2)
        .map(|p| (p[0] - p[1]) / (p[0] + p[1] + EPS))
        .collect()
}

/// `weights^T * normalize(intensities) + bias`.
pub fn hybrid_scores(intensities: &[f64], head: &ElectronicHead) -> Result<Vec<f64>> {
    if intensities.len() != head.k_in {
        return Err(Error::Dimension(format!(
            "electronic head expects {} inputs, got {}",
            head.k_in,
            intensities.len()
        )));
    }
    let (x, _) = normalize(intensities);
    Ok(linear(&x, head))
}

fn linear(x: &[f64], head: &ElectronicHead) -> Vec<f64> {
    let mut out = head.bias.clone();
    for (i, xi) in x.iter().enumerate() {
        let row = &head.weights[i * head.k_out..(i + 1) * head.k_out];
        for (o, w) in out.iter_mut().zip(row) {
            *o += w * xi;
        }
    }
    out
}

/// Gradients of the electronic head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Class scores for whichever head the layout selects.
pub fn class_scores(
    layout: &DetectorLayout,
    electronic: Option<&ElectronicHead>,
    intensities: &[f64],
) -> Result<Vec<f64>> {
    match layout.mode {
        HeadMode::Standard => Ok(standard_scores(intensities)),
        HeadMode::Differential => Ok(differential_scores(intensities)),
        HeadMode::Hybrid => {
            let head = electronic.ok_or_else(|| Error::Config("hybrid layout without electronic head".into()))?;
            hybrid_scores(intensities, head)
        }
    }
}

/// Chain rule from score gradients back to intensity gradients (and head
/// parameter gradients for the hybrid head).
pub fn class_scores_backward(
    layout: &DetectorLayout,
    electronic: Option<&ElectronicHead>,
    intensities: &[f64],
    grad_scores: &[f64],
) -> Result<(Vec<f64>, Option<HeadGradient>)> {
    match layout.mode {
        HeadMode::Standard => {
            let (x, total) = normalize(intensities);
            Ok((normalize_backward(&x, total, grad_scores), None))
        }
        HeadMode::Differential => {
            let mut grad = Vec::with_capacity(intensities.len());
            for (p, g) in intensities.chunks_exact(2).zip(grad_scores) {
                let den = p[0] + p[1] + EPS;
                let den2 = den * den;
                grad.push(g * (2.0 * p[1] + EPS) / den2);
                grad.push(-g * (2.0 * p[0] + EPS) / den2);
            }
            Ok((grad, None))
        }
        HeadMode::Hybrid => {
            let head = electronic.ok_or_else(|| Error::Config("hybrid layout without electronic head".into()))?;
            let (x, total) = normalize(intensities);
            let mut gw = vec![0.0; head.weights.len()];
            let mut gx = vec![0.0; head.k_in];
            for i in 0..head.k_in {
                let row = &head.weights[i * head.k_out..(i + 1) * head.k_out];
                for o in 0..head.k_out {
                    gw[i * head.k_out + o] = x[i] * grad_scores[o];
                    gx[i] += row[o] * grad_scores[o];
                }
            }
            let head_grad = HeadGradient {
                weights: gw,
                bias: grad_scores.to_vec(),
            };
            Ok((normalize_backward(&x, total, &gx), Some(head_grad)))
        }
    }
}

/// `-log softmax(scores / temperature)[label]` and its gradient with respect to `scores`.
pub fn softmax_cross_entropy(scores: &[f64], label: usize, temperature: f64) -> (f64, Vec<f64>) {
    assert!(label < scores.len(), "label {label} out of range");
    assert!(temperature > 0.0, "temperature must be positive");
    let z: Vec<f64> = scores.iter().map(|s| s / temperature).collect();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
    let log_norm = max + sum.ln();
    let loss = log_norm - z[label];
    let grad = z
        .iter()
        .enumerate()
        .map(|(c, v)| {
            let p = (v - log_norm).exp();
            (p - if c == label { 1.0 } else { 0.0 }) / temperature
        })
        .collect();
    (loss, grad)
}

/// Non-negative per-class signal used for the contrast metric: raw detector
/// intensity (standard), differential score mapped to `[0, 1]`, or softmax
/// probability of the hybrid logits.
pub fn class_signals(
    layout: &DetectorLayout,
    electronic: Option<&ElectronicHead>,
    intensities: &[f64],
) -> Result<Vec<f64>> {
    match layout.mode {
        HeadMode::Standard => Ok(intensities.to_vec()),
        HeadMode::Differential => Ok(differential_scores(intensities)
            .into_iter()
            .map(|s| (s + 1.0) / 2.0)
            .collect()),
        HeadMode::Hybrid => {
            let logits = class_scores(layout, electronic, intensities)?;
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let s: f64 = e.iter().sum();
            Ok(e.into_iter().map(|v| v / s).collect())
        }
    }
}

/// `(s_true - s_runner_up) / (s_true + s_runner_up + eps)` over non-negative
/// per-class signals.
pub fn signal_contrast(signals: &[f64], true_label: usize) -> f64 {
    let s_true = signals[true_label];
    let runner_up = signals
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != true_label)
        .map(|(_, &s)| s)
        .fold(0.0, f64::max);
    (s_true - runner_up) / (s_true + runner_up + EPS)
}

/// Fractions of the input power that end up in the true-class detector, in
/// layer absorption, and scattered (off-detector at the output plane or out of
/// the window). `detected + scattered + absorbed == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerReport {
    pub efficiency: f64,
    pub detected_fraction: f64,
    pub absorbed_fraction: f64,
    pub scattered_fraction: f64,
}

/// Power bookkeeping for one forward pass. The true-class detector is the
/// class detector (standard), the `+` detector of the pair (differential), or
/// all detectors together (hybrid, where detectors carry no class).
pub fn power_efficiency(
    ledger: &PowerLedger,
    intensities: &[f64],
    layout: &DetectorLayout,
    true_label: usize,
) -> PowerReport {
    let e_in = ledger.input;
    if e_in <= 0.0 {
        return PowerReport {
            efficiency: 0.0,
            detected_fraction: 0.0,
            absorbed_fraction: 0.0,
            scattered_fraction: 0.0,
        };
    }
    let detected: f64 = intensities.iter().sum();
    let true_power = match layout.mode {
        HeadMode::Standard => intensities[true_label],
        HeadMode::Differential => intensities[2 * true_label],
        HeadMode::Hybrid => detected,
    };
    PowerReport {
        efficiency: true_power / e_in,
        detected_fraction: detected / e_in,
        absorbed_fraction: ledger.absorbed / e_in,
        scattered_fraction: (ledger.output - detected + ledger.escaped) / e_in,
    }
}

/// Mean and (population) standard deviation of the signal contrast over
/// correctly classified samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastStats {
    pub mu_sc: f64,
    pub sigma_sc: f64,
}

impl ContrastStats {
    /// `None` for an empty slice: the statistics are undefined, not zero.
    pub fn from_values(psi: &[f64]) -> Option<Self> {
        if psi.is_empty() {
            return None;
        }
        let n = psi.len() as f64;
        let mu = psi.iter().sum::<f64>() / n;
        let var = psi.iter().map(|p| (p - mu) * (p - mu)).sum::<f64>() / n;
        Some(ContrastStats {
            mu_sc: mu,
            sigma_sc: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastBand {
    /// `mu + sigma < psi < mu + 2 sigma`
    Set1,
    /// `mu < psi < mu + sigma`
    Set2,
}

/// True iff both contrasts lie strictly inside the band.
pub fn select_by_contrast_band(stats: &ContrastStats, psi_a: f64, psi_b: f64, band: ContrastBand) -> bool {
    let (lo, hi) = match band {
        ContrastBand::Set1 => (stats.mu_sc + stats.sigma_sc, stats.mu_sc + 2.0 * stats.sigma_sc),
        ContrastBand::Set2 => (stats.mu_sc, stats.mu_sc + stats.sigma_sc),
    };
    [psi_a, psi_b].iter().all(|&p| p > lo && p < hi)
}
