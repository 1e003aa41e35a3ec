//! Blind testing under random misalignment, robustness sweeps and CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InputEncoding, LabeledImageSet};
use crate::error::{Error, Result};
use crate::heads::{
    argmax, class_scores, class_signals, detect_with, power_efficiency, signal_contrast, ContrastStats, PowerReport,
};
use crate::network::{sample_displacements, DiffractiveNetwork, DisplacementSample, PowerLedger, VaccinationSpec};
use crate::optics::ComplexField;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSpec {
    pub vaccination: VaccinationSpec,
    pub seed: u64,
    /// Evaluate only the first `subset` samples.
    pub subset: Option<usize>,
}

impl EvalSpec {
    pub fn clean() -> Self {
        EvalSpec {
            vaccination: VaccinationSpec::NONE,
            seed: 0,
            subset: None,
        }
    }
}

/// Detector readout of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub intensities: Vec<f64>,
    pub scores: Vec<f64>,
    pub power: PowerLedger,
}

impl Inference {
    pub fn predicted(&self) -> usize {
        argmax(&self.scores)
    }
}

pub(crate) fn infer_with(
    network: &DiffractiveNetwork,
    pixels: &[Vec<usize>],
    input: &ComplexField,
    d: &DisplacementSample,
) -> Result<Inference> {
    let trace = network.forward_trace(input, d)?;
    let intensities = detect_with(&trace.output, pixels);
    let scores = class_scores(&network.layout, network.electronic.as_ref(), &intensities)?;
    Ok(Inference {
        intensities,
        scores,
        power: trace.power,
    })
}

/// Runs one input through the network under displacement `d`.
pub fn infer(network: &DiffractiveNetwork, input: &ComplexField, d: &DisplacementSample) -> Result<Inference> {
    let pixels = network.layout.pixel_indices(network.grid());
    infer_with(network, &pixels, input, d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: usize,
    pub true_label: usize,
    pub pred_label: usize,
    pub displacement: DisplacementSample,
    pub scores: Vec<f64>,
    pub psi: f64,
    pub power: PowerReport,
}

impl SampleRecord {
    pub fn correct(&self) -> bool {
        self.true_label == self.pred_label
    }
}

/// Full report of a network, its readout and power budget for one sample.
pub fn describe(
    network: &DiffractiveNetwork,
    sample_id: usize,
    input: &ComplexField,
    label: usize,
    d: &DisplacementSample,
) -> Result<SampleRecord> {
    let pixels = network.layout.pixel_indices(network.grid());
    record(network, &pixels, sample_id, input, label, d.clone())
}

fn record(
    network: &DiffractiveNetwork,
    pixels: &[Vec<usize>],
    sample_id: usize,
    input: &ComplexField,
    label: usize,
    displacement: DisplacementSample,
) -> Result<SampleRecord> {
    let inf = infer_with(network, pixels, input, &displacement)?;
    let signals = class_signals(&network.layout, network.electronic.as_ref(), &inf.intensities)?;
    Ok(SampleRecord {
        sample_id,
        true_label: label,
        pred_label: inf.predicted(),
        psi: signal_contrast(&signals, label),
        power: power_efficiency(&inf.power, &inf.intensities, &network.layout, label),
        displacement,
        scores: inf.scores,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// Over all samples, correct or not.
    pub mean_psi: f64,
    pub mean_efficiency: f64,
    pub records: Vec<SampleRecord>,
}

fn evaluate_level(
    network: &DiffractiveNetwork,
    set: &LabeledImageSet,
    encoding: &InputEncoding,
    vaccination: &VaccinationSpec,
    seed: u64,
    level: u32,
    subset: Option<usize>,
) -> Result<Evaluation> {
    vaccination.validate()?;
    set.check_labels(network.layout.num_classes)?;
    let total = subset.map_or(set.len(), |s| s.min(set.len()));
    let grid = *network.grid();
    let pixels = network.layout.pixel_indices(&grid);
    let num_layers = network.num_layers();
    let records = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::eval_stream(seed, level, i as u32);
            let d = sample_displacements(vaccination, num_layers, &mut r);
            let input = encoding.encode(set, i, &grid)?;
            record(network, &pixels, i, &input, set.label(i), d)
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = records.iter().filter(|r| r.correct()).count();
    let mean = |f: &dyn Fn(&SampleRecord) -> f64| {
        if total == 0 {
            f64::NAN
        } else {
            records.iter().map(f).sum::<f64>() / total as f64
        }
    };
    Ok(Evaluation {
        correct,
        total,
        accuracy: if total == 0 {
            f64::NAN
        } else {
            correct as f64 / total as f64
        },
        mean_psi: mean(&|r| r.psi),
        mean_efficiency: mean(&|r| r.power.efficiency),
        records,
    })
}

/// Each sample sees its own displacement, drawn from a stream keyed by the
/// seed and the sample index.
pub fn evaluate(
    network: &DiffractiveNetwork,
    set: &LabeledImageSet,
    encoding: &InputEncoding,
    spec: &EvalSpec,
) -> Result<Evaluation> {
    evaluate_level(network, set, encoding, &spec.vaccination, spec.seed, 0, spec.subset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Lateral,
    Axial,
}

impl SweepAxis {
    pub fn spec(self, delta: f64) -> VaccinationSpec {
        match self {
            SweepAxis::Lateral => VaccinationSpec::lateral(delta),
            SweepAxis::Axial => VaccinationSpec::axial(delta),
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lateral" => Ok(SweepAxis::Lateral),
            "axial" => Ok(SweepAxis::Axial),
            other => Err(Error::Config(format!("unknown axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSummary {
    pub delta: f64,
    pub accuracy: f64,
    pub mean_psi: f64,
    pub mean_efficiency: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub levels: Vec<LevelSummary>,
    /// `records[level][sample]`
    pub records: Vec<Vec<SampleRecord>>,
}

/// One evaluation per misalignment level; level `i` draws from stream family `i`.
pub fn sweep(
    network: &DiffractiveNetwork,
    set: &LabeledImageSet,
    encoding: &InputEncoding,
    axis: SweepAxis,
    levels: &[f64],
    seed: u64,
    subset: Option<usize>,
) -> Result<SweepResult> {
    if levels.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Config(format!("sweep levels must be ascending: {levels:?}")));
    }
    let mut summaries = Vec::with_capacity(levels.len());
    let mut records = Vec::with_capacity(levels.len());
    for (i, &delta) in levels.iter().enumerate() {
        let ev = evaluate_level(network, set, encoding, &axis.spec(delta), seed, i as u32, subset)?;
        summaries.push(LevelSummary {
            delta,
            accuracy: ev.accuracy,
            mean_psi: ev.mean_psi,
            mean_efficiency: ev.mean_efficiency,
            n_samples: ev.total,
        });
        records.push(ev.records);
    }
    Ok(SweepResult {
        axis,
        levels: summaries,
        records,
    })
}

/// Contrast statistics over the correctly classified samples of a clean
/// evaluation; `None` when nothing is classified correctly.
pub fn contrast_statistics(
    network: &DiffractiveNetwork,
    set: &LabeledImageSet,
    encoding: &InputEncoding,
    subset: Option<usize>,
) -> Result<Option<ContrastStats>> {
    let spec = EvalSpec {
        subset,
        ..EvalSpec::clean()
    };
    let ev = evaluate(network, set, encoding, &spec)?;
    Ok(contrast_of(&ev.records))
}

pub fn contrast_of(records: &[SampleRecord]) -> Option<ContrastStats> {
    let psi: Vec<f64> = records.iter().filter(|r| r.correct()).map(|r| r.psi).collect();
    ContrastStats::from_values(&psi)
}

/// Six significant digits.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    format!("{:.*}", (5 - exp).max(0) as usize, x)
}

/// Sibling file holding the per-sample records of a sweep CSV.
pub fn records_path(path: &Path) -> PathBuf {
    let stem = match path.extension() {
        Some(e) if e == "csv" => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut name = stem.into_os_string();
    name.push(".records.csv");
    PathBuf::from(name)
}

pub const SWEEP_HEADER: &str = "delta_lambda,accuracy,mean_psi,mean_efficiency,n_samples";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes the level summary to `path` and the per-sample records next to it.
pub fn write_sweep_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let mut text = String::from(SWEEP_HEADER);
    text.push('\n');
    for l in &result.levels {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            format_sig(l.delta),
            format_sig(l.accuracy),
            format_sig(l.mean_psi),
            format_sig(l.mean_efficiency),
            l.n_samples
        ));
    }
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))?;

    let rpath = records_path(path);
    let mut rec = create(&rpath)?;
    let num_layers = result
        .records
        .iter()
        .flatten()
        .next()
        .map_or(0, |r| r.displacement.layers.len());
    let num_scores = result.records.iter().flatten().next().map_or(0, |r| r.scores.len());
    let mut header = String::from("level_index,sample_id,true_label,pred_label");
    for l in 1..=num_layers {
        header.push_str(&format!(",dx{l},dy{l},dz{l}"));
    }
    for k in 0..num_scores {
        header.push_str(&format!(",score_{k}"));
    }
    header.push('\n');
    rec.write_all(header.as_bytes()).map_err(|e| Error::io(&rpath, e))?;
    for (li, level) in result.records.iter().enumerate() {
        for r in level {
            let mut line = format!("{li},{},{},{}", r.sample_id, r.true_label, r.pred_label);
            for d in &r.displacement.layers {
                for v in [d.dx, d.dy, d.dz] {
                    line.push(',');
                    line.push_str(&format_sig(v));
                }
            }
            for s in &r.scores {
                line.push(',');
                line.push_str(&format_sig(*s));
            }
            line.push('\n');
            rec.write_all(line.as_bytes()).map_err(|e| Error::io(&rpath, e))?;
        }
    }
    rec.flush().map_err(|e| Error::io(&rpath, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(0.91), "0.910000");
        assert_eq!(format_sig(2.12), "2.12000");
        assert_eq!(format_sig(0.000123456789), "0.000123457");
        assert_eq!(format_sig(-4.24), "-4.24000");
        assert_eq!(format_sig(123456.7), "123457");
    }

    #[test]
    fn records_sit_next_to_the_summary() {
        assert_eq!(
            records_path(Path::new("out/lateral.csv")),
            Path::new("out/lateral.records.csv")
        );
        assert_eq!(
            records_path(Path::new("out/lateral")),
            Path::new("out/lateral.records.csv")
        );
    }

    #[test]
    fn two_pass_statistics_oracle() {
        let psi = [0.12, 0.5, 0.33, 0.91, 0.47];
        let mean = psi.iter().sum::<f64>() / 5.0;
        let var = psi.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / 5.0;
        let s = ContrastStats::from_values(&psi).unwrap();
        assert!((s.mu_sc - mean).abs() < 1e-12);
        assert!((s.sigma_sc - var.sqrt()).abs() < 1e-12);
    }
}
