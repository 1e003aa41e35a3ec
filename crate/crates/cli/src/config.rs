//! Run configuration: a TOML file with one section per concern. Unknown keys
//! are rejected so a misspelt misalignment range cannot slip through.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vd2nn::data::{load_idx, InputEncoding, LabeledImageSet};
use vd2nn::heads::{DetectorLayout, HeadMode};
use vd2nn::network::{DiffractiveNetwork, NetworkGeometry, VaccinationSpec};
use vd2nn::optics::GridSpec;
use vd2nn::training::TrainConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub n: usize,
    pub pitch: f64,
    pub wavelength: f64,
    pub num_layers: usize,
    pub input_to_first: f64,
    pub layer_spacing: f64,
    pub last_to_output: f64,
    /// Uniform amplitude transmittance of every layer.
    pub amplitude_floor: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            n: 200,
            pitch: 0.53,
            wavelength: 1.0,
            num_layers: 5,
            input_to_first: 40.0,
            layer_spacing: 40.0,
            last_to_output: 40.0,
            amplitude_floor: 1.0,
        }
    }
}

impl GeometryConfig {
    pub fn geometry(&self) -> NetworkGeometry {
        NetworkGeometry {
            grid: GridSpec {
                n: self.n,
                pitch: self.pitch,
                wavelength: self.wavelength,
            },
            num_layers: self.num_layers,
            input_to_first: self.input_to_first,
            layer_spacing: self.layer_spacing,
            last_to_output: self.last_to_output,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutConfig {
    pub mode: HeadMode,
    pub num_classes: usize,
    pub detector_side: f64,
    pub row_separation: f64,
    pub column_pitch: f64,
    pub pair_gap: f64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        ReadoutConfig {
            mode: HeadMode::Standard,
            num_classes: 10,
            detector_side: 6.4,
            row_separation: 25.0,
            column_pitch: 18.0,
            pair_gap: 3.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub delta_lateral: f64,
    pub delta_axial: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_betas: [f64; 2],
    pub adam_eps: f64,
    pub loss_temperature: f64,
    pub per_sample_displacement: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingConfig {
            delta_lateral: 0.0,
            delta_axial: 0.0,
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            adam_betas: [t.adam_betas.0, t.adam_betas.1],
            adam_eps: t.adam_eps,
            loss_temperature: t.loss_temperature,
            per_sample_displacement: t.per_sample_displacement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Images taken from the end of the training file for validation.
    pub validation_size: usize,
    /// Use only the first `train_limit` training images (before the split).
    pub train_limit: Option<usize>,
    /// Use only the first `test_limit` test images.
    pub test_limit: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_images: "train-images-idx3-ubyte".into(),
            train_labels: "train-labels-idx1-ubyte".into(),
            test_images: "t10k-images-idx3-ubyte".into(),
            test_labels: "t10k-labels-idx1-ubyte".into(),
            validation_size: 5000,
            train_limit: None,
            test_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub readout: ReadoutConfig,
    #[serde(default)]
    pub encoding: InputEncoding,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub data: DataConfig,
}

fn default_output() -> PathBuf {
    "run".into()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: default_output(),
            geometry: GeometryConfig::default(),
            readout: ReadoutConfig::default(),
            encoding: InputEncoding::default(),
            training: TrainingConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base)?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        let abs = |p: &PathBuf| -> Result<PathBuf> {
            let joined = base.join(p);
            std::path::absolute(&joined).map_err(|e| CliError::io(joined, e))
        };
        self.output_dir = abs(&self.output_dir)?;
        let d = &mut self.data;
        for p in [
            &mut d.train_images,
            &mut d.train_labels,
            &mut d.test_images,
            &mut d.test_labels,
        ] {
            *p = abs(p)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serialises")
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            vaccination: self.vaccination(),
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            adam_betas: (t.adam_betas[0], t.adam_betas[1]),
            adam_eps: t.adam_eps,
            seed: self.seed,
            loss_temperature: t.loss_temperature,
            per_sample_displacement: t.per_sample_displacement,
        }
    }

    pub fn vaccination(&self) -> VaccinationSpec {
        VaccinationSpec {
            delta_lateral: self.training.delta_lateral,
            delta_axial: self.training.delta_axial,
        }
    }

    pub fn layout(&self) -> Result<DetectorLayout> {
        let r = &self.readout;
        Ok(DetectorLayout::grid_layout(
            &self.geometry.geometry().grid,
            r.mode,
            r.num_classes,
            r.detector_side,
            r.row_separation,
            r.column_pitch,
            r.pair_gap,
        )?)
    }

    /// Fresh network with transparent layers.
    pub fn network(&self) -> Result<DiffractiveNetwork> {
        Ok(DiffractiveNetwork::new(
            self.geometry.geometry(),
            self.geometry.amplitude_floor,
            self.layout()?,
        )?)
    }

    /// Every check that can run without touching the dataset.
    pub fn validate(&self) -> Result<()> {
        let geometry = self.geometry.geometry();
        geometry.validate()?;
        let floor = self.geometry.amplitude_floor;
        if !(0.0..=1.0).contains(&floor) {
            return Err(CliError::Config(format!("amplitude_floor {floor} must lie in [0, 1]")));
        }
        self.layout()?;
        self.encoding.validate(&geometry.grid)?;
        let train = self.train_config();
        train.validate()?;
        train.vaccination.validate_for(&geometry)?;
        Ok(())
    }

    /// `(train, validation)`
    pub fn load_training_data(&self) -> Result<(LabeledImageSet, LabeledImageSet)> {
        let d = &self.data;
        let mut all = load_idx(&d.train_images, &d.train_labels).map_err(CliError::Data)?;
        if let Some(limit) = d.train_limit {
            all = all.slice(0..limit.min(all.len()), all.split.clone());
        }
        all.check_labels(self.readout.num_classes).map_err(CliError::Data)?;
        if d.validation_size >= all.len() {
            return Err(CliError::Config(format!(
                "validation_size {} leaves no training images out of {}",
                d.validation_size,
                all.len()
            )));
        }
        Ok(all.split_tail(d.validation_size))
    }

    pub fn load_test_data(&self) -> Result<LabeledImageSet> {
        let d = &self.data;
        let mut test = load_idx(&d.test_images, &d.test_labels).map_err(CliError::Data)?;
        if let Some(limit) = d.test_limit {
            test = test.slice(0..limit.min(test.len()), test.split.clone());
        }
        test.check_labels(self.readout.num_classes).map_err(CliError::Data)?;
        Ok(test)
    }
}
