use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use vd2nn::evaluation::{describe, format_sig, sweep, write_sweep_csv, SampleRecord, SweepAxis};
use vd2nn::heads::HeadMode;
use vd2nn::network::{Displacement, DisplacementSample};
use vd2nn::training::{train, EpochLog};
use vd2nn::Error as CoreError;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.vd2nn";
pub const LOG_FILE: &str = "train_log.csv";
pub const RESOLVED_FILE: &str = "config.resolved.toml";
pub const LOG_HEADER: &str = "epoch,mean_loss,clean_val_acc,vaccinated_val_acc";

pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub resolved_config: PathBuf,
    pub epochs: Vec<EpochLog>,
}

fn log_row(l: &EpochLog) -> String {
    format!(
        "{},{},{},{}\n",
        l.epoch,
        format_sig(l.mean_loss),
        format_sig(l.clean_val_acc),
        format_sig(l.vaccinated_val_acc)
    )
}

/// Trains the configured network and writes the checkpoint, the per-epoch log
/// and the fully resolved configuration into the output directory.
pub fn cmd_train(config_path: &Path, mut progress: impl FnMut(&EpochLog)) -> Result<TrainOutputs> {
    let config = RunConfig::load(config_path)?;
    let (train_set, validation) = config.load_training_data()?;
    let mut network = config.network()?;

    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let resolved = out.join(RESOLVED_FILE);
    fs::write(&resolved, config.to_toml()).map_err(|e| CliError::io(&resolved, e))?;
    let log_path = out.join(LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    writeln!(log, "{LOG_HEADER}").map_err(|e| CliError::io(&log_path, e))?;

    let mut write_err = None;
    let epochs = train(
        &mut network,
        &train_set,
        &validation,
        &config.encoding,
        &config.train_config(),
        |l| {
            if let Err(e) = log.write_all(log_row(l).as_bytes()).and_then(|_| log.flush()) {
                write_err.get_or_insert(e);
            }
            progress(l);
        },
    )?;
    if let Some(e) = write_err {
        return Err(CliError::io(&log_path, e));
    }

    let checkpoint = out.join(CHECKPOINT_FILE);
    Checkpoint { config, network }.save(&checkpoint)?;
    Ok(TrainOutputs {
        checkpoint,
        log: log_path,
        resolved_config: resolved,
        epochs,
    })
}

/// Comma-separated, ascending, non-negative levels in wavelengths.
pub fn parse_levels(text: &str) -> Result<Vec<f64>> {
    let levels = text
        .split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| CliError::Config(format!("bad level {s:?} in {text:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if levels.windows(2).any(|w| w[0] > w[1]) {
        return Err(CliError::Config(format!("levels must be ascending: {text:?}")));
    }
    Ok(levels)
}

/// Runs a sweep over the checkpoint's test set and writes `<out>/<axis>.csv`
/// plus its records file. Nothing is written if the checkpoint fails to load.
pub fn cmd_sweep(
    checkpoint: &Path,
    axis: SweepAxis,
    levels: &str,
    seed: u64,
    out: &Path,
    subset: Option<usize>,
) -> Result<PathBuf> {
    let levels = parse_levels(levels)?;
    let ck = Checkpoint::load(checkpoint)?;
    let test = ck.config.load_test_data()?;
    let result = sweep(&ck.network, &test, &ck.config.encoding, axis, &levels, seed, subset)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let name = match axis {
        SweepAxis::Lateral => "lateral.csv",
        SweepAxis::Axial => "axial.csv",
    };
    let path = out.join(name);
    write_sweep_csv(&result, &path)?;
    Ok(path)
}

/// Parses `layer:dx,dy,dz` with a 1-based layer index.
pub fn parse_override(text: &str) -> Result<(usize, Displacement)> {
    let bad = || CliError::Config(format!("malformed override {text:?}; expected layer:dx,dy,dz"));
    let (layer, rest) = text.split_once(':').ok_or_else(bad)?;
    let layer: usize = layer.trim().parse().map_err(|_| bad())?;
    let v = rest
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<Vec<_>>>()
        .filter(|v| v.len() == 3)
        .ok_or_else(bad)?;
    Ok((
        layer,
        Displacement {
            dx: v[0],
            dy: v[1],
            dz: v[2],
        },
    ))
}

fn apply_overrides(num_layers: usize, overrides: &[(usize, Displacement)]) -> Result<DisplacementSample> {
    let mut d = DisplacementSample::zero(num_layers);
    for &(layer, disp) in overrides {
        if layer == 0 || layer > num_layers {
            return Err(CoreError::LayerIndex {
                index: layer,
                num_layers,
            }
            .into());
        }
        d.layers[layer - 1] = disp;
    }
    Ok(d)
}

/// The thirteen placements of one layer used for the position table: nominal,
/// x and y at +-1.6 and +-3.2 wavelengths, z at +-3.2 and +-6.4 wavelengths.
pub fn position_grid() -> Vec<(String, Displacement)> {
    let at = |dx, dy, dz| Displacement { dx, dy, dz };
    let mut out = vec![("nominal".to_string(), at(0.0, 0.0, 0.0))];
    for s in [-3.2, -1.6, 1.6, 3.2] {
        out.push((format!("x{s:+}"), at(s, 0.0, 0.0)));
    }
    for s in [-3.2, -1.6, 1.6, 3.2] {
        out.push((format!("y{s:+}"), at(0.0, s, 0.0)));
    }
    for s in [-6.4, -3.2, 3.2, 6.4] {
        out.push((format!("z{s:+}"), at(0.0, 0.0, s)));
    }
    out
}

pub enum EvalOneMode {
    /// Explicit per-layer displacements (everything else nominal).
    Overrides(Vec<(usize, Displacement)>),
    /// The position table for one layer, written as CSV.
    PositionGrid { layer: usize, csv: PathBuf },
}

fn record_report(r: &SampleRecord, mode: HeadMode) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "sample {} label {} predicted {}",
        r.sample_id, r.true_label, r.pred_label
    );
    let _ = writeln!(
        s,
        "psi {} efficiency {} absorbed {} scattered {}",
        format_sig(r.psi),
        format_sig(r.power.efficiency),
        format_sig(r.power.absorbed_fraction),
        format_sig(r.power.scattered_fraction)
    );
    let _ = writeln!(s, "class,{:?}_score", mode);
    for (k, v) in r.scores.iter().enumerate() {
        let _ = writeln!(s, "{k},{}", format_sig(*v));
    }
    s
}

/// Scores one test sample under pinned displacements; returns the printed report.
pub fn cmd_eval_one(checkpoint: &Path, sample: usize, mode: EvalOneMode) -> Result<String> {
    let ck = Checkpoint::load(checkpoint)?;
    let net = &ck.network;
    let test = ck.config.load_test_data()?;
    if sample >= test.len() {
        return Err(CliError::Config(format!(
            "sample {sample} out of range ({} test images)",
            test.len()
        )));
    }
    let input = ck.config.encoding.encode(&test, sample, net.grid())?;
    let label = test.label(sample);
    match mode {
        EvalOneMode::Overrides(o) => {
            let d = apply_overrides(net.num_layers(), &o)?;
            let r = describe(net, sample, &input, label, &d)?;
            Ok(record_report(&r, net.layout.mode))
        }
        EvalOneMode::PositionGrid { layer, csv } => {
            apply_overrides(net.num_layers(), &[(layer, Displacement::default())])?;
            let mut text = String::from("position,dx,dy,dz,pred_label,psi,efficiency");
            for k in 0..net.layout.num_classes {
                let _ = write!(text, ",score_{k}");
            }
            text.push('\n');
            let mut report = String::new();
            for (name, disp) in position_grid() {
                let d = apply_overrides(net.num_layers(), &[(layer, disp)])?;
                let r = describe(net, sample, &input, label, &d)?;
                let _ = write!(
                    text,
                    "{name},{},{},{},{},{},{}",
                    format_sig(disp.dx),
                    format_sig(disp.dy),
                    format_sig(disp.dz),
                    r.pred_label,
                    format_sig(r.psi),
                    format_sig(r.power.efficiency)
                );
                for v in &r.scores {
                    let _ = write!(text, ",{}", format_sig(*v));
                }
                text.push('\n');
                let _ = writeln!(report, "{name}: predicted {} psi {}", r.pred_label, format_sig(r.psi));
            }
            if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            fs::write(&csv, text).map_err(|e| CliError::io(&csv, e))?;
            Ok(report)
        }
    }
}

/// Human-readable summary of a checkpoint.
pub fn cmd_inspect(checkpoint: &Path) -> Result<String> {
    let ck = Checkpoint::load(checkpoint)?;
    let net = &ck.network;
    let g = net.geometry();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "checkpoint {} (format {})",
        checkpoint.display(),
        crate::checkpoint::VERSION
    );
    let _ = writeln!(
        s,
        "grid {}x{} pitch {} wavelength {} aperture {}",
        g.grid.n,
        g.grid.n,
        g.grid.pitch,
        g.grid.wavelength,
        format_sig(g.grid.aperture())
    );
    let _ = writeln!(
        s,
        "{} layers, distances {} / {} / {}, amplitude floor {}",
        g.num_layers, g.input_to_first, g.layer_spacing, g.last_to_output, ck.config.geometry.amplitude_floor
    );
    let _ = writeln!(
        s,
        "readout {:?}, {} classes, {} detectors",
        net.layout.mode,
        net.layout.num_classes,
        net.layout.regions.len()
    );
    if let Some(h) = &net.electronic {
        let _ = writeln!(
            s,
            "electronic head {}x{}, {} parameters",
            h.inputs(),
            h.outputs(),
            h.param_count()
        );
    }
    let v = ck.config.vaccination();
    let _ = writeln!(
        s,
        "trained with delta_lateral {} delta_axial {}",
        v.delta_lateral, v.delta_axial
    );
    for (l, layer) in net.layers.iter().enumerate() {
        let w = layer.wrapped_phase();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let (lo, hi) = w
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
        let _ = writeln!(
            s,
            "layer {}: wrapped phase mean {} min {} max {}",
            l + 1,
            format_sig(mean),
            format_sig(lo),
            format_sig(hi)
        );
    }
    Ok(s)
}
