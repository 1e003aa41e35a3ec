//! Diffractive layers, network geometry, layer misalignment and the optical
//! forward pass.
//!
//! Layer `l` (1-based) nominally sits on the optical axis at
//! `z = input_to_first + (l - 1) * layer_spacing`. A [`DisplacementSample`]
//! moves every layer independently; the input and output planes never move.
//! Lateral displacement is applied by conjugating the layer's modulation with
//! exact field shifts, axial displacement by changing the two adjacent
//! propagation distances.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{DetectorLayout, ElectronicHead, HeadMode};
use crate::optics::{
    adjoint_propagate, energy, make_transfer_function, propagate, shift, ComplexField, GridSpec, TransferFunction,
};

#[derive(Debug, Clone, PartialEq)]
pub struct DiffractiveLayer {
    /// Unwrapped phase in radians, row-major `n x n`.
    pub phase: Vec<f64>,
    /// Uniform amplitude transmittance in `[0, 1]`.
    pub amplitude_floor: f64,
}

impl DiffractiveLayer {
    /// Transparent layer with zero phase.
    pub fn transparent(grid: &GridSpec, amplitude_floor: f64) -> Self {
        DiffractiveLayer {
            phase: vec![0.0; grid.n * grid.n],
            amplitude_floor,
        }
    }

    pub fn transmittance(&self) -> Vec<Complex64> {
        self.phase
            .iter()
            .map(|&p| Complex64::from_polar(self.amplitude_floor, p))
            .collect()
    }

    /// Phase wrapped into `[0, 2pi)`, as it would be fabricated.
    pub fn wrapped_phase(&self) -> Vec<f64> {
        self.phase.iter().map(|p| p.rem_euclid(TAU)).collect()
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.phase.len() != grid.n * grid.n {
            return Err(Error::Dimension(format!(
                "layer has {} phase values, grid needs {}",
                self.phase.len(),
                grid.n * grid.n
            )));
        }
        if self.phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("layer phase values must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.amplitude_floor) {
            return Err(Error::Config(format!(
                "amplitude_floor must lie in [0, 1], got {}",
                self.amplitude_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkGeometry {
    pub grid: GridSpec,
    pub num_layers: usize,
    pub input_to_first: f64,
    pub layer_spacing: f64,
    pub last_to_output: f64,
}

impl NetworkGeometry {
    /// Five layers spaced 40 wavelengths apart on a 200x200 grid of 0.53-wavelength neurons.
    pub fn full_scale() -> Self {
        NetworkGeometry {
            grid: GridSpec {
                n: 200,
                pitch: 0.53,
                wavelength: 1.0,
            },
            num_layers: 5,
            input_to_first: 40.0,
            layer_spacing: 40.0,
            last_to_output: 40.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be at least 1".into()));
        }
        for (name, d) in [
            ("input_to_first", self.input_to_first),
            ("layer_spacing", self.layer_spacing),
            ("last_to_output", self.last_to_output),
        ] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {d}")));
            }
        }
        Ok(())
    }

    /// Nominal axial position of layer `l` (1-based).
    pub fn nominal_z(&self, l: usize) -> f64 {
        self.input_to_first + (l as f64 - 1.0) * self.layer_spacing
    }

    pub fn output_z(&self) -> f64 {
        self.nominal_z(self.num_layers) + self.last_to_output
    }

    /// Largest axial half-range that keeps every plane strictly ordered.
    pub fn max_axial_delta(&self) -> f64 {
        (self.layer_spacing / 2.0)
            .min(self.input_to_first)
            .min(self.last_to_output)
    }
}

/// Uniform half-ranges of the misalignment distributions, in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VaccinationSpec {
    pub delta_lateral: f64,
    pub delta_axial: f64,
}

impl VaccinationSpec {
    pub const NONE: VaccinationSpec = VaccinationSpec {
        delta_lateral: 0.0,
        delta_axial: 0.0,
    };

    pub fn lateral(delta: f64) -> Self {
        VaccinationSpec {
            delta_lateral: delta,
            delta_axial: 0.0,
        }
    }

    pub fn axial(delta: f64) -> Self {
        VaccinationSpec {
            delta_lateral: 0.0,
            delta_axial: delta,
        }
    }

    pub fn is_none(&self) -> bool {
        self.delta_lateral == 0.0 && self.delta_axial == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("delta_lateral", self.delta_lateral), ("delta_axial", self.delta_axial)] {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {d}")));
            }
        }
        Ok(())
    }

    /// Checks the ranges against a geometry: axial moves must not let planes
    /// cross and lateral moves must stay inside the shift window.
    pub fn validate_for(&self, geometry: &NetworkGeometry) -> Result<()> {
        self.validate()?;
        if self.delta_axial >= geometry.max_axial_delta() {
            return Err(Error::Config(format!(
                "delta_axial {} must be below {} (half the layer spacing and the end distances)",
                self.delta_axial,
                geometry.max_axial_delta()
            )));
        }
        if self.delta_lateral >= geometry.grid.max_shift() {
            return Err(Error::Config(format!(
                "delta_lateral {} must be below {} (a quarter of the aperture)",
                self.delta_lateral,
                geometry.grid.max_shift()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Displacement {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

/// One realisation of the per-layer displacement vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DisplacementSample {
    pub layers: Vec<Displacement>,
}

impl DisplacementSample {
    pub fn zero(num_layers: usize) -> Self {
        DisplacementSample {
            layers: vec![Displacement::default(); num_layers],
        }
    }

    pub fn is_axially_nominal(&self) -> bool {
        self.layers.iter().all(|d| d.dz == 0.0)
    }
}

fn uniform(rng: &mut impl Rng, delta: f64) -> f64 {
    let u: f64 = rng.gen();
    if delta == 0.0 {
        0.0
    } else {
        delta * (2.0 * u - 1.0)
    }
}

/// Draws independent `U(-delta, delta)` displacements for every layer. Exactly
/// `3 * num_layers` values are consumed, layer by layer in x, y, z order.
pub fn sample_displacements(spec: &VaccinationSpec, num_layers: usize, rng: &mut impl Rng) -> DisplacementSample {
    let layers = (0..num_layers)
        .map(|_| {
            let dx = uniform(rng, spec.delta_lateral);
            let dy = uniform(rng, spec.delta_lateral);
            let dz = uniform(rng, spec.delta_axial);
            Displacement { dx, dy, dz }
        })
        .collect();
    DisplacementSample { layers }
}

/// Lab-frame position of layer `layer_index` (1-based): nominal location plus displacement.
pub fn effective_position(geometry: &NetworkGeometry, layer_index: usize, d: &DisplacementSample) -> Result<[f64; 3]> {
    if layer_index == 0 || layer_index > geometry.num_layers || layer_index > d.layers.len() {
        return Err(Error::LayerIndex {
            index: layer_index,
            num_layers: geometry.num_layers,
        });
    }
    let disp = d.layers[layer_index - 1];
    Ok([disp.dx, disp.dy, geometry.nominal_z(layer_index) + disp.dz])
}

fn modulate(field: &ComplexField, layer: &DiffractiveLayer) -> ComplexField {
    let mut out = field.clone();
    for (v, &p) in out.values_mut().iter_mut().zip(&layer.phase) {
        *v *= Complex64::from_polar(layer.amplitude_floor, p);
    }
    out
}

/// Passes `field` through `layer` displaced laterally by `(dx, dy)`.
pub fn apply_layer(field: &ComplexField, layer: &DiffractiveLayer, dx: f64, dy: f64) -> Result<ComplexField> {
    layer.validate(field.grid())?;
    let local = shift(field, -dx, -dy)?;
    shift(&modulate(&local, layer), dx, dy)
}

/// Per-stage power bookkeeping of one forward pass, in absolute units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerLedger {
    pub input: f64,
    pub output: f64,
    /// Removed by layer transmittance below one.
    pub absorbed: f64,
    /// Lost from the simulation window or to evanescent clipping.
    pub escaped: f64,
}

/// Forward pass with the intermediate state needed for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Field arriving at each layer, expressed in that layer's own frame.
    pub incident: Vec<ComplexField>,
    pub output: ComplexField,
    pub power: PowerLedger,
}

#[derive(Debug)]
pub struct DiffractiveNetwork {
    geometry: NetworkGeometry,
    pub layers: Vec<DiffractiveLayer>,
    pub layout: DetectorLayout,
    pub electronic: Option<ElectronicHead>,
    nominal_kernels: OnceLock<Vec<TransferFunction>>,
}

impl Clone for DiffractiveNetwork {
    fn clone(&self) -> Self {
        DiffractiveNetwork {
            geometry: self.geometry,
            layers: self.layers.clone(),
            layout: self.layout.clone(),
            electronic: self.electronic.clone(),
            nominal_kernels: self.nominal_kernels.clone(),
        }
    }
}

impl PartialEq for DiffractiveNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.geometry == other.geometry
            && self.layers == other.layers
            && self.layout == other.layout
            && self.electronic == other.electronic
    }
}

impl DiffractiveNetwork {
    /// Network with transparent layers. Hybrid layouts get an electronic head
    /// initialised by [`ElectronicHead::initial`].
    pub fn new(geometry: NetworkGeometry, amplitude_floor: f64, layout: DetectorLayout) -> Result<Self> {
        let layers = (0..geometry.num_layers)
            .map(|_| DiffractiveLayer::transparent(&geometry.grid, amplitude_floor))
            .collect();
        let electronic = match layout.mode {
            HeadMode::Hybrid => Some(ElectronicHead::initial(layout.regions.len(), layout.num_classes)),
            _ => None,
        };
        Self::from_parts(geometry, layers, layout, electronic)
    }

    pub fn from_parts(
        geometry: NetworkGeometry,
        layers: Vec<DiffractiveLayer>,
        layout: DetectorLayout,
        electronic: Option<ElectronicHead>,
    ) -> Result<Self> {
        geometry.validate()?;
        if layers.len() != geometry.num_layers {
            return Err(Error::Dimension(format!(
                "{} layers given, geometry declares {}",
                layers.len(),
                geometry.num_layers
            )));
        }
        for layer in &layers {
            layer.validate(&geometry.grid)?;
        }
        layout.validate(&geometry.grid)?;
        match (layout.mode, &electronic) {
            (HeadMode::Hybrid, Some(head)) => {
                head.validate()?;
                if head.inputs() != layout.regions.len() || head.outputs() != layout.num_classes {
                    return Err(Error::Dimension(format!(
                        "electronic head is {}x{}, layout needs {}x{}",
                        head.inputs(),
                        head.outputs(),
                        layout.regions.len(),
                        layout.num_classes
                    )));
                }
            }
            (HeadMode::Hybrid, None) => return Err(Error::Config("hybrid layout requires an electronic head".into())),
            (_, Some(_)) => return Err(Error::Config("electronic head given for an all-optical layout".into())),
            (_, None) => {}
        }
        Ok(DiffractiveNetwork {
            geometry,
            layers,
            layout,
            electronic,
            nominal_kernels: OnceLock::new(),
        })
    }

    pub fn geometry(&self) -> &NetworkGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> &GridSpec {
        &self.geometry.grid
    }

    pub fn num_layers(&self) -> usize {
        self.geometry.num_layers
    }

    /// Propagation distances between consecutive planes (input, layers, output)
    /// under displacement `d`.
    pub fn stage_distances(&self, d: &DisplacementSample) -> Result<Vec<f64>> {
        let g = &self.geometry;
        if d.layers.len() != g.num_layers {
            return Err(Error::Dimension(format!(
                "displacement sample has {} layers, network has {}",
                d.layers.len(),
                g.num_layers
            )));
        }
        let mut planes = Vec::with_capacity(g.num_layers + 2);
        planes.push(0.0);
        for l in 1..=g.num_layers {
            planes.push(g.nominal_z(l) + d.layers[l - 1].dz);
        }
        planes.push(g.output_z());
        planes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let dist = w[1] - w[0];
                if dist > 0.0 {
                    Ok(dist)
                } else {
                    Err(Error::Regime {
                        from: i,
                        to: i + 1,
                        distance: dist,
                    })
                }
            })
            .collect()
    }

    /// Propagation kernels for every stage; nominal kernels are built once and cached.
    pub fn stage_kernels(&self, d: &DisplacementSample) -> Result<StageKernels<'_>> {
        let distances = self.stage_distances(d)?;
        if d.is_axially_nominal() {
            let kernels = self.nominal_kernels.get_or_init(|| {
                distances
                    .iter()
                    .map(|&z| make_transfer_function(&self.geometry.grid, z))
                    .collect()
            });
            return Ok(StageKernels::Shared(kernels));
        }
        Ok(StageKernels::Owned(
            distances
                .iter()
                .map(|&z| make_transfer_function(&self.geometry.grid, z))
                .collect(),
        ))
    }

    fn check_input(&self, input: &ComplexField) -> Result<()> {
        if input.grid() != &self.geometry.grid {
            let g = &self.geometry.grid;
            return Err(Error::GridMismatch {
                expected_n: g.n,
                expected_pitch: g.pitch,
                found_n: input.grid().n,
                found_pitch: input.grid().pitch,
            });
        }
        Ok(())
    }

    /// Output-plane field for `input` with the layers displaced by `d`.
    pub fn forward(&self, input: &ComplexField, d: &DisplacementSample) -> Result<ComplexField> {
        Ok(self.forward_trace(input, d)?.output)
    }

    pub fn forward_trace(&self, input: &ComplexField, d: &DisplacementSample) -> Result<ForwardTrace> {
        let kernels = self.stage_kernels(d)?;
        self.forward_with(input, d, kernels.as_slice())
    }

    pub fn forward_with(
        &self,
        input: &ComplexField,
        d: &DisplacementSample,
        kernels: &[TransferFunction],
    ) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut power = PowerLedger {
            input: energy(input),
            ..Default::default()
        };
        let mut field = propagate(input, &kernels[0])?;
        let mut last = energy(&field);
        power.escaped += power.input - last;

        let mut incident = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let Displacement { dx, dy, .. } = d.layers[l];
            let local = shift(&field, -dx, -dy)?;
            let e_local = energy(&local);
            power.escaped += last - e_local;
            power.absorbed += (1.0 - layer.amplitude_floor * layer.amplitude_floor) * e_local;
            let modulated = modulate(&local, layer);
            let e_mod = energy(&modulated);
            incident.push(local);

            let back = shift(&modulated, dx, dy)?;
            field = propagate(&back, &kernels[l + 1])?;
            last = energy(&field);
            power.escaped += e_mod - last;
        }
        power.output = last;
        Ok(ForwardTrace {
            incident,
            output: field,
            power,
        })
    }

    /// Backpropagates `grad_output` (the derivative of a real loss with respect
    /// to the conjugate output field) to per-layer phase gradients.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        d: &DisplacementSample,
        kernels: &[TransferFunction],
        grad_output: ComplexField,
    ) -> Result<Vec<Vec<f64>>> {
        let mut grads = vec![Vec::new(); self.layers.len()];
        let mut g = grad_output;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let Displacement { dx, dy, .. } = d.layers[l];
            g = adjoint_propagate(&g, &kernels[l + 1])?;
            g = shift(&g, -dx, -dy)?;
            let incident = trace.incident[l].values();
            let mut phase_grad = Vec::with_capacity(incident.len());
            for ((gv, s), &p) in g.values_mut().iter_mut().zip(incident).zip(&layer.phase) {
                let t = Complex64::from_polar(layer.amplitude_floor, p);
                phase_grad.push(2.0 * (*gv * (t * s).conj()).im);
                *gv *= t.conj();
            }
            grads[l] = phase_grad;
            if l > 0 {
                g = shift(&g, dx, dy)?;
            }
        }
        Ok(grads)
    }
}

pub enum StageKernels<'a> {
    Shared(&'a [TransferFunction]),
    Owned(Vec<TransferFunction>),
}

impl StageKernels<'_> {
    pub fn as_slice(&self) -> &[TransferFunction] {
        match self {
            StageKernels::Shared(k) => k,
            StageKernels::Owned(k) => k,
        }
    }
}
