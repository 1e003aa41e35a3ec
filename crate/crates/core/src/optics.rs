//! Scalar wavefields and the linear free-space operators acting on them.
//!
//! Lengths are expressed in wavelengths unless a [`GridSpec`] says otherwise.
//! Both [`propagate`] and [`shift`] work on a 2x zero-padded grid and crop
//! back to the original window, so their adjoints are exact: the adjoint of
//! propagation uses the conjugated transfer function and the adjoint of a
//! shift is the opposite shift.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, frequency};

/// Sampling of a square field: `n x n` samples spaced by `pitch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub pitch: f64,
    pub wavelength: f64,
}

impl GridSpec {
    pub fn new(n: usize, pitch: f64, wavelength: f64) -> Result<Self> {
        let grid = GridSpec { n, pitch, wavelength };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n must be even and at least 2, got {}",
                self.n
            )));
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "pitch must be positive, got {}",
                self.pitch
            )));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        Ok(())
    }

    /// Side of the padded computational window.
    pub fn padded(&self) -> usize {
        2 * self.n
    }

    /// Physical edge length of the field window.
    pub fn aperture(&self) -> f64 {
        self.n as f64 * self.pitch
    }

    /// Coordinate of the centre of sample `j` along either axis; the window is
    /// centred on the optical axis.
    pub fn coord(&self, j: usize) -> f64 {
        (j as f64 + 0.5 - self.n as f64 / 2.0) * self.pitch
    }

    /// Largest lateral shift magnitude accepted by [`shift`].
    pub fn max_shift(&self) -> f64 {
        self.aperture() / 4.0
    }

    fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                expected_n: self.n,
                expected_pitch: self.pitch,
                found_n: other.n,
                found_pitch: other.pitch,
            });
        }
        Ok(())
    }
}

/// Complex field sampled on a [`GridSpec`]; row-major, row index along +y,
/// column index along +x.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: GridSpec) -> Self {
        ComplexField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.n * grid.n],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n * grid.n {
            return Err(Error::Dimension(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.n * grid.n
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Dimension("field values must be finite".into()));
        }
        Ok(ComplexField { grid, values })
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let n = grid.n;
        let mut values = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                values.push(f(x, y));
            }
        }
        ComplexField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn at(&self, x: usize, y: usize) -> Complex64 {
        self.values[y * self.grid.n + x]
    }

    /// Standard inner product `sum(conj(self) * other)`.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scaled(&self, s: Complex64) -> ComplexField {
        ComplexField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn energy(&self) -> f64 {
        energy(self)
    }
}

/// Relative L2 distance `|a - b| / |b|` between two sample vectors.
pub fn relative_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    if den == 0.0 {
        return num.sqrt();
    }
    (num / den).sqrt()
}

/// Integrated power `sum |u|^2 * pitch^2`.
pub fn energy(field: &ComplexField) -> f64 {
    let p2 = field.grid.pitch * field.grid.pitch;
    field.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * p2
}

/// Band-limited angular-spectrum kernel for one propagation distance,
/// sampled on the padded frequency grid.
#[derive(Debug, Clone)]
pub struct TransferFunction {
    grid: GridSpec,
    distance: f64,
    values: Vec<Complex64>,
}

impl TransferFunction {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    /// Kernel samples, kx-major on the `2n x 2n` frequency grid.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Bandwidth limit per frequency axis for this distance.
    pub fn band_limit(&self) -> f64 {
        band_limit(&self.grid, self.distance)
    }
}

fn band_limit(grid: &GridSpec, z: f64) -> f64 {
    let m = grid.padded() as f64;
    let w = 2.0 * z / (m * grid.pitch);
    1.0 / (grid.wavelength * (w * w + 1.0).sqrt())
}

/// Builds `H(fx, fy) = exp(i 2 pi z sqrt(1/lambda^2 - fx^2 - fy^2))` with
/// evanescent and aliasing-prone components zeroed. `z = 0` yields the
/// identity kernel.
pub fn make_transfer_function(grid: &GridSpec, z: f64) -> TransferFunction {
    assert!(z.is_finite(), "propagation distance must be finite");
    let m = grid.padded();
    if z == 0.0 {
        return TransferFunction {
            grid: *grid,
            distance: z,
            values: vec![Complex64::new(1.0, 0.0); m * m],
        };
    }
    let inv_l2 = 1.0 / (grid.wavelength * grid.wavelength);
    let limit = band_limit(grid, z);
    let freqs: Vec<f64> = (0..m).map(|k| frequency(k, m, grid.pitch)).collect();
    let mut values = vec![Complex64::new(0.0, 0.0); m * m];
    for (kx, &fx) in freqs.iter().enumerate() {
        if fx.abs() > limit {
            continue;
        }
        for (ky, &fy) in freqs.iter().enumerate() {
            let arg = inv_l2 - fx * fx - fy * fy;
            if fy.abs() > limit || arg < 0.0 {
                continue;
            }
            values[kx * m + ky] = Complex64::from_polar(1.0, 2.0 * PI * z * arg.sqrt());
        }
    }
    TransferFunction {
        grid: *grid,
        distance: z,
        values,
    }
}

fn filter(field: &ComplexField, h: &TransferFunction, conjugate: bool) -> Result<ComplexField> {
    field.grid.ensure_same(&h.grid)?;
    let n = field.grid.n;
    let plan = spectral::plan(field.grid.padded());
    let mut spec = plan.forward_padded(&field.values, n);
    if conjugate {
        spec.iter_mut().zip(&h.values).for_each(|(s, k)| *s *= k.conj());
    } else {
        spec.iter_mut().zip(&h.values).for_each(|(s, k)| *s *= k);
    }
    Ok(ComplexField {
        grid: field.grid,
        values: plan.inverse_cropped(spec, n),
    })
}

/// Free-space propagation: pad, transform, multiply by `h`, invert, crop.
pub fn propagate(field: &ComplexField, h: &TransferFunction) -> Result<ComplexField> {
    filter(field, h, false)
}

/// Adjoint of [`propagate`] for the inner product `sum(conj(a) * b)`.
pub fn adjoint_propagate(field: &ComplexField, h: &TransferFunction) -> Result<ComplexField> {
    filter(field, h, true)
}

/// Sub-pixel lateral translation by `(dx, dy)` via the Fourier shift theorem
/// on the padded grid. A zero shift returns the field unchanged.
pub fn shift(field: &ComplexField, dx: f64, dy: f64) -> Result<ComplexField> {
    let grid = field.grid;
    let limit = grid.max_shift();
    if !(dx.is_finite() && dy.is_finite()) || dx.abs() >= limit || dy.abs() >= limit {
        return Err(Error::ShiftOutOfRange { dx, dy, limit });
    }
    if dx == 0.0 && dy == 0.0 {
        return Ok(field.clone());
    }
    let n = grid.n;
    let m = grid.padded();
    let ramp = |d: f64| -> Vec<Complex64> {
        (0..m)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * frequency(k, m, grid.pitch) * d))
            .collect()
    };
    let ex = ramp(dx);
    let ey = ramp(dy);
    let plan = spectral::plan(m);
    let mut spec = plan.forward_padded(&field.values, n);
    for (kx, row) in spec.chunks_exact_mut(m).enumerate() {
        let px = ex[kx];
        for (s, py) in row.iter_mut().zip(&ey) {
            *s *= px * py;
        }
    }
    Ok(ComplexField {
        grid,
        values: plan.inverse_cropped(spec, n),
    })
}

/// Adjoint of [`shift`]: the opposite translation.
pub fn adjoint_shift(field: &ComplexField, dx: f64, dy: f64) -> Result<ComplexField> {
    shift(field, -dx, -dy)
}
