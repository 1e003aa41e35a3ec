//! Zero-padded 2D FFT pipeline shared by propagation and shifting.
//!
//! A field of `n x n` samples is embedded at the centre of an `m x m` zero
//! grid (`m = 2n`). The spectrum is kept in kx-major layout
//! (`index = kx * m + ky`) so that the inverse can skip the rows that the
//! final crop discards. The forward/inverse pair is unitary overall; the
//! `1/m^2` factor is applied once, at the crop.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Plan {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

pub(crate) fn plan(m: usize) -> Arc<Plan> {
    static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Plan>>>> = OnceLock::new();
    let mut plans = PLANS
        .get_or_init(|| Mutex::new(HashMap::new()))
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    plans
        .entry(m)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plan {
                m,
                fwd: planner.plan_fft_forward(m),
                inv: planner.plan_fft_inverse(m),
            })
        })
        .clone()
}

/// Signed FFT frequency of bin `k` on an `m`-point axis with sample spacing `pitch`.
pub(crate) fn frequency(k: usize, m: usize, pitch: f64) -> f64 {
    let k = if k < m / 2 { k as f64 } else { k as f64 - m as f64 };
    k / (m as f64 * pitch)
}

impl Plan {
    /// Pads `values` (row-major `n x n`) into the centre of the `m x m` grid and
    /// returns its spectrum in kx-major layout.
    pub(crate) fn forward_padded(&self, values: &[Complex64], n: usize) -> Vec<Complex64> {
        let m = self.m;
        debug_assert_eq!(values.len(), n * n);
        let s = (m - n) / 2;

        let mut rows = vec![Complex64::new(0.0, 0.0); n * m];
        for (y, row) in rows.chunks_exact_mut(m).enumerate() {
            row[s..s + n].copy_from_slice(&values[y * n..(y + 1) * n]);
        }
        self.fwd.process(&mut rows);

        let mut spec = vec![Complex64::new(0.0, 0.0); m * m];
        for (y, row) in rows.chunks_exact(m).enumerate() {
            for (kx, v) in row.iter().enumerate() {
                spec[kx * m + s + y] = *v;
            }
        }
        self.fwd.process(&mut spec);
        spec
    }

    /// Inverse of [`Plan::forward_padded`]: transforms back and crops the centre
    /// `n x n` window, applying the unitary normalisation.
    pub(crate) fn inverse_cropped(&self, mut spec: Vec<Complex64>, n: usize) -> Vec<Complex64> {
        let m = self.m;
        debug_assert_eq!(spec.len(), m * m);
        let s = (m - n) / 2;
        self.inv.process(&mut spec);

        let mut rows = vec![Complex64::new(0.0, 0.0); n * m];
        for (y, row) in rows.chunks_exact_mut(m).enumerate() {
            for (kx, v) in row.iter_mut().enumerate() {
                *v = spec[kx * m + s + y];
            }
        }
        self.inv.process(&mut rows);

        let scale = 1.0 / (m * m) as f64;
        let mut out = Vec::with_capacity(n * n);
        for row in rows.chunks_exact(m) {
            out.extend(row[s..s + n].iter().map(|v| v * scale));
        }
        out
    }
}
