//! Piecewise-constant control fields and their two parameterizations.
//!
//! Samples are indexed at interval right endpoints: sample `i` (0-based)
//! holds the field on `(t_i, t_{i+1}]` and is evaluated at `t_{i+1} = (i+1)·dt`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::system::{transition_frequency_bounds, QuantumSystem};

/// Default number of spectral terms in the choice-(i) initial field.
pub const DEFAULT_INIT_COMPONENTS: usize = 20;

/// Default envelope width as a fraction of the duration.
pub const DEFAULT_ZETA_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub duration: f64,
    pub intervals: usize,
}

impl FieldGrid {
    pub fn new(duration: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidParameter("grid needs at least one interval".into()));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "duration must be positive and finite, got {duration}"
            )));
        }
        Ok(Self {
            duration,
            intervals,
        })
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.intervals as f64
    }

    /// Right endpoint of the interval holding sample `i`.
    pub fn sample_time(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dt()
    }

    pub fn sample_times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.intervals).map(|i| self.sample_time(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseField {
    pub grid: FieldGrid,
    pub samples: Vec<f64>,
}

impl PiecewiseField {
    pub fn new(grid: FieldGrid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.intervals {
            return Err(Error::DimensionMismatch {
                expected: grid.intervals,
                found: samples.len(),
            });
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("field samples must be finite".into()));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: FieldGrid) -> Self {
        Self {
            grid,
            samples: vec![0.0; grid.intervals],
        }
    }

    pub fn constant(grid: FieldGrid, value: f64) -> Self {
        Self {
            grid,
            samples: vec![value; grid.intervals],
        }
    }

    pub fn fluence(&self) -> f64 {
        fluence(self)
    }

    /// CSV with columns `l, t_l, epsilon_l` (l is 1-based).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["l", "t_l", "epsilon_l"])?;
        for (i, (t, e)) in self.grid.sample_times().zip(&self.samples).enumerate() {
            w.write_record([(i + 1).to_string(), format!("{t:e}"), format!("{e:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format of [`PiecewiseField::write_csv`]; the grid is rebuilt from the last row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut samples = Vec::new();
        let mut last_time = 0.0;
        for row in r.deserialize() {
            let (l, t, e): (usize, f64, f64) = row?;
            if l != samples.len() + 1 {
                return Err(Error::InvalidParameter(format!(
                    "field rows must be consecutive from 1, found l = {l}"
                )));
            }
            samples.push(e);
            last_time = t;
        }
        let grid = FieldGrid::new(last_time, samples.len())?;
        Self::new(grid, samples)
    }
}

/// A(t) = A₀ exp(−(t − T/2)² / 2ζ²)
pub fn gaussian_envelope(t: f64, a0: f64, zeta: f64, duration: f64) -> f64 {
    let x = t - 0.5 * duration;
    a0 * (-(x * x) / (2.0 * zeta * zeta)).exp()
}

/// Discrete fluence Σ ε_l² Δt.
pub fn fluence(field: &PiecewiseField) -> f64 {
    field.samples.iter().map(|e| e * e).sum::<f64>() * field.grid.dt()
}

fn check_zeta(zeta: f64) -> Result<()> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "envelope width must be positive, got {zeta}"
        )));
    }
    Ok(())
}

fn check_fluence_target(f0: f64) -> Result<()> {
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target fluence must be positive, got {f0}"
        )));
    }
    Ok(())
}

/// Free-sample initial field: a Gaussian-enveloped sum of `components`
/// cosines with frequencies uniform on the system's transition band and
/// amplitudes uniform on [0, 1], rescaled to fluence `f0`.
pub fn init_field_choice_i(
    system: &QuantumSystem,
    grid: FieldGrid,
    components: usize,
    zeta: f64,
    f0: f64,
    seed: u64,
) -> Result<PiecewiseField> {
    if components == 0 {
        return Err(Error::InvalidParameter("need at least one component".into()));
    }
    check_zeta(zeta)?;
    check_fluence_target(f0)?;
    let (omega_min, omega_max) = transition_frequency_bounds(system)?;
    let mut freq_rng = stream_rng(seed, Stream::Frequencies);
    let mut amp_rng = stream_rng(seed, Stream::Amplitudes);
    let frequencies: Vec<f64> = (0..components)
        .map(|_| freq_rng.random_range(omega_min..=omega_max))
        .collect();
    let amplitudes: Vec<f64> = (0..components)
        .map(|_| amp_rng.random_range(0.0..=1.0))
        .collect();

    let samples: Vec<f64> = grid
        .sample_times()
        .map(|t| {
            let carrier: f64 = amplitudes
                .iter()
                .zip(&frequencies)
                .map(|(a, w)| a * (w * t).cos())
                .sum();
            gaussian_envelope(t, 1.0, zeta, grid.duration) * carrier
        })
        .collect();
    let mut field = PiecewiseField { grid, samples };
    let raw = fluence(&field);
    if !(raw > 0.0) {
        return Err(Error::ZeroField);
    }
    let scale = (f0 / raw).sqrt();
    field.samples.iter_mut().for_each(|e| *e *= scale);
    Ok(field)
}

/// Field of fixed-amplitude spectral components with adjustable phases:
/// ε(t) = A(t) Σ_m cos(ω_m t + φ_m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPhaseField {
    pub grid: FieldGrid,
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
    /// Envelope peak A₀.
    pub amplitude: f64,
    /// Envelope width ζ.
    pub zeta: f64,
}

impl SpectralPhaseField {
    pub fn new(
        grid: FieldGrid,
        frequencies: Vec<f64>,
        phases: Vec<f64>,
        amplitude: f64,
        zeta: f64,
    ) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidParameter("need at least one component".into()));
        }
        if frequencies.len() != phases.len() {
            return Err(Error::DimensionMismatch {
                expected: frequencies.len(),
                found: phases.len(),
            });
        }
        if frequencies.iter().chain(&phases).any(|x| !x.is_finite()) || !amplitude.is_finite() {
            return Err(Error::InvalidParameter(
                "spectral parameters must be finite".into(),
            ));
        }
        check_zeta(zeta)?;
        Ok(Self {
            grid,
            frequencies,
            phases,
            amplitude,
            zeta,
        })
    }

    /// Solves A₀ once so the field at `phases` has fluence `f0`.
    pub fn calibrated(
        grid: FieldGrid,
        frequencies: Vec<f64>,
        phases: Vec<f64>,
        zeta: f64,
        f0: f64,
    ) -> Result<Self> {
        check_fluence_target(f0)?;
        let unit = Self::new(grid, frequencies, phases, 1.0, zeta)?;
        let raw = fluence(&synthesize_choice_ii(&unit));
        if !(raw > 0.0) {
            return Err(Error::ZeroField);
        }
        Ok(Self {
            amplitude: (f0 / raw).sqrt(),
            ..unit
        })
    }

    pub fn components(&self) -> usize {
        self.frequencies.len()
    }

    pub fn with_phases(&self, phases: &[f64]) -> Self {
        debug_assert_eq!(phases.len(), self.components());
        Self {
            phases: phases.to_vec(),
            ..self.clone()
        }
    }

    fn envelope_at(&self, t: f64) -> f64 {
        gaussian_envelope(t, self.amplitude, self.zeta, self.grid.duration)
    }
}

/// Independent uniform phases on [0, 2π].
pub fn random_phases(components: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::Phases);
    (0..components).map(|_| rng.random_range(0.0..=TAU)).collect()
}

pub fn synthesize_choice_ii(spec: &SpectralPhaseField) -> PiecewiseField {
    let samples = spec
        .grid
        .sample_times()
        .map(|t| {
            let carrier: f64 = spec
                .frequencies
                .iter()
                .zip(&spec.phases)
                .map(|(w, p)| (w * t + p).cos())
                .sum();
            spec.envelope_at(t) * carrier
        })
        .collect();
    PiecewiseField {
        grid: spec.grid,
        samples,
    }
}

/// ∂ε(t_l)/∂φ_m = −A(t_l) sin(ω_m t_l + φ_m), for 0-based component `m`.
pub fn phase_sensitivity(spec: &SpectralPhaseField, m: usize) -> Result<PiecewiseField> {
    if m >= spec.components() {
        return Err(Error::IndexOutOfRange {
            index: m,
            len: spec.components(),
        });
    }
    let (w, p) = (spec.frequencies[m], spec.phases[m]);
    let samples = spec
        .grid
        .sample_times()
        .map(|t| -spec.envelope_at(t) * (w * t + p).sin())
        .collect();
    Ok(PiecewiseField {
        grid: spec.grid,
        samples,
    })
}

/// Carrier tables A(t_l) cos(ω_m t_l) and A(t_l) sin(ω_m t_l) for a fixed
/// template, so that synthesis and phase sensitivities need no trig calls.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    intervals: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(spec: &SpectralPhaseField) -> Self {
        let intervals = spec.grid.intervals;
        let mut cos = Vec::with_capacity(spec.components() * intervals);
        let mut sin = Vec::with_capacity(spec.components() * intervals);
        for &w in &spec.frequencies {
            for t in spec.grid.sample_times() {
                let a = spec.envelope_at(t);
                let (s, c) = (w * t).sin_cos();
                cos.push(a * c);
                sin.push(a * s);
            }
        }
        Self { intervals, cos, sin }
    }

    fn rows(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.cos.chunks(self.intervals).zip(self.sin.chunks(self.intervals))
    }

    pub fn synthesize(&self, phases: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.intervals];
        for ((c, s), p) in self.rows().zip(phases) {
            let (sp, cp) = p.sin_cos();
            for (o, (ci, si)) in out.iter_mut().zip(c.iter().zip(s)) {
                *o += ci * cp - si * sp;
            }
        }
        out
    }

    /// Σ_l (∂ε_l/∂φ_m) g_l for every component m.
    pub fn contract(&self, phases: &[f64], field_grad: &[f64]) -> Vec<f64> {
        self.rows()
            .zip(phases)
            .map(|((c, s), p)| {
                let (sp, cp) = p.sin_cos();
                -c.iter()
                    .zip(s)
                    .zip(field_grad)
                    .map(|((ci, si), g)| (si * cp + ci * sp) * g)
                    .sum::<f64>()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::build_rotor_system;
    use std::f64::consts::PI;

    fn grid() -> FieldGrid {
        FieldGrid::new(50.0, 511).unwrap()
    }

    #[test]
    fn envelope_values() {
        let t_final = 50.0;
        assert_eq!(gaussian_envelope(25.0, 3.0, 5.0, t_final), 3.0);
        let edge = gaussian_envelope(0.0, 2.0, t_final / 10.0, t_final);
        assert!((edge - 2.0 * (-12.5f64).exp()).abs() < 1e-18);
        for t in [0.0, 3.3, 17.0, 24.9] {
            let a = gaussian_envelope(t, 1.5, 4.0, t_final);
            let b = gaussian_envelope(t_final - t, 1.5, 4.0, t_final);
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn fluence_basics() {
        assert_eq!(fluence(&PiecewiseField::zeros(grid())), 0.0);
        let f = PiecewiseField::constant(grid(), 0.3);
        assert!((fluence(&f) - 0.09 * 50.0).abs() < 1e-12);
    }

    #[test]
    fn grid_geometry() {
        let g = FieldGrid::new(50.0, 79).unwrap();
        assert!((g.dt() * 79.0 - 50.0).abs() < 1e-12);
        assert!((g.sample_time(78) - 50.0).abs() < 1e-12);
        assert!(FieldGrid::new(50.0, 0).is_err());
        assert!(FieldGrid::new(-1.0, 3).is_err());
    }

    #[test]
    fn choice_i_normalized_and_deterministic() {
        let sys = build_rotor_system(6, 1.0, 0.5, 0.0).unwrap();
        let a = init_field_choice_i(&sys, grid(), 20, 5.0, 10.0, 17).unwrap();
        let b = init_field_choice_i(&sys, grid(), 20, 5.0, 10.0, 17).unwrap();
        assert_eq!(a, b);
        assert!((fluence(&a) - 10.0).abs() / 10.0 < 1e-9);
        let c = init_field_choice_i(&sys, grid(), 20, 5.0, 10.0, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn choice_i_edges_suppressed() {
        let sys = build_rotor_system(6, 1.0, 0.5, 0.0).unwrap();
        let g = grid();
        let zeta = g.duration / 10.0;
        let field = init_field_choice_i(&sys, g, 20, zeta, 10.0, 4).unwrap();
        // rebuild the unnormalized draw to recover A0
        let (lo, hi) = transition_frequency_bounds(&sys).unwrap();
        let mut fr = stream_rng(4, Stream::Frequencies);
        let mut ar = stream_rng(4, Stream::Amplitudes);
        let w: Vec<f64> = (0..20).map(|_| fr.random_range(lo..=hi)).collect();
        let a: Vec<f64> = (0..20).map(|_| ar.random_range(0.0..=1.0)).collect();
        let unit = PiecewiseField {
            grid: g,
            samples: g
                .sample_times()
                .map(|t| {
                    gaussian_envelope(t, 1.0, zeta, g.duration)
                        * a.iter().zip(&w).map(|(a, w)| a * (w * t).cos()).sum::<f64>()
                })
                .collect(),
        };
        let a0 = (10.0 / fluence(&unit)).sqrt();
        let bound = a0 * 20.0 * (-(g.duration / 2.0 - g.dt()).powi(2) / (2.0 * zeta * zeta)).exp();
        assert!(field.samples[0].abs() <= bound);
        let peak = field.samples.iter().map(|e| e.abs()).fold(0.0, f64::max);
        assert!(field.samples[0].abs() < 1e-3 * peak);
        assert!(field.samples[g.intervals - 1].abs() < 1e-3 * peak);
    }

    #[test]
    fn choice_i_degenerate_system() {
        let sys = QuantumSystem::new(
            crate::numerics::real_diagonal(&[1.0, 1.0]),
            crate::numerics::real_diagonal(&[0.0, 0.0]),
        )
        .unwrap();
        assert!(init_field_choice_i(&sys, grid(), 20, 5.0, 1.0, 0).is_err());
    }

    #[test]
    fn choice_ii_single_dc_component() {
        let spec = SpectralPhaseField::new(grid(), vec![0.0], vec![0.0], 2.0, 5.0).unwrap();
        let f = synthesize_choice_ii(&spec);
        for (t, e) in grid().sample_times().zip(&f.samples) {
            assert!((e - gaussian_envelope(t, 2.0, 5.0, 50.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn choice_ii_phase_periodicity_and_sign() {
        let freqs = vec![1.0, 2.0, 3.0];
        let phases = vec![0.3, 1.1, 4.0];
        let spec = SpectralPhaseField::new(grid(), freqs.clone(), phases.clone(), 1.0, 5.0).unwrap();
        let shifted: Vec<f64> = phases.iter().map(|p| p + TAU).collect();
        let a = synthesize_choice_ii(&spec);
        let b = synthesize_choice_ii(&spec.with_phases(&shifted));
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x - y).abs() < 1e-12);
        }
        let one = SpectralPhaseField::new(grid(), vec![2.0], vec![0.0], 1.0, 5.0).unwrap();
        let flipped = synthesize_choice_ii(&one.with_phases(&[PI]));
        for (x, y) in synthesize_choice_ii(&one).samples.iter().zip(&flipped.samples) {
            assert!((x + y).abs() < 1e-12);
        }
    }

    #[test]
    fn sensitivity_closed_forms() {
        let spec = SpectralPhaseField::new(grid(), vec![0.0, 0.0], vec![0.0, PI / 2.0], 1.7, 5.0).unwrap();
        assert!(phase_sensitivity(&spec, 0).unwrap().samples.iter().all(|s| *s == 0.0));
        let s1 = phase_sensitivity(&spec, 1).unwrap();
        for (t, s) in grid().sample_times().zip(&s1.samples) {
            assert!((s + gaussian_envelope(t, 1.7, 5.0, 50.0)).abs() < 1e-15);
        }
        assert!(matches!(
            phase_sensitivity(&spec, 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn sensitivity_matches_finite_difference() {
        let freqs: Vec<f64> = (1..=6).map(f64::from).collect();
        let phases = random_phases(6, 8);
        let spec = SpectralPhaseField::new(grid(), freqs, phases.clone(), 1.3, 5.0).unwrap();
        // ω t reaches 300 here, so a smaller step is dominated by argument roundoff
        let h = 1e-5;
        for m in 0..6 {
            let mut up = phases.clone();
            let mut down = phases.clone();
            up[m] += h;
            down[m] -= h;
            let fp = synthesize_choice_ii(&spec.with_phases(&up));
            let fm = synthesize_choice_ii(&spec.with_phases(&down));
            let exact = phase_sensitivity(&spec, m).unwrap();
            for l in 0..spec.grid.intervals {
                let fd = (fp.samples[l] - fm.samples[l]) / (2.0 * h);
                assert!((fd - exact.samples[l]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn calibration_hits_target_fluence() {
        let g = FieldGrid::new(50.0, 1023).unwrap();
        let freqs: Vec<f64> = (1..=16).map(f64::from).collect();
        let spec = SpectralPhaseField::calibrated(g, freqs, random_phases(16, 1), 5.0, 1e3).unwrap();
        assert!((fluence(&synthesize_choice_ii(&spec)) - 1e3).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let sys = build_rotor_system(4, 1.0, 0.9, 0.0).unwrap();
        let g = FieldGrid::new(50.0, 64).unwrap();
        let f = init_field_choice_i(&sys, g, 5, 5.0, 2.0, 9).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("l,t_l,epsilon_l\n1,"));
        let back = PiecewiseField::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples, f.samples);
        assert!((back.grid.duration - 50.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_basis_matches_direct_synthesis() {
        let grid = FieldGrid::new(30.0, 300).unwrap();
        let freqs = vec![0.0, 0.7, 2.3, 9.1];
        let spec = SpectralPhaseField::new(grid, freqs, vec![0.3, 1.1, 4.0, 6.0], 3.0, 1.5).unwrap();
        let basis = SpectralBasis::new(&spec);
        let direct = synthesize_choice_ii(&spec);
        for (a, b) in basis.synthesize(&spec.phases).iter().zip(&direct.samples) {
            assert!((a - b).abs() < 1e-12);
        }
        let g: Vec<f64> = (0..300).map(|l| (l as f64 * 0.37).cos()).collect();
        let contracted = basis.contract(&spec.phases, &g);
        for (m, value) in contracted.iter().enumerate() {
            let sens = phase_sensitivity(&spec, m).unwrap();
            let expected: f64 = sens.samples.iter().zip(&g).map(|(a, b)| a * b).sum();
            assert!((value - expected).abs() < 1e-10);
        }
    }
}
