//! Forward channel model: demodulated SFCW phasors and two-tone signature
//! waveform phasors for every propagation path, plus phase-jitter injection.
//!
//! Demodulating a pure tone against a local replica leaves a time-independent
//! phasor, so the simulator emits those phasors directly instead of sampling
//! waveforms.

use std::f64::consts::PI;
use std::io::{self, Read, Write};

use ndarray::{Array3, Axis};
use num_complex::{Complex32, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{PropagationPath, Scenario, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("SW bands overlap SFCW: need f_a < f_a+delta < f_b < f_b+delta < f1 (got f_a={f_a}, f_b={f_b}, delta={delta}, f1={f1})")]
    BandOverlap { f_a: f64, f_b: f64, delta: f64, f1: f64 },
    #[error("invalid SFCW specification: {0}")]
    InvalidSfcw(String),
}

/// Stepped-frequency comb `f_k = f1 + k * delta`, `k = 0..num_freqs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfcwSpec {
    pub f1: f64,
    pub num_freqs: usize,
    pub delta: f64,
}

impl SfcwSpec {
    pub fn new(f1: f64, num_freqs: usize, delta: f64) -> Result<Self, SignalError> {
        let spec = Self { f1, num_freqs, delta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.f1 > 0.0 && self.f1.is_finite()) {
            return Err(SignalError::InvalidSfcw(format!("f1 must be positive, got {}", self.f1)));
        }
        if self.num_freqs < 2 {
            return Err(SignalError::InvalidSfcw("need at least two tones".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(SignalError::InvalidSfcw(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }

    pub fn freq(&self, k: usize) -> f64 {
        self.f1 + k as f64 * self.delta
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.num_freqs).map(|k| self.freq(k)).collect()
    }

    pub fn f_last(&self) -> f64 {
        self.freq(self.num_freqs - 1)
    }

    /// `(f1 + fK) / 2`.
    pub fn center(&self) -> f64 {
        0.5 * (self.f1 + self.f_last())
    }
}

/// Two-tone signature waveforms of the representative antennas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwSpec {
    pub f_a: f64,
    pub f_b: f64,
    pub delta: f64,
}

impl SwSpec {
    /// Places both signatures just below the SFCW comb: `f_b = f1 - 2 delta`,
    /// `f_a = f1 - 4 delta`.
    pub fn below(sfcw: &SfcwSpec) -> Self {
        Self {
            f_a: sfcw.f1 - 4.0 * sfcw.delta,
            f_b: sfcw.f1 - 2.0 * sfcw.delta,
            delta: sfcw.delta,
        }
    }

    pub fn validate(&self, sfcw: &SfcwSpec) -> Result<(), SignalError> {
        let ordered = self.delta > 0.0
            && self.f_a < self.f_a + self.delta
            && self.f_a + self.delta < self.f_b
            && self.f_b < self.f_b + self.delta
            && self.f_b + self.delta < sfcw.f1;
        if ordered {
            Ok(())
        } else {
            Err(SignalError::BandOverlap {
                f_a: self.f_a,
                f_b: self.f_b,
                delta: self.delta,
                f1: sfcw.f1,
            })
        }
    }
}

/// Demodulated phasors for every path, receive antenna and tone.
#[derive(Debug, Clone, PartialEq)]
pub struct DemodulatedSignal {
    /// `[path][rx][freq]`
    pub sfcw: Array3<Complex64>,
    /// `[path][rx][tone]` for representative antenna a.
    pub sw_alpha: Array3<Complex64>,
    /// `[path][rx][tone]` for representative antenna b.
    pub sw_beta: Array3<Complex64>,
    /// Clock-gap estimate the SFCW phasors were demodulated against.
    pub sigma_tilde_used: f64,
}

impl DemodulatedSignal {
    pub fn num_paths(&self) -> usize {
        self.sfcw.len_of(Axis(0))
    }

    pub fn num_rx(&self) -> usize {
        self.sfcw.len_of(Axis(1))
    }
}

/// `exp(j 2 pi f t)`. The integer number of cycles is removed using the exact
/// rounding error of the product, so the phase stays accurate to ~1e-16 cycles
/// even when `f t` runs into the thousands.
#[inline]
pub(crate) fn cis_cycles(f: f64, t: f64) -> Complex64 {
    let cycles = f * t;
    let err = f.mul_add(t, -cycles);
    let frac = (cycles - cycles.round()) + err;
    Complex64::from_polar(1.0, 2.0 * PI * frac)
}

/// SFCW phasors `y[l][m][k] = Gamma_l * sum_n exp(j 2 pi f_k (sigma - sigma_tilde - tau_nm))`.
pub fn simulate_sfcw(scn: &Scenario, spec: &SfcwSpec, sigma_tilde: f64) -> Array3<Complex64> {
    let paths = scn.paths();
    let freqs = spec.freqs();
    let m_count = scn.sv.len();
    let mut out = Array3::<Complex64>::zeros((paths.len(), m_count, freqs.len()));
    for (l, path) in paths.iter().enumerate() {
        let images: Vec<Vec3> = scn.tv.points.iter().map(|p| path.image_of(p)).collect();
        let gamma = path.gamma();
        let rows: Vec<Vec<Complex64>> = scn
            .sv
            .points
            .par_iter()
            .map(|rx| {
                let mut row = vec![Complex64::new(0.0, 0.0); freqs.len()];
                for src in &images {
                    let offset = scn.sigma - sigma_tilde - (src - rx).norm() / crate::geometry::SPEED_OF_LIGHT;
                    for (acc, f) in row.iter_mut().zip(&freqs) {
                        *acc += cis_cycles(*f, offset);
                    }
                }
                row
            })
            .collect();
        for (m, row) in rows.into_iter().enumerate() {
            for (k, v) in row.into_iter().enumerate() {
                out[[l, m, k]] = gamma * v;
            }
        }
    }
    out
}

/// Signature-waveform phasors `(alpha, beta)`, each `[path][rx][2]`.
pub fn simulate_sw(
    scn: &Scenario,
    sfcw: &SfcwSpec,
    spec: &SwSpec,
) -> Result<(Array3<Complex64>, Array3<Complex64>), SignalError> {
    spec.validate(sfcw)?;
    let paths = scn.paths();
    let (rep_a, rep_b) = scn.rep_points();
    let tones = |path: &PropagationPath, tx: &Vec3, f0: f64| -> Vec<[Complex64; 2]> {
        let gamma = path.gamma();
        scn.sv
            .points
            .iter()
            .map(|rx| {
                let offset = scn.sigma - path.delay(tx, rx);
                [
                    gamma * cis_cycles(f0, offset),
                    gamma * cis_cycles(f0 + spec.delta, offset),
                ]
            })
            .collect()
    };
    let shape = (paths.len(), scn.sv.len(), 2);
    let mut alpha = Array3::zeros(shape);
    let mut beta = Array3::zeros(shape);
    for (l, path) in paths.iter().enumerate() {
        for (m, pair) in tones(path, &rep_a, spec.f_a).into_iter().enumerate() {
            alpha[[l, m, 0]] = pair[0];
            alpha[[l, m, 1]] = pair[1];
        }
        for (m, pair) in tones(path, &rep_b, spec.f_b).into_iter().enumerate() {
            beta[[l, m, 0]] = pair[0];
            beta[[l, m, 1]] = pair[1];
        }
    }
    Ok((alpha, beta))
}

/// Noiseless SFCW and SW phasors for the whole scenario.
pub fn simulate(
    scn: &Scenario,
    sfcw: &SfcwSpec,
    sw: &SwSpec,
    sigma_tilde: f64,
) -> Result<DemodulatedSignal, SignalError> {
    let (sw_alpha, sw_beta) = simulate_sw(scn, sfcw, sw)?;
    Ok(DemodulatedSignal {
        sfcw: simulate_sfcw(scn, sfcw, sigma_tilde),
        sw_alpha,
        sw_beta,
        sigma_tilde_used: sigma_tilde,
    })
}

/// Multiplies every entry by `exp(j eps)`, `eps ~ N(0, sigma_z^2)` i.i.d.
///
/// Each entry draws from its own position of a ChaCha stream keyed by
/// `(seed, tensor, flat index)`, so the result does not depend on how the
/// work is split across threads.
pub fn add_phase_noise(sig: &DemodulatedSignal, sigma_z: f64, seed: u64) -> DemodulatedSignal {
    let mut out = sig.clone();
    if sigma_z == 0.0 {
        return out;
    }
    jitter_tensor(&mut out.sfcw, sigma_z, seed, 0);
    jitter_tensor(&mut out.sw_alpha, sigma_z, seed, 1);
    jitter_tensor(&mut out.sw_beta, sigma_z, seed, 2);
    out
}

/// Phase errors drawn for `count` entries of stream `stream`; entry `i` is
/// the one `add_phase_noise` applies to flat index `i` of that tensor.
pub fn phase_errors(sigma_z: f64, seed: u64, stream: u64, count: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma_z).expect("sigma_z must be finite and non-negative");
    let base = stream_rng(seed, stream);
    (0..count)
        .into_par_iter()
        .map(|i| draw_at(&base, &normal, i))
        .collect()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
fn draw_at(base: &ChaCha8Rng, normal: &Normal<f64>, index: usize) -> f64 {
    let mut rng = base.clone();
    // 64 words per entry leaves ample room for the sampler's rejection loop
    rng.set_word_pos(index as u128 * 64);
    normal.sample(&mut rng)
}

fn jitter_tensor(t: &mut Array3<Complex64>, sigma_z: f64, seed: u64, stream: u64) {
    let normal = Normal::new(0.0, sigma_z).expect("sigma_z must be finite and non-negative");
    let base = stream_rng(seed, stream);
    let data = t.as_slice_mut().expect("signal tensors are contiguous");
    data.par_iter_mut().enumerate().for_each(|(i, v)| {
        let eps = draw_at(&base, &normal, i);
        *v *= Complex64::from_polar(1.0, eps);
    });
}

/// Small-noise phase jitter of a unit phasor under additive complex white
/// noise at the given SNR: `sqrt(1 / (2 * 10^(snr/10)))` radians.
pub fn snr_to_phase_std(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        return 0.0;
    }
    (1.0 / (2.0 * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Magic bytes of the binary tensor dump.
pub const TENSOR_MAGIC: &[u8; 8] = b"VPOSTNSR";
pub const TENSOR_VERSION: u32 = 1;

/// Writes a complex tensor as a 32-byte header followed by little-endian
/// `complex64` entries (f32 real, f32 imaginary) in row-major order.
///
/// Header: magic (8 bytes), version u32, rank u32 (= 3), three u32 dims,
/// one reserved u32. All integers little-endian.
pub fn write_tensor<W: Write>(mut w: W, t: &Array3<Complex64>) -> io::Result<()> {
    let (d0, d1, d2) = t.dim();
    let mut header = Vec::with_capacity(32);
    header.extend_from_slice(TENSOR_MAGIC);
    header.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    header.extend_from_slice(&3u32.to_le_bytes());
    for d in [d0, d1, d2] {
        let d = u32::try_from(d).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"))?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    header.extend_from_slice(&0u32.to_le_bytes());
    debug_assert_eq!(header.len(), 32);
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(t.len() * 8);
    for v in t.iter() {
        let c = Complex32::new(v.re as f32, v.im as f32);
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_tensor<R: Read>(mut r: R) -> io::Result<Array3<Complex32>> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    if &header[0..8] != TENSOR_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    if word(8) != TENSOR_VERSION {
        return Err(bad("unsupported version"));
    }
    if word(12) != 3 {
        return Err(bad("unsupported rank"));
    }
    let dims = (word(16) as usize, word(20) as usize, word(24) as usize);
    let n = dims.0 * dims.1 * dims.2;
    let mut raw = vec![0u8; n * 8];
    r.read_exact(&mut raw)?;
    let data: Vec<Complex32> = raw
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..8].try_into().unwrap()),
            )
        })
        .collect();
    Array3::from_shape_vec(dims, data).map_err(|e| bad(&e.to_string()))
}
