//! Receiver chain: IQ downconversion, constellation sampling and signal-quality metrics.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::modulator::QPSK_PHASES;
use crate::sim::Waveform;

/// EVM reported when every point sits on its cluster mean.
pub const EVM_FLOOR_DB: f64 = -200.0;

/// Complex baseband samples on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSignal {
    pub start: f64,
    pub sample_interval: f64,
    pub carrier: f64,
    pub samples: Vec<Complex64>,
}

impl IqSignal {
    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.sample_interval
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Nearest sample index to `t`, if inside the record.
    pub fn index_near(&self, t: f64) -> Option<usize> {
        let x = ((t - self.start) / self.sample_interval).round();
        (x >= 0.0 && (x as usize) < self.len()).then_some(x as usize)
    }

    /// Magnitude of the baseband signal.
    pub fn envelope(&self) -> Waveform {
        Waveform {
            label: "envelope".into(),
            start: self.start,
            sample_interval: self.sample_interval,
            samples: self.samples.iter().map(|z| z.norm()).collect(),
        }
    }

    /// Every sample multiplied by `k`.
    pub fn scaled(&self, k: Complex64) -> IqSignal {
        IqSignal { samples: self.samples.iter().map(|z| z * k).collect(), ..self.clone() }
    }
}

/// Linear-phase Kaiser-windowed sinc lowpass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowpassSpec {
    /// -6 dB point, Hz.
    pub cutoff: f64,
    /// Full transition width, Hz.
    pub transition: f64,
    /// Minimum stopband attenuation, dB.
    pub attenuation_db: f64,
}

impl LowpassSpec {
    /// Cutoff 0.45·f_c, transition 0.5·f_c, 60 dB.
    pub fn for_carrier(f_c: f64) -> LowpassSpec {
        LowpassSpec { cutoff: 0.45 * f_c, transition: 0.5 * f_c, attenuation_db: 60.0 }
    }
}

fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Odd-length taps with unity DC gain.
pub fn kaiser_lowpass(spec: &LowpassSpec, sample_rate: f64) -> Result<Vec<f64>> {
    let LowpassSpec { cutoff, transition, attenuation_db: a } = *spec;
    if !(cutoff > 0.0 && cutoff < sample_rate / 2.0 && transition > 0.0 && a > 21.0) {
        return Err(Error::Validation(format!(
            "lowpass cutoff {cutoff} Hz, transition {transition} Hz and attenuation {a} dB are not realizable at {sample_rate} Hz"
        )));
    }
    let beta = if a > 50.0 { 0.1102 * (a - 8.7) } else { 0.5842 * (a - 21.0).powf(0.4) + 0.07886 * (a - 21.0) };
    let mut n = ((a - 7.95) / (14.36 * transition / sample_rate)).ceil() as usize + 1;
    if n.is_multiple_of(2) {
        n += 1;
    }
    // The length estimate can fall short by a fraction of a dB; grow until the stopband holds.
    let stop = (cutoff + transition / 2.0) / sample_rate;
    let floor = 10f64.powf(-a / 20.0);
    loop {
        let h = kaiser_taps(n, cutoff / sample_rate, beta);
        if stop >= 0.5 || stopband_peak(&h, stop) <= floor {
            return Ok(h);
        }
        n += 2;
    }
}

fn kaiser_taps(n: usize, fc: f64, beta: f64) -> Vec<f64> {
    let m = (n - 1) as f64 / 2.0;
    let i0b = bessel_i0(beta);
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 - m;
            let sinc = if x == 0.0 { 2.0 * fc } else { (TAU * fc * x).sin() / (PI * x) };
            let r = x / m;
            sinc * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    h
}

/// Largest magnitude response on a dense grid from `stop` to Nyquist (cycles per sample).
fn stopband_peak(h: &[f64], stop: f64) -> f64 {
    let grid = 8 * h.len();
    (0..=grid)
        .map(|k| {
            let f = stop + (0.5 - stop) * k as f64 / grid as f64;
            h.iter()
                .enumerate()
                .map(|(i, v)| Complex64::from_polar(*v, -TAU * f * i as f64))
                .sum::<Complex64>()
                .norm()
        })
        .fold(0.0, f64::max)
}

/// Convolution aligned to the filter centre, zero-padded at both ends.
fn filter_same(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    let m = h.len() / 2;
    (0..x.len())
        .map(|i| {
            let lo = (i + m + 1).saturating_sub(h.len());
            let hi = (i + m).min(x.len() - 1);
            (lo..=hi).map(|j| x[j] * h[i + m - j]).sum()
        })
        .collect()
}

/// Mix to baseband at `f_c` and lowpass, scaled so `V·cos(2πf_c t + φ)` maps to `V·e^{jφ}`.
pub fn downconvert(waveform: &Waveform, f_c: f64, spec: &LowpassSpec) -> Result<IqSignal> {
    if spec.cutoff >= f_c {
        return Err(Error::Aliasing { cutoff: spec.cutoff, carrier: f_c });
    }
    let fs = 1.0 / waveform.sample_interval;
    if fs < 4.0 * f_c {
        return Err(Error::Validation(format!("sample rate {fs} Hz is below 4·f_c")));
    }
    if waveform.is_empty() {
        return Err(Error::InsufficientData("empty waveform".into()));
    }
    let h = kaiser_lowpass(spec, fs)?;
    let omega = TAU * f_c;
    let mixed: Vec<Complex64> = waveform
        .samples
        .iter()
        .enumerate()
        .map(|(i, v)| Complex64::from_polar(2.0 * v, -omega * waveform.time(i)))
        .collect();
    Ok(IqSignal {
        start: waveform.start,
        sample_interval: waveform.sample_interval,
        carrier: f_c,
        samples: filter_same(&mixed, &h),
    })
}

/// Magnitude of the analytic signal of `waveform`, for rise-time envelopes.
///
/// The record is zero-padded to at least twice its length so the ends do not
/// wrap into each other; there is no lowpass, so time resolution is one sample.
pub fn analytic_envelope(waveform: &Waveform) -> Result<Waveform> {
    let n = waveform.len();
    if n == 0 {
        return Err(Error::InsufficientData("empty waveform".into()));
    }
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = waveform.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    // Keep DC and Nyquist, double positive frequencies, drop negative ones.
    for z in &mut buf[1..len / 2] {
        *z *= 2.0;
    }
    for z in &mut buf[len / 2 + 1..] {
        *z = Complex64::new(0.0, 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let samples = buf[..n].iter().map(|z| z.norm() / len as f64).collect();
    Waveform::new(&format!("{}_envelope", waveform.label), waveform.start, waveform.sample_interval, samples)
}

/// Complex white Gaussian noise at `snr_db` below the mean sample power.
pub fn add_awgn(iq: &IqSignal, snr_db: f64, seed: u64) -> Result<IqSignal> {
    let p = iq.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / iq.len().max(1) as f64;
    if !(p > 0.0 && snr_db.is_finite()) {
        return Err(Error::Validation("noise needs a finite SNR and a nonzero signal".into()));
    }
    let sigma = (p / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = iq
        .samples
        .iter()
        .map(|z| z + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    Ok(IqSignal { samples, ..iq.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstellationPoint {
    pub symbol: usize,
    pub label: usize,
    /// Sampled value before normalization.
    pub value: Complex64,
}

/// QPSK constellation with per-label cluster means.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub points: Vec<ConstellationPoint>,
    /// Means of the raw values per label; `None` for labels without points.
    pub raw_means: [Option<Complex64>; 4],
    /// Raw values divided by this give the normalized constellation.
    pub scale: f64,
    /// Sampling offset from each symbol start, s.
    pub offset: f64,
}

impl Constellation {
    /// Build from raw points; the scale makes the mean cluster-mean magnitude 1.
    pub fn from_points(points: Vec<ConstellationPoint>, offset: f64) -> Result<Constellation> {
        let raw_means = cluster_means(&points);
        let present: Vec<Complex64> = raw_means.iter().flatten().copied().collect();
        if present.len() < 2 || points.len() < QPSK_PHASES.len() {
            return Err(Error::InsufficientData(format!(
                "{} points in {} clusters",
                points.len(),
                present.len()
            )));
        }
        let scale = present.iter().map(|m| m.norm()).sum::<f64>() / present.len() as f64;
        if !(scale > 0.0) {
            return Err(Error::InsufficientData("all cluster means are zero".into()));
        }
        Ok(Constellation { points, raw_means, scale, offset })
    }

    pub fn normalized(&self, value: Complex64) -> Complex64 {
        value / self.scale
    }

    pub fn means(&self) -> [Option<Complex64>; 4] {
        self.raw_means.map(|m| m.map(|v| v / self.scale))
    }

    /// Mean squared distance of normalized points from their cluster means.
    fn error_power(&self) -> f64 {
        let means = self.means();
        self.points
            .iter()
            .map(|p| (self.normalized(p.value) - means[p.label].expect("label has points")).norm_sqr())
            .sum::<f64>()
            / self.points.len() as f64
    }

    /// Rows `symbol_index,label,re,im` of the normalized points.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "symbol_index,label,re,im")?;
        for p in &self.points {
            let z = self.normalized(p.value);
            writeln!(out, "{},{},{:e},{:e}", p.symbol, p.label, z.re, z.im)?;
        }
        Ok(())
    }
}

fn cluster_means(points: &[ConstellationPoint]) -> [Option<Complex64>; 4] {
    let mut sum = [Complex64::new(0.0, 0.0); 4];
    let mut count = [0usize; 4];
    for p in points {
        sum[p.label] += p.value;
        count[p.label] += 1;
    }
    std::array::from_fn(|c| (count[c] > 0).then(|| sum[c] / count[c] as f64))
}

/// Mean pairwise distance between the cluster means that have points.
pub fn mean_cluster_separation(points: &[ConstellationPoint]) -> f64 {
    let means: Vec<Complex64> = cluster_means(points).iter().flatten().copied().collect();
    let mut total = 0.0;
    let mut n = 0usize;
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            total += (means[i] - means[j]).norm();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Points sampled at `offset` after each symbol start, by nearest sample.
pub fn sample_at(iq: &IqSignal, symbol_starts: &[f64], labels: &[usize], offset: f64) -> Result<Vec<ConstellationPoint>> {
    if symbol_starts.len() != labels.len() {
        return Err(Error::Validation("one label per symbol start is required".into()));
    }
    symbol_starts
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(k, (&t, &label))| {
            if label >= QPSK_PHASES.len() {
                return Err(Error::Validation(format!("label {label} outside the QPSK alphabet")));
            }
            let i = iq
                .index_near(t + offset)
                .ok_or_else(|| Error::InsufficientData(format!("symbol {k} sample at {} s outside the record", t + offset)))?;
            Ok(ConstellationPoint { symbol: k, label, value: iq.samples[i] })
        })
        .collect()
}

/// Constellation at the intra-symbol offset with the largest mean cluster separation.
///
/// Candidate offsets are the sample instants within one symbol period; ties
/// keep the earliest offset.
pub fn sample_constellation(iq: &IqSignal, symbol_starts: &[f64], symbol_period: f64, labels: &[usize]) -> Result<Constellation> {
    let distinct = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
    if distinct < 2 {
        return Err(Error::InsufficientData(format!("{distinct} distinct labels")));
    }
    let steps = (symbol_period / iq.sample_interval).round().max(1.0) as usize;
    let mut best: Option<(f64, f64, Vec<ConstellationPoint>)> = None;
    for k in 0..steps {
        let offset = k as f64 * iq.sample_interval;
        let points = sample_at(iq, symbol_starts, labels, offset)?;
        let d = mean_cluster_separation(&points);
        if best.as_ref().is_none_or(|(bd, _, _)| d > *bd) {
            best = Some((d, offset, points));
        }
    }
    let (_, offset, points) = best.expect("at least one offset");
    Constellation::from_points(points, offset)
}

/// `10·log₁₀(mean |x − μ|² / mean |μ|²)` with the floor for zero spread.
pub fn evm_db(c: &Constellation) -> f64 {
    let err = c.error_power();
    let means: Vec<Complex64> = c.means().iter().flatten().copied().collect();
    let reference = means.iter().map(|m| m.norm_sqr()).sum::<f64>() / means.len() as f64;
    if err == 0.0 {
        return EVM_FLOOR_DB;
    }
    (10.0 * (err / reference).log10()).max(EVM_FLOOR_DB)
}

/// Pooled RMS distance of normalized points from their cluster means.
pub fn cluster_sd(c: &Constellation) -> f64 {
    c.error_power().sqrt()
}

/// Mean raw symbol power `|x|²`.
pub fn mean_symbol_power(c: &Constellation) -> f64 {
    c.points.iter().map(|p| p.value.norm_sqr()).sum::<f64>() / c.points.len() as f64
}

/// Mean raw symbol power relative to `reference`.
pub fn avg_symbol_power(c: &Constellation, reference: f64) -> Result<f64> {
    if !(reference > 0.0 && reference.is_finite()) {
        return Err(Error::Reference);
    }
    Ok(mean_symbol_power(c) / reference)
}

/// Time from `event` until the envelope first reaches `0.95·steady` and stays
/// there for at least `hold`.
pub fn rise_time_95(envelope: &Waveform, event: f64, steady: f64, hold: f64) -> Result<f64> {
    if !(steady > 0.0 && steady.is_finite()) {
        return Err(Error::Validation("steady level must be positive".into()));
    }
    let end = envelope.time(envelope.len().saturating_sub(1));
    if envelope.is_empty() || event < envelope.start || event > end {
        return Err(Error::Validation(format!("event at {event} s outside the envelope record")));
    }
    let level = 0.95 * steady;
    let i0 = envelope.index_at_or_after(event);
    let hold_samples = (hold / envelope.sample_interval).ceil() as usize;
    let mut run_start: Option<usize> = None;
    let mut max_fraction = 0.0f64;
    for i in i0..envelope.len() {
        let v = envelope.samples[i];
        max_fraction = max_fraction.max(v / steady);
        if v >= level {
            let s = *run_start.get_or_insert(i);
            if i - s >= hold_samples {
                return Ok(envelope.time(s) - event);
            }
        } else {
            run_start = None;
        }
    }
    Err(Error::Timeout { max_fraction })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SignalMetrics {
    pub evm_db: f64,
    pub sd: f64,
    pub avg_power: Option<f64>,
    pub rise_time: Option<f64>,
}

impl SignalMetrics {
    /// Flat `key=value` lines; absent values are omitted.
    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "evm_db={}", self.evm_db)?;
        writeln!(out, "sd={}", self.sd)?;
        if let Some(p) = self.avg_power {
            writeln!(out, "avg_power={p}")?;
        }
        if let Some(t) = self.rise_time {
            writeln!(out, "rise_time_s={t:e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_i0_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_45).abs() < 1e-11);
    }
}
