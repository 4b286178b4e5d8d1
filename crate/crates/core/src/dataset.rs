//! Subject recordings and metabolic ground truth.
//!
//! Raw recordings arrive as breath-by-breath samples (non-uniform timestamps).
//! Ingestion resamples every channel to a uniform rate, converts gas exchange
//! to metabolic power, normalizes by body mass, and derives the per-sample
//! net-EE target: within each activity segment the target is the segment's
//! steady-state mean (final three minutes) minus the session's standing
//! baseline, held constant across the segment. Negative net values are kept.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::catalog::{self, Activity, ChannelId, Condition, Selection};
use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Matrix;

/// Energy equivalent of oxygen, kJ per litre.
pub const O2_KJ_PER_L: f64 = 16.58;
/// Energy equivalent of carbon dioxide, kJ per litre.
pub const CO2_KJ_PER_L: f64 = 4.51;
/// Length of the steady-state averaging tail, seconds.
pub const STEADY_STATE_TAIL_SECS: f64 = 180.0;

/// Convert gas-exchange rates (L/min) to metabolic power in watts.
/// Respiratory-only form; the urinary-nitrogen term is omitted.
pub fn compute_brockway_power(vo2_lpm: f64, vco2_lpm: f64) -> Result<f64> {
    if vo2_lpm < 0.0 || vco2_lpm < 0.0 {
        return Err(Error::Domain(format!(
            "gas rates must be non-negative, got vo2={vo2_lpm}, vco2={vco2_lpm}"
        )));
    }
    Ok((O2_KJ_PER_L * vo2_lpm + CO2_KJ_PER_L * vco2_lpm) * 1000.0 / 60.0)
}

/// Normalize power by body mass, W -> W/kg.
pub fn normalize_by_mass(power_w: f64, mass_kg: f64) -> Result<f64> {
    if mass_kg <= 0.0 {
        return Err(Error::Domain(format!("body mass must be positive, got {mass_kg}")));
    }
    Ok(power_w / mass_kg)
}

/// Net metabolic cost: steady-state EE minus the standing baseline. Not
/// clamped; negative values surface protocol anomalies instead of hiding them.
pub fn net_cost(steady_wkg: f64, standing_baseline_wkg: f64) -> f64 {
    steady_wkg - standing_baseline_wkg
}

// ── Records ──────────────────────────────────────────────────────────────────

/// Breath-by-breath gas exchange record.
#[derive(Debug, Clone, PartialEq)]
pub struct MetabolicRecord {
    /// Seconds, strictly increasing.
    pub timestamps: Vec<f64>,
    /// O2 consumption, L/min per sample.
    pub vo2: Vec<f64>,
    /// CO2 production, L/min per sample.
    pub vco2: Vec<f64>,
}

impl MetabolicRecord {
    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() != self.vo2.len() || self.vo2.len() != self.vco2.len() {
            return Err(Error::Domain("metabolic record arrays differ in length".into()));
        }
        if self.timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("metabolic timestamps must be strictly increasing".into()));
        }
        if self.vo2.iter().chain(self.vco2.iter()).any(|&v| v < 0.0) {
            return Err(Error::Domain("gas rates must be non-negative".into()));
        }
        Ok(())
    }
}

/// One activity bout, in sample indices of the resampled recording.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivitySegment {
    pub activity: Activity,
    pub condition: Condition,
    /// First sample index (inclusive).
    pub start: usize,
    /// One past the last sample index.
    pub end: usize,
    /// Recording session, 1 or 2.
    pub session: u8,
}

impl ActivitySegment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Steady-state EE of a segment: mean over its final three minutes.
pub fn steady_state_ee(
    segment: &ActivitySegment,
    ee_series: &[f64],
    sample_rate_hz: f64,
) -> Result<f64> {
    let tail = (STEADY_STATE_TAIL_SECS * sample_rate_hz) as usize;
    if segment.len() < tail {
        return Err(Error::Protocol(format!(
            "segment {}..{} spans {} samples, below the 3-minute minimum of {tail}",
            segment.start,
            segment.end,
            segment.len()
        )));
    }
    if segment.end > ee_series.len() {
        return Err(Error::Protocol(format!(
            "segment end {} exceeds series length {}",
            segment.end,
            ee_series.len()
        )));
    }
    Ok(math::mean(&ee_series[segment.end - tail..segment.end]))
}

/// Aggregate breath-by-breath samples over `[start_sec, end_sec)` onto a
/// uniform grid: each interval takes the mean of the samples falling inside
/// it; empty intervals carry the previous value forward (leading empty
/// intervals backfill from the first value seen).
pub fn resample_breath_signals(
    timestamps: &[f64],
    values: &[f64],
    start_sec: f64,
    end_sec: f64,
    target_rate_hz: f64,
) -> Result<Vec<f64>> {
    if timestamps.len() != values.len() {
        return Err(Error::Domain("timestamp/value length mismatch".into()));
    }
    if target_rate_hz <= 0.0 || end_sec <= start_sec {
        return Err(Error::Domain("resampling window or rate is empty".into()));
    }
    let n_bins = (math::round((end_sec - start_sec) * target_rate_hz)) as usize;
    let in_window =
        timestamps.iter().any(|&t| t >= start_sec && t < end_sec);
    if !in_window || n_bins == 0 {
        return Err(Error::Protocol(format!(
            "no breath samples inside segment [{start_sec}, {end_sec})"
        )));
    }
    Ok(uniform_bins(timestamps, values, start_sec, n_bins, target_rate_hz))
}

/// Bin-mean resampling kernel. Assumes at least one sample lands in the
/// window or precedes it; leading empty bins backfill from the first mean.
fn uniform_bins(
    timestamps: &[f64],
    values: &[f64],
    t0: f64,
    n_bins: usize,
    rate_hz: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_bins);
    // Most recent value strictly before the window, if any.
    let first_in = timestamps.partition_point(|&t| t < t0);
    let mut last: Option<f64> = if first_in > 0 { Some(values[first_in - 1]) } else { None };
    let mut i = first_in;
    for k in 0..n_bins {
        let hi = t0 + (k + 1) as f64 / rate_hz;
        let mut sum = 0.0;
        let mut count = 0usize;
        while i < timestamps.len() && timestamps[i] < hi {
            sum += values[i];
            count += 1;
            i += 1;
        }
        if count > 0 {
            last = Some(sum / count as f64);
        }
        out.push(last);
    }
    // Backfill bins before the first observed value.
    let first_val = out.iter().flatten().copied().next().unwrap_or(0.0);
    out.into_iter().map(|v| v.unwrap_or(first_val)).collect()
}

// ── Raw recordings ───────────────────────────────────────────────────────────

/// Segment boundaries in seconds, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSegment {
    pub activity: Activity,
    pub condition: Condition,
    pub start_sec: f64,
    pub end_sec: f64,
}

/// One recording session before resampling: breath-by-breath channel samples
/// plus gas exchange and segment annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSession {
    pub session: u8,
    /// Timestamps of the channel samples, seconds, strictly increasing.
    pub signal_times: Vec<f64>,
    /// The sixteen wearable channels, each aligned with `signal_times`.
    pub signals: BTreeMap<ChannelId, Vec<f64>>,
    pub metabolic: MetabolicRecord,
    pub segments: Vec<RawSegment>,
}

/// A subject's raw data across sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub subject_id: u32,
    pub body_mass_kg: f64,
    pub sessions: Vec<RawSession>,
}

/// Ingestion parameters.
#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    /// Uniform rate every channel is resampled to.
    pub sample_rate_hz: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { sample_rate_hz: 1.0 }
    }
}

// ── Subject recordings ───────────────────────────────────────────────────────

/// A subject's uniformly resampled multichannel recording with derived
/// net-EE targets. Immutable after ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecording {
    pub subject_id: u32,
    pub body_mass_kg: f64,
    pub sample_rate_hz: f64,
    /// Uniform channel sequences; includes the metabolic reference channels.
    pub channels: BTreeMap<ChannelId, Vec<f64>>,
    /// Raw breath-by-breath gas exchange (sessions concatenated).
    pub metabolic: MetabolicRecord,
    pub segments: Vec<ActivitySegment>,
    /// Segment index of every sample (gaps inherit the previous segment).
    pub segment_of: Vec<u32>,
    /// Weight-normalized net EE target, W/kg per sample.
    pub ee_target: Vec<f64>,
    pub n_samples: usize,
}

impl SubjectRecording {
    pub fn len(&self) -> usize {
        self.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.n_samples == 0
    }

    pub fn channel(&self, id: ChannelId) -> Result<&[f64]> {
        self.channels
            .get(&id)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Selection(format!("channel '{id}' absent from recording")))
    }

    /// Build a recording from raw session data: resample, derive gross EE via
    /// the Brockway pipeline, and fill per-segment net targets.
    pub fn from_raw(raw: &RawRecording, opts: &IngestOptions) -> Result<Self> {
        let rate = opts.sample_rate_hz;
        if rate <= 0.0 {
            return Err(Error::Ingest("sample rate must be positive".into()));
        }
        if raw.subject_id == 0 {
            return Err(Error::Ingest("subject ids start at 1".into()));
        }
        if raw.body_mass_kg <= 0.0 {
            return Err(Error::Ingest(format!(
                "subject {}: body mass must be positive, got {}",
                raw.subject_id, raw.body_mass_kg
            )));
        }
        if raw.sessions.is_empty() {
            return Err(Error::Ingest(format!("subject {}: no sessions", raw.subject_id)));
        }

        let mut channels: BTreeMap<ChannelId, Vec<f64>> = BTreeMap::new();
        let mut metabolic = MetabolicRecord { timestamps: vec![], vo2: vec![], vco2: vec![] };
        let mut segments: Vec<ActivitySegment> = Vec::new();
        let mut segment_of: Vec<u32> = Vec::new();
        let mut ee_target: Vec<f64> = Vec::new();
        let mut sample_offset = 0usize;
        let mut time_offset = 0.0f64;

        for sess in &raw.sessions {
            let subj = raw.subject_id;
            sess.metabolic.validate().map_err(|e| {
                Error::Ingest(format!("subject {subj} session {}: {e}", sess.session))
            })?;
            let duration = sess
                .segments
                .iter()
                .map(|s| s.end_sec)
                .fold(0.0f64, f64::max);
            let n = math::round(duration * rate) as usize;
            if n == 0 {
                return Err(Error::Ingest(format!(
                    "subject {subj} session {}: segments cover no samples",
                    sess.session
                )));
            }

            // Segment bounds in samples, validated against the closed set.
            let mut sess_segments = Vec::with_capacity(sess.segments.len());
            for rs in &sess.segments {
                if rs.end_sec <= rs.start_sec {
                    return Err(Error::Ingest(format!(
                        "subject {subj} session {}: segment '{}' has start >= end",
                        sess.session,
                        rs.activity.name()
                    )));
                }
                catalog::validate_condition(rs.activity, &rs.condition)
                    .map_err(|e| Error::Ingest(format!("subject {subj}: {e}")))?;
                sess_segments.push(ActivitySegment {
                    activity: rs.activity,
                    condition: rs.condition,
                    start: math::round(rs.start_sec * rate) as usize,
                    end: (math::round(rs.end_sec * rate) as usize).min(n),
                    session: sess.session,
                });
            }
            for w in sess_segments.windows(2) {
                if w[1].start < w[0].end {
                    return Err(Error::Ingest(format!(
                        "subject {subj} session {}: segments overlap or are unordered",
                        sess.session
                    )));
                }
            }

            // Resample the sixteen wearable channels.
            for id in catalog::input_channels() {
                let values = sess.signals.get(&id).ok_or_else(|| {
                    Error::Ingest(format!(
                        "subject {subj} session {}: missing channel '{id}'",
                        sess.session
                    ))
                })?;
                if values.len() != sess.signal_times.len() {
                    return Err(Error::Ingest(format!(
                        "subject {subj} session {}: channel '{id}' length {} != {} timestamps",
                        sess.session,
                        values.len(),
                        sess.signal_times.len()
                    )));
                }
                let uniform =
                    resample_breath_signals(&sess.signal_times, values, 0.0, duration, rate)
                        .map_err(|e| Error::Ingest(format!("subject {subj} '{id}': {e}")))?;
                channels.entry(id).or_default().extend(uniform);
            }

            // Gas exchange -> gross mass-normalized EE.
            let vo2_u = resample_breath_signals(
                &sess.metabolic.timestamps,
                &sess.metabolic.vo2,
                0.0,
                duration,
                rate,
            )
            .map_err(|e| Error::Ingest(format!("subject {subj} vo2: {e}")))?;
            let vco2_u = resample_breath_signals(
                &sess.metabolic.timestamps,
                &sess.metabolic.vco2,
                0.0,
                duration,
                rate,
            )
            .map_err(|e| Error::Ingest(format!("subject {subj} vco2: {e}")))?;
            let mut gross = Vec::with_capacity(n);
            for i in 0..n {
                let w = compute_brockway_power(vo2_u[i], vco2_u[i])
                    .map_err(|e| Error::Ingest(format!("subject {subj} sample {i}: {e}")))?;
                gross.push(normalize_by_mass(w, raw.body_mass_kg)?);
            }
            channels.entry(ChannelId::Vo2).or_default().extend(vo2_u);
            channels.entry(ChannelId::Vco2).or_default().extend(vco2_u);

            let (targets, seg_of_local) =
                derive_session_targets(&gross, &sess_segments, rate).map_err(|e| {
                    Error::Ingest(format!("subject {subj} session {}: {e}", sess.session))
                })?;

            let seg_base = segments.len() as u32;
            ee_target.extend(targets);
            segment_of.extend(seg_of_local.iter().map(|&s| seg_base + s));
            segments.extend(sess_segments.into_iter().map(|mut s| {
                s.start += sample_offset;
                s.end += sample_offset;
                s
            }));
            metabolic
                .timestamps
                .extend(sess.metabolic.timestamps.iter().map(|t| t + time_offset));
            metabolic.vo2.extend(sess.metabolic.vo2.iter().copied());
            metabolic.vco2.extend(sess.metabolic.vco2.iter().copied());

            sample_offset += n;
            time_offset += duration;
        }

        let n_samples = sample_offset;
        for (id, seq) in &channels {
            if seq.len() != n_samples {
                return Err(Error::Ingest(format!(
                    "subject {}: channel '{id}' resampled to {} samples, expected {n_samples}",
                    raw.subject_id,
                    seq.len()
                )));
            }
        }
        debug_assert_eq!(ee_target.len(), n_samples);
        debug_assert_eq!(segment_of.len(), n_samples);

        Ok(Self {
            subject_id: raw.subject_id,
            body_mass_kg: raw.body_mass_kg,
            sample_rate_hz: rate,
            channels,
            metabolic,
            segments,
            segment_of,
            ee_target,
            n_samples,
        })
    }
}

/// Per-sample net targets for one session: every segment's target is its
/// steady-state mean minus the session's standing baseline (the first stand
/// segment), held constant; gap samples inherit the previous segment.
fn derive_session_targets(
    gross: &[f64],
    segments: &[ActivitySegment],
    rate: f64,
) -> Result<(Vec<f64>, Vec<u32>)> {
    let baseline_seg = segments
        .iter()
        .find(|s| s.activity == Activity::Stand)
        .ok_or_else(|| Error::Ingest("no standing baseline segment".into()))?;
    let baseline = steady_state_ee(baseline_seg, gross, rate)?;

    let n = gross.len();
    let mut targets = vec![f64::NAN; n];
    let mut seg_of = vec![u32::MAX; n];
    for (idx, seg) in segments.iter().enumerate() {
        let steady = steady_state_ee(seg, gross, rate)?;
        let net = net_cost(steady, baseline);
        for i in seg.start..seg.end.min(n) {
            targets[i] = net;
            seg_of[i] = idx as u32;
        }
    }
    // Carry forward through gaps; backfill anything before the first segment.
    let mut last_t = None;
    let mut last_s = None;
    for i in 0..n {
        if targets[i].is_nan() {
            if let (Some(t), Some(s)) = (last_t, last_s) {
                targets[i] = t;
                seg_of[i] = s;
            }
        } else {
            last_t = Some(targets[i]);
            last_s = Some(seg_of[i]);
        }
    }
    if let Some(first) = targets.iter().position(|t| !t.is_nan()) {
        let (t0, s0) = (targets[first], seg_of[first]);
        for i in 0..first {
            targets[i] = t0;
            seg_of[i] = s0;
        }
    }
    Ok((targets, seg_of))
}

/// Extract selected channels as a `[n_samples x n_channels]` matrix, columns
/// in canonical catalog order.
pub fn select_signals(recording: &SubjectRecording, selection: &Selection) -> Result<Matrix> {
    let cols = selection.len();
    let rows = recording.len();
    let mut m = Matrix::zeros(rows, cols);
    for (j, &id) in selection.channels().iter().enumerate() {
        let seq = recording.channel(id)?;
        if seq.len() != rows {
            return Err(Error::Fusion(format!(
                "channel '{id}' has {} samples, expected {rows}",
                seq.len()
            )));
        }
        for i in 0..rows {
            *m.at_mut(i, j) = seq[i];
        }
    }
    Ok(m)
}

// ── Fixture helpers (used by tests in several modules) ──────────────────────

/// Minimal two-segment raw session (stand + one activity) with constant gas
/// exchange per segment. Intended for unit tests.
#[doc(hidden)]
pub fn fixture_session(
    stand_vo2: f64,
    active_vo2: f64,
    activity: Activity,
    condition: Condition,
    segment_secs: usize,
) -> RawSession {
    let n = segment_secs * 2;
    let times: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mut signals = BTreeMap::new();
    for id in catalog::input_channels() {
        signals.insert(id, times.iter().map(|t| 0.1 * t).collect());
    }
    let vo2: Vec<f64> = (0..n)
        .map(|i| if i < segment_secs { stand_vo2 } else { active_vo2 })
        .collect();
    let vco2: Vec<f64> = vo2.iter().map(|v| v * 0.85).collect();
    RawSession {
        session: 1,
        signal_times: times.clone(),
        signals,
        metabolic: MetabolicRecord { timestamps: times, vo2, vco2 },
        segments: vec![
            RawSegment {
                activity: Activity::Stand,
                condition: Condition::Rest,
                start_sec: 0.0,
                end_sec: segment_secs as f64,
            },
            RawSegment {
                activity,
                condition,
                start_sec: segment_secs as f64,
                end_sec: (2 * segment_secs) as f64,
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn brockway_examples() {
        assert_eq!(compute_brockway_power(0.0, 0.0).unwrap(), 0.0);
        let w = compute_brockway_power(0.3, 0.25).unwrap();
        assert!((w - 101.69166666666666).abs() < 1e-9, "got {w}");
        let w = compute_brockway_power(1.0, 0.0).unwrap();
        assert!((w - 276.3333333333333).abs() < 1e-9, "got {w}");
        assert!(compute_brockway_power(-0.1, 0.0).is_err());
        assert!(compute_brockway_power(0.0, -0.1).is_err());
    }

    #[test]
    fn brockway_is_linear_in_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x: f64 = rng.gen_range(0.0..3.0);
            let y: f64 = rng.gen_range(0.0..3.0);
            let a: f64 = rng.gen_range(0.0..5.0);
            let lhs = compute_brockway_power(a * x, a * y).unwrap();
            let rhs = a * compute_brockway_power(x, y).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn mass_normalization() {
        assert_eq!(normalize_by_mass(140.0, 70.0).unwrap(), 2.0);
        assert_eq!(normalize_by_mass(0.0, 70.0).unwrap(), 0.0);
        let v = normalize_by_mass(101.69166666666666, 62.5).unwrap();
        assert!((v - 1.6270666666666666).abs() < 1e-12);
        assert!(normalize_by_mass(1.0, 0.0).is_err());
        assert!(normalize_by_mass(1.0, -3.0).is_err());
    }

    fn seg(start: usize, end: usize) -> ActivitySegment {
        ActivitySegment {
            activity: Activity::Walk,
            condition: Condition::Speed { mps: 0.6 },
            start,
            end,
            session: 1,
        }
    }

    #[test]
    fn steady_state_constant_and_halves() {
        let series = vec![3.0; 360];
        assert_eq!(steady_state_ee(&seg(0, 360), &series, 1.0).unwrap(), 3.0);

        let mut series = vec![1.0; 180];
        series.extend(vec![2.0; 180]);
        assert_eq!(steady_state_ee(&seg(0, 360), &series, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn steady_state_ramp_matches_brute_force() {
        let series: Vec<f64> = (0..360).map(|i| i as f64 / 360.0).collect();
        // Independent oracle: direct summation of the averaged tail.
        let mut sum = 0.0;
        for i in 180..360 {
            sum += series[i];
        }
        let oracle = sum / 180.0;
        let got = steady_state_ee(&seg(0, 360), &series, 1.0).unwrap();
        assert_eq!(got, oracle);
        assert!((got - 0.7486111111111111).abs() < 1e-12);
    }

    #[test]
    fn steady_state_rejects_short_segments() {
        let series = vec![1.0; 100];
        assert!(steady_state_ee(&seg(0, 100), &series, 1.0).is_err());
        // Exactly three minutes is allowed.
        let series = vec![1.0; 180];
        assert_eq!(steady_state_ee(&seg(0, 180), &series, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn net_cost_keeps_negatives() {
        assert_eq!(net_cost(5.0, 1.2), 3.8);
        assert_eq!(net_cost(1.2, 1.2), 0.0);
        assert!((net_cost(1.0, 1.2) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn resample_examples() {
        let out = resample_breath_signals(&[0.0, 1.0, 2.0, 3.0], &[4.0; 4], 0.0, 4.0, 1.0).unwrap();
        assert_eq!(out, vec![4.0, 4.0, 4.0, 4.0]);

        let out =
            resample_breath_signals(&[0.0, 0.4, 1.1, 1.9], &[2.0, 4.0, 6.0, 8.0], 0.0, 2.0, 1.0)
                .unwrap();
        assert_eq!(out, vec![3.0, 7.0]);

        let out = resample_breath_signals(&[0.0, 2.5], &[1.0, 5.0], 0.0, 3.0, 1.0).unwrap();
        assert_eq!(out, vec![1.0, 1.0, 5.0]);
    }

    #[test]
    fn resample_empty_segment_errors() {
        assert!(resample_breath_signals(&[10.0], &[1.0], 0.0, 3.0, 1.0).is_err());
        assert!(resample_breath_signals(&[], &[], 0.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn resample_preserves_mean_when_bins_nonempty() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n_bins = rng.gen_range(2usize..10);
            let mut times = Vec::new();
            let mut values = Vec::new();
            for k in 0..n_bins {
                let m = rng.gen_range(1usize..4);
                for j in 0..m {
                    times.push(k as f64 + j as f64 / (m as f64 + 1.0));
                    values.push(rng.gen_range(-2.0..2.0));
                }
            }
            let out =
                resample_breath_signals(&times, &values, 0.0, n_bins as f64, 1.0).unwrap();
            // Brute-force per-interval means.
            let mut oracle = Vec::new();
            for k in 0..n_bins {
                let (mut s, mut c) = (0.0, 0usize);
                for (t, v) in times.iter().zip(&values) {
                    if *t >= k as f64 && *t < (k + 1) as f64 {
                        s += v;
                        c += 1;
                    }
                }
                oracle.push(s / c as f64);
            }
            let m_out = math::mean(&out);
            let m_oracle = math::mean(&oracle);
            assert!((m_out - m_oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn from_raw_derives_piecewise_net_target() {
        let sess = fixture_session(0.5, 1.0, Activity::Walk, Condition::Speed { mps: 0.6 }, 360);
        let raw = RawRecording { subject_id: 1, body_mass_kg: 70.0, sessions: vec![sess] };
        let rec = SubjectRecording::from_raw(&raw, &IngestOptions::default()).unwrap();

        assert_eq!(rec.len(), 720);
        assert_eq!(rec.segments.len(), 2);
        assert_eq!(rec.channels.len(), 18); // 16 inputs + vo2 + vco2

        let stand_gross =
            normalize_by_mass(compute_brockway_power(0.5, 0.425).unwrap(), 70.0).unwrap();
        let walk_gross =
            normalize_by_mass(compute_brockway_power(1.0, 0.85).unwrap(), 70.0).unwrap();
        let expected_net = walk_gross - stand_gross;
        assert!((rec.ee_target[0] - 0.0).abs() < 1e-12, "stand target is zero net");
        assert!((rec.ee_target[700] - expected_net).abs() < 1e-12);
        assert_eq!(rec.segment_of[0], 0);
        assert_eq!(rec.segment_of[700], 1);
    }

    #[test]
    fn from_raw_missing_channel_names_it() {
        let mut sess =
            fixture_session(0.5, 1.0, Activity::Walk, Condition::Speed { mps: 0.6 }, 360);
        sess.signals.remove(&ChannelId::HeartRate);
        let raw = RawRecording { subject_id: 3, body_mass_kg: 70.0, sessions: vec![sess] };
        let err = SubjectRecording::from_raw(&raw, &IngestOptions::default()).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("heart_rate"), "error should name the channel: {msg}");
        assert!(msg.contains("subject 3"), "error should name the subject: {msg}");
    }

    #[test]
    fn from_raw_requires_standing_baseline() {
        let mut sess =
            fixture_session(0.5, 1.0, Activity::Walk, Condition::Speed { mps: 0.6 }, 360);
        sess.segments[0].activity = Activity::Sit;
        let raw = RawRecording { subject_id: 1, body_mass_kg: 70.0, sessions: vec![sess] };
        assert!(SubjectRecording::from_raw(&raw, &IngestOptions::default()).is_err());
    }

    #[test]
    fn from_raw_is_deterministic() {
        let sess = fixture_session(0.5, 1.0, Activity::Run, Condition::Speed { mps: 1.8 }, 360);
        let raw = RawRecording { subject_id: 1, body_mass_kg: 64.0, sessions: vec![sess] };
        let a = SubjectRecording::from_raw(&raw, &IngestOptions::default()).unwrap();
        let b = SubjectRecording::from_raw(&raw, &IngestOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn select_signals_shapes_and_order() {
        let sess = fixture_session(0.5, 1.0, Activity::Walk, Condition::Speed { mps: 0.6 }, 360);
        let raw = RawRecording { subject_id: 1, body_mass_kg: 70.0, sessions: vec![sess] };
        let rec = SubjectRecording::from_raw(&raw, &IngestOptions::default()).unwrap();

        let hexo = select_signals(&rec, &Selection::parse("hexoskin").unwrap()).unwrap();
        assert_eq!((hexo.rows, hexo.cols), (720, 5));

        let all = select_signals(&rec, &Selection::parse("local+global").unwrap()).unwrap();
        assert_eq!(all.cols, 16);

        let wo = select_signals(
            &rec,
            &Selection::parse("global-minute_ventilation").unwrap(),
        )
        .unwrap();
        assert_eq!(wo.cols, 7);

        // First hexoskin column is waist acceleration.
        let waist = rec.channel(ChannelId::WaistAcc).unwrap();
        assert_eq!(hexo.at(5, 0), waist[5]);
    }
}
