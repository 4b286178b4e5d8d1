//! Deterministic synthetic dataset generator.
//!
//! Emulates the recording protocol (standing baseline, six-minute conditions
//! in randomized order, final sitting rest) with a known net-EE oracle so the
//! whole pipeline can be exercised without human data. Channels respond
//! linearly to the instantaneous metabolic drive, with optional first-order
//! lag, periodic burst texture for accelerations, and per-channel sensor
//! noise. Gas exchange is constructed so the Brockway pipeline recovers the
//! oracle exactly when noise is zero. The generator is intentionally simple;
//! it gives every pipeline path a known answer and nothing more.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{self, Activity, ChannelId, Condition};
use crate::dataset::{
    IngestOptions, MetabolicRecord, RawRecording, RawSegment, RawSession, SubjectRecording,
    CO2_KJ_PER_L, O2_KJ_PER_L,
};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::normal_draw;
use crate::train::derive_seed;

/// Net metabolic cost oracle, W/kg, for every protocol condition. Fixed and
/// documented ground truth: walking < incline walking < running, monotone in
/// speed / resistance / power within each activity.
pub fn oracle_ee(activity: Activity, condition: &Condition) -> Result<f64> {
    catalog::validate_condition(activity, condition)?;
    use Condition::*;
    let v = match (activity, condition) {
        (Activity::Sit, _) | (Activity::Stand, _) => 0.0,
        (Activity::Walk, Speed { mps }) => match *mps {
            x if x == 0.6 => 1.0,
            x if x == 0.9 => 1.4,
            _ => 1.8, // 1.2 m/s
        },
        (Activity::Incline, SpeedIncline { mps, deg }) => match (*mps, *deg) {
            (x, y) if x == 0.6 && y == 4.0 => 2.2,
            (x, y) if x == 1.2 && y == 4.0 => 3.0,
            (x, y) if x == 0.6 && y == 9.0 => 3.4,
            _ => 4.6, // 1.2 m/s at 9 degrees
        },
        (Activity::Backward, Speed { mps }) => match *mps {
            x if x == 0.4 => 1.2,
            x if x == 0.7 => 1.7,
            _ => 2.3, // 1.0 m/s
        },
        (Activity::Run, Speed { mps }) => match *mps {
            x if x == 1.2 => 5.0,
            x if x == 1.8 => 6.0,
            x if x == 2.2 => 7.0,
            _ => 8.2, // 2.7 m/s
        },
        (Activity::Cycle, Cadence { rpm, resistance }) => match (rpm, resistance) {
            (70, 1) => 2.0,
            (70, 3) => 3.2,
            (70, 5) => 4.4,
            _ => 2.8, // 100 rpm, R1
        },
        (Activity::Stairs, Power { watts }) => match watts {
            60 => 4.0,
            75 => 5.0,
            _ => 6.0, // 90 W
        },
        _ => return Err(Error::Protocol("condition does not match activity".into())),
    };
    Ok(v)
}

/// Linear sensor model of one channel: `offset + gain * response + noise`,
/// where the response is the (optionally lagged) instantaneous net drive,
/// modulated by a periodic burst for accelerometer-like channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub gain: f64,
    pub offset: f64,
    pub noise_sigma: f64,
    /// First-order lag time constant in seconds; 0 = instantaneous.
    pub lag_secs: f64,
    /// Burst frequency in Hz; 0 = smooth response.
    pub burst_freq_hz: f64,
}

/// Per-subject generation parameters. Same seed, same recording, bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectProfile {
    pub subject_id: u32,
    pub seed: u64,
    pub body_mass_kg: f64,
    /// Gross standing metabolic rate, W/kg.
    pub standing_gross_wkg: f64,
    /// Per-sample Gaussian noise on the instantaneous EE drive, W/kg.
    pub ee_noise_sigma: f64,
    pub respiratory_quotient: f64,
    pub channels: BTreeMap<ChannelId, ChannelModel>,
}

impl SubjectProfile {
    /// Default profile: minute ventilation is an exact global linear map of
    /// the EE drive (same gain/offset for every subject), the remaining
    /// channels get seeded per-subject gains, lags, and sensor noise.
    pub fn seeded(subject_id: u32, dataset_seed: u64) -> Self {
        let seed = derive_seed(dataset_seed, subject_id as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x1207f11e));
        let mut unit = |lo: f64, hi: f64| -> f64 {
            use rand::Rng;
            rng.gen_range(lo..hi)
        };

        let mut channels = BTreeMap::new();
        let acc = |unit: &mut dyn FnMut(f64, f64) -> f64| ChannelModel {
            gain: unit(1.0, 2.5),
            offset: unit(0.8, 1.4),
            noise_sigma: 0.1,
            lag_secs: 0.0,
            burst_freq_hz: unit(0.2, 0.45),
        };
        for id in [
            ChannelId::WaistAcc,
            ChannelId::ChestAcc,
            ChannelId::LeftAnkleAcc,
            ChannelId::RightAnkleAcc,
            ChannelId::LeftWristAcc,
            ChannelId::RightWristAcc,
        ] {
            channels.insert(id, acc(&mut unit));
        }
        for id in [ChannelId::EmgMagLeft, ChannelId::EmgMagRight] {
            channels.insert(
                id,
                ChannelModel {
                    gain: unit(0.6, 1.2),
                    offset: 0.2,
                    noise_sigma: 0.15,
                    lag_secs: 0.0,
                    burst_freq_hz: unit(0.25, 0.4),
                },
            );
        }
        for id in [ChannelId::LeftWristEda, ChannelId::RightWristEda] {
            channels.insert(
                id,
                ChannelModel {
                    gain: unit(0.4, 0.8),
                    offset: unit(1.5, 2.5),
                    noise_sigma: 0.05,
                    lag_secs: 60.0,
                    burst_freq_hz: 0.0,
                },
            );
        }
        for id in [ChannelId::LeftWristTemp, ChannelId::RightWristTemp] {
            channels.insert(
                id,
                ChannelModel {
                    gain: unit(0.2, 0.4),
                    offset: unit(31.0, 32.5),
                    noise_sigma: 0.02,
                    lag_secs: 120.0,
                    burst_freq_hz: 0.0,
                },
            );
        }
        channels.insert(
            ChannelId::HeartRate,
            ChannelModel {
                gain: unit(8.0, 11.0),
                offset: unit(55.0, 70.0),
                noise_sigma: 0.5,
                lag_secs: 25.0,
                burst_freq_hz: 0.0,
            },
        );
        channels.insert(
            ChannelId::SpO2,
            ChannelModel {
                gain: -unit(0.3, 0.5),
                offset: 97.5,
                noise_sigma: 0.2,
                lag_secs: 15.0,
                burst_freq_hz: 0.0,
            },
        );
        channels.insert(
            ChannelId::BreathFreq,
            ChannelModel {
                gain: unit(1.8, 2.6),
                offset: unit(10.0, 14.0),
                noise_sigma: 0.3,
                lag_secs: 10.0,
                burst_freq_hz: 0.0,
            },
        );
        // The strongest predictor by construction: instantaneous, noise-free,
        // identical map across subjects.
        channels.insert(
            ChannelId::MinuteVentilation,
            ChannelModel {
                gain: 0.9,
                offset: 8.0,
                noise_sigma: 0.0,
                lag_secs: 0.0,
                burst_freq_hz: 0.0,
            },
        );

        Self {
            subject_id,
            seed,
            body_mass_kg: 60.0 + unit(0.0, 25.0),
            standing_gross_wkg: 1.3 + unit(0.0, 0.4),
            ee_noise_sigma: 0.0,
            respiratory_quotient: 0.85,
            channels,
        }
    }
}

/// Session plans: which (activity, condition) bouts each session runs between
/// the opening stand and closing sit, plus timing.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    /// Exercise conditions per session (stand/sit brackets are implicit).
    pub sessions: Vec<Vec<(Activity, Condition)>>,
    pub segment_secs: f64,
    pub sample_rate_hz: f64,
    /// Shuffle each session's conditions with the subject's seed.
    pub randomize_order: bool,
}

impl Protocol {
    /// The full 21-condition protocol across two sessions.
    pub fn full() -> Self {
        let mut s1 = Vec::new();
        for act in [Activity::Walk, Activity::Incline, Activity::Backward] {
            for cond in catalog::protocol_conditions(act) {
                s1.push((act, cond));
            }
        }
        let mut s2 = Vec::new();
        for act in [Activity::Run, Activity::Cycle, Activity::Stairs] {
            for cond in catalog::protocol_conditions(act) {
                s2.push((act, cond));
            }
        }
        Self {
            sessions: vec![s1, s2],
            segment_secs: 360.0,
            sample_rate_hz: 1.0,
            randomize_order: true,
        }
    }

    /// A five-condition single-session protocol for fast tests.
    pub fn short() -> Self {
        Self {
            sessions: vec![vec![
                (Activity::Walk, Condition::Speed { mps: 0.6 }),
                (Activity::Walk, Condition::Speed { mps: 0.9 }),
                (Activity::Walk, Condition::Speed { mps: 1.2 }),
                (Activity::Run, Condition::Speed { mps: 1.8 }),
                (Activity::Run, Condition::Speed { mps: 2.7 }),
            ]],
            segment_secs: 200.0,
            sample_rate_hz: 1.0,
            randomize_order: true,
        }
    }

    /// The full condition set at reduced segment length, for demo runs.
    pub fn demo() -> Self {
        Self { segment_secs: 210.0, ..Self::full() }
    }
}

fn lag_coefficient(lag_secs: f64, rate_hz: f64) -> f64 {
    if lag_secs <= 0.0 {
        1.0
    } else {
        1.0 - math::exp(-1.0 / (lag_secs * rate_hz))
    }
}

/// Generate a subject's raw recording (the exact content written to disk).
pub fn generate_raw(profile: &SubjectProfile, protocol: &Protocol) -> Result<RawRecording> {
    if protocol.sessions.is_empty() {
        return Err(Error::Protocol("protocol has no sessions".into()));
    }
    if protocol.segment_secs * protocol.sample_rate_hz
        < crate::dataset::STEADY_STATE_TAIL_SECS * protocol.sample_rate_hz
    {
        return Err(Error::Protocol(format!(
            "segments of {}s are shorter than the 3-minute steady-state tail",
            protocol.segment_secs
        )));
    }
    let rate = protocol.sample_rate_hz;
    let seg_len = math::round(protocol.segment_secs * rate) as usize;

    let mut sessions = Vec::new();
    for (si, conditions) in protocol.sessions.iter().enumerate() {
        for (act, cond) in conditions {
            catalog::validate_condition(*act, cond)?;
        }
        let mut order: Vec<(Activity, Condition)> = conditions.clone();
        if protocol.randomize_order {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(profile.seed, 0x0bde5 + si as u64));
            order.shuffle(&mut rng);
        }
        let mut bouts = vec![(Activity::Stand, Condition::Rest)];
        bouts.extend(order);
        bouts.push((Activity::Sit, Condition::Rest));

        let n = seg_len * bouts.len();
        let mut segments = Vec::new();
        let mut intensity = Vec::with_capacity(n);
        for (k, (act, cond)) in bouts.iter().enumerate() {
            segments.push(RawSegment {
                activity: *act,
                condition: *cond,
                start_sec: (k * seg_len) as f64 / rate,
                end_sec: ((k + 1) * seg_len) as f64 / rate,
            });
            let level = oracle_ee(*act, cond)?;
            intensity.extend(core::iter::repeat(level).take(seg_len));
        }

        // Shared instantaneous EE drive: oracle intensity plus Gaussian noise.
        let mut ee_rng = ChaCha8Rng::seed_from_u64(derive_seed(profile.seed, 0xee + si as u64));
        let drive: Vec<f64> = intensity
            .iter()
            .map(|&lvl| lvl + profile.ee_noise_sigma * normal_draw(&mut ee_rng))
            .collect();

        // Gas exchange reproducing the drive through the Brockway pipeline.
        let denom = O2_KJ_PER_L + CO2_KJ_PER_L * profile.respiratory_quotient;
        let mut vo2 = Vec::with_capacity(n);
        let mut vco2 = Vec::with_capacity(n);
        for &d in &drive {
            let gross_w = ((profile.standing_gross_wkg + d) * profile.body_mass_kg).max(0.0);
            let v = gross_w * 60.0 / 1000.0 / denom;
            vo2.push(v);
            vco2.push(v * profile.respiratory_quotient);
        }

        let times: Vec<f64> = (0..n).map(|k| k as f64 / rate).collect();
        let mut signals = BTreeMap::new();
        for (ci, id) in catalog::input_channels().into_iter().enumerate() {
            let model = profile.channels.get(&id).copied().unwrap_or(ChannelModel {
                gain: 1.0,
                offset: 0.0,
                noise_sigma: 0.0,
                lag_secs: 0.0,
                burst_freq_hz: 0.0,
            });
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                profile.seed,
                0xc000 + (si * 32 + ci) as u64,
            ));
            let alpha = lag_coefficient(model.lag_secs, rate);
            let mut resp = 0.0;
            let mut values = Vec::with_capacity(n);
            for (k, &d) in drive.iter().enumerate() {
                resp += alpha * (d - resp);
                let burst = if model.burst_freq_hz > 0.0 {
                    let phase = 2.0 * core::f64::consts::PI * model.burst_freq_hz * times[k];
                    0.3 + 0.7 * math::abs(math::sin(phase))
                } else {
                    1.0
                };
                let noise = if model.noise_sigma > 0.0 {
                    model.noise_sigma * normal_draw(&mut rng)
                } else {
                    0.0
                };
                values.push(model.offset + model.gain * resp * burst + noise);
            }
            signals.insert(id, values);
        }

        sessions.push(RawSession {
            session: (si + 1) as u8,
            signal_times: times.clone(),
            signals,
            metabolic: MetabolicRecord { timestamps: times, vo2, vco2 },
            segments,
        });
    }

    Ok(RawRecording {
        subject_id: profile.subject_id,
        body_mass_kg: profile.body_mass_kg,
        sessions,
    })
}

/// Generate and ingest in one step.
pub fn generate_subject(profile: &SubjectProfile, protocol: &Protocol) -> Result<SubjectRecording> {
    let raw = generate_raw(profile, protocol)?;
    SubjectRecording::from_raw(
        &raw,
        &IngestOptions { sample_rate_hz: protocol.sample_rate_hz },
    )
}

/// Convenience: `n` seeded subjects under one protocol.
pub fn generate_dataset(
    n_subjects: u32,
    dataset_seed: u64,
    protocol: &Protocol,
) -> Result<Vec<SubjectRecording>> {
    (1..=n_subjects)
        .map(|k| generate_subject(&SubjectProfile::seeded(k, dataset_seed), protocol))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Selection;
    use crate::model::fit_linear_regression_closed_form;
    use crate::tensor::Matrix;

    #[test]
    fn oracle_is_monotone_and_documented() {
        let walk_max = oracle_ee(Activity::Walk, &Condition::Speed { mps: 1.2 }).unwrap();
        let incline_min =
            oracle_ee(Activity::Incline, &Condition::SpeedIncline { mps: 0.6, deg: 4.0 }).unwrap();
        let incline_max =
            oracle_ee(Activity::Incline, &Condition::SpeedIncline { mps: 1.2, deg: 9.0 }).unwrap();
        let run_min = oracle_ee(Activity::Run, &Condition::Speed { mps: 1.2 }).unwrap();
        assert!(walk_max < incline_min, "walking below incline walking");
        assert!(incline_max < run_min, "incline walking below running");

        let w06 = oracle_ee(Activity::Walk, &Condition::Speed { mps: 0.6 }).unwrap();
        assert!(walk_max > w06, "monotone in speed");
        assert_eq!(oracle_ee(Activity::Sit, &Condition::Rest).unwrap(), 0.0);
        assert_eq!(oracle_ee(Activity::Run, &Condition::Speed { mps: 2.7 }).unwrap(), 8.2);
        assert!(oracle_ee(Activity::Walk, &Condition::Speed { mps: 9.0 }).is_err());
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let profile = SubjectProfile::seeded(1, 7);
        let a = generate_raw(&profile, &Protocol::short()).unwrap();
        let b = generate_raw(&profile, &Protocol::short()).unwrap();
        assert_eq!(a, b);
        let c = generate_raw(&SubjectProfile::seeded(2, 7), &Protocol::short()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_target_matches_oracle_exactly() {
        let profile = SubjectProfile::seeded(3, 11);
        assert_eq!(profile.ee_noise_sigma, 0.0);
        let rec = generate_subject(&profile, &Protocol::short()).unwrap();
        for seg in &rec.segments {
            let expected = oracle_ee(seg.activity, &seg.condition).unwrap();
            for i in seg.start..seg.end {
                assert!(
                    (rec.ee_target[i] - expected).abs() < 1e-9,
                    "{}@{i}: {} vs {expected}",
                    seg.activity,
                    rec.ee_target[i]
                );
            }
        }
    }

    #[test]
    fn ee_noise_standard_deviation_matches_sigma() {
        let mut profile = SubjectProfile::seeded(4, 13);
        profile.ee_noise_sigma = 0.3;
        let rec = generate_subject(&profile, &Protocol::short()).unwrap();
        // Reconstruct the per-sample gross EE from the stored gas exchange and
        // compare with the intended level per segment.
        let vo2 = rec.channel(ChannelId::Vo2).unwrap();
        let vco2 = rec.channel(ChannelId::Vco2).unwrap();
        let mut residuals = Vec::new();
        for seg in &rec.segments {
            let level = oracle_ee(seg.activity, &seg.condition).unwrap();
            for i in seg.start..seg.end {
                let gross = crate::dataset::compute_brockway_power(vo2[i], vco2[i]).unwrap()
                    / rec.body_mass_kg;
                residuals.push(gross - profile.standing_gross_wkg - level);
            }
        }
        let std = crate::math::sqrt(crate::math::variance(&residuals));
        assert!(
            (std - 0.3).abs() < 0.03,
            "sample std {std} should be within 10% of sigma 0.3"
        );
    }

    #[test]
    fn full_protocol_covers_all_conditions() {
        let rec = generate_subject(&SubjectProfile::seeded(1, 5), &Protocol::full()).unwrap();
        let exercise: Vec<_> = rec
            .segments
            .iter()
            .filter(|s| !matches!(s.activity, Activity::Sit | Activity::Stand))
            .collect();
        assert_eq!(exercise.len(), 21);
        // Two sessions, each bracketed by stand and sit.
        assert_eq!(rec.segments.iter().filter(|s| s.activity == Activity::Stand).count(), 2);
        assert_eq!(rec.segments.iter().filter(|s| s.activity == Activity::Sit).count(), 2);
        assert_eq!(rec.len(), rec.segments.iter().map(|s| s.len()).sum::<usize>());
    }

    #[test]
    fn minute_ventilation_is_an_exact_linear_map_when_noiseless() {
        let profile = SubjectProfile::seeded(2, 9);
        let rec = generate_subject(&profile, &Protocol::short()).unwrap();
        let sel = Selection::parse("minute_ventilation").unwrap();
        let mv = crate::dataset::select_signals(&rec, &sel).unwrap();

        let mut design = Matrix::zeros(rec.len(), 2);
        for i in 0..rec.len() {
            *design.at_mut(i, 0) = 1.0;
            *design.at_mut(i, 1) = mv.at(i, 0);
        }
        let fit = fit_linear_regression_closed_form(&design, &rec.ee_target).unwrap();
        let pred: Vec<f64> = (0..rec.len())
            .map(|i| fit.coefficients[0] + fit.coefficients[1] * mv.at(i, 0))
            .collect();
        let sse: f64 =
            pred.iter().zip(&rec.ee_target).map(|(p, t)| (p - t) * (p - t)).sum();
        let mean = crate::math::mean(&rec.ee_target);
        let sst: f64 = rec.ee_target.iter().map(|t| (t - mean) * (t - mean)).sum();
        let r2 = 1.0 - sse / sst;
        assert!(r2 > 0.99, "R^2 = {r2}");

        // Changing only the gain changes the recovered slope accordingly.
        let mut p2 = profile.clone();
        p2.channels.get_mut(&ChannelId::MinuteVentilation).unwrap().gain = 1.8;
        let rec2 = generate_subject(&p2, &Protocol::short()).unwrap();
        let mv2 = crate::dataset::select_signals(&rec2, &sel).unwrap();
        let mut design2 = Matrix::zeros(rec2.len(), 2);
        for i in 0..rec2.len() {
            *design2.at_mut(i, 0) = 1.0;
            *design2.at_mut(i, 1) = mv2.at(i, 0);
        }
        let fit2 = fit_linear_regression_closed_form(&design2, &rec2.ee_target).unwrap();
        let ratio = fit.coefficients[1] / fit2.coefficients[1];
        assert!((ratio - 2.0).abs() < 1e-6, "slope ratio {ratio}");
    }

    #[test]
    fn randomized_order_is_seeded_and_bracketed() {
        let rec1 = generate_subject(&SubjectProfile::seeded(1, 3), &Protocol::short()).unwrap();
        let rec2 = generate_subject(&SubjectProfile::seeded(2, 3), &Protocol::short()).unwrap();
        let order = |r: &SubjectRecording| -> Vec<Activity> {
            r.segments.iter().map(|s| s.activity).collect()
        };
        assert_eq!(order(&rec1)[0], Activity::Stand);
        assert_eq!(*order(&rec1).last().unwrap(), Activity::Sit);
        // Different subjects shuffle differently (with overwhelming probability).
        assert_ne!(
            rec1.segments.iter().map(|s| s.condition).collect::<Vec<_>>(),
            rec2.segments.iter().map(|s| s.condition).collect::<Vec<_>>()
        );
    }
}
