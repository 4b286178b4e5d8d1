//! Early fusion and fixed-length windowing.
//!
//! Selected channels are concatenated along the feature dimension, then cut
//! into `window_len`-sample windows at a configurable stride. Each window's
//! scalar target and provenance come from its final time step; windows that
//! cross a segment boundary are kept and flagged. Standardization is a
//! per-channel z-score fitted on training windows only.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::catalog::{Activity, ChannelId, Condition, Selection};
use crate::dataset::{select_signals, ActivitySegment, SubjectRecording};
use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{Batch, Matrix};

/// Sigma floor for constant channels.
pub const SCALER_STD_FLOOR: f64 = 1e-8;

/// Concatenate equal-length channel sequences into a `[len x n]` matrix,
/// column order following the input order.
pub fn fuse_channels(sequences: &[(ChannelId, &[f64])]) -> Result<Matrix> {
    if sequences.is_empty() {
        return Err(Error::Fusion("no channels to fuse".into()));
    }
    let len = sequences[0].1.len();
    for (id, seq) in sequences {
        if seq.len() != len {
            return Err(Error::Fusion(format!(
                "channel '{id}' has {} samples, expected {len}",
                seq.len()
            )));
        }
    }
    let mut m = Matrix::zeros(len, sequences.len());
    for (j, (_, seq)) in sequences.iter().enumerate() {
        for i in 0..len {
            *m.at_mut(i, j) = seq[i];
        }
    }
    Ok(m)
}

/// One fused series (one subject recording) windows are cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSource {
    pub subject_id: u32,
    /// `[len x n_channels]`, standardized in place once a scaler is applied.
    pub features: Matrix,
    /// Net EE target per sample.
    pub targets: Vec<f64>,
    /// Segment index per sample.
    pub segment_of: Vec<u32>,
    pub segments: Vec<ActivitySegment>,
}

/// Window handle: source series, start sample, transition flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRef {
    pub source: u32,
    pub start: u32,
    pub spans_transition: bool,
}

/// A materialized window with aligned target and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `[window_len x n_channels]`.
    pub features: Matrix,
    /// Target at the window's final time step.
    pub target: f64,
    /// Per-step target sequence.
    pub step_targets: Vec<f64>,
    pub subject_id: u32,
    pub activity: Activity,
    pub condition: Condition,
    pub spans_transition: bool,
}

/// Window provenance without feature materialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowMeta {
    pub subject_id: u32,
    pub activity: Activity,
    pub condition: Condition,
    pub spans_transition: bool,
}

/// Per-channel standardization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fused, windowed dataset over one or more subject recordings.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub window_len: usize,
    pub stride: usize,
    pub channel_order: Vec<ChannelId>,
    pub sources: Vec<SeriesSource>,
    pub windows: Vec<WindowRef>,
    pub scaler: Option<Scaler>,
    /// Set when a series was shorter than `window_len` and produced nothing.
    pub short_series_warning: bool,
}

/// Segment index per sample, gaps inheriting the previous segment.
fn sample_segment_map(n: usize, segments: &[ActivitySegment]) -> Vec<u32> {
    let mut map = vec![u32::MAX; n];
    for (idx, seg) in segments.iter().enumerate() {
        for i in seg.start..seg.end.min(n) {
            map[i] = idx as u32;
        }
    }
    // Leading unlabeled samples backfill from the first segment.
    let mut last = 0u32;
    for v in map.iter_mut() {
        if *v == u32::MAX {
            *v = last;
        } else {
            last = *v;
        }
    }
    map
}

/// Cut one fused series into windows. Windows start at multiples of `stride`;
/// a series shorter than `window_len` yields an empty dataset with the
/// warning flag set.
pub fn make_windows(
    features: Matrix,
    targets: &[f64],
    segments: &[ActivitySegment],
    channel_order: Vec<ChannelId>,
    subject_id: u32,
    window_len: usize,
    stride: usize,
) -> Result<WindowedDataset> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    if window_len == 0 {
        return Err(Error::Config("window length must be at least 1".into()));
    }
    if targets.len() != features.rows {
        return Err(Error::Fusion(format!(
            "targets length {} != feature rows {}",
            targets.len(),
            features.rows
        )));
    }
    let len = features.rows;
    let segment_of = sample_segment_map(len, segments);
    let source = SeriesSource {
        subject_id,
        features,
        targets: targets.to_vec(),
        segment_of,
        segments: segments.to_vec(),
    };

    let mut ds = WindowedDataset {
        window_len,
        stride,
        channel_order,
        sources: vec![source],
        windows: Vec::new(),
        scaler: None,
        short_series_warning: false,
    };
    ds.push_source_windows(0);
    Ok(ds)
}

impl WindowedDataset {
    /// Fuse and window several recordings under one signal selection.
    pub fn from_recordings(
        recordings: &[&SubjectRecording],
        selection: &Selection,
        window_len: usize,
        stride: usize,
    ) -> Result<Self> {
        if recordings.is_empty() {
            return Err(Error::Config("no recordings to window".into()));
        }
        if stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if window_len == 0 {
            return Err(Error::Config("window length must be at least 1".into()));
        }
        let mut ds = Self {
            window_len,
            stride,
            channel_order: selection.channels().to_vec(),
            sources: Vec::new(),
            windows: Vec::new(),
            scaler: None,
            short_series_warning: false,
        };
        for rec in recordings {
            let features = select_signals(rec, selection)?;
            let segment_of = rec.segment_of.clone();
            ds.sources.push(SeriesSource {
                subject_id: rec.subject_id,
                features,
                targets: rec.ee_target.clone(),
                segment_of,
                segments: rec.segments.clone(),
            });
            let si = ds.sources.len() - 1;
            ds.push_source_windows(si);
        }
        Ok(ds)
    }

    fn push_source_windows(&mut self, si: usize) {
        let len = self.sources[si].features.rows;
        if len < self.window_len {
            self.short_series_warning = true;
            return;
        }
        let count = (len - self.window_len) / self.stride + 1;
        for k in 0..count {
            let start = k * self.stride;
            let seg = &self.sources[si].segment_of[start..start + self.window_len];
            let spans_transition = seg.iter().any(|&s| s != seg[0]);
            self.windows.push(WindowRef {
                source: si as u32,
                start: start as u32,
                spans_transition,
            });
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_order.len()
    }

    pub fn meta(&self, i: usize) -> WindowMeta {
        let w = &self.windows[i];
        let src = &self.sources[w.source as usize];
        let end = w.start as usize + self.window_len - 1;
        let seg = &src.segments[src.segment_of[end] as usize];
        WindowMeta {
            subject_id: src.subject_id,
            activity: seg.activity,
            condition: seg.condition,
            spans_transition: w.spans_transition,
        }
    }

    /// Scalar target at the window's final step.
    pub fn target(&self, i: usize) -> f64 {
        let w = &self.windows[i];
        let src = &self.sources[w.source as usize];
        src.targets[w.start as usize + self.window_len - 1]
    }

    /// Materialize window `i`.
    pub fn window(&self, i: usize) -> Window {
        let w = &self.windows[i];
        let src = &self.sources[w.source as usize];
        let start = w.start as usize;
        let c = src.features.cols;
        let mut features = Matrix::zeros(self.window_len, c);
        features
            .data
            .copy_from_slice(&src.features.data[start * c..(start + self.window_len) * c]);
        let meta = self.meta(i);
        Window {
            features,
            target: self.target(i),
            step_targets: src.targets[start..start + self.window_len].to_vec(),
            subject_id: meta.subject_id,
            activity: meta.activity,
            condition: meta.condition,
            spans_transition: meta.spans_transition,
        }
    }

    /// Sample index range `[start, end)` a window covers in its source.
    pub fn sample_range(&self, i: usize) -> (u32, usize, usize) {
        let w = &self.windows[i];
        (w.source, w.start as usize, w.start as usize + self.window_len)
    }

    /// Copy the given windows into a batch buffer, returning scalar targets.
    pub fn fill_batch(&self, idxs: &[usize], batch: &mut Batch, targets: &mut Vec<f64>) {
        let c = self.n_channels();
        debug_assert_eq!(batch.t, self.window_len);
        debug_assert_eq!(batch.c, c);
        debug_assert!(batch.b >= idxs.len());
        targets.clear();
        for (bi, &i) in idxs.iter().enumerate() {
            let w = &self.windows[i];
            let src = &self.sources[w.source as usize];
            let start = w.start as usize;
            let dst = bi * self.window_len * c;
            batch.data[dst..dst + self.window_len * c]
                .copy_from_slice(&src.features.data[start * c..(start + self.window_len) * c]);
            targets.push(self.target(i));
        }
    }

    /// Per-step targets of the given windows as a `[len(idxs) x window_len]` matrix.
    pub fn step_targets(&self, idxs: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(idxs.len(), self.window_len);
        for (bi, &i) in idxs.iter().enumerate() {
            let w = &self.windows[i];
            let src = &self.sources[w.source as usize];
            let start = w.start as usize;
            m.row_mut(bi).copy_from_slice(&src.targets[start..start + self.window_len]);
        }
        m
    }
}

/// Fit a per-channel z-score scaler over the rows of the given windows.
/// Callers pass training windows only.
pub fn fit_scaler(ds: &WindowedDataset, idxs: &[usize]) -> Result<Scaler> {
    let c = ds.n_channels();
    if idxs.is_empty() {
        return Err(Error::Config("cannot fit a scaler on zero windows".into()));
    }
    let mut sum = vec![0.0f64; c];
    let mut sumsq = vec![0.0f64; c];
    let mut count = 0u64;
    for &i in idxs {
        let (src, start, end) = ds.sample_range(i);
        let feats = &ds.sources[src as usize].features;
        for r in start..end {
            let row = feats.row(r);
            for (j, &v) in row.iter().enumerate() {
                sum[j] += v;
                sumsq[j] += v * v;
            }
            count += 1;
        }
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std: Vec<f64> = sumsq
        .iter()
        .zip(&mean)
        .map(|(&sq, &m)| math::sqrt((sq / n - m * m).max(0.0)).max(SCALER_STD_FLOOR))
        .collect();
    Ok(Scaler { mean, std })
}

/// Standardize every source in place. Provenance and targets are untouched.
pub fn apply_scaler(scaler: &Scaler, ds: &mut WindowedDataset) -> Result<()> {
    let c = ds.n_channels();
    if scaler.mean.len() != c || scaler.std.len() != c {
        return Err(Error::Contract(format!(
            "scaler has {} channels, dataset has {c}",
            scaler.mean.len()
        )));
    }
    for src in &mut ds.sources {
        for r in 0..src.features.rows {
            let row = src.features.row_mut(r);
            for j in 0..c {
                row[j] = (row[j] - scaler.mean[j]) / scaler.std[j];
            }
        }
    }
    ds.scaler = Some(scaler.clone());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ChannelId;

    fn plain_segments(bounds: &[(usize, usize)]) -> Vec<ActivitySegment> {
        bounds
            .iter()
            .enumerate()
            .map(|(i, &(start, end))| ActivitySegment {
                activity: if i % 2 == 0 { Activity::Walk } else { Activity::Run },
                condition: if i % 2 == 0 {
                    Condition::Speed { mps: 0.6 }
                } else {
                    Condition::Speed { mps: 1.8 }
                },
                start,
                end,
                session: 1,
            })
            .collect()
    }

    fn toy_dataset(len: usize, window_len: usize, stride: usize) -> WindowedDataset {
        let features = Matrix::from_vec(len, 1, (0..len).map(|i| i as f64).collect());
        let targets: Vec<f64> = (0..len).map(|i| (i as f64) * 0.1).collect();
        let segments = plain_segments(&[(0, len / 2), (len / 2, len)]);
        make_windows(
            features,
            &targets,
            &segments,
            vec![ChannelId::MinuteVentilation],
            1,
            window_len,
            stride,
        )
        .unwrap()
    }

    #[test]
    fn window_count_matches_formula() {
        let ds = toy_dataset(100, 10, 1);
        assert_eq!(ds.len(), 91);
        let ds = toy_dataset(10, 10, 5);
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn window_starts_form_arithmetic_progression() {
        let ds = toy_dataset(57, 8, 3);
        for (k, w) in ds.windows.iter().enumerate() {
            assert_eq!(w.start as usize, k * 3);
        }
        let last = ds.windows.last().unwrap();
        assert!(last.start as usize <= 57 - 8);
    }

    #[test]
    fn transition_windows_are_flagged() {
        let ds = toy_dataset(40, 10, 1);
        // Boundary at sample 20: windows starting in 11..=19 cross it.
        for (k, w) in ds.windows.iter().enumerate() {
            let crosses = k > 20 - 10 && k < 20;
            assert_eq!(w.spans_transition, crosses, "window {k}");
        }
        // Final-step provenance flips at the boundary.
        assert_eq!(ds.meta(5).activity, Activity::Walk);
        assert_eq!(ds.meta(15).activity, Activity::Run);
    }

    #[test]
    fn short_series_yields_empty_with_warning() {
        let ds = toy_dataset(5, 10, 1);
        assert!(ds.is_empty());
        assert!(ds.short_series_warning);
    }

    #[test]
    fn scalar_target_is_final_step() {
        let ds = toy_dataset(30, 10, 1);
        assert!((ds.target(0) - 0.9).abs() < 1e-12);
        let w = ds.window(0);
        assert_eq!(w.step_targets.len(), 10);
        assert!((w.step_targets[0] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn fuse_shapes_and_order() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [10.0, 20.0, 30.0, 40.0, 50.0];
        let m = fuse_channels(&[(ChannelId::WaistAcc, &a), (ChannelId::HeartRate, &b)]).unwrap();
        assert_eq!((m.rows, m.cols), (5, 2));
        assert_eq!(m.at(2, 0), 3.0);
        assert_eq!(m.at(2, 1), 30.0);

        let single = fuse_channels(&[(ChannelId::WaistAcc, &a)]).unwrap();
        assert_eq!((single.rows, single.cols), (5, 1));
        assert_eq!(single.data, a.to_vec());

        // Permutation consistency: swapping inputs swaps columns.
        let swapped = fuse_channels(&[(ChannelId::HeartRate, &b), (ChannelId::WaistAcc, &a)]).unwrap();
        for i in 0..5 {
            assert_eq!(swapped.at(i, 0), m.at(i, 1));
            assert_eq!(swapped.at(i, 1), m.at(i, 0));
        }
    }

    #[test]
    fn fuse_rejects_length_mismatch() {
        let a = [1.0, 2.0];
        let b = [1.0, 2.0, 3.0];
        assert!(fuse_channels(&[(ChannelId::WaistAcc, &a), (ChannelId::HeartRate, &b)]).is_err());
    }

    #[test]
    fn scaler_hand_example() {
        let features = Matrix::from_vec(3, 2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let segments = plain_segments(&[(0, 3)]);
        let ds = make_windows(
            features,
            &[0.0, 0.0, 0.0],
            &segments,
            vec![ChannelId::WaistAcc, ChannelId::HeartRate],
            1,
            3,
            3,
        )
        .unwrap();
        let scaler = fit_scaler(&ds, &[0]).unwrap();
        let mut scaled = ds.clone();
        apply_scaler(&scaler, &mut scaled).unwrap();
        let w = scaled.window(0);
        // Population std of {1,2,3} is sqrt(2/3).
        assert!((w.features.at(0, 0) + 1.224744871391589).abs() < 1e-12);
        assert!((w.features.at(1, 0) - 0.0).abs() < 1e-12);
        assert!((w.features.at(2, 0) - 1.224744871391589).abs() < 1e-12);
        // Constant channel centers to zero under the sigma floor.
        for i in 0..3 {
            assert_eq!(w.features.at(i, 1), 0.0);
        }
        // Provenance untouched.
        assert_eq!(w.activity, ds.window(0).activity);
        assert_eq!(w.target, ds.window(0).target);
    }

    #[test]
    fn scaler_round_trip_statistics() {
        let len = 200;
        let features = Matrix::from_vec(
            len,
            2,
            (0..len * 2).map(|i| ((i * 37) % 101) as f64 * 0.13 - 4.0).collect(),
        );
        let targets = vec![0.0; len];
        let segments = plain_segments(&[(0, len)]);
        let ds = make_windows(
            features,
            &targets,
            &segments,
            vec![ChannelId::WaistAcc, ChannelId::HeartRate],
            1,
            10,
            10,
        )
        .unwrap();
        let idxs: Vec<usize> = (0..ds.len()).collect();
        let scaler = fit_scaler(&ds, &idxs).unwrap();
        let mut scaled = ds;
        apply_scaler(&scaler, &mut scaled).unwrap();

        for j in 0..2 {
            let mut values = Vec::new();
            for &i in &idxs {
                let w = scaled.window(i);
                for r in 0..w.features.rows {
                    values.push(w.features.at(r, j));
                }
            }
            let mean = crate::math::mean(&values);
            let std = crate::math::sqrt(crate::math::variance(&values));
            assert!(mean.abs() < 1e-9, "channel {j} mean {mean}");
            assert!((std - 1.0).abs() < 1e-6, "channel {j} std {std}");
        }
    }
}
