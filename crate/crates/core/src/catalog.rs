//! Signal catalog: the sixteen wearable input channels with their group tags
//! (Local / Global / Hexoskin), the metabolic reference channels, the activity
//! and condition vocabulary, and signal-selection resolution.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel identifiers in canonical order (the order grouped tables and fused
/// matrices use). The last two are metabolic reference channels, not wearable
/// inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelId {
    WaistAcc,
    ChestAcc,
    LeftAnkleAcc,
    RightAnkleAcc,
    LeftWristAcc,
    LeftWristEda,
    LeftWristTemp,
    RightWristAcc,
    RightWristEda,
    RightWristTemp,
    EmgMagLeft,
    EmgMagRight,
    HeartRate,
    SpO2,
    BreathFreq,
    MinuteVentilation,
    Vo2,
    Vco2,
}

/// Group tags a channel may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Local,
    Global,
    Hexoskin,
}

/// One catalog entry: identity, unit, and group memberships.
#[derive(Debug, Clone)]
pub struct SignalChannel {
    pub id: ChannelId,
    pub name: &'static str,
    pub unit: &'static str,
    pub groups: &'static [Group],
    /// Metabolic reference channels are loadable but are not wearable inputs.
    pub metabolic: bool,
}

use Group::{Global, Hexoskin, Local};

/// The full catalog in canonical order: 16 wearable inputs + 2 metabolic.
pub const CATALOG: &[SignalChannel] = &[
    SignalChannel { id: ChannelId::WaistAcc, name: "waist_acc", unit: "m/s^2", groups: &[Local, Hexoskin], metabolic: false },
    SignalChannel { id: ChannelId::ChestAcc, name: "chest_acc", unit: "m/s^2", groups: &[Local, Hexoskin], metabolic: false },
    SignalChannel { id: ChannelId::LeftAnkleAcc, name: "l_ankle_acc", unit: "m/s^2", groups: &[Local], metabolic: false },
    SignalChannel { id: ChannelId::RightAnkleAcc, name: "r_ankle_acc", unit: "m/s^2", groups: &[Local], metabolic: false },
    SignalChannel { id: ChannelId::LeftWristAcc, name: "l_wrist_acc", unit: "m/s^2", groups: &[Local], metabolic: false },
    SignalChannel { id: ChannelId::LeftWristEda, name: "l_wrist_eda", unit: "uS", groups: &[Global], metabolic: false },
    SignalChannel { id: ChannelId::LeftWristTemp, name: "l_wrist_temp", unit: "degC", groups: &[Global], metabolic: false },
    SignalChannel { id: ChannelId::RightWristAcc, name: "r_wrist_acc", unit: "m/s^2", groups: &[Local], metabolic: false },
    SignalChannel { id: ChannelId::RightWristEda, name: "r_wrist_eda", unit: "uS", groups: &[Global], metabolic: false },
    SignalChannel { id: ChannelId::RightWristTemp, name: "r_wrist_temp", unit: "degC", groups: &[Global], metabolic: false },
    SignalChannel { id: ChannelId::EmgMagLeft, name: "emg_mag_l", unit: "a.u.", groups: &[Local], metabolic: false },
    SignalChannel { id: ChannelId::EmgMagRight, name: "emg_mag_r", unit: "a.u.", groups: &[Local], metabolic: false },
    SignalChannel { id: ChannelId::HeartRate, name: "heart_rate", unit: "bpm", groups: &[Global, Hexoskin], metabolic: false },
    SignalChannel { id: ChannelId::SpO2, name: "spo2", unit: "%", groups: &[Global], metabolic: false },
    SignalChannel { id: ChannelId::BreathFreq, name: "breath_freq", unit: "breaths/min", groups: &[Global, Hexoskin], metabolic: false },
    SignalChannel { id: ChannelId::MinuteVentilation, name: "minute_ventilation", unit: "L/min", groups: &[Global, Hexoskin], metabolic: false },
    SignalChannel { id: ChannelId::Vo2, name: "vo2", unit: "L/min", groups: &[], metabolic: true },
    SignalChannel { id: ChannelId::Vco2, name: "vco2", unit: "L/min", groups: &[], metabolic: true },
];

impl ChannelId {
    pub fn entry(self) -> &'static SignalChannel {
        CATALOG.iter().find(|c| c.id == self).expect("catalog covers all ids")
    }

    pub fn name(self) -> &'static str {
        self.entry().name
    }

    pub fn parse(s: &str) -> Result<Self> {
        CATALOG
            .iter()
            .find(|c| c.name == s)
            .map(|c| c.id)
            .ok_or_else(|| Error::Selection(alloc::format!("unknown channel '{s}'")))
    }

    pub fn in_group(self, g: Group) -> bool {
        self.entry().groups.contains(&g)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The sixteen wearable input channels in canonical order.
pub fn input_channels() -> Vec<ChannelId> {
    CATALOG.iter().filter(|c| !c.metabolic).map(|c| c.id).collect()
}

/// Members of a group, in canonical order.
pub fn group_members(g: Group) -> Vec<ChannelId> {
    CATALOG.iter().filter(|c| c.groups.contains(&g)).map(|c| c.id).collect()
}

// ── Signal selection ─────────────────────────────────────────────────────────

/// A resolved signal selection: channel ids in canonical catalog order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    channels: Vec<ChannelId>,
    /// The expression the selection was parsed from, for report labels.
    pub label: String,
}

impl Selection {
    /// Parse a selection expression. Terms are separated by `+`; each term is
    /// a channel name or a group (`local`, `global`, `hexoskin`, `all`), with
    /// optional `-channel` exclusions applied after expansion, e.g.
    /// `global-minute_ventilation` or `local+global-minute_ventilation`.
    pub fn parse(expr: &str) -> Result<Self> {
        let expr = expr.trim();
        if expr.is_empty() {
            return Err(Error::Selection("empty selection".to_string()));
        }
        let mut include: Vec<ChannelId> = Vec::new();
        let mut exclude: Vec<ChannelId> = Vec::new();
        for (i, part) in expr.split('-').enumerate() {
            let part = part.trim();
            if part.is_empty() {
                return Err(Error::Selection(alloc::format!("malformed selection '{expr}'")));
            }
            if i == 0 {
                for term in part.split('+') {
                    include.extend(Self::expand_term(term.trim())?);
                }
            } else {
                exclude.push(ChannelId::parse(part)?);
            }
        }
        include.retain(|c| !exclude.contains(c));
        let mut channels: Vec<ChannelId> = input_channels()
            .into_iter()
            .chain(CATALOG.iter().filter(|c| c.metabolic).map(|c| c.id))
            .filter(|c| include.contains(c))
            .collect();
        channels.dedup();
        if channels.is_empty() {
            return Err(Error::Selection(alloc::format!("selection '{expr}' resolves to no channels")));
        }
        Ok(Self { channels, label: expr.to_string() })
    }

    fn expand_term(term: &str) -> Result<Vec<ChannelId>> {
        match term {
            "local" => Ok(group_members(Group::Local)),
            "global" => Ok(group_members(Group::Global)),
            "hexoskin" => Ok(group_members(Group::Hexoskin)),
            "all" | "local_global" => Ok(input_channels()),
            _ => ChannelId::parse(term).map(|c| alloc::vec![c]),
        }
    }

    pub fn from_channels(channels: &[ChannelId]) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Selection("empty selection".to_string()));
        }
        let mut ordered: Vec<ChannelId> = CATALOG
            .iter()
            .map(|c| c.id)
            .filter(|c| channels.contains(c))
            .collect();
        ordered.dedup();
        let label = ordered.iter().map(|c| c.name()).collect::<Vec<_>>().join("+");
        Ok(Self { channels: ordered, label })
    }

    pub fn channels(&self) -> &[ChannelId] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }
}

// ── Activities and conditions ────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Activity {
    Sit,
    Stand,
    Walk,
    Incline,
    Backward,
    Run,
    Cycle,
    Stairs,
}

impl Activity {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sit => "sit",
            Self::Stand => "stand",
            Self::Walk => "walk",
            Self::Incline => "incline",
            Self::Backward => "backward",
            Self::Run => "run",
            Self::Cycle => "cycle",
            Self::Stairs => "stairs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sit" => Ok(Self::Sit),
            "stand" => Ok(Self::Stand),
            "walk" => Ok(Self::Walk),
            "incline" => Ok(Self::Incline),
            "backward" => Ok(Self::Backward),
            "run" => Ok(Self::Run),
            "cycle" => Ok(Self::Cycle),
            "stairs" => Ok(Self::Stairs),
            _ => Err(Error::Protocol(alloc::format!("unknown activity '{s}'"))),
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Exercise condition of a segment. Speeds are in m/s, inclines in degrees.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum Condition {
    /// Sit / stand segments carry no condition.
    Rest,
    Speed { mps: f64 },
    SpeedIncline { mps: f64, deg: f64 },
    Cadence { rpm: u32, resistance: u32 },
    Power { watts: u32 },
}

impl PartialEq for Condition {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key() == other.cmp_key()
    }
}
impl Eq for Condition {}

impl PartialOrd for Condition {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Condition {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_key().cmp(&other.cmp_key())
    }
}

impl Condition {
    /// Total-order key; speeds are compared in integer millimetres per second
    /// (every condition in the closed set is an exact decimal).
    fn cmp_key(&self) -> (u8, u64, u64) {
        let mm = |v: f64| crate::math::round(v * 1000.0) as u64;
        match *self {
            Self::Rest => (0, 0, 0),
            Self::Speed { mps } => (1, mm(mps), 0),
            Self::SpeedIncline { mps, deg } => (2, mm(mps), crate::math::round(deg * 10.0) as u64),
            Self::Cadence { rpm, resistance } => (3, rpm as u64, resistance as u64),
            Self::Power { watts } => (4, watts as u64, 0),
        }
    }

    /// Canonical text form used in CSV files, e.g. `0.6mps`, `0.6mps_4deg`,
    /// `70rpm_r1`, `60w`, or the empty string for rest.
    pub fn label(&self) -> String {
        match *self {
            Self::Rest => String::new(),
            Self::Speed { mps } => alloc::format!("{mps}mps"),
            Self::SpeedIncline { mps, deg } => alloc::format!("{mps}mps_{deg}deg"),
            Self::Cadence { rpm, resistance } => alloc::format!("{rpm}rpm_r{resistance}"),
            Self::Power { watts } => alloc::format!("{watts}w"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::Rest);
        }
        let bad = || Error::Protocol(alloc::format!("unparsable condition '{s}'"));
        if let Some(w) = s.strip_suffix('w') {
            return Ok(Self::Power { watts: w.parse().map_err(|_| bad())? });
        }
        if let Some((rpm, res)) = s.split_once("rpm_r") {
            return Ok(Self::Cadence {
                rpm: rpm.parse().map_err(|_| bad())?,
                resistance: res.parse().map_err(|_| bad())?,
            });
        }
        if let Some((mps, deg)) = s.split_once("mps_") {
            let deg = deg.strip_suffix("deg").ok_or_else(bad)?;
            return Ok(Self::SpeedIncline {
                mps: mps.parse().map_err(|_| bad())?,
                deg: deg.parse().map_err(|_| bad())?,
            });
        }
        if let Some(mps) = s.strip_suffix("mps") {
            return Ok(Self::Speed { mps: mps.parse().map_err(|_| bad())? });
        }
        Err(bad())
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// The closed set of (activity, condition) pairs used by the recording
/// protocol: 21 exercise conditions plus unconditioned sit / stand.
pub fn protocol_conditions(activity: Activity) -> Vec<Condition> {
    use Condition::*;
    match activity {
        Activity::Sit | Activity::Stand => alloc::vec![Rest],
        Activity::Walk => alloc::vec![
            Speed { mps: 0.6 },
            Speed { mps: 0.9 },
            Speed { mps: 1.2 },
        ],
        Activity::Incline => alloc::vec![
            SpeedIncline { mps: 0.6, deg: 4.0 },
            SpeedIncline { mps: 1.2, deg: 4.0 },
            SpeedIncline { mps: 0.6, deg: 9.0 },
            SpeedIncline { mps: 1.2, deg: 9.0 },
        ],
        Activity::Backward => alloc::vec![
            Speed { mps: 0.4 },
            Speed { mps: 0.7 },
            Speed { mps: 1.0 },
        ],
        Activity::Run => alloc::vec![
            Speed { mps: 1.2 },
            Speed { mps: 1.8 },
            Speed { mps: 2.2 },
            Speed { mps: 2.7 },
        ],
        Activity::Cycle => alloc::vec![
            Cadence { rpm: 70, resistance: 1 },
            Cadence { rpm: 70, resistance: 3 },
            Cadence { rpm: 70, resistance: 5 },
            Cadence { rpm: 100, resistance: 1 },
        ],
        Activity::Stairs => alloc::vec![
            Power { watts: 60 },
            Power { watts: 75 },
            Power { watts: 90 },
        ],
    }
}

/// Check a condition against the closed set for its activity.
pub fn validate_condition(activity: Activity, condition: &Condition) -> Result<()> {
    if protocol_conditions(activity).contains(condition) {
        Ok(())
    } else {
        Err(Error::Protocol(alloc::format!(
            "condition '{}' is not a protocol condition for activity '{}'",
            condition.label(),
            activity.name()
        )))
    }
}
