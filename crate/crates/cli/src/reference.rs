//! Published reference values shipped as a checked-in constants file. The
//! reproduce commands join computed results against these for side-by-side
//! comparison columns; no logic depends on the numbers themselves.

use anyhow::{bail, Result};

const RAW: &str = include_str!("../assets/reference_values.csv");

#[derive(Debug, Clone)]
pub struct ReferenceRow {
    pub table: String,
    pub key1: String,
    pub key2: String,
    pub key3: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct Reference {
    rows: Vec<ReferenceRow>,
}

impl Reference {
    pub fn load() -> Result<Self> {
        let mut rows = Vec::new();
        for (ln, line) in RAW.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                bail!("reference_values.csv line {}: expected 5 fields", ln + 1);
            }
            rows.push(ReferenceRow {
                table: f[0].into(),
                key1: f[1].into(),
                key2: f[2].into(),
                key3: f[3].into(),
                value: f[4].parse()?,
            });
        }
        Ok(Self { rows })
    }

    /// Overall RMSE for a (selection label, model name) pair.
    pub fn table1(&self, selection: &str, model: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.table == "table1" && r.key1 == selection && r.key2 == model)
            .map(|r| r.value)
    }

    /// `(single signal, nrmse)` and `(group, nrmse)` for one condition.
    pub fn table2(
        &self,
        activity: &str,
        condition: &str,
    ) -> (Option<(String, f64)>, Option<(String, f64)>) {
        let mut single = None;
        let mut group = None;
        for r in &self.rows {
            if r.table == "table2" && r.key1 == activity && r.key2 == condition {
                if let Some(sig) = r.key3.strip_prefix("single:") {
                    single = Some((sig.to_string(), r.value));
                } else if let Some(g) = r.key3.strip_prefix("group:") {
                    group = Some((g.to_string(), r.value));
                }
            }
        }
        (single, group)
    }

    /// All rows of a table, verbatim.
    pub fn table_rows(&self, table: &str) -> Vec<&ReferenceRow> {
        self.rows.iter().filter(|r| r.table == table).collect()
    }

    /// Best published pair for a signal: `(partner, model, rmse)`.
    pub fn best_pair(&self, signal: &str) -> Option<(String, String, f64)> {
        self.rows
            .iter()
            .find(|r| r.table == "s1_best" && r.key1 == signal)
            .map(|r| (r.key2.clone(), r.key3.clone(), r.value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_file_parses_and_spot_checks() {
        let r = Reference::load().unwrap();
        assert_eq!(r.table1("minute_ventilation", "transformer"), Some(0.87));
        assert_eq!(r.table1("hexoskin", "cnn"), Some(0.92));
        assert_eq!(r.table1("minute_ventilation", "linreg"), Some(1.30));
        assert_eq!(r.table1("minute_ventilation", "prior_linreg"), Some(1.24));
        assert_eq!(r.table1("vo2", "transformer"), Some(0.40));

        let (single, group) = r.table2("backward", "1.0mps");
        assert_eq!(single, Some(("minute_ventilation".into(), 0.04)));
        assert_eq!(group, Some(("hexoskin".into(), 0.08)));

        // 21 conditions, two entries each.
        assert_eq!(r.table_rows("table2").len(), 42);
        assert_eq!(r.table_rows("s1_worst").len(), 16);
        assert_eq!(r.table_rows("s1_best").len(), 16);

        let (partner, model, rmse) = r.best_pair("minute_ventilation").unwrap();
        assert_eq!(partner, "emg_mag_l");
        assert_eq!(model, "resnet_attention");
        assert_eq!(rmse, 0.90);
    }

    #[test]
    fn every_table1_model_column_is_complete() {
        let r = Reference::load().unwrap();
        let selections = [
            "waist_acc", "chest_acc", "l_ankle_acc", "r_ankle_acc", "l_wrist_acc",
            "l_wrist_eda", "l_wrist_temp", "r_wrist_acc", "r_wrist_eda", "r_wrist_temp",
            "emg_mag_l", "emg_mag_r", "heart_rate", "spo2", "breath_freq",
            "minute_ventilation", "global", "global-minute_ventilation", "local",
            "local+global", "local+global-minute_ventilation", "hexoskin", "vo2",
        ];
        for sel in selections {
            for model in ["linreg", "cnn", "lstm", "resnet", "resnet_attention", "transformer"] {
                assert!(
                    r.table1(sel, model).is_some(),
                    "missing reference for ({sel}, {model})"
                );
            }
        }
    }
}
