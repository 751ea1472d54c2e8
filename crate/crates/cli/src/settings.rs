//! Effective run configuration: a flat `key = value` file overlaid with
//! command-line flags. Every lookup is recorded so reports can carry the
//! values that were actually used.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Keys accepted in a config file, with a one-line description each.
pub const KEYS: &[(&str, &str)] = &[
    ("events", "event file path"),
    ("profiles", "profile file path"),
    ("out", "output directory"),
    ("seed", "random seed for synth and selftest"),
    ("jobs", "worker threads (default: available cores)"),
    ("k", "repeat window length in days"),
    ("direction", "repeat window direction: forward or backward"),
    ("adjustment", "Dunn p-value adjustment: none or bonferroni"),
    ("p_values", "rank-test p-values: auto, exact or asymptotic"),
    ("max_calories", "drop entries above this many kcal"),
    ("drop_negative_portion", "drop entries with a negative portion"),
    ("denylist", "comma-separated description substrings to drop"),
    ("item_min_users", "p-core: minimum distinct users per item"),
    ("user_min_items", "p-core: minimum distinct items per user"),
    ("window", "session window in days"),
    ("lambda_grid", "comma-separated decay rates in (0, 1]"),
    ("methods", "comma-separated: mixture, mixture_tw, global, personal"),
    ("top_n", "comma-separated cutoffs for the all-item scope"),
    ("novel_n", "cutoff for the novel-only scope"),
    ("meal", "comma-separated runs: all, breakfast, lunch, dinner, snack"),
    ("group_by", "comma-separated: gender, age_group, region, weekday, weekday_or_weekend, meal_scope"),
    ("eligibility", "train_and_validation or train_only"),
    ("em_data", "validation or train_and_validation"),
    ("em_tol", "EM convergence tolerance"),
    ("em_max_iter", "EM iteration cap"),
    ("em_init", "initial mixture weight"),
    ("gain", "nDCG gain: linear or exponential"),
    ("normalization", "count normalization: l1_per_user or raw"),
    ("objective", "tuning objective metric: recall, precision or ndcg"),
    ("objective_n", "tuning objective cutoff"),
    ("n_users", "synth: users"),
    ("n_items", "synth: catalogue size"),
    ("n_days", "synth: days"),
    ("pi", "synth: fixed:P or uniform:LO:HI"),
    ("pool_size", "synth: personal pool size"),
    ("popularity_exponent", "synth: power-law exponent of the population"),
    ("items_per_day", "synth: mean events per user-day"),
    ("popular_items", "synth: population support size (pools drawn from the rest)"),
    ("shift_day", "synth: day on which personal pools change"),
    ("start", "synth: date of day 0 (YYYY-MM-DD)"),
];

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
pub fn parse_config(text: &str, source: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", source.display(), i + 1);
        };
        let key = key.trim().replace('-', "_");
        if !known(&key) {
            bail!("{}:{}: unknown key `{key}`", source.display(), i + 1);
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    used: RefCell<Vec<(String, String)>>,
}

impl Settings {
    /// Loads `config` if given, then applies the flag overrides.
    pub fn load(config: Option<&Path>, overrides: Vec<(&str, Option<String>)>) -> Result<Self> {
        let mut values = match config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
                parse_config(&text, path)?
            }
            None => BTreeMap::new(),
        };
        for (key, value) in overrides {
            debug_assert!(known(key), "flag without config key: {key}");
            if let Some(v) = value {
                values.insert(key.to_string(), v);
            }
        }
        Ok(Self { values, used: RefCell::new(Vec::new()) })
    }

    fn record(&self, key: &str, value: String) {
        let mut used = self.used.borrow_mut();
        if !used.iter().any(|(k, _)| k == key) {
            used.push((key.to_string(), value));
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Value parsed with `FromStr`, or `default`.
    pub fn get<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match self.raw(key) {
            Some(s) => s.parse::<T>().map_err(|e| anyhow::anyhow!("invalid value `{s}` for `{key}`: {e}"))?,
            None => default,
        };
        self.record(key, value.to_string());
        Ok(value)
    }

    /// Value parsed with `parse`, or `default`; `render` feeds the header.
    pub fn get_with<T>(
        &self,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> Option<T>,
        render: impl Fn(&T) -> String,
    ) -> Result<T> {
        let value = match self.raw(key) {
            Some(s) => parse(s).ok_or_else(|| anyhow::anyhow!("invalid value `{s}` for `{key}`"))?,
            None => default,
        };
        self.record(key, render(&value));
        Ok(value)
    }

    /// Comma-separated list; each element parsed with `parse`.
    pub fn list<T>(
        &self,
        key: &str,
        default: Vec<T>,
        parse: impl Fn(&str) -> Option<T>,
        render: impl Fn(&T) -> String,
    ) -> Result<Vec<T>> {
        let value = match self.raw(key) {
            Some(s) => s
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(|p| parse(p).ok_or_else(|| anyhow::anyhow!("invalid element `{p}` in `{key}`")))
                .collect::<Result<Vec<T>>>()?,
            None => default,
        };
        self.record(key, value.iter().map(&render).collect::<Vec<_>>().join(","));
        Ok(value)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let p = self.raw(key).map(PathBuf::from);
        if let Some(p) = &p {
            self.record(key, p.display().to_string());
        }
        p
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key).with_context(|| format!("missing `{key}` (flag --{} or config key)", key.replace('_', "-")))
    }

    /// Values looked up so far, in lookup order.
    pub fn used(&self) -> Vec<(String, String)> {
        self.used.borrow().clone()
    }
}
