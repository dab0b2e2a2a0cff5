use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Flat `key = value` run configuration. `#` starts a comment; unknown or
/// repeated keys are errors. Omitted keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Moving-average length (odd).
    pub window_n: usize,
    /// Powerline notch centre; 0 disables the notch.
    pub notch_hz: f64,
    pub notch_q: f64,
    /// Sample rate of the raw-signal feature block.
    pub fs_out: f64,
    pub pre_s: f64,
    pub post_s: f64,
    /// Density grid nodes per lead; 0 uses one node per sample.
    pub grid_len: usize,
    /// Entropic strength relative to the largest minibatch cost.
    pub lambda: f64,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iter: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub batch_source: usize,
    pub batch_target: usize,
    /// Synthetic beats per minority class; 0 tops every class up to the
    /// largest one.
    pub n_augment: usize,
    pub smote_k: usize,
    pub lr: f64,
    pub l2: f64,
    pub epochs: usize,
    pub epsilons: Vec<f64>,
    pub pgd_steps: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            window_n: 5,
            notch_hz: 50.0,
            notch_q: 30.0,
            fs_out: 50.0,
            pre_s: 0.5,
            post_s: 0.5,
            grid_len: 0,
            lambda: 1e-2,
            sinkhorn_tol: 1e-6,
            sinkhorn_max_iter: 100_000,
            alpha_min: 0.5,
            alpha_max: 0.9,
            batch_source: 32,
            batch_target: 32,
            n_augment: 0,
            smote_k: 5,
            lr: 0.1,
            l2: 1e-4,
            epochs: 500,
            epsilons: vec![0.001, 0.002, 0.003, 0.004],
            pgd_steps: 10,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: bad value `{value}` for `{key}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Config(format!("line {line}: expected key = value")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(Error::Config(format!("line {line}: `{key}` given twice")));
            }
            match key {
                "window_n" => cfg.window_n = parse(key, value, line)?,
                "notch_hz" => cfg.notch_hz = parse(key, value, line)?,
                "notch_q" => cfg.notch_q = parse(key, value, line)?,
                "fs_out" => cfg.fs_out = parse(key, value, line)?,
                "pre_s" => cfg.pre_s = parse(key, value, line)?,
                "post_s" => cfg.post_s = parse(key, value, line)?,
                "grid_len" => cfg.grid_len = parse(key, value, line)?,
                "lambda" => cfg.lambda = parse(key, value, line)?,
                "sinkhorn_tol" => cfg.sinkhorn_tol = parse(key, value, line)?,
                "sinkhorn_max_iter" => cfg.sinkhorn_max_iter = parse(key, value, line)?,
                "alpha_min" => cfg.alpha_min = parse(key, value, line)?,
                "alpha_max" => cfg.alpha_max = parse(key, value, line)?,
                "batch_source" => cfg.batch_source = parse(key, value, line)?,
                "batch_target" => cfg.batch_target = parse(key, value, line)?,
                "n_augment" => cfg.n_augment = parse(key, value, line)?,
                "smote_k" => cfg.smote_k = parse(key, value, line)?,
                "lr" => cfg.lr = parse(key, value, line)?,
                "l2" => cfg.l2 = parse(key, value, line)?,
                "epochs" => cfg.epochs = parse(key, value, line)?,
                "epsilons" => {
                    cfg.epsilons = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| parse(key, s, line))
                        .collect::<Result<_>>()?
                }
                "pgd_steps" => cfg.pgd_steps = parse(key, value, line)?,
                "test_fraction" => cfg.test_fraction = parse(key, value, line)?,
                "seed" => cfg.seed = parse(key, value, line)?,
                _ => return Err(Error::Config(format!("line {line}: unknown key `{key}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.window_n == 0 || self.window_n % 2 == 0 {
            return bad(format!("window_n {} must be odd", self.window_n));
        }
        if !(self.notch_hz >= 0.0 && self.notch_q > 0.0) {
            return bad("notch_hz must be >= 0 and notch_q > 0".into());
        }
        if !(self.fs_out > 0.0 && self.pre_s > 0.0 && self.post_s > 0.0) {
            return bad("fs_out, pre_s and post_s must be > 0".into());
        }
        if self.grid_len == 1 {
            return bad("grid_len must be 0 or >= 2".into());
        }
        if !(self.lambda > 0.0 && self.sinkhorn_tol > 0.0 && self.sinkhorn_max_iter > 0) {
            return bad("lambda, sinkhorn_tol and sinkhorn_max_iter must be > 0".into());
        }
        if !(0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max <= 1.0) {
            return bad(format!(
                "alpha range [{}, {}] not inside [0, 1]",
                self.alpha_min, self.alpha_max
            ));
        }
        if self.batch_source == 0 || self.batch_target == 0 || self.smote_k == 0 {
            return bad("batch sizes and smote_k must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.l2 >= 0.0 && self.epochs > 0 && self.pgd_steps > 0) {
            return bad("lr, epochs and pgd_steps must be > 0, l2 >= 0".into());
        }
        if self.epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return bad("epsilons must be finite and >= 0".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        Ok(())
    }

    /// Canonical text: every key, fixed order, shortest round-trip numbers.
    pub fn to_text(&self) -> String {
        let eps: Vec<String> = self.epsilons.iter().map(|e| e.to_string()).collect();
        let mut s = String::new();
        let pairs: [(&str, String); 23] = [
            ("window_n", self.window_n.to_string()),
            ("notch_hz", self.notch_hz.to_string()),
            ("notch_q", self.notch_q.to_string()),
            ("fs_out", self.fs_out.to_string()),
            ("pre_s", self.pre_s.to_string()),
            ("post_s", self.post_s.to_string()),
            ("grid_len", self.grid_len.to_string()),
            ("lambda", self.lambda.to_string()),
            ("sinkhorn_tol", self.sinkhorn_tol.to_string()),
            ("sinkhorn_max_iter", self.sinkhorn_max_iter.to_string()),
            ("alpha_min", self.alpha_min.to_string()),
            ("alpha_max", self.alpha_max.to_string()),
            ("batch_source", self.batch_source.to_string()),
            ("batch_target", self.batch_target.to_string()),
            ("n_augment", self.n_augment.to_string()),
            ("smote_k", self.smote_k.to_string()),
            ("lr", self.lr.to_string()),
            ("l2", self.l2.to_string()),
            ("epochs", self.epochs.to_string()),
            ("epsilons", eps.join(",")),
            ("pgd_steps", self.pgd_steps.to_string()),
            ("test_fraction", self.test_fraction.to_string()),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of [`RunConfig::to_text`].
    pub fn hash(&self) -> String {
        super::sha256_hex(self.to_text().as_bytes())
    }
}
