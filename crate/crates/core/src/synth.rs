//! Synthetic tabular data with planted feature-target structure.
//!
//! Four feature kinds are generated over `2^bits`-valued domains:
//! relevant features drive the target through a bitwise formula,
//! correlated features are noisy copies of the target, redundant features
//! are bitwise functions of relevant ones, and irrelevant features are
//! independent. Rows are spread uniformly over subgroups, each subgroup gets
//! its own cell-noise rate, and systematic missingness is injected last.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{inject_systematic_missingness, partition_subgroups, Column, Dataset, SubgroupData};
use crate::error::{Error, Result};
use crate::info::mi_of_columns;
use crate::rng;

/// Name of the subgrouping column in generated data.
pub const GROUP_COLUMN: &str = "group";
pub const TARGET_COLUMN: &str = "y";

/// Bitwise expression over relevant features `r0, r1, ...`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Var(usize),
    Xor(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, vars: &[u8]) -> u8 {
        match self {
            Expr::Var(i) => vars[*i],
            Expr::Xor(a, b) => a.eval(vars) ^ b.eval(vars),
            Expr::And(a, b) => a.eval(vars) & b.eval(vars),
            Expr::Or(a, b) => a.eval(vars) | b.eval(vars),
        }
    }

    /// Largest variable index plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Var(i) => i + 1,
            Expr::Xor(a, b) | Expr::And(a, b) | Expr::Or(a, b) => a.arity().max(b.arity()),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(i) => write!(f, "r{i}"),
            Expr::Xor(a, b) => write!(f, "({a} ^ {b})"),
            Expr::And(a, b) => write!(f, "({a} & {b})"),
            Expr::Or(a, b) => write!(f, "({a} | {b})"),
        }
    }
}

/// Parses `|`, `^`, `&` with C precedence (`&` binds tightest) and parentheses.
impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tokens: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut p = Parser { t: &tokens, pos: 0 };
        let e = p.or()?;
        if p.pos != tokens.len() {
            return Err(p.fail());
        }
        Ok(e)
    }
}

struct Parser<'a> {
    t: &'a [char],
    pos: usize,
}

impl Parser<'_> {
    fn fail(&self) -> Error {
        Error::Config(format!(
            "formula: unexpected input at position {} in {:?}",
            self.pos,
            self.t.iter().collect::<String>()
        ))
    }

    fn eat(&mut self, c: char) -> bool {
        if self.t.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn or(&mut self) -> Result<Expr> {
        let mut e = self.xor()?;
        while self.eat('|') {
            e = Expr::Or(Box::new(e), Box::new(self.xor()?));
        }
        Ok(e)
    }

    fn xor(&mut self) -> Result<Expr> {
        let mut e = self.and()?;
        while self.eat('^') {
            e = Expr::Xor(Box::new(e), Box::new(self.and()?));
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<Expr> {
        let mut e = self.atom()?;
        while self.eat('&') {
            e = Expr::And(Box::new(e), Box::new(self.atom()?));
        }
        Ok(e)
    }

    fn atom(&mut self) -> Result<Expr> {
        if self.eat('(') {
            let e = self.or()?;
            if !self.eat(')') {
                return Err(self.fail());
            }
            return Ok(e);
        }
        if self.eat('r') {
            let start = self.pos;
            while self.t.get(self.pos).is_some_and(char::is_ascii_digit) {
                self.pos += 1;
            }
            let digits: String = self.t[start..self.pos].iter().collect();
            return digits.parse().map(Expr::Var).map_err(|_| self.fail());
        }
        Err(self.fail())
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_rows: usize,
    pub n_subgroups: usize,
    /// Values of every feature and the target lie in `0..2^bits`.
    pub bits: u32,
    pub relevant: usize,
    pub correlated: usize,
    pub redundant: usize,
    pub irrelevant: usize,
    pub formula: Expr,
    /// Probability that a correlated cell is redrawn instead of copying the target.
    pub flip_rate: f64,
    /// Per-subgroup cell-noise rate is drawn from `N(noise_mean, noise_std)`.
    pub noise_mean: f64,
    pub noise_std: f64,
    /// Systematic missingness probability; `None` skips injection.
    pub missing_p: Option<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_rows: 50_000,
            n_subgroups: 4,
            bits: 2,
            relevant: 4,
            correlated: 2,
            redundant: 2,
            irrelevant: 2,
            formula: "(r0 ^ r1) | (r2 & r3)".parse().expect("valid formula"),
            flip_rate: 0.1,
            noise_mean: 0.05,
            noise_std: 0.02,
            missing_p: Some(0.2),
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// 15 features, 50k rows, 4 subgroups.
    pub fn sd1() -> Self {
        SynthConfig {
            correlated: 3,
            redundant: 3,
            irrelevant: 5,
            ..SynthConfig::default()
        }
    }

    /// 20 features, 50k rows, 4 subgroups.
    pub fn sd2() -> Self {
        SynthConfig {
            correlated: 4,
            redundant: 4,
            irrelevant: 8,
            ..SynthConfig::default()
        }
    }

    pub fn n_features(&self) -> usize {
        self.relevant + self.correlated + self.redundant + self.irrelevant
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_rows == 0 || self.n_subgroups == 0 {
            return bad("rows and subgroups must be positive".into());
        }
        if !(1..=7).contains(&self.bits) {
            return bad(format!("bits = {} outside 1..=7", self.bits));
        }
        if self.n_features() == 0 || self.n_features() > crate::subset::MAX_FEATURES {
            return bad(format!("{} features", self.n_features()));
        }
        if self.relevant > 0 && self.formula.arity() > self.relevant {
            return bad(format!(
                "formula uses r{} but only {} relevant features exist",
                self.formula.arity() - 1,
                self.relevant
            ));
        }
        if (self.correlated > 0 || self.redundant > 0) && self.relevant == 0 {
            return bad("correlated and redundant features need relevant ones".into());
        }
        for (name, r) in [("flip_rate", self.flip_rate), ("noise_mean", self.noise_mean)] {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("{name} = {r} outside [0, 1)"));
            }
        }
        if self.noise_std < 0.0 || !self.noise_std.is_finite() {
            return bad(format!("noise_std = {}", self.noise_std));
        }
        if let Some(p) = self.missing_p {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("missing_p = {p} outside [0, 1)"));
            }
        }
        Ok(())
    }

    /// Selection feature names in column order.
    pub fn feature_names(&self) -> Vec<String> {
        let kinds = [
            ("rel", self.relevant),
            ("cor", self.correlated),
            ("red", self.redundant),
            ("irr", self.irrelevant),
        ];
        kinds
            .iter()
            .flat_map(|&(p, c)| (0..c).map(move |k| format!("{p}{k}")))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    /// Complete table including the group column, before missingness.
    pub dataset: Dataset,
    /// Subgroups after injection; each keeps the complete values as shadow.
    pub subgroups: Vec<SubgroupData>,
    pub noise_rates: Vec<f64>,
}

/// Generates the table and its subgroups.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    let (dataset, noise_rates) = generate_table(config)?;
    let (_, parts) = partition_subgroups(&dataset, &[GROUP_COLUMN])?;
    let subgroups = match config.missing_p {
        Some(p) => inject_systematic_missingness(&parts, p, rng::derive_seed(config.seed, 7))?,
        None => parts
            .into_iter()
            .map(|s| s.with_missing(crate::subset::FeatureSubset::from_bits(0)))
            .collect(),
    };
    Ok(SynthOutput {
        dataset,
        subgroups,
        noise_rates,
    })
}

/// The complete table and the noise rate of each subgroup.
pub fn generate_table(config: &SynthConfig) -> Result<(Dataset, Vec<f64>)> {
    config.validate()?;
    let mut r = rng::seeded(config.seed);
    let card = 1u8 << config.bits;
    let mask = card - 1;
    let n = config.n_features();
    let rows = config.n_rows;
    let p = config.n_subgroups;

    let normal = Normal::new(config.noise_mean, config.noise_std.max(0.0))
        .map_err(|e| Error::Config(e.to_string()))?;
    let noise_rates: Vec<f64> = (0..p)
        .map(|_| normal.sample(&mut r).clamp(0.0, 0.99))
        .collect();

    let mut group = Vec::with_capacity(rows);
    let mut cols: Vec<Vec<u8>> = vec![Vec::with_capacity(rows); n];
    let mut target = Vec::with_capacity(rows);
    let (nr, nc, nd) = (config.relevant, config.correlated, config.redundant);
    let mut row = vec![0u8; n];
    for _ in 0..rows {
        let g = r.random_range(0..p);
        for f in 0..nr {
            row[f] = r.random_range(0..card);
        }
        let y = if nr > 0 {
            config.formula.eval(&row[..nr]) & mask
        } else {
            r.random_range(0..card)
        };
        for k in 0..nc {
            row[nr + k] = if r.random_bool(config.flip_rate) {
                r.random_range(0..card)
            } else {
                y
            };
        }
        for k in 0..nd {
            let a = row[k % nr];
            let b = row[(k + 1) % nr];
            row[nr + nc + k] = if k % 2 == 0 { a ^ b } else { a & b };
        }
        for f in nr + nc + nd..n {
            row[f] = r.random_range(0..card);
        }
        let rate = noise_rates[g];
        if rate > 0.0 {
            for cell in row.iter_mut() {
                if r.random_bool(rate) {
                    *cell = r.random_range(0..card);
                }
            }
        }
        group.push(g as u8);
        target.push(y);
        for (c, &v) in cols.iter_mut().zip(&row) {
            c.push(v);
        }
    }

    let values: Vec<String> = (0..card).map(|v| v.to_string()).collect();
    let mut features = vec![Column::coded(
        GROUP_COLUMN,
        (0..p).map(|g| format!("g{g}")).collect(),
        group,
    )];
    for (name, c) in config.feature_names().into_iter().zip(cols) {
        features.push(Column::coded(name, values.clone(), c));
    }
    let dataset = Dataset::new(features, Column::coded(TARGET_COLUMN, values, target))?;
    Ok((dataset, noise_rates))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantSubgroup {
    pub subgroup: usize,
    pub noise_rate: f64,
    pub mean_planted: f64,
    pub mean_irrelevant: f64,
    pub separated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantReport {
    pub subgroups: Vec<PlantSubgroup>,
    /// Smallest `mean_planted - mean_irrelevant` over subgroups.
    pub margin: f64,
    pub separated: bool,
}

/// Compares level-1 MI of relevant and correlated features against
/// irrelevant ones in every subgroup, on the complete (shadow) values.
pub fn plant_check(output: &SynthOutput, config: &SynthConfig) -> Result<PlantReport> {
    let planted: Vec<usize> = (0..config.relevant + config.correlated).collect();
    let start = config.relevant + config.correlated + config.redundant;
    let irrelevant: Vec<usize> = (start..config.n_features()).collect();
    let mut subgroups = Vec::new();
    for sg in &output.subgroups {
        let cols = sg.truth_columns();
        let mean = |fs: &[usize]| -> Result<f64> {
            if fs.is_empty() {
                return Ok(f64::NAN);
            }
            let mut acc = 0.0;
            for &f in fs {
                acc += mi_of_columns(&[&cols[f]], &sg.target)?;
            }
            Ok(acc / fs.len() as f64)
        };
        let mp = mean(&planted)?;
        let mi = if irrelevant.is_empty() { 0.0 } else { mean(&irrelevant)? };
        subgroups.push(PlantSubgroup {
            subgroup: sg.index,
            noise_rate: output.noise_rates.get(sg.index).copied().unwrap_or(0.0),
            mean_planted: mp,
            mean_irrelevant: mi,
            separated: mp > mi,
        });
    }
    let margin = subgroups
        .iter()
        .map(|s| s.mean_planted - s.mean_irrelevant)
        .fold(f64::INFINITY, f64::min);
    Ok(PlantReport {
        separated: !subgroups.is_empty() && subgroups.iter().all(|s| s.separated),
        margin: if margin.is_nan() { f64::NAN } else { margin },
        subgroups,
    })
}
