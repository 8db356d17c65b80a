//! Sampling campaigns: a grid of setups evaluated on paired samples of every
//! dataset, reported as CSV.
//!
//! Configuration is flat `key = value` text under `[section]` headers, with
//! comma-separated lists and `#` comments:
//!
//! ```text
//! [campaign]
//! seed = 7
//! samples = 20
//! tau = zero            # or measured
//! reference = f17       # preset compared against; `none` skips verdicts
//!
//! [datasets]
//! paths = inst-a, inst-b    # relative to the config file
//!
//! [grid]
//! budget_ms = 100000
//! t1_fraction = 0.1, 0.4    # and/or t1_ms = ...
//! k = 40
//! m = 1
//! strategy = even
//! deciders = current-best, diminishing-returns
//!
//! [presets]
//! names = f17, single
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{evaluate, final_qualities, score_results, wilcoxon_rank_sum, SampleSet, ScoreReport, Setup, Verdict};
use crate::budget::{BudgetPlan, Preset, Strategy, TauMode};
use crate::deciders::Decider;
use crate::error::{Error, Result};
use crate::format::{opt_sig12, sig12};
use crate::trace::{Millis, TraceDataset};

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignConfig {
    pub seed: u64,
    pub samples: usize,
    pub tau: TauMode,
    pub reference: Option<Preset>,
    pub datasets: Vec<PathBuf>,
    pub budgets: Vec<Millis>,
    pub t1_ms: Vec<Millis>,
    pub t1_fractions: Vec<f64>,
    pub ks: Vec<usize>,
    pub ms: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub deciders: Vec<Decider>,
    pub presets: Vec<Preset>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            seed: 0,
            samples: 20,
            tau: TauMode::Zero,
            reference: Some(Preset::F17),
            datasets: Vec::new(),
            budgets: Vec::new(),
            t1_ms: Vec::new(),
            t1_fractions: Vec::new(),
            ks: vec![1],
            ms: vec![1],
            strategies: vec![Strategy::Even],
            deciders: Vec::new(),
            presets: Vec::new(),
        }
    }
}

fn list<T: FromStr>(value: &str, key: &str, line: usize) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| Error::Config(format!("line {line}: bad {key} `{s}`: {e}")))
        })
        .collect()
}

fn single<T: FromStr>(value: &str, key: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Config(format!("line {line}: bad {key} `{value}`: {e}")))
}

impl CampaignConfig {
    /// Parses config text; dataset paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = CampaignConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected `key = value`")))?;
            let (key, value) = (key.trim(), value.trim());
            match (section.as_str(), key) {
                ("campaign", "seed") => cfg.seed = single(value, key, line_no)?,
                ("campaign", "samples") => cfg.samples = single(value, key, line_no)?,
                ("campaign", "tau") => cfg.tau = single(value, key, line_no)?,
                ("campaign", "reference") => {
                    cfg.reference = match value {
                        "none" => None,
                        v => Some(single(v, key, line_no)?),
                    }
                }
                ("datasets", "paths") => {
                    cfg.datasets = list::<String>(value, key, line_no)?
                        .into_iter()
                        .map(|p| base.join(p))
                        .collect()
                }
                ("grid", "budget_ms") => cfg.budgets = list(value, key, line_no)?,
                ("grid", "t1_ms") => cfg.t1_ms = list(value, key, line_no)?,
                ("grid", "t1_fraction") => cfg.t1_fractions = list(value, key, line_no)?,
                ("grid", "k") => cfg.ks = list(value, key, line_no)?,
                ("grid", "m") => cfg.ms = list(value, key, line_no)?,
                ("grid", "strategy") => cfg.strategies = list(value, key, line_no)?,
                ("grid", "deciders") => cfg.deciders = list(value, key, line_no)?,
                ("presets", "names") => cfg.presets = list(value, key, line_no)?,
                _ => {
                    return Err(Error::Config(format!(
                        "line {line_no}: unknown key `{key}` in section [{section}]"
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no datasets configured".into()));
        }
        if self.budgets.is_empty() {
            return Err(Error::Config("no budget_ms configured".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if !self.deciders.is_empty() && self.t1_ms.is_empty() && self.t1_fractions.is_empty() {
            return Err(Error::Config("grid deciders need t1_ms or t1_fraction".into()));
        }
        if let Some(f) = self.t1_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::Config(format!("t1_fraction {f} outside [0, 1]")));
        }
        if self.deciders.is_empty() && self.presets.is_empty() {
            return Err(Error::Config("no deciders or presets configured".into()));
        }
        Ok(())
    }

    /// Every configured setup, budget-major, grid before presets.
    pub fn setups(&self) -> Result<Vec<Setup>> {
        let mut out: Vec<Setup> = Vec::new();
        for &total in &self.budgets {
            for &strategy in &self.strategies {
                for &k in &self.ks {
                    for &m in &self.ms {
                        let unit = BudgetPlan { total, init: 0, k, m, strategy }.unit();
                        let mut inits: Vec<Millis> = self.t1_ms.clone();
                        inits.extend(
                            self.t1_fractions
                                .iter()
                                .map(|f| ((f * total as f64) as u64 / unit) * unit),
                        );
                        for &init in &inits {
                            let plan = BudgetPlan::new(total, init, k, m, strategy)?;
                            for decider in &self.deciders {
                                out.push(Setup::new(plan, decider.clone()));
                            }
                        }
                    }
                }
            }
            for &preset in &self.presets {
                out.push(Setup::preset(preset, total)?);
            }
        }
        let mut seen = std::collections::HashSet::new();
        out.retain(|s| seen.insert(s.label.clone()));
        Ok(out)
    }
}

/// Rendered report files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CampaignOutput {
    pub results_csv: String,
    pub scores_csv: String,
    pub verdicts_csv: String,
    pub verdict_counts_csv: String,
    pub summary: String,
    pub scores: ScoreReport,
}

impl CampaignOutput {
    pub const FILES: [&'static str; 4] = ["results.csv", "scores.csv", "verdicts.csv", "verdict_counts.csv"];

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let contents = [
            &self.results_csv,
            &self.scores_csv,
            &self.verdicts_csv,
            &self.verdict_counts_csv,
        ];
        for (name, body) in Self::FILES.iter().zip(contents) {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("summary.txt");
        fs::write(&path, &self.summary).map_err(|e| Error::io(&path, e))
    }
}

const RESULTS_HEADER: &str = "\
# one row per (instance, setup, sample)
# final_quality: best quality among continued runs, NA if none measured
# winner: run id of the continued run that reached final_quality
# baseline: first run of the sample continued for the whole budget
instance,setup,decider,T,t1,k,m,strategy,sample,final_quality,winner,tau,baseline
";

const SCORES_HEADER: &str = "\
# one row per (instance, setup); score = (losses - wins) / samples against the single-run baseline, lower is better
# mean_gap: (mean_final - quality_bound) / quality_bound, or mean_final without a bound
# sample_checksum: FNV-1a of the sampled run indices; equal values mean paired samples
instance,setup,samples,wins,losses,ties,score,mean_final,mean_gap,sample_checksum
";

const VERDICTS_HEADER: &str = "\
# one row per (instance, setup): two-sided rank-sum test of the setup's final qualities against the reference at p < 0.05
# rank_sum: rank sum of the setup's sample
instance,setup,reference,verdict,p_value,rank_sum
";

const COUNTS_HEADER: &str = "\
# one row per setup: number of instances per verdict against the reference
setup,reference,better,worse,identical,insignificant
";

/// Verdict tallies of one setup.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VerdictCounts {
    pub better: usize,
    pub worse: usize,
    pub identical: usize,
    pub insignificant: usize,
}

impl VerdictCounts {
    fn add(&mut self, v: Verdict) {
        match v {
            Verdict::Better => self.better += 1,
            Verdict::Worse => self.worse += 1,
            Verdict::Identical => self.identical += 1,
            Verdict::Insignificant => self.insignificant += 1,
        }
    }
}

/// Runs the campaign over already loaded datasets.
///
/// Fails if the single-run preset does not score exactly zero against its
/// own baseline on every instance.
pub fn run_campaign(config: &CampaignConfig, datasets: &[TraceDataset]) -> Result<CampaignOutput> {
    let setups = config.setups()?;
    let references: BTreeMap<Millis, Setup> = match config.reference {
        Some(p) => config
            .budgets
            .iter()
            .map(|&t| Ok((t, Setup::preset(p, t)?)))
            .collect::<Result<_>>()?,
        None => BTreeMap::new(),
    };
    let k = setups
        .iter()
        .chain(references.values())
        .map(|s| s.plan.k)
        .max()
        .unwrap_or(1);

    let mut out = CampaignOutput {
        results_csv: RESULTS_HEADER.to_string(),
        scores_csv: SCORES_HEADER.to_string(),
        verdicts_csv: VERDICTS_HEADER.to_string(),
        verdict_counts_csv: COUNTS_HEADER.to_string(),
        ..Default::default()
    };
    let mut counts: Vec<VerdictCounts> = vec![VerdictCounts::default(); setups.len()];
    let mut self_test = Vec::new();

    for dataset in datasets {
        let samples = SampleSet::draw(dataset.len(), k, config.samples, config.seed)?;
        let checksum = samples.checksum();

        for &total in &config.budgets {
            let single = Setup::preset(Preset::Single, total)?;
            let results = evaluate(dataset, &single, &samples, config.seed, config.tau)?;
            let row = score_results(dataset, &single, &samples, &results);
            if row.counts.score() != 0.0 || row.counts.ties != config.samples {
                return Err(Error::Config(format!(
                    "single-run self-test failed on {} at T = {total}: {:?}",
                    dataset.instance_name, row.counts
                )));
            }
            self_test.push((dataset.instance_name.clone(), total));
        }

        let reference_finals: BTreeMap<Millis, Vec<f64>> = references
            .iter()
            .map(|(&t, s)| {
                Ok((
                    t,
                    final_qualities(&evaluate(dataset, s, &samples, config.seed, config.tau)?),
                ))
            })
            .collect::<Result<_>>()?;

        for (si, setup) in setups.iter().enumerate() {
            let results = evaluate(dataset, setup, &samples, config.seed, config.tau)?;
            let p = &setup.plan;
            for (s, (sample, r)) in samples.samples.iter().zip(&results).enumerate() {
                let baseline = super::single_run_baseline(dataset, sample, p.total);
                writeln!(
                    out.results_csv,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    dataset.instance_name,
                    setup.label,
                    setup.decider,
                    p.total,
                    p.init,
                    p.k,
                    p.m,
                    p.strategy,
                    s,
                    opt_sig12(r.final_quality),
                    r.winner_run_id.as_deref().unwrap_or("NA"),
                    r.tau,
                    opt_sig12(baseline),
                )
                .expect("write to string");
            }
            let row = score_results(dataset, setup, &samples, &results);
            debug_assert_eq!(row.sample_checksum, checksum);
            writeln!(
                out.scores_csv,
                "{},{},{},{},{},{},{},{},{},{:016x}",
                row.instance,
                row.setup,
                row.counts.samples(),
                row.counts.wins,
                row.counts.losses,
                row.counts.ties,
                sig12(row.counts.score()),
                sig12(row.mean_final),
                sig12(row.mean_gap),
                row.sample_checksum,
            )
            .expect("write to string");
            out.scores.rows.push(row);

            if let Some(reference) = reference_finals.get(&p.total) {
                let v = wilcoxon_rank_sum(&final_qualities(&results), reference);
                counts[si].add(v.verdict);
                writeln!(
                    out.verdicts_csv,
                    "{},{},{},{},{},{}",
                    dataset.instance_name,
                    setup.label,
                    references[&p.total].label,
                    v.verdict,
                    sig12(v.p_value),
                    sig12(v.statistic),
                )
                .expect("write to string");
            }
        }
    }

    if !references.is_empty() {
        for (setup, c) in setups.iter().zip(&counts) {
            writeln!(
                out.verdict_counts_csv,
                "{},{},{},{},{},{}",
                setup.label,
                references[&setup.plan.total].label,
                c.better,
                c.worse,
                c.identical,
                c.insignificant
            )
            .expect("write to string");
        }
    }
    out.summary = summary(&setups, &out.scores, &counts, !references.is_empty(), self_test.len());
    Ok(out)
}

fn summary(
    setups: &[Setup],
    scores: &ScoreReport,
    counts: &[VerdictCounts],
    with_verdicts: bool,
    self_tests: usize,
) -> String {
    let means = scores.setup_means();
    let width = setups.iter().map(|s| s.label.len()).max().unwrap_or(5).max(5);
    let mut s = String::new();
    if with_verdicts {
        writeln!(s, "{:<width$}  {:>10}  {:>6}  {:>6}  {:>9}  {:>13}", "setup", "mean score", "better", "worse", "identical", "insignificant").unwrap();
    } else {
        writeln!(s, "{:<width$}  {:>10}", "setup", "mean score").unwrap();
    }
    for ((setup, c), (_, mean)) in setups.iter().zip(counts).zip(&means) {
        if with_verdicts {
            writeln!(
                s,
                "{:<width$}  {:>10}  {:>6}  {:>6}  {:>9}  {:>13}",
                setup.label,
                sig(*mean),
                c.better,
                c.worse,
                c.identical,
                c.insignificant
            )
            .unwrap();
        } else {
            writeln!(s, "{:<width$}  {:>10}", setup.label, sig(*mean)).unwrap();
        }
    }
    writeln!(s, "single-run self-test: passed on {self_tests} (instance, T) pairs").unwrap();
    s
}

fn sig(x: f64) -> String {
    crate::format::sig(x, 4)
}

/// Loads every dataset the config names.
pub fn load_datasets(config: &CampaignConfig) -> Result<Vec<TraceDataset>> {
    config.datasets.iter().map(|p| TraceDataset::load(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::ImprovementTrace;

    const CONFIG: &str = "
[campaign]
seed = 7
samples = 10
tau = zero
reference = none

[datasets]
paths = a, b   # two instances

[grid]
budget_ms = 10000
t1_ms = 1000
k = 4
m = 1, 2
strategy = even
deciders = current-best, random
";

    fn dataset(name: &str, n: usize) -> TraceDataset {
        let traces = (0..n)
            .map(|i| {
                let s = (i * 37 % 11) as f64;
                ImprovementTrace::from_pairs(
                    format!("r{i}"),
                    &[(1 + (i as u64 % 3), 900.0 - s), (100 + 7 * i as u64, 500.0 - 2.0 * s), (4000 + i as u64, 100.0 + (i % 5) as f64)],
                )
                .unwrap()
            })
            .collect();
        TraceDataset::new(name, traces)
    }

    #[test]
    fn parses_and_expands_the_grid() {
        let cfg = CampaignConfig::parse(CONFIG, Path::new("/data")).unwrap();
        assert_eq!(cfg.datasets, vec![PathBuf::from("/data/a"), PathBuf::from("/data/b")]);
        assert_eq!(cfg.reference, None);
        let setups = cfg.setups().unwrap();
        assert_eq!(setups.len(), 4);
        assert_eq!(setups[0].label, "current-best@T10000/t1-1000/k4/m1/even");
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = CONFIG.replace("current-best", "cleverest");
        assert!(matches!(CampaignConfig::parse(&bad, Path::new(".")), Err(Error::Config(_))));
        let bad = CONFIG.replace("samples = 10", "sample = 10");
        assert!(CampaignConfig::parse(&bad, Path::new(".")).is_err());
        let bad = CONFIG.replace("t1_ms = 1000", "t1_ms = 1001");
        let cfg = CampaignConfig::parse(&bad, Path::new(".")).unwrap();
        assert!(cfg.setups().is_err());
    }

    #[test]
    fn fractions_round_down_to_the_unit() {
        let cfg = CampaignConfig::parse(&CONFIG.replace("t1_ms = 1000", "t1_fraction = 0.0333"), Path::new(".")).unwrap();
        assert_eq!(cfg.setups().unwrap()[0].plan.init, 332);
    }

    #[test]
    fn row_accounting_and_self_test() {
        let cfg = CampaignConfig::parse(CONFIG, Path::new(".")).unwrap();
        let out = run_campaign(&cfg, &[dataset("a", 12), dataset("b", 9)]).unwrap();
        let rows = |s: &str| s.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(rows(&out.results_csv), 2 * 4 * 10);
        assert_eq!(rows(&out.scores_csv), 2 * 4);
        assert_eq!(rows(&out.verdicts_csv), 0);
        assert!(out.summary.contains("self-test: passed on 2"));
    }

    #[test]
    fn paired_setups_share_checksums() {
        let cfg = CampaignConfig::parse(CONFIG, Path::new(".")).unwrap();
        let out = run_campaign(&cfg, &[dataset("a", 12)]).unwrap();
        let sums: Vec<&str> = out.scores_csv.lines().skip(4).map(|l| l.rsplit(',').next().unwrap()).collect();
        assert!(sums.windows(2).all(|w| w[0] == w[1]), "{sums:?}");
    }
}
