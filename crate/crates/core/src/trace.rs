//! Improvement traces: the `(time, quality)` history of one anytime run.
//!
//! A trace only ever records strict improvements of a minimisation run, so
//! times are strictly increasing and qualities strictly decreasing. Evaluating
//! a trace at time `t` means taking the last improvement at or before `t`;
//! before the first point there is no result yet.

use std::fmt;
use std::fs;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Integer milliseconds, the only time unit used by the engine.
pub type Millis = u64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub time: Millis,
    pub quality: f64,
}

impl Point {
    pub fn new(time: Millis, quality: f64) -> Self {
        Point { time, quality }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TraceSource {
    #[default]
    Replay,
    Live,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ImprovementTrace {
    run_id: String,
    source: TraceSource,
    points: Vec<Point>,
}

fn check_pair(prev: &Point, next: &Point) -> Result<()> {
    if next.time <= prev.time {
        return Err(Error::Validation(format!(
            "time must increase: ({}, {}) followed by ({}, {})",
            prev.time, prev.quality, next.time, next.quality
        )));
    }
    if next.quality >= prev.quality {
        return Err(Error::Validation(format!(
            "quality must strictly decrease: ({}, {}) followed by ({}, {})",
            prev.time, prev.quality, next.time, next.quality
        )));
    }
    Ok(())
}

fn check_point(p: &Point) -> Result<()> {
    if p.time < 1 {
        return Err(Error::Validation(format!(
            "time must be at least 1 ms, got {}",
            p.time
        )));
    }
    if !p.quality.is_finite() {
        return Err(Error::Validation(format!(
            "quality must be finite, got {}",
            p.quality
        )));
    }
    Ok(())
}

impl ImprovementTrace {
    /// Builds a validated trace.
    pub fn new(run_id: impl Into<String>, source: TraceSource, points: Vec<Point>) -> Result<Self> {
        for p in &points {
            check_point(p)?;
        }
        for w in points.windows(2) {
            check_pair(&w[0], &w[1])?;
        }
        Ok(ImprovementTrace {
            run_id: run_id.into(),
            source,
            points,
        })
    }

    /// Convenience constructor from `(time, quality)` tuples.
    pub fn from_pairs(run_id: impl Into<String>, pairs: &[(Millis, f64)]) -> Result<Self> {
        let points = pairs.iter().map(|&(t, q)| Point::new(t, q)).collect();
        Self::new(run_id, TraceSource::Replay, points)
    }

    pub fn empty(run_id: impl Into<String>, source: TraceSource) -> Self {
        ImprovementTrace {
            run_id: run_id.into(),
            source,
            points: Vec::new(),
        }
    }

    /// Appends an improvement, enforcing the ordering invariants.
    pub fn push(&mut self, point: Point) -> Result<()> {
        check_point(&point)?;
        if let Some(last) = self.points.last() {
            check_pair(last, &point)?;
        }
        self.points.push(point);
        Ok(())
    }

    /// Lowers the quality of the last point; used when two improvements land
    /// in the same millisecond.
    pub(crate) fn improve_last(&mut self, quality: f64) -> Result<()> {
        match self.points.last_mut() {
            Some(last) if quality < last.quality && quality.is_finite() => {
                last.quality = quality;
                Ok(())
            }
            _ => Err(Error::Validation(format!(
                "{quality} does not improve the last point"
            ))),
        }
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn set_run_id(&mut self, run_id: impl Into<String>) {
        self.run_id = run_id.into();
    }

    pub fn source(&self) -> TraceSource {
        self.source
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&Point> {
        self.points.last()
    }

    /// View truncated at `horizon`.
    pub fn view(&self, horizon: Millis) -> TraceView<'_> {
        TraceView {
            trace: self,
            horizon,
        }
    }

    /// Best quality reached once `budget` milliseconds have been spent.
    pub fn final_quality(&self, budget: Millis) -> Option<f64> {
        self.view(budget).quality_at(budget)
    }

    /// Parses the text trace format: one `time_ms,quality` pair per line,
    /// `#` comments and blank lines ignored.
    pub fn parse(run_id: impl Into<String>, source: TraceSource, text: &str) -> Result<Self> {
        Self::parse_reader(run_id, source, text.as_bytes())
    }

    pub fn parse_reader<R: BufRead>(
        run_id: impl Into<String>,
        source: TraceSource,
        reader: R,
    ) -> Result<Self> {
        let mut trace = Self::empty(run_id, source);
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let point = parse_point(line).map_err(|m| Error::parse(lineno, m))?;
            trace
                .push(point)
                .map_err(|e| Error::parse(lineno, e.to_string()))?;
        }
        Ok(trace)
    }

    /// Serialises to the text format accepted by [`ImprovementTrace::parse`].
    /// Qualities use the shortest representation that parses back exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 16);
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.time, p.quality));
        }
        out
    }

    pub fn read(path: &Path, source: TraceSource) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let run_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse_reader(run_id, source, std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {}", path.display(), message),
            },
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn is_decimal(s: &str) -> bool {
    !s.is_empty()
        && s.bytes().any(|b| b.is_ascii_digit())
        && s
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b'e' | b'E'))
}

fn parse_point(line: &str) -> std::result::Result<Point, String> {
    let (t, q) = line
        .split_once(',')
        .ok_or_else(|| format!("expected `time_ms,quality`, got `{line}`"))?;
    let (t, q) = (t.trim(), q.trim());
    if !t.bytes().all(|b| b.is_ascii_digit()) || t.is_empty() {
        return Err(format!("time `{t}` is not a base-10 integer"));
    }
    let time: Millis = t
        .parse()
        .map_err(|e| format!("time `{t}` out of range: {e}"))?;
    if !is_decimal(q) {
        return Err(format!("quality `{q}` is not a decimal number"));
    }
    let quality: f64 = q
        .parse()
        .map_err(|e| format!("quality `{q}` is not a decimal number: {e}"))?;
    if !quality.is_finite() {
        return Err(format!("quality `{q}` is not finite"));
    }
    Ok(Point { time, quality })
}

impl AsRef<ImprovementTrace> for ImprovementTrace {
    fn as_ref(&self) -> &ImprovementTrace {
        self
    }
}

impl fmt::Display for ImprovementTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// A trace as seen by someone who has only run it for `horizon` milliseconds.
#[derive(Clone, Copy, Debug)]
pub struct TraceView<'a> {
    trace: &'a ImprovementTrace,
    horizon: Millis,
}

impl<'a> TraceView<'a> {
    pub fn new(trace: &'a ImprovementTrace, horizon: Millis) -> Self {
        TraceView { trace, horizon }
    }

    pub fn trace(&self) -> &'a ImprovementTrace {
        self.trace
    }

    pub fn horizon(&self) -> Millis {
        self.horizon
    }

    /// The points with `time <= horizon`.
    pub fn points(&self) -> &'a [Point] {
        let pts = self.trace.points();
        let end = pts.partition_point(|p| p.time <= self.horizon);
        &pts[..end]
    }

    pub fn len(&self) -> usize {
        self.points().len()
    }

    pub fn is_empty(&self) -> bool {
        self.points().is_empty()
    }

    pub fn first(&self) -> Option<&'a Point> {
        self.points().first()
    }

    pub fn last(&self) -> Option<&'a Point> {
        self.points().last()
    }

    pub fn last_quality(&self) -> Option<f64> {
        self.last().map(|p| p.quality)
    }

    /// Quality of the last improvement at or before `min(t, horizon)`.
    pub fn quality_at(&self, t: Millis) -> Option<f64> {
        let cut = t.min(self.horizon);
        let pts = self.trace.points();
        let end = pts.partition_point(|p| p.time <= cut);
        end.checked_sub(1).map(|i| pts[i].quality)
    }
}

/// All recorded runs of one solver on one instance.
#[derive(Clone, Debug, Default)]
pub struct TraceDataset {
    pub instance_name: String,
    pub traces: Vec<Arc<ImprovementTrace>>,
    /// Best known quality, used for gap reporting.
    pub quality_bound: Option<f64>,
    /// Length each run was recorded for, when known. Continuations past it
    /// are flagged because the recording cannot say what happened next.
    pub run_budget: Option<Millis>,
}

pub const META_FILE: &str = "meta";
pub const TRACE_EXT: &str = "trace";

impl TraceDataset {
    pub fn new(instance_name: impl Into<String>, traces: Vec<ImprovementTrace>) -> Self {
        TraceDataset {
            instance_name: instance_name.into(),
            traces: traces.into_iter().map(Arc::new).collect(),
            quality_bound: None,
            run_budget: None,
        }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Relative gap to the quality bound, or the raw quality without one.
    pub fn gap(&self, quality: f64) -> f64 {
        match self.quality_bound {
            Some(b) if b != 0.0 => (quality - b) / b,
            _ => quality,
        }
    }

    /// Loads a dataset directory: every regular non-hidden file except `meta`
    /// is a trace, read in file-name order.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut files = Vec::new();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            let name = entry.file_name().to_string_lossy().into_owned();
            if !path.is_file() || name.starts_with('.') || name == META_FILE {
                continue;
            }
            files.push(path);
        }
        files.sort();

        let mut dataset = TraceDataset {
            instance_name: dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            ..Default::default()
        };
        let meta = dir.join(META_FILE);
        if meta.is_file() {
            let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
            dataset.apply_meta(&text)?;
        }
        for path in files {
            dataset
                .traces
                .push(Arc::new(ImprovementTrace::read(&path, TraceSource::Replay)?));
        }
        if dataset.traces.is_empty() {
            return Err(Error::Config(format!(
                "dataset {} contains no trace files",
                dir.display()
            )));
        }
        Ok(dataset)
    }

    fn apply_meta(&mut self, text: &str) -> Result<()> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(idx + 1, format!("meta: expected key=value, got `{line}`")))?;
            let value = value.trim();
            let bad = |what: &str| Error::parse(idx + 1, format!("meta: bad {what} `{value}`"));
            match key.trim() {
                "instance_name" => self.instance_name = value.to_string(),
                "quality_bound" => {
                    self.quality_bound = Some(value.parse().map_err(|_| bad("quality_bound"))?)
                }
                "run_budget_ms" => {
                    self.run_budget = Some(value.parse().map_err(|_| bad("run_budget_ms"))?)
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Writes the dataset as `<dir>/<run_id>.trace` files plus `meta`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut meta = format!("instance_name={}\n", self.instance_name);
        if let Some(b) = self.quality_bound {
            meta.push_str(&format!("quality_bound={b}\n"));
        }
        if let Some(b) = self.run_budget {
            meta.push_str(&format!("run_budget_ms={b}\n"));
        }
        let meta_path = dir.join(META_FILE);
        fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
        for trace in &self.traces {
            trace.write(&dir.join(format!("{}.{}", trace.run_id(), TRACE_EXT)))?;
        }
        Ok(())
    }
}
