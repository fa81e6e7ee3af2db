//! Trajectory domain types and deterministic file I/O.
//!
//! A trajectory is an ordered sequence of feature vectors, optionally paired
//! with an action id per frame. Demonstrations and agent rollouts share the
//! same representation; a source label tells them apart. The on-disk format
//! is a self-describing UTF-8 text format (see [`save_trajectory`]) chosen so
//! files are diffable and round-trip bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("invalid trajectory: {0}")]
    Validation(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// One frame of features: finite entries, dimension >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, TrajectoryError> {
        if values.is_empty() {
            return Err(TrajectoryError::Validation(
                "feature vector must have dimension >= 1".into(),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(TrajectoryError::Validation(format!(
                "feature vector contains non-finite entry {bad}"
            )));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Whether the frames came from a policy rollout or an expert demo.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectorySource {
    Agent,
    Expert,
}

impl TrajectorySource {
    fn token(self) -> &'static str {
        match self {
            TrajectorySource::Agent => "agent",
            TrajectorySource::Expert => "expert",
        }
    }
}

/// An ordered observation sequence with optional per-frame actions.
///
/// Invariants (enforced at construction): at least one frame, all frames
/// share one dimension, and `actions` when present has one entry per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    features: Vec<FeatureVector>,
    actions: Option<Vec<u32>>,
    source: TrajectorySource,
    episode: u64,
}

impl Trajectory {
    pub fn new(
        features: Vec<FeatureVector>,
        actions: Option<Vec<u32>>,
        source: TrajectorySource,
        episode: u64,
    ) -> Result<Self, TrajectoryError> {
        if features.is_empty() {
            return Err(TrajectoryError::Validation(
                "trajectory must have at least one frame".into(),
            ));
        }
        let dim = features[0].dim();
        if let Some((i, f)) = features.iter().enumerate().find(|(_, f)| f.dim() != dim) {
            return Err(TrajectoryError::Validation(format!(
                "frame {i} has dimension {} but frame 0 has {dim}",
                f.dim()
            )));
        }
        if let Some(a) = &actions {
            if a.len() != features.len() {
                return Err(TrajectoryError::Validation(format!(
                    "{} actions for {} frames",
                    a.len(),
                    features.len()
                )));
            }
        }
        Ok(Self {
            features,
            actions,
            source,
            episode,
        })
    }

    /// Build from raw rows of floats, without actions.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        source: TrajectorySource,
        episode: u64,
    ) -> Result<Self, TrajectoryError> {
        let features = rows
            .into_iter()
            .map(FeatureVector::new)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(features, None, source, episode)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        false // T >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.features[0].dim()
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn frame(&self, i: usize) -> &FeatureVector {
        &self.features[i]
    }

    pub fn actions(&self) -> Option<&[u32]> {
        self.actions.as_deref()
    }

    pub fn source(&self) -> TrajectorySource {
        self.source
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }
}

/// A set of expert demonstrations sharing one feature dimension.
///
/// Demos may differ in length; rectangular transport handles that downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    demos: Vec<Trajectory>,
}

impl DemoSet {
    pub fn new(demos: Vec<Trajectory>) -> Result<Self, TrajectoryError> {
        if demos.is_empty() {
            return Err(TrajectoryError::Validation(
                "demo set must contain at least one demo".into(),
            ));
        }
        let dim = demos[0].dim();
        if let Some((i, d)) = demos.iter().enumerate().find(|(_, d)| d.dim() != dim) {
            return Err(TrajectoryError::Validation(format!(
                "demo {i} has dimension {} but demo 0 has {dim}",
                d.dim()
            )));
        }
        Ok(Self { demos })
    }

    pub fn demos(&self) -> &[Trajectory] {
        &self.demos
    }

    pub fn count(&self) -> usize {
        self.demos.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.demos[0].dim()
    }
}

/// Keep frames at indices `0, stride, 2*stride, ...` (the first frame is
/// always included). The new length is `ceil(T / stride)`.
///
/// Composition is exact: subsampling by `a` then by `b` keeps exactly the
/// indices that are multiples of `a*b`, so it equals subsampling by `a*b`.
pub fn subsample_demo(t: &Trajectory, stride: usize) -> Result<Trajectory, TrajectoryError> {
    if stride < 1 {
        return Err(TrajectoryError::Argument(
            "subsample stride must be >= 1".into(),
        ));
    }
    let features = t
        .features
        .iter()
        .step_by(stride)
        .cloned()
        .collect::<Vec<_>>();
    let actions = t
        .actions
        .as_ref()
        .map(|a| a.iter().step_by(stride).copied().collect());
    Trajectory::new(features, actions, t.source, t.episode)
}

/// Shortest decimal that parses back to the same f64.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Serialize a trajectory to the text trajectory format.
///
/// Line 1 is the header `TRAJ v1 dim=<D> len=<T> actions=<0|1>` followed by
/// the optional tokens `source=<agent|expert> episode=<n>`; then one line per
/// frame with space-separated decimal fields, `|` separating the action id
/// when present. Floats are written with shortest round-trip precision, so
/// `load_trajectory(save_trajectory(t)) == t` exactly.
pub fn save_trajectory(t: &Trajectory, path: &Path) -> Result<(), TrajectoryError> {
    let mut out = String::new();
    let has_actions = t.actions.is_some();
    writeln!(
        out,
        "TRAJ v1 dim={} len={} actions={} source={} episode={}",
        t.dim(),
        t.len(),
        u8::from(has_actions),
        t.source.token(),
        t.episode
    )
    .expect("string write");
    for (i, f) in t.features.iter().enumerate() {
        let fields = f
            .values
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(" ");
        match &t.actions {
            Some(a) => writeln!(out, "{fields} | {}", a[i]).expect("string write"),
            None => writeln!(out, "{fields}").expect("string write"),
        }
    }
    fs::write(path, out).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> TrajectoryError {
    TrajectoryError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Load a trajectory file written by [`save_trajectory`].
///
/// Files without the `source=`/`episode=` header tokens are accepted and
/// default to `agent` / episode 0.
pub fn load_trajectory(path: &Path) -> Result<Trajectory, TrajectoryError> {
    let text = fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;

    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("TRAJ") || tokens.next() != Some("v1") {
        return Err(parse_err(path, 1, "expected header starting `TRAJ v1`"));
    }
    let mut dim = None;
    let mut len = None;
    let mut has_actions = None;
    let mut source = TrajectorySource::Agent;
    let mut episode = 0u64;
    for tok in tokens {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(path, 1, format!("malformed header token `{tok}`")))?;
        match key {
            "dim" => dim = Some(parse_header_num(path, value, "dim")?),
            "len" => len = Some(parse_header_num(path, value, "len")?),
            "actions" => {
                has_actions = Some(match value {
                    "0" => false,
                    "1" => true,
                    _ => return Err(parse_err(path, 1, "actions must be 0 or 1")),
                })
            }
            "source" => {
                source = match value {
                    "agent" => TrajectorySource::Agent,
                    "expert" => TrajectorySource::Expert,
                    _ => return Err(parse_err(path, 1, "source must be agent or expert")),
                }
            }
            "episode" => {
                episode = value
                    .parse()
                    .map_err(|_| parse_err(path, 1, format!("bad episode `{value}`")))?
            }
            _ => return Err(parse_err(path, 1, format!("unknown header key `{key}`"))),
        }
    }
    let dim = dim.ok_or_else(|| parse_err(path, 1, "header missing dim="))?;
    let len = len.ok_or_else(|| parse_err(path, 1, "header missing len="))?;
    let has_actions = has_actions.ok_or_else(|| parse_err(path, 1, "header missing actions="))?;

    let mut features = Vec::with_capacity(len);
    let mut actions = has_actions.then(|| Vec::with_capacity(len));
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (feature_part, action_part) = match line.split_once('|') {
            Some((f, a)) => (f, Some(a.trim())),
            None => (line, None),
        };
        if has_actions != action_part.is_some() {
            return Err(parse_err(
                path,
                lineno,
                "record action column disagrees with header actions flag",
            ));
        }
        let values = feature_part
            .split_whitespace()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| parse_err(path, lineno, format!("bad number `{field}`")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if values.len() != dim {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {dim} fields, found {}", values.len()),
            ));
        }
        let fv = FeatureVector::new(values)
            .map_err(|e| parse_err(path, lineno, format!("invalid record: {e}")))?;
        features.push(fv);
        if let Some(acts) = actions.as_mut() {
            let raw = action_part.unwrap();
            let a = raw
                .parse::<u32>()
                .map_err(|_| parse_err(path, lineno, format!("bad action id `{raw}`")))?;
            acts.push(a);
        }
    }
    if features.len() != len {
        return Err(parse_err(
            path,
            1,
            format!("header says len={len} but file has {} records", features.len()),
        ));
    }
    Trajectory::new(features, actions, source, episode)
}

fn parse_header_num(path: &Path, value: &str, key: &str) -> Result<usize, TrajectoryError> {
    value
        .parse::<usize>()
        .map_err(|_| parse_err(path, 1, format!("bad {key} `{value}`")))
}
