//! Prompt grammar.
//!
//! Structured context is rendered into fixed-form sentences, and every
//! sentence the pipeline emits can be parsed back. External backends target
//! exactly these surface forms; see `docs/grammar.md`.
//!
//! A composed prompt is the single-space concatenation of its components in
//! a fixed order: history, installed apps (stage 2), prediction time, POI,
//! and (stage 2) the stage-1 result sentence.

mod grammar;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AppId;
use crate::pipeline::AblationFlags;

pub use grammar::{is_safe_label, normalize_label, PredictionTime};
use grammar::{join_plain, join_serial, parse_app_id, parse_decimal, split_plain, split_serial};

/// Longest app / category history carried into a prompt.
pub const MAX_HISTORY: usize = 15;

const STAGE1_PREFIX: &str = "Based on the global information, the next app will be a ";
const TARGET_PREFIX: &str = "This user will use App ";
const INSTALLED_SEP: &str = " apps : ";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("empty prompt: no history and every other component disabled")]
    EmptyPrompt,
    #[error("empty type distribution")]
    EmptyDistribution,
    #[error("invalid context bundle: {0}")]
    InvalidBundle(String),
}

/// Generated text that does not belong to the grammar. The candidate is
/// discarded; a run never aborts on it.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("off-grammar text ({reason}): {text:?}")]
pub struct ParseFailure {
    pub reason: &'static str,
    pub text: String,
}

fn fail<T>(reason: &'static str, text: &str) -> Result<T, ParseFailure> {
    Err(ParseFailure {
        reason,
        text: text.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    One,
    Two,
}

impl TryFrom<u8> for Stage {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Stage::One),
            2 => Ok(Stage::Two),
            other => Err(format!("stage must be 1 or 2, got {other}")),
        }
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        match s {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    HistoryApps,
    InstalledApps,
    HistoryCategories,
    PredictionTime,
    Poi,
    Stage1Result,
    Stage2Target,
    Stage1Input,
    Stage2Input,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSentence {
    pub text: String,
    pub kind: PromptKind,
}

impl PromptSentence {
    fn new(text: String, kind: PromptKind) -> Self {
        Self { text, kind }
    }
}

impl fmt::Display for PromptSentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Prefix and suffix around a component body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub prefix: &'static str,
    pub suffix: &'static str,
}

/// Phrasing of the input components. Both sets share one structure; only
/// the fixed words around each body differ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateSet {
    #[default]
    Canonical,
    /// "The user has recently used ..." / "It is ..." / "The user frequently visits ...".
    Alternate,
}

impl TemplateSet {
    pub fn history(self) -> Frame {
        match self {
            TemplateSet::Canonical => Frame {
                prefix: "The apps ",
                suffix: " are used prior to the prediction.",
            },
            TemplateSet::Alternate => Frame {
                prefix: "The user has recently used ",
                suffix: ".",
            },
        }
    }

    pub fn time(self) -> Frame {
        match self {
            TemplateSet::Canonical => Frame {
                prefix: "On ",
                suffix: "",
            },
            TemplateSet::Alternate => Frame {
                prefix: "It is ",
                suffix: ".",
            },
        }
    }

    pub fn poi(self) -> Frame {
        match self {
            TemplateSet::Canonical => Frame {
                prefix: "The user is close to ",
                suffix: ".",
            },
            TemplateSet::Alternate => Frame {
                prefix: "The user frequently visits ",
                suffix: ".",
            },
        }
    }
}

impl std::str::FromStr for TemplateSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(Self::Canonical),
            "alternate" => Ok(Self::Alternate),
            other => Err(format!("unknown template set {other:?}")),
        }
    }
}

/// Structured context for one prediction point.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContextBundle {
    /// Oldest first, at most [`MAX_HISTORY`].
    pub app_history: Vec<AppId>,
    /// Category names, index-aligned with `app_history`.
    pub category_history: Vec<String>,
    pub prediction_time: Option<PredictionTime>,
    pub poi_labels: Option<Vec<String>>,
    /// Category name to the user's installed apps in that category.
    pub installed_apps: BTreeMap<String, Vec<AppId>>,
}

impl ContextBundle {
    pub fn validate(&self) -> Result<(), TemplateError> {
        let bad = |m: String| Err(TemplateError::InvalidBundle(m));
        if self.app_history.len() > MAX_HISTORY || self.category_history.len() > MAX_HISTORY {
            return bad(format!("history longer than {MAX_HISTORY}"));
        }
        if self.app_history.len() != self.category_history.len() {
            return bad("app and category histories are not aligned".into());
        }
        let labels = self
            .category_history
            .iter()
            .chain(self.installed_apps.keys())
            .chain(self.poi_labels.iter().flatten());
        for label in labels {
            if !is_safe_label(label) {
                return bad(format!("label {label:?} is not grammar-safe"));
            }
        }
        Ok(())
    }
}

/// One component of a composed prompt as parsed or about to be rendered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum History {
    Apps(Vec<AppId>),
    Categories(Vec<String>),
}

/// Rendered view of a type distribution: category name and integer percent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeShare {
    pub category: String,
    pub percent: u32,
}

/// The components of a composed prompt; `render` and [`parse_prompt`] are
/// inverse to each other.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptParts {
    pub history: Option<History>,
    pub installed: Option<BTreeMap<String, Vec<AppId>>>,
    pub time: Option<PredictionTime>,
    pub poi: Option<Vec<String>>,
    pub stage1: Option<Vec<TypeShare>>,
}

impl PromptParts {
    /// Projects a bundle onto the components enabled for `stage`.
    pub fn from_bundle(bundle: &ContextBundle, stage: Stage, flags: &AblationFlags) -> Self {
        let history = match stage {
            Stage::One if !bundle.category_history.is_empty() => {
                Some(History::Categories(bundle.category_history.clone()))
            }
            Stage::Two if flags.use_app_history && !bundle.app_history.is_empty() => {
                Some(History::Apps(bundle.app_history.clone()))
            }
            _ => None,
        };
        let installed = (stage == Stage::Two && flags.use_installed_apps)
            .then(|| {
                bundle
                    .installed_apps
                    .iter()
                    .filter(|(_, apps)| !apps.is_empty())
                    .map(|(c, apps)| (c.clone(), apps.clone()))
                    .collect::<BTreeMap<_, _>>()
            })
            .filter(|m| !m.is_empty());
        let poi = bundle
            .poi_labels
            .as_ref()
            .filter(|p| flags.use_optional_context && !p.is_empty())
            .cloned();
        Self {
            history,
            installed,
            time: bundle.prediction_time,
            poi,
            stage1: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_none()
            && self.installed.is_none()
            && self.time.is_none()
            && self.poi.is_none()
            && self.stage1.is_none()
    }

    pub fn render(&self, templates: TemplateSet) -> String {
        let mut pieces: Vec<String> = Vec::new();
        match &self.history {
            Some(History::Apps(apps)) => pieces.push(render_app_history_with(apps, templates).text),
            Some(History::Categories(cats)) => pieces.push(render_category_history_with(cats, templates).text),
            None => {}
        }
        if let Some(installed) = &self.installed {
            pieces.push(render_installed(installed).text);
        }
        if let Some(time) = &self.time {
            pieces.push(render_time_with(time, templates).text);
        }
        if let Some(poi) = &self.poi {
            pieces.push(render_poi_with(poi, templates).text);
        }
        if let Some(shares) = &self.stage1 {
            pieces.push(render_type_shares(shares).expect("non-empty shares").text);
        }
        pieces.join(" ")
    }
}

fn framed(frame: Frame, body: &str) -> String {
    format!("{}{body}{}", frame.prefix, frame.suffix)
}

fn render_app_history_with(apps: &[AppId], t: TemplateSet) -> PromptSentence {
    let items: Vec<String> = apps.iter().map(|a| a.to_string()).collect();
    PromptSentence::new(framed(t.history(), &join_serial(&items)), PromptKind::HistoryApps)
}

fn render_category_history_with(categories: &[String], t: TemplateSet) -> PromptSentence {
    PromptSentence::new(
        framed(t.history(), &join_serial(categories)),
        PromptKind::HistoryCategories,
    )
}

fn render_time_with(time: &PredictionTime, t: TemplateSet) -> PromptSentence {
    PromptSentence::new(framed(t.time(), &time.render()), PromptKind::PredictionTime)
}

fn render_poi_with(labels: &[String], t: TemplateSet) -> PromptSentence {
    PromptSentence::new(framed(t.poi(), &join_plain(labels)), PromptKind::Poi)
}

/// `The apps 1, 4, and 9 are used prior to the prediction.`
pub fn render_app_history(apps: &[AppId]) -> PromptSentence {
    render_app_history_with(apps, TemplateSet::Canonical)
}

/// `The apps Photo/Video, Communication, and Utilities are used prior to the prediction.`
pub fn render_category_history(categories: &[String]) -> PromptSentence {
    render_category_history_with(categories, TemplateSet::Canonical)
}

/// `travel apps : 1,4,12 utility apps : 2,7,16`
pub fn render_installed(installed: &BTreeMap<String, Vec<AppId>>) -> PromptSentence {
    let blocks: Vec<String> = installed
        .iter()
        .map(|(cat, apps)| {
            let ids: Vec<String> = apps.iter().map(|a| a.to_string()).collect();
            format!("{cat}{INSTALLED_SEP}{}", ids.join(","))
        })
        .collect();
    PromptSentence::new(blocks.join(" "), PromptKind::InstalledApps)
}

/// `On Tuesday 02 PM`
pub fn render_time(time: &PredictionTime) -> PromptSentence {
    render_time_with(time, TemplateSet::Canonical)
}

/// `The user is close to service, shopping and restaurants.`
pub fn render_poi(labels: &[String]) -> PromptSentence {
    render_poi_with(labels, TemplateSet::Canonical)
}

/// Renders the enabled context components of `bundle` for one stage.
///
/// The stage-1 result sentence is not part of the bundle; the pipeline
/// appends it with [`append_stage1`].
pub fn render_context(
    bundle: &ContextBundle,
    stage: Stage,
    flags: &AblationFlags,
    templates: TemplateSet,
) -> Result<PromptSentence, TemplateError> {
    bundle.validate()?;
    let parts = PromptParts::from_bundle(bundle, stage, flags);
    if parts.is_empty() {
        return Err(TemplateError::EmptyPrompt);
    }
    let kind = match stage {
        Stage::One => PromptKind::Stage1Input,
        Stage::Two => PromptKind::Stage2Input,
    };
    Ok(PromptSentence::new(parts.render(templates), kind))
}

/// Appends a stage-1 result sentence to a stage-2 context prompt.
pub fn append_stage1(context: &PromptSentence, stage1: &PromptSentence) -> PromptSentence {
    debug_assert_eq!(stage1.kind, PromptKind::Stage1Result);
    PromptSentence::new(format!("{} {}", context.text, stage1.text), PromptKind::Stage2Input)
}

/// `Based on the global information, the next app will be a communication app (70%), social app (20%) or travel app (10%)`
pub fn render_type_shares(shares: &[TypeShare]) -> Result<PromptSentence, TemplateError> {
    let items: Vec<String> = shares
        .iter()
        .map(|s| format!("{} app ({}%)", s.category, s.percent))
        .collect();
    let body = match items.as_slice() {
        [] => return Err(TemplateError::EmptyDistribution),
        [one] => one.clone(),
        [init @ .., last] => format!("{} or {last}", init.join(", ")),
    };
    Ok(PromptSentence::new(
        format!("{STAGE1_PREFIX}{body}"),
        PromptKind::Stage1Result,
    ))
}

/// Renders the top entries of a type distribution as the stage-1 sentence.
pub fn render_type_result(dist: &crate::typeprompt::TypeDistribution) -> Result<PromptSentence, TemplateError> {
    render_type_shares(&dist.shares())
}

/// `This user will use App 4.`
pub fn render_target(app: AppId) -> PromptSentence {
    PromptSentence::new(format!("{TARGET_PREFIX}{app}."), PromptKind::Stage2Target)
}

/// Trims surrounding whitespace and at most one trailing period.
fn loosen(text: &str) -> &str {
    let t = text.trim();
    t.strip_suffix('.').unwrap_or(t).trim_end()
}

/// Extracts the app id from a stage-2 target sentence.
pub fn parse_prediction(text: &str) -> Result<AppId, ParseFailure> {
    let body = loosen(text);
    match body.strip_prefix(TARGET_PREFIX).and_then(parse_app_id) {
        Some(id) => Ok(id),
        None => fail("not a target sentence", text),
    }
}

/// Inverse of [`render_type_shares`].
pub fn parse_type_result(text: &str) -> Result<Vec<TypeShare>, ParseFailure> {
    let Some(mut rest) = loosen(text).strip_prefix(STAGE1_PREFIX) else {
        return fail("missing stage-1 prefix", text);
    };
    let mut shares = Vec::new();
    let mut saw_or = false;
    loop {
        let Some(i) = rest.find(" app (") else {
            return fail("expected `<category> app (<p>%)`", text);
        };
        let category = &rest[..i];
        if !is_safe_label(category) {
            return fail("bad category label", text);
        }
        rest = &rest[i + " app (".len()..];
        let Some(j) = rest.find("%)") else {
            return fail("unterminated percentage", text);
        };
        let Some(percent) = parse_decimal(&rest[..j]) else {
            return fail("bad percentage", text);
        };
        rest = &rest[j + 2..];
        shares.push(TypeShare {
            category: category.to_string(),
            percent,
        });
        if rest.is_empty() {
            break;
        }
        if saw_or {
            return fail("trailing text after final entry", text);
        }
        if let Some(r) = rest.strip_prefix(" or ") {
            saw_or = true;
            rest = r;
        } else if let Some(r) = rest.strip_prefix(", ") {
            rest = r;
        } else {
            return fail("bad separator", text);
        }
    }
    if shares.len() > 1 && !saw_or {
        return fail("list must end with `or`", text);
    }
    Ok(shares)
}

/// Consumes the single space separating two components.
fn next_component<'a>(rest: &'a str, whole: &str) -> Result<&'a str, ParseFailure> {
    if rest.is_empty() {
        Ok(rest)
    } else if let Some(r) = rest.strip_prefix(' ') {
        if r.is_empty() {
            fail("dangling separator", whole)
        } else {
            Ok(r)
        }
    } else {
        fail("components must be separated by one space", whole)
    }
}

fn parse_time_component(rest: &str, t: TemplateSet) -> Option<(PredictionTime, usize)> {
    let frame = t.time();
    let body = rest.strip_prefix(frame.prefix)?;
    let (time, used) = PredictionTime::parse_prefix(body)?;
    body[used..].strip_prefix(frame.suffix)?;
    Some((time, frame.prefix.len() + used + frame.suffix.len()))
}

fn starts_later_component(rest: &str, stage: Stage, t: TemplateSet) -> bool {
    parse_time_component(rest, t).is_some()
        || rest.starts_with(t.poi().prefix)
        || (stage == Stage::Two && rest.starts_with(STAGE1_PREFIX))
}

/// Parses a composed stage input back into its components.
pub fn parse_prompt(text: &str, stage: Stage, templates: TemplateSet) -> Result<PromptParts, ParseFailure> {
    let whole = text;
    let mut rest = text.trim();
    let mut parts = PromptParts::default();

    let hf = templates.history();
    if let Some(after) = rest.strip_prefix(hf.prefix) {
        let Some(end) = after.find(hf.suffix) else {
            return fail("unterminated history sentence", whole);
        };
        let Some(items) = split_serial(&after[..end]) else {
            return fail("bad history list", whole);
        };
        parts.history = Some(match stage {
            Stage::One => {
                if !items.iter().all(|i| is_safe_label(i)) {
                    return fail("bad category label", whole);
                }
                History::Categories(items.iter().map(|s| s.to_string()).collect())
            }
            Stage::Two => match items.iter().map(|i| parse_app_id(i)).collect::<Option<Vec<_>>>() {
                Some(apps) => History::Apps(apps),
                None => return fail("bad app id in history", whole),
            },
        });
        rest = next_component(&after[end + hf.suffix.len()..], whole)?;
    }

    if stage == Stage::Two {
        let mut installed = BTreeMap::new();
        while !rest.is_empty() && !starts_later_component(rest, stage, templates) {
            let Some(i) = rest.find(INSTALLED_SEP) else {
                return fail("unrecognised component", whole);
            };
            let category = &rest[..i];
            if !is_safe_label(category) {
                return fail("bad installed-app category", whole);
            }
            let after = &rest[i + INSTALLED_SEP.len()..];
            let end = after.find(' ').unwrap_or(after.len());
            let Some(apps) = after[..end].split(',').map(parse_app_id).collect::<Option<Vec<_>>>() else {
                return fail("bad installed app list", whole);
            };
            if installed.insert(category.to_string(), apps).is_some() {
                return fail("duplicate installed-app category", whole);
            }
            rest = next_component(&after[end..], whole)?;
        }
        if !installed.is_empty() {
            parts.installed = Some(installed);
        }
    }

    if let Some((time, used)) = parse_time_component(rest, templates) {
        parts.time = Some(time);
        rest = next_component(&rest[used..], whole)?;
    }

    let pf = templates.poi();
    if let Some(after) = rest.strip_prefix(pf.prefix) {
        let Some(end) = after.find(pf.suffix) else {
            return fail("unterminated POI sentence", whole);
        };
        let Some(items) = split_plain(&after[..end]) else {
            return fail("bad POI list", whole);
        };
        if !items.iter().all(|i| is_safe_label(i)) {
            return fail("bad POI label", whole);
        }
        parts.poi = Some(items.iter().map(|s| s.to_string()).collect());
        rest = next_component(&after[end + pf.suffix.len()..], whole)?;
    }

    if stage == Stage::Two && rest.starts_with(STAGE1_PREFIX) {
        parts.stage1 = Some(parse_type_result(rest)?);
        rest = "";
    }

    if !rest.is_empty() {
        return fail("unexpected trailing text", whole);
    }
    if parts.is_empty() {
        return fail("empty prompt", whole);
    }
    Ok(parts)
}
