//! Tagged trajectory grammar for verifier output.
//!
//! A verifier emits its work as a flat sequence of tagged segments:
//!
//! ```text
//! <think> reasoning </think>
//! <search> query </search>
//! <information> retrieved documents </information>
//! <answer> 0 | 1 </answer>
//! ```
//!
//! Tags are lowercase, attribute-free, and never nest. Parsing is lossless:
//! every byte of the source ends up either in a segment payload or in the
//! whitespace "gap" between segments, so a parsed trajectory renders back to
//! the exact input. Parsing is lenient by default — malformed output is
//! recorded as violations instead of an error so that a reward of zero can
//! still be assigned downstream; `parse_strict` is available for fixtures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four segment kinds of the trajectory grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    Think,
    Search,
    Information,
    Answer,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 4] = [
        SegmentKind::Think,
        SegmentKind::Search,
        SegmentKind::Information,
        SegmentKind::Answer,
    ];

    /// Canonical opening tag, bit-exact.
    pub fn open_tag(self) -> &'static str {
        match self {
            SegmentKind::Think => "<think>",
            SegmentKind::Search => "<search>",
            SegmentKind::Information => "<information>",
            SegmentKind::Answer => "<answer>",
        }
    }

    /// Canonical closing tag, bit-exact.
    pub fn close_tag(self) -> &'static str {
        match self {
            SegmentKind::Think => "</think>",
            SegmentKind::Search => "</search>",
            SegmentKind::Information => "</information>",
            SegmentKind::Answer => "</answer>",
        }
    }
}

/// All eight canonical tag strings.
pub fn all_tags() -> [&'static str; 8] {
    [
        "<think>",
        "</think>",
        "<search>",
        "</search>",
        "<information>",
        "</information>",
        "<answer>",
        "</answer>",
    ]
}

/// One tagged segment: the kind plus its raw payload text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub text: String,
}

impl Segment {
    pub fn new(kind: SegmentKind, text: impl Into<String>) -> Self {
        Segment {
            kind,
            text: text.into(),
        }
    }

    pub fn think(text: impl Into<String>) -> Self {
        Segment::new(SegmentKind::Think, text)
    }

    pub fn search(text: impl Into<String>) -> Self {
        Segment::new(SegmentKind::Search, text)
    }

    pub fn information(text: impl Into<String>) -> Self {
        Segment::new(SegmentKind::Information, text)
    }

    pub fn answer(text: impl Into<String>) -> Self {
        Segment::new(SegmentKind::Answer, text)
    }

    /// For Answer segments: the judgment if the trimmed payload is exactly
    /// "0" or "1". Any other payload is preserved but non-canonical.
    pub fn canonical_judgment(&self) -> Option<u8> {
        if self.kind != SegmentKind::Answer {
            return None;
        }
        match self.text.trim() {
            "0" => Some(0),
            "1" => Some(1),
            _ => None,
        }
    }
}

/// Structural violation codes.
///
/// `InterleaveOrder` covers the ordering rules that are not tag-balance
/// problems: non-whitespace chatter outside any tag pair, and an Answer with
/// no Think anywhere before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Violation {
    UnclosedTag,
    NestedTag,
    OrphanInformation,
    MissingAnswer,
    InterleaveOrder,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Violation::UnclosedTag => "UNCLOSED_TAG",
            Violation::NestedTag => "NESTED_TAG",
            Violation::OrphanInformation => "ORPHAN_INFORMATION",
            Violation::MissingAnswer => "MISSING_ANSWER",
            Violation::InterleaveOrder => "INTERLEAVE_ORDER",
        };
        f.write_str(name)
    }
}

/// Error for `parse_strict`: the first violation and its byte offset.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{violation} at byte {offset}")]
pub struct StrictFormatError {
    pub violation: Violation,
    pub offset: usize,
}

/// Raised by `render` when a payload contains a raw tag string.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("segment {index} ({kind:?}) payload contains the tag string {tag:?}")]
pub struct RenderError {
    pub index: usize,
    pub kind: SegmentKind,
    pub tag: &'static str,
}

/// A parsed (or constructed) trajectory.
///
/// `gaps` holds the inter-segment text: `gaps[i]` precedes `segments[i]` and
/// the final entry trails the last segment, so there are always
/// `segments.len() + 1` gaps. For constructed trajectories all gaps are
/// empty; for parsed ones they carry whatever separated the tags in the
/// source (normally whitespace), which is what makes round-tripping
/// byte-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    pub gaps: Vec<String>,
    pub raw_text: String,
    /// True iff the last segment is an Answer.
    pub terminal: bool,
    /// Violations discovered while parsing, with byte offsets.
    pub parse_violations: Vec<(Violation, usize)>,
}

impl Trajectory {
    /// Builds a trajectory in canonical form (no inter-segment gaps).
    pub fn from_segments(segments: Vec<Segment>) -> Self {
        let gaps = vec![String::new(); segments.len() + 1];
        let mut raw = String::new();
        for seg in &segments {
            raw.push_str(seg.kind.open_tag());
            raw.push_str(&seg.text);
            raw.push_str(seg.kind.close_tag());
        }
        let terminal = segments.last().map(|s| s.kind) == Some(SegmentKind::Answer);
        Trajectory {
            segments,
            gaps,
            raw_text: raw,
            terminal,
            parse_violations: Vec::new(),
        }
    }

    pub fn answer_pair_count(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Answer)
            .count()
    }

    pub fn segments_of(&self, kind: SegmentKind) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(move |s| s.kind == kind)
    }
}

/// Verdict of the structural format check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatVerdict {
    pub well_formed: bool,
    pub answer_pair_count: usize,
    pub violations: Vec<Violation>,
}

/// Finds the earliest opening tag at or after `from`. Returns
/// (byte offset, kind).
fn next_open_tag(raw: &str, from: usize) -> Option<(usize, SegmentKind)> {
    let mut best: Option<(usize, SegmentKind)> = None;
    for kind in SegmentKind::ALL {
        if let Some(ix) = raw[from..].find(kind.open_tag()) {
            let abs = from + ix;
            if best.is_none_or(|(b, _)| abs < b) {
                best = Some((abs, kind));
            }
        }
    }
    best
}

fn contains_any_tag(text: &str) -> Option<&'static str> {
    all_tags().into_iter().find(|tag| text.contains(tag))
}

/// Records a violation once per code, keeping the first offset.
fn record(violations: &mut Vec<(Violation, usize)>, code: Violation, offset: usize) {
    if !violations.iter().any(|(c, _)| *c == code) {
        violations.push((code, offset));
    }
}

/// Inspects inter-segment gap text: dangling closing tags count as
/// UnclosedTag, any other non-whitespace content as InterleaveOrder.
fn check_gap(gap: &str, gap_offset: usize, violations: &mut Vec<(Violation, usize)>) {
    let mut residual = gap.to_string();
    for kind in SegmentKind::ALL {
        if let Some(ix) = gap.find(kind.close_tag()) {
            record(violations, Violation::UnclosedTag, gap_offset + ix);
        }
        residual = residual.replace(kind.close_tag(), "");
    }
    if !residual.trim().is_empty() {
        let ix = gap
            .char_indices()
            .find(|(_, c)| !c.is_whitespace())
            .map(|(i, _)| i)
            .unwrap_or(0);
        record(violations, Violation::InterleaveOrder, gap_offset + ix);
    }
}

/// Lenient parse: never fails, records violations instead.
///
/// Every byte of `raw` is preserved in the result, either as a segment
/// payload or as gap text, so `render` reproduces the input exactly.
pub fn parse(raw: &str) -> Trajectory {
    let mut segments = Vec::new();
    let mut gaps = Vec::new();
    let mut violations = Vec::new();
    let mut pos = 0usize;

    loop {
        match next_open_tag(raw, pos) {
            None => {
                let gap = &raw[pos..];
                check_gap(gap, pos, &mut violations);
                gaps.push(gap.to_string());
                break;
            }
            Some((start, kind)) => {
                let gap = &raw[pos..start];
                check_gap(gap, pos, &mut violations);
                gaps.push(gap.to_string());

                let payload_start = start + kind.open_tag().len();
                match raw[payload_start..].find(kind.close_tag()) {
                    None => {
                        // Unclosed: the remainder becomes the payload so no
                        // bytes are dropped.
                        record(&mut violations, Violation::UnclosedTag, start);
                        segments.push(Segment::new(kind, &raw[payload_start..]));
                        gaps.push(String::new());
                        break;
                    }
                    Some(rel) => {
                        let payload = &raw[payload_start..payload_start + rel];
                        if let Some(tag) = contains_any_tag(payload) {
                            let inner = payload_start + payload.find(tag).unwrap_or(0);
                            record(&mut violations, Violation::NestedTag, inner);
                        }
                        segments.push(Segment::new(kind, payload));
                        pos = payload_start + rel + kind.close_tag().len();
                    }
                }
            }
        }
    }

    let terminal = segments.last().map(|s| s.kind) == Some(SegmentKind::Answer);
    Trajectory {
        segments,
        gaps,
        raw_text: raw.to_string(),
        terminal,
        parse_violations: violations,
    }
}

/// Strict parse: errors on the first tag-structure violation.
pub fn parse_strict(raw: &str) -> Result<Trajectory, StrictFormatError> {
    let trajectory = parse(raw);
    match trajectory.parse_violations.first() {
        Some(&(violation, offset)) => Err(StrictFormatError { violation, offset }),
        None => Ok(trajectory),
    }
}

/// Renders a trajectory back to tagged text.
///
/// For parsed trajectories this reproduces the source byte-for-byte; for
/// constructed ones it emits the canonical gap-free form. Fails if any
/// payload contains a raw tag string, since that text could not be
/// re-parsed into the same segments.
pub fn render(trajectory: &Trajectory) -> Result<String, RenderError> {
    let mut out = String::with_capacity(trajectory.raw_text.len());
    for (index, seg) in trajectory.segments.iter().enumerate() {
        if let Some(tag) = contains_any_tag(&seg.text) {
            return Err(RenderError {
                index,
                kind: seg.kind,
                tag,
            });
        }
        out.push_str(trajectory.gaps.get(index).map(String::as_str).unwrap_or(""));
        out.push_str(seg.kind.open_tag());
        out.push_str(&seg.text);
        out.push_str(seg.kind.close_tag());
    }
    out.push_str(
        trajectory
            .gaps
            .get(trajectory.segments.len())
            .map(String::as_str)
            .unwrap_or(""),
    );
    Ok(out)
}

/// Total structural check. Well-formed means: balanced tags, no chatter
/// outside tags, every Information directly after a Search, at least one
/// Think before the first Answer, and a terminal Answer.
pub fn validate_format(trajectory: &Trajectory) -> FormatVerdict {
    let mut violations: Vec<Violation> = Vec::new();
    let mut push = |v: Violation| {
        if !violations.contains(&v) {
            violations.push(v);
        }
    };

    for &(code, _) in &trajectory.parse_violations {
        push(code);
    }

    for (i, seg) in trajectory.segments.iter().enumerate() {
        if seg.kind == SegmentKind::Information
            && (i == 0 || trajectory.segments[i - 1].kind != SegmentKind::Search)
        {
            push(Violation::OrphanInformation);
        }
    }

    let first_answer = trajectory
        .segments
        .iter()
        .position(|s| s.kind == SegmentKind::Answer);
    if let Some(ax) = first_answer {
        let think_before = trajectory.segments[..ax]
            .iter()
            .any(|s| s.kind == SegmentKind::Think);
        if !think_before {
            push(Violation::InterleaveOrder);
        }
    }

    if !trajectory.terminal {
        push(Violation::MissingAnswer);
    }

    FormatVerdict {
        well_formed: violations.is_empty(),
        answer_pair_count: trajectory.answer_pair_count(),
        violations,
    }
}

/// The trimmed payload of the last Answer segment, if it is exactly "0" or
/// "1". Later answers override earlier ones.
pub fn extract_judgment(trajectory: &Trajectory) -> Option<u8> {
    trajectory
        .segments
        .iter()
        .rev()
        .find(|s| s.kind == SegmentKind::Answer)
        .and_then(Segment::canonical_judgment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_minimal_trace() {
        let t = parse("<think>ok</think><answer>1</answer>");
        assert_eq!(t.segments, vec![Segment::think("ok"), Segment::answer("1")]);
        assert!(t.terminal);
        assert!(t.parse_violations.is_empty());
    }

    #[test]
    fn parses_full_turn_in_order() {
        let t = parse(
            "<think>a</think><search>q</search><information>d</information><answer>0</answer>",
        );
        let kinds: Vec<_> = t.segments.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![
                SegmentKind::Think,
                SegmentKind::Search,
                SegmentKind::Information,
                SegmentKind::Answer
            ]
        );
        assert!(t.terminal);
    }

    #[test]
    fn unclosed_tag_is_lenient() {
        let t = parse("<think>a<answer>1</answer>");
        assert_eq!(
            t.parse_violations
                .iter()
                .map(|(v, _)| *v)
                .collect::<Vec<_>>(),
            vec![Violation::UnclosedTag]
        );
        let verdict = validate_format(&t);
        assert!(!verdict.well_formed);
        assert!(verdict.violations.contains(&Violation::UnclosedTag));
    }

    #[test]
    fn strict_mode_errors_with_offset() {
        let err = parse_strict("<think>a<answer>1</answer>").unwrap_err();
        assert_eq!(err.violation, Violation::UnclosedTag);
        assert_eq!(err.offset, 0);
        assert!(parse_strict("<think>x</think><answer>1</answer>").is_ok());
    }

    #[test]
    fn whitespace_gaps_are_not_violations() {
        let t = parse("<think>x</think>\n\n<answer>1</answer>\n");
        assert!(t.parse_violations.is_empty());
        assert!(validate_format(&t).well_formed);
        assert_eq!(render(&t).unwrap(), t.raw_text);
    }

    #[test]
    fn chatter_outside_tags_is_flagged() {
        let t = parse("sure! <think>x</think><answer>1</answer>");
        assert_eq!(t.parse_violations[0].0, Violation::InterleaveOrder);
        assert!(!validate_format(&t).well_formed);
        // Lossless even so.
        assert_eq!(render(&t).unwrap(), t.raw_text);
    }

    #[test]
    fn dangling_close_tag_is_unclosed() {
        let t = parse("</think><answer>1</answer>");
        assert_eq!(t.parse_violations[0].0, Violation::UnclosedTag);
    }

    #[test]
    fn nested_tag_is_flagged() {
        let t = parse("<think>a<search>q</search>b</think><answer>1</answer>");
        assert_eq!(t.parse_violations[0].0, Violation::NestedTag);
        assert_eq!(t.segments[0].text, "a<search>q</search>b");
    }

    #[test]
    fn render_canonical_forms() {
        let t = Trajectory::from_segments(vec![Segment::think("x"), Segment::answer("1")]);
        assert_eq!(render(&t).unwrap(), "<think>x</think><answer>1</answer>");
        let s = Trajectory::from_segments(vec![Segment::search("q")]);
        assert_eq!(render(&s).unwrap(), "<search>q</search>");
    }

    #[test]
    fn render_rejects_tags_in_payload() {
        let t = Trajectory::from_segments(vec![Segment::think("a<answer>b")]);
        let err = render(&t).unwrap_err();
        assert_eq!(err.tag, "<answer>");
    }

    #[test]
    fn validate_counts_answer_pairs() {
        let mut segs = vec![Segment::think("t")];
        for _ in 0..11 {
            segs.push(Segment::answer("1"));
        }
        let verdict = validate_format(&Trajectory::from_segments(segs));
        assert!(verdict.well_formed);
        assert_eq!(verdict.answer_pair_count, 11);
    }

    #[test]
    fn orphan_information_detected() {
        let t = Trajectory::from_segments(vec![
            Segment::think("t"),
            Segment::information("d"),
            Segment::answer("1"),
        ]);
        let verdict = validate_format(&t);
        assert_eq!(verdict.violations, vec![Violation::OrphanInformation]);
    }

    #[test]
    fn missing_terminal_answer_detected() {
        let t = Trajectory::from_segments(vec![Segment::think("t"), Segment::search("q")]);
        let verdict = validate_format(&t);
        assert!(verdict.violations.contains(&Violation::MissingAnswer));
    }

    #[test]
    fn answer_without_think_is_order_violation() {
        let t = Trajectory::from_segments(vec![Segment::answer("1")]);
        let verdict = validate_format(&t);
        assert!(verdict.violations.contains(&Violation::InterleaveOrder));
    }

    #[test]
    fn judgment_extraction() {
        let last_wins = parse("<think>t</think><answer>1</answer><answer>0</answer>");
        assert_eq!(extract_judgment(&last_wins), Some(0));
        let none = parse("<think>t</think><answer>maybe</answer>");
        assert_eq!(extract_judgment(&none), None);
        let zero = parse("<think>t</think><answer>0</answer>");
        assert_eq!(extract_judgment(&zero), Some(0));
        let padded = parse("<think>t</think><answer> 1 </answer>");
        assert_eq!(extract_judgment(&padded), Some(1));
    }

    fn payload_strategy() -> impl Strategy<Value = String> {
        "[a-z0-9 .,]{0,24}"
    }

    fn gap_strategy() -> impl Strategy<Value = String> {
        "[ \t\n]{0,3}"
    }

    fn well_formed_strategy() -> impl Strategy<Value = String> {
        // think (search info | think)* answer, with whitespace gaps.
        let unit = prop_oneof![
            (payload_strategy(), payload_strategy(), gap_strategy()).prop_map(|(q, d, g)| format!(
                "<search>{q}</search>{g}<information>{d}</information>"
            )),
            payload_strategy().prop_map(|x| format!("<think>{x}</think>")),
        ];
        (
            payload_strategy(),
            proptest::collection::vec((unit, gap_strategy()), 0..4),
            payload_strategy(),
            gap_strategy(),
            gap_strategy(),
        )
            .prop_map(|(think, middle, verdict, g0, g1)| {
                let mut s = format!("<think>{think}</think>");
                for (unit, gap) in middle {
                    s.push_str(&g0);
                    s.push_str(&unit);
                    let _ = gap;
                }
                s.push_str(&g1);
                s.push_str(&format!("<answer>{verdict}</answer>"));
                s
            })
    }

    proptest! {
        #[test]
        fn round_trip_is_byte_exact(raw in well_formed_strategy()) {
            let t = parse(&raw);
            prop_assert!(t.parse_violations.is_empty());
            prop_assert_eq!(render(&t).unwrap(), raw);
        }

        #[test]
        fn lenient_parse_is_lossless(raw in "[a-z<>/ ]{0,40}") {
            // Whatever the input, parse + render must preserve every byte
            // unless a payload legitimately contains a tag (render refuses).
            let t = parse(&raw);
            if let Ok(rendered) = render(&t) {
                prop_assert_eq!(rendered, raw);
            }
        }

        #[test]
        fn validate_is_deterministic(raw in "[a-z<>/ ]{0,40}") {
            let t = parse(&raw);
            prop_assert_eq!(validate_format(&t), validate_format(&t));
        }
    }
}
