//! Structural parsing of model responses.
//!
//! A response is split into sentence-level segments on `.`, `!`, `?`, and
//! newline. Each segment is classified by the earliest trigger phrase it
//! contains (ties broken toward the longer phrase); segments with no trigger
//! are plain. When the final segment carries a standalone digit it is treated
//! as the answer statement rather than reasoning, and is reported separately.
//!
//! Segment spans are byte offsets into the original text and tile it exactly:
//! concatenating every segment slice followed by the answer slice reproduces
//! the input byte for byte.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::lexicon::MarkerLexicon;
use crate::model::{LabelId, LabelSpace, MarkerKind};

/// Sentence terminators. A run of terminators plus any following whitespace
/// is absorbed into the segment it closes.
pub const TERMINATORS: [char; 4] = ['.', '!', '?', '\n'];

/// Half-open byte range into the parsed text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

/// One classified sentence of the response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub span: Span,
    pub kind: MarkerKind,
    /// Lexicon phrase that decided the kind. `None` for plain segments.
    pub trigger: Option<String>,
}

/// Parsed structure of one model response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub text: String,
    pub segments: Vec<Segment>,
    /// Final sentence, when it carries a standalone digit. Excluded from
    /// `segments` so structural statistics cover reasoning only.
    pub answer_span: Option<Span>,
    /// Whitespace-delimited token count of the full response.
    pub token_length: usize,
}

impl ReasoningChain {
    /// Number of distinct structural operations used (plain excluded).
    pub fn distinct_structural_kinds(&self) -> usize {
        self.segments
            .iter()
            .map(|s| s.kind)
            .filter(|k| k.is_structural())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// A chain is nonlinear when it revisits its own reasoning: any
    /// reflection, contradiction, or correction segment qualifies.
    pub fn is_nonlinear(&self) -> bool {
        self.segments.iter().any(|s| {
            matches!(
                s.kind,
                MarkerKind::Reflection | MarkerKind::Contradiction | MarkerKind::Correction
            )
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("response text is empty")]
    EmptyInput,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LabelExtractError {
    #[error("no standalone digit found in response")]
    NoLabelFound,
    #[error("digit {digit} is outside the label space of size {space_size}")]
    LabelOutOfRange { digit: u8, space_size: usize },
}

/// Whitespace-delimited token count used for length bands and stratification.
pub fn token_length(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Parse a response into classified segments.
pub fn parse_chain(text: &str, lexicon: &MarkerLexicon) -> Result<ReasoningChain, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let spans = segment_spans(text);
    let mut segments: Vec<Segment> = spans
        .iter()
        .map(|span| {
            let (kind, trigger) = classify_segment(span.slice(text), lexicon);
            Segment { span: *span, kind, trigger }
        })
        .collect();
    let mut answer_span = None;
    if let Some(last) = spans.last() {
        if last_standalone_digit(last.slice(text)).is_some() {
            answer_span = Some(*last);
            segments.pop();
        }
    }
    Ok(ReasoningChain {
        text: text.to_string(),
        segments,
        answer_span,
        token_length: token_length(text),
    })
}

/// Extract the predicted label: the last standalone ASCII digit in the
/// response. A digit with a digit neighbor on either side (as in "10") is
/// not standalone. An out-of-range final digit is an error; earlier digits
/// are not consulted as fallbacks.
pub fn extract_label(text: &str, space: &LabelSpace) -> Result<LabelId, LabelExtractError> {
    let digit = last_standalone_digit(text).ok_or(LabelExtractError::NoLabelFound)?;
    if (digit as usize) < space.len() {
        Ok(digit)
    } else {
        Err(LabelExtractError::LabelOutOfRange { digit, space_size: space.len() })
    }
}

fn segment_spans(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut seg_start = 0usize;
    let mut has_content = false;
    let mut in_tail = false;
    for (i, c) in text.char_indices() {
        let is_term = TERMINATORS.contains(&c);
        if in_tail {
            if is_term || c.is_whitespace() {
                continue;
            }
            spans.push(Span { start: seg_start, end: i });
            seg_start = i;
            has_content = true;
            in_tail = false;
            continue;
        }
        if is_term {
            if has_content {
                in_tail = true;
            }
        } else if !c.is_whitespace() {
            has_content = true;
        }
    }
    if seg_start < text.len() {
        spans.push(Span { start: seg_start, end: text.len() });
    }
    spans
}

fn classify_segment(content: &str, lexicon: &MarkerLexicon) -> (MarkerKind, Option<String>) {
    let folded = fold_lower(content);
    let mut best: Option<(usize, usize, MarkerKind, &str)> = None;
    for (kind, phrase) in lexicon.entries() {
        for (pos, matched) in folded.match_indices(phrase) {
            if !word_bounded(&folded, pos, matched.len()) {
                continue;
            }
            let candidate = (pos, matched.len(), kind, phrase);
            best = Some(match best {
                None => candidate,
                Some(current) => {
                    if candidate.0 < current.0 || (candidate.0 == current.0 && candidate.1 > current.1) {
                        candidate
                    } else {
                        current
                    }
                }
            });
            break;
        }
    }
    match best {
        Some((_, _, kind, phrase)) => (kind, Some(phrase.to_string())),
        None => (MarkerKind::Plain, None),
    }
}

/// Case fold that keeps one output char per input char so match positions
/// stay comparable within a segment.
fn fold_lower(s: &str) -> String {
    s.chars().map(|c| c.to_lowercase().next().unwrap_or(c)).collect()
}

fn word_bounded(hay: &str, pos: usize, len: usize) -> bool {
    let before_ok = hay[..pos].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
    let after_ok = hay[pos + len..].chars().next().is_none_or(|c| !c.is_alphanumeric());
    before_ok && after_ok
}

fn last_standalone_digit(s: &str) -> Option<u8> {
    let chars: Vec<char> = s.chars().collect();
    let mut result = None;
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_ascii_digit() {
            continue;
        }
        let prev_is_digit = i > 0 && chars[i - 1].is_ascii_digit();
        let next_is_digit = i + 1 < chars.len() && chars[i + 1].is_ascii_digit();
        if !prev_is_digit && !next_is_digit {
            result = Some(c as u8 - b'0');
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_label_space, TaskKind};
    use proptest::prelude::*;

    fn lex() -> MarkerLexicon {
        MarkerLexicon::default()
    }

    fn kinds(chain: &ReasoningChain) -> Vec<MarkerKind> {
        chain.segments.iter().map(|s| s.kind).collect()
    }

    #[test]
    fn empty_and_blank_input_are_rejected() {
        assert_eq!(parse_chain("", &lex()), Err(ParseError::EmptyInput));
        assert_eq!(parse_chain("  \n\t ", &lex()), Err(ParseError::EmptyInput));
    }

    #[test]
    fn single_plain_sentence() {
        let chain = parse_chain("The tone is flat", &lex()).unwrap();
        assert_eq!(kinds(&chain), [MarkerKind::Plain]);
        assert_eq!(chain.segments[0].trigger, None);
        assert_eq!(chain.answer_span, None);
        assert_eq!(chain.token_length, 4);
    }

    #[test]
    fn multi_sentence_classification_and_answer_span() {
        let text = "First, consider tone. However, the irony flips it. Check the cues. The answer is 1.";
        let chain = parse_chain(text, &lex()).unwrap();
        assert_eq!(
            kinds(&chain),
            [MarkerKind::Decomposition, MarkerKind::Contradiction, MarkerKind::Verification]
        );
        assert_eq!(chain.segments[0].trigger.as_deref(), Some("first"));
        let answer = chain.answer_span.expect("final digit sentence is the answer");
        assert_eq!(answer.slice(text), "The answer is 1.");
        assert_eq!(chain.token_length, 15);
        assert!(chain.is_nonlinear());
        assert_eq!(chain.distinct_structural_kinds(), 3);
    }

    #[test]
    fn staged_warmth_walkthrough() {
        let text = "First, the tone is warm. However, the final clause undercuts it. \
                    On reflection, the warmth is staged. Answer: 0";
        let chain = parse_chain(text, &lex()).unwrap();
        assert_eq!(
            kinds(&chain),
            [MarkerKind::Decomposition, MarkerKind::Contradiction, MarkerKind::Reflection]
        );
        assert_eq!(chain.answer_span.unwrap().slice(text), "Answer: 0");
    }

    #[test]
    fn adding_a_phrase_only_affects_segments_containing_it() {
        let texts = [
            "First, the tone is warm. However, it sours. Plain closing thought",
            "Nothing special here. Verify the ending. Fine",
        ];
        let extended = lex().with_phrase(MarkerKind::Correction, "sours").unwrap();
        for text in texts {
            let before = parse_chain(text, &lex()).unwrap();
            let after = parse_chain(text, &extended).unwrap();
            for (a, b) in before.segments.iter().zip(&after.segments) {
                if !a.span.slice(text).to_lowercase().contains("sours") {
                    assert_eq!(a.kind, b.kind);
                }
            }
        }
    }

    #[test]
    fn earliest_trigger_wins_within_a_segment() {
        let chain = parse_chain("First check the cues", &lex()).unwrap();
        assert_eq!(kinds(&chain), [MarkerKind::Decomposition]);

        let chain = parse_chain("Check the parts first", &lex()).unwrap();
        assert_eq!(kinds(&chain), [MarkerKind::Verification]);
    }

    #[test]
    fn tie_at_same_position_prefers_the_longer_phrase() {
        let lex = lex().with_phrase(MarkerKind::Decomposition, "check the parts").unwrap();
        let chain = parse_chain("check the parts of the clause", &lex).unwrap();
        assert_eq!(kinds(&chain), [MarkerKind::Decomposition]);
        assert_eq!(chain.segments[0].trigger.as_deref(), Some("check the parts"));
    }

    #[test]
    fn matches_respect_word_boundaries() {
        let chain = parse_chain("The checkout flow rebuts nothing", &lex()).unwrap();
        assert_eq!(kinds(&chain), [MarkerKind::Plain]);

        let chain = parse_chain("She spread butter evenly", &lex()).unwrap();
        assert_eq!(kinds(&chain), [MarkerKind::Plain]);

        let chain = parse_chain("HOWEVER, the mood shifts", &lex()).unwrap();
        assert_eq!(kinds(&chain), [MarkerKind::Contradiction]);
    }

    #[test]
    fn punctuation_counts_as_a_boundary() {
        let chain = parse_chain("(check) the claim", &lex()).unwrap();
        assert_eq!(kinds(&chain), [MarkerKind::Verification]);
    }

    #[test]
    fn terminator_runs_are_absorbed() {
        let text = "Is it a joke?! Hard to say...\n\nProbably not";
        let chain = parse_chain(text, &lex()).unwrap();
        let slices: Vec<&str> = chain.segments.iter().map(|s| s.span.slice(text)).collect();
        assert_eq!(slices, ["Is it a joke?! ", "Hard to say...\n\n", "Probably not"]);
    }

    #[test]
    fn leading_terminators_do_not_create_an_empty_segment() {
        let text = "\n\nJust one thought";
        let chain = parse_chain(text, &lex()).unwrap();
        assert_eq!(chain.segments.len(), 1);
        assert_eq!(chain.segments[0].span.slice(text), text);
    }

    #[test]
    fn one_sentence_answer_leaves_no_reasoning_segments() {
        let chain = parse_chain("1", &lex()).unwrap();
        assert!(chain.segments.is_empty());
        assert_eq!(chain.answer_span, Some(Span { start: 0, end: 1 }));
    }

    #[test]
    fn final_segment_without_digit_is_reasoning() {
        let chain = parse_chain("Label 2 fits. It reads as sincere", &lex()).unwrap();
        assert_eq!(chain.answer_span, None);
        assert_eq!(chain.segments.len(), 2);
    }

    #[test]
    fn linear_chain_is_not_nonlinear() {
        let chain = parse_chain("First, split it. Verify the tone. Done", &lex()).unwrap();
        assert!(!chain.is_nonlinear());
    }

    #[test]
    fn extract_label_takes_the_last_standalone_digit() {
        let space = default_label_space(TaskKind::Emotion);
        assert_eq!(extract_label("The answer is 2", &space), Ok(2));
        assert_eq!(extract_label("Could be 1 or 2", &space), Ok(2));
        assert_eq!(extract_label("Out of 10 options, 3", &space), Ok(3));
        assert_eq!(extract_label("label: 4.", &space), Ok(4));
    }

    #[test]
    fn extract_label_error_cases() {
        let space = default_label_space(TaskKind::Sentiment);
        assert_eq!(extract_label("no digits here", &space), Err(LabelExtractError::NoLabelFound));
        assert_eq!(extract_label("rated 12 overall", &space), Err(LabelExtractError::NoLabelFound));
        assert_eq!(
            extract_label("definitely 7", &space),
            Err(LabelExtractError::LabelOutOfRange { digit: 7, space_size: 2 })
        );
    }

    #[test]
    fn out_of_range_final_digit_does_not_fall_back() {
        let space = default_label_space(TaskKind::Sentiment);
        assert_eq!(
            extract_label("maybe 1, no, 9", &space),
            Err(LabelExtractError::LabelOutOfRange { digit: 9, space_size: 2 })
        );
    }

    #[test]
    fn token_length_splits_on_any_whitespace() {
        assert_eq!(token_length("a b\t c\nd"), 4);
        assert_eq!(token_length("   "), 0);
    }

    proptest! {
        #[test]
        fn segments_tile_the_text(text in "[ a-zA-Z0-9.!?\\n,:']{1,200}") {
            prop_assume!(!text.trim().is_empty());
            let chain = parse_chain(&text, &lex()).unwrap();
            let mut rebuilt = String::new();
            for seg in &chain.segments {
                rebuilt.push_str(seg.span.slice(&text));
            }
            if let Some(answer) = chain.answer_span {
                rebuilt.push_str(answer.slice(&text));
            }
            prop_assert_eq!(rebuilt, text);
        }

        #[test]
        fn spans_are_ascending_and_nonempty(text in "[ a-zA-Z.!?\\n]{1,120}") {
            prop_assume!(!text.trim().is_empty());
            let chain = parse_chain(&text, &lex()).unwrap();
            let mut cursor = 0usize;
            for seg in &chain.segments {
                prop_assert_eq!(seg.span.start, cursor);
                prop_assert!(seg.span.end > seg.span.start);
                cursor = seg.span.end;
            }
        }
    }
}
