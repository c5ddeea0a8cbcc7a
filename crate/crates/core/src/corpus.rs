//! Corpus ingestion: JSONL loading, LaTeX-aware cleaning, sentence
//! splitting, tokenization and sentence-respecting pagination.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default page length in tokens.
pub const DEFAULT_PAGE_LIMIT: usize = 1024;

/// Placeholder emitted for every `$...$` math segment.
pub const MATH_PLACEHOLDER: &str = "MATH";

/// Lowercased words ending in `.` that never close a sentence.
const ABBREVIATIONS: &[&str] = &[
    "fig.", "figs.", "eq.", "eqs.", "ref.", "refs.", "sec.", "sect.", "tab.", "i.e.", "e.g.",
    "cf.", "vs.", "no.", "dr.", "mr.", "mrs.", "ms.", "prof.", "approx.",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub article: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

/// Why a corpus line was not turned into a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    MalformedJson,
    MissingArticle,
    MissingAbstract,
    EmptyArticle,
    EmptyAbstract,
    EmptyId,
    DuplicateId,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::MalformedJson => "malformed_json",
            RejectReason::MissingArticle => "missing_article",
            RejectReason::MissingAbstract => "missing_abstract",
            RejectReason::EmptyArticle => "empty_article",
            RejectReason::EmptyAbstract => "empty_abstract",
            RejectReason::EmptyId => "empty_id",
            RejectReason::DuplicateId => "duplicate_id",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub reasons: BTreeMap<String, usize>,
}

impl RejectionReport {
    pub fn record_accept(&mut self) {
        self.total += 1;
        self.accepted += 1;
    }

    pub fn record_reject(&mut self, reason: RejectReason) {
        self.total += 1;
        self.rejected += 1;
        *self.reasons.entry(reason.as_str().to_string()).or_default() += 1;
    }
}

/// Streams [`RawDocument`]s out of a JSONL file in file order.
///
/// Lines that fail the schema or the emptiness checks are skipped and
/// tallied in [`CorpusReader::report`].
pub struct CorpusReader<R> {
    lines: std::io::Lines<R>,
    source_name: String,
    line_no: usize,
    limit: Option<usize>,
    seen_ids: HashSet<String>,
    report: RejectionReport,
}

impl CorpusReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(Self::new(BufReader::new(file), name, limit))
    }
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R, source_name: impl Into<String>, limit: Option<usize>) -> Self {
        Self {
            lines: reader.lines(),
            source_name: source_name.into(),
            line_no: 0,
            limit,
            seen_ids: HashSet::new(),
            report: RejectionReport::default(),
        }
    }

    pub fn report(&self) -> &RejectionReport {
        &self.report
    }

    pub fn into_report(self) -> RejectionReport {
        self.report
    }

    fn parse_line(&mut self, line: &str) -> std::result::Result<RawDocument, RejectReason> {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|_| RejectReason::MalformedJson)?;
        let obj = value.as_object().ok_or(RejectReason::MalformedJson)?;
        let article = match obj.get("article") {
            Some(serde_json::Value::String(s)) => s.clone(),
            _ => return Err(RejectReason::MissingArticle),
        };
        let abstract_text = match obj.get("abstract") {
            Some(serde_json::Value::String(s)) => s.clone(),
            _ => return Err(RejectReason::MissingAbstract),
        };
        let id = match obj.get("id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => format!("{}:{}", self.source_name, self.line_no),
        };
        if id.trim().is_empty() {
            return Err(RejectReason::EmptyId);
        }
        if clean_text(&article).is_empty() {
            return Err(RejectReason::EmptyArticle);
        }
        if clean_text(&abstract_text).is_empty() {
            return Err(RejectReason::EmptyAbstract);
        }
        if !self.seen_ids.insert(id.clone()) {
            return Err(RejectReason::DuplicateId);
        }
        Ok(RawDocument {
            id,
            article,
            abstract_text,
        })
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<RawDocument>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(limit) = self.limit {
                if self.report.accepted >= limit {
                    return None;
                }
            }
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.source_name, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match self.parse_line(&line) {
                Ok(doc) => {
                    self.report.record_accept();
                    return Some(Ok(doc));
                }
                Err(reason) => self.report.record_reject(reason),
            }
        }
    }
}

/// Reads a whole corpus file. Per-line problems end up in the report; only
/// I/O failures are fatal.
pub fn load_corpus(
    path: impl AsRef<Path>,
    limit: Option<usize>,
) -> Result<(Vec<RawDocument>, RejectionReport)> {
    let mut reader = CorpusReader::open(path, limit)?;
    let mut docs = Vec::new();
    for doc in reader.by_ref() {
        docs.push(doc?);
    }
    Ok((docs, reader.into_report()))
}

/// Normalizes LaTeX-flavoured text.
///
/// Three rules: `$...$` (and `$$...$$`) math becomes `MATH`; `\command`
/// tokens are dropped; braces are dropped, so balanced arguments keep their
/// content. Whitespace runs collapse to one space and the result is trimmed.
pub fn clean_text(raw: &str) -> String {
    let chars: Vec<char> = raw.chars().collect();
    let mut out = String::with_capacity(raw.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '$' => {
                let delim = if chars.get(i + 1) == Some(&'$') { 2 } else { 1 };
                match find_math_close(&chars, i + delim, delim) {
                    Some(close) => {
                        out.push(' ');
                        out.push_str(MATH_PLACEHOLDER);
                        out.push(' ');
                        i = close + delim;
                    }
                    // unmatched delimiter
                    None => i += delim,
                }
            }
            '\\' => match chars.get(i + 1) {
                Some(next) if next.is_ascii_alphabetic() => {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_alphabetic() {
                        i += 1;
                    }
                    if chars.get(i) == Some(&'*') {
                        i += 1;
                    }
                }
                Some('\\') | Some(',') | Some(';') | Some(' ') | Some('!') => {
                    out.push(' ');
                    i += 2;
                }
                Some(&next) => {
                    out.push(next);
                    i += 2;
                }
                None => i += 1,
            },
            '{' | '}' => i += 1,
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn find_math_close(chars: &[char], from: usize, delim: usize) -> Option<usize> {
    let mut j = from;
    while j < chars.len() {
        if chars[j] == '\\' {
            j += 2;
            continue;
        }
        if chars[j] == '$' && (delim == 1 || chars.get(j + 1) == Some(&'$')) {
            return Some(j);
        }
        j += 1;
    }
    None
}

/// Lowercases, splits on whitespace, and emits every non-alphanumeric
/// character as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_lowercase().collect());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<String>,
    /// Half-open character (not byte) offsets into the cleaned text.
    pub char_span: (usize, usize),
}

/// Rule-based splitter: a `.`, `!` or `?` (plus any trailing terminators or
/// closing quotes) ends a sentence when followed by whitespace and an
/// uppercase letter or digit, unless the word is a guarded abbreviation.
pub fn split_sentences(text: &str) -> Result<Vec<Sentence>> {
    let chars: Vec<char> = text.chars().collect();
    let mut start = match chars.iter().position(|c| !c.is_whitespace()) {
        Some(p) => p,
        None => return Err(Error::EmptyText),
    };
    let mut spans = Vec::new();
    let mut i = start;
    while i < chars.len() {
        let c = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let mut end = i + 1;
        while end < chars.len() && matches!(chars[end], '.' | '!' | '?' | '"' | '\'' | ')' | ']') {
            end += 1;
        }
        if end < chars.len() && chars[end].is_whitespace() {
            let mut next = end;
            while next < chars.len() && chars[next].is_whitespace() {
                next += 1;
            }
            let opens_sentence =
                next < chars.len() && (chars[next].is_uppercase() || chars[next].is_ascii_digit());
            if opens_sentence && !(c == '.' && is_abbreviation(&chars, i)) {
                spans.push((start, end));
                start = next;
                i = next;
                continue;
            }
        }
        i = end;
    }
    let mut last = chars.len();
    while last > start && chars[last - 1].is_whitespace() {
        last -= 1;
    }
    if last > start {
        spans.push((start, last));
    }
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(index, (a, b))| {
            let piece: String = chars[a..b].iter().collect();
            Sentence {
                index,
                tokens: tokenize(&piece),
                char_span: (a, b),
            }
        })
        .collect())
}

fn word_before(chars: &[char], end: usize) -> (usize, String) {
    let mut begin = end;
    while begin > 0 && !chars[begin - 1].is_whitespace() {
        begin -= 1;
    }
    let word: String = chars[begin..end]
        .iter()
        .skip_while(|c| !c.is_alphanumeric())
        .flat_map(|c| c.to_lowercase())
        .collect();
    (begin, word)
}

fn is_abbreviation(chars: &[char], dot: usize) -> bool {
    let (begin, word) = word_before(chars, dot + 1);
    if ABBREVIATIONS.contains(&word.as_str()) {
        return true;
    }
    if word == "al." {
        let mut k = begin;
        while k > 0 && chars[k - 1].is_whitespace() {
            k -= 1;
        }
        return word_before(chars, k).1 == "et";
    }
    false
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub index: usize,
    /// Sentences with at least one token on this page.
    pub sentence_range: Range<usize>,
    /// Half-open token indices into the document token stream.
    pub token_span: (usize, usize),
    pub token_count: usize,
}

/// Greedy sentence-boundary pagination.
///
/// Sentences are appended to the open page while it stays within `limit`
/// tokens. A sentence longer than `limit` is hard-split at `limit`-token
/// boundaries and its remainder stays open for the following sentences.
pub fn paginate(sentences: &[Sentence], limit: usize) -> Result<Vec<Page>> {
    if limit == 0 {
        return Err(Error::InvalidArgument("page limit must be >= 1".into()));
    }
    if sentences.is_empty() {
        return Err(Error::EmptyDocument);
    }

    struct Open {
        first_sentence: usize,
        start: usize,
        count: usize,
    }

    let mut pages = Vec::new();
    let mut close = |open: &Open, last_sentence: usize| {
        pages.push(Page {
            index: pages.len(),
            sentence_range: open.first_sentence..last_sentence + 1,
            token_span: (open.start, open.start + open.count),
            token_count: open.count,
        });
    };

    let mut open: Option<(Open, usize)> = None;
    let mut offset = 0;
    for (k, sentence) in sentences.iter().enumerate() {
        let n = sentence.tokens.len();
        if n > limit {
            if let Some((o, last)) = open.take() {
                close(&o, last);
            }
            let mut taken = 0;
            while n - taken > limit {
                let chunk = Open {
                    first_sentence: k,
                    start: offset + taken,
                    count: limit,
                };
                close(&chunk, k);
                taken += limit;
            }
            open = Some((
                Open {
                    first_sentence: k,
                    start: offset + taken,
                    count: n - taken,
                },
                k,
            ));
        } else {
            match open.as_mut() {
                Some((o, last)) if o.count + n <= limit => {
                    o.count += n;
                    *last = k;
                }
                _ => {
                    if let Some((o, last)) = open.take() {
                        close(&o, last);
                    }
                    if n > 0 {
                        open = Some((
                            Open {
                                first_sentence: k,
                                start: offset,
                                count: n,
                            },
                            k,
                        ));
                    }
                }
            }
        }
        offset += n;
    }
    if let Some((o, last)) = open.take() {
        close(&o, last);
    }
    if pages.is_empty() {
        return Err(Error::EmptyDocument);
    }
    Ok(pages)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaginatedDocument {
    pub doc_id: String,
    pub page_limit: usize,
    pub sentences: Vec<Sentence>,
    pub pages: Vec<Page>,
}

impl PaginatedDocument {
    pub fn num_pages(&self) -> usize {
        self.pages.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    /// Document token stream, sentences concatenated in order.
    pub fn tokens(&self) -> Vec<&str> {
        self.sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(String::as_str))
            .collect()
    }

    pub fn page_tokens(&self, page: usize) -> Vec<String> {
        self.page_sentences(page)
            .into_iter()
            .flat_map(|s| s.iter().cloned())
            .collect()
    }

    /// Token slices of each sentence restricted to the page span, so a
    /// hard-split sentence contributes only its on-page part.
    pub fn page_sentences(&self, page: usize) -> Vec<&[String]> {
        let p = &self.pages[page];
        let starts = self.sentence_token_starts();
        p.sentence_range
            .clone()
            .filter_map(|k| {
                let s_start = starts[k];
                let s_end = s_start + self.sentences[k].tokens.len();
                let a = s_start.max(p.token_span.0);
                let b = s_end.min(p.token_span.1);
                (a < b).then(|| &self.sentences[k].tokens[a - s_start..b - s_start])
            })
            .collect()
    }

    pub fn sentence_token_starts(&self) -> Vec<usize> {
        self.sentences
            .iter()
            .scan(0, |acc, s| {
                let start = *acc;
                *acc += s.tokens.len();
                Some(start)
            })
            .collect()
    }
}

/// A paginated article together with its tokenized reference summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessedDocument {
    pub doc: PaginatedDocument,
    pub summary: Vec<Sentence>,
}

impl ProcessedDocument {
    pub fn doc_id(&self) -> &str {
        &self.doc.doc_id
    }

    pub fn summary_tokens(&self) -> Vec<String> {
        self.summary
            .iter()
            .flat_map(|s| s.tokens.iter().cloned())
            .collect()
    }

    pub fn summary_sentence_tokens(&self) -> Vec<Vec<String>> {
        self.summary.iter().map(|s| s.tokens.clone()).collect()
    }
}

pub fn preprocess_document(raw: &RawDocument, page_limit: usize) -> Result<ProcessedDocument> {
    let article = clean_text(&raw.article);
    let sentences = split_sentences(&article)?;
    let pages = paginate(&sentences, page_limit)?;
    let summary = split_sentences(&clean_text(&raw.abstract_text))?;
    Ok(ProcessedDocument {
        doc: PaginatedDocument {
            doc_id: raw.id.clone(),
            page_limit,
            sentences,
            pages,
        },
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRecord {
    pub index: usize,
    pub token_span: (usize, usize),
    pub sentence_range: (usize, usize),
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub char_span: (usize, usize),
    pub token_span: (usize, usize),
}

/// One line of the paginated-corpus JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaginatedRecord {
    pub doc_id: String,
    pub page_limit: usize,
    pub pages: Vec<PageRecord>,
    pub sentences: Vec<SentenceRecord>,
    pub summary_sentences: Vec<Vec<String>>,
}

impl From<&ProcessedDocument> for PaginatedRecord {
    fn from(p: &ProcessedDocument) -> Self {
        let doc = &p.doc;
        let starts = doc.sentence_token_starts();
        PaginatedRecord {
            doc_id: doc.doc_id.clone(),
            page_limit: doc.page_limit,
            pages: doc
                .pages
                .iter()
                .map(|pg| PageRecord {
                    index: pg.index,
                    token_span: pg.token_span,
                    sentence_range: (pg.sentence_range.start, pg.sentence_range.end),
                    tokens: doc.page_tokens(pg.index),
                })
                .collect(),
            sentences: doc
                .sentences
                .iter()
                .zip(&starts)
                .map(|(s, &a)| SentenceRecord {
                    char_span: s.char_span,
                    token_span: (a, a + s.tokens.len()),
                })
                .collect(),
            summary_sentences: p.summary_sentence_tokens(),
        }
    }
}

impl TryFrom<PaginatedRecord> for ProcessedDocument {
    type Error = Error;

    fn try_from(rec: PaginatedRecord) -> Result<Self> {
        let stream: Vec<String> = rec
            .pages
            .iter()
            .flat_map(|p| p.tokens.iter().cloned())
            .collect();
        let mut sentences = Vec::with_capacity(rec.sentences.len());
        for (index, s) in rec.sentences.iter().enumerate() {
            let (a, b) = s.token_span;
            if a > b || b > stream.len() {
                return Err(Error::InvalidArgument(format!(
                    "{}: sentence {index} token span out of range",
                    rec.doc_id
                )));
            }
            sentences.push(Sentence {
                index,
                tokens: stream[a..b].to_vec(),
                char_span: s.char_span,
            });
        }
        let pages = rec
            .pages
            .iter()
            .map(|p| Page {
                index: p.index,
                sentence_range: p.sentence_range.0..p.sentence_range.1,
                token_span: p.token_span,
                token_count: p.tokens.len(),
            })
            .collect::<Vec<_>>();
        if pages.is_empty() {
            return Err(Error::EmptyDocument);
        }
        let summary = rec
            .summary_sentences
            .into_iter()
            .enumerate()
            .map(|(index, tokens)| Sentence {
                index,
                tokens,
                char_span: (0, 0),
            })
            .collect();
        Ok(ProcessedDocument {
            doc: PaginatedDocument {
                doc_id: rec.doc_id,
                page_limit: rec.page_limit,
                sentences,
                pages,
            },
            summary,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence_of(n: usize, index: usize) -> Sentence {
        Sentence {
            index,
            tokens: (0..n).map(|i| format!("t{index}_{i}")).collect(),
            char_span: (0, 0),
        }
    }

    #[test]
    fn clean_whitespace() {
        assert_eq!(clean_text("a   b\tc"), "a b c");
        assert_eq!(clean_text("  \n "), "");
    }

    #[test]
    fn clean_command_with_braces() {
        assert_eq!(
            clean_text("we show \\textbf{gains} here"),
            "we show gains here"
        );
    }

    #[test]
    fn clean_math() {
        assert_eq!(clean_text("energy $E=mc^2$ rises"), "energy MATH rises");
        assert_eq!(clean_text("display $$x^2$$ end"), "display MATH end");
    }

    #[test]
    fn clean_unbalanced_brace_keeps_trailing_text() {
        assert_eq!(clean_text("\\emph{never closed text"), "never closed text");
        assert_eq!(
            clean_text("cost \\$5 and 10\\% more"),
            "cost $5 and 10% more"
        );
        assert_eq!(clean_text("lone $ sign"), "lone sign");
    }

    #[test]
    fn split_basic() {
        let s = split_sentences("A cat. A dog.").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].char_span, (0, 6));
        assert_eq!(s[1].char_span, (7, 13));
    }

    #[test]
    fn split_guarded_abbreviation() {
        assert_eq!(split_sentences("See Fig. 3 now.").unwrap().len(), 1);
        assert_eq!(
            split_sentences("As in Smith et al. We agree.")
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            split_sentences("Use tools, e.g. Rust. Fine.")
                .unwrap()
                .len(),
            2
        );
    }

    #[test]
    fn split_no_terminator() {
        let s = split_sentences("no terminator here").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].tokens, vec!["no", "terminator", "here"]);
    }

    #[test]
    fn split_lowercase_continuation_is_not_a_boundary() {
        assert_eq!(split_sentences("It is 3.5 m. then more").unwrap().len(), 1);
        assert_eq!(split_sentences("Why? 42 is why!").unwrap().len(), 2);
    }

    #[test]
    fn split_empty_is_error() {
        assert!(matches!(split_sentences("   "), Err(Error::EmptyText)));
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("The cat sat."), vec!["the", "cat", "sat", "."]);
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("state-of-the-art"),
            vec!["state", "-", "of", "-", "the", "-", "art"]
        );
    }

    #[test]
    fn paginate_greedy_fill() {
        let s: Vec<_> = [3, 3, 2]
            .iter()
            .enumerate()
            .map(|(i, &n)| sentence_of(n, i))
            .collect();
        let pages = paginate(&s, 5).unwrap();
        assert_eq!(pages.len(), 2);
        assert_eq!(pages[0].sentence_range, 0..1);
        assert_eq!(pages[0].token_count, 3);
        assert_eq!(pages[1].sentence_range, 1..3);
        assert_eq!(pages[1].token_count, 5);
        assert_eq!(pages[1].token_span, (3, 8));
    }

    #[test]
    fn paginate_hard_split() {
        let pages = paginate(&[sentence_of(7, 0)], 5).unwrap();
        let counts: Vec<_> = pages.iter().map(|p| p.token_count).collect();
        assert_eq!(counts, vec![5, 2]);
        assert_eq!(pages[1].token_span, (5, 7));
    }

    #[test]
    fn paginate_single_page_when_short() {
        let s: Vec<_> = (0..3).map(|i| sentence_of(2, i)).collect();
        assert_eq!(paginate(&s, 1024).unwrap().len(), 1);
    }

    #[test]
    fn paginate_errors() {
        assert!(matches!(paginate(&[], 5), Err(Error::EmptyDocument)));
        assert!(paginate(&[sentence_of(1, 0)], 0).is_err());
    }

    #[test]
    fn page_sentences_respects_hard_split() {
        let sentences = vec![sentence_of(2, 0), sentence_of(7, 1), sentence_of(1, 2)];
        let doc = PaginatedDocument {
            doc_id: "d".into(),
            page_limit: 5,
            pages: paginate(&sentences, 5).unwrap(),
            sentences,
        };
        // [s0], [s1 0..5], [s1 5..7, s2]
        assert_eq!(doc.num_pages(), 3);
        assert_eq!(doc.page_sentences(2).len(), 2);
        assert_eq!(doc.page_tokens(2), vec!["t1_5", "t1_6", "t2_0"]);
    }

    #[test]
    fn reader_rejects_and_limits() {
        let data = "{\"article\":\"a b.\",\"abstract\":\"a.\"}\n\
                    {\"article\":\"x\"}\n\
                    not json\n\
                    {\"article\":\"c d.\",\"abstract\":\"  \"}\n\
                    {\"article\":\"e.\",\"abstract\":\"f.\"}\n\
                    {\"article\":\"g.\",\"abstract\":\"h.\"}\n";
        let mut reader = CorpusReader::new(data.as_bytes(), "mem.jsonl", Some(2));
        let docs: Vec<_> = reader.by_ref().map(|d| d.unwrap()).collect();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].article, "a b.");
        assert_eq!(docs[0].abstract_text, "a.");
        assert_eq!(docs[0].id, "mem.jsonl:1");
        assert_eq!(docs[1].id, "mem.jsonl:5");
        let report = reader.into_report();
        assert_eq!(report.accepted, 2);
        assert_eq!(report.rejected, 3);
        assert_eq!(report.reasons["missing_abstract"], 1);
        assert_eq!(report.reasons["malformed_json"], 1);
        assert_eq!(report.reasons["empty_abstract"], 1);
    }

    #[test]
    fn reader_rejects_duplicate_ids() {
        let data = "{\"id\":\"x\",\"article\":\"a.\",\"abstract\":\"b.\"}\n\
                    {\"id\":\"x\",\"article\":\"c.\",\"abstract\":\"d.\"}\n";
        let mut reader = CorpusReader::new(data.as_bytes(), "m", None);
        assert_eq!(reader.by_ref().count(), 1);
        assert_eq!(reader.report().reasons["duplicate_id"], 1);
    }

    #[test]
    fn record_round_trip() {
        let raw = RawDocument {
            id: "d1".into(),
            article: "One two three. Four five. Six seven eight nine.".into(),
            abstract_text: "Two three. Nine.".into(),
        };
        let doc = preprocess_document(&raw, 5).unwrap();
        let rec = PaginatedRecord::from(&doc);
        let back = ProcessedDocument::try_from(rec).unwrap();
        assert_eq!(back.doc.pages, doc.doc.pages);
        assert_eq!(back.doc.tokens(), doc.doc.tokens());
        assert_eq!(
            back.summary_sentence_tokens(),
            doc.summary_sentence_tokens()
        );
    }
}
