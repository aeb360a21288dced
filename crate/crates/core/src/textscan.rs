//! Tokenization and engagement-marker detection.
//!
//! Segmentation proceeds left to right. At each non-whitespace position the
//! first matching rule wins: URL, mention, hashtag, ASCII emoticon, emoji,
//! word/number (Unicode word boundaries), and finally a single grapheme of
//! punctuation. Every non-whitespace character ends up in exactly one token,
//! so the gaps between tokens are pure whitespace.

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::{Document, Platform, SubmissionType};

pub const DEFAULT_EMOTICONS: &str = include_str!("../data/emoticons.txt");

const URL_PREFIXES: [&str; 4] = ["http://", "https://", "ftp://", "www."];
const URL_TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '}', '"', '\'', '>'];

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("cannot read emoticon list {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("emoticon list contains no patterns")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Word,
    Hashtag,
    Mention,
    Url,
    Emoji,
    AsciiEmoticon,
    Number,
    Punctuation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub surface: &'a str,
    pub kind: TokenKind,
    /// Byte offset of `surface` in the source text.
    pub offset: usize,
}

impl Token<'_> {
    pub fn end(&self) -> usize {
        self.offset + self.surface.len()
    }

    /// Lowercased, NFC-normalized form for word, hashtag and mention tokens
    /// (sigils stripped). Other kinds have no normalized form.
    pub fn normalized(&self) -> Option<String> {
        match self.kind {
            TokenKind::Word => Some(normalize_word(self.surface)),
            TokenKind::Hashtag | TokenKind::Mention => Some(normalize_word(&self.surface[1..])),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream<'a> {
    source: &'a str,
    tokens: Vec<Token<'a>>,
}

impl<'a> TokenStream<'a> {
    pub fn tokens(&self) -> &[Token<'a>] {
        &self.tokens
    }

    pub fn source(&self) -> &'a str {
        self.source
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn count(&self, kind: TokenKind) -> usize {
        self.tokens.iter().filter(|t| t.kind == kind).count()
    }

    /// Vocabulary terms: word tokens plus sigil-stripped hashtags and
    /// mentions, lowercased and NFC-normalized. Stop-words are kept.
    pub fn normalized_words(&self) -> Vec<String> {
        self.tokens.iter().filter_map(Token::normalized).collect()
    }

    /// Rebuilds the source from token surfaces and the separators between
    /// them.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.source.len());
        let mut pos = 0;
        for tok in &self.tokens {
            out.push_str(&self.source[pos..tok.offset]);
            out.push_str(tok.surface);
            pos = tok.end();
        }
        out.push_str(&self.source[pos..]);
        out
    }
}

pub fn normalize_word(s: &str) -> String {
    if s.is_ascii() {
        s.to_ascii_lowercase()
    } else {
        s.nfc().collect::<String>().to_lowercase()
    }
}

pub fn whitespace_word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Emoji blocks: Misc Symbols & Pictographs, Emoticons, Transport & Map,
/// Supplemental Symbols & Pictographs.
pub fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F300..=0x1F5FF | 0x1F600..=0x1F64F | 0x1F680..=0x1F6FF | 0x1F900..=0x1F9FF)
}

/// Tokenizer configured with an ASCII emoticon pattern list.
#[derive(Debug, Clone)]
pub struct Scanner {
    /// Sorted longest first so the first hit is the longest match.
    emoticons: Vec<String>,
    /// Pattern indices keyed by first byte.
    by_first_byte: Vec<Vec<usize>>,
}

impl Default for Scanner {
    fn default() -> Self {
        Self::from_list(DEFAULT_EMOTICONS).expect("bundled emoticon list is valid")
    }
}

impl Scanner {
    /// Parses a pattern list: one pattern per line, `#` comments and blank
    /// lines ignored.
    pub fn from_list(list: &str) -> Result<Self, ScanError> {
        Self::from_patterns(
            list.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn from_patterns<I, S>(patterns: I) -> Result<Self, ScanError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut emoticons: Vec<String> = patterns.into_iter().map(Into::into).collect();
        emoticons.retain(|p| !p.is_empty() && !p.chars().any(char::is_whitespace));
        if emoticons.is_empty() {
            return Err(ScanError::Empty);
        }
        emoticons.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        emoticons.dedup();
        let mut by_first_byte = vec![Vec::new(); 256];
        for (i, p) in emoticons.iter().enumerate() {
            by_first_byte[p.as_bytes()[0] as usize].push(i);
        }
        Ok(Self {
            emoticons,
            by_first_byte,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ScanError> {
        let list = fs::read_to_string(path).map_err(|source| ScanError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_list(&list)
    }

    pub fn emoticons(&self) -> &[String] {
        &self.emoticons
    }

    pub fn tokenize<'a>(&self, text: &'a str) -> TokenStream<'a> {
        let mut tokens = Vec::new();
        let mut i = 0;
        let mut prev: Option<char> = None;
        while i < text.len() {
            let rest = &text[i..];
            let c = rest.chars().next().expect("non-empty remainder");
            if c.is_whitespace() {
                i += c.len_utf8();
                prev = Some(c);
                continue;
            }
            let open = prev.is_none_or(|p| !is_word_char(p));
            let (kind, len) = self.next_token(rest, c, open);
            let surface = &rest[..len];
            tokens.push(Token {
                surface,
                kind,
                offset: i,
            });
            prev = surface.chars().next_back();
            i += len;
        }
        TokenStream {
            source: text,
            tokens,
        }
    }

    fn next_token(&self, rest: &str, c: char, open: bool) -> (TokenKind, usize) {
        if open {
            if let Some(len) = match_url(rest) {
                return (TokenKind::Url, len);
            }
        }
        if c == '@' && open {
            let len = 1 + rest[1..]
                .bytes()
                .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
                .count();
            if len > 1 {
                return (TokenKind::Mention, len);
            }
        }
        if c == '#' && open {
            if let Some(len) = match_hashtag(rest) {
                return (TokenKind::Hashtag, len);
            }
        }
        if let Some(len) = self.match_emoticon(rest, open) {
            return (TokenKind::AsciiEmoticon, len);
        }
        if is_emoji(c) {
            return (TokenKind::Emoji, first_grapheme_len(rest));
        }
        if is_word_char(c) {
            return match_word(rest);
        }
        (TokenKind::Punctuation, first_grapheme_len(rest))
    }

    fn match_emoticon(&self, rest: &str, open: bool) -> Option<usize> {
        self.by_first_byte[rest.as_bytes()[0] as usize]
            .iter()
            .find_map(|&i| {
                let pat = &self.emoticons[i];
                if !rest.starts_with(pat.as_str()) {
                    return None;
                }
                let starts_alnum = pat.chars().next().is_some_and(char::is_alphanumeric);
                if starts_alnum && !open {
                    return None;
                }
                match rest[pat.len()..].chars().next() {
                    Some(next) if next.is_alphanumeric() => None,
                    _ => Some(pat.len()),
                }
            })
    }

    /// Computes the marker profile of a document.
    pub fn scan_markers(&self, doc: &Document) -> MarkerProfile {
        Self::markers_of(doc, &self.tokenize(&doc.text))
    }

    /// Marker profile of `doc` from an already tokenized `stream` of its text.
    pub fn markers_of(doc: &Document, stream: &TokenStream<'_>) -> MarkerProfile {
        let mut profile = MarkerProfile::from_stream(stream);
        profile.retweet = doc.platform == Platform::Twitter
            && stream.tokens().first().is_some_and(|t| t.surface == "RT");
        profile.submission_is_comment = doc.platform == Platform::Reddit
            && doc.submission_type == Some(SubmissionType::Comment);
        profile
    }
}

fn first_grapheme_len(rest: &str) -> usize {
    rest.graphemes(true).next().map_or(rest.len(), str::len)
}

fn match_url(rest: &str) -> Option<usize> {
    let prefix = URL_PREFIXES.iter().find(|p| {
        rest.len() > p.len() && rest.as_bytes()[..p.len()].eq_ignore_ascii_case(p.as_bytes())
    })?;
    let mut end = rest.find(char::is_whitespace).unwrap_or(rest.len());
    while end > prefix.len() {
        let last = rest[..end].chars().next_back().expect("non-empty");
        if URL_TRAILING.contains(&last) {
            end -= last.len_utf8();
        } else {
            break;
        }
    }
    (end > prefix.len()).then_some(end)
}

fn match_hashtag(rest: &str) -> Option<usize> {
    let mut chars = rest[1..].char_indices();
    match chars.next() {
        Some((_, c)) if c.is_alphabetic() || c == '_' => {}
        _ => return None,
    }
    let body = chars
        .find(|(_, c)| !is_word_char(*c))
        .map_or(rest.len() - 1, |(idx, _)| idx);
    Some(1 + body)
}

/// A Unicode word segment, extended across interior `**` runs so that
/// censored forms like `f**k` stay whole.
fn match_word(rest: &str) -> (TokenKind, usize) {
    let bytes = rest.as_bytes();
    let run = bytes
        .iter()
        .take_while(|b| b.is_ascii_alphanumeric() || **b == b'_')
        .count();
    let plain_end = match bytes.get(run) {
        None => true,
        Some(b) => {
            b.is_ascii_whitespace()
                || (b.is_ascii() && !b"'.:,;*_".contains(b) && !b.is_ascii_alphanumeric())
        }
    };
    if plain_end && bytes[..run].iter().any(u8::is_ascii_alphanumeric) {
        let kind = if bytes[..run].iter().any(u8::is_ascii_alphabetic) {
            TokenKind::Word
        } else {
            TokenKind::Number
        };
        return (kind, run);
    }
    match_word_segment(rest)
}

fn match_word_segment(rest: &str) -> (TokenKind, usize) {
    let first = rest.split_word_bounds().next().unwrap_or(rest);
    let mut len = first.len();
    if first.chars().all(char::is_alphabetic) {
        loop {
            let tail = &rest[len..];
            let stars = tail.bytes().take_while(|b| *b == b'*').count();
            if stars < 2 {
                break;
            }
            let after = &tail[stars..];
            match after.split_word_bounds().next() {
                Some(seg) if !seg.is_empty() && seg.chars().all(char::is_alphabetic) => {
                    len += stars + seg.len();
                }
                _ => break,
            }
        }
    }
    let surface = &rest[..len];
    let kind = if surface.chars().any(char::is_alphabetic) {
        TokenKind::Word
    } else if surface.chars().any(char::is_numeric) {
        TokenKind::Number
    } else {
        TokenKind::Punctuation
    };
    (kind, len)
}

/// Tokenizes with the bundled emoticon list.
pub fn tokenize(text: &str) -> TokenStream<'_> {
    default_scanner().tokenize(text)
}

pub fn default_scanner() -> &'static Scanner {
    static SCANNER: OnceLock<Scanner> = OnceLock::new();
    SCANNER.get_or_init(Scanner::default)
}

/// Engagement markers of the behaviour analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    Mentions,
    Hashtags,
    AllCaps,
    AsciiEmoticons,
    Emojis,
    Emphasis,
    Censored,
    RepeatedWords,
    Retweet,
    SubmissionIsComment,
}

impl Marker {
    pub const ALL: [Marker; 10] = [
        Marker::Mentions,
        Marker::Hashtags,
        Marker::AllCaps,
        Marker::AsciiEmoticons,
        Marker::Emojis,
        Marker::Emphasis,
        Marker::Censored,
        Marker::RepeatedWords,
        Marker::Retweet,
        Marker::SubmissionIsComment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Marker::Mentions => "mentions",
            Marker::Hashtags => "hashtags",
            Marker::AllCaps => "all_caps",
            Marker::AsciiEmoticons => "ascii_emoticons",
            Marker::Emojis => "emojis",
            Marker::Emphasis => "emphasis",
            Marker::Censored => "censored",
            Marker::RepeatedWords => "repeated_words",
            Marker::Retweet => "retweet",
            Marker::SubmissionIsComment => "submission_is_comment",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Platform on which the marker exists at all, if restricted.
    pub fn platform(self) -> Option<Platform> {
        match self {
            Marker::Retweet => Some(Platform::Twitter),
            Marker::SubmissionIsComment => Some(Platform::Reddit),
            _ => None,
        }
    }
}

/// Per-document marker counts.
///
/// The ratio denominators are the number of non-punctuation tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkerProfile {
    pub mentions: u32,
    pub hashtags: u32,
    pub all_caps: u32,
    pub ascii_emoticons: u32,
    pub emojis: u32,
    pub emphasis: u32,
    pub censored: u32,
    pub repeated_words: u32,
    pub retweet: bool,
    pub submission_is_comment: bool,
    pub content_tokens: u32,
    pub hashtag_ratio: f64,
    pub mention_ratio: f64,
}

impl MarkerProfile {
    fn from_stream(stream: &TokenStream<'_>) -> Self {
        let tokens = stream.tokens();
        let source = stream.source();
        let mut p = MarkerProfile::default();
        for tok in tokens {
            match tok.kind {
                TokenKind::Mention => p.mentions += 1,
                TokenKind::Hashtag => p.hashtags += 1,
                TokenKind::AsciiEmoticon => p.ascii_emoticons += 1,
                TokenKind::Emoji => p.emojis += 1,
                TokenKind::Word => {
                    if is_all_caps(tok.surface) {
                        p.all_caps += 1;
                    }
                    if is_censored(tok.surface) {
                        p.censored += 1;
                    }
                }
                _ => {}
            }
            if tok.kind != TokenKind::Punctuation {
                p.content_tokens += 1;
            }
        }
        p.emphasis = count_emphasis(tokens, source);
        p.repeated_words = count_repeats(tokens);
        if p.content_tokens > 0 {
            p.hashtag_ratio = f64::from(p.hashtags) / f64::from(p.content_tokens);
            p.mention_ratio = f64::from(p.mentions) / f64::from(p.content_tokens);
        }
        p
    }

    /// Whether the document scores positively on `marker`.
    pub fn has(&self, marker: Marker) -> bool {
        match marker {
            Marker::Mentions => self.mentions > 0,
            Marker::Hashtags => self.hashtags > 0,
            Marker::AllCaps => self.all_caps > 0,
            Marker::AsciiEmoticons => self.ascii_emoticons > 0,
            Marker::Emojis => self.emojis > 0,
            Marker::Emphasis => self.emphasis > 0,
            Marker::Censored => self.censored > 0,
            Marker::RepeatedWords => self.repeated_words > 0,
            Marker::Retweet => self.retweet,
            Marker::SubmissionIsComment => self.submission_is_comment,
        }
    }
}

/// Alphabetic (apostrophes allowed), at least two letters, all uppercase.
fn is_all_caps(surface: &str) -> bool {
    let mut letters = 0;
    for c in surface.chars() {
        if c.is_alphabetic() {
            if !c.is_uppercase() {
                return false;
            }
            letters += 1;
        } else if c != '\'' && c != '\u{2019}' {
            return false;
        }
    }
    letters >= 2
}

fn is_censored(surface: &str) -> bool {
    surface.contains("**") && surface.chars().all(|c| c == '*' || c.is_alphabetic())
}

/// `*word*` with no adjacent `*` or word characters outside the pair.
fn count_emphasis(tokens: &[Token<'_>], source: &str) -> u32 {
    let mut count = 0;
    for w in tokens.windows(3) {
        let (open, word, close) = (&w[0], &w[1], &w[2]);
        if open.surface != "*"
            || close.surface != "*"
            || word.kind != TokenKind::Word
            || word.surface.contains('*')
            || open.end() != word.offset
            || word.end() != close.offset
        {
            continue;
        }
        let before = source[..open.offset].chars().next_back();
        let after = source[close.end()..].chars().next();
        let clear = |c: Option<char>| c.is_none_or(|c| c != '*' && !is_word_char(c));
        if clear(before) && clear(after) {
            count += 1;
        }
    }
    count
}

/// Number of runs where the same normalized word repeats back to back.
fn count_repeats(tokens: &[Token<'_>]) -> u32 {
    let mut runs = 0;
    let mut in_run = false;
    for pair in tokens.windows(2) {
        let same = pair[0].kind == TokenKind::Word
            && pair[1].kind == TokenKind::Word
            && (pair[0].surface == pair[1].surface
                || normalize_word(pair[0].surface) == normalize_word(pair[1].surface));
        if same && !in_run {
            runs += 1;
        }
        in_run = same;
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn kinds(text: &str) -> Vec<(String, TokenKind)> {
        tokenize(text)
            .tokens()
            .iter()
            .map(|t| (t.surface.to_string(), t.kind))
            .collect()
    }

    fn doc(text: &str, platform: Platform) -> Document {
        Document {
            doc_id: "d".into(),
            user_id: "u".into(),
            timestamp: Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap(),
            text: text.into(),
            platform,
            submission_type: None,
        }
    }

    fn markers(text: &str) -> MarkerProfile {
        default_scanner().scan_markers(&doc(text, Platform::Twitter))
    }

    #[test]
    fn mention_example() {
        use TokenKind::*;
        assert_eq!(
            kinds("Hello @earissola!"),
            vec![
                ("Hello".into(), Word),
                ("@earissola".into(), Mention),
                ("!".into(), Punctuation)
            ]
        );
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \n\t ").is_empty());
    }

    #[test]
    fn hashtag_is_single_token() {
        assert_eq!(
            kinds("#WishYouWereHere"),
            vec![("#WishYouWereHere".into(), TokenKind::Hashtag)]
        );
    }

    #[test]
    fn hashtag_cannot_start_with_digit() {
        let k = kinds("#2020");
        assert_eq!(k[0], ("#".into(), TokenKind::Punctuation));
        assert_eq!(k[1], ("2020".into(), TokenKind::Number));
        assert_eq!(kinds("#_x1")[0].1, TokenKind::Hashtag);
    }

    #[test]
    fn email_is_not_a_mention() {
        assert!(kinds("me@example.com")
            .iter()
            .all(|(_, k)| *k != TokenKind::Mention));
    }

    #[test]
    fn urls_keep_trailing_punctuation_separate() {
        let k = kinds("see https://example.com/a?b=1.");
        assert_eq!(k[1], ("https://example.com/a?b=1".into(), TokenKind::Url));
        assert_eq!(k[2], (".".into(), TokenKind::Punctuation));
        assert_eq!(kinds("www.x.org")[0].1, TokenKind::Url);
    }

    #[test]
    fn emoticons() {
        assert_eq!(
            kinds(">:( today")[0],
            (">:(".into(), TokenKind::AsciiEmoticon)
        );
        assert_eq!(kinds("love <3")[1], ("<3".into(), TokenKind::AsciiEmoticon));
        assert_eq!(kinds(":-P")[0].1, TokenKind::AsciiEmoticon);
        // a clock time is not an emoticon
        assert!(kinds("at 10:30")
            .iter()
            .all(|(_, k)| *k != TokenKind::AsciiEmoticon));
        // letter-led patterns need a word boundary on the left
        assert!(kinds("haXD")
            .iter()
            .all(|(_, k)| *k != TokenKind::AsciiEmoticon));
        assert_eq!(kinds("lol XD")[1].1, TokenKind::AsciiEmoticon);
    }

    #[test]
    fn emoji_sequences_stay_together() {
        let family = "\u{1F468}\u{200D}\u{1F469}\u{200D}\u{1F467}";
        let text = format!("hi {family}\u{1F600}");
        let k = kinds(&text);
        assert_eq!(k[1], (family.to_string(), TokenKind::Emoji));
        assert_eq!(k[2], ("\u{1F600}".to_string(), TokenKind::Emoji));
    }

    #[test]
    fn words_numbers_and_contractions() {
        use TokenKind::*;
        assert_eq!(
            kinds("I don't have 3.5 cats"),
            vec![
                ("I".into(), Word),
                ("don't".into(), Word),
                ("have".into(), Word),
                ("3.5".into(), Number),
                ("cats".into(), Word)
            ]
        );
    }

    #[test]
    fn normalized_words_strip_sigils_and_lowercase() {
        let s = tokenize("Hello @Bob #Sad, RT 42 :)");
        assert_eq!(s.normalized_words(), vec!["hello", "bob", "sad", "rt"]);
        let nfd = "Cafe\u{301}";
        assert_eq!(tokenize(nfd).normalized_words(), vec!["caf\u{e9}"]);
    }

    #[test]
    fn emoticon_marker() {
        assert_eq!(markers(">:( today was bad").ascii_emoticons, 1);
    }

    #[test]
    fn emphasis_marker() {
        assert_eq!(markers("a *great* time").emphasis, 1);
        assert_eq!(markers("I don't *think* I...").emphasis, 1);
        assert_eq!(markers("a**b** c").emphasis, 0);
        assert_eq!(markers("2*3*4").emphasis, 0);
    }

    #[test]
    fn censored_marker() {
        let m = markers("f**k this");
        assert_eq!(m.censored, 1);
        assert_eq!(kinds("s**t")[0], ("s**t".into(), TokenKind::Word));
        assert_eq!(markers("a*b").censored, 0);
    }

    #[test]
    fn retweet_and_hashtag_ratio() {
        let m = markers("RT @x: hi #a #b");
        assert!(m.retweet);
        assert_eq!(m.content_tokens, 5);
        assert!((m.hashtag_ratio - 0.4).abs() < 1e-12);
        assert!((m.mention_ratio - 0.2).abs() < 1e-12);
        assert!(!markers("rt @x hi").retweet);
    }

    #[test]
    fn retweet_only_on_twitter() {
        let m = default_scanner().scan_markers(&doc("RT @x hi", Platform::Reddit));
        assert!(!m.retweet);
    }

    #[test]
    fn comment_only_on_reddit() {
        let mut d = doc("hi", Platform::Reddit);
        d.submission_type = Some(SubmissionType::Comment);
        assert!(default_scanner().scan_markers(&d).submission_is_comment);
        d.submission_type = Some(SubmissionType::Post);
        assert!(!default_scanner().scan_markers(&d).submission_is_comment);
    }

    #[test]
    fn all_caps_ignores_single_letters() {
        assert_eq!(markers("I am A person").all_caps, 0);
        assert_eq!(markers("I am SO ANGRY").all_caps, 2);
        assert_eq!(markers("DON'T").all_caps, 1);
        assert_eq!(markers("#ANGRY").all_caps, 0);
    }

    #[test]
    fn repeated_words() {
        assert_eq!(markers("no no no way").repeated_words, 1);
        assert_eq!(markers("very Very good good").repeated_words, 2);
        assert_eq!(markers("no, no").repeated_words, 0);
    }

    #[test]
    fn no_tokens_means_zero_ratios() {
        let m = markers("!!!");
        assert_eq!(m.content_tokens, 0);
        assert_eq!(m.hashtag_ratio, 0.0);
    }

    #[test]
    fn custom_emoticon_list() {
        let scanner = Scanner::from_list("# only one\n(y)\n").unwrap();
        assert_eq!(
            scanner.tokenize("ok (y)").tokens()[1].kind,
            TokenKind::AsciiEmoticon
        );
        assert_ne!(
            scanner.tokenize("bad :(").tokens()[1].kind,
            TokenKind::AsciiEmoticon
        );
        assert!(Scanner::from_list("# nothing\n").is_err());
    }

    #[test]
    fn bundled_list_size() {
        let n = Scanner::default().emoticons().len();
        assert!((60..=100).contains(&n), "{n}");
    }

    proptest! {
        #[test]
        fn tokenize_reconstructs_any_text(text in "\\PC{0,64}") {
            let stream = tokenize(&text);
            prop_assert_eq!(stream.reconstruct(), text.clone());
            let mut pos = 0;
            for tok in stream.tokens() {
                prop_assert!(!tok.surface.is_empty());
                prop_assert!(text[pos..tok.offset].chars().all(char::is_whitespace));
                pos = tok.end();
            }
            prop_assert!(text[pos..].chars().all(char::is_whitespace));
        }

        #[test]
        fn ascii_fast_path_agrees_with_segmenter(text in "[a-zA-Z0-9_][a-zA-Z0-9_'.:,;*@#!? -]{0,12}") {
            prop_assert_eq!(match_word(&text), match_word_segment(&text));
        }

        #[test]
        fn tokenize_handles_social_text(
            parts in proptest::collection::vec(
                prop_oneof![
                    Just("@user".to_string()), Just("#tag".to_string()), Just(":-)".to_string()),
                    Just("*bold*".to_string()), Just("f**k".to_string()), Just("\u{1F600}".to_string()),
                    Just("http://a.b/c".to_string()), Just("WORD".to_string()), "[a-z]{1,6}",
                    "[ \t\n]{0,2}", "[!?.,:;()<>*#@]{1,3}",
                ],
                0..20,
            )
        ) {
            let text = parts.concat();
            let stream = tokenize(&text);
            prop_assert_eq!(stream.reconstruct(), text.clone());
            let m = markers(&text);
            prop_assert_eq!(m.hashtags as usize, stream.count(TokenKind::Hashtag));
            prop_assert!((0.0..=1.0).contains(&m.hashtag_ratio));
            prop_assert!((0.0..=1.0).contains(&m.mention_ratio));
        }
    }
}
