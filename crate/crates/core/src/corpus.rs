//! QA corpora, word-embedding tables, and image-feature tables.
//!
//! Questions are read from JSONL, one [`QaInstance`] per line. Vector tables
//! share one whitespace-separated row format (`key v1 v2 ... vd`) with an
//! optional `count dim` header line.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of human answers attached to every question.
pub const ANSWERS_PER_QUESTION: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaInstance {
    pub qid: String,
    pub image_id: String,
    pub question: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    pub split: Split,
}

impl QaInstance {
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidInstance {
            qid: self.qid.clone(),
            message,
        };
        if self.answers.len() != ANSWERS_PER_QUESTION {
            return Err(invalid(format!(
                "answers must have length {ANSWERS_PER_QUESTION} (got {})",
                self.answers.len()
            )));
        }
        if self.question.trim().is_empty() {
            return Err(invalid("question is empty".into()));
        }
        if let Some(choices) = &self.choices {
            if choices.len() < 2 {
                return Err(invalid(format!(
                    "choices must have at least 2 entries (got {})",
                    choices.len()
                )));
            }
        }
        Ok(())
    }

    pub fn normalized_answers(&self) -> Vec<String> {
        self.answers.iter().map(|a| normalize_answer(a)).collect()
    }

    pub fn majority_answer(&self) -> String {
        majority_answer(&self.answers)
    }
}

/// An ordered, qid-indexed collection of questions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    instances: Vec<QaInstance>,
    by_qid: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, validating every instance and qid uniqueness.
    /// Line numbers in errors are 1-based positions in `instances`.
    pub fn new(instances: Vec<QaInstance>) -> Result<Self> {
        let mut by_qid = HashMap::with_capacity(instances.len());
        for (i, inst) in instances.iter().enumerate() {
            inst.validate()?;
            if let Some(&first) = by_qid.get(&inst.qid) {
                return Err(Error::DuplicateQid {
                    qid: inst.qid.clone(),
                    first: first + 1,
                    second: i + 1,
                });
            }
            by_qid.insert(inst.qid.clone(), i);
        }
        Ok(Corpus { instances, by_qid })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), path)
    }

    pub fn from_reader<R: BufRead>(reader: R, origin: &Path) -> Result<Self> {
        let mut instances = Vec::new();
        let mut by_qid: HashMap<String, usize> = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let inst: QaInstance = serde_json::from_str(&line)
                .map_err(|e| Error::record(origin, line_no, format!("malformed record: {e}")))?;
            inst.validate().map_err(|e| match e {
                Error::InvalidInstance { message, .. } => Error::record(
                    origin,
                    line_no,
                    format!("field error in {:?}: {message}", inst.qid),
                ),
                other => other,
            })?;
            if let Some(&first) = by_qid.get(&inst.qid) {
                return Err(Error::DuplicateQid {
                    qid: inst.qid,
                    first,
                    second: line_no,
                });
            }
            by_qid.insert(inst.qid.clone(), line_no);
            instances.push(inst);
        }
        let by_qid = instances
            .iter()
            .enumerate()
            .map(|(i, inst)| (inst.qid.clone(), i))
            .collect();
        Ok(Corpus { instances, by_qid })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for inst in &self.instances {
            serde_json::to_writer(&mut out, inst)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_jsonl(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn instances(&self) -> &[QaInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, qid: &str) -> Option<&QaInstance> {
        self.by_qid.get(qid).map(|&i| &self.instances[i])
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &QaInstance> {
        self.instances.iter().filter(move |i| i.split == split)
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts = BTreeMap::new();
        for inst in &self.instances {
            *counts.entry(inst.split).or_insert(0) += 1;
        }
        counts
    }
}

/// Normalizes an answer for exact-match comparison.
///
/// Lowercases, drops ASCII punctuation, collapses whitespace, and strips
/// leading articles (`a`, `an`, `the`) while another word follows.
pub fn normalize_answer(raw: &str) -> String {
    normalize_cow(raw).into_owned()
}

/// [`normalize_answer`] without allocating for already-normal input.
pub(crate) fn normalize_cow(raw: &str) -> Cow<'_, str> {
    if is_normalized(raw) {
        Cow::Borrowed(raw)
    } else {
        Cow::Owned(normalize_full(raw))
    }
}

fn normalize_full(raw: &str) -> String {
    let lowered: String = raw
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    let mut words: Vec<&str> = lowered.split_whitespace().collect();
    let mut start = 0;
    while words.len() - start > 1 && matches!(words[start], "a" | "an" | "the") {
        start += 1;
    }
    words.drain(..start);
    words.join(" ")
}

/// True when `normalize_answer` would return `s` unchanged.
fn is_normalized(s: &str) -> bool {
    let b = s.as_bytes();
    let word_chars = b.iter().all(|&c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == b' ');
    let spacing = !b.starts_with(b" ") && !b.ends_with(b" ") && !s.contains("  ");
    let article = ["a ", "an ", "the "].iter().any(|a| s.starts_with(a));
    word_chars && spacing && !article
}

/// Most frequent normalized answer; ties go to the lexicographically smallest.
pub fn majority_answer<S: AsRef<str>>(answers: &[S]) -> String {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for a in answers {
        *counts.entry(normalize_answer(a.as_ref())).or_insert(0) += 1;
    }
    // BTreeMap iterates in ascending key order, so the first maximum wins ties.
    let mut best: Option<(&String, usize)> = None;
    for (answer, &count) in &counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((answer, count));
        }
    }
    best.map(|(a, _)| a.clone()).unwrap_or_default()
}

/// A keyed table of fixed-length vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable<T> {
    dim: Option<usize>,
    vectors: HashMap<String, Vec<T>>,
}

/// Token → word vector.
pub type EmbeddingTable<T> = VectorTable<T>;
/// Image id → CNN feature vector.
pub type FeatureTable<T> = VectorTable<T>;

impl<T> Default for VectorTable<T> {
    fn default() -> Self {
        VectorTable {
            dim: None,
            vectors: HashMap::new(),
        }
    }
}

impl<T: Scalar> VectorTable<T> {
    /// Builds a table from in-memory rows, checking dimension agreement.
    pub fn from_rows<I, K>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, Vec<T>)>,
        K: Into<String>,
    {
        let mut table = VectorTable::default();
        for (key, v) in rows {
            let key = key.into();
            table.check_dim(v.len())?;
            if table.vectors.insert(key.clone(), v).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate key {key:?}")));
            }
        }
        Ok(table)
    }

    fn check_dim(&mut self, len: usize) -> Result<()> {
        match self.dim {
            None => {
                if len == 0 {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        actual: 0,
                    });
                }
                self.dim = Some(len);
                Ok(())
            }
            Some(d) if d == len => Ok(()),
            Some(d) => Err(Error::DimensionMismatch {
                expected: d,
                actual: len,
            }),
        }
    }

    /// Loads word embeddings. Tokens are lowercased; when two rows differ
    /// only in case the first one is kept.
    pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file), path, true)
    }

    pub fn load_features(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file), path, false)
    }

    /// Parses the row format. `fold_case` selects embedding semantics.
    pub fn parse<R: BufRead>(reader: R, origin: &Path, fold_case: bool) -> Result<Self> {
        let mut table = VectorTable::default();
        let mut header_dim: Option<usize> = None;
        let mut raw_keys: HashMap<String, usize> = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let mut fields = line.split_whitespace();
            let Some(key) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();
            if idx == 0 && rest.len() == 1 {
                if let (Ok(_count), Ok(dim)) = (key.parse::<usize>(), rest[0].parse::<usize>()) {
                    header_dim = Some(dim);
                    continue;
                }
            }
            let mut v = Vec::with_capacity(rest.len());
            for (col, f) in rest.iter().enumerate() {
                let x: T = f.parse().map_err(|_| {
                    Error::record(origin, line_no, format!("column {}: not a number: {f:?}", col + 2))
                })?;
                if !x.is_finite() {
                    return Err(Error::record(
                        origin,
                        line_no,
                        format!("column {}: non-finite value {f:?}", col + 2),
                    ));
                }
                v.push(x);
            }
            if let Some(d) = header_dim.or(table.dim) {
                if v.len() != d {
                    return Err(Error::record(
                        origin,
                        line_no,
                        format!("dimension mismatch: expected {d} floats, found {}", v.len()),
                    ));
                }
            }
            if v.is_empty() {
                return Err(Error::record(origin, line_no, "row has no values"));
            }
            if let Some(first) = raw_keys.insert(key.to_string(), line_no) {
                return Err(Error::record(
                    origin,
                    line_no,
                    format!("duplicate key {key:?} (first on line {first})"),
                ));
            }
            table.dim = Some(v.len());
            let key = if fold_case {
                key.to_lowercase()
            } else {
                key.to_string()
            };
            table.vectors.entry(key).or_insert(v);
        }
        Ok(table)
    }

    /// Rows sorted by key.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        let mut rows: Vec<(&str, &[T])> = self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        rows.into_iter()
    }

    /// Writes the table with a `count dim` header and rows sorted by key.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.vectors.len(), self.dim.unwrap_or(0))?;
        for (k, v) in self.iter() {
            write!(out, "{k}")?;
            for x in v {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Vector dimension; `None` for an empty table.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[T]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    /// Image-feature lookup; a missing id is an error, never a zero vector.
    pub fn feature(&self, image_id: &str) -> Result<&[T]> {
        self.get(image_id)
            .ok_or_else(|| Error::UnknownImageId(image_id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(qid: &str, answers: &[&str]) -> QaInstance {
        QaInstance {
            qid: qid.into(),
            image_id: "img".into(),
            question: "What is it?".into(),
            answers: answers.iter().map(|s| s.to_string()).collect(),
            choices: None,
            split: Split::Train,
        }
    }

    fn record(qid: &str, n_answers: usize) -> String {
        let answers: Vec<String> = (0..n_answers).map(|i| format!("a{i}")).collect();
        serde_json::json!({
            "qid": qid, "image_id": "i1", "question": "What is it?",
            "answers": answers, "split": "train"
        })
        .to_string()
    }

    fn load_str(text: &str) -> Result<Corpus> {
        Corpus::from_reader(text.as_bytes(), Path::new("q.jsonl"))
    }

    #[test]
    fn loads_two_records() {
        let text = format!("{}\n{}\n", record("q1", 10), record("q2", 10));
        let corpus = load_str(&text).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.get("q1").unwrap().qid, "q1");
        assert_eq!(corpus.get("q2").unwrap().qid, "q2");
        assert!(corpus.get("q3").is_none());
    }

    #[test]
    fn rejects_nine_answers_with_line_number() {
        let text = format!("{}\n{}\n", record("q1", 10), record("q2", 9));
        let err = load_str(&text).unwrap_err().to_string();
        assert!(err.contains("answers must have length 10"), "{err}");
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn rejects_duplicate_qid() {
        let text = format!("{}\n{}\n", record("q1", 10), record("q1", 10));
        match load_str(&text).unwrap_err() {
            Error::DuplicateQid { qid, first, second } => {
                assert_eq!((qid.as_str(), first, second), ("q1", 1, 2));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_malformed_json_and_blank_question() {
        let err = load_str("{\"qid\": 3}\n").unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
        let mut bad = inst("q", &["x"; 10]);
        bad.question = "   ".into();
        assert!(bad.validate().is_err());
        let mut one_choice = inst("q", &["x"; 10]);
        one_choice.choices = Some(vec!["x".into()]);
        assert!(one_choice.validate().is_err());
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("A Car."), "car");
        assert_eq!(normalize_answer("  YES "), "yes");
        assert_eq!(normalize_answer("the fire hydrant"), "fire hydrant");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("a"), "a");
        assert_eq!(normalize_answer("the the car"), "car");
        assert_eq!(normalize_answer("3:30 p.m."), "330 pm");
    }

    #[test]
    fn majority_examples() {
        let mut answers = vec!["cat"; 6];
        answers.extend(["dog"; 4]);
        assert_eq!(majority_answer(&answers), "cat");

        let mut tie = vec!["a"; 5];
        tie.extend(["b"; 5]);
        assert_eq!(majority_answer(&tie), "a");

        let distinct = ["j", "c", "h", "e", "b", "i", "d", "f", "g", "k"];
        assert_eq!(majority_answer(&distinct), "b");
    }

    #[test]
    fn embeddings_parse() {
        let t = VectorTable::<f64>::parse("a 1 0\nb 0 1".as_bytes(), Path::new("e"), true).unwrap();
        assert_eq!(t.dim(), Some(2));
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("b"), Some(&[0.0, 1.0][..]));

        let err = VectorTable::<f64>::parse("a 1 0 0\nb 0 1 0 1".as_bytes(), Path::new("e"), true)
            .unwrap_err()
            .to_string();
        assert!(err.contains("dimension mismatch") && err.contains(":2:"), "{err}");

        let err = VectorTable::<f64>::parse("a 1\na 2".as_bytes(), Path::new("e"), true)
            .unwrap_err()
            .to_string();
        assert!(err.contains("duplicate key \"a\""), "{err}");

        let err = VectorTable::<f64>::parse("a 1 NaN".as_bytes(), Path::new("e"), true)
            .unwrap_err()
            .to_string();
        assert!(err.contains("non-finite"), "{err}");
    }

    #[test]
    fn header_line_is_detected() {
        let t = VectorTable::<f32>::parse("2 3\nThe 1 2 3\ncat 4 5 6\n".as_bytes(), Path::new("e"), true)
            .unwrap();
        assert_eq!(t.dim(), Some(3));
        assert!(t.get("the").is_some());
        let err = VectorTable::<f32>::parse("2 3\nx 1 2\n".as_bytes(), Path::new("e"), true);
        assert!(err.is_err());
    }

    #[test]
    fn features_parse_and_lookup() {
        let t = VectorTable::<f64>::parse("img1 0.5 0.5".as_bytes(), Path::new("f"), false).unwrap();
        assert_eq!(t.dim(), Some(2));
        assert!(matches!(t.feature("img2"), Err(Error::UnknownImageId(_))));

        let empty = VectorTable::<f64>::parse("".as_bytes(), Path::new("f"), false).unwrap();
        assert_eq!(empty.dim(), None);
        assert!(empty.feature("img1").is_err());
    }

    #[test]
    fn table_write_round_trips() {
        let t = VectorTable::<f64>::from_rows([("x", vec![0.1, -2.5e-7]), ("y", vec![1.0 / 3.0, 4.0])])
            .unwrap();
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = VectorTable::<f64>::parse(buf.as_slice(), Path::new("t"), false).unwrap();
        assert_eq!(t, back);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_is_idempotent(s in "\\PC{0,40}") {
                let once = normalize_answer(&s);
                prop_assert_eq!(normalize_answer(&once), once.clone());
            }

            #[test]
            fn fast_path_agrees(s in "(the |an |a )?[a-z0-9 ]{0,20}") {
                prop_assert_eq!(normalize_answer(&s), normalize_full(&s));
            }

            #[test]
            fn majority_is_member(answers in proptest::collection::vec("[a-cA-C .]{0,4}", 10)) {
                let m = majority_answer(&answers);
                let normalized: Vec<String> = answers.iter().map(|a| normalize_answer(a)).collect();
                prop_assert!(normalized.contains(&m));
            }

            #[test]
            fn corpus_round_trips(n in 1usize..6, with_choices in any::<bool>()) {
                let instances: Vec<QaInstance> = (0..n)
                    .map(|i| {
                        let mut q = inst(&format!("q{i}"), &["red", "Red.", "blue", "x", "y", "z", "w", "v", "u", "t"]);
                        if with_choices {
                            q.choices = Some(vec!["red".into(), "blue".into()]);
                        }
                        q.split = if i % 2 == 0 { Split::Train } else { Split::Val };
                        q
                    })
                    .collect();
                let corpus = Corpus::new(instances).unwrap();
                let mut buf = Vec::new();
                corpus.write_jsonl(&mut buf).unwrap();
                let back = Corpus::from_reader(buf.as_slice(), Path::new("rt")).unwrap();
                prop_assert_eq!(corpus, back);
            }
        }
    }
}
