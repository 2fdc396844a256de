//! Lexicon-driven question parser.
//!
//! A question becomes a tree rooted at a speech-act node. WH questions carry
//! a FOCUS edge to the question word and a CONTENT edge to the main
//! predicate; yes/no questions carry only CONTENT. Argument nodes hang off
//! the content node by semantic role and carry an ontology type from the
//! lexicon.
//!
//! Parsing rules, applied to the tokens of [`tokenize`]:
//!
//! 1. A leading WH word (`how many`/`how much` as one unit) makes a WH
//!    question; a leading AUX makes a yes/no question; anything else is
//!    unsupported.
//! 2. CONTENT is the first VERB. Without a verb it is the head (last noun) of
//!    the first noun run.
//! 3. Every other noun run or pronoun attaches to CONTENT: LOCATION when
//!    introduced by a locative preposition, AGENT when it precedes the
//!    content verb, AFFECTED when it directly follows the verb, MOD
//!    otherwise. A noun right after a non-counting WH word ("what color")
//!    is MOD.
//! 4. Inside a noun run, earlier nouns are MOD children of the last one.
//! 5. Adjectives attach by MOD to the noun they precede, or to CONTENT when
//!    used predicatively.
//! 6. Out-of-lexicon words are nouns of type `UNKNOWN`.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textsim::tokenize;

/// Top of every ancestor chain.
pub const ROOT: &str = "ROOT";
/// Type of out-of-lexicon words; its parent is always [`ROOT`].
pub const UNKNOWN: &str = "UNKNOWN";

const WH_WORDS: [&str; 8] = ["what", "where", "who", "why", "how", "which", "when", "whose"];
const LOCATIVE_PREPS: [&str; 10] = [
    "in", "on", "at", "under", "near", "behind", "beside", "above", "below", "by",
];

fn valid_type_name(name: &str) -> bool {
    !name.is_empty()
        && !name
            .chars()
            .any(|c| c.is_whitespace() || "()[],:".contains(c))
}

/// Is-a hierarchy over type names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    parent: HashMap<String, String>,
}

impl Ontology {
    /// Builds an ontology from `(child, parent)` links, checking that every
    /// parent resolves and every chain reaches [`ROOT`].
    pub fn from_links<I, S>(links: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut parent = HashMap::new();
        for (child, par) in links {
            let (child, par) = (child.into(), par.into());
            for name in [&child, &par] {
                if !valid_type_name(name) {
                    return Err(Error::Ontology(format!("invalid type name {name:?}")));
                }
            }
            if child == ROOT {
                return Err(Error::Ontology("ROOT cannot have a parent".into()));
            }
            if let Some(prev) = parent.insert(child.clone(), par.clone()) {
                if prev != par {
                    return Err(Error::Ontology(format!(
                        "type {child:?} has two parents ({prev:?}, {par:?})"
                    )));
                }
            }
        }
        parent
            .entry(UNKNOWN.to_string())
            .or_insert_with(|| ROOT.to_string());
        let onto = Ontology { parent };
        onto.verify()?;
        Ok(onto)
    }

    fn verify(&self) -> Result<()> {
        let mut names: Vec<&String> = self.parent.keys().collect();
        names.sort();
        let mut done: HashSet<&str> = HashSet::new();
        for start in names {
            let mut path: Vec<&str> = Vec::new();
            let mut cur = start.as_str();
            while cur != ROOT && !done.contains(cur) {
                if let Some(pos) = path.iter().position(|t| *t == cur) {
                    let mut cycle: Vec<&str> = path[pos..].to_vec();
                    cycle.push(cur);
                    return Err(Error::Ontology(format!("cycle: {}", cycle.join(" -> "))));
                }
                path.push(cur);
                cur = match self.parent.get(cur) {
                    Some(p) => p,
                    None => {
                        // start is always a key, so the dangling name has a referrer
                        let referrer = path[path.len() - 2];
                        return Err(Error::Ontology(format!(
                            "unresolved parent {cur:?} of {referrer:?}"
                        )));
                    }
                };
            }
            done.extend(path);
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file), path)
    }

    /// Reads `child<TAB>parent` lines; blank lines and `#` comments are skipped.
    pub fn parse<R: BufRead>(reader: R, origin: &Path) -> Result<Self> {
        let mut links = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(Error::record(origin, idx + 1, "expected child<TAB>parent"));
            }
            links.push((fields[0].to_string(), fields[1].to_string()));
        }
        Self::from_links(links)
    }

    pub fn contains(&self, t: &str) -> bool {
        t == ROOT || self.parent.contains_key(t)
    }

    pub fn parent(&self, t: &str) -> Option<&str> {
        self.parent.get(t).map(String::as_str)
    }

    /// Follows `levels` parent links from `t`, stopping at [`ROOT`].
    pub fn ancestor<'a>(&'a self, t: &'a str, levels: u32) -> Result<&'a str> {
        if !self.contains(t) {
            return Err(Error::UnknownType(t.to_string()));
        }
        let mut cur = t;
        for _ in 0..levels {
            match self.parent(cur) {
                Some(p) => cur = p,
                None => break,
            }
        }
        Ok(cur)
    }

    /// Number of links from `t` to [`ROOT`].
    pub fn depth(&self, t: &str) -> Result<u32> {
        if !self.contains(t) {
            return Err(Error::UnknownType(t.to_string()));
        }
        let mut d = 0;
        let mut cur = t;
        while let Some(p) = self.parent(cur) {
            cur = p;
            d += 1;
        }
        Ok(d)
    }

    /// All type names except ROOT, sorted.
    pub fn types(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.parent.keys().map(String::as_str).collect();
        v.sort();
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Verb,
    Noun,
    Adj,
    Pron,
    Prep,
    Det,
    Aux,
    Wh,
    Other,
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "VERB" => Pos::Verb,
            "NOUN" => Pos::Noun,
            "ADJ" => Pos::Adj,
            "PRON" => Pos::Pron,
            "PREP" => Pos::Prep,
            "DET" => Pos::Det,
            "AUX" => Pos::Aux,
            "WH" => Pos::Wh,
            "OTHER" => Pos::Other,
            _ => return Err(Error::Lexicon(format!("unknown part of speech {s:?}"))),
        })
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Pos::Verb => "VERB",
            Pos::Noun => "NOUN",
            Pos::Adj => "ADJ",
            Pos::Pron => "PRON",
            Pos::Prep => "PREP",
            Pos::Det => "DET",
            Pos::Aux => "AUX",
            Pos::Wh => "WH",
            Pos::Other => "OTHER",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexEntry {
    pub pos: Pos,
    pub onto_type: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: HashMap<String, LexEntry>,
}

impl Lexicon {
    pub fn from_entries<I, S>(entries: I, onto: &Ontology) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Pos, S)>,
        S: Into<String>,
    {
        let mut map = HashMap::new();
        for (word, pos, ty) in entries {
            let (word, ty) = (word.into().to_lowercase(), ty.into());
            if !onto.contains(&ty) {
                return Err(Error::Lexicon(format!(
                    "type {ty:?} of {word:?} is not in the ontology"
                )));
            }
            if map.insert(word.clone(), LexEntry { pos, onto_type: ty }).is_some() {
                return Err(Error::Lexicon(format!("duplicate entry {word:?}")));
            }
        }
        Ok(Lexicon { entries: map })
    }

    pub fn load(path: impl AsRef<Path>, onto: &Ontology) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file), path, onto)
    }

    /// Reads `word<TAB>pos<TAB>onto_type` lines.
    pub fn parse<R: BufRead>(reader: R, origin: &Path, onto: &Ontology) -> Result<Self> {
        let mut rows = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::record(origin, idx + 1, "expected word<TAB>pos<TAB>type"));
            }
            let pos = fields[1]
                .parse()
                .map_err(|e: Error| Error::record(origin, idx + 1, e.to_string()))?;
            rows.push((fields[0].to_string(), pos, fields[2].to_string()));
        }
        Self::from_entries(rows, onto)
    }

    pub fn get(&self, word: &str) -> Option<&LexEntry> {
        self.entries.get(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpeechAct {
    #[serde(rename = "WH_QUESTION")]
    WhQuestion,
    #[serde(rename = "YESNO_QUESTION")]
    YesNoQuestion,
}

impl SpeechAct {
    pub fn as_str(self) -> &'static str {
        match self {
            SpeechAct::WhQuestion => "WH_QUESTION",
            SpeechAct::YesNoQuestion => "YESNO_QUESTION",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Content,
    Focus,
    Agent,
    Affected,
    Location,
    Mod,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Content => "CONTENT",
            Role::Focus => "FOCUS",
            Role::Agent => "AGENT",
            Role::Affected => "AFFECTED",
            Role::Location => "LOCATION",
            Role::Mod => "MOD",
        }
    }

    /// Nodes reached through these roles may be deleted during matching.
    pub fn is_deletable(self) -> bool {
        matches!(self, Role::Location | Role::Mod)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: usize,
    pub word: String,
    pub onto_type: String,
    /// Ontology levels this node has been lifted; 0 keeps the surface word.
    pub lift: u32,
    /// Type label after lifting, set whenever `lift > 0`.
    pub lifted_type: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormMode {
    Surface,
    Typed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticGraph {
    pub speech_act: SpeechAct,
    /// Set for "how many"/"how much" questions.
    pub count_focus: bool,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub root: usize,
}

impl SemanticGraph {
    pub fn speech_act(&self) -> SpeechAct {
        self.speech_act
    }

    pub fn node(&self, id: usize) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == id)
    }

    pub fn incoming(&self, id: usize) -> Option<&Edge> {
        self.edges.iter().find(|e| e.to == id)
    }

    /// Node reached from the root through `role`, if any.
    pub fn root_child(&self, role: Role) -> Option<&Node> {
        self.children(self.root)
            .find(|e| e.role == role)
            .and_then(|e| self.node(e.to))
    }

    /// Ids of nodes in depth-first order from the root (children by id).
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            let mut kids: Vec<usize> = self.children(id).map(|e| e.to).collect();
            kids.sort_unstable_by(|a, b| b.cmp(a));
            stack.extend(kids);
        }
        out
    }

    fn label(&self, node: &Node, mode: FormMode) -> String {
        if node.id == self.root {
            return self.speech_act.as_str().to_string();
        }
        match (mode, &node.lifted_type) {
            (FormMode::Typed, Some(t)) => format!("[{t}]"),
            _ => node.word.clone(),
        }
    }

    fn form_of(&self, id: usize, mode: FormMode) -> String {
        let node = self.node(id).expect("edge endpoints exist");
        let mut label = self.label(node, mode);
        let mut kids: Vec<(Role, String)> = self
            .children(id)
            .map(|e| (e.role, self.form_of(e.to, mode)))
            .collect();
        if !kids.is_empty() {
            kids.sort_by(|a, b| match a.0.as_str().cmp(b.0.as_str()) {
                Ordering::Equal => a.1.cmp(&b.1),
                o => o,
            });
            label.push('(');
            for (i, (role, form)) in kids.iter().enumerate() {
                if i > 0 {
                    label.push(',');
                }
                label.push_str(role.as_str());
                label.push(':');
                label.push_str(form);
            }
            label.push(')');
        }
        label
    }

    /// Order-independent serialization; two graphs match iff their forms are equal.
    pub fn canonical_form(&self, mode: FormMode) -> String {
        self.form_of(self.root, mode)
    }
}

/// Parser bundling the lexicon with its ontology.
#[derive(Debug, Clone)]
pub struct SemanticParser {
    lexicon: Lexicon,
    ontology: Ontology,
}

#[derive(Debug, Clone, Copy)]
struct Tok<'a> {
    word: &'a str,
    pos: Pos,
    ty: &'a str,
}

struct Builder<'a> {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    by_token: HashMap<usize, usize>,
    toks: &'a [Tok<'a>],
}

impl<'a> Builder<'a> {
    fn add(&mut self, word: &str, ty: &str, token: Option<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            id,
            word: word.to_string(),
            onto_type: ty.to_string(),
            lift: 0,
            lifted_type: None,
        });
        if let Some(t) = token {
            self.by_token.insert(t, id);
        }
        id
    }

    fn add_token(&mut self, t: usize) -> usize {
        let tok = self.toks[t];
        self.add(tok.word, tok.ty, Some(t))
    }

    fn link(&mut self, from: usize, to: usize, role: Role) {
        self.edges.push(Edge { from, to, role });
    }
}

/// A maximal run of adjacent nouns, or a single pronoun. Head is `end - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Run {
    start: usize,
    end: usize,
}

impl SemanticParser {
    pub fn new(lexicon: Lexicon, ontology: Ontology) -> Self {
        SemanticParser { lexicon, ontology }
    }

    pub fn load(lexicon: impl AsRef<Path>, ontology: impl AsRef<Path>) -> Result<Self> {
        let ontology = Ontology::load(ontology)?;
        let lexicon = Lexicon::load(lexicon, &ontology)?;
        Ok(SemanticParser { lexicon, ontology })
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn parse(&self, text: &str) -> Result<SemanticGraph> {
        let words = tokenize(text);
        if words.is_empty() {
            return Err(Error::EmptyQuestion);
        }
        let toks: Vec<Tok> = words
            .iter()
            .map(|w| {
                if WH_WORDS.contains(&w.as_str()) {
                    let ty = self.lexicon.get(w).map_or(UNKNOWN, |e| e.onto_type.as_str());
                    return Tok { word: w, pos: Pos::Wh, ty };
                }
                match self.lexicon.get(w) {
                    Some(e) => Tok { word: w, pos: e.pos, ty: &e.onto_type },
                    None => Tok { word: w, pos: Pos::Noun, ty: UNKNOWN },
                }
            })
            .collect();

        let first = toks[0].word;
        let (speech_act, count_focus, start) = if toks[0].pos == Pos::Wh {
            let counting = first == "how" && matches!(toks.get(1).map(|t| t.word), Some("many" | "much"));
            (SpeechAct::WhQuestion, counting, if counting { 2 } else { 1 })
        } else if toks[0].pos == Pos::Aux {
            (SpeechAct::YesNoQuestion, false, 1)
        } else {
            return Err(Error::UnsupportedSpeechAct(first.to_string()));
        };

        let n = toks.len();
        let is_noun = |i: usize| toks[i].pos == Pos::Noun;

        let mut runs: Vec<Run> = Vec::new();
        let mut i = start;
        while i < n {
            match toks[i].pos {
                Pos::Noun => {
                    let s = i;
                    while i < n && is_noun(i) {
                        i += 1;
                    }
                    runs.push(Run { start: s, end: i });
                }
                Pos::Pron => {
                    runs.push(Run { start: i, end: i + 1 });
                    i += 1;
                }
                _ => i += 1,
            }
        }

        // "what color is ..." — the noun right after the WH word
        let wh_det_run = (speech_act == SpeechAct::WhQuestion && !count_focus)
            .then(|| runs.iter().position(|r| r.start == start && is_noun(start)))
            .flatten();

        let verb = (start..n).find(|&i| toks[i].pos == Pos::Verb);
        let content_run = if verb.is_some() {
            None
        } else {
            let pick = |want: Pos| {
                runs.iter()
                    .enumerate()
                    .find(|(ri, r)| Some(*ri) != wh_det_run && toks[r.start].pos == want)
                    .map(|(ri, _)| ri)
            };
            match pick(Pos::Noun).or_else(|| pick(Pos::Pron)).or(wh_det_run) {
                Some(ri) => Some(ri),
                None => return Err(Error::NoContent),
            }
        };
        let content_tok = match (verb, content_run) {
            (Some(v), _) => v,
            (None, Some(ri)) => runs[ri].end - 1,
            (None, None) => unreachable!(),
        };

        let mut b = Builder {
            nodes: Vec::new(),
            edges: Vec::new(),
            by_token: HashMap::new(),
            toks: &toks,
        };
        let root = b.add(speech_act.as_str(), ROOT, None);
        if speech_act == SpeechAct::WhQuestion {
            let (word, ty) = if count_focus {
                (format!("how {}", toks[1].word), UNKNOWN)
            } else {
                (first.to_string(), toks[0].ty)
            };
            let focus = b.add(&word, ty, Some(0));
            b.link(root, focus, Role::Focus);
        }
        let content = b.add_token(content_tok);
        b.link(root, content, Role::Content);

        for (ri, run) in runs.iter().enumerate() {
            let head_tok = run.end - 1;
            let head = if Some(ri) == content_run {
                content
            } else {
                let role = if Some(ri) == wh_det_run {
                    Role::Mod
                } else {
                    self.argument_role(&toks, *run, verb)
                };
                let head = b.add_token(head_tok);
                b.link(content, head, role);
                head
            };
            for t in run.start..head_tok {
                let id = b.add_token(t);
                b.link(head, id, Role::Mod);
            }
        }

        for i in start..n {
            if toks[i].pos != Pos::Adj {
                continue;
            }
            let mut j = i + 1;
            while j < n && matches!(toks[j].pos, Pos::Adj | Pos::Det) {
                j += 1;
            }
            let target = runs
                .iter()
                .find(|r| r.start == j && j < n && is_noun(j))
                .map(|r| b.by_token[&(r.end - 1)])
                .unwrap_or(content);
            let id = b.add_token(i);
            b.link(target, id, Role::Mod);
        }

        Ok(SemanticGraph {
            speech_act,
            count_focus,
            nodes: b.nodes,
            edges: b.edges,
            root,
        })
    }

    fn argument_role(&self, toks: &[Tok], run: Run, verb: Option<usize>) -> Role {
        let mut j = run.start;
        while j > 0 && matches!(toks[j - 1].pos, Pos::Det | Pos::Adj) {
            j -= 1;
        }
        let mut k = j;
        let mut locative = false;
        let mut has_prep = false;
        while k > 0 && toks[k - 1].pos == Pos::Prep {
            has_prep = true;
            locative |= LOCATIVE_PREPS.contains(&toks[k - 1].word);
            k -= 1;
        }
        if locative {
            return Role::Location;
        }
        if let Some(v) = verb {
            if run.end <= v {
                return Role::Agent;
            }
            if !has_prep && j == v + 1 {
                return Role::Affected;
            }
        }
        Role::Mod
    }
}

/// Convenience wrapper over [`SemanticParser::parse`].
pub fn parse_question(text: &str, lexicon: &Lexicon, ontology: &Ontology) -> Result<SemanticGraph> {
    SemanticParser::new(lexicon.clone(), ontology.clone()).parse(text)
}
