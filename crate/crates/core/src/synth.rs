//! Deterministic synthetic VQA-style dataset: templated questions over a
//! small ontology, with a matching lexicon, word embeddings and image
//! features.
//!
//! Each question comes from a semantic frame ("What is {person} {consume}?")
//! whose slots are filled with same-type words, so paraphrases within a frame
//! differ by ontology lifts or an optional deletable location. Answers are
//! drawn from the frame's skewed answer pool.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EmbeddingTable, FeatureTable, QaInstance, Split, ANSWERS_PER_QUESTION};
use crate::error::{Error, Result};
use crate::evalkit::vqa_accuracy;
use crate::semparse::{Lexicon, Ontology, Pos, SemanticParser, ROOT};

const ONTOLOGY: &[(&str, &str)] = &[
    ("PHYS-OBJ", ROOT),
    ("LIVING", "PHYS-OBJ"),
    ("PERSON", "LIVING"),
    ("ANIMAL", "LIVING"),
    ("PLANT", "LIVING"),
    ("ARTIFACT", "PHYS-OBJ"),
    ("VEHICLE", "ARTIFACT"),
    ("FURNITURE", "ARTIFACT"),
    ("SURFACE", "FURNITURE"),
    ("TOY", "ARTIFACT"),
    ("CLOTHING", "ARTIFACT"),
    ("DEVICE", "ARTIFACT"),
    ("OBJECT", "ARTIFACT"),
    ("READING", "ARTIFACT"),
    ("PICTURE", "ARTIFACT"),
    ("FOOD", "PHYS-OBJ"),
    ("PLACE", ROOT),
    ("ROOM", "PLACE"),
    ("BUILDING", "PLACE"),
    ("ROAD", "PLACE"),
    ("OUTDOOR", "PLACE"),
    ("EVENT", ROOT),
    ("ACTIVITY", "EVENT"),
    ("CONSUME", "EVENT"),
    ("HOLD", "EVENT"),
    ("WEAR", "EVENT"),
    ("RIDE", "EVENT"),
    ("PLAY", "EVENT"),
    ("READ", "EVENT"),
    ("PARK", "EVENT"),
    ("SIT", "EVENT"),
    ("SLEEP", "EVENT"),
    ("DRIVE", "EVENT"),
    ("THROW", "EVENT"),
    ("WATCH", "EVENT"),
    ("CUT", "EVENT"),
    ("CHASE", "EVENT"),
    ("EXPRESS", "EVENT"),
    ("PROPERTY", ROOT),
    ("COLOR", "PROPERTY"),
    ("FUNCTION", ROOT),
];

/// `(pos, type, words)`
const LEXICON: &[(Pos, &str, &[&str])] = &[
    (Pos::Wh, "FUNCTION", &["what", "where", "who", "how"]),
    (Pos::Other, "FUNCTION", &["many", "there"]),
    (Pos::Aux, "FUNCTION", &["is", "are"]),
    (Pos::Det, "FUNCTION", &["the", "any", "a"]),
    (Pos::Prep, "FUNCTION", &["in", "on", "near", "at"]),
    (Pos::Pron, "PERSON", &["he", "she"]),
    (
        Pos::Noun,
        "PERSON",
        &["man", "woman", "boy", "girl", "people", "men", "women", "kids", "driver", "player"],
    ),
    (
        Pos::Noun,
        "ANIMAL",
        &["dog", "cat", "puppy", "kitten", "dogs", "cats", "birds", "sheep", "cows", "horse", "bird"],
    ),
    (Pos::Noun, "PLANT", &["grass"]),
    (
        Pos::Noun,
        "VEHICLE",
        &["car", "truck", "bus", "van", "cars", "trucks", "buses", "motorcycle", "scooter", "bike", "skateboard"],
    ),
    (Pos::Noun, "FURNITURE", &["sofa", "chair", "couch", "bench", "bed", "lamp", "sink"]),
    (Pos::Noun, "SURFACE", &["table", "desk", "counter", "floor"]),
    (Pos::Noun, "ROOM", &["kitchen", "bedroom", "bathroom", "room"]),
    (Pos::Noun, "BUILDING", &["building", "house", "store"]),
    (Pos::Noun, "ROAD", &["road", "street"]),
    (Pos::Noun, "OUTDOOR", &["park", "beach"]),
    (Pos::Noun, "PICTURE", &["picture", "photo", "image"]),
    (Pos::Noun, "TOY", &["ball", "frisbee", "kite"]),
    (Pos::Noun, "FOOD", &["pizza", "sandwich", "banana", "bone", "food", "cake", "bread"]),
    (Pos::Noun, "CLOTHING", &["hat", "jacket", "tie"]),
    (Pos::Noun, "DEVICE", &["phone", "laptop", "tv"]),
    (Pos::Noun, "OBJECT", &["umbrella", "bag", "cup", "plate"]),
    (Pos::Noun, "READING", &["book", "newspaper", "menu"]),
    (Pos::Noun, "ACTIVITY", &["tennis", "soccer", "game", "movie"]),
    (Pos::Noun, "COLOR", &["color"]),
    (Pos::Adj, "COLOR", &["red", "white", "blue", "brown", "black", "gray", "green"]),
    (Pos::Verb, "CONSUME", &["eating", "consuming"]),
    (Pos::Verb, "HOLD", &["holding", "carrying"]),
    (Pos::Verb, "WEAR", &["wearing"]),
    (Pos::Verb, "RIDE", &["riding"]),
    (Pos::Verb, "PLAY", &["playing"]),
    (Pos::Verb, "READ", &["reading", "studying"]),
    (Pos::Verb, "PARK", &["parked", "stopped"]),
    (Pos::Verb, "SIT", &["sitting", "seated"]),
    (Pos::Verb, "SLEEP", &["sleeping", "resting", "napping"]),
    (Pos::Verb, "DRIVE", &["driving", "operating"]),
    (Pos::Verb, "THROW", &["throwing", "tossing"]),
    (Pos::Verb, "WATCH", &["watching", "viewing"]),
    (Pos::Verb, "CUT", &["cutting", "slicing"]),
    (Pos::Verb, "CHASE", &["chasing", "following"]),
    (Pos::Verb, "EXPRESS", &["smiling", "laughing"]),
];

fn slot(name: &str) -> &'static [&'static str] {
    match name {
        "person" => &["the man", "the woman", "the boy", "the girl", "he", "she"],
        "animal" => &["dog", "cat", "puppy", "kitten"],
        "animals" => &["dogs", "cats", "birds", "sheep", "cows"],
        "people" => &["people", "men", "women", "kids"],
        "vehicle" => &["car", "truck", "bus", "van"],
        "vehicles" => &["cars", "trucks", "buses"],
        "furniture" => &["sofa", "chair", "couch", "bench"],
        "surface" => &["table", "desk", "counter"],
        "room" => &["kitchen", "bedroom", "bathroom", "room"],
        "building" => &["building", "house", "store"],
        "road" => &["road", "street"],
        "toy" => &["ball", "frisbee", "kite"],
        "picture" => &["picture", "photo", "image"],
        "color" => &["red", "white", "blue", "brown", "black", "gray"],
        "consume" => &["eating", "consuming"],
        "hold" => &["holding", "carrying"],
        "read" => &["reading", "studying"],
        "park" => &["parked", "stopped"],
        "sit" => &["sitting", "seated"],
        "sleep" => &["sleeping", "resting", "napping"],
        "drive" => &["driving", "operating"],
        "throw" => &["throwing", "tossing"],
        "watch" => &["watching", "viewing"],
        "cut" => &["cutting", "slicing"],
        "chase" => &["chasing", "following"],
        "express" => &["smiling", "laughing"],
        // optional deletable locations; the empty entries make them rarer
        "loc" => &["", "", "", " in the kitchen", " in the room"],
        "outloc" => &["", "", "", " in the park", " on the beach"],
        "picloc" => &[" there", " there", " in the picture", " in the photo"],
        "roadloc" => &["", "", " on the road", " on the street"],
        _ => panic!("unknown slot {name}"),
    }
}

struct FrameSpec {
    name: &'static str,
    template: &'static str,
    answers: &'static [&'static str],
}

const FRAMES: &[FrameSpec] = &[
    FrameSpec { name: "person-eat", template: "What is {person} {consume}{loc}?", answers: &["pizza", "sandwich", "banana"] },
    FrameSpec { name: "animal-eat", template: "What is the {animal} {consume}?", answers: &["grass", "bone", "food"] },
    FrameSpec { name: "person-hold", template: "What is {person} {hold}{loc}?", answers: &["umbrella", "phone", "bag"] },
    FrameSpec { name: "person-wear", template: "What is {person} wearing{loc}?", answers: &["hat", "jacket", "tie"] },
    FrameSpec { name: "person-ride", template: "What is {person} riding{outloc}?", answers: &["horse", "bike", "skateboard"] },
    FrameSpec { name: "person-play", template: "What is {person} playing{outloc}?", answers: &["tennis", "frisbee", "soccer"] },
    FrameSpec { name: "person-read", template: "What is {person} {read}{loc}?", answers: &["book", "newspaper", "menu"] },
    FrameSpec { name: "parked-near", template: "What is {park} near the {building}?", answers: &["car", "truck", "bus"] },
    FrameSpec { name: "parked-on", template: "What is {park} on the {road}?", answers: &["motorcycle", "van", "scooter"] },
    FrameSpec { name: "person-sit", template: "Where is {person} {sit}?", answers: &["bench", "couch", "chair"] },
    FrameSpec { name: "animal-sleep", template: "Where is the {animal} {sleep}?", answers: &["bed", "floor", "couch"] },
    FrameSpec { name: "vehicle-color", template: "What color is the {vehicle}?", answers: &["red", "white", "blue"] },
    FrameSpec { name: "animal-color", template: "What color is the {animal}?", answers: &["brown", "black", "white"] },
    FrameSpec { name: "furniture-color", template: "What color is the {furniture}?", answers: &["gray", "brown", "green"] },
    FrameSpec { name: "who-drive", template: "Who is {drive} the {vehicle}?", answers: &["man", "woman", "driver"] },
    FrameSpec { name: "who-throw", template: "Who is {throw} the {toy}?", answers: &["boy", "girl", "player"] },
    FrameSpec { name: "person-watch", template: "What is {person} {watch}{loc}?", answers: &["tv", "game", "movie"] },
    FrameSpec { name: "on-surface", template: "What is on the {surface}?", answers: &["plate", "laptop", "cup"] },
    FrameSpec { name: "in-room", template: "What is in the {room}?", answers: &["sink", "bed", "lamp"] },
    FrameSpec { name: "person-cut", template: "What is {person} {cut}{loc}?", answers: &["cake", "bread", "pizza"] },
    FrameSpec { name: "animal-chase", template: "What is the {animal} {chase}?", answers: &["ball", "bird", "cat"] },
    FrameSpec { name: "count-animals", template: "How many {animals} are{picloc}?", answers: &["2", "3", "4"] },
    FrameSpec { name: "count-people", template: "How many {people} are{picloc}?", answers: &["1", "2", "5"] },
    FrameSpec { name: "count-vehicles", template: "How many {vehicles} are {park}{roadloc}?", answers: &["3", "4", "6"] },
    FrameSpec { name: "yn-animal-color", template: "Is the {animal} {color}?", answers: &["yes", "no"] },
    FrameSpec { name: "yn-person-express", template: "Is {person} {express}?", answers: &["yes", "no"] },
    FrameSpec { name: "yn-any-animals", template: "Are there any {animals} in the {picture}?", answers: &["yes", "no"] },
];

const POOL_WEIGHTS: [f64; 3] = [0.8, 0.15, 0.05];
const YES_NO_WEIGHTS: [f64; 2] = [0.65, 0.35];
/// Copies of the drawn answer among the ten; the rest come from the pool.
const MAJORITY_COPIES: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub embedding_dim: usize,
    pub feature_dim: usize,
    /// Length of each multiple-choice list.
    pub choices: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            train: 500,
            val: 100,
            embedding_dim: 32,
            feature_dim: 16,
            choices: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameInfo {
    pub name: String,
    pub answers: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub corpus: Corpus,
    pub ontology: Vec<(String, String)>,
    pub lexicon: Vec<(String, Pos, String)>,
    pub embeddings: EmbeddingTable<f64>,
    pub features: FeatureTable<f64>,
    pub frames: Vec<FrameInfo>,
    /// qid → index into `frames`.
    pub frame_of: BTreeMap<String, usize>,
}

/// Where [`SynthData::write_dir`] put each file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPaths {
    pub corpus: PathBuf,
    pub ontology: PathBuf,
    pub lexicon: PathBuf,
    pub embeddings: PathBuf,
    pub features: PathBuf,
    pub frames: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct FramesFile {
    frames: Vec<FrameInfo>,
    frame_of: BTreeMap<String, usize>,
}

pub fn frame_count() -> usize {
    FRAMES.len()
}

fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("closed slot");
        out.push_str(slot(&rest[open + 1..close]).choose(rng).expect("non-empty slot"));
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

fn weighted<'a>(answers: &[&'a str], rng: &mut ChaCha8Rng) -> &'a str {
    let weights: &[f64] = if answers.len() == 2 { &YES_NO_WEIGHTS } else { &POOL_WEIGHTS };
    let mut u: f64 = rng.gen();
    for (a, w) in answers.iter().zip(weights) {
        if u < *w {
            return a;
        }
        u -= w;
    }
    answers[answers.len() - 1]
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, norm: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x * norm / n).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Builds the dataset; the same config always yields the same data.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    if config.embedding_dim == 0 || config.feature_dim == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let ontology: Vec<(String, String)> = ONTOLOGY.iter().map(|(c, p)| (c.to_string(), p.to_string())).collect();
    let mut lexicon = Vec::new();
    for (pos, ty, words) in LEXICON {
        for w in *words {
            lexicon.push((w.to_string(), *pos, ty.to_string()));
        }
    }
    lexicon.sort_by(|a, b| a.0.cmp(&b.0));

    let frames: Vec<FrameInfo> = FRAMES
        .iter()
        .map(|f| FrameInfo {
            name: f.name.to_string(),
            answers: f.answers.iter().map(|a| a.to_string()).collect(),
        })
        .collect();
    let all_answers: BTreeSet<&str> = FRAMES.iter().flat_map(|f| f.answers.iter().copied()).collect();
    let all_answers: Vec<&str> = all_answers.into_iter().collect();

    let total = config.train + config.val;
    let mut instances = Vec::with_capacity(total);
    let mut frame_of = BTreeMap::new();
    let mut majorities = Vec::with_capacity(total);
    for i in 0..total {
        let fi = i % FRAMES.len();
        let frame = &FRAMES[fi];
        let question = fill(frame.template, &mut rng);
        let truth = weighted(frame.answers, &mut rng);
        let mut answers: Vec<String> = vec![truth.to_string(); MAJORITY_COPIES];
        while answers.len() < ANSWERS_PER_QUESTION {
            answers.push(frame.answers.choose(&mut rng).expect("pool").to_string());
        }
        answers.shuffle(&mut rng);

        let mut choices: Vec<String> = vec![truth.to_string()];
        for a in frame.answers.iter().chain(all_answers.choose_multiple(&mut rng, all_answers.len())) {
            if choices.len() >= config.choices.max(2) {
                break;
            }
            if !choices.iter().any(|c| c == a) {
                choices.push(a.to_string());
            }
        }
        choices.shuffle(&mut rng);

        let qid = format!("s{i:05}");
        frame_of.insert(qid.clone(), fi);
        majorities.push(truth);
        instances.push(QaInstance {
            qid,
            image_id: format!("img{i:05}"),
            question,
            answers,
            choices: Some(choices),
            split: if i < config.train { Split::Train } else { Split::Val },
        });
    }

    let corpus = Corpus::new(instances)?;

    let mut centers: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (ty, _) in ONTOLOGY {
        centers.insert(ty, gaussian(&mut rng, config.embedding_dim, 1.0));
    }
    for extra in ["NUMBER", "YESNO"] {
        centers.insert(extra, gaussian(&mut rng, config.embedding_dim, 1.0));
    }
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    for (word, _, ty) in &lexicon {
        let v = if ty == "FUNCTION" {
            gaussian(&mut rng, config.embedding_dim, 0.15)
        } else {
            add(&centers[ty.as_str()], &gaussian(&mut rng, config.embedding_dim, 0.35))
        };
        rows.push((word.clone(), v));
    }
    for a in &all_answers {
        if lexicon.iter().any(|(w, _, _)| w == a) {
            continue;
        }
        let class = if a.chars().all(|c| c.is_ascii_digit()) { "NUMBER" } else { "YESNO" };
        rows.push((a.to_string(), add(&centers[class], &gaussian(&mut rng, config.embedding_dim, 0.35))));
    }
    let embeddings = EmbeddingTable::from_rows(rows)?;

    let answer_codes: BTreeMap<&str, Vec<f64>> = all_answers
        .iter()
        .map(|a| (*a, gaussian(&mut rng, config.feature_dim, 1.0)))
        .collect();
    let mut feature_rows = Vec::with_capacity(total);
    for (inst, truth) in corpus.instances().iter().zip(&majorities) {
        let noise = gaussian(&mut rng, config.feature_dim, 0.5);
        feature_rows.push((inst.image_id.clone(), add(&answer_codes[truth], &noise)));
    }
    let features = FeatureTable::from_rows(feature_rows)?;

    Ok(SynthData {
        corpus,
        ontology,
        lexicon,
        embeddings,
        features,
        frames,
        frame_of,
    })
}

/// `n` yes/no questions drawn from the yes/no frames.
pub fn yes_no_questions(seed: u64, n: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let yn: Vec<&FrameSpec> = FRAMES.iter().filter(|f| f.answers == ["yes", "no"]).collect();
    (0..n)
        .map(|i| fill(yn[i % yn.len()].template, &mut rng))
        .collect()
}

impl SynthData {
    pub fn parser(&self) -> Result<SemanticParser> {
        let onto = Ontology::from_links(self.ontology.iter().map(|(c, p)| (c.as_str(), p.as_str())))?;
        let lex = Lexicon::from_entries(self.lexicon.iter().map(|(w, p, t)| (w.as_str(), *p, t.as_str())), &onto)?;
        Ok(SemanticParser::new(lex, onto))
    }

    pub fn frame(&self, qid: &str) -> Option<&FrameInfo> {
        self.frame_of.get(qid).map(|&i| &self.frames[i])
    }

    /// Expected accuracy of guessing uniformly among each question's frame
    /// answers, averaged over `split`.
    pub fn uniform_baseline(&self, split: Split) -> f64 {
        let scores: Vec<f64> = self
            .corpus
            .split(split)
            .map(|inst| {
                let pool = &self.frame(&inst.qid).expect("every qid has a frame").answers;
                pool.iter().map(|a| vqa_accuracy(a, &inst.answers)).sum::<f64>() / pool.len() as f64
            })
            .collect();
        scores.iter().sum::<f64>() / scores.len().max(1) as f64
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<SynthPaths> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths {
            corpus: dir.join("corpus.jsonl"),
            ontology: dir.join("ontology.tsv"),
            lexicon: dir.join("lexicon.tsv"),
            embeddings: dir.join("embeddings.txt"),
            features: dir.join("features.txt"),
            frames: dir.join("frames.json"),
        };
        self.corpus.save(&paths.corpus)?;
        self.embeddings.save(&paths.embeddings)?;
        self.features.save(&paths.features)?;
        let write = |path: &Path, text: String| fs::write(path, text).map_err(|e| Error::io(path, e));
        let mut onto = String::from("# child\tparent\n");
        for (c, p) in &self.ontology {
            onto.push_str(&format!("{c}\t{p}\n"));
        }
        write(&paths.ontology, onto)?;
        let mut lex = String::from("# word\tpos\ttype\n");
        for (w, p, t) in &self.lexicon {
            lex.push_str(&format!("{w}\t{p}\t{t}\n"));
        }
        write(&paths.lexicon, lex)?;
        let frames = FramesFile {
            frames: self.frames.clone(),
            frame_of: self.frame_of.clone(),
        };
        let json = serde_json::to_string_pretty(&frames).expect("frames serialize");
        write(&paths.frames, json + "\n")?;
        Ok(paths)
    }
}
