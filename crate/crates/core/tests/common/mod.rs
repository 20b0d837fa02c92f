#![allow(dead_code)]

use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use mer_core::corpus::write_corpus;
use mer_core::embedding::{SentenceEmbedding, SentenceStore, TokenEmbeddings, TokenStore, TokenVector};
use mer_core::{Corpus, EntitySpan, EntityType, Sentence, Split};

const FILLER: &[&str] = &[
    "the", "patient", "was", "seen", "on", "admission", "with", "no", "acute", "distress", "and", "reports",
    "history", "of", "noted", "since", "prior", "visit", "today", "follow-up", "stable", ",", ".", "per",
    "family", "ER", "µg", "°C", "well",
];

fn phrases(t: EntityType) -> &'static [&'static str] {
    use EntityType::*;
    match t {
        SystemOrganSite => &["left lung", "liver", "cardiac"],
        AlcoholConsumption => &["drinks socially", "alcohol"],
        Allergies => &["penicillin allergy", "NKDA"],
        Gender => &["female", "man"],
        RaceEthnicity => &["Hispanic", "white"],
        RecDrugUse => &["cocaine", "marijuana use"],
        TobaccoUse => &["smoking", "1 ppd"],
        DxName => &["chest pain", "diabetes mellitus", "Ménière disease"],
        BrandName => &["Lipitor", "Tylenol"],
        GenericName => &["aspirin", "metformin"],
        ProcedureName => &["CABG", "colonoscopy"],
        TestName => &["CBC", "chest x-ray"],
        TreatmentName => &["chemotherapy", "physical therapy"],
        TimeToDxName => &["3 years ago", "in 2010"],
        TimeToMedicationName => &["since March", "for 2 weeks"],
        TimeToProcedureName => &["last year", "in 2015"],
        TimeToTestName => &["yesterday", "on 3/4"],
        TimeToTreatmentName => &["for six months", "last spring"],
    }
}

type Piece<'a> = (Vec<&'a str>, Option<(EntityType, &'a str)>);

/// Builds a sentence from `(filler_words, Option<entity>)` pieces separated by
/// single spaces and records gold offsets in characters.
fn assemble(doc: &str, idx: u64, pieces: &[Piece<'_>]) -> Sentence {
    let mut text = String::new();
    let mut gold = Vec::new();
    let push = |text: &mut String, word: &str| {
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(word);
    };
    for (words, entity) in pieces {
        for w in words {
            push(&mut text, w);
        }
        if let Some((etype, phrase)) = entity {
            // separator only
            push(&mut text, "");
            let start = text.chars().count();
            text.push_str(phrase);
            gold.push(EntitySpan::new(*phrase, *etype, start, start + phrase.chars().count()));
        }
    }
    Sentence {
        doc_id: doc.to_string(),
        sent_index: idx,
        text,
        gold,
    }
}

fn filler<'a>(rng: &mut StdRng, min: usize, max: usize) -> Vec<&'a str> {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| FILLER[rng.gen_range(0..FILLER.len())]).collect()
}

/// Deterministic corpus of `n` sentences in documents of up to five
/// sentences. Every entity type appears at least once when `n >= 18`.
pub fn synthetic_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(n);
    let mut type_cursor = 0usize;
    for i in 0..n {
        let doc = format!("doc{:04}", i / 5);
        let n_entities = if i < 18 { 1 } else { rng.gen_range(0..=4) };
        let mut pieces = Vec::new();
        for _ in 0..n_entities {
            let etype = EntityType::ALL[type_cursor % 18];
            type_cursor += 1;
            let options = phrases(etype);
            let phrase = options[rng.gen_range(0..options.len())];
            pieces.push((filler(&mut rng, 1, 4), Some((etype, phrase))));
        }
        pieces.push((filler(&mut rng, 1, 5), None));
        sentences.push(assemble(&doc, (i % 5) as u64, &pieces));
    }
    Corpus::from_sentences(Split::Test, sentences).expect("synthetic corpus is valid")
}

/// Test corpus with exactly `n_entities` gold entities, two per sentence.
pub fn entity_fixture(n_entities: usize) -> Corpus {
    let mut sentences = Vec::new();
    let mut made = 0;
    let mut i = 0;
    while made < n_entities {
        let take = (n_entities - made).min(2);
        let mut pieces = Vec::new();
        for j in 0..take {
            let etype = EntityType::ALL[(made + j) % 18];
            pieces.push((vec!["noted"], Some((etype, phrases(etype)[0]))));
        }
        pieces.push((vec!["today", "."], None));
        sentences.push(assemble(&format!("fx{:03}", i / 4), (i % 4) as u64, &pieces));
        made += take;
        i += 1;
    }
    Corpus::from_sentences(Split::Test, sentences).expect("fixture is valid")
}

pub fn write_corpus_file(corpus: &Corpus, path: &Path) {
    let file = std::fs::File::create(path).unwrap();
    write_corpus(corpus, std::io::BufWriter::new(file)).unwrap();
}

/// Pseudo-embedding of a word: a fixed function of its bytes.
pub fn word_vector(word: &str, dim: usize) -> Vec<f32> {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in word.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = StdRng::seed_from_u64(h);
    (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

/// Whitespace words of `text` with character offsets.
pub fn words(text: &str) -> Vec<(u32, u32, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut byte_start = 0;
    let mut pos = 0u32;
    for (b, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, pos, &text[byte_start..b]));
            }
        } else if start.is_none() {
            start = Some(pos);
            byte_start = b;
        }
        pos += 1;
    }
    if let Some(s) = start {
        out.push((s, pos, &text[byte_start..]));
    }
    out
}

pub fn token_store(corpus: &Corpus, dim: usize) -> TokenStore {
    let records = corpus
        .sentences()
        .iter()
        .map(|s| TokenEmbeddings {
            key: s.key(),
            tokens: words(&s.text)
                .into_iter()
                .map(|(a, b, w)| TokenVector::new(a, b, word_vector(w, dim)))
                .collect(),
        })
        .collect();
    TokenStore::new(dim, records).unwrap()
}

/// Sentence vectors as the mean of word vectors.
pub fn sentence_store(corpus: &Corpus, dim: usize) -> SentenceStore {
    let records = corpus
        .sentences()
        .iter()
        .map(|s| {
            let ws = words(&s.text);
            let mut mean = vec![0f32; dim];
            for (_, _, w) in &ws {
                for (m, v) in mean.iter_mut().zip(word_vector(w, dim)) {
                    *m += v / ws.len() as f32;
                }
            }
            SentenceEmbedding::new(s.key(), mean)
        })
        .collect();
    SentenceStore::new(dim, records).unwrap()
}

pub fn with_split(corpus: &Corpus, split: Split) -> Corpus {
    Corpus::from_sentences(split, corpus.sentences().to_vec()).unwrap()
}
