mod common;

use common::{golden_corpus, oracles};
use kgformer_core::linker::{fmm_link, TermDictionary, DEFAULT_MIN_LEN};
use kgformer_core::{seeded_rng, EntityId};
use rand::seq::SliceRandom;
use rand::Rng;

fn spans(text: &str, dict: &TermDictionary, min_len: usize) -> Vec<(usize, usize, EntityId)> {
    fmm_link(text, dict, min_len).into_iter().map(|s| (s.start, s.end, s.entity)).collect()
}

#[test]
fn golden_corpus_matches_brute_force() {
    let (dict, docs) = golden_corpus();
    assert_eq!(dict.len(), 30);
    assert_eq!(docs.len(), 10);
    let mut total = 0;
    for doc in &docs {
        let got = spans(doc, &dict, DEFAULT_MIN_LEN);
        assert_eq!(got, oracles::link(doc, &dict, DEFAULT_MIN_LEN), "{doc}");
        total += got.len();
    }
    assert!(total >= 30, "{total}");
}

#[test]
fn golden_corpus_first_document() {
    let (dict, docs) = golden_corpus();
    let text = docs[0];
    let got = fmm_link(text, &dict, DEFAULT_MIN_LEN);
    let surfaces: Vec<&str> = got.iter().map(|s| s.surface.as_str()).collect();
    assert_eq!(surfaces, ["Bacterial pneumonia", "Streptococcus pneumoniae"]);
    let chars: Vec<char> = text.chars().collect();
    for s in &got {
        assert_eq!(chars[s.start..s.end].iter().collect::<String>(), s.surface);
    }
}

#[test]
fn random_documents_match_brute_force() {
    let words = ["lung", "fever", "flu", "heart", "failure", "type", "2", "of", "the", "A", "Heart", "x-ray"];
    let mut rng = seeded_rng(9);
    let mut dict = TermDictionary::new();
    for i in 0..25 {
        let n = rng.gen_range(1..=3);
        let term: Vec<&str> = (0..n).map(|_| *words.choose(&mut rng).unwrap()).collect();
        dict.insert(&term.join(" "), EntityId(i)).unwrap();
    }
    let seps = [" ", "  ", "\n", " \t", ", "];
    for _ in 0..100 {
        let mut doc = String::new();
        for _ in 0..rng.gen_range(0..40) {
            doc.push_str(words.choose(&mut rng).unwrap());
            doc.push_str(seps.choose(&mut rng).unwrap());
        }
        for min_len in [1, DEFAULT_MIN_LEN, 9] {
            assert_eq!(spans(&doc, &dict, min_len), oracles::link(&doc, &dict, min_len), "{doc:?}");
        }
    }
}
