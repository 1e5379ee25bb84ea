//! Shared synthetic-corpus generator for the CLI test suites.
//!
//! Prompts are built from a pool of pseudo-words large enough that word
//! vocabularies dwarf the character alphabet. Each attack category plants a
//! small pool of distinctive signal tokens (three distinct ones per prompt)
//! into otherwise benign-looking text; the "suffix" category additionally
//! appends a run of spaced exclamation marks.

use std::path::{Path, PathBuf};

use rand_core::{RngCore, SeedableRng};

use moje_core::corpus::{Dataset, Label, LabeledExample};

pub type Rng = rand_chacha::ChaCha20Rng;

const SYLLABLES: [&str; 16] = [
    "ba", "re", "li", "no", "ta", "mi", "so", "ku", "ve", "da", "po", "zu", "fe", "ga", "hi",
    "wo",
];

/// 256 distinct pseudo-words.
pub fn word_pool() -> Vec<String> {
    let mut pool = Vec::with_capacity(256);
    for a in SYLLABLES {
        for b in SYLLABLES {
            pool.push(format!("{a}{b}"));
        }
    }
    pool
}

pub fn pick<'a, T>(rng: &mut Rng, pool: &'a [T]) -> &'a T {
    &pool[(rng.next_u64() % pool.len() as u64) as usize]
}

fn range(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() as usize) % (hi - lo + 1)
}

pub fn benign_prompt(rng: &mut Rng, pool: &[String]) -> String {
    let mut words: Vec<String> = (0..range(rng, 6, 16))
        .map(|_| pick(rng, pool).clone())
        .collect();
    match rng.next_u64() % 4 {
        0 => words.push("?".into()),
        1 => words.push(".".into()),
        2 => {
            let pos = range(rng, 0, words.len());
            words.insert(pos, ",".into());
        }
        _ => {}
    }
    words.join(" ")
}

pub fn signals_for(category: &str) -> Vec<String> {
    (0..8).map(|i| format!("x{category}{i}")).collect()
}

pub fn attack_prompt(rng: &mut Rng, pool: &[String], category: &str) -> String {
    let signals = signals_for(category);
    let mut words: Vec<String> = (0..range(rng, 5, 12))
        .map(|_| pick(rng, pool).clone())
        .collect();
    // Three distinct signals per prompt: no single feature suffices.
    let mut order: Vec<usize> = (0..signals.len()).collect();
    for i in 0..3 {
        let j = i + (rng.next_u64() as usize) % (order.len() - i);
        order.swap(i, j);
        let pos = range(rng, 0, words.len());
        words.insert(pos, signals[order[i]].clone());
    }
    let mut text = words.join(" ");
    if category == "suffix" {
        text.push_str(&" !".repeat(20));
    }
    text
}

pub fn synth_corpus(categories: &[&str], per_cat: usize, benign: usize, seed: u64) -> Dataset {
    let pool = word_pool();
    let mut rng = Rng::seed_from_u64(seed);
    let mut examples = Vec::new();
    for _ in 0..benign {
        examples
            .push(LabeledExample::new(benign_prompt(&mut rng, &pool), Label::Benign, None).unwrap());
    }
    for cat in categories {
        for _ in 0..per_cat {
            examples.push(
                LabeledExample::new(
                    attack_prompt(&mut rng, &pool, cat),
                    Label::Jailbreak,
                    Some((*cat).to_owned()),
                )
                .unwrap(),
            );
        }
    }
    Dataset::new("synth", examples)
}

/// A prompt of exactly `n` whitespace-separated tokens.
pub fn long_prompt(rng: &mut Rng, n: usize) -> String {
    let pool = word_pool();
    (0..n)
        .map(|_| pick(rng, &pool).clone())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_jsonl(ds: &Dataset, path: &Path) {
    ds.write_jsonl(path).unwrap();
}

/// A small but two-family grid that trains in seconds.
pub fn small_grid_toml() -> &'static str {
    "lr_l2 = [0.001, 0.01]\n\n[gbt]\nnum_trees = [30]\nmax_depth = [3]\nlearning_rate = [0.3]\nmin_child_weight = 1.0\n"
}

pub fn write_small_grid(dir: &Path) -> PathBuf {
    let path = dir.join("grid.toml");
    std::fs::write(&path, small_grid_toml()).unwrap();
    path
}
