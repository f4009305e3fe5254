use serde::{Deserialize, Serialize};

use crate::denoiser::ConditioningVector;
use crate::error::{Error, Result};
use crate::rng::fnv1a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Removal,
    Replacement,
    Attribute,
}

/// A free-text edit request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    text: String,
    kind: TaskKind,
}

impl Instruction {
    /// Infers the task from the leading verb: `remove`/`delete`/`erase`,
    /// `replace`/`swap`, or `make`/`turn`/`change`.
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let words = tokens(&text);
        let kind = match words.first().map(String::as_str) {
            None => return Err(Error::Analysis("instruction is empty".into())),
            Some("remove" | "delete" | "erase") => TaskKind::Removal,
            Some("replace" | "swap") => TaskKind::Replacement,
            Some("make" | "turn" | "change" | "paint" | "color" | "colour") => TaskKind::Attribute,
            Some(verb) => {
                return Err(Error::Analysis(format!("cannot infer an edit task from verb `{verb}`")));
            }
        };
        Ok(Instruction { text, kind })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }
}

/// Source and target prompts plus the names of the objects to edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub source: String,
    pub target: String,
    pub objects: Vec<String>,
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '-')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn is_article(word: &str) -> bool {
    matches!(word, "a" | "an" | "the")
}

fn indefinite_for(word: &str) -> &'static str {
    match word.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// Splits "the red car and a dog" into ["red car", "dog"].
fn object_list(words: &[String]) -> Vec<String> {
    words
        .split(|w| w == "and" || w == ",")
        .map(|phrase| {
            phrase
                .iter()
                .filter(|w| !is_article(w))
                .cloned()
                .collect::<Vec<_>>()
                .join(" ")
        })
        .filter(|p| !p.is_empty())
        .collect()
}

/// Finds `object` (possibly multi-word) in the tokenized prompt, returning
/// the token range including a leading article.
fn locate(prompt: &[String], object: &str) -> Option<(usize, usize)> {
    let needle: Vec<&str> = object.split(' ').collect();
    let n = needle.len();
    (0..prompt.len().saturating_sub(n - 1)).find_map(|i| {
        let hit = prompt[i..i + n].iter().zip(&needle).all(|(a, b)| a == b);
        hit.then(|| {
            let start = if i > 0 && is_article(&prompt[i - 1]) { i - 1 } else { i };
            (start, i + n)
        })
    })
}

/// Re-spells the tokens as a sentence, fixing `a`/`an` before each noun.
fn render(words: &[String]) -> String {
    let mut out: Vec<String> = Vec::with_capacity(words.len());
    for (i, w) in words.iter().enumerate() {
        if (w == "a" || w == "an") && i + 1 < words.len() {
            out.push(indefinite_for(&words[i + 1]).to_string());
        } else {
            out.push(w.clone());
        }
    }
    out.join(" ")
}

fn split_on<'a>(words: &'a [String], sep: &str) -> Option<(&'a [String], &'a [String])> {
    let at = words.iter().position(|w| w == sep)?;
    Some((&words[..at], &words[at + 1..]))
}

/// Deterministic template rewrite of the source prompt.
///
/// * replacement: `replace <objs> with <new>` puts `<new>` where the first
///   object appeared and drops the rest;
/// * removal: `remove <objs>` drops each object phrase;
/// * attribute: `make|turn <obj> <attr>` (or `... into <attr>`) prefixes the
///   attribute to the object.
pub fn template_rewrite(source: &str, instruction: &Instruction) -> Result<PromptPair> {
    let prompt = tokens(source);
    if prompt.is_empty() {
        return Err(Error::Analysis("source prompt is empty".into()));
    }
    let words = tokens(instruction.text());
    let body = &words[1..];

    let (objects, replacement, attribute) = match instruction.kind() {
        TaskKind::Replacement => {
            let (objs, new) =
                split_on(body, "with").ok_or_else(|| Error::Analysis("replacement needs `with <object>`".into()))?;
            let new: Vec<String> = new.to_vec();
            (object_list(objs), Some(new), None)
        }
        TaskKind::Removal => (object_list(body), None, None),
        TaskKind::Attribute => {
            let (obj, attr) = match split_on(body, "into") {
                Some((o, a)) => (o.to_vec(), a.to_vec()),
                None => {
                    // last word is the attribute
                    let (attr, obj) = body
                        .split_last()
                        .ok_or_else(|| Error::Analysis("attribute edit names no object".into()))?;
                    (obj.to_vec(), vec![attr.clone()])
                }
            };
            let attr: Vec<String> = attr.into_iter().filter(|w| !is_article(w)).collect();
            (object_list(&obj), None, Some(attr))
        }
    };
    if objects.is_empty() {
        return Err(Error::Analysis(format!("no object named in `{}`", instruction.text())));
    }

    let mut out = prompt.clone();
    let mut spans = Vec::with_capacity(objects.len());
    for obj in &objects {
        let span = locate(&out, obj)
            .ok_or_else(|| Error::Analysis(format!("object `{obj}` does not appear in `{source}`")))?;
        spans.push(span);
    }
    // rewrite back to front so earlier spans stay valid
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(spans[i].0));
    let first = order.iter().copied().min_by_key(|&i| spans[i].0).unwrap();
    for i in order {
        let (start, end) = spans[i];
        let had_article = is_article(&out[start]);
        let phrase: Vec<String> = match (&replacement, &attribute) {
            (Some(new), _) if i == first => {
                let mut p = Vec::new();
                if had_article && !new.first().is_some_and(|w| is_article(w)) {
                    p.push(out[start].clone());
                }
                p.extend(new.iter().cloned());
                p
            }
            (Some(_), _) => Vec::new(),
            (None, Some(attr)) => {
                let mut p = Vec::new();
                if had_article {
                    p.push(out[start].clone());
                }
                p.extend(attr.iter().cloned());
                p.extend(out[if had_article { start + 1 } else { start }..end].iter().cloned());
                p
            }
            (None, None) => Vec::new(),
        };
        out.splice(start..end, phrase);
    }
    // drop conjunctions left dangling by removed phrases
    let mut cleaned: Vec<String> = Vec::with_capacity(out.len());
    for w in out {
        if w == "and" && cleaned.last().is_none_or(|p| p == "and") {
            continue;
        }
        cleaned.push(w);
    }
    while cleaned.last().is_some_and(|w| w == "and") {
        cleaned.pop();
    }
    Ok(PromptPair {
        source: source.to_string(),
        target: render(&cleaned),
        objects,
    })
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "and", "with", "is", "are",
];

/// Hashed bag-of-tokens embedding: every non-stopword token adds a weight in
/// [1, 2) to the slot `hash % len`. Empty text gives the zero vector.
pub fn embed_prompt(text: &str, len: usize) -> Result<ConditioningVector> {
    if len == 0 {
        return Err(Error::Config("condition length must be at least 1".into()));
    }
    let mut v = vec![0.0; len];
    for tok in tokens(text) {
        if STOPWORDS.contains(&tok.as_str()) {
            continue;
        }
        let h = fnv1a(tok.as_bytes());
        let slot = (h % len as u64) as usize;
        v[slot] += 1.0 + (h >> 40) as f64 / (1u64 << 24) as f64;
    }
    ConditioningVector::new(v)
}
