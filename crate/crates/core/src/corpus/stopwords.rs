use std::collections::BTreeSet;
use std::path::Path;

use crate::Result;

/// English stopwords (the Snowball list), in the apostrophe-free form the
/// tokenizer produces. Contractions whose stripped form collides with a
/// content word ("we'll" -> "well", "i'll" -> "ill", "she'd" -> "shed", ...)
/// are left out.
const ENGLISH: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
    "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
    "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
    "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
    "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "would",
    "should", "could", "ought", "im", "youre", "hes", "shes", "theyre", "ive", "youve",
    "weve", "theyve", "id", "youd", "hed", "theyd", "youll", "theyll", "isnt", "arent",
    "wasnt", "werent", "hasnt", "havent", "hadnt", "doesnt", "dont", "didnt", "wont",
    "wouldnt", "shant", "shouldnt", "cant", "cannot", "couldnt", "mustnt", "lets", "thats",
    "whos", "whats", "heres", "theres", "whens", "wheres", "whys", "hows", "a", "an", "the",
    "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by", "for",
    "with", "about", "against", "between", "into", "through", "during", "before", "after",
    "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over", "under",
    "again", "further", "then", "once", "here", "there", "when", "where", "why", "how", "all",
    "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not",
    "only", "own", "same", "so", "than", "too", "very",
];

pub fn english() -> BTreeSet<String> {
    ENGLISH.iter().map(|w| (*w).to_owned()).collect()
}

/// Reads a stopword file: one word per line, `#` starts a comment. Words are
/// lowercased and stripped of apostrophes to match tokenizer output.
pub fn load(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.to_lowercase()
                .chars()
                .filter(|c| !super::is_apostrophe(*c))
                .collect()
        })
        .collect())
}
