//! English Porter stemming (the Snowball "english" revision of the Porter
//! algorithm).
//!
//! Input is expected to be lowercase. Words containing anything other than
//! ASCII `a..=z` are returned unchanged.

use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

/// Porter-stems a single lowercase token.
pub fn stem_token(token: &str) -> String {
    if !token.bytes().all(|b| b.is_ascii_lowercase()) {
        return token.to_owned();
    }
    stemmer().stem(token).into_owned()
}
