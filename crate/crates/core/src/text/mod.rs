//! Tokenization and stemming.

mod porter;

pub use porter::stem;

/// Lowercases `raw`, splits on every non-alphanumeric character and drops
/// empty pieces. With `use_stemming` each token goes through [`stem`].
pub fn normalize(raw: &str, use_stemming: bool) -> Vec<String> {
    raw.split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .map(|piece| {
            let lower = piece.to_lowercase();
            if use_stemming {
                stem(&lower)
            } else {
                lower
            }
        })
        .collect()
}
