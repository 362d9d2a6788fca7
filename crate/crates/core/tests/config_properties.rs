//! Model loading is total: any input yields a model or a keyed error.

use blowuplab::gallery::GALLERY;
use blowuplab::model::SdeModel;
use proptest::prelude::*;

fn mutated_gallery_text() -> impl Strategy<Value = String> {
    (0usize..GALLERY.len(), any::<prop::sample::Index>(), 0usize..40, "[ -~\n]{0,12}").prop_map(|(g, at, len, insert)| {
        let text = GALLERY[g].toml;
        let start = at.index(text.len());
        let end = (start + len).min(text.len());
        let (start, end) = (floor_char(text, start), floor_char(text, end));
        format!("{}{}{}", &text[..start], insert, &text[end..])
    })
}

fn floor_char(s: &str, mut i: usize) -> usize {
    while !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 2000, ..ProptestConfig::default() })]

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        if let Err(e) = SdeModel::from_toml_str(&text) {
            prop_assert!(!e.key.is_empty());
        }
    }

    #[test]
    fn mutated_models_never_panic(text in mutated_gallery_text()) {
        match SdeModel::from_toml_str(&text) {
            Ok(m) => prop_assert!(m.validate().is_ok()),
            Err(e) => prop_assert!(!e.key.is_empty() && !e.message.is_empty()),
        }
    }
}

#[test]
fn unknown_keys_are_named() {
    let err = SdeModel::from_toml_str("name = \"m\"\ndim = 1\ndrift = [\"x\"]\ndiffusion = [\"1\"]\nspeed = 3").unwrap_err();
    assert_eq!(err.key, "speed");
}
