use std::sync::LazyLock;

use regex::Regex;

static SLOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<([A-Za-z][A-Za-z0-9 _-]*)>").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unbound template slot `{0}`")]
    UnboundSlot(String),
}

/// Names of the `<slot>` markers in `template`, in order of appearance.
pub fn slot_names(template: &str) -> Vec<&str> {
    SLOT.captures_iter(template)
        .map(|c| c.get(1).unwrap().as_str())
        .collect()
}

/// Replaces every `<name>` slot with its binding. Bindings are inserted
/// verbatim and are not themselves scanned for slots.
pub fn render_template(template: &str, bindings: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for caps in SLOT.captures_iter(template) {
        let whole = caps.get(0).unwrap();
        let name = caps.get(1).unwrap().as_str();
        let value = bindings
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| TemplateError::UnboundSlot(name.to_string()))?;
        out.push_str(&template[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_slot() {
        assert_eq!(render_template("Hello <name>", &[("name", "Ada")]).unwrap(), "Hello Ada");
    }

    #[test]
    fn unbound_slot_is_named() {
        assert_eq!(
            render_template("context: <patient vignette>", &[]).unwrap_err(),
            TemplateError::UnboundSlot("patient vignette".into())
        );
    }

    #[test]
    fn bindings_are_not_rescanned() {
        let out = render_template("<a>", &[("a", "<b>")]).unwrap();
        assert_eq!(out, "<b>");
    }

    proptest! {
        #[test]
        fn idempotent_without_markers(text in "[a-z .,]{0,40}", value in "[a-z ]{0,20}") {
            let template = format!("{text}<slot>{text}");
            let once = render_template(&template, &[("slot", &value)]).unwrap();
            prop_assert!(slot_names(&once).is_empty());
            let twice = render_template(&once, &[]).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
