use crate::cpg::CpgNode;

/// Textual tokens of a node: its declared datatype (when present) followed by
/// identifier-like substrings of its code, lowercased, length >= 2.
pub fn textual_tokens(node: &CpgNode) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(ty) = &node.type_full_name {
        out.extend(split_identifiers(ty));
    }
    out.extend(split_identifiers(&node.code));
    out
}

/// Split on non-alphanumeric characters (underscore counts as part of a
/// token), keep identifier-like pieces, lowercase.
fn split_identifiers(s: &str) -> Vec<String> {
    s.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|t| t.len() >= 2)
        .filter(|t| t.chars().next().map_or(false, |c| c.is_ascii_alphabetic() || c == '_'))
        .map(|t| t.to_ascii_lowercase())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpg::NodeKind;

    fn node(code: &str, ty: Option<&str>) -> CpgNode {
        CpgNode {
            id: 0,
            kind: NodeKind::Local,
            code: code.into(),
            line: Some(1),
            type_full_name: ty.map(str::to_string),
            name: None,
            enclosing_method: None,
        }
    }

    #[test]
    fn datatype_then_code_tokens() {
        let n = node("EVP_PKEY *k", Some("EVP_PKEY"));
        assert_eq!(textual_tokens(&n), vec!["evp_pkey", "evp_pkey"]);
    }

    #[test]
    fn call_code_splits_into_identifiers() {
        let n = node("SHA256(input, length, hash)", None);
        assert_eq!(textual_tokens(&n), vec!["sha256", "input", "length", "hash"]);
    }

    #[test]
    fn empty_node_has_no_tokens() {
        let n = node("", None);
        assert!(textual_tokens(&n).is_empty());
    }

    #[test]
    fn numbers_and_single_chars_dropped() {
        let n = node("x = 42 + yy", None);
        assert_eq!(textual_tokens(&n), vec!["yy"]);
    }
}
