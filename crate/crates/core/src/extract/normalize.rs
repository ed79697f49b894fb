/// Tab width used when expanding tabs.
pub const TAB_WIDTH: usize = 4;

/// Style normalization applied before parsing.
///
/// Tabs become four spaces, trailing whitespace is dropped and CRLF becomes
/// LF. The number of lines never changes, so diff line numbers still point at
/// the same lines afterwards.
pub fn normalize_source(text: &str) -> String {
    let tab = " ".repeat(TAB_WIDTH);
    text.split('\n')
        .map(|line| {
            let line = line.strip_suffix('\r').unwrap_or(line);
            line.replace('\t', &tab).trim_end().to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Lossy UTF-8 decode followed by [`normalize_source`].
pub fn normalize_bytes(bytes: &[u8]) -> String {
    normalize_source(&String::from_utf8_lossy(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn expands_tab_and_crlf() {
        assert_eq!(normalize_source("a\t= 1\r\n"), "a    = 1\n");
    }

    #[test]
    fn mixed_line_endings_keep_line_count() {
        let text = "a\r\nb\nc  \r\nd\ne";
        let out = normalize_source(text);
        assert_eq!(out, "a\nb\nc\nd\ne");
        assert_eq!(out.lines().count(), 5);
    }

    #[test]
    fn invalid_utf8_is_decoded_lossily() {
        let out = normalize_bytes(b"x = '\xff'\n");
        assert_eq!(out.lines().count(), 1);
        assert!(out.contains('\u{fffd}'));
    }

    proptest! {
        #[test]
        fn idempotent_and_line_preserving(text in "[a-z \t\r\n#=]{0,80}") {
            let once = normalize_source(&text);
            prop_assert_eq!(normalize_source(&once), once.clone());
            prop_assert_eq!(once.split('\n').count(), text.split('\n').count());
        }
    }
}
