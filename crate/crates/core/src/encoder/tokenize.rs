use crate::dataset::CodeBlock;

/// Separator placed between the TODO text, the centrepiece and the context.
pub const SEP: &str = "[SEP]";
/// Stand-in for tokens below the vocabulary frequency cutoff.
pub const UNK: &str = "[UNK]";

/// Splits on anything that is not alphanumeric (so `_` splits too), then on
/// camelCase humps, and lowercases.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for run in text.split(|c: char| !c.is_alphanumeric()).filter(|r| !r.is_empty()) {
        let chars: Vec<char> = run.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let prev = chars[i - 1];
            let cur = chars[i];
            let hump = cur.is_uppercase() && (prev.is_lowercase() || prev.is_ascii_digit());
            // HTTPServer: break before the `S` that starts a lowercase word
            let acronym_end = cur.is_uppercase()
                && prev.is_uppercase()
                && chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if hump || acronym_end {
                out.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        out.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    out
}

/// `tokens(T) [SEP] tokens(CEN) [SEP] tokens(CON)`, context lines in order.
pub fn serialize_block(block: &CodeBlock) -> Vec<String> {
    let mut tokens = tokenize(&block.todo_text);
    tokens.push(SEP.to_string());
    tokens.extend(tokenize(&block.centrepiece));
    tokens.push(SEP.to_string());
    for line in &block.context {
        tokens.extend(tokenize(line));
    }
    tokens
}
