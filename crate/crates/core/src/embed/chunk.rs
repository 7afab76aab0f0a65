use super::EmbedError;

pub const DEFAULT_WINDOW: usize = 128;
pub const DEFAULT_STRIDE: usize = 64;

/// Splits `text` on whitespace into overlapping windows of `window` tokens
/// starting every `stride` tokens, rejoined with single spaces.
///
/// A text of at most `window` tokens (including an empty one) yields exactly
/// one chunk. Longer texts get a window at every multiple of `stride` below
/// the token count, so the tail is covered by shrinking partial windows.
pub fn chunk_text(text: &str, window: usize, stride: usize) -> Result<Vec<String>, EmbedError> {
    if window == 0 || stride == 0 || stride > window {
        return Err(EmbedError::BadParam(format!(
            "need 1 <= stride <= window, got stride {stride}, window {window}"
        )));
    }
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= window {
        return Ok(vec![tokens.join(" ")]);
    }
    Ok((0..tokens.len())
        .step_by(stride)
        .map(|start| tokens[start..(start + window).min(tokens.len())].join(" "))
        .collect())
}
