use url::Url;

fn parse_lenient(raw: &str) -> Option<Url> {
    let raw = raw.trim();
    if raw.is_empty() || raw.contains(char::is_whitespace) {
        return None;
    }
    let parsed = if raw.contains("://") {
        Url::parse(raw).ok()?
    } else {
        Url::parse(&format!("http://{raw}")).ok()?
    };
    match parsed.host_str() {
        Some(h) if !h.is_empty() => Some(parsed),
        _ => None,
    }
}

/// Lowercased host with scheme, port, path, query and a leading `www.`
/// removed. Returns an empty string when the input is not a URL.
pub fn extract_domain(raw: &str) -> String {
    let Some(url) = parse_lenient(raw) else {
        return String::new();
    };
    let host = url.host_str().unwrap_or_default().to_lowercase();
    host.strip_prefix("www.").map(str::to_string).unwrap_or(host)
}

/// Path component as plain text (percent-decoding left to the tokenizer's
/// non-alphanumeric split). Unparseable input yields the raw string.
pub fn url_path_text(raw: &str) -> String {
    match parse_lenient(raw) {
        Some(url) => url.path().to_string(),
        None => raw.to_string(),
    }
}

/// Host and path joined by a space, the URL text used for matching and
/// embeddings.
pub fn url_text(raw: &str) -> String {
    match parse_lenient(raw) {
        Some(url) => format!("{} {}", extract_domain(raw), url.path()),
        None => raw.to_string(),
    }
}
