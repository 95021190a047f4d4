/// Parses a SPICE number: a decimal literal with optional exponent followed by an
/// optional engineering suffix (`f p n u m k meg g t mil`). Trailing letters after
/// the suffix, such as unit names in `10kohm`, are ignored.
pub fn parse_value(token: &str) -> Option<f64> {
    let s = token.trim().to_ascii_lowercase();
    let bytes = s.as_bytes();
    let mut end = 0;
    if end < bytes.len() && (bytes[end] == b'+' || bytes[end] == b'-') {
        end += 1;
    }
    let digits_start = end;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end < bytes.len() && bytes[end] == b'.' {
        end += 1;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
    }
    if end == digits_start || (end == digits_start + 1 && bytes[digits_start] == b'.') {
        return None;
    }
    // exponent only when followed by a digit, so `1e` is not consumed
    if end < bytes.len() && bytes[end] == b'e' {
        let mut k = end + 1;
        if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
            k += 1;
        }
        if k < bytes.len() && bytes[k].is_ascii_digit() {
            while k < bytes.len() && bytes[k].is_ascii_digit() {
                k += 1;
            }
            end = k;
        }
    }
    let literal = &s[..end];
    let rest = &s[end..];
    let shift: i32 = if rest.starts_with("meg") {
        6
    } else if rest.starts_with("mil") {
        let v = literal.parse::<f64>().ok()? * 25.4e-6;
        return v.is_finite().then_some(v);
    } else {
        match rest.chars().next() {
            None => 0,
            Some('f') => -15,
            Some('p') => -12,
            Some('n') => -9,
            Some('u') => -6,
            Some('m') => -3,
            Some('k') => 3,
            Some('g') => 9,
            Some('t') => 12,
            Some(c) if c.is_ascii_alphabetic() => 0,
            Some(_) => return None,
        }
    };
    // shift the decimal exponent and reparse so `10u` is exactly 1e-5
    let (mant, exp) = match literal.find('e') {
        Some(i) => (&literal[..i], literal[i + 1..].parse::<i32>().ok()?),
        None => (literal, 0),
    };
    let v: f64 = format!("{mant}e{}", exp + shift).parse().ok()?;
    v.is_finite().then_some(v)
}

#[cfg(test)]
mod tests {
    use super::parse_value;

    #[test]
    fn suffixes() {
        assert_eq!(parse_value("1k"), Some(1e3));
        assert_eq!(parse_value("2.2K"), Some(2.2e3));
        assert_eq!(parse_value("1meg"), Some(1e6));
        assert_eq!(parse_value("10u"), Some(10e-6));
        assert_eq!(parse_value("3m"), Some(3e-3));
        assert_eq!(parse_value("1e3"), Some(1e3));
        assert_eq!(parse_value("1.5e-14"), Some(1.5e-14));
        assert_eq!(parse_value("-5"), Some(-5.0));
        assert_eq!(parse_value("10kohm"), Some(1e4));
        assert_eq!(parse_value("4.7nF"), Some(4.7e-9));
        assert_eq!(parse_value(".5"), Some(0.5));
        assert_eq!(parse_value("1V"), Some(1.0));
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!(parse_value("abc"), None);
        assert_eq!(parse_value(""), None);
        assert_eq!(parse_value("."), None);
        assert_eq!(parse_value("1#"), None);
    }
}
