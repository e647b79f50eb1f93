//! Parsers for numeric flags. Everything accepts scientific notation.

/// Parses a float such as `0.5`, `3.08e6` or `inf`.
pub fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

/// Parses a nonnegative integer count, allowing `3.08e6`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    let v = parse_f64(s)?;
    if !(v >= 0.0) || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(format!("`{s}` is not a nonnegative integer"));
    }
    Ok(v as u64)
}

/// Parses a count that may also be `inf` (asymptotic limit).
pub fn parse_count_or_inf(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v.is_infinite() && v > 0.0 {
        return Ok(v);
    }
    parse_count(s).map(|c| c as f64)
}

/// Grid as `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty grid".into());
    }
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(format!("`{s}`: range must be start:stop:step"));
        };
        let (start, stop, step) = (parse_f64(start)?, parse_f64(stop)?, parse_f64(step)?);
        if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
            return Err(format!("`{s}`: need start <= stop and step > 0"));
        }
        // count through an integer index so the floating step does not drift
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| start + k as f64 * step).collect());
    }
    s.split(',').map(parse_f64).collect()
}

/// Decades `a:b:step` of log10 exponents mapped to `10^e`.
pub fn parse_decades(s: &str) -> Result<Vec<f64>, String> {
    Ok(parse_grid(s)?.into_iter().map(|e| 10f64.powf(e)).collect())
}

/// Comma-separated list of counts (each ≥ 1 or `inf`).
pub fn parse_count_list(s: &str) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s.split(',').map(parse_count_or_inf).collect::<Result<_, _>>()?;
    if v.iter().any(|&m| m < 1.0) {
        return Err(format!("`{s}`: counts must be >= 1"));
    }
    Ok(v)
}
