//! Text and key/value report formatting.

use std::fmt::Write as _;

/// `x` with six significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..6).contains(&e) {
        format!("{:.*}", (5 - e).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

/// `x` at full precision: the shortest text that parses back to `x`.
pub fn full(x: f64) -> String {
    format!("{x:?}")
}

pub fn full_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| full(x)).collect::<Vec<_>>().join(",")
}

/// Flat `key=value` document, written in insertion order.
#[derive(Debug, Default)]
pub struct KvDoc {
    lines: Vec<(String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl ToString) {
        self.lines.push((key.into(), value.to_string()));
    }

    pub fn num(&mut self, key: impl Into<String>, x: f64) {
        self.put(key, full(x));
    }

    pub fn list(&mut self, key: impl Into<String>, xs: &[f64]) {
        self.put(key, full_list(xs));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

/// Left-aligned first column, right-aligned others.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, cell) in cells.iter().enumerate().take(cols) {
            if i == 0 {
                let _ = write!(s, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(s, "  {cell:>w$}", w = widths[i]);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(29.604795), "29.6048");
        assert_eq!(sig6(-0.6715234), "-0.671523");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(1.5e-9), "1.50000e-9");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn full_precision_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-12, 29.604795114] {
            assert_eq!(full(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn kv_keeps_insertion_order() {
        let mut d = KvDoc::new();
        d.put("b", 1);
        d.num("a", 0.5);
        d.list("c", &[1.0, 2.0]);
        assert_eq!(d.render(), "b=1\na=0.5\nc=1.0,2.0\n");
    }
}
