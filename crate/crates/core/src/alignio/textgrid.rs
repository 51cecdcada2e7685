//! Praat TextGrid, long ("ooTextFile") format only.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Slack for boundary comparisons, in seconds.
const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Interval {
    pub xmin: f64,
    pub xmax: f64,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tier {
    pub name: String,
    pub xmin: f64,
    pub xmax: f64,
    pub intervals: Vec<Interval>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextGrid {
    pub xmin: f64,
    pub xmax: f64,
    pub tiers: Vec<Tier>,
}

impl TextGrid {
    pub fn duration(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn tier(&self, name: &str) -> Option<&Tier> {
        self.tiers.iter().find(|t| t.name == name)
    }

    /// Checks ordering and containment; `Err` carries the offending tier and interval index.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.xmin.is_finite() && self.xmax.is_finite()) || self.xmax < self.xmin {
            return Err(format!("grid span [{}, {}] is invalid", self.xmin, self.xmax));
        }
        for t in &self.tiers {
            validate_tier(t, self.xmin, self.xmax).map_err(|(i, m)| match i {
                Some(i) => format!("tier `{}` interval {}: {m}", t.name, i + 1),
                None => format!("tier `{}`: {m}", t.name),
            })?;
        }
        Ok(())
    }
}

fn validate_tier(t: &Tier, gmin: f64, gmax: f64) -> std::result::Result<(), (Option<usize>, String)> {
    if t.xmax < t.xmin || t.xmin < gmin - TIME_EPS || t.xmax > gmax + TIME_EPS {
        return Err((None, format!("span [{}, {}] outside grid [{gmin}, {gmax}]", t.xmin, t.xmax)));
    }
    let mut prev_end = t.xmin;
    for (i, iv) in t.intervals.iter().enumerate() {
        if !(iv.xmin.is_finite() && iv.xmax.is_finite()) || iv.xmax <= iv.xmin {
            return Err((Some(i), format!("xmax {} must exceed xmin {}", iv.xmax, iv.xmin)));
        }
        if iv.xmin < prev_end - TIME_EPS {
            return Err((
                Some(i),
                format!("starts at {} before the previous interval ends at {prev_end}", iv.xmin),
            ));
        }
        if iv.xmax > t.xmax + TIME_EPS {
            return Err((Some(i), format!("ends at {} after the tier ends at {}", iv.xmax, t.xmax)));
        }
        prev_end = iv.xmax;
    }
    Ok(())
}

pub fn read_textgrid(path: impl AsRef<Path>) -> Result<TextGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_textgrid_named(&text, &path.display().to_string())
}

pub fn parse_textgrid(text: &str) -> Result<TextGrid> {
    parse_textgrid_named(text, "<textgrid>")
}

/// Parses long-format text; `source` names the input in error messages.
pub fn parse_textgrid_named(text: &str, source: &str) -> Result<TextGrid> {
    let mut p = Parser {
        lines: text.strip_prefix('\u{feff}').unwrap_or(text).lines().collect(),
        pos: 0,
        source,
    };
    p.grid()
}

struct Parser<'a> {
    lines: Vec<&'a str>,
    /// Index of the next unread line.
    pos: usize,
    source: &'a str,
}

impl<'a> Parser<'a> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.to_string(),
            line,
            msg: msg.into(),
        }
    }

    /// Next non-blank line, trimmed, with its 1-based number.
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        while self.pos < self.lines.len() {
            let l = self.lines[self.pos].trim();
            self.pos += 1;
            if !l.is_empty() {
                return Some((self.pos, l));
            }
        }
        None
    }

    fn peek_line(&self) -> Option<(usize, &'a str)> {
        (self.pos..self.lines.len())
            .map(|i| (i + 1, self.lines[i].trim()))
            .find(|(_, l)| !l.is_empty())
    }

    fn expect_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let eof = self.lines.len();
        self.next_line()
            .ok_or_else(|| self.err(eof, format!("unexpected end of file, expected {what}")))
    }

    /// Reads `key = value` and returns the raw value.
    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, l) = self.expect_line(&format!("`{key} = ...`"))?;
        match l.split_once('=') {
            Some((k, v)) if k.trim() == key => Ok((n, v.trim())),
            _ => Err(self.err(n, format!("expected `{key} = ...`, found `{l}`"))),
        }
    }

    fn number(&mut self, key: &str) -> Result<f64> {
        let (n, v) = self.field(key)?;
        let x: f64 = v
            .parse()
            .map_err(|_| self.err(n, format!("`{key}` is not a number: `{v}`")))?;
        if !x.is_finite() {
            return Err(self.err(n, format!("`{key}` is not finite")));
        }
        Ok(x)
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let (n, v) = self.field(key)?;
        v.parse()
            .map_err(|_| self.err(n, format!("`{key}` is not a non-negative integer: `{v}`")))
    }

    /// Reads `key = "..."`, following the string across lines if needed.
    fn string(&mut self, key: &str) -> Result<(usize, String)> {
        let (n, v) = self.field(key)?;
        let rest = v
            .strip_prefix('"')
            .ok_or_else(|| self.err(n, format!("`{key}` must be a quoted string")))?;
        let mut out = String::new();
        let mut chunk = rest;
        loop {
            let mut chars = chunk.char_indices().peekable();
            while let Some((i, c)) = chars.next() {
                if c == '"' {
                    if matches!(chars.peek(), Some((_, '"'))) {
                        out.push('"');
                        chars.next();
                    } else {
                        let tail = chunk[i + 1..].trim();
                        if !tail.is_empty() {
                            return Err(self.err(self.pos, format!("trailing text after `{key}`: `{tail}`")));
                        }
                        return Ok((n, out));
                    }
                } else {
                    out.push(c);
                }
            }
            // Unterminated on this line: the string contains a newline.
            if self.pos >= self.lines.len() {
                return Err(self.err(n, format!("unterminated string in `{key}`")));
            }
            out.push('\n');
            chunk = self.lines[self.pos];
            self.pos += 1;
        }
    }

    fn header(&mut self, expected: &str) -> Result<()> {
        let (n, l) = self.expect_line(&format!("`{expected}`"))?;
        if l == expected {
            Ok(())
        } else {
            Err(self.err(n, format!("expected `{expected}`, found `{l}`")))
        }
    }

    fn grid(&mut self) -> Result<TextGrid> {
        let (n, ft) = self.string("File type")?;
        if ft != "ooTextFile" {
            return Err(self.err(n, format!("unsupported file type `{ft}`")));
        }
        let (n, class) = self.string("Object class")?;
        if class != "TextGrid" {
            return Err(self.err(n, format!("object class `{class}` is not TextGrid")));
        }
        if let Some((n, l)) = self.peek_line() {
            if !l.contains('=') {
                return Err(self.err(n, "short-format TextGrid is not supported; save as long text file"));
            }
        }
        let xmin = self.number("xmin")?;
        let xmax = self.number("xmax")?;
        let (n, l) = self.expect_line("`tiers? <exists>`")?;
        let exists = l
            .strip_prefix("tiers?")
            .map(str::trim)
            .ok_or_else(|| self.err(n, format!("expected `tiers? <exists>`, found `{l}`")))?;
        let size = match exists {
            "<exists>" => self.count("size")?,
            "<absent>" => 0,
            other => return Err(self.err(n, format!("expected `<exists>` or `<absent>`, found `{other}`"))),
        };
        if exists == "<exists>" {
            self.header("item []:")?;
        }
        let mut grid = TextGrid {
            xmin,
            xmax,
            tiers: Vec::with_capacity(size),
        };
        if xmax < xmin {
            return Err(self.err(n, format!("grid xmax {xmax} precedes xmin {xmin}")));
        }
        for i in 1..=size {
            self.header(&format!("item [{i}]:"))?;
            let tier = self.tier(xmin, xmax)?;
            grid.tiers.push(tier);
        }
        if let Some((n, l)) = self.next_line() {
            return Err(self.err(n, format!("unexpected trailing content `{l}`")));
        }
        Ok(grid)
    }

    fn tier(&mut self, gmin: f64, gmax: f64) -> Result<Tier> {
        let (n, class) = self.string("class")?;
        match class.as_str() {
            "IntervalTier" => {}
            "TextTier" => return Err(self.err(n, "point tiers (TextTier) are not supported")),
            other => return Err(self.err(n, format!("unknown tier class `{other}`"))),
        }
        let (_, name) = self.string("name")?;
        let tier_line = self.pos + 1;
        let xmin = self.number("xmin")?;
        let xmax = self.number("xmax")?;
        let count = self.count("intervals: size")?;
        let mut tier = Tier {
            name,
            xmin,
            xmax,
            intervals: Vec::with_capacity(count),
        };
        if let Err((_, m)) = validate_tier(&tier, gmin, gmax) {
            return Err(self.err(tier_line, format!("tier `{}`: {m}", tier.name)));
        }
        for j in 1..=count {
            self.header(&format!("intervals [{j}]:"))?;
            let line = self.pos + 1;
            let xmin = self.number("xmin")?;
            let xmax = self.number("xmax")?;
            let (_, text) = self.string("text")?;
            tier.intervals.push(Interval { xmin, xmax, text });
            if let Err((_, m)) = validate_tier(&tier, gmin, gmax) {
                return Err(self.err(line, format!("tier `{}` interval {j}: {m}", tier.name)));
            }
        }
        Ok(tier)
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Long-format text that [`parse_textgrid`] reads back exactly.
pub fn write_textgrid(grid: &TextGrid) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "File type = \"ooTextFile\"");
    let _ = writeln!(s, "Object class = \"TextGrid\"");
    let _ = writeln!(s);
    let _ = writeln!(s, "xmin = {}", grid.xmin);
    let _ = writeln!(s, "xmax = {}", grid.xmax);
    if grid.tiers.is_empty() {
        let _ = writeln!(s, "tiers? <absent>");
        return s;
    }
    let _ = writeln!(s, "tiers? <exists>");
    let _ = writeln!(s, "size = {}", grid.tiers.len());
    let _ = writeln!(s, "item []:");
    for (i, t) in grid.tiers.iter().enumerate() {
        let _ = writeln!(s, "    item [{}]:", i + 1);
        let _ = writeln!(s, "        class = \"IntervalTier\"");
        let _ = writeln!(s, "        name = {}", quote(&t.name));
        let _ = writeln!(s, "        xmin = {}", t.xmin);
        let _ = writeln!(s, "        xmax = {}", t.xmax);
        let _ = writeln!(s, "        intervals: size = {}", t.intervals.len());
        for (j, iv) in t.intervals.iter().enumerate() {
            let _ = writeln!(s, "        intervals [{}]:", j + 1);
            let _ = writeln!(s, "            xmin = {}", iv.xmin);
            let _ = writeln!(s, "            xmax = {}", iv.xmax);
            let _ = writeln!(s, "            text = {}", quote(&iv.text));
        }
    }
    s
}

pub fn save_textgrid(grid: &TextGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_textgrid(grid)).map_err(|e| Error::io(path, e))
}
