//! Prior pixel labels, one `row col +|-` per line; `#` starts a comment.

use std::io::Write;

use super::parse_error;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Foreground,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Label {
    pub row: usize,
    pub col: usize,
    pub side: Side,
}

pub fn read(text: &str, source_name: &str) -> Result<Vec<Label>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| parse_error(source_name, lineno + 1, msg);
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 3 {
            return Err(err("expected `row col +|-`"));
        }
        let row = tok[0].parse().map_err(|_| err("bad row"))?;
        let col = tok[1].parse().map_err(|_| err("bad column"))?;
        let side = match tok[2] {
            "+" => Side::Foreground,
            "-" => Side::Background,
            _ => return Err(err("side must be `+` or `-`")),
        };
        out.push(Label { row, col, side });
    }
    Ok(out)
}

pub fn write<W: Write>(labels: &[Label], mut out: W) -> Result<()> {
    for l in labels {
        let s = if l.side == Side::Foreground { '+' } else { '-' };
        writeln!(out, "{} {} {s}", l.row, l.col)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_write() {
        let text = "# seeds\n0 1 +\n 5 7 - # background\n";
        let labels = read(text, "l").unwrap();
        assert_eq!(
            labels,
            vec![
                Label { row: 0, col: 1, side: Side::Foreground },
                Label { row: 5, col: 7, side: Side::Background },
            ]
        );
        let mut buf = Vec::new();
        write(&labels, &mut buf).unwrap();
        assert_eq!(read(std::str::from_utf8(&buf).unwrap(), "l").unwrap(), labels);
    }

    #[test]
    fn bad_side_is_rejected() {
        assert!(read("1 2 x\n", "l").is_err());
        assert!(read("1 +\n", "l").is_err());
    }
}
