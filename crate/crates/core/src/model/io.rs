//! Text serialization of a [`FactVaeModel`].
//!
//! ```text
//! FACTVAE1
//! latent=<K>
//! hidden=<H>
//! groups=<name>:<dim>,<name>:<dim>,...
//! matrix <group>.<field> <rows> <cols>
//! <cols values, space separated>        (one line per row)
//! ...
//! ```
//!
//! Vectors are written as `<len> 1` blocks with one value per line. Values
//! use 17 significant digits in scientific notation, which round-trips
//! every finite `f64` exactly. Blocks appear group by group in
//! [`GroupNetworks::fields`] order.

use std::fmt::Write as _;
use std::path::Path;

use super::{FactVaeModel, GroupNetworks, GroupSpec};
use crate::error::{Error, Result};
use crate::math::Tensor;

pub const MODEL_MAGIC: &str = "FACTVAE1";

pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl FactVaeModel {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let groups: Vec<String> = self.groups.iter().map(|g| format!("{}:{}", g.name, g.dim)).collect();
        let _ = writeln!(out, "{MODEL_MAGIC}");
        let _ = writeln!(out, "latent={}", self.latent);
        let _ = writeln!(out, "hidden={}", self.hidden);
        let _ = writeln!(out, "groups={}", groups.join(","));
        for (spec, net) in self.groups.iter().zip(&self.nets) {
            for (field, id) in net.fields() {
                let t = self.params.value(id);
                let (rows, cols) = t.dims2();
                let _ = writeln!(out, "matrix {}.{field} {rows} {cols}", spec.name);
                for r in 0..rows {
                    let line: Vec<String> = t.row(r).iter().map(|&x| format_f64(x)).collect();
                    let _ = writeln!(out, "{}", line.join(" "));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { path: source.to_string(), line, msg };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| perr(text.lines().count() + 1, format!("unexpected end of file, expected {what}")))
        };

        let (n, magic) = next("header")?;
        if magic.trim_end() != MODEL_MAGIC {
            return Err(perr(n, format!("expected header {MODEL_MAGIC}, found {magic:?}")));
        }
        let mut key = |k: &str| -> Result<(usize, String)> {
            let (n, l) = next(k)?;
            l.strip_prefix(k)
                .and_then(|r| r.strip_prefix('='))
                .map(|v| (n, v.trim().to_string()))
                .ok_or_else(|| perr(n, format!("expected `{k}=...`")))
        };
        let (n, latent) = key("latent")?;
        let latent: usize = latent.parse().map_err(|_| perr(n, format!("bad latent size {latent:?}")))?;
        let (n, hidden) = key("hidden")?;
        let hidden: usize = hidden.parse().map_err(|_| perr(n, format!("bad hidden size {hidden:?}")))?;
        let (n, groups) = key("groups")?;
        let specs = parse_group_list(&groups).map_err(|m| perr(n, m))?;

        let mut blocks: Vec<Tensor> = Vec::new();
        for spec in &specs {
            for (field, shape) in GroupNetworks::field_shapes(spec.dim, hidden, latent) {
                let (n, header) = next("matrix header")?;
                let parts: Vec<&str> = header.split_whitespace().collect();
                let expected_name = format!("{}.{field}", spec.name);
                let (rows, cols) = match shape.as_slice() {
                    [r, c] => (*r, *c),
                    [r] => (*r, 1),
                    _ => unreachable!(),
                };
                if parts.len() != 4 || parts[0] != "matrix" || parts[1] != expected_name {
                    return Err(perr(n, format!("expected `matrix {expected_name} {rows} {cols}`")));
                }
                if parts[2] != rows.to_string() || parts[3] != cols.to_string() {
                    return Err(perr(
                        n,
                        format!("{expected_name} should be {rows}x{cols}, file says {}x{}", parts[2], parts[3]),
                    ));
                }
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (n, row) = next("matrix row")?;
                    let before = data.len();
                    for tok in row.split_whitespace() {
                        let v: f64 = tok.parse().map_err(|_| perr(n, format!("non-numeric value {tok:?}")))?;
                        if !v.is_finite() {
                            return Err(perr(n, format!("non-finite value {tok:?}")));
                        }
                        data.push(v);
                    }
                    if data.len() - before != cols {
                        return Err(perr(n, format!("expected {cols} values, found {}", data.len() - before)));
                    }
                }
                blocks.push(Tensor::new(shape, data)?);
            }
        }
        if let Some((n, extra)) = lines_remaining(&mut next) {
            return Err(perr(n, format!("trailing content {extra:?}")));
        }
        let mut iter = blocks.into_iter();
        FactVaeModel::build(specs, latent, hidden, |_, _| iter.next().expect("one block per field"))
    }
}

fn lines_remaining<'a>(next: &mut impl FnMut(&str) -> Result<(usize, &'a str)>) -> Option<(usize, &'a str)> {
    while let Ok((n, l)) = next("") {
        if !l.trim().is_empty() {
            return Some((n, l));
        }
    }
    None
}

/// Parses `name:dim,name:dim,...`.
pub fn parse_group_list(s: &str) -> std::result::Result<Vec<GroupSpec>, String> {
    let specs = s
        .split(',')
        .map(|item| {
            let (name, dim) = item.split_once(':').ok_or_else(|| format!("group entry {item:?} is not name:dim"))?;
            let dim: usize = dim.trim().parse().map_err(|_| format!("bad dimension in {item:?}"))?;
            Ok(GroupSpec::new(name.trim(), dim))
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    super::validate_specs(&specs).map_err(|e| e.to_string())?;
    Ok(specs)
}

pub fn write_model(model: &FactVaeModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_text()).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<FactVaeModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FactVaeModel::from_text(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SeededRng;

    fn model() -> FactVaeModel {
        let groups = vec![GroupSpec::new("left", 3), GroupSpec::new("right", 2)];
        FactVaeModel::new(groups, 2, 4, &mut SeededRng::new(11)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let text = m.to_text();
        assert!(text.starts_with("FACTVAE1\nlatent=2\nhidden=4\ngroups=left:3,right:2\n"));
        let back = FactVaeModel::from_text(&text, "mem").unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let text = model().to_text();
        let err = FactVaeModel::from_text(&text.replacen("FACTVAE1", "FACTVAE2", 1), "m").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let cut: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        assert!(matches!(FactVaeModel::from_text(&cut, "m"), Err(Error::Parse { .. })));
    }

    #[test]
    fn rejects_wrong_shape() {
        let text = model().to_text().replacen("matrix left.enc_hidden_w 4 3", "matrix left.enc_hidden_w 3 4", 1);
        match FactVaeModel::from_text(&text, "m") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_numeric() {
        let text = model().to_text();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[5] = "1.0 abc 2.0";
        let err = FactVaeModel::from_text(&lines.join("\n"), "m").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 6, .. }), "{err}");
    }
}
