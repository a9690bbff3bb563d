//! Plain-text model files.
//!
//! ```text
//! featlearn-sae 1
//! layers <count>
//! layer <input> <hidden> <activation>
//! <hidden rows of W, input values each>
//! <b>
//! <d_bias>
//! ...
//! head <h_top>
//! <2 rows of softmax W>
//! <softmax b>
//! ```
//!
//! Values are written with 17 significant digits, which reads back to the same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, AeLayer, SaeModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FORMAT_HEADER: &str = "featlearn-sae 1";

fn write_row<'a, T: Scalar>(out: &mut String, values: impl Iterator<Item = &'a T>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

pub fn model_to_text<T: Scalar>(model: &SaeModel<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_HEADER}");
    let _ = writeln!(out, "layers {}", model.layers.len());
    for l in &model.layers {
        let _ = writeln!(out, "layer {} {} {}", l.input_dim(), l.hidden_dim(), l.activation.name());
        for row in l.w.rows() {
            write_row(&mut out, row.iter());
        }
        write_row(&mut out, l.b.iter());
        write_row(&mut out, l.d_bias.iter());
    }
    let _ = writeln!(out, "head {}", model.softmax_w.ncols());
    for row in model.softmax_w.rows() {
        write_row(&mut out, row.iter());
    }
    write_row(&mut out, model.softmax_b.iter());
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.trim()))
            .ok_or_else(|| parse_error(0, what, "unexpected end of file"))
    }

    fn keyword(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (row, line) = self.next(key)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(parse_error(row, key, &format!("expected `{key}`, found {line:?}")));
        }
        Ok((row, parts.collect()))
    }

    fn values<T: Scalar>(&mut self, what: &str, len: usize) -> Result<Vec<T>> {
        let (row, line) = self.next(what)?;
        let vals = line
            .split_whitespace()
            .map(|tok| tok.parse::<T>().map_err(|_| parse_error(row, what, &format!("bad number {tok:?}"))))
            .collect::<Result<Vec<T>>>()?;
        if vals.len() != len {
            return Err(parse_error(row, what, &format!("expected {len} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn matrix<T: Scalar>(&mut self, what: &str, rows: usize, cols: usize) -> Result<Array2<T>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.values::<T>(what, cols)?);
        }
        Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::dim(e.to_string()))
    }
}

fn parse_error(row: usize, column: &str, message: &str) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message: message.to_string(),
    }
}

fn parse_count(row: usize, what: &str, tok: Option<&&str>) -> Result<usize> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_error(row, what, "expected a count"))
}

pub fn model_from_text<T: Scalar>(text: &str) -> Result<SaeModel<T>> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (row, header) = lines.next("header")?;
    if header != FORMAT_HEADER {
        return Err(parse_error(row, "header", &format!("expected {FORMAT_HEADER:?}, found {header:?}")));
    }
    let (row, parts) = lines.keyword("layers")?;
    let n_layers = parse_count(row, "layers", parts.first())?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let (row, parts) = lines.keyword("layer")?;
        let d = parse_count(row, "layer", parts.first())?;
        let h = parse_count(row, "layer", parts.get(1))?;
        let act = parts
            .get(2)
            .and_then(|s| Activation::from_name(s))
            .ok_or_else(|| parse_error(row, "layer", "unknown activation"))?;
        let w = lines.matrix::<T>("W", h, d)?;
        let b = Array1::from(lines.values::<T>("b", h)?);
        let d_bias = Array1::from(lines.values::<T>("d_bias", d)?);
        layers.push(AeLayer::from_parts(w, b, d_bias, act)?);
    }
    let (row, parts) = lines.keyword("head")?;
    let top = parse_count(row, "head", parts.first())?;
    let sw = lines.matrix::<T>("softmax W", 2, top)?;
    let sb = Array1::from(lines.values::<T>("softmax b", 2)?);
    SaeModel::from_parts(layers, sw, sb)
}

pub fn save_model<T: Scalar>(model: &SaeModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_text(model)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<SaeModel<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;
    use crate::sae::{sae_train, TrainConfig};
    use ndarray::Array2;

    fn trained() -> SaeModel<f64> {
        let x = Array2::from_shape_fn((10, 6), |(i, j)| ((i * 7 + j * 3) as f64).sin());
        let labels: Vec<Label> = (0..10).map(|i| if i < 5 { Label::Class0 } else { Label::Class1 }).collect();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            iterations: 10,
            l2: 1e-3,
            seed: 3,
        };
        sae_train(x.view(), &labels, &[4, 2], &cfg).unwrap()
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = trained();
        let back: SaeModel<f64> = model_from_text(&model_to_text(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sae");
        let m = trained();
        save_model(&m, &path).unwrap();
        assert_eq!(load_model::<f64>(&path).unwrap(), m);
        assert!(matches!(load_model::<f64>(dir.path().join("none")), Err(Error::Io { .. })));
    }

    #[test]
    fn malformed_inputs() {
        let text = model_to_text(&trained());
        assert!(model_from_text::<f64>(&text.replacen("featlearn-sae 1", "featlearn-sae 9", 1)).is_err());
        let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(model_from_text::<f64>(&truncated).is_err());
        assert!(model_from_text::<f64>(&text.replacen("sigmoid", "tanh", 1)).is_err());
    }
}
