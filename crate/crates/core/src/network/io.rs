//! `LONDON-MODEL v1` text format.
//!
//! ```text
//! LONDON-MODEL v1
//! block <k> <kind> <activation> <rows> <cols>
//! <rows lines of cols weights>
//! ```
//!
//! Blocks are numbered from 1. A `residual_dense` block is followed by the
//! rows of its inner weight and then the rows of its outer weight. Weights
//! use 17 significant digits, which round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ActivationKind, Block, BlockKind, Network};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &str = "LONDON-MODEL v1";

/// Formats with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_text(net: &Network) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for (k, block) in net.blocks().iter().enumerate() {
        let w = block.weight();
        let _ = writeln!(
            out,
            "block {} {} {} {} {}",
            k + 1,
            block.kind().as_str(),
            block.activation(),
            w.rows(),
            w.cols()
        );
        for p in block.params() {
            for i in 0..p.rows() {
                let row: Vec<String> = p.row(i).iter().map(|&x| format_f64(x)).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
    }
    out
}

pub fn from_text(text: &str, source: &Path) -> Result<Network> {
    let err = |line: usize, msg: String| Error::Format {
        path: source.to_path_buf(),
        line,
        msg,
    };
    let total_lines = text.lines().count();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    match lines.next() {
        Some((_, l)) if l.trim_end() == MAGIC => {}
        Some((n, l)) => return Err(err(n, format!("expected {MAGIC:?}, found {l:?}"))),
        None => return Err(err(1, "empty model file".into())),
    }

    let read_matrix = |rows: usize,
                       cols: usize,
                       lines: &mut dyn Iterator<Item = (usize, &str)>|
     -> Result<Matrix> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let (n, l) = lines.next().ok_or_else(|| {
                err(
                    total_lines,
                    format!("unexpected end of file in weight row {}", r + 1),
                )
            })?;
            let before = data.len();
            for tok in l.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| err(n, format!("bad number {tok:?}")))?;
                if !v.is_finite() {
                    return Err(err(n, format!("non-finite weight {tok:?}")));
                }
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(err(
                    n,
                    format!("expected {cols} weights, found {}", data.len() - before),
                ));
            }
        }
        Matrix::new(rows, cols, data)
    };

    let mut blocks = Vec::new();
    while let Some((n, header)) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 6 || toks[0] != "block" {
            return Err(err(n, format!("malformed block header {header:?}")));
        }
        let index: usize = toks[1]
            .parse()
            .map_err(|_| err(n, format!("bad block index {:?}", toks[1])))?;
        if index != blocks.len() + 1 {
            return Err(err(
                n,
                format!("expected block {}, found {index}", blocks.len() + 1),
            ));
        }
        let kind = BlockKind::parse(toks[2])
            .ok_or_else(|| err(n, format!("unknown block kind {:?}", toks[2])))?;
        let activation: ActivationKind = toks[3].parse().map_err(|e: String| err(n, e))?;
        let rows: usize = toks[4]
            .parse()
            .map_err(|_| err(n, format!("bad row count {:?}", toks[4])))?;
        let cols: usize = toks[5]
            .parse()
            .map_err(|_| err(n, format!("bad column count {:?}", toks[5])))?;
        if rows == 0 || cols == 0 {
            return Err(err(n, "weight dimensions must be positive".into()));
        }
        let block = match kind {
            BlockKind::Dense => Block::Dense {
                weight: read_matrix(rows, cols, &mut lines)?,
                activation,
            },
            BlockKind::ResidualDense => {
                if rows != cols {
                    return Err(err(n, "residual block weights must be square".into()));
                }
                let inner = read_matrix(rows, cols, &mut lines)?;
                let outer = read_matrix(rows, cols, &mut lines)?;
                Block::Residual {
                    inner,
                    outer,
                    activation,
                }
            }
        };
        blocks.push(block);
    }
    Network::new(blocks).map_err(|e| err(total_lines, e.to_string()))
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_text(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    from_text(&text, &path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_network;
    use proptest::prelude::*;

    fn sample() -> Network {
        build_network(
            &[3, 5, 5, 2],
            &[BlockKind::Dense, BlockKind::ResidualDense, BlockKind::Dense],
            ActivationKind::LeakyRelu(0.1),
            1.3,
            4,
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let text = to_text(&sample());
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(MAGIC));
        assert!(lines
            .next()
            .unwrap()
            .starts_with("block 1 dense leaky_relu:"));
        assert!(text.contains("\nblock 2 residual_dense "));
        assert!(text.contains("\nblock 3 dense identity 2 5\n"));
        // 1 magic + (1 + 5) + (1 + 10) + (1 + 2)
        assert_eq!(text.lines().count(), 21);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let good = to_text(&sample());
        let bad = good.replacen("block 2", "blok 2", 1);
        let e = from_text(&bad, Path::new("m.model")).unwrap_err();
        assert!(matches!(e, Error::Format { line: 8, .. }), "{e}");

        let mut lines: Vec<&str> = good.lines().collect();
        lines[3] = "1.0 nope 2.0";
        let e = from_text(&lines.join("\n"), Path::new("m.model")).unwrap_err();
        assert!(matches!(e, Error::Format { line: 4, .. }), "{e}");

        let e = from_text("LONDON-MODEL v2\n", Path::new("m.model")).unwrap_err();
        assert!(matches!(e, Error::Format { line: 1, .. }));

        let truncated: String = good.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(from_text(&truncated, Path::new("m.model")).is_err());
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.model");
        let p2 = dir.path().join("b.model");
        let net = sample();
        save(&net, &p1).unwrap();
        let loaded = load(&p1).unwrap();
        assert_eq!(loaded, net);
        save(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    proptest! {
        #[test]
        fn weights_round_trip_bitwise(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 6)) {
            let net = Network::new(vec![Block::Dense {
                weight: Matrix::new(2, 3, vals).unwrap(),
                activation: ActivationKind::Identity,
            }]).unwrap();
            let back = from_text(&to_text(&net), Path::new("p")).unwrap();
            let a: Vec<u64> = net.blocks()[0].weight().as_slice().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = back.blocks()[0].weight().as_slice().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
