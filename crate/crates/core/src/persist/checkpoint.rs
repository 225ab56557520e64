//! `SPOPT1` checkpoint container.
//!
//! ```text
//! SPOPT1
//! meta <key> <value>
//! block <name> <rows> <cols> f64le dense <matrix|vector>
//! block <name> <rows> <cols> f64le factored <k> <matrix|vector>
//! end
//! <payloads>
//! ```
//!
//! Header lines are UTF-8 and newline-terminated; names and keys contain no
//! whitespace. Payloads follow in header order as little-endian `f64`, row
//! major. A factored block stores `Wu` (`rows × k`) then `Wv` (`cols × k`).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::compress::LowRankFactors;
use crate::error::{Error, Result};
use crate::harness::{Activation, MlpModel};
use crate::linalg::Matrix;
use crate::optim::ParamBlock;

pub const MAGIC: &str = "SPOPT1";
const DTYPE: &str = "f64le";

#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    Dense(Matrix),
    Factored(LowRankFactors),
}

impl StoredTensor {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            StoredTensor::Dense(m) => m.shape(),
            StoredTensor::Factored(f) => f.shape(),
        }
    }

    /// The represented matrix (factored blocks are multiplied out).
    pub fn to_dense(&self) -> Matrix {
        match self {
            StoredTensor::Dense(m) => m.clone(),
            StoredTensor::Factored(f) => f.reconstruct(),
        }
    }

    pub fn stored_params(&self) -> usize {
        match self {
            StoredTensor::Dense(m) => m.rows() * m.cols(),
            StoredTensor::Factored(f) => f.stored_params(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredBlock {
    pub name: String,
    pub is_matrix_param: bool,
    pub tensor: StoredTensor,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub blocks: Vec<StoredBlock>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::FormatError(msg.into())
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl Checkpoint {
    pub fn from_model(model: &MlpModel) -> Self {
        let mut meta = BTreeMap::new();
        meta.insert("arch".into(), "mlp".into());
        let acts: Vec<&str> = model.activations().iter().map(|a| a.name()).collect();
        meta.insert("activations".into(), acts.join(","));
        let blocks = model
            .params()
            .iter()
            .map(|p| StoredBlock {
                name: p.name.clone(),
                is_matrix_param: p.is_matrix_param,
                tensor: StoredTensor::Dense(p.weight.clone()),
            })
            .collect();
        Self { meta, blocks }
    }

    pub fn activations(&self) -> Result<Vec<Activation>> {
        let raw = self
            .meta
            .get("activations")
            .ok_or_else(|| format_err("missing `activations` meta entry"))?;
        raw.split(',')
            .map(|s| Activation::parse(s).ok_or_else(|| format_err(format!("unknown activation `{s}`"))))
            .collect()
    }

    pub fn num_layers(&self) -> Option<usize> {
        self.activations().ok().map(|a| a.len())
    }

    /// Dense model with factored blocks multiplied out.
    pub fn to_model(&self) -> Result<MlpModel> {
        let blocks: Vec<ParamBlock> = self
            .blocks
            .iter()
            .map(|b| ParamBlock {
                name: b.name.clone(),
                weight: b.tensor.to_dense(),
                is_matrix_param: b.is_matrix_param,
            })
            .collect();
        MlpModel::from_blocks(&blocks, &self.activations()?)
    }

    pub fn stored_params(&self) -> usize {
        self.blocks.iter().map(|b| b.tensor.stored_params()).sum()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = format!("{MAGIC}\n");
        for (k, v) in &self.meta {
            if !valid_token(k) || v.contains('\n') {
                return Err(format_err(format!("meta entry `{k}` cannot be stored")));
            }
            header.push_str(&format!("meta {k} {v}\n"));
        }
        for b in &self.blocks {
            if !valid_token(&b.name) {
                return Err(format_err(format!("block name `{}` cannot be stored", b.name)));
            }
            let (rows, cols) = b.tensor.shape();
            let kind = if b.is_matrix_param { "matrix" } else { "vector" };
            let layout = match &b.tensor {
                StoredTensor::Dense(_) => "dense".to_string(),
                StoredTensor::Factored(f) => format!("factored {}", f.rank()),
            };
            header.push_str(&format!("block {} {rows} {cols} {DTYPE} {layout} {kind}\n", b.name));
        }
        header.push_str("end\n");
        w.write_all(header.as_bytes())?;
        let mut put = |m: &Matrix| -> Result<()> {
            let mut buf = Vec::with_capacity(8 * m.as_slice().len());
            for x in m.as_slice() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
            Ok(())
        };
        for b in &self.blocks {
            match &b.tensor {
                StoredTensor::Dense(m) => put(m)?,
                StoredTensor::Factored(f) => {
                    put(&f.wu)?;
                    put(&f.wv)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let next_line = |r: &mut BufReader<R>, line: &mut String| -> Result<()> {
            line.clear();
            let n = r.read_line(line).map_err(|e| format_err(format!("unreadable header: {e}")))?;
            if n == 0 || !line.ends_with('\n') {
                return Err(format_err("truncated header"));
            }
            line.pop();
            Ok(())
        };
        next_line(&mut r, &mut line)?;
        if line != MAGIC {
            return Err(format_err("missing SPOPT1 magic"));
        }
        let mut meta = BTreeMap::new();
        let mut specs: Vec<(String, usize, usize, Option<usize>, bool)> = Vec::new();
        loop {
            next_line(&mut r, &mut line)?;
            if line == "end" {
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.insert(k.to_string(), v.to_string());
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            let parse = |s: &str| -> Result<usize> {
                s.parse::<usize>()
                    .ok()
                    .filter(|&v| v > 0)
                    .ok_or_else(|| format_err(format!("bad dimension `{s}`")))
            };
            let (name, rows, cols, dtype, rest) = match fields.as_slice() {
                ["block", name, rows, cols, dtype, rest @ ..] => (*name, parse(rows)?, parse(cols)?, *dtype, rest),
                _ => return Err(format_err(format!("bad header line `{line}`"))),
            };
            if dtype != DTYPE {
                return Err(format_err(format!("unsupported dtype `{dtype}`")));
            }
            let (rank, kind) = match rest {
                ["dense", kind] => (None, *kind),
                ["factored", k, kind] => (Some(parse(k)?), *kind),
                _ => return Err(format_err(format!("bad layout in `{line}`"))),
            };
            let is_matrix = match kind {
                "matrix" => true,
                "vector" => false,
                other => return Err(format_err(format!("bad block kind `{other}`"))),
            };
            if specs.iter().any(|s| s.0 == name) {
                return Err(format_err(format!("duplicate block `{name}`")));
            }
            specs.push((name.to_string(), rows, cols, rank, is_matrix));
        }

        let mut take = |rows: usize, cols: usize| -> Result<Matrix> {
            let mut bytes = vec![0u8; 8 * rows * cols];
            r.read_exact(&mut bytes).map_err(|_| format_err("truncated payload"))?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            Matrix::new(rows, cols, data).map_err(|e| format_err(format!("bad payload: {e}")))
        };
        let mut blocks = Vec::with_capacity(specs.len());
        for (name, rows, cols, rank, is_matrix_param) in specs {
            let tensor = match rank {
                None => StoredTensor::Dense(take(rows, cols)?),
                Some(k) => {
                    let wu = take(rows, k)?;
                    let wv = take(cols, k)?;
                    StoredTensor::Factored(LowRankFactors::new(wu, wv)?)
                }
            };
            blocks.push(StoredBlock {
                name,
                is_matrix_param,
                tensor,
            });
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(format_err("trailing bytes after payload"));
        }
        Ok(Self { meta, blocks })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::compress_block;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = MlpModel::init(5, &[7], 3, Activation::Tanh, &mut rng).unwrap();
        let mut ckpt = Checkpoint::from_model(&model);
        let w = ckpt.blocks[0].tensor.to_dense();
        ckpt.blocks[0].tensor = StoredTensor::Factored(compress_block(&w, 2).unwrap());
        ckpt
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = sample();
        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, ckpt);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn header_is_readable_text() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let text = String::from_utf8_lossy(&buf);
        assert!(text.starts_with("SPOPT1\nmeta activations tanh,identity\nmeta arch mlp\n"));
        assert!(text.contains("block layer0.weight 7 5 f64le factored 2 matrix\n"));
        assert!(text.contains("block layer0.bias 7 1 f64le dense vector\n"));
    }

    #[test]
    fn corrupt_inputs_are_format_errors() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let cases: Vec<Vec<u8>> = vec![
            b"SPOPT2\nend\n".to_vec(),
            buf[..buf.len() - 3].to_vec(),
            [buf.clone(), vec![0]].concat(),
            b"SPOPT1\nblock w 2 2 f32le dense matrix\nend\n".to_vec(),
            b"SPOPT1\nblock w 0 2 f64le dense matrix\nend\n".to_vec(),
            b"SPOPT1\nmeta a b".to_vec(),
        ];
        for bad in cases {
            assert!(matches!(Checkpoint::read_from(bad.as_slice()), Err(Error::FormatError(_))));
        }
    }

    #[test]
    fn model_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = MlpModel::init(4, &[6, 6], 2, Activation::Relu, &mut rng).unwrap();
        let ckpt = Checkpoint::from_model(&model);
        assert_eq!(ckpt.to_model().unwrap(), model);
        assert_eq!(ckpt.stored_params(), model.parameter_count());
    }
}
