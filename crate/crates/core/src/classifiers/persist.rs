//! Binary model files.
//!
//! ```text
//! "CSNS" | version u16 | kind u8 (1 forest, 2 mlp) | payload len u64 | payload | crc32(payload) u32
//! ```
//!
//! All integers are little-endian. Floats are stored as their IEEE-754 bit
//! patterns, strings as a u32 byte length followed by UTF-8.

use super::forest::{ForestModel, TrainingMeta};
use super::mlp::MlpModel;
use super::tree::{FeatureSubsample, TreeNode};
use super::{argmax, ClassifierError};

pub const MAGIC: [u8; 4] = *b"CSNS";
pub const FORMAT_VERSION: u16 = 1;

const KIND_FOREST: u8 = 1;
const KIND_MLP: u8 = 2;
const HEADER_LEN: usize = 4 + 2 + 1 + 8;
const TAG_LEAF: u8 = 0;
const TAG_INTERNAL: u8 = 1;
/// Refuse to recurse deeper than this when decoding trees.
const MAX_DECODE_DEPTH: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Forest(ForestModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn class_names(&self) -> &[String] {
        match self {
            Model::Forest(m) => &m.class_names,
            Model::Mlp(m) => &m.class_names,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>), ClassifierError> {
        match self {
            Model::Forest(m) => m.predict(x),
            Model::Mlp(m) => m.predict(x),
        }
    }
}

impl From<ForestModel> for Model {
    fn from(m: ForestModel) -> Self {
        Model::Forest(m)
    }
}

impl From<MlpModel> for Model {
    fn from(m: MlpModel) -> Self {
        Model::Mlp(m)
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.u32(vs.len());
        vs.iter().for_each(|&v| self.f64(v));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn strs(&mut self, ss: &[String]) {
        self.u32(ss.len());
        ss.iter().for_each(|s| self.str(s));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> ClassifierError {
    ClassifierError::CorruptModel(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ClassifierError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("payload truncated"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, ClassifierError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize, ClassifierError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64, ClassifierError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ClassifierError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, ClassifierError> {
        let n = self.u32()?;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(corrupt("array length exceeds payload"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String, ClassifierError> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8"))
    }
    fn strs(&mut self) -> Result<Vec<String>, ClassifierError> {
        let n = self.u32()?;
        if n > self.buf.len() - self.pos {
            return Err(corrupt("string count exceeds payload"));
        }
        (0..n).map(|_| self.str()).collect()
    }
    fn finish(&self) -> Result<(), ClassifierError> {
        if self.pos != self.buf.len() {
            return Err(corrupt("trailing bytes after payload"));
        }
        Ok(())
    }
}

fn write_tree(w: &mut Writer, node: &TreeNode) {
    match node {
        TreeNode::Leaf {
            class_counts,
            predicted_class,
        } => {
            w.u8(TAG_LEAF);
            w.u32(*predicted_class);
            class_counts.iter().for_each(|&c| w.u64(c));
        }
        TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } => {
            w.u8(TAG_INTERNAL);
            w.u32(*feature);
            w.f64(*threshold);
            write_tree(w, left);
            write_tree(w, right);
        }
    }
}

struct TreeShape {
    n_classes: usize,
    n_features: usize,
    max_depth: usize,
}

fn read_tree(r: &mut Reader, shape: &TreeShape, depth: usize) -> Result<TreeNode, ClassifierError> {
    match r.u8()? {
        TAG_LEAF => {
            let predicted_class = r.u32()?;
            let class_counts = (0..shape.n_classes)
                .map(|_| r.u64())
                .collect::<Result<Vec<_>, _>>()?;
            if predicted_class != argmax(&class_counts) {
                return Err(corrupt("leaf prediction is not the argmax of its counts"));
            }
            Ok(TreeNode::Leaf {
                class_counts,
                predicted_class,
            })
        }
        TAG_INTERNAL => {
            if depth >= shape.max_depth || depth >= MAX_DECODE_DEPTH {
                return Err(corrupt("tree deeper than its max_depth"));
            }
            let feature = r.u32()?;
            let threshold = r.f64()?;
            if feature >= shape.n_features || !threshold.is_finite() {
                return Err(corrupt("invalid split"));
            }
            let left = Box::new(read_tree(r, shape, depth + 1)?);
            let right = Box::new(read_tree(r, shape, depth + 1)?);
            Ok(TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            })
        }
        tag => Err(corrupt(format!("unknown node tag {tag}"))),
    }
}

fn encode_forest(m: &ForestModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.u64(m.seed);
    w.u32(m.max_depth);
    w.u32(m.min_split);
    w.u32(match m.feature_subsample {
        FeatureSubsample::All => 0,
        FeatureSubsample::Count(k) => k,
    });
    w.u8(m.bootstrap as u8);
    w.u32(m.meta.n_features);
    w.u64(m.meta.n_rows as u64);
    w.strs(&m.class_names);
    w.u32(m.trees.len());
    m.trees.iter().for_each(|t| write_tree(&mut w, t));
    w.0
}

fn decode_forest(payload: &[u8]) -> Result<ForestModel, ClassifierError> {
    let mut r = Reader {
        buf: payload,
        pos: 0,
    };
    let seed = r.u64()?;
    let max_depth = r.u32()?;
    let min_split = r.u32()?;
    let feature_subsample = match r.u32()? {
        0 => FeatureSubsample::All,
        k => FeatureSubsample::Count(k),
    };
    let bootstrap = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(corrupt("invalid bootstrap flag")),
    };
    let n_features = r.u32()?;
    let n_rows = r.u64()? as usize;
    let class_names = r.strs()?;
    if class_names.len() < 2 {
        return Err(corrupt("fewer than two classes"));
    }
    let n_trees = r.u32()?;
    if n_trees == 0 {
        return Err(corrupt("forest has no trees"));
    }
    let shape = TreeShape {
        n_classes: class_names.len(),
        n_features,
        max_depth,
    };
    let mut trees = Vec::new();
    for _ in 0..n_trees {
        trees.push(read_tree(&mut r, &shape, 0)?);
    }
    r.finish()?;
    Ok(ForestModel {
        trees,
        max_depth,
        min_split,
        feature_subsample,
        bootstrap,
        class_names,
        seed,
        meta: TrainingMeta { n_features, n_rows },
    })
}

fn encode_mlp(m: &MlpModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.u64(m.seed);
    w.u32(m.n_inputs);
    w.u32(m.hidden);
    w.strs(&m.class_names);
    for v in [
        &m.norm_mean,
        &m.norm_std,
        &m.w1,
        &m.b1,
        &m.w2,
        &m.b2,
        &m.loss_history,
    ] {
        w.f64s(v);
    }
    w.0
}

fn decode_mlp(payload: &[u8]) -> Result<MlpModel, ClassifierError> {
    let mut r = Reader {
        buf: payload,
        pos: 0,
    };
    let seed = r.u64()?;
    let n_inputs = r.u32()?;
    let hidden = r.u32()?;
    let class_names = r.strs()?;
    let c = class_names.len();
    let m = MlpModel {
        seed,
        n_inputs,
        hidden,
        class_names,
        norm_mean: r.f64s()?,
        norm_std: r.f64s()?,
        w1: r.f64s()?,
        b1: r.f64s()?,
        w2: r.f64s()?,
        b2: r.f64s()?,
        loss_history: r.f64s()?,
    };
    r.finish()?;
    let shapes_ok = c >= 2
        && hidden >= 1
        && m.norm_mean.len() == n_inputs
        && m.norm_std.len() == n_inputs
        && m.w1.len() == n_inputs * hidden
        && m.b1.len() == hidden
        && m.w2.len() == hidden * c
        && m.b2.len() == c;
    if !shapes_ok {
        return Err(corrupt("inconsistent layer shapes"));
    }
    if m.norm_std.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(corrupt("normalization std must be positive"));
    }
    if [&m.norm_mean, &m.w1, &m.b1, &m.w2, &m.b2]
        .iter()
        .any(|v| v.iter().any(|x| !x.is_finite()))
    {
        return Err(corrupt("non-finite weight"));
    }
    Ok(m)
}

pub fn save_model(model: &Model) -> Vec<u8> {
    let (kind, payload) = match model {
        Model::Forest(m) => (KIND_FOREST, encode_forest(m)),
        Model::Mlp(m) => (KIND_MLP, encode_mlp(m)),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

pub fn load_model(bytes: &[u8]) -> Result<Model, ClassifierError> {
    if bytes.len() < HEADER_LEN + 4 || bytes[..4] != MAGIC {
        return Err(corrupt("missing CSNS header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version > FORMAT_VERSION {
        return Err(ClassifierError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if version == 0 {
        return Err(corrupt("format version 0"));
    }
    let kind = bytes[6];
    let len = u64::from_le_bytes(bytes[7..15].try_into().unwrap());
    if len != (bytes.len() - HEADER_LEN - 4) as u64 {
        return Err(corrupt("payload length does not match file size"));
    }
    let payload = &bytes[HEADER_LEN..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(payload) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    match kind {
        KIND_FOREST => decode_forest(payload).map(Model::Forest),
        KIND_MLP => decode_mlp(payload).map(Model::Mlp),
        k => Err(corrupt(format!("unknown model kind {k}"))),
    }
}
