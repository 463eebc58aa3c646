//! Versioned line-oriented text checkpoints. Floats are written with the
//! shortest decimal that parses back to the same bits, so save/load is exact.
//!
//! ```text
//! choicelab-checkpoint 1
//! model fusion user_id
//! users 2
//! user alice
//! ...
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use choicelab_core::baselines::{rf_predict, BaselineInputs, FeatureSource, Forest, MlpClassifier, Tree, TreeNode};
use choicelab_core::data::encode_features;
use choicelab_core::harness::ModelKind;
use choicelab_core::nnkit::{Activation, Dense, EmbeddingTable, Matrix, Mlp, Standardizer};
use choicelab_core::prospect::{SVParams, N_PARAMS};
use choicelab_core::repr::{FusionModel, RepKind, UserSource};
use choicelab_core::sampler::{BehavioralFit, FitMethod};
use choicelab_core::{ChoiceRecord, UserId};

use crate::IoError;

pub const MAGIC: &str = "choicelab-checkpoint";
pub const VERSION: u32 = 1;

/// Per-user feature tables a baseline needs at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineContext {
    pub inputs: BaselineInputs,
    pub user_ids: Vec<UserId>,
    pub demographics: Option<Matrix>,
    pub centroids: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    /// Representation model; row `i` of the user source belongs to `user_ids[i]`.
    Fusion { user_ids: Vec<UserId>, model: FusionModel },
    Mlp { context: BaselineContext, model: MlpClassifier },
    Forest { context: BaselineContext, forest: Forest },
    /// Point estimates only; chain diagnostics live in their own CSV.
    Behavioral(BehavioralFit),
}

impl Checkpoint {
    /// Model kind and input variant, as used in reports.
    pub fn label(&self) -> (ModelKind, String) {
        match self {
            Checkpoint::Fusion { model, .. } => (
                match model.kind() {
                    RepKind::UserId => ModelKind::Beh2vecId,
                    RepKind::Demographics => ModelKind::Beh2vecDemo,
                    RepKind::Text => ModelKind::Beh2vecText,
                },
                String::new(),
            ),
            Checkpoint::Mlp { context, .. } => (ModelKind::Mlp, context.inputs.name().into()),
            Checkpoint::Forest { context, .. } => (ModelKind::Rf, context.inputs.name().into()),
            Checkpoint::Behavioral(fit) => (
                match fit.method {
                    FitMethod::Hmc => ModelKind::BehavioralHmc,
                    FitMethod::Map => ModelKind::BehavioralMap,
                },
                String::new(),
            ),
        }
    }

    /// Probability of option 1 per record; `None` where the model needs a
    /// user it was not trained with. The behavioral model falls back to the
    /// population parameters instead.
    pub fn predict(&self, records: &[ChoiceRecord]) -> Vec<Option<f64>> {
        let index = |ids: &[UserId]| -> BTreeMap<UserId, usize> {
            ids.iter().cloned().enumerate().map(|(i, u)| (u, i)).collect()
        };
        match self {
            Checkpoint::Fusion { user_ids, model } => {
                let idx = index(user_ids);
                records
                    .iter()
                    .map(|r| {
                        let user = *idx.get(&r.user_id)?;
                        model.forward(user, &encode_features(&r.scenario)).ok()
                    })
                    .collect()
            }
            Checkpoint::Mlp { context, model } => {
                let idx = index(&context.user_ids);
                let source = context.source(&idx);
                records.iter().map(|r| model.try_predict(&source.row(r).ok()?).ok()).collect()
            }
            Checkpoint::Forest { context, forest } => {
                let idx = index(&context.user_ids);
                let source = context.source(&idx);
                records.iter().map(|r| rf_predict(forest, &source.row(r).ok()?).ok()).collect()
            }
            Checkpoint::Behavioral(fit) => records.iter().map(|r| Some(fit.predict(r))).collect(),
        }
    }
}

impl BaselineContext {
    pub fn source<'a>(&'a self, index: &'a BTreeMap<UserId, usize>) -> FeatureSource<'a> {
        let mut s = FeatureSource::new(self.inputs, index);
        s.demographics = self.demographics.as_ref();
        s.centroids = self.centroids.as_ref();
        s
    }
}

struct Out<W: Write> {
    w: W,
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl<W: Write> Out<W> {
    fn line(&mut self, key: &str, rest: &str) -> std::io::Result<()> {
        if rest.is_empty() {
            writeln!(self.w, "{key}")
        } else {
            writeln!(self.w, "{key} {rest}")
        }
    }

    fn users(&mut self, ids: &[UserId]) -> std::io::Result<()> {
        self.line("users", &ids.len().to_string())?;
        for id in ids {
            self.line("user", id.as_str())?;
        }
        Ok(())
    }

    fn matrix(&mut self, m: &Matrix) -> std::io::Result<()> {
        self.line("matrix", &format!("{} {}", m.rows(), m.cols()))?;
        for r in 0..m.rows() {
            self.line("row", &join(m.row(r)))?;
        }
        Ok(())
    }

    fn opt_matrix(&mut self, name: &str, m: Option<&Matrix>) -> std::io::Result<()> {
        match m {
            None => self.line(name, "none"),
            Some(m) => {
                self.line(name, "some")?;
                self.matrix(m)
            }
        }
    }

    fn mlp(&mut self, net: &Mlp) -> std::io::Result<()> {
        self.line("mlp", &net.layers().len().to_string())?;
        for layer in net.layers() {
            self.line("dense", layer.activation().name())?;
            self.matrix(layer.weights())?;
            self.line("bias", &join(layer.bias()))?;
        }
        Ok(())
    }

    fn scaler(&mut self, s: &Standardizer) -> std::io::Result<()> {
        self.line("scaler", &s.dim().to_string())?;
        self.line("mean", &join(s.mean()))?;
        self.line("scale", &join(s.scale()))
    }

    fn context(&mut self, c: &BaselineContext) -> std::io::Result<()> {
        self.users(&c.user_ids)?;
        self.opt_matrix("demographics", c.demographics.as_ref())?;
        self.opt_matrix("centroids", c.centroids.as_ref())
    }
}

pub fn write_checkpoint<W: Write>(writer: W, ckpt: &Checkpoint) -> std::io::Result<()> {
    let mut o = Out { w: writer };
    o.line(MAGIC, &VERSION.to_string())?;
    match ckpt {
        Checkpoint::Fusion { user_ids, model } => {
            o.line("model", &format!("fusion {}", model.kind().name()))?;
            o.users(user_ids)?;
            match model.source() {
                UserSource::Embedding(t) => {
                    o.line("source", "embedding")?;
                    o.matrix(t.matrix())?;
                }
                UserSource::Fixed(m) => {
                    o.line("source", "fixed")?;
                    o.matrix(m)?;
                }
            }
            o.mlp(model.encoder())?;
            o.mlp(model.trunk())?;
            o.scaler(model.scaler())?;
        }
        Checkpoint::Mlp { context, model } => {
            o.line("model", &format!("mlp {}", context.inputs.name()))?;
            o.context(context)?;
            o.mlp(model.net())?;
            o.scaler(model.scaler())?;
        }
        Checkpoint::Forest { context, forest } => {
            o.line("model", &format!("forest {}", context.inputs.name()))?;
            o.context(context)?;
            o.line("forest", &format!("{} {}", forest.n_features(), forest.trees().len()))?;
            for tree in forest.trees() {
                o.line("tree", &tree.nodes().len().to_string())?;
                for node in tree.nodes() {
                    match *node {
                        TreeNode::Split { feature, threshold, right } => {
                            o.line("split", &format!("{feature} {threshold} {right}"))?
                        }
                        TreeNode::Leaf { probs } => o.line("leaf", &join(probs))?,
                    }
                }
            }
        }
        Checkpoint::Behavioral(fit) => {
            o.line("model", &format!("behavioral {}", fit.method.name()))?;
            o.line("population", &join(fit.population.as_array()))?;
            o.line("users", &fit.user_ids.len().to_string())?;
            for (id, p) in fit.user_ids.iter().zip(&fit.params) {
                o.line("params", &format!("{} {}", join(p.as_array()), id))?;
            }
        }
    }
    o.line("end", "")?;
    o.w.flush()
}

struct In<R: BufRead> {
    lines: std::io::Lines<R>,
    lineno: usize,
}

impl<R: BufRead> In<R> {
    fn err(&self, message: impl Into<String>) -> IoError {
        IoError::Checkpoint { line: self.lineno, message: message.into() }
    }

    /// Next line, which must start with `key`; returns the rest.
    fn expect(&mut self, key: &str) -> Result<String, IoError> {
        let line = match self.lines.next() {
            Some(Ok(l)) => l,
            Some(Err(e)) => return Err(self.err(e.to_string())),
            None => return Err(self.err(format!("unexpected end of file, expected {key:?}"))),
        };
        self.lineno += 1;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.to_string()),
            None if line == key => Ok(String::new()),
            _ => Err(self.err(format!("expected {key:?}, found {line:?}"))),
        }
    }

    fn parse<T: FromStr>(&self, s: &str) -> Result<T, IoError> {
        s.parse().map_err(|_| self.err(format!("cannot parse {s:?}")))
    }

    fn values<T: FromStr>(&self, rest: &str, n: Option<usize>) -> Result<Vec<T>, IoError> {
        let v = rest.split_whitespace().map(|s| self.parse(s)).collect::<Result<Vec<T>, _>>()?;
        match n {
            Some(n) if v.len() != n => Err(self.err(format!("expected {n} values, found {}", v.len()))),
            _ => Ok(v),
        }
    }

    fn pair(&mut self, key: &str) -> Result<(usize, usize), IoError> {
        let rest = self.expect(key)?;
        let v: Vec<usize> = self.values(&rest, Some(2))?;
        Ok((v[0], v[1]))
    }

    fn count(&mut self, key: &str) -> Result<usize, IoError> {
        let rest = self.expect(key)?;
        self.parse(&rest)
    }

    fn users(&mut self) -> Result<Vec<UserId>, IoError> {
        let n = self.count("users")?;
        (0..n).map(|_| self.expect("user").map(|s| UserId(s))).collect()
    }

    fn matrix(&mut self) -> Result<Matrix, IoError> {
        let (rows, cols) = self.pair("matrix")?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let rest = self.expect("row")?;
            data.extend(self.values::<f64>(&rest, Some(cols))?);
        }
        Matrix::from_vec(rows, cols, data).map_err(|e| self.err(e.to_string()))
    }

    fn opt_matrix(&mut self, key: &str) -> Result<Option<Matrix>, IoError> {
        match self.expect(key)?.as_str() {
            "none" => Ok(None),
            "some" => self.matrix().map(Some),
            other => Err(self.err(format!("expected none/some, found {other:?}"))),
        }
    }

    fn mlp(&mut self) -> Result<Mlp, IoError> {
        let n = self.count("mlp")?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let name = self.expect("dense")?;
            let act = Activation::from_name(&name).ok_or_else(|| self.err(format!("unknown activation {name:?}")))?;
            let weights = self.matrix()?;
            let rest = self.expect("bias")?;
            let bias = self.values(&rest, Some(weights.rows()))?;
            layers.push(Dense::from_parts(weights, bias, act).map_err(|e| self.err(e.to_string()))?);
        }
        Mlp::from_layers(layers).map_err(|e| self.err(e.to_string()))
    }

    fn scaler(&mut self) -> Result<Standardizer, IoError> {
        let dim = self.count("scaler")?;
        let rest = self.expect("mean")?;
        let mean = self.values(&rest, Some(dim))?;
        let rest = self.expect("scale")?;
        let scale = self.values(&rest, Some(dim))?;
        Standardizer::from_parts(mean, scale).map_err(|e| self.err(e.to_string()))
    }

    fn context(&mut self, inputs: BaselineInputs) -> Result<BaselineContext, IoError> {
        let user_ids = self.users()?;
        let demographics = self.opt_matrix("demographics")?;
        let centroids = self.opt_matrix("centroids")?;
        Ok(BaselineContext { inputs, user_ids, demographics, centroids })
    }

    fn sv(&self, v: &[f64]) -> SVParams {
        SVParams { alpha_gain: v[0], alpha_loss: v[1], beta_self: v[2], beta_other: v[3] }
    }
}

pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<Checkpoint, IoError> {
    let mut i = In { lines: reader.lines(), lineno: 0 };
    let version: u32 = {
        let rest = i.expect(MAGIC)?;
        i.parse(&rest)?
    };
    if version != VERSION {
        return Err(i.err(format!("unsupported checkpoint version {version}")));
    }
    let model = i.expect("model")?;
    let (family, variant) = model.split_once(' ').ok_or_else(|| i.err("model line needs a family and variant"))?;
    let baseline_inputs =
        |i: &In<R>| BaselineInputs::from_name(variant).ok_or_else(|| i.err(format!("unknown inputs {variant:?}")));
    let ckpt = match family {
        "fusion" => {
            let kind = RepKind::from_name(variant).ok_or_else(|| i.err(format!("unknown representation {variant:?}")))?;
            let user_ids = i.users()?;
            let source = match i.expect("source")?.as_str() {
                "embedding" => UserSource::Embedding(EmbeddingTable::from_matrix(i.matrix()?)),
                "fixed" => UserSource::Fixed(i.matrix()?),
                other => return Err(i.err(format!("unknown source {other:?}"))),
            };
            let encoder = i.mlp()?;
            let trunk = i.mlp()?;
            let scaler = i.scaler()?;
            if source.n_users() != user_ids.len() {
                return Err(i.err("user count does not match the user source"));
            }
            let model =
                FusionModel::from_parts(kind, source, encoder, trunk, scaler).map_err(|e| i.err(e.to_string()))?;
            Checkpoint::Fusion { user_ids, model }
        }
        "mlp" => {
            let context = i.context(baseline_inputs(&i)?)?;
            let net = i.mlp()?;
            let scaler = i.scaler()?;
            let model = MlpClassifier::new(net, scaler).map_err(|e| i.err(e.to_string()))?;
            Checkpoint::Mlp { context, model }
        }
        "forest" => {
            let context = i.context(baseline_inputs(&i)?)?;
            let (n_features, n_trees) = i.pair("forest")?;
            let mut trees = Vec::with_capacity(n_trees);
            for _ in 0..n_trees {
                let n = i.count("tree")?;
                let mut nodes = Vec::with_capacity(n);
                for _ in 0..n {
                    let line = i.lines.next().transpose().map_err(|e| i.err(e.to_string()))?.unwrap_or_default();
                    i.lineno += 1;
                    let (key, rest) = line.split_once(' ').unwrap_or((&line, ""));
                    nodes.push(match key {
                        "split" => {
                            let f: Vec<&str> = rest.split(' ').collect();
                            if f.len() != 3 {
                                return Err(i.err("split needs feature, threshold, right"));
                            }
                            TreeNode::Split { feature: i.parse(f[0])?, threshold: i.parse(f[1])?, right: i.parse(f[2])? }
                        }
                        "leaf" => {
                            let p: Vec<f64> = i.values(rest, Some(2))?;
                            TreeNode::Leaf { probs: [p[0], p[1]] }
                        }
                        _ => return Err(i.err(format!("expected split or leaf, found {line:?}"))),
                    });
                }
                trees.push(Tree::from_nodes(nodes, n_features).map_err(|e| i.err(e.to_string()))?);
            }
            let forest = Forest::from_trees(n_features, trees).map_err(|e| i.err(e.to_string()))?;
            Checkpoint::Forest { context, forest }
        }
        "behavioral" => {
            let method = FitMethod::from_name(variant).ok_or_else(|| i.err(format!("unknown method {variant:?}")))?;
            let rest = i.expect("population")?;
            let population = i.sv(&i.values::<f64>(&rest, Some(N_PARAMS))?);
            let n = i.count("users")?;
            let mut user_ids = Vec::with_capacity(n);
            let mut params = Vec::with_capacity(n);
            for _ in 0..n {
                let rest = i.expect("params")?;
                let mut it = rest.splitn(N_PARAMS + 1, ' ');
                let mut v = [0.0; N_PARAMS];
                for slot in v.iter_mut() {
                    *slot = i.parse(it.next().unwrap_or(""))?;
                }
                let id = it.next().filter(|s| !s.is_empty()).ok_or_else(|| i.err("params line lacks a user id"))?;
                user_ids.push(UserId::from(id));
                params.push(i.sv(&v));
            }
            Checkpoint::Behavioral(BehavioralFit::new(method, user_ids, params, population))
        }
        other => return Err(i.err(format!("unknown model family {other:?}"))),
    };
    i.expect("end")?;
    Ok(ckpt)
}

pub fn save(path: &std::path::Path, ckpt: &Checkpoint) -> Result<(), IoError> {
    let f = std::fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    write_checkpoint(std::io::BufWriter::new(f), ckpt).map_err(|e| IoError::io(path, e))
}

pub fn load(path: &std::path::Path) -> Result<Checkpoint, IoError> {
    let f = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use choicelab_core::repr::Architecture;
    use rand::SeedableRng;

    fn round_trip(c: &Checkpoint) -> Checkpoint {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, c).unwrap();
        read_checkpoint(&buf[..]).unwrap()
    }

    #[test]
    fn fusion_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let model = FusionModel::beh2vec(3, &Architecture::small(4), Standardizer::identity(6), &mut rng).unwrap();
        let c = Checkpoint::Fusion { user_ids: vec!["a b".into(), "c".into(), "d".into()], model };
        assert_eq!(round_trip(&c), c);
    }

    #[test]
    fn behavioral_exact() {
        let p = SVParams { alpha_gain: 0.1 + 0.2, alpha_loss: 1e-300, beta_self: -3.25, beta_other: 7.0 / 3.0 };
        let fit = BehavioralFit::new(FitMethod::Map, vec!["user 1".into()], vec![p], p);
        match round_trip(&Checkpoint::Behavioral(fit.clone())) {
            Checkpoint::Behavioral(b) => {
                assert_eq!(b.user_ids, fit.user_ids);
                assert_eq!(b.params, fit.params);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_checkpoint(&b"choicelab-checkpoint 2\n"[..]).is_err());
        assert!(read_checkpoint(&b"hello\n"[..]).is_err());
        let err = read_checkpoint(&b"choicelab-checkpoint 1\nmodel behavioral map\npopulation 1 2\n"[..]).unwrap_err();
        assert!(matches!(err, IoError::Checkpoint { line: 3, .. }));
    }
}
