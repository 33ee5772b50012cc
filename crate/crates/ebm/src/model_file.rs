//! Binary model container.
//!
//! ```text
//! "MDLR"  version:u32  layer_count:u32
//! per layer: n_v:u64 n_h:u64 activation:u8 w[n_v·n_h] b_v[n_v] b_h[n_h]
//! sections until EOF: tag:[u8; 4] length:u64 payload[length]
//! ```
//!
//! Integers and `f64` values are little-endian; matrices are row-major.
//! Section tags: `KIND` (model kind name), `LABL` (label units, u64),
//! `GENW` (generative weights of the belief layers), `CHNS` (persistent chain
//! states), `MODL` (modal dims and scales), `DNSE` (denoise rate, f64).
//! Matrices inside sections are `rows:u64 cols:u64` followed by the values.

use std::path::Path;

use ebm_core::autoencoder::AeModel;
use ebm_core::dbm::{DbmModel, DbmState};
use ebm_core::dbn::{DbnModel, SigmoidBeliefLayer};
use ebm_core::dnn::LayerStack;
use ebm_core::multimodal::{BimodalAe, ModalScale};
use ebm_core::rbm::RbmLayer;
use ebm_core::{ActivationKind, Matrix};

use crate::error::{read_file, write_file, IoError, IoResult};

pub const MAGIC: &[u8; 4] = b"MDLR";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Rbm { rbm: RbmLayer, head: RbmLayer },
    Dnn(LayerStack),
    Dbn(DbnModel),
    Ae(AeModel),
    Dbm(DbmModel),
    Bimodal(BimodalAe),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Rbm { .. } => "rbm",
            SavedModel::Dnn(_) => "dnn",
            SavedModel::Dbn(_) => "dbn",
            SavedModel::Ae(_) => "dae",
            SavedModel::Dbm(_) => "dbm",
            SavedModel::Bimodal(_) => "bimodal",
        }
    }
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    put_f64s(out, m.as_slice());
}

fn put_layer(out: &mut Vec<u8>, l: &RbmLayer) {
    put_u64(out, l.n_visible());
    put_u64(out, l.n_hidden());
    out.push(l.activation.tag());
    put_f64s(out, l.w.as_slice());
    put_f64s(out, l.b_v.as_slice());
    put_f64s(out, l.b_h.as_slice());
}

fn put_section(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    put_u64(out, payload.len());
    out.extend_from_slice(payload);
}

pub fn encode(model: &SavedModel) -> Vec<u8> {
    let mut sections: Vec<(&[u8; 4], Vec<u8>)> = vec![(b"KIND", model.kind().as_bytes().to_vec())];
    let layers: Vec<RbmLayer> = match model {
        SavedModel::Rbm { rbm, head } => vec![rbm.clone(), head.clone()],
        SavedModel::Dnn(stack) => stack.layers.clone(),
        SavedModel::Dbn(dbn) => {
            let mut gen = Vec::new();
            put_u64(&mut gen, dbn.lower.len());
            for l in &dbn.lower {
                put_matrix(&mut gen, &l.generative);
            }
            sections.push((b"LABL", (dbn.label_dim as u64).to_le_bytes().to_vec()));
            sections.push((b"GENW", gen));
            dbn.lower
                .iter()
                .map(|l| RbmLayer {
                    w: l.recognition.clone(),
                    b_v: l.generative_bias.clone(),
                    b_h: l.recognition_bias.clone(),
                    activation: ActivationKind::Sigmoid,
                    index: 0,
                })
                .chain(std::iter::once(dbn.top.clone()))
                .collect()
        }
        SavedModel::Ae(ae) => {
            sections.push((b"DNSE", ae.denoise_rate.to_le_bytes().to_vec()));
            ae.stack.layers.clone()
        }
        SavedModel::Dbm(dbm) => {
            sections.push((b"LABL", (dbm.label_dim as u64).to_le_bytes().to_vec()));
            if let Some(c) = &dbm.chains {
                let mut p = Vec::new();
                put_u64(&mut p, c.hidden.len() + 2);
                put_matrix(&mut p, &c.visible);
                for h in &c.hidden {
                    put_matrix(&mut p, h);
                }
                put_matrix(&mut p, &c.labels);
                sections.push((b"CHNS", p));
            }
            dbm.layers.clone()
        }
        SavedModel::Bimodal(b) => {
            let mut p = Vec::new();
            put_u64(&mut p, b.dim_a);
            put_u64(&mut p, b.dim_b);
            put_f64s(
                &mut p,
                &[b.scale_a.min, b.scale_a.max, b.scale_b.min, b.scale_b.max],
            );
            sections.push((b"DNSE", b.ae.denoise_rate.to_le_bytes().to_vec()));
            sections.push((b"MODL", p));
            b.ae.stack.layers.clone()
        }
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in &layers {
        put_layer(&mut out, l);
    }
    for (tag, payload) in &sections {
        put_section(&mut out, tag, payload);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> IoResult<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(IoError::format(self.path, "truncated model file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> IoResult<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> IoResult<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| IoError::format(self.path, "size does not fit in memory"))
    }

    fn f64s(&mut self, n: usize) -> IoResult<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| IoError::format(self.path, "size overflow"))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn matrix_of(&mut self, rows: usize, cols: usize) -> IoResult<Matrix> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| IoError::format(self.path, "size overflow"))?;
        Ok(Matrix::from_vec(rows, cols, self.f64s(n)?)?)
    }

    fn matrix(&mut self) -> IoResult<Matrix> {
        let (r, c) = (self.u64()?, self.u64()?);
        self.matrix_of(r, c)
    }

    fn layer(&mut self, index: usize) -> IoResult<RbmLayer> {
        let (nv, nh) = (self.u64()?, self.u64()?);
        let tag = self.take(1)?[0];
        let activation = ActivationKind::from_tag(tag)?;
        let w = self.matrix_of(nv, nh)?;
        let b_v = self.matrix_of(1, nv)?;
        let b_h = self.matrix_of(1, nh)?;
        Ok(RbmLayer::new(w, b_v, b_h, activation, index)?)
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[derive(Default)]
struct Sections<'a> {
    kind: Option<&'a [u8]>,
    labl: Option<&'a [u8]>,
    genw: Option<&'a [u8]>,
    chns: Option<&'a [u8]>,
    modl: Option<&'a [u8]>,
    dnse: Option<&'a [u8]>,
}

pub fn decode<'a>(bytes: &'a [u8], path: &'a Path) -> IoResult<SavedModel> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        path,
    };
    if c.take(4)? != MAGIC {
        return Err(IoError::format(path, "not a model file (bad magic)"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(IoError::format(
            path,
            format!("unsupported version {version}"),
        ));
    }
    let count = c.u32()? as usize;
    let mut layers = Vec::new();
    for i in 0..count {
        layers.push(c.layer(i + 1)?);
    }
    let mut s = Sections::default();
    while !c.done() {
        let tag: [u8; 4] = c.take(4)?.try_into().expect("4 bytes");
        let len = c.u64()?;
        let payload = c.take(len)?;
        match &tag {
            b"KIND" => s.kind = Some(payload),
            b"LABL" => s.labl = Some(payload),
            b"GENW" => s.genw = Some(payload),
            b"CHNS" => s.chns = Some(payload),
            b"MODL" => s.modl = Some(payload),
            b"DNSE" => s.dnse = Some(payload),
            _ => {} // unknown sections are skipped
        }
    }
    let sub = |b: &'a [u8]| Cursor {
        bytes: b,
        pos: 0,
        path,
    };
    let need = |x: Option<&'a [u8]>, tag: &str| {
        x.ok_or_else(|| IoError::format(path, format!("missing {tag} section")))
    };
    let kind = std::str::from_utf8(need(s.kind, "KIND")?)
        .map_err(|_| IoError::format(path, "KIND is not text"))?;
    let core = |e: ebm_core::Error| IoError::Core(e);
    Ok(match kind {
        "rbm" => {
            let [rbm, head]: [RbmLayer; 2] = layers
                .try_into()
                .map_err(|_| IoError::format(path, "an rbm file holds exactly two layers"))?;
            SavedModel::Rbm { rbm, head }
        }
        "dnn" => SavedModel::Dnn(LayerStack::new(layers).map_err(core)?),
        "dbn" => {
            let label_dim = sub(need(s.labl, "LABL")?).u64()?;
            let mut g = sub(need(s.genw, "GENW")?);
            let n = g.u64()?;
            if n + 1 != layers.len() {
                return Err(IoError::format(path, "GENW does not match the layer count"));
            }
            let top = layers.pop().expect("at least one layer");
            let lower = layers
                .into_iter()
                .map(|l| {
                    Ok(SigmoidBeliefLayer {
                        recognition: l.w,
                        recognition_bias: l.b_h,
                        generative: g.matrix()?,
                        generative_bias: l.b_v,
                    })
                })
                .collect::<IoResult<Vec<_>>>()?;
            SavedModel::Dbn(DbnModel::new(lower, top, label_dim).map_err(core)?)
        }
        "dae" => {
            let rate = sub(need(s.dnse, "DNSE")?).f64s(1)?[0];
            SavedModel::Ae(
                AeModel::new(LayerStack::new(layers).map_err(core)?, rate).map_err(core)?,
            )
        }
        "dbm" => {
            let label_dim = sub(need(s.labl, "LABL")?).u64()?;
            let mut model = DbmModel::new(layers, label_dim).map_err(core)?;
            if let Some(p) = s.chns {
                let mut cc = sub(p);
                let n = cc.u64()?;
                if n != model.depth() + 2 {
                    return Err(IoError::format(path, "CHNS does not match the layer count"));
                }
                let visible = cc.matrix()?;
                let hidden = (0..model.depth())
                    .map(|_| cc.matrix())
                    .collect::<IoResult<Vec<_>>>()?;
                let labels = cc.matrix()?;
                model.chains = Some(DbmState {
                    visible,
                    hidden,
                    labels,
                });
            }
            SavedModel::Dbm(model)
        }
        "bimodal" => {
            let rate = sub(need(s.dnse, "DNSE")?).f64s(1)?[0];
            let mut m = sub(need(s.modl, "MODL")?);
            let (dim_a, dim_b) = (m.u64()?, m.u64()?);
            let sc = m.f64s(4)?;
            let ae = AeModel::new(LayerStack::new(layers).map_err(core)?, rate).map_err(core)?;
            if ae.input_dim() != dim_a + dim_b {
                return Err(IoError::format(
                    path,
                    "modal dims do not match the input layer",
                ));
            }
            SavedModel::Bimodal(BimodalAe {
                ae,
                dim_a,
                dim_b,
                scale_a: ModalScale {
                    min: sc[0],
                    max: sc[1],
                },
                scale_b: ModalScale {
                    min: sc[2],
                    max: sc[3],
                },
            })
        }
        other => {
            return Err(IoError::format(
                path,
                format!("unknown model kind '{other}'"),
            ))
        }
    })
}

pub fn save(path: &Path, model: &SavedModel) -> IoResult<()> {
    write_file(path, &encode(model))
}

pub fn load(path: &Path) -> IoResult<SavedModel> {
    decode(&read_file(path)?, path)
}
