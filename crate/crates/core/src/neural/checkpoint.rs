//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  "QNCK"            4 bytes
//! version u32              currently 1
//! kind    u8               0 = QuadNet, 1 = QuadNet-μ
//! mode_input u8            0 = components, 1 = magnitude
//! r, d_field  u64 each
//! normalizer: five f64 arrays (coord_lo, coord_hi, param_lo, param_hi,
//!             mode_scale), each as u64 length + values
//! n_nets u8                3 or 4, order branch, [param branch], trunk, combiner
//! per net: u64 layer count, u64 sizes, u8 output activation,
//!          u64 parameter count, f64 parameters (weights row-major, biases)
//! ```
//!
//! Reals are stored as raw IEEE-754 bits, so reloading is bit-exact.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::neural::mlp::{Activation, Mlp};
use crate::neural::model::{CorrectionModel, ModeInput, Normalizer, OperatorNet, QuadNetModel, QuadNetMuModel};

const MAGIC: &[u8; 4] = b"QNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A decoded checkpoint of either model kind.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyCorrectionModel {
    QuadNet(QuadNetModel),
    QuadNetMu(QuadNetMuModel),
}

impl AnyCorrectionModel {
    pub fn net(&self) -> &OperatorNet {
        match self {
            AnyCorrectionModel::QuadNet(m) => m.net(),
            AnyCorrectionModel::QuadNetMu(m) => m.net(),
        }
    }
}

impl CorrectionModel for AnyCorrectionModel {
    fn net(&self) -> &OperatorNet {
        AnyCorrectionModel::net(self)
    }

    fn net_mut(&mut self) -> &mut OperatorNet {
        match self {
            AnyCorrectionModel::QuadNet(m) => m.net_mut(),
            AnyCorrectionModel::QuadNetMu(m) => m.net_mut(),
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn reals(&mut self, v: &[f64]) {
        self.u64(v.len());
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn mlp(&mut self, m: &Mlp) {
        self.u64(m.layer_sizes().len());
        for &s in m.layer_sizes() {
            self.u64(s);
        }
        self.u8(m.output_activation().tag());
        let mut p = Vec::with_capacity(m.param_count());
        m.write_params(&mut p);
        self.reals(&p);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: &str) -> Error {
    Error::Corrupt(format!("checkpoint: {}", msg))
}

/// Sizes beyond this are treated as corruption rather than allocated.
const MAX_LEN: u64 = 1 << 32;

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if v > MAX_LEN {
            return Err(corrupt("implausible length"));
        }
        Ok(v as usize)
    }
    fn reals(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()?;
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn mlp(&mut self) -> Result<Mlp> {
        let n = self.u64()?;
        if !(2..=1024).contains(&n) {
            return Err(corrupt("bad layer count"));
        }
        let mut sizes = Vec::with_capacity(n);
        for _ in 0..n {
            sizes.push(self.u64()?);
        }
        let act = Activation::from_tag(self.u8()?).ok_or_else(|| corrupt("unknown activation tag"))?;
        let params = self.reals()?;
        let mut weights = Vec::with_capacity(n - 1);
        let mut biases = Vec::with_capacity(n - 1);
        let mut k = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let nw = fan_in.checked_mul(fan_out).ok_or_else(|| corrupt("layer too large"))?;
            if k + nw + fan_out > params.len() {
                return Err(corrupt("parameter count does not match layer sizes"));
            }
            weights.push(DenseMatrix::new(fan_out, fan_in, params[k..k + nw].to_vec()).map_err(|e| corrupt(&format!("{}", e)))?);
            k += nw;
            biases.push(params[k..k + fan_out].to_vec());
            k += fan_out;
        }
        if k != params.len() {
            return Err(corrupt("parameter count does not match layer sizes"));
        }
        Mlp::from_parts(weights, biases, act).map_err(|e| corrupt(&format!("{}", e)))
    }
}

pub fn encode_checkpoint<M: CorrectionModel + ?Sized>(model: &M) -> Vec<u8> {
    let net = model.net();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    w.u8(u8::from(net.param_branch().is_some()));
    w.u8(net.mode_input().tag());
    w.u64(net.r());
    w.u64(net.d_field());
    let nz = net.normalizer();
    for v in [&nz.coord_lo, &nz.coord_hi, &nz.param_lo, &nz.param_hi, &nz.mode_scale] {
        w.reals(v);
    }
    let nets: Vec<&Mlp> = net.nets().collect();
    w.u8(nets.len() as u8);
    for m in nets {
        w.mlp(m);
    }
    w.0
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<AnyCorrectionModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(&format!("unsupported version {}", version)));
    }
    let kind = r.u8()?;
    if kind > 1 {
        return Err(corrupt("unknown model kind"));
    }
    let mode_input = ModeInput::from_tag(r.u8()?).ok_or_else(|| corrupt("unknown mode input tag"))?;
    let rr = r.u64()?;
    let d_field = r.u64()?;
    let normalizer = Normalizer {
        coord_lo: r.reals()?,
        coord_hi: r.reals()?,
        param_lo: r.reals()?,
        param_hi: r.reals()?,
        mode_scale: r.reals()?,
    };
    let n_nets = r.u8()?;
    if n_nets != 3 + kind {
        return Err(corrupt("network count does not match the model kind"));
    }
    let branch = r.mlp()?;
    let param_branch = if kind == 1 { Some(r.mlp()?) } else { None };
    let trunk = r.mlp()?;
    let combiner = r.mlp()?;
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    let net = OperatorNet::from_parts(rr, d_field, mode_input, branch, param_branch, trunk, combiner, normalizer)
        .map_err(|e| corrupt(&format!("{}", e)))?;
    Ok(if kind == 1 {
        AnyCorrectionModel::QuadNetMu(QuadNetMuModel::from_net(net)?)
    } else {
        AnyCorrectionModel::QuadNet(QuadNetModel::from_net(net)?)
    })
}
