//! Float helpers routed through `libm` so results do not depend on the
//! platform C library.

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub(crate) fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

/// `tanh` for the network activations.
///
/// Agrees with `libm::tanh` to a few ulp but has no branches on the value,
/// so batched loops vectorize. With `E = e^{2|x|} − 1` evaluated as
/// `2^k (e^r − 1) + (2^k − 1)` after range reduction `2|x| = k ln 2 + r`,
/// `tanh |x| = E / (E + 2)`; nothing cancels for small arguments.
#[inline]
pub(crate) fn tanh_fast(x: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    const INV_LN2: f64 = core::f64::consts::LOG2_E;
    // Round-to-nearest through the 1.5·2⁵² shifter: the low mantissa bits
    // of `t` then hold k.
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    // 1/(n+1)! for n = 13 down to 0: e^r − 1 = r Σ rⁿ/(n+1)!.
    const C: [f64; 14] = [
        1.0 / 87_178_291_200.0,
        1.0 / 6_227_020_800.0,
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
    ];
    let ax = f64::from_bits(x.to_bits() & !SIGN);
    let y = 2.0 * if ax > 20.0 { 20.0 } else { ax };
    let t = y * INV_LN2 + SHIFTER;
    let k = t - SHIFTER;
    let r = (y - k * LN2_HI) - k * LN2_LO;
    let mut p = C[0];
    for &c in &C[1..] {
        p = p * r + c;
    }
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    let e = scale * (r * p) + (scale - 1.0);
    let v = e / (e + 2.0);
    let v = f64::from_bits(v.to_bits() | (x.to_bits() & SIGN));
    // NaN compares false: `ax > 20` kept it out of `y`, so pass it through.
    if ax == ax {
        v
    } else {
        x
    }
}

const SIGN: u64 = 1 << 63;
