//! Adaptive Gauss-Kronrod quadrature and fixed Gauss-Legendre rules.

// 7-point Gauss / 15-point Kronrod nodes on [-1, 1] (non-negative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

/// Gauss-Legendre nodes and weights mapped to [0, 1].
pub fn gauss_legendre_unit(n: usize) -> (&'static [f64], &'static [f64]) {
    const N2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];
    const W2: [f64; 2] = [0.5, 0.5];
    const N3: [f64; 3] = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
    const W3: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    const N4: [f64; 4] = [
        0.069_431_844_202_973_71,
        0.330_009_478_207_571_9,
        0.669_990_521_792_428_1,
        0.930_568_155_797_026_3,
    ];
    const W4: [f64; 4] = [
        0.173_927_422_568_726_9,
        0.326_072_577_431_273_1,
        0.326_072_577_431_273_1,
        0.173_927_422_568_726_9,
    ];
    match n {
        2 => (&N2, &W2),
        3 => (&N3, &W3),
        _ => (&N4, &W4),
    }
}

fn gk_vec<F: FnMut(f64, &mut [f64])>(
    f: &mut F,
    a: f64,
    b: f64,
    dim: usize,
    buf: &mut [f64],
) -> (Vec<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    for (k, (&x, &w)) in XGK.iter().zip(&WGK).enumerate() {
        let nodes: &[f64] = if x == 0.0 { &[0.0] } else { &[-1.0, 1.0] };
        for &sgn in nodes {
            f(c + sgn * h * x, buf);
            for d in 0..dim {
                kron[d] += w * buf[d];
                if k % 2 == 1 {
                    gauss[d] += WG[k / 2] * buf[d];
                }
            }
        }
    }
    let mut err = 0.0f64;
    for d in 0..dim {
        kron[d] *= h;
        gauss[d] *= h;
        err = err.max((kron[d] - gauss[d]).abs());
    }
    (kron, err)
}

/// Adaptive integral of a vector-valued function over `[a, b]`.
///
/// Every component is evaluated at the same nodes, so linear identities
/// between components (such as a fixed sum) carry over to the result.
pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    abs_tol: f64,
    rel_tol: f64,
) -> Vec<f64> {
    if b <= a || dim == 0 {
        return vec![0.0; dim];
    }
    let mut buf = vec![0.0; dim];
    let (first, err) = gk_vec(&mut f, a, b, dim, &mut buf);
    let mut intervals = vec![(a, b, first, err)];
    loop {
        let total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
        let scale = intervals
            .iter()
            .map(|iv| iv.2.iter().map(|v| v.abs()).fold(0.0, f64::max))
            .sum::<f64>();
        if total_err <= abs_tol.max(rel_tol * scale) || intervals.len() >= MAX_INTERVALS {
            break;
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (k, iv)| if iv.3 > best.1 { (k, iv.3) } else { best });
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (left, el) = gk_vec(&mut f, lo, mid, dim, &mut buf);
        let (right, er) = gk_vec(&mut f, mid, hi, dim, &mut buf);
        intervals.push((lo, mid, left, el));
        intervals.push((mid, hi, right, er));
    }
    // Sum in left-to-right order so the result does not depend on the
    // refinement history.
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = vec![0.0; dim];
    for iv in &intervals {
        for d in 0..dim {
            out[d] += iv.2[d];
        }
    }
    out
}

/// Adaptive integral of a scalar function over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    integrate_vec(|x, out| out[0] = f(x), a, b, 1, abs_tol, rel_tol)[0]
}
