//! Dense inner loops shared by every topology.

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators let the compiler vectorize without
    // reassociating a single sum.
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = W v` for row-major `W` with `out.len()` rows.
#[inline]
pub(crate) fn matvec(w: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = dot(row, v);
    }
}

/// `out += W^T v` for row-major `W` with `v.len()` rows.
#[inline]
pub(crate) fn matvec_t_acc(w: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (&vi, row) in v.iter().zip(w.chunks_exact(cols)) {
        if vi != 0.0 {
            axpy(out, vi, row);
        }
    }
}

/// `W += u v^T`
#[inline]
pub(crate) fn outer_acc(w: &mut [f64], u: &[f64], v: &[f64]) {
    let cols = v.len();
    for (&ui, row) in u.iter().zip(w.chunks_exact_mut(cols)) {
        if ui != 0.0 {
            axpy(row, ui, v);
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate activations from pre-activations laid out `[i; f; g; o]`, then the
/// new cell state, its squashed value and the hidden output.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn cell_activate(
    hidden: usize,
    pre: &[f64],
    c_prev: &[f64],
    act: &mut [f64],
    c: &mut [f64],
    tanh_c: &mut [f64],
    h: &mut [f64],
) {
    let (pi, rest) = pre.split_at(hidden);
    let (pf, rest) = rest.split_at(hidden);
    let (pg, po) = rest.split_at(hidden);
    let (ai, rest) = act.split_at_mut(hidden);
    let (af, rest) = rest.split_at_mut(hidden);
    let (ag, ao) = rest.split_at_mut(hidden);
    for j in 0..hidden {
        let i = sigmoid(pi[j]);
        let f = sigmoid(pf[j]);
        let g = pg[j].tanh();
        let o = sigmoid(po[j]);
        ai[j] = i;
        af[j] = f;
        ag[j] = g;
        ao[j] = o;
        let cj = f * c_prev[j] + i * g;
        let tc = cj.tanh();
        c[j] = cj;
        tanh_c[j] = tc;
        h[j] = o * tc;
    }
}

/// Reverse of [`cell_activate`]: given the gradient flowing into the new
/// hidden output (`dh`) and new cell state (`dc`), produce gate
/// pre-activation gradients and the gradient into the previous cell state.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn cell_backprop(
    hidden: usize,
    act: &[f64],
    tanh_c: &[f64],
    c_prev: &[f64],
    dh: &[f64],
    dc: &[f64],
    dz: &mut [f64],
    dc_prev: &mut [f64],
) {
    let (ai, rest) = act.split_at(hidden);
    let (af, rest) = rest.split_at(hidden);
    let (ag, ao) = rest.split_at(hidden);
    let (dzi, rest) = dz.split_at_mut(hidden);
    let (dzf, rest) = rest.split_at_mut(hidden);
    let (dzg, dzo) = rest.split_at_mut(hidden);
    for j in 0..hidden {
        let (i, f, g, o, tc) = (ai[j], af[j], ag[j], ao[j], tanh_c[j]);
        let d_o = dh[j] * tc;
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        dzi[j] = dct * g * i * (1.0 - i);
        dzf[j] = dct * c_prev[j] * f * (1.0 - f);
        dzg[j] = dct * i * (1.0 - g * g);
        dzo[j] = d_o * o * (1.0 - o);
        dc_prev[j] = dct * f;
    }
}
