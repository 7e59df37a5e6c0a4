//! Inner loops shared by the forward ops and their backward passes.
//! Everything here works on flat `f32` slices; shape validation happens in
//! the callers.

/// Numpy-style broadcast of two shapes. `None` if incompatible.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return None;
        };
    }
    Some(out)
}

/// Row-major strides, with 0 on axes of extent 1 so the index stays put
/// while the output iterates (the broadcast trick).
fn broadcast_strides(shape: &[usize], out_rank: usize) -> Vec<usize> {
    let mut strides = vec![0usize; out_rank];
    let offset = out_rank - shape.len();
    let mut s = 1usize;
    for i in (0..shape.len()).rev() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { s };
        s *= shape[i];
    }
    strides
}

/// Apply `f` elementwise over the broadcast of `a` and `b`.
pub(crate) fn binary_broadcast(
    a: &[f32],
    a_shape: &[usize],
    b: &[f32],
    b_shape: &[usize],
    out_shape: &[usize],
    f: impl Fn(f32, f32) -> f32,
) -> Vec<f32> {
    let n: usize = out_shape.iter().product();
    let mut out = Vec::with_capacity(n);
    if a_shape == b_shape {
        out.extend(a.iter().zip(b).map(|(&x, &y)| f(x, y)));
        return out;
    }
    if b.len() == 1 {
        out.extend(a.iter().map(|&x| f(x, b[0])));
        return out;
    }
    if a.len() == 1 {
        out.extend(b.iter().map(|&y| f(a[0], y)));
        return out;
    }
    let rank = out_shape.len();
    let sa = broadcast_strides(a_shape, rank);
    let sb = broadcast_strides(b_shape, rank);
    let last = out_shape[rank - 1];
    let outer: usize = n / last;
    let (la, lb) = (sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank.saturating_sub(1)];
    let mut off_a = 0usize;
    let mut off_b = 0usize;
    for _ in 0..outer {
        match (la, lb) {
            (1, 1) => {
                let ra = &a[off_a..off_a + last];
                let rb = &b[off_b..off_b + last];
                out.extend(ra.iter().zip(rb).map(|(&x, &y)| f(x, y)));
            }
            (1, 0) => {
                let ra = &a[off_a..off_a + last];
                let y = b[off_b];
                out.extend(ra.iter().map(|&x| f(x, y)));
            }
            (0, 1) => {
                let rb = &b[off_b..off_b + last];
                let x = a[off_a];
                out.extend(rb.iter().map(|&y| f(x, y)));
            }
            _ => {
                for _ in 0..last {
                    out.push(f(a[off_a], b[off_b]));
                }
            }
        }
        // advance the outer counter with carries
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            off_a += sa[d];
            off_b += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off_a -= sa[d] * out_shape[d];
            off_b -= sb[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    out
}

/// Sum `grad` (shaped `from`) down to `to`, undoing a broadcast.
pub(crate) fn reduce_to_shape(grad: &[f32], from: &[usize], to: &[usize]) -> Vec<f32> {
    if from == to {
        return grad.to_vec();
    }
    let n_to: usize = to.iter().product();
    let mut out = vec![0.0f32; n_to];
    let rank = from.len();
    let strides = broadcast_strides(to, rank);
    let last = from[rank - 1];
    let outer: usize = grad.len() / last;
    let lt = strides[rank - 1];
    let mut idx = vec![0usize; rank.saturating_sub(1)];
    let mut off = 0usize;
    let mut pos = 0usize;
    for _ in 0..outer {
        let row = &grad[pos..pos + last];
        if lt == 1 {
            for (o, &g) in out[off..off + last].iter_mut().zip(row) {
                *o += g;
            }
        } else {
            let mut acc = 0.0f32;
            for &g in row {
                acc += g;
            }
            out[off] += acc;
        }
        pos += last;
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            off += strides[d];
            if idx[d] < from[d] {
                break;
            }
            off -= strides[d] * from[d];
            idx[d] = 0;
        }
    }
    out
}

/// `a [m,k] . b [k,n] -> [m,n]`, saxpy order so the inner loop is contiguous.
pub(crate) fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose2d(a: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

pub(crate) fn conv2d_out_hw(h: usize, w: usize, kh: usize, kw: usize, p: usize) -> Option<(usize, usize)> {
    let oh = (h + 2 * p).checked_sub(kh)? + 1;
    let ow = (w + 2 * p).checked_sub(kw)? + 1;
    Some((oh, ow))
}

/// Direct stride-1 convolution, NCHW. The (kh, kw) taps become shifted-row
/// axpy operations so the hot loop stays contiguous.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d(
    x: &[f32],
    w: &[f32],
    bias: Option<&[f32]>,
    n: usize,
    c: usize,
    h: usize,
    wd: usize,
    o: usize,
    kh: usize,
    kw: usize,
    p: usize,
) -> Vec<f32> {
    let (oh, ow) = conv2d_out_hw(h, wd, kh, kw, p).expect("validated");
    let mut out = vec![0.0f32; n * o * oh * ow];
    for ni in 0..n {
        for oi in 0..o {
            let ob = &mut out[(ni * o + oi) * oh * ow..][..oh * ow];
            if let Some(bias) = bias {
                ob.fill(bias[oi]);
            }
            for ci in 0..c {
                let xb = &x[(ni * c + ci) * h * wd..][..h * wd];
                let wb = &w[(oi * c + ci) * kh * kw..][..kh * kw];
                for khi in 0..kh {
                    for kwi in 0..kw {
                        let wv = wb[khi * kw + kwi];
                        // out[ohi, owi] += wv * x[ohi + khi - p, owi + kwi - p]
                        let lo = p.saturating_sub(kwi);
                        let hi = ow.min(wd + p - kwi);
                        if lo >= hi {
                            continue;
                        }
                        for ohi in 0..oh {
                            let ihi = (ohi + khi) as isize - p as isize;
                            if ihi < 0 || ihi >= h as isize {
                                continue;
                            }
                            let xrow = &xb[ihi as usize * wd + (lo + kwi - p)..][..hi - lo];
                            let orow = &mut ob[ohi * ow + lo..][..hi - lo];
                            for (ov, &xv) in orow.iter_mut().zip(xrow) {
                                *ov += wv * xv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient of conv2d w.r.t. its input: correlate the output gradient with
/// the kernel taps, scattered back over the padded geometry.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_grad_x(
    dout: &[f32],
    w: &[f32],
    n: usize,
    c: usize,
    h: usize,
    wd: usize,
    o: usize,
    kh: usize,
    kw: usize,
    p: usize,
) -> Vec<f32> {
    let (oh, ow) = conv2d_out_hw(h, wd, kh, kw, p).expect("validated");
    let mut dx = vec![0.0f32; n * c * h * wd];
    for ni in 0..n {
        for oi in 0..o {
            let db = &dout[(ni * o + oi) * oh * ow..][..oh * ow];
            for ci in 0..c {
                let xg = &mut dx[(ni * c + ci) * h * wd..][..h * wd];
                let wb = &w[(oi * c + ci) * kh * kw..][..kh * kw];
                for khi in 0..kh {
                    for kwi in 0..kw {
                        let wv = wb[khi * kw + kwi];
                        let lo = p.saturating_sub(kwi);
                        let hi = ow.min(wd + p - kwi);
                        if lo >= hi {
                            continue;
                        }
                        for ohi in 0..oh {
                            let ihi = (ohi + khi) as isize - p as isize;
                            if ihi < 0 || ihi >= h as isize {
                                continue;
                            }
                            let drow = &db[ohi * ow + lo..][..hi - lo];
                            let xrow = &mut xg[ihi as usize * wd + (lo + kwi - p)..][..hi - lo];
                            for (xv, &dv) in xrow.iter_mut().zip(drow) {
                                *xv += wv * dv;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Gradient of conv2d w.r.t. the kernel: per-tap dot products of input rows
/// against output-gradient rows.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_grad_w(
    dout: &[f32],
    x: &[f32],
    n: usize,
    c: usize,
    h: usize,
    wd: usize,
    o: usize,
    kh: usize,
    kw: usize,
    p: usize,
) -> Vec<f32> {
    let (oh, ow) = conv2d_out_hw(h, wd, kh, kw, p).expect("validated");
    let mut dw = vec![0.0f32; o * c * kh * kw];
    for ni in 0..n {
        for oi in 0..o {
            let db = &dout[(ni * o + oi) * oh * ow..][..oh * ow];
            for ci in 0..c {
                let xb = &x[(ni * c + ci) * h * wd..][..h * wd];
                let wg = &mut dw[(oi * c + ci) * kh * kw..][..kh * kw];
                for khi in 0..kh {
                    for kwi in 0..kw {
                        let lo = p.saturating_sub(kwi);
                        let hi = ow.min(wd + p - kwi);
                        if lo >= hi {
                            continue;
                        }
                        let mut acc = 0.0f32;
                        for ohi in 0..oh {
                            let ihi = (ohi + khi) as isize - p as isize;
                            if ihi < 0 || ihi >= h as isize {
                                continue;
                            }
                            let xrow = &xb[ihi as usize * wd + (lo + kwi - p)..][..hi - lo];
                            let drow = &db[ohi * ow + lo..][..hi - lo];
                            let mut s = 0.0f32;
                            for (&xv, &dv) in xrow.iter().zip(drow) {
                                s += xv * dv;
                            }
                            acc += s;
                        }
                        wg[khi * kw + kwi] += acc;
                    }
                }
            }
        }
    }
    dw
}

/// Per-axis taps for align-corners-false bilinear resampling.
pub(crate) fn bilinear_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f32)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            let frac = (src - i0 as f64).clamp(0.0, 1.0) as f32;
            (i0, i1, frac)
        })
        .collect()
}

/// Bilinear resize of the trailing two axes; leading axes are batch.
pub(crate) fn resize_bilinear(
    x: &[f32],
    batch: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    if h == oh && w == ow {
        return x.to_vec();
    }
    let ys = bilinear_taps(h, oh);
    let xs = bilinear_taps(w, ow);
    let mut out = vec![0.0f32; batch * oh * ow];
    for b in 0..batch {
        let xb = &x[b * h * w..][..h * w];
        let ob = &mut out[b * oh * ow..][..oh * ow];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            let r0 = &xb[y0 * w..][..w];
            let r1 = &xb[y1 * w..][..w];
            let orow = &mut ob[oy * ow..][..ow];
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
                let bot = r1[x0] * (1.0 - fx) + r1[x1] * fx;
                orow[ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

/// Adjoint of `resize_bilinear`: scatter the output gradient through the
/// same four taps.
pub(crate) fn resize_bilinear_grad(
    dout: &[f32],
    batch: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    if h == oh && w == ow {
        return dout.to_vec();
    }
    let ys = bilinear_taps(h, oh);
    let xs = bilinear_taps(w, ow);
    let mut dx = vec![0.0f32; batch * h * w];
    for b in 0..batch {
        let db = &dout[b * oh * ow..][..oh * ow];
        let xg = &mut dx[b * h * w..][..h * w];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let g = db[oy * ow + ox];
                xg[y0 * w + x0] += g * (1.0 - fy) * (1.0 - fx);
                xg[y0 * w + x1] += g * (1.0 - fy) * fx;
                xg[y1 * w + x0] += g * fy * (1.0 - fx);
                xg[y1 * w + x1] += g * fy * fx;
            }
        }
    }
    dx
}
