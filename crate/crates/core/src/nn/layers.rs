//! Batched kernels on flat `NCHW` / `NF` buffers. Each backward mirrors its
//! forward and accumulates into the supplied gradient slices.

use crate::Scalar;

pub(crate) const NORM_EPS: f64 = 1e-5;

/// Dot product with eight partial sums so the loop vectorises.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Valid output span along one axis for kernel offset `d` in `-1..=1`.
fn span(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d.max(0)) as usize;
    (lo, hi)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvShape {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
}

pub(crate) fn conv3x3_forward<T: Scalar>(x: &[T], s: ConvShape, weight: &[T], bias: &[T]) -> Vec<T> {
    let hw = s.h * s.w;
    let mut y = vec![T::zero(); s.batch * s.cout * hw];
    for n in 0..s.batch {
        for o in 0..s.cout {
            let out = &mut y[(n * s.cout + o) * hw..][..hw];
            out.fill(bias[o]);
            for i in 0..s.cin {
                let inp = &x[(n * s.cin + i) * hw..][..hw];
                for ky in 0..3 {
                    let dy = ky as isize - 1;
                    let (y0, y1) = span(s.h, dy);
                    for kx in 0..3 {
                        let dx = kx as isize - 1;
                        let (x0, x1) = span(s.w, dx);
                        let wv = weight[((o * s.cin + i) * 3 + ky) * 3 + kx];
                        for yy in y0..y1 {
                            let src = ((yy as isize + dy) as usize) * s.w;
                            let irow = &inp[(src as isize + x0 as isize + dx) as usize..][..x1 - x0];
                            axpy(wv, irow, &mut out[yy * s.w + x0..yy * s.w + x1]);
                        }
                    }
                }
            }
        }
    }
    y
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `need_dx`.
pub(crate) fn conv3x3_backward<T: Scalar>(
    x: &[T],
    s: ConvShape,
    weight: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    let hw = s.h * s.w;
    let mut dx = need_dx.then(|| vec![T::zero(); x.len()]);
    for n in 0..s.batch {
        for o in 0..s.cout {
            let g = &dy[(n * s.cout + o) * hw..][..hw];
            db[o] += g.iter().copied().sum::<T>();
            for i in 0..s.cin {
                let base = (n * s.cin + i) * hw;
                let inp = &x[base..][..hw];
                for ky in 0..3 {
                    let dyo = ky as isize - 1;
                    let (y0, y1) = span(s.h, dyo);
                    for kx in 0..3 {
                        let dxo = kx as isize - 1;
                        let (x0, x1) = span(s.w, dxo);
                        let widx = ((o * s.cin + i) * 3 + ky) * 3 + kx;
                        let wv = weight[widx];
                        let mut acc = T::zero();
                        for yy in y0..y1 {
                            let src = ((yy as isize + dyo) as usize) * s.w + (x0 as isize + dxo) as usize;
                            let grow = &g[yy * s.w + x0..yy * s.w + x1];
                            acc += dot(grow, &inp[src..src + (x1 - x0)]);
                            if let Some(dx) = dx.as_mut() {
                                axpy(wv, grow, &mut dx[base + src..base + src + (x1 - x0)]);
                            }
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    dx
}

/// Normalisation statistics of `count` values reached through `index`.
fn moments<T: Scalar>(x: &[T], count: usize, index: impl Fn(usize) -> usize) -> (T, T) {
    let nf = T::from_usize(count).unwrap();
    let mean = (0..count).map(|k| x[index(k)]).sum::<T>() / nf;
    let var = (0..count)
        .map(|k| {
            let d = x[index(k)] - mean;
            d * d
        })
        .sum::<T>()
        / nf;
    (mean, var)
}

/// Output of a normalisation layer plus what its backward pass needs.
pub(crate) struct Normalized<T> {
    pub y: Vec<T>,
    pub xhat: Vec<T>,
    /// One entry per normalisation group.
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// How a normalisation layer partitions a flat buffer into groups that share
/// statistics.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Grouping {
    /// Per channel over batch and space of an `NCHW` buffer.
    Channel { batch: usize, c: usize, hw: usize },
    /// Per example over features of an `NF` buffer.
    Row { batch: usize, f: usize },
    /// Per feature over the batch of an `NF` buffer.
    Column { batch: usize, f: usize },
}

impl Grouping {
    fn groups(&self) -> usize {
        match *self {
            Grouping::Channel { c, .. } => c,
            Grouping::Row { batch, .. } => batch,
            Grouping::Column { f, .. } => f,
        }
    }

    fn size(&self) -> usize {
        match *self {
            Grouping::Channel { batch, hw, .. } => batch * hw,
            Grouping::Row { f, .. } => f,
            Grouping::Column { batch, .. } => batch,
        }
    }

    #[inline]
    fn index(&self, g: usize, k: usize) -> usize {
        match *self {
            Grouping::Channel { c, hw, .. } => ((k / hw) * c + g) * hw + k % hw,
            Grouping::Row { f, .. } => g * f + k,
            Grouping::Column { f, .. } => k * f + g,
        }
    }

    /// Index into the scale/shift vectors.
    #[inline]
    fn param(&self, g: usize, k: usize) -> usize {
        match *self {
            Grouping::Row { .. } => k,
            _ => g,
        }
    }
}

/// Normalises each group with its own statistics, or with `fixed`
/// (mean, var) per group when given.
pub(crate) fn normalize_forward<T: Scalar>(
    x: &[T],
    g: Grouping,
    gamma: &[T],
    beta: &[T],
    fixed: Option<(&[T], &[T])>,
) -> Normalized<T> {
    let eps = T::of(NORM_EPS);
    let groups = g.groups();
    let size = g.size();
    let mut out = Normalized {
        y: vec![T::zero(); x.len()],
        xhat: vec![T::zero(); x.len()],
        inv_std: Vec::with_capacity(groups),
        mean: Vec::with_capacity(groups),
        var: Vec::with_capacity(groups),
    };
    for grp in 0..groups {
        let (mean, var) = match fixed {
            Some((m, v)) => (m[grp], v[grp]),
            None => moments(x, size, |k| g.index(grp, k)),
        };
        let inv = T::one() / (var + eps).sqrt();
        for k in 0..size {
            let i = g.index(grp, k);
            let p = g.param(grp, k);
            let xh = (x[i] - mean) * inv;
            out.xhat[i] = xh;
            out.y[i] = gamma[p] * xh + beta[p];
        }
        out.inv_std.push(inv);
        out.mean.push(mean);
        out.var.push(var);
    }
    out
}

/// Backward of [`normalize_forward`]. With `fixed_stats` the statistics are
/// constants and the input gradient is a plain rescale.
#[allow(clippy::too_many_arguments)]
pub(crate) fn normalize_backward<T: Scalar>(
    dy: &[T],
    g: Grouping,
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
    fixed_stats: bool,
) -> Vec<T> {
    let mut dx = vec![T::zero(); dy.len()];
    let size = g.size();
    let nf = T::from_usize(size).unwrap();
    for grp in 0..g.groups() {
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for k in 0..size {
            let i = g.index(grp, k);
            let p = g.param(grp, k);
            dgamma[p] += dy[i] * xhat[i];
            dbeta[p] += dy[i];
            let d = dy[i] * gamma[p];
            sum_d += d;
            sum_dx += d * xhat[i];
        }
        let inv = inv_std[grp];
        for k in 0..size {
            let i = g.index(grp, k);
            let d = dy[i] * gamma[g.param(grp, k)];
            dx[i] = if fixed_stats {
                d * inv
            } else {
                inv / nf * (nf * d - sum_d - xhat[i] * sum_dx)
            };
        }
    }
    dx
}

pub(crate) fn relu_forward<T: Scalar>(x: &mut [T]) -> Vec<bool> {
    x.iter_mut()
        .map(|v| {
            let on = *v > T::zero();
            if !on {
                *v = T::zero();
            }
            on
        })
        .collect()
}

pub(crate) fn relu_backward<T: Scalar>(dy: &mut [T], mask: &[bool]) {
    for (d, &on) in dy.iter_mut().zip(mask) {
        if !on {
            *d = T::zero();
        }
    }
}

/// 2×2 stride-2 pooling over `planes` planes of `h × w`; odd trailing
/// rows/columns are dropped. Max pooling also returns the winning indices.
pub(crate) fn pool_forward<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize, max: bool) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(if max { planes * oh * ow } else { 0 });
    let quarter = T::of(0.25);
    for p in 0..planes {
        let base = p * h * w;
        for r in 0..oh {
            for c in 0..ow {
                let idx = [
                    base + 2 * r * w + 2 * c,
                    base + 2 * r * w + 2 * c + 1,
                    base + (2 * r + 1) * w + 2 * c,
                    base + (2 * r + 1) * w + 2 * c + 1,
                ];
                if max {
                    let best = idx.iter().copied().fold(idx[0], |b, i| if x[i] > x[b] { i } else { b });
                    y.push(x[best]);
                    arg.push(best as u32);
                } else {
                    y.push(idx.iter().map(|&i| x[i]).sum::<T>() * quarter);
                }
            }
        }
    }
    (y, arg)
}

pub(crate) fn max_pool_backward<T: Scalar>(dy: &[T], arg: &[u32], in_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); in_len];
    for (&d, &i) in dy.iter().zip(arg) {
        dx[i as usize] += d;
    }
    dx
}

pub(crate) fn avg_pool_backward<T: Scalar>(dy: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let mut dx = vec![T::zero(); planes * h * w];
    let quarter = T::of(0.25);
    for p in 0..planes {
        let base = p * h * w;
        for r in 0..oh {
            for c in 0..ow {
                let d = dy[(p * oh + r) * ow + c] * quarter;
                for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    dx[base + (2 * r + a) * w + 2 * c + b] += d;
                }
            }
        }
    }
    dx
}

/// `y[n] = W x[n] + b` with `W` stored `[fout, fin]`.
pub(crate) fn dense_forward<T: Scalar>(x: &[T], batch: usize, fin: usize, fout: usize, weight: &[T], bias: &[T]) -> Vec<T> {
    let mut y = Vec::with_capacity(batch * fout);
    for n in 0..batch {
        let xr = &x[n * fin..][..fin];
        for o in 0..fout {
            y.push(dot(&weight[o * fin..][..fin], xr) + bias[o]);
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward<T: Scalar>(
    x: &[T],
    batch: usize,
    fin: usize,
    fout: usize,
    weight: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    let mut dx = vec![T::zero(); batch * fin];
    for n in 0..batch {
        let xr = &x[n * fin..][..fin];
        let dxr = &mut dx[n * fin..][..fin];
        for o in 0..fout {
            let g = dy[n * fout + o];
            db[o] += g;
            axpy(g, xr, &mut dw[o * fin..][..fin]);
            axpy(g, &weight[o * fin..][..fin], dxr);
        }
    }
    dx
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
