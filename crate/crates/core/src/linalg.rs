//! Dense kernels on row-major `f64` slices.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = (a.chunks_exact(4), a.chunks_exact(4).remainder());
    let cb = b.chunks_exact(4);
    let rb = cb.remainder();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += W x` with `W` of shape `y.len() x x.len()`.
#[inline]
pub fn gemv_acc(w: &[f64], x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), x.len() * y.len());
    for (row, yi) in w.chunks_exact(x.len()).zip(y.iter_mut()) {
        *yi += dot(row, x);
    }
}

/// `gx += W^T gy`.
#[inline]
pub fn gemv_t_acc(w: &[f64], gy: &[f64], gx: &mut [f64]) {
    debug_assert_eq!(w.len(), gx.len() * gy.len());
    for (row, &g) in w.chunks_exact(gx.len()).zip(gy) {
        if g != 0.0 {
            axpy(g, row, gx);
        }
    }
}

/// `gw += gy x^T`.
#[inline]
pub fn outer_acc(gy: &[f64], x: &[f64], gw: &mut [f64]) {
    debug_assert_eq!(gw.len(), x.len() * gy.len());
    for (row, &g) in gw.chunks_exact_mut(x.len()).zip(gy) {
        if g != 0.0 {
            axpy(g, x, row);
        }
    }
}

/// `y += a x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn add_assign(y: &mut [f64], x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_products() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut y = [1.0, 0.0];
        gemv_acc(&w, &[1.0, 0.0, -1.0], &mut y);
        assert_eq!(y, [-1.0, -2.0]);
        let mut gx = [0.0; 3];
        gemv_t_acc(&w, &[1.0, 1.0], &mut gx);
        assert_eq!(gx, [5.0, 7.0, 9.0]);
        let mut gw = [0.0; 6];
        outer_acc(&[1.0, 2.0], &[1.0, 0.0, 3.0], &mut gw);
        assert_eq!(gw, [1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
        assert_eq!(dot(&[1.0; 7], &[2.0; 7]), 14.0);
    }

    #[test]
    fn stable_helpers() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
