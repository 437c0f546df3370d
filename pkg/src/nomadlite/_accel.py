"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

Set the environment variable ``NOMADLITE_NO_NUMBA=1`` before import to force
the numpy path (also taken automatically when numba is unavailable). Both
implementations are kept importable so ``benchmarks/bench_kernels.py`` can
compare them.
"""

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not os.environ.get("NOMADLITE_NO_NUMBA")


# ---------------------------------------------------------------------------
# pure-numpy implementations

def conv1d_forward_np(x, w, b, stride):
    """Valid 1-d convolution over time. x: (C_in, T), w: (C_out, C_in, K)."""
    win = sliding_window_view(x, w.shape[2], axis=1)[:, ::stride, :]
    return np.einsum("oik,itk->ot", w, win, optimize=True) + b[:, None]


def conv1d_backward_np(x, w, stride, gy):
    """Gradients of conv1d_forward wrt input, weights, and bias."""
    k = w.shape[2]
    win = sliding_window_view(x, k, axis=1)[:, ::stride, :]
    gw = np.einsum("ot,itk->oik", gy, win, optimize=True)
    gb = gy.sum(axis=1)
    gx = np.zeros_like(x)
    tmp = np.einsum("ot,oik->itk", gy, w, optimize=True)
    t_out = gy.shape[1]
    for kk in range(k):
        gx[:, kk : kk + stride * t_out : stride] += tmp[:, :, kk]
    return gx, gw, gb


def patch_stats_np(ref, deg, pt, pb):
    """Per-patch population mean/var/cov over all pt x pb windows (stride 1)."""
    n = pt * pb
    wr = sliding_window_view(ref, (pt, pb))
    wd = sliding_window_view(deg, (pt, pb))
    mu_r = wr.mean(axis=(2, 3))
    mu_d = wd.mean(axis=(2, 3))
    var_r = (wr * wr).sum(axis=(2, 3)) / n - mu_r * mu_r
    var_d = (wd * wd).sum(axis=(2, 3)) / n - mu_d * mu_d
    cov = (wr * wd).sum(axis=(2, 3)) / n - mu_r * mu_d
    return mu_r, mu_d, var_r, var_d, cov


def resample_fir_np(x, h, up, down, n_out, delay):
    """Polyphase resampling via explicit zero-stuffing and full convolution."""
    xu = np.zeros(len(x) * up)
    xu[::up] = x
    full = np.convolve(xu, h)
    idx = np.arange(n_out) * down + delay
    return full[idx]


# ---------------------------------------------------------------------------
# numba implementations (same contracts)

if HAVE_NUMBA:

    @njit(cache=True)
    def _im2col(x, k, stride, t_out):
        c_in = x.shape[0]
        col = np.empty((c_in * k, t_out))
        for t in range(t_out):
            t0 = t * stride
            for i in range(c_in):
                base = i * k
                for kk in range(k):
                    col[base + kk, t] = x[i, t0 + kk]
        return col

    @njit(cache=True)
    def conv1d_forward_nb(x, w, b, stride):
        c_out, c_in, k = w.shape
        t_out = (x.shape[1] - k) // stride + 1
        col = _im2col(x, k, stride, t_out)
        y = np.dot(np.ascontiguousarray(w).reshape(c_out, c_in * k), col)
        for o in range(c_out):
            for t in range(t_out):
                y[o, t] += b[o]
        return y

    @njit(cache=True)
    def conv1d_backward_nb(x, w, stride, gy):
        c_out, c_in, k = w.shape
        t_out = gy.shape[1]
        col = _im2col(x, k, stride, t_out)
        gy = np.ascontiguousarray(gy)
        gw = np.dot(gy, col.T).reshape(c_out, c_in, k)
        gb = np.zeros(c_out)
        for o in range(c_out):
            for t in range(t_out):
                gb[o] += gy[o, t]
        # columns of gcol scatter-add back onto the (overlapping) input windows
        gcol = np.dot(np.ascontiguousarray(w).reshape(c_out, c_in * k).T, gy)
        gx = np.zeros_like(x)
        for t in range(t_out):
            t0 = t * stride
            for i in range(c_in):
                base = i * k
                for kk in range(k):
                    gx[i, t0 + kk] += gcol[base + kk, t]
        return gx, gw, gb

    @njit(cache=True)
    def patch_stats_nb(ref, deg, pt, pb):
        nt = ref.shape[0] - pt + 1
        nb_ = ref.shape[1] - pb + 1
        n = pt * pb
        mu_r = np.empty((nt, nb_))
        mu_d = np.empty((nt, nb_))
        var_r = np.empty((nt, nb_))
        var_d = np.empty((nt, nb_))
        cov = np.empty((nt, nb_))
        for t in range(nt):
            for b in range(nb_):
                sr = 0.0
                sd = 0.0
                srr = 0.0
                sdd = 0.0
                srd = 0.0
                for dt in range(pt):
                    for db in range(pb):
                        r = ref[t + dt, b + db]
                        d = deg[t + dt, b + db]
                        sr += r
                        sd += d
                        srr += r * r
                        sdd += d * d
                        srd += r * d
                mr = sr / n
                md = sd / n
                mu_r[t, b] = mr
                mu_d[t, b] = md
                var_r[t, b] = srr / n - mr * mr
                var_d[t, b] = sdd / n - md * md
                cov[t, b] = srd / n - mr * md
        return mu_r, mu_d, var_r, var_d, cov

    @njit(cache=True)
    def resample_fir_nb(x, h, up, down, n_out, delay):
        n_in = len(x)
        n_h = len(h)
        y = np.empty(n_out)
        for m in range(n_out):
            u = m * down + delay
            acc = 0.0
            # only taps aligned with nonzero (stuffed) input samples;
            # i decreases by one as j advances by up, so no per-tap division
            j = u % up
            i = (u - j) // up
            if i >= n_in:  # skip taps beyond the end of the input
                skip = i - (n_in - 1)
                j += skip * up
                i = n_in - 1
            while j < n_h and i >= 0:
                acc += h[j] * x[i]
                j += up
                i -= 1
            y[m] = acc
        return y


if USE_NUMBA:
    conv1d_forward = conv1d_forward_nb
    conv1d_backward = conv1d_backward_nb
    patch_stats = patch_stats_nb
    resample_fir = resample_fir_nb
else:
    conv1d_forward = conv1d_forward_np
    conv1d_backward = conv1d_backward_np
    patch_stats = patch_stats_np
    resample_fir = resample_fir_np
