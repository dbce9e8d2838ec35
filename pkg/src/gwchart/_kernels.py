"""Compiled inner loops for EM fitting.

Everything here works on plain float arrays so that numba can compile it;
the public wrappers live in :mod:`gwchart.estimation`.

Censored units are represented in the E-step by a tanh-sinh quadrature rule
for the truncated law ``Y | Y > c``.  The rule is written in the upper-tail
variable ``eps = exp(-y**theta)`` on ``(0, exp(-c**theta))`` so both ends of
the interval (``y = c`` and ``y -> inf``) are resolved without cancellation.
"""
import math

import numpy as np
from numba import njit

LN2 = 0.6931471805599453

STATUS_OK = 0
STATUS_DEGENERATE = 1
STATUS_NOT_CONVERGED = 2
STATUS_DIVERGED = 3


def tanh_sinh_base(step, half_width=4.0):
    """Parameter-free parts of the tanh-sinh rule on (0, 1).

    Returns ``log1p(q)``, ``q / (1 + q)`` and the base weights, where
    ``q = exp(-pi*sinh(t))`` and the node sits at ``eps = 1 / (1 + q)``.
    """
    t = np.arange(-half_width, half_width + step / 2, step)
    a = 0.5 * np.pi * np.sinh(t)
    q = np.exp(-2.0 * a)
    w = 0.5 * (0.5 * np.pi) * np.cosh(t) / np.cosh(a) ** 2 * step
    keep = w > 1e-300
    return np.log1p(q[keep]), (q / (1.0 + q))[keep], w[keep]


def rule_for_tol(quad_tol):
    """Pick the step of the E-step rule from a requested absolute accuracy."""
    if quad_tol >= 1e-9:
        return tanh_sinh_base(1.0 / 4.0, 3.5)
    if quad_tol >= 1e-12:
        return tanh_sinh_base(1.0 / 6.0, 4.0)
    return tanh_sinh_base(1.0 / 8.0, 4.0)


@njit(cache=True)
def log1mexp(u):
    """log(1 - exp(-u)) for u > 0."""
    if u < LN2:
        return math.log(-math.expm1(-u))
    return math.log1p(-math.exp(-u))


@njit(cache=True)
def log_sf_at(c, theta, alpha):
    """log(1 - F(c)) for the unit-scale GW law."""
    if math.isinf(c):
        return -math.inf
    lf = alpha * log1mexp(c**theta)
    if lf > -LN2:
        return math.log(-math.expm1(lf))
    return math.log1p(-math.exp(lf))


@njit(cache=True)
def gw_quantile(p, theta, alpha):
    lp = math.log(p) / alpha
    if lp < -LN2:
        return (-math.log1p(-math.exp(lp))) ** (1.0 / theta)
    return (-math.log(-math.expm1(lp))) ** (1.0 / theta)


@njit(cache=True)
def fill_nodes(c, theta, alpha, lq, qr, bw, out_logy, out_w):
    """Nodes (as log y) and normalised weights of ``Y | Y > c``."""
    ct = c**theta
    e1 = math.exp(-ct)
    k = lq.shape[0]
    if e1 == 0.0:
        for j in range(k):
            out_logy[j] = math.log(c)
            out_w[j] = 1.0 / k
        return
    z1 = -math.expm1(-ct)
    total = 0.0
    for j in range(k):
        yth = ct + lq[j]
        om = z1 + e1 * qr[j]
        w = math.exp((alpha - 1.0) * math.log(om)) * bw[j]
        out_logy[j] = math.log(yth) / theta
        out_w[j] = w
        total += w
    for j in range(k):
        out_w[j] /= total


@njit(cache=True)
def observed_loglik(lx, cens_c, cens_k, theta, alpha):
    """Hybrid-censored log-likelihood without its additive constant."""
    s = 0.0
    base = math.log(alpha * theta)
    for i in range(lx.shape[0]):
        ell = lx[i]
        u = math.exp(theta * ell)
        s += base + (theta - 1.0) * ell - u + (alpha - 1.0) * log1mexp(u)
    for g in range(cens_c.shape[0]):
        if cens_k[g] > 0:
            s += cens_k[g] * log_sf_at(cens_c[g], theta, alpha)
    return s


@njit(cache=True)
def _q_eval(ell, om, n_tot, theta, alpha, want_derivs):
    """Expected complete-data log-likelihood and, optionally, its derivatives
    with respect to (theta, alpha)."""
    s_l = 0.0
    s_u = 0.0
    s_l1 = 0.0
    s_ul = 0.0
    s_lq = 0.0
    s_ul2 = 0.0
    s_l2uqp = 0.0
    for i in range(ell.shape[0]):
        w = om[i]
        li = ell[i]
        u = math.exp(theta * li)
        l1 = log1mexp(u)
        s_l += w * li
        s_u += w * u
        s_l1 += w * l1
        if want_derivs:
            if u > 700.0:
                q = 0.0
                uqp = 0.0
            elif u < 1e-4:
                q = 1.0 - 0.5 * u + u * u / 12.0
                uqp = u * (-0.5 + u / 6.0)
            else:
                em1 = math.expm1(u)
                q = u / em1
                uqp = u * (em1 - u * (em1 + 1.0)) / (em1 * em1)
            s_ul += w * u * li
            s_lq += w * li * q
            s_ul2 += w * u * li * li
            s_l2uqp += w * li * li * uqp
    value = n_tot * (math.log(alpha) + math.log(theta)) + (theta - 1.0) * s_l - s_u + (alpha - 1.0) * s_l1
    g_t = n_tot / theta + s_l - s_ul + (alpha - 1.0) * s_lq
    g_a = n_tot / alpha + s_l1
    h_tt = -n_tot / theta**2 - s_ul2 + (alpha - 1.0) * s_l2uqp
    h_aa = -n_tot / alpha**2
    return value, g_t, g_a, h_tt, h_aa, s_lq


@njit(cache=True)
def m_step(ell, om, n_tot, theta, alpha, nr_tol, nr_max_iter):
    """Maximise the expected complete-data log-likelihood.

    Newton-Raphson in (log theta, log alpha) with step halving; falls back to
    a scaled gradient step where the Hessian is not negative definite.
    Returns (theta, alpha, ok).
    """
    s = math.log(theta)
    r = math.log(alpha)
    qv, g_t, g_a, h_tt, h_aa, h_ta = _q_eval(ell, om, n_tot, theta, alpha, True)
    for _ in range(nr_max_iter):
        gs = theta * g_t
        gr = alpha * g_a
        if max(abs(gs), abs(gr)) < nr_tol * n_tot:
            return theta, alpha, True
        hss = theta * theta * h_tt + gs
        hrr = alpha * alpha * h_aa + gr
        hsr = theta * alpha * h_ta
        det = hss * hrr - hsr * hsr
        if hss < 0.0 and det > 0.0:
            ds = -(hrr * gs - hsr * gr) / det
            dr = -(-hsr * gs + hss * gr) / det
        else:
            scale = max(abs(hss), abs(hrr), n_tot)
            ds = gs / scale
            dr = gr / scale
        big = max(abs(ds), abs(dr))
        if big > 1.0:
            ds /= big
            dr /= big
        accepted = False
        for _h in range(40):
            t_new = math.exp(s + ds)
            a_new = math.exp(r + dr)
            out = _q_eval(ell, om, n_tot, t_new, a_new, True)
            if out[0] >= qv - 1e-12 * abs(qv):
                accepted = True
                break
            ds *= 0.5
            dr *= 0.5
        if not accepted:
            # no ascent possible at working precision: accept if stationary
            if max(abs(gs), abs(gr)) <= 1e-5 * n_tot:
                return theta, alpha, True
            return theta, alpha, False
        s += ds
        r += dr
        theta = t_new
        alpha = a_new
        qv, g_t, g_a, h_tt, h_aa, h_ta = out
        if max(abs(ds), abs(dr)) < nr_tol:
            return theta, alpha, True
    return theta, alpha, True


@njit(cache=True)
def _em_map(lx, cens_c, cens_k, theta, alpha, lq, qr, bw, ell, om, nr_tol, nr_max_iter):
    d = lx.shape[0]
    k = lq.shape[0]
    n_tot = float(d)
    for i in range(d):
        ell[i] = lx[i]
        om[i] = 1.0
    pos = d
    for g in range(cens_c.shape[0]):
        fill_nodes(cens_c[g], theta, alpha, lq, qr, bw, ell[pos:pos + k], om[pos:pos + k])
        for j in range(k):
            om[pos + j] *= cens_k[g]
        n_tot += cens_k[g]
        pos += k
    return m_step(ell[:pos], om[:pos], n_tot, theta, alpha, nr_tol, nr_max_iter)


@njit(cache=True)
def em_fit_kernel(lx, cens_c, cens_k, theta0, alpha0, em_tol, em_max_iter,
                  nr_tol, nr_max_iter, lq, qr, bw, accelerate,
                  tr_theta, tr_alpha, tr_ll):
    """EM iterations from (theta0, alpha0).

    Censored groups with ``cens_k == 0`` are skipped.  With ``accelerate`` a
    safeguarded SQUAREM extrapolation is tried every cycle and kept only when
    it does not lower the observed log-likelihood, so the recorded trace stays
    monotone.  Fills the trace arrays and returns
    (theta, alpha, n_iter, status).
    """
    groups = 0
    for g in range(cens_c.shape[0]):
        if cens_k[g] > 0:
            groups += 1
    cc = np.empty(groups)
    ck = np.empty(groups)
    j = 0
    for g in range(cens_c.shape[0]):
        if cens_k[g] > 0:
            cc[j] = cens_c[g]
            ck[j] = cens_k[g]
            j += 1
    size = lx.shape[0] + groups * lq.shape[0]
    ell = np.empty(size)
    om = np.empty(size)

    theta = theta0
    alpha = alpha0
    ll = observed_loglik(lx, cc, ck, theta, alpha)
    tr_theta[0] = theta
    tr_alpha[0] = alpha
    tr_ll[0] = ll
    if groups == 0:
        # complete data: the M-step is the maximum-likelihood problem itself
        t1, a1, ok = _em_map(lx, cc, ck, theta, alpha, lq, qr, bw, ell, om,
                             nr_tol, 200)
        if not ok:
            return theta, alpha, 0, STATUS_DIVERGED
        tr_theta[1] = t1
        tr_alpha[1] = a1
        tr_ll[1] = observed_loglik(lx, cc, ck, t1, a1)
        return t1, a1, 1, STATUS_OK

    for it in range(1, em_max_iter + 1):
        t1, a1, ok = _em_map(lx, cc, ck, theta, alpha, lq, qr, bw, ell, om, nr_tol, nr_max_iter)
        if not ok:
            return theta, alpha, it - 1, STATUS_DIVERGED
        t_new = t1
        a_new = a1
        ll_new = observed_loglik(lx, cc, ck, t1, a1)
        if accelerate:
            t2, a2, ok2 = _em_map(lx, cc, ck, t1, a1, lq, qr, bw, ell, om, nr_tol, nr_max_iter)
            if ok2:
                ll2 = observed_loglik(lx, cc, ck, t2, a2)
                t_new = t2
                a_new = a2
                ll_new = ll2
                r_s = math.log(t1) - math.log(theta)
                r_r = math.log(a1) - math.log(alpha)
                v_s = math.log(t2) - math.log(t1) - r_s
                v_r = math.log(a2) - math.log(a1) - r_r
                nv = math.sqrt(v_s * v_s + v_r * v_r)
                if nv > 0.0:
                    step = -math.sqrt(r_s * r_s + r_r * r_r) / nv
                    if step < -1.0:
                        step = max(step, -64.0)
                        s_x = math.log(theta) - 2.0 * step * r_s + step * step * v_s
                        r_x = math.log(alpha) - 2.0 * step * r_r + step * step * v_r
                        if abs(s_x) < 30.0 and abs(r_x) < 30.0:
                            t3, a3, ok3 = _em_map(lx, cc, ck, math.exp(s_x), math.exp(r_x),
                                                  lq, qr, bw, ell, om, nr_tol, nr_max_iter)
                            if ok3:
                                ll3 = observed_loglik(lx, cc, ck, t3, a3)
                                if ll3 >= ll2:
                                    t_new = t3
                                    a_new = a3
                                    ll_new = ll3
        change = max(abs(t_new - theta) / theta, abs(a_new - alpha) / alpha)
        theta = t_new
        alpha = a_new
        tr_theta[it] = theta
        tr_alpha[it] = alpha
        tr_ll[it] = ll_new
        if not (math.isfinite(theta) and math.isfinite(alpha)):
            return theta, alpha, it, STATUS_DIVERGED
        if change < em_tol:
            return theta, alpha, it, STATUS_OK
    return theta, alpha, em_max_iter, STATUS_NOT_CONVERGED


@njit(cache=True)
def _censor_row(x, r, x0):
    """Sorted row -> (d, c)."""
    if x[r - 1] < x0:
        return r, x[r - 1]
    d = 0
    while d < x.shape[0] and x[d] < x0:
        d += 1
    return d, x0


@njit(cache=True)
def _fit_row(u_row, gen_theta, gen_alpha, r, x0, init_theta, init_alpha,
             em_tol, em_max_iter, nr_tol, nr_max_iter, lq, qr, bw, accelerate,
             tr_t, tr_a, tr_l):
    m = u_row.shape[0]
    x = np.empty(m)
    for i in range(m):
        p = u_row[i]
        if p <= 0.0:
            p = 1e-300
        x[i] = gw_quantile(p, gen_theta, gen_alpha)
    x.sort()
    d, c = _censor_row(x, r, x0)
    # two distinct failures are needed for a two-parameter fit
    if d < 2 or x[d - 1] == x[0]:
        return math.nan, math.nan, STATUS_DEGENERATE
    lx = np.log(x[:d])
    cens_c = np.array([c])
    cens_k = np.array([float(m - d)])
    t, a, _n, status = em_fit_kernel(lx, cens_c, cens_k, init_theta, init_alpha,
                                     em_tol, em_max_iter, nr_tol, nr_max_iter,
                                     lq, qr, bw, accelerate, tr_t, tr_a, tr_l)
    return t, a, status


@njit(cache=True)
def fit_rows(u, gen_theta, gen_alpha, r, x0, init_theta, init_alpha,
             em_tol, em_max_iter, nr_tol, nr_max_iter, lq, qr, bw, accelerate):
    """Generate, censor and refit one subgroup per row of uniforms ``u``."""
    b = u.shape[0]
    th = np.empty(b)
    al = np.empty(b)
    st = np.empty(b, dtype=np.int64)
    tr_t = np.empty(em_max_iter + 2)
    tr_a = np.empty(em_max_iter + 2)
    tr_l = np.empty(em_max_iter + 2)
    for i in range(b):
        t, a, s = _fit_row(u[i], gen_theta, gen_alpha, r, x0, init_theta, init_alpha,
                           em_tol, em_max_iter, nr_tol, nr_max_iter, lq, qr, bw,
                           accelerate, tr_t, tr_a, tr_l)
        th[i] = t
        al[i] = a
        st[i] = s
    return th, al, st


@njit(cache=True)
def first_signal(u, gen_theta, gen_alpha, r, x0, init_theta, init_alpha,
                 em_tol, em_max_iter, nr_tol, nr_max_iter, lq, qr, bw, accelerate,
                 p, lcl, ucl, unassessable_signals):
    """Monitor rows of ``u`` in order; return (index of first signal or -1,
    number of unassessable rows seen up to that point).

    An unassessable row (failed refit) is skipped unless
    ``unassessable_signals`` is set, in which case it counts as a signal.
    """
    tr_t = np.empty(em_max_iter + 2)
    tr_a = np.empty(em_max_iter + 2)
    tr_l = np.empty(em_max_iter + 2)
    bad = 0
    for i in range(u.shape[0]):
        t, a, s = _fit_row(u[i], gen_theta, gen_alpha, r, x0, init_theta, init_alpha,
                           em_tol, em_max_iter, nr_tol, nr_max_iter, lq, qr, bw,
                           accelerate, tr_t, tr_a, tr_l)
        if s != STATUS_OK:
            bad += 1
            if unassessable_signals:
                return i, bad
            continue
        xi = gw_quantile(p, t, a)
        if xi > ucl or xi < lcl:
            return i, bad
    return -1, bad
