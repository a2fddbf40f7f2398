# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop right-hand side and fixed-step RK4 loop.

Mirrors tvsdac.controller.closed_loop_rhs operation for operation; all model
data arrives pre-packed as flat arrays (see tvsdac.kernel.pack_system).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sin, cos, tanh, sqrt, fabs, pow, floor, isfinite, isinf

cnp.import_array()

# status codes, shared with tvsdac.kernel
DEF ST_OK = 0
DEF ST_NONFINITE = 1
DEF ST_SINGULAR = 2
DEF ST_BOX = 3
DEF ST_EXPR = 4
DEF ST_INTERP = 5

DEF OP_CONST = 0
DEF OP_VAR = 1
DEF OP_ADD = 2
DEF OP_SUB = 3
DEF OP_MUL = 4
DEF OP_DIV = 5
DEF OP_NEG = 6
DEF OP_POW = 7
DEF OP_SIN = 8
DEF OP_COS = 9
DEF OP_TANH = 10
DEF OP_EXP = 11
DEF OP_ABS = 12
DEF OP_SQRT = 13

DEF PSI_TOL = 1e-12


cdef inline int vm_eval(const int[:, ::1] code, const double[::1] consts, int start, int length,
                        const double* env, double* stack, double* out) noexcept nogil:
    cdef int sp = 0
    cdef int pc, op, arg
    cdef double a, b, e
    for pc in range(start, start + length):
        op = code[pc, 0]
        arg = code[pc, 1]
        if op == OP_CONST:
            stack[sp] = consts[arg]
            sp += 1
        elif op == OP_VAR:
            stack[sp] = env[arg]
            sp += 1
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op <= OP_DIV:
            b = stack[sp - 1]
            a = stack[sp - 2]
            sp -= 1
            if op == OP_ADD:
                stack[sp - 1] = a + b
            elif op == OP_SUB:
                stack[sp - 1] = a - b
            elif op == OP_MUL:
                stack[sp - 1] = a * b
            else:
                if b == 0.0:
                    return 1
                stack[sp - 1] = a / b
        elif op == OP_POW:
            a = stack[sp - 1]
            e = consts[arg]
            if a == 0.0 and e < 0.0:
                return 1
            if a < 0.0 and floor(e) != e:
                return 1
            stack[sp - 1] = pow(a, e)
            if isinf(stack[sp - 1]) and isfinite(a):
                return 1
        else:
            a = stack[sp - 1]
            if op == OP_SIN:
                stack[sp - 1] = sin(a)
            elif op == OP_COS:
                stack[sp - 1] = cos(a)
            elif op == OP_TANH:
                stack[sp - 1] = tanh(a)
            elif op == OP_EXP:
                stack[sp - 1] = exp(a)
                if isinf(stack[sp - 1]) and isfinite(a):
                    return 1
            elif op == OP_ABS:
                stack[sp - 1] = fabs(a)
            elif op == OP_SQRT:
                if a < 0.0:
                    return 1
                stack[sp - 1] = sqrt(a)
            else:
                return 2
    out[0] = stack[0]
    return 0


def eval_program(code, consts, env):
    """Run one flat program; raises ValueError on a domain fault."""
    cdef int[:, ::1] c = np.ascontiguousarray(code, dtype=np.int32).reshape(-1, 2)
    cdef double[::1] k = np.ascontiguousarray(consts, dtype=np.float64)
    cdef double[::1] e = np.ascontiguousarray(env, dtype=np.float64)
    cdef double[::1] stack = np.zeros(c.shape[0] + 1)
    cdef double out = 0.0
    cdef const double* env_ptr = NULL
    if e.shape[0] > 0:
        env_ptr = &e[0]
    cdef int st = vm_eval(c, k, 0, c.shape[0], env_ptr, &stack[0], &out)
    if st:
        raise ValueError("domain error while evaluating program")
    return out


cdef inline double smooth_step(double s) noexcept nogil:
    cdef double a, b
    if s <= 0.0:
        return 0.0
    if s >= 1.0:
        return 1.0
    a = exp(-1.0 / s)
    b = exp(-1.0 / (1.0 - s))
    return a / (a + b)


cdef class ClosedLoopKernel:
    cdef readonly int n, q, R, dim, tracking, use_eta, nblocks, nsig
    cdef double[::1] k, c
    cdef int[:, ::1] code
    cdef double[::1] consts
    cdef int[::1] prog_start, prog_len
    cdef int interp_kind, interp_component
    cdef double[::1] interp_values, interp_widths
    cdef double[:, ::1] interp_centers, transitions
    cdef int[::1] blk_stage, blk_piece, blk_theta, blk_N, blk_m, blk_center, blk_input, blk_zeta
    cdef double[::1] blk_w2, blk_gamma, blk_sigma
    cdef double[::1] centers
    cdef int[::1] input_idx
    cdef int has_box
    cdef double[::1] box_lo, box_hi
    cdef int xr_off, fr_off, eta_off, xr_state
    # scratch
    cdef double[::1] sig, rho, z, ahat, a_s, zeta, env, stack, tmp, k1, k2, k3, k4, expo
    cdef public int err_detail

    def __init__(self, packed):
        p = packed
        self.n = p.n
        self.q = p.q
        self.R = p.R
        self.dim = p.dim
        self.tracking = p.tracking
        self.use_eta = p.eta
        self.k = np.ascontiguousarray(p.k, dtype=np.float64)
        self.c = np.ascontiguousarray(p.c, dtype=np.float64)
        self.code = np.ascontiguousarray(p.code, dtype=np.int32).reshape(-1, 2)
        self.consts = np.ascontiguousarray(p.consts, dtype=np.float64)
        self.prog_start = np.ascontiguousarray(p.prog_start, dtype=np.int32)
        self.prog_len = np.ascontiguousarray(p.prog_len, dtype=np.int32)
        self.interp_kind = p.interp_kind
        self.interp_component = p.interp_component
        self.interp_values = np.ascontiguousarray(p.interp_values, dtype=np.float64)
        self.interp_widths = np.ascontiguousarray(p.interp_widths, dtype=np.float64)
        self.interp_centers = np.ascontiguousarray(p.interp_centers, dtype=np.float64)
        self.transitions = np.ascontiguousarray(p.transitions, dtype=np.float64)
        self.nblocks = p.blk_N.shape[0]
        self.blk_stage = np.ascontiguousarray(p.blk_stage, dtype=np.int32)
        self.blk_piece = np.ascontiguousarray(p.blk_piece, dtype=np.int32)
        self.blk_theta = np.ascontiguousarray(p.blk_theta, dtype=np.int32)
        self.blk_N = np.ascontiguousarray(p.blk_N, dtype=np.int32)
        self.blk_m = np.ascontiguousarray(p.blk_m, dtype=np.int32)
        self.blk_center = np.ascontiguousarray(p.blk_center, dtype=np.int32)
        self.blk_input = np.ascontiguousarray(p.blk_input, dtype=np.int32)
        self.blk_zeta = np.ascontiguousarray(p.blk_zeta, dtype=np.int32)
        self.blk_w2 = np.ascontiguousarray(p.blk_w2, dtype=np.float64)
        self.blk_gamma = np.ascontiguousarray(p.blk_gamma, dtype=np.float64)
        self.blk_sigma = np.ascontiguousarray(p.blk_sigma, dtype=np.float64)
        self.centers = np.ascontiguousarray(p.centers, dtype=np.float64)
        self.input_idx = np.ascontiguousarray(p.input_idx, dtype=np.int32)
        self.has_box = p.has_box
        self.box_lo = np.ascontiguousarray(p.box_lo, dtype=np.float64)
        self.box_hi = np.ascontiguousarray(p.box_hi, dtype=np.float64)
        self.xr_off = p.xr_off
        self.fr_off = p.fr_off
        self.eta_off = p.eta_off
        self.nsig = p.nsig
        self.xr_state = self.dim - self.n
        self.sig = np.zeros(max(self.nsig, 1))
        self.rho = np.zeros(max(self.R, 1))
        self.expo = np.zeros(max(self.R, 1))
        self.z = np.zeros(self.n)
        self.ahat = np.zeros(self.n)
        self.a_s = np.zeros(self.n)
        self.zeta = np.zeros(max(int(p.zeta_size), 1))
        self.env = np.zeros(2 * self.n + 1)
        self.stack = np.zeros(max(int(p.max_depth), 1) + 1)
        self.tmp = np.zeros(self.dim)
        self.k1 = np.zeros(self.dim)
        self.k2 = np.zeros(self.dim)
        self.k3 = np.zeros(self.dim)
        self.k4 = np.zeros(self.dim)
        self.err_detail = -1

    cdef int _interp(self, const double* nu) noexcept nogil:
        cdef int j, m, qn = self.n
        cdef double acc, d, mx, s, x, lo
        if self.interp_kind == 0:
            for j in range(self.R):
                self.rho[j] = self.interp_values[j]
        elif self.interp_kind == 1:
            for j in range(self.R):
                acc = 0.0
                for m in range(self.interp_centers.shape[1]):
                    d = nu[m * qn] - self.interp_centers[j, m]
                    acc += d * d
                self.expo[j] = -acc / (self.interp_widths[j] * self.interp_widths[j])
            mx = self.expo[0]
            for j in range(1, self.R):
                if self.expo[j] > mx:
                    mx = self.expo[j]
            s = 0.0
            for j in range(self.R):
                self.rho[j] = exp(self.expo[j] - mx)
                s += self.rho[j]
            for j in range(self.R):
                self.rho[j] = self.rho[j] / s
        else:
            x = nu[self.interp_component * qn]
            lo = 1.0
            for j in range(self.R - 1):
                s = smooth_step((x - self.transitions[j, 0])
                                / (self.transitions[j, 1] - self.transitions[j, 0]))
                self.rho[j] = lo - s
                lo = s
            self.rho[self.R - 1] = lo - 0.0
        for j in range(self.R):
            if not isfinite(self.rho[j]):
                self.err_detail = j
                return ST_INTERP
        return ST_OK

    cdef int _rhs(self, const double* y, const double* nu, double r, double* dy) noexcept nogil:
        cdef int n = self.n, q = self.q, R = self.R
        cdef int i, j, o, m, b, kk, l, st, pid, N, mm
        cdef double acc, d, total, phic, psic, val, nxt, u, w2, zi
        cdef double* env = &self.env[0]
        cdef double* stack = &self.stack[0]

        st = self._interp(nu)
        if st:
            return st

        # signal vector: X, nu (order-major), X_r, fr, eta
        for i in range(n):
            self.sig[i] = y[i]
        for o in range(n):
            for m in range(q):
                self.sig[n + o * q + m] = nu[m * n + o]
        if self.tracking:
            for i in range(n):
                self.sig[self.xr_off + i] = y[self.xr_state + i]
                env[n + i] = y[self.xr_state + i]
            env[2 * n] = r
            pid = 2 * n * R
            st = vm_eval(self.code, self.consts, self.prog_start[pid], self.prog_len[pid],
                         env, stack, &val)
            if st:
                self.err_detail = pid
                return ST_EXPR
            self.sig[self.fr_off] = val
        else:
            self.sig[self.fr_off] = 0.0

        # transform + approximators
        b = 0
        for i in range(n):
            if i == 0:
                if self.tracking:
                    self.z[0] = y[0] - self.sig[self.xr_off]
                else:
                    self.z[0] = y[0]
            else:
                self.z[i] = y[i] - self.ahat[i - 1] - self.a_s[i - 1]
            if self.use_eta:
                self.sig[self.eta_off + i] = self.c[i] * self.z[i]
            total = 0.0
            while b < self.nblocks and self.blk_stage[b] == i:
                N = self.blk_N[b]
                mm = self.blk_m[b]
                w2 = self.blk_w2[b]
                acc = 0.0
                for kk in range(N):
                    d = 0.0
                    for l in range(mm):
                        val = self.sig[self.input_idx[self.blk_input[b] + l]] \
                            - self.centers[self.blk_center[b] + kk * mm + l]
                        d = d + val * val
                    val = exp(-d / w2)
                    self.zeta[self.blk_zeta[b] + kk] = val
                    acc += y[self.blk_theta[b] + kk] * val
                total += self.rho[self.blk_piece[b]] * acc
                b += 1
            self.ahat[i] = total
            if i > 0:
                self.a_s[i] = -self.k[i] * self.z[i] - self.z[i - 1]
            else:
                self.a_s[i] = -self.k[i] * self.z[i] - 0.0
        u = self.ahat[n - 1] + self.a_s[n - 1]

        # plant
        for i in range(n):
            env[i] = y[i]
        for i in range(n):
            phic = 0.0
            psic = 0.0
            for j in range(R):
                pid = i * R + j
                st = vm_eval(self.code, self.consts, self.prog_start[pid], self.prog_len[pid],
                             env, stack, &val)
                if st:
                    self.err_detail = pid
                    return ST_EXPR
                phic += self.rho[j] * val
                pid = n * R + i * R + j
                st = vm_eval(self.code, self.consts, self.prog_start[pid], self.prog_len[pid],
                             env, stack, &val)
                if st:
                    self.err_detail = pid
                    return ST_EXPR
                psic += self.rho[j] * val
            if fabs(psic) <= PSI_TOL:
                self.err_detail = i
                return ST_SINGULAR
            if i + 1 < n:
                nxt = y[i + 1]
            else:
                nxt = u
            dy[i] = phic + psic * nxt

        # adaptation
        for b in range(self.nblocks):
            i = self.blk_stage[b]
            j = self.blk_piece[b]
            zi = self.z[i]
            for kk in range(self.blk_N[b]):
                dy[self.blk_theta[b] + kk] = (
                    -self.rho[j] * self.blk_gamma[b] * zi * self.zeta[self.blk_zeta[b] + kk]
                    - self.blk_sigma[b] * y[self.blk_theta[b] + kk])

        if self.tracking:
            for i in range(n - 1):
                dy[self.xr_state + i] = y[self.xr_state + i + 1]
            dy[self.dim - 1] = self.sig[self.fr_off]
        return ST_OK

    def rhs(self, y, nu, double r):
        """Derivative for state ``y``, scheduling matrix ``nu`` (q, n) and input ``r``.

        Returns ``(status, dy)``.
        """
        cdef double[::1] yy = np.ascontiguousarray(y, dtype=np.float64)
        cdef double[::1] nn = np.ascontiguousarray(nu, dtype=np.float64).reshape(-1)
        out = np.zeros(self.dim)
        cdef double[::1] dy = out
        cdef int st
        with nogil:
            st = self._rhs(&yy[0], &nn[0], r, &dy[0])
        return st, out

    def integrate(self, y0, nu_table, r_table, double h, int nsteps, int decim):
        """Fixed-step RK4 from y0 over ``nsteps`` steps.

        ``nu_table`` has shape (2 nsteps + 1, q, n) sampled every h/2; ``r_table``
        likewise.  Returns ``(steps, states, status, fail_step, detail)``.
        """
        cdef int dim = self.dim
        cdef int nlog = nsteps // decim + 2
        steps_arr = np.zeros(nlog, dtype=np.int64)
        states_arr = np.zeros((nlog, dim))
        cdef long long[::1] steps = steps_arr
        cdef double[:, ::1] states = states_arr
        cdef double[::1] y = np.array(y0, dtype=np.float64)
        cdef double[:, ::1] nu = np.ascontiguousarray(nu_table, dtype=np.float64).reshape(
            2 * nsteps + 1, -1)
        cdef double[::1] rt = np.ascontiguousarray(r_table, dtype=np.float64)
        cdef double* tmp = &self.tmp[0]
        cdef double* k1 = &self.k1[0]
        cdef double* k2 = &self.k2[0]
        cdef double* k3 = &self.k3[0]
        cdef double* k4 = &self.k4[0]
        cdef double hh = 0.5 * h
        cdef double h6 = h / 6.0
        cdef int s, i, st = ST_OK, nrec = 0, fail_step = -1, detail = -1
        if nu.shape[0] != 2 * nsteps + 1 or rt.shape[0] != 2 * nsteps + 1:
            raise ValueError("scheduling tables must have 2 * nsteps + 1 rows")
        for i in range(dim):
            states[0, i] = y[i]
        steps[0] = 0
        nrec = 1
        with nogil:
            for s in range(nsteps):
                st = self._rhs(&y[0], &nu[2 * s, 0], rt[2 * s], k1)
                if st:
                    break
                for i in range(dim):
                    tmp[i] = y[i] + hh * k1[i]
                st = self._rhs(tmp, &nu[2 * s + 1, 0], rt[2 * s + 1], k2)
                if st:
                    break
                for i in range(dim):
                    tmp[i] = y[i] + hh * k2[i]
                st = self._rhs(tmp, &nu[2 * s + 1, 0], rt[2 * s + 1], k3)
                if st:
                    break
                for i in range(dim):
                    tmp[i] = y[i] + h * k3[i]
                st = self._rhs(tmp, &nu[2 * s + 2, 0], rt[2 * s + 2], k4)
                if st:
                    break
                for i in range(dim):
                    y[i] = y[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                for i in range(dim):
                    if not isfinite(y[i]):
                        st = ST_NONFINITE
                        self.err_detail = i
                        break
                if st:
                    break
                if self.has_box:
                    for i in range(self.n):
                        if not (y[i] >= self.box_lo[i] and y[i] <= self.box_hi[i]):
                            st = ST_BOX
                            self.err_detail = i
                            break
                    if st:
                        break
                if (s + 1) % decim == 0 or s + 1 == nsteps:
                    for i in range(dim):
                        states[nrec, i] = y[i]
                    steps[nrec] = s + 1
                    nrec += 1
        if st:
            fail_step = s if st != ST_NONFINITE and st != ST_BOX else s + 1
            detail = self.err_detail
        return steps_arr[:nrec].copy(), states_arr[:nrec].copy(), st, fail_step, detail
