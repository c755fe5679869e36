"""Estimator families with exact reverse-mode gradients.

Three families share one interface: ``forward(y_in, m_in)`` maps a length-q
complex input to a length-q complex output, and ``vjp(y_in, m_in, cot)``
returns the gradient of ``Re <cot, forward(y_in, m_in)>`` with respect to
the flat real parameter vector ``theta``. Complex parameters are stored as
real/imaginary pairs, so all losses and gradients live in ordinary real
calculus.

* affine_per_pattern - one affine map per input support pattern, enrolled
  lazily during training. Quadratic losses then have closed-form population
  optima (``closed_form_affine_fit``), which is the rigorous path for
  verifying what each training method recovers.
* tiny_net - a small fully-connected network on stacked real/imaginary
  channels with softplus activations.
* toy_cascade - an unrolled data-consistency cascade whose refinement step
  is partitioned into a denoising network on sampled indices and a
  reconstruction network on unsampled ones.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import methods as M
from .errors import ConfigError, DimensionError, ValidationError
from .kspace import SamplingMask, as_kspace
from .rng import stream
from .sampling import compute_P, compute_k

AFFINE_PER_PATTERN = "affine_per_pattern"
TINY_NET = "tiny_net"
TOY_CASCADE = "toy_cascade"


class PatternFallbackWarning(UserWarning):
    """An affine estimator saw an unknown pattern and used the nearest one."""


def complex_to_real(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


def real_to_complex(x: np.ndarray) -> np.ndarray:
    q = x.shape[0] // 2
    return x[:q] + 1j * x[q:]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Mlp:
    """Plain fully-connected real network with softplus hidden units.

    Operates on an externally owned flat parameter segment; packing order is
    W1, b1, W2, b2, ... with W of shape (out, in).
    """

    def __init__(self, sizes):
        self.sizes = tuple(int(s) for s in sizes)
        self.n_params = sum(o * i + o for i, o in zip(self.sizes[:-1], self.sizes[1:]))

    def init(self, rng: np.random.Generator) -> np.ndarray:
        theta = np.zeros(self.n_params)
        off = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            n_w = fan_out * fan_in
            theta[off:off + n_w] = rng.standard_normal(n_w) / np.sqrt(fan_in)
            off += n_w + fan_out  # biases stay zero
        return theta

    def _layers(self, theta: np.ndarray):
        off = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            n_w = fan_out * fan_in
            w = theta[off:off + n_w].reshape(fan_out, fan_in)
            b = theta[off + n_w:off + n_w + fan_out]
            off += n_w + fan_out
            yield w, b

    def forward(self, theta: np.ndarray, x: np.ndarray):
        layers = list(self._layers(theta))
        hs, zs = [x], []
        h = x
        for w, b in layers[:-1]:
            z = w @ h + b
            h = np.logaddexp(0.0, z)  # softplus
            zs.append(z)
            hs.append(h)
        w, b = layers[-1]
        y = w @ h + b
        return y, (hs, zs)

    def backward(self, theta: np.ndarray, cache, gy: np.ndarray):
        """Gradients of <gy, output> w.r.t. the segment and the input."""
        hs, zs = cache
        layers = list(self._layers(theta))
        grad = np.zeros(self.n_params)
        offsets = []
        off = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            offsets.append(off)
            off += fan_out * fan_in + fan_out
        g = gy
        for k in range(len(layers) - 1, -1, -1):
            w, _ = layers[k]
            if k < len(layers) - 1:
                g = g * _sigmoid(zs[k])
            o = offsets[k]
            n_w = w.size
            grad[o:o + n_w] = np.outer(g, hs[k]).ravel()
            grad[o + n_w:o + n_w + w.shape[0]] = g
            g = w.T @ g
        return grad, g


class Estimator:
    """Common interface of the parameterized families."""

    family = "base"

    def __init__(self, q: int, theta: np.ndarray):
        self.q = int(q)
        self.theta = np.asarray(theta, dtype=np.float64)

    def forward(self, y_in, m_in: SamplingMask) -> np.ndarray:
        raise NotImplementedError

    def vjp(self, y_in, m_in: SamplingMask, cotangent) -> np.ndarray:
        raise NotImplementedError

    def ensure_pattern(self, m_in: SamplingMask) -> None:
        """Hook for families that key parameters on the input pattern."""

    def to_checkpoint(self) -> dict:
        raise NotImplementedError

    def _check_input(self, y_in, m_in) -> np.ndarray:
        arr = as_kspace(y_in, self.q)
        if m_in.q != self.q:
            raise DimensionError(f"mask length {m_in.q} != estimator q {self.q}")
        return arr


class AffinePerPattern(Estimator):
    """One complex affine map A_s y + b_s per input support pattern."""

    family = AFFINE_PER_PATTERN

    def __init__(self, q: int):
        super().__init__(q, np.zeros(0))
        self._patterns: dict[bytes, int] = {}
        self._members: list[np.ndarray] = []
        self.fit_info: dict[bytes, dict] = {}

    @property
    def block_size(self) -> int:
        return 2 * self.q * self.q + 2 * self.q

    @property
    def n_patterns(self) -> int:
        return len(self._members)

    def ensure_pattern(self, m_in: SamplingMask) -> int:
        key = m_in.key()
        if key not in self._patterns:
            self._patterns[key] = len(self._members)
            self._members.append(np.asarray(m_in.member, dtype=bool).copy())
            self.theta = np.concatenate([self.theta, np.zeros(self.block_size)])
        return self._patterns[key]

    def _resolve(self, m_in: SamplingMask) -> tuple[int, bool]:
        key = m_in.key()
        if key in self._patterns:
            return self._patterns[key], False
        if not self._members:
            raise ValidationError("affine estimator has no enrolled patterns")
        member = np.asarray(m_in.member, dtype=bool)
        dists = [int(np.count_nonzero(m ^ member)) for m in self._members]
        return int(np.argmin(dists)), True

    def _block(self, idx: int):
        q = self.q
        seg = self.theta[idx * self.block_size:(idx + 1) * self.block_size]
        a = seg[:q * q].reshape(q, q) + 1j * seg[q * q:2 * q * q].reshape(q, q)
        b = seg[2 * q * q:2 * q * q + q] + 1j * seg[2 * q * q + q:]
        return a, b

    def set_block(self, m_in: SamplingMask, a: np.ndarray, b: np.ndarray) -> None:
        idx = self.ensure_pattern(m_in)
        q = self.q
        seg = self.theta[idx * self.block_size:(idx + 1) * self.block_size]
        seg[:q * q] = a.real.ravel()
        seg[q * q:2 * q * q] = a.imag.ravel()
        seg[2 * q * q:2 * q * q + q] = np.asarray(b).real
        seg[2 * q * q + q:] = np.asarray(b).imag

    def get_block(self, m_in: SamplingMask):
        idx, fallback = self._resolve(m_in)
        if fallback:
            raise ValidationError("pattern not enrolled")
        return self._block(idx)

    def forward_info(self, y_in, m_in: SamplingMask):
        arr = self._check_input(y_in, m_in)
        idx, fallback = self._resolve(m_in)
        a, b = self._block(idx)
        return a @ arr + b, fallback

    def forward(self, y_in, m_in: SamplingMask) -> np.ndarray:
        out, fallback = self.forward_info(y_in, m_in)
        if fallback:
            warnings.warn(
                "input pattern not enrolled; using nearest enrolled pattern",
                PatternFallbackWarning, stacklevel=2,
            )
        return out

    def vjp(self, y_in, m_in: SamplingMask, cotangent) -> np.ndarray:
        arr = self._check_input(y_in, m_in)
        cot = as_kspace(cotangent, self.q)
        idx, _ = self._resolve(m_in)
        grad = np.zeros_like(self.theta)
        q = self.q
        seg = grad[idx * self.block_size:(idx + 1) * self.block_size]
        outer = np.outer(np.conj(cot), arr)  # d Re<c, A y> / dA = conj pairing
        seg[:q * q] = outer.real.ravel()
        seg[q * q:2 * q * q] = -outer.imag.ravel()
        seg[2 * q * q:2 * q * q + q] = cot.real
        seg[2 * q * q + q:] = cot.imag
        return grad

    def to_checkpoint(self) -> dict:
        return {
            "family": self.family,
            "q": self.q,
            "patterns": [sorted(int(j) for j in np.nonzero(m)[0]) for m in self._members],
            "theta": self.theta.tolist(),
        }

    @staticmethod
    def from_checkpoint(data: dict) -> "AffinePerPattern":
        est = AffinePerPattern(data["q"])
        for idx_list in data["patterns"]:
            member = np.zeros(data["q"], dtype=bool)
            member[np.asarray(idx_list, dtype=int)] = True
            est.ensure_pattern(SamplingMask(member, np.ones(data["q"])))
        theta = np.asarray(data["theta"], dtype=np.float64)
        if theta.shape[0] != est.theta.shape[0]:
            raise ValidationError("checkpoint theta length does not match patterns")
        est.theta = theta
        return est


class TinyNet(Estimator):
    """Fully-connected network on stacked real/imaginary channels.

    Default: 2 hidden layers of width 4q, softplus units, weights drawn
    N(0, 1/fan_in) from the given seed, zero biases. The sampling mask is
    not an input; the support of y_in carries the pattern information.
    """

    family = TINY_NET

    def __init__(self, q: int, hidden_layers: int = 2, width_factor: int = 4,
                 seed: int = 0, theta=None):
        self.hidden_layers = int(hidden_layers)
        self.width_factor = int(width_factor)
        self.seed = int(seed)
        width = max(2, self.width_factor * q)
        self.mlp = Mlp([2 * q] + [width] * self.hidden_layers + [2 * q])
        if theta is None:
            theta = self.mlp.init(stream(self.seed, "tiny_net_init"))
        super().__init__(q, theta)

    def forward(self, y_in, m_in: SamplingMask) -> np.ndarray:
        arr = self._check_input(y_in, m_in)
        out, _ = self.mlp.forward(self.theta, complex_to_real(arr))
        return real_to_complex(out)

    def vjp(self, y_in, m_in: SamplingMask, cotangent) -> np.ndarray:
        arr = self._check_input(y_in, m_in)
        cot = as_kspace(cotangent, self.q)
        _, cache = self.mlp.forward(self.theta, complex_to_real(arr))
        grad, _ = self.mlp.backward(self.theta, cache, complex_to_real(cot))
        return grad

    def to_checkpoint(self) -> dict:
        return {
            "family": self.family,
            "q": self.q,
            "hidden_layers": self.hidden_layers,
            "width_factor": self.width_factor,
            "seed": self.seed,
            "theta": self.theta.tolist(),
        }

    @staticmethod
    def from_checkpoint(data: dict) -> "TinyNet":
        return TinyNet(data["q"], data["hidden_layers"], data["width_factor"],
                       data["seed"], np.asarray(data["theta"], dtype=np.float64))


class ToyCascade(Estimator):
    """Unrolled cascade with a partitioned refinement module.

    Each of K cascades applies a data-consistency step with trainable step
    size eta_k and adds M_in G_D(y_k) + (1 - M_in) G_R(y_k), with G_D and
    G_R one-hidden-layer networks specializing to sampled (denoising) and
    unsampled (reconstruction) indices respectively.
    """

    family = TOY_CASCADE

    def __init__(self, q: int, cascades: int = 2, seed: int = 0, theta=None):
        self.cascades = int(cascades)
        self.seed = int(seed)
        self.net = Mlp([2 * q, 2 * q, 2 * q])
        self.block = 1 + 2 * self.net.n_params  # eta, G_D, G_R per cascade
        if theta is None:
            rng = stream(self.seed, "toy_cascade_init")
            parts = []
            for _ in range(self.cascades):
                parts.append(np.array([1.0]))
                parts.append(self.net.init(rng))
                parts.append(self.net.init(rng))
            theta = np.concatenate(parts)
        super().__init__(q, theta)

    def _segments(self, k: int):
        base = k * self.block
        n = self.net.n_params
        return base, (base + 1, base + 1 + n), (base + 1 + n, base + 1 + 2 * n)

    def _run(self, arr: np.ndarray, m_in: SamplingMask):
        x = complex_to_real(arr)
        mvec = np.concatenate([m_in.member, m_in.member]).astype(np.float64)
        states, caches = [x], []
        s = x
        for k in range(self.cascades):
            i_eta, (d0, d1), (r0, r1) = self._segments(k)
            eta = self.theta[i_eta]
            d_out, d_cache = self.net.forward(self.theta[d0:d1], s)
            r_out, r_cache = self.net.forward(self.theta[r0:r1], s)
            s = s - eta * mvec * (s - x) + mvec * d_out + (1.0 - mvec) * r_out
            states.append(s)
            caches.append((d_cache, r_cache))
        return states, caches, mvec

    def forward(self, y_in, m_in: SamplingMask) -> np.ndarray:
        arr = self._check_input(y_in, m_in)
        states, _, _ = self._run(arr, m_in)
        return real_to_complex(states[-1])

    def vjp(self, y_in, m_in: SamplingMask, cotangent) -> np.ndarray:
        arr = self._check_input(y_in, m_in)
        cot = as_kspace(cotangent, self.q)
        states, caches, mvec = self._run(arr, m_in)
        x = states[0]
        grad = np.zeros_like(self.theta)
        a = complex_to_real(cot)
        for k in range(self.cascades - 1, -1, -1):
            i_eta, (d0, d1), (r0, r1) = self._segments(k)
            s_k = states[k]
            d_cache, r_cache = caches[k]
            grad[i_eta] = -np.dot(a, mvec * (s_k - x))
            g_d, ax_d = self.net.backward(self.theta[d0:d1], d_cache, mvec * a)
            g_r, ax_r = self.net.backward(self.theta[r0:r1], r_cache, (1.0 - mvec) * a)
            grad[d0:d1] = g_d
            grad[r0:r1] = g_r
            a = a * (1.0 - self.theta[i_eta] * mvec) + ax_d + ax_r
        return grad

    def to_checkpoint(self) -> dict:
        return {
            "family": self.family,
            "q": self.q,
            "cascades": self.cascades,
            "seed": self.seed,
            "theta": self.theta.tolist(),
        }

    @staticmethod
    def from_checkpoint(data: dict) -> "ToyCascade":
        return ToyCascade(data["q"], data["cascades"], data["seed"],
                          np.asarray(data["theta"], dtype=np.float64))


def make_estimator(family: str, q: int, **opts) -> Estimator:
    if family == AFFINE_PER_PATTERN:
        return AffinePerPattern(q)
    if family == TINY_NET:
        return TinyNet(q, **opts)
    if family == TOY_CASCADE:
        return ToyCascade(q, **opts)
    raise ConfigError(f"unknown estimator family {family!r}")


def load_checkpoint(data: dict) -> Estimator:
    loaders = {
        AFFINE_PER_PATTERN: AffinePerPattern.from_checkpoint,
        TINY_NET: TinyNet.from_checkpoint,
        TOY_CASCADE: ToyCascade.from_checkpoint,
    }
    family = data.get("family")
    if family not in loaders:
        raise ConfigError(f"unknown estimator family {family!r} in checkpoint")
    return loaders[family](data)


@dataclass(frozen=True)
class RankReport:
    rank: int
    n_rows: int
    n_params: int
    smallest_retained_sv: float

    @property
    def full_rank(self) -> bool:
        return self.rank == self.n_rows


def jacobian_rank_check(est: Estimator, y_in, m_in: SamplingMask) -> RankReport:
    """Numerical rank of the output-vs-parameter Jacobian at (y_in, m_in).

    The 2q rows (real and imaginary output channels) are assembled
    column-by-column from vjp calls with unit cotangents. A deficient rank
    is reported, not raised: it flags an estimator that cannot satisfy the
    population-minimizer theory at this point.
    """
    q = est.q
    n = est.theta.shape[0]
    if n < 2 * q:
        raise ValidationError(f"need at least 2q = {2 * q} parameters, got {n}")
    rows = np.empty((2 * q, n))
    eye = np.eye(q, dtype=np.complex128)
    for j in range(q):
        rows[j] = est.vjp(y_in, m_in, eye[j])
        rows[q + j] = est.vjp(y_in, m_in, 1j * eye[j])
    sv = np.linalg.svd(rows, compute_uv=False)
    tol = max(rows.shape) * np.finfo(np.float64).eps * (sv[0] if sv.size else 0.0)
    rank = int(np.count_nonzero(sv > tol))
    smallest = float(sv[rank - 1]) if rank > 0 else 0.0
    return RankReport(rank, 2 * q, n, smallest)


def _fit_row_factors(method: str, s_member: np.ndarray, p: np.ndarray,
                     pt: np.ndarray, alpha: float) -> np.ndarray:
    """E[loss row weight * mask indicator | input pattern] per output index.

    These scalars multiply each row's normal equations. They cancel wherever
    positive, but building them from the method's actual weighting keeps
    this fit independent of the conditional-mean oracle it is checked
    against; a zero marks a row the method's loss never constrains.
    """
    q = s_member.shape[0]
    w_on = ((1.0 + alpha ** 2) / alpha ** 2) ** 2
    c = np.ones(q)
    if method in (M.FULLY_SUPERVISED, M.SUPERVISED_WO_DENOISING, M.NOISIER2FULL_UNWEIGHTED):
        return c
    if method == M.NOISIER2FULL:
        c[s_member] = w_on
        return c
    one_minus_k = 1.0 - compute_k(p, pt)
    if method == M.STANDARD_SSDU:
        c[s_member] = 0.0
        c[~s_member] = one_minus_k[~s_member]
        return c
    if method == M.ROBUST_SSDU:
        c[s_member] = w_on
        off = ~s_member
        c[off] = compute_P(p, pt)[off] * one_minus_k[off]
        return c
    if method == M.ROBUST_SSDU_UNWEIGHTED:
        c[s_member] = 1.0
        c[~s_member] = one_minus_k[~s_member]
        return c
    raise ConfigError(f"no closed-form fit for method {method!r}")


def closed_form_affine_fit(model, method: str, pattern: SamplingMask,
                           into: AffinePerPattern | None = None) -> AffinePerPattern:
    """Population-optimal affine map for a method's loss at one input pattern.

    Solves the normal equations of the expected loss under the Gaussian
    model, conditioned on the input support pattern. The offset b is zero
    under the zero-mean prior. Rows whose normal equations are singular are
    solved with a 1e-10 ridge and flagged in ``fit_info`` (``ridge_rows``
    for ill-conditioned systems, ``unconstrained_rows`` for rows the loss
    never touches, which the theory leaves free).
    """
    if method == M.NOISE2RECON_SS:
        raise ConfigError("noise2recon_ss has no closed-form fit (its loss couples "
                          "two input patterns); it is reported descriptively only")
    if method not in M.ALL_METHODS:
        raise ConfigError(f"unknown method {method!r}")
    q = model.q
    if pattern.q != q:
        raise DimensionError("pattern length does not match model")
    sigma2 = model.noise.sigma_n ** 2
    alpha = model.noise.alpha
    v_in = sigma2 if method in (M.FULLY_SUPERVISED, M.SUPERVISED_WO_DENOISING,
                                M.STANDARD_SSDU) else (1.0 + alpha ** 2) * sigma2
    target_y0 = method == M.FULLY_SUPERVISED

    s = np.nonzero(pattern.member)[0]
    cov = model.prior_cov
    gram = cov[np.ix_(s, s)] + v_in * np.eye(s.size)
    t_mat = cov[:, s].copy()
    if not target_y0:
        for col, j in enumerate(s):
            t_mat[j, col] += sigma2

    c = _fit_row_factors(method, pattern.member, model.omega_probs(),
                         model.lambda_probs(), alpha)

    a = np.zeros((q, q), dtype=np.complex128)
    info = {"ridge_rows": [], "unconstrained_rows": []}
    if s.size:
        eigs = np.linalg.eigvalsh(gram)
        gram_singular = eigs.min() <= 1e-12 * max(1.0, eigs.max())
        for j in range(q):
            if c[j] == 0.0:
                info["unconstrained_rows"].append(int(j))
                continue  # ridge solve of the zero system: row stays zero
            lhs = c[j] * gram
            rhs = c[j] * t_mat[j]
            if gram_singular:
                lhs = lhs + 1e-10 * np.eye(s.size)
                info["ridge_rows"].append(int(j))
            a[j, s] = np.linalg.solve(lhs.T, rhs)  # row solve: a_j @ lhs = rhs
    else:
        # Nothing observed: the population optimum is the prior mean, zero.
        info["unconstrained_rows"] = [int(j) for j in range(q) if c[j] == 0.0]
    est = into if into is not None else AffinePerPattern(q)
    est.set_block(pattern, a, np.zeros(q, dtype=np.complex128))
    est.fit_info[pattern.key()] = info
    return est
