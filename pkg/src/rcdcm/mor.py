"""Model order reduction of the driving-point admittance to pole-residue form.

The port-voltage-driven admittance of a repaired network splits as

    Y(s) = g_pp - b^T (G_mm + s C_mm)^-1 b

where (G_mm, C_mm) is the system with the port grounded and b the port's
conductance coupling into it (the repair stage guarantees the port row is
capacitor-free).  G_mm is symmetric positive definite, so a Lanczos
recurrence orthonormal in the G_mm inner product reduces the transfer
exactly like vector Arnoldi with modified Gram-Schmidt, but with a
tridiagonal projection, real nonpositive Ritz values, and 2q matched
moments.  Ritz values at machine-noise scale are direct-conduction
(feedthrough) modes; their residues are folded, together with g_pp, into
a single clamped ultra-fast pole so that the plain pole-residue sum keeps
the exact DC value.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import PreconditionError, SingularNetworkError

log = logging.getLogger(__name__)

# Ritz values below this fraction of the largest are treated as feedthrough.
_FEEDTHROUGH_REL = 1e-12
# Normalized magnitude assigned to the clamped feedthrough pole.
_CLAMP_LAMBDA = 1e-15
# Imaginary parts below this fraction of the real part are zeroed.
_SYMMETRIZE_REL = 1e-9
# Lanczos deflation threshold on the next-vector norm.
_DEFLATION_TOL = 1e-12


@dataclass(frozen=True)
class ReducedAdmittance:
    """Driving-point admittance as a sum of res_j / (1 - s/pole_j) terms."""

    poles: np.ndarray  # complex128, strictly negative real parts
    residues: np.ndarray  # complex128, siemens
    order: int  # number of terms actually returned
    meta: dict = field(default_factory=dict)

    @property
    def terms(self):
        return list(zip(self.poles, self.residues))

    def dc(self) -> float:
        return float(np.sum(self.residues).real)

    def moments(self, count):
        """Taylor coefficients of Y about s=0: m_k = sum res_j / pole_j**k."""
        return np.array(
            [np.sum(self.residues / self.poles**k).real for k in range(count)]
        )

    def to_json(self) -> str:
        terms = [
            {
                "pole_re": p.real,
                "pole_im": p.imag,
                "res_re": r.real,
                "res_im": r.imag,
            }
            for p, r in zip(self.poles, self.residues)
        ]
        return json.dumps(
            {"net": self.meta.get("net_id"), "q": self.meta.get("q_requested"),
             "order": self.order, "terms": terms},
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        poles = np.array(
            [t["pole_re"] + 1j * t["pole_im"] for t in data["terms"]], dtype=complex
        )
        res = np.array(
            [t["res_re"] + 1j * t["res_im"] for t in data["terms"]], dtype=complex
        )
        return cls(poles=poles, residues=res, order=len(poles),
                   meta={"net_id": data.get("net"), "q_requested": data.get("q")})


@dataclass(frozen=True)
class ArnoldiBasis:
    """Krylov basis for the port-grounded operator A = -G_mm^-1 C_mm / tau0.

    X is orthonormal in the `metric` (= G_mm) inner product; H is the
    projected operator, tridiagonal by symmetry (a Hessenberg matrix).
    In G^(1/2)-whitened coordinates these are the literal X^T X = I and
    H = X^T A X identities.
    """

    X: np.ndarray  # (n-1) x k, G_mm-orthonormal columns
    H: np.ndarray  # k x k tridiagonal projection
    metric: sp.csr_matrix
    tau0: float


def _grounded(sys_):
    """Port-grounded blocks (G_mm, C_mm, b, g_pp) and the internal index map."""
    p = sys_.port_index
    keep = np.array([i for i in range(sys_.n) if i != p], dtype=int)
    G = sys_.G.tocsr()
    C = sys_.C.tocsr()
    Gmm = G[keep][:, keep].tocsc()
    Cmm = C[keep][:, keep].tocsc()
    b = -np.asarray(G[keep][:, [p]].todense()).ravel()
    gpp = float(G[p, p])
    return Gmm, Cmm, b, gpp, keep


def _time_scale(sys_):
    tau0 = sys_.c_total * sys_.r_total
    if not np.isfinite(tau0) or tau0 <= 0.0:
        tau0 = 1e-12
    return tau0


def _lanczos(sys_, q):
    """G-metric Lanczos; returns (V, alpha, beta, beta0, gpp, tau0, effective)."""
    if q < 1:
        raise PreconditionError(f"reduction order must be >= 1, got {q}")
    if q > sys_.n:
        raise PreconditionError(f"order {q} exceeds system dimension {sys_.n}")
    Gmm, Cmm, b, gpp, _ = _grounded(sys_)
    tau0 = _time_scale(sys_)
    m = Gmm.shape[0]
    if m == 0 or not np.any(b):
        # port sees only its own conductance; no internal dynamics
        return np.zeros((0, 0)), [], [], 0.0, gpp, tau0, 0
    try:
        lu = spla.splu(Gmm)
    except RuntimeError as exc:
        raise SingularNetworkError(f"grounded conductance block singular: {exc}") from None

    def gdot(x, y):
        return float(x @ (Gmm @ y))

    r0 = lu.solve(b)
    beta0 = np.sqrt(gdot(r0, r0))
    if beta0 == 0.0:
        return np.zeros((m, 0)), [], [], 0.0, gpp, tau0, 0
    V = [r0 / beta0]
    alpha, beta = [], []
    k_eff = min(q, m)
    for k in range(k_eff):
        w = -lu.solve(Cmm @ V[k]) / tau0
        a = gdot(V[k], w)
        alpha.append(a)
        w = w - a * V[k]
        if k > 0:
            w = w - beta[-1] * V[k - 1]
        for vj in V:  # one reorthogonalization pass
            w = w - gdot(vj, w) * vj
        if k + 1 == k_eff:
            break
        nb = np.sqrt(max(gdot(w, w), 0.0))
        if nb < _DEFLATION_TOL:
            k_eff = k + 1
            break
        beta.append(nb)
        V.append(w / nb)
    if k_eff < q:
        log.info("Krylov space deflated at order %d (requested %d)", k_eff, q)
    return np.array(V).T, alpha[:k_eff], beta[: k_eff - 1], beta0, gpp, tau0, k_eff


def krylov_basis(sys_, q):
    """Expose the Lanczos basis and projection for inspection/testing."""
    V, alpha, beta, _, _, tau0, k = _lanczos(sys_, q)
    H = np.zeros((k, k))
    for i in range(k):
        H[i, i] = alpha[i]
    for i in range(k - 1):
        H[i, i + 1] = H[i + 1, i] = beta[i]
    Gmm, _, _, _, _ = _grounded(sys_)
    return ArnoldiBasis(X=V, H=H, metric=Gmm.tocsr(), tau0=tau0)


def reduce(sys_, q, net_id=None):
    """Reduce an MnaSystem to a q-pole ReducedAdmittance (plus feedthrough term).

    If the Krylov space deflates below q the lower effective order is
    returned with a notice in the metadata, not an error.
    """
    V, alpha, beta, beta0, gpp, tau0, k = _lanczos(sys_, q)
    meta = {
        "net_id": net_id,
        "q_requested": int(q),
        "krylov_order": int(k),
        "deflated": bool(k < min(q, sys_.n)),
        "tau0": tau0,
    }

    poles = []
    residues = []
    direct = gpp
    if k > 0:
        T = np.zeros((k, k))
        for i in range(k):
            T[i, i] = alpha[i]
        for i in range(k - 1):
            T[i, i + 1] = T[i + 1, i] = beta[i]
        lam, S = np.linalg.eigh(T)
        res_h = (beta0 * S[0, :]) ** 2
        lmax = np.abs(lam).max()
        if lmax == 0.0:
            lmax = 1.0
        for lam_j, rh in zip(lam, res_h):
            if abs(lam_j) < _FEEDTHROUGH_REL * lmax:
                direct -= rh  # feedthrough mode: fold into the clamped term
            else:
                if lam_j > 0.0:
                    raise PreconditionError(
                        f"unstable Ritz value {lam_j:.3e} from a passive RC system"
                    )
                poles.append(1.0 / (tau0 * lam_j))
                residues.append(-rh)

    poles.append(-_CLAMP_LAMBDA**-1 / tau0)
    residues.append(direct)

    poles = np.asarray(poles, dtype=complex)
    residues = np.asarray(residues, dtype=complex)
    order = np.argsort(np.abs(poles))
    poles, residues = poles[order], residues[order]
    poles, residues = _symmetrize(poles, residues)
    return ReducedAdmittance(poles=poles, residues=residues, order=len(poles), meta=meta)


def _symmetrize(poles, residues):
    """Zero sub-tolerance imaginary parts; keep genuine conjugate pairs."""
    out_p = np.array(poles, dtype=complex)
    out_r = np.array(residues, dtype=complex)
    for arr in (out_p, out_r):
        small = np.abs(arr.imag) < _SYMMETRIZE_REL * np.abs(arr.real)
        arr.imag[small] = 0.0
    return out_p, out_r


def eval_admittance(ya, s):
    """Evaluate Y(s) = sum res_j / (1 - s/pole_j); errors at a pole."""
    s = complex(s)
    if np.any(np.abs(s - ya.poles) <= 1e-15 * np.abs(ya.poles)):
        raise PreconditionError(f"evaluation at a pole: s = {s}")
    return complex(np.sum(ya.residues / (1.0 - s / ya.poles)))


def full_moments(sys_, count):
    """Exact moments m_i = L~^T A~^i R~ on the augmented system by sparse solves.

    Kept small (count <= 8): explicit moment powers go numerically unstable
    beyond that, which is the reason the reduction is Krylov-based.
    """
    if count > 8:
        raise PreconditionError("explicit moments are unreliable beyond 8 terms")
    Ga, Ca, b = sys_.augmented()
    lu = spla.splu(Ga)
    v = lu.solve(b)
    out = []
    for _ in range(count):
        out.append(float(b @ v))
        v = -lu.solve(Ca @ v)
    return np.array(out)


def direct_admittance(sys_, s):
    """Reference Y(s) from a single sparse solve of the augmented system."""
    Ga, Ca, b = sys_.augmented()
    A = (Ga + s * Ca).tocsc()
    x = spla.splu(A).solve(b.astype(complex))
    return complex(b @ x)
