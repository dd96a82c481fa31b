"""Linear maps on density matrices
Kraus / Choi / superoperator representations of channels, composition,
lifting with an identity, intermediate maps and CP-divisibility scans.

Conventions: vec stacks columns, the superoperator acts as
vec(Λ(X)) = S vec(X), and the Choi matrix is input-first,
C = Σ_ij |i><j| ⊗ Λ(|i><j|).
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from backflow_lab.config import (
    COND_LIMIT,
    CP_TOL,
    CPTP_TOL,
    P_DIVISIBILITY_SAMPLES,
    PSD_TOL,
    TP_TOL,
)
from backflow_lab.errors import (
    DimensionMismatchError,
    NonInvertibleError,
    NotTracePreservingError,
)
from backflow_lab.numkernel import as_matrix, eigvalsh, hermitian_part, partial_trace
from backflow_lab.quantum_core import DensityMatrix, Povm, make_rng, random_pure_vector


def vec(m):
    return np.asarray(m, dtype=complex).reshape(-1, order="F")


def unvec(v, dim):
    return np.asarray(v, dtype=complex).reshape(dim, dim, order="F")


# The action tensor T[i, j, m, n] = Λ(|i><j|)[m, n] links the representations.

def _tensor_from_choi(choi, d_in, d_out):
    return choi.reshape(d_in, d_out, d_in, d_out).transpose(0, 2, 1, 3)


def _choi_from_tensor(t):
    d_in, d_out = t.shape[0], t.shape[2]
    return t.transpose(0, 2, 1, 3).reshape(d_in * d_out, d_in * d_out)


def _tensor_from_superop(s, d_in, d_out):
    return s.reshape(d_out, d_out, d_in, d_in).transpose(3, 2, 1, 0)


def _superop_from_tensor(t):
    d_in, d_out = t.shape[0], t.shape[2]
    return t.transpose(3, 2, 1, 0).reshape(d_out * d_out, d_in * d_in)


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """A linear map on matrices, stored as superoperator and Choi matrix.

    Kraus operators are present when the map was built from them or is CP.
    Non-CP maps (intermediate maps) use the same type with `is_cp` False.
    """

    dim_in: int
    dim_out: int
    superop: np.ndarray
    choi: np.ndarray
    kraus: tuple = None
    label: str = ""

    @property
    def choi_eigenvalues(self):
        return eigvalsh(self.choi)

    @property
    def min_choi_eig(self):
        return float(self.choi_eigenvalues[0])

    @property
    def is_cp(self):
        return self.min_choi_eig >= -PSD_TOL

    @property
    def tp_defect(self):
        """max |Tr_out C - I|."""
        reduced = partial_trace(self.choi, [self.dim_in, self.dim_out], keep=0)
        return float(np.abs(reduced - np.eye(self.dim_in)).max())

    @property
    def is_tp(self):
        return self.tp_defect <= TP_TOL

    @property
    def tensor(self):
        return _tensor_from_superop(self.superop, self.dim_in, self.dim_out)


def _from_tensor(t, kraus=None, label=""):
    d_in, d_out = t.shape[0], t.shape[2]
    return QuantumChannel(
        dim_in=d_in,
        dim_out=d_out,
        superop=_superop_from_tensor(t),
        choi=_choi_from_tensor(t),
        kraus=tuple(kraus) if kraus is not None else None,
        label=label,
    )


def channel_from_kraus(kraus, label="", check_tp=True):
    """Build a channel from Kraus operators K_k (each d_out x d_in)."""
    ops = [np.asarray(k, dtype=complex) for k in kraus]
    if not ops:
        raise DimensionMismatchError("at least one Kraus operator is required")
    d_out, d_in = ops[0].shape
    if any(k.shape != (d_out, d_in) for k in ops):
        raise DimensionMismatchError("Kraus operators have different shapes")
    if check_tp:
        defect = float(np.abs(sum(k.conj().T @ k for k in ops) - np.eye(d_in)).max())
        if defect > TP_TOL:
            raise NotTracePreservingError(f"sum of K^dagger K deviates from identity by {defect:.3e}")
    superop = sum(np.kron(k.conj(), k) for k in ops)
    choi = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for k in ops:
        v = k.T.reshape(-1)
        choi += np.outer(v, v.conj())
    return QuantumChannel(d_in, d_out, superop, choi, tuple(ops), label)


def kraus_from_choi(choi, d_in, d_out, tol=1e-12):
    """Kraus operators from the spectral decomposition of a PSD Choi matrix."""
    vals, vecs = np.linalg.eigh(hermitian_part(choi))
    cutoff = tol * max(float(vals[-1]), 1.0)
    ops = []
    for lam, v in zip(vals[::-1], vecs[:, ::-1].T):
        if lam <= cutoff:
            break
        ops.append(np.sqrt(lam) * v.reshape(d_in, d_out).T)
    return ops


def channel_from_choi(choi, d_in, d_out, label="", check_tp=True):
    choi = as_matrix(choi)
    if choi.shape != (d_in * d_out, d_in * d_out):
        raise DimensionMismatchError(f"Choi matrix {choi.shape} does not match {d_in}->{d_out}")
    t = _tensor_from_choi(choi, d_in, d_out)
    ch = _from_tensor(t, label=label)
    if check_tp and not ch.is_tp:
        raise NotTracePreservingError(f"Choi matrix is not trace preserving (defect {ch.tp_defect:.3e})")
    kraus = kraus_from_choi(choi, d_in, d_out) if ch.is_cp else None
    return QuantumChannel(d_in, d_out, ch.superop, ch.choi, tuple(kraus) if kraus else None, label)


def channel_from_superop(superop, d_in, d_out, label=""):
    """Wrap any superoperator; no positivity or trace check is applied."""
    s = np.asarray(superop, dtype=complex)
    if s.shape != (d_out * d_out, d_in * d_in):
        raise DimensionMismatchError(f"superoperator {s.shape} does not match {d_in}->{d_out}")
    return _from_tensor(_tensor_from_superop(s, d_in, d_out), label=label)


def identity_channel(dim):
    return channel_from_kraus([np.eye(dim)], label="identity")


def apply_channel(channel, rho):
    """Λ(ρ) for a channel and a density matrix (or raw operator).

    A DensityMatrix input returns a DensityMatrix; raw arrays return arrays.
    """
    wrap = isinstance(rho, DensityMatrix)
    m = rho.matrix if wrap else as_matrix(rho)
    if m.shape != (channel.dim_in, channel.dim_in):
        raise DimensionMismatchError(
            f"state of dimension {m.shape[0]} fed to a map on dimension {channel.dim_in}"
        )
    out = unvec(channel.superop @ vec(m), channel.dim_out)
    return DensityMatrix(hermitian_part(out)) if wrap else out


def apply_local(channel, rho, dims, site):
    """Apply channel to tensor factor `site` of an operator on dims.

    Equivalent to lifting the channel with identities on every other
    factor, without forming the lifted superoperator.
    """
    wrap = isinstance(rho, DensityMatrix)
    m = rho.matrix if wrap else np.asarray(rho, dtype=complex)
    dims = [int(d) for d in dims]
    n = len(dims)
    if dims[site] != channel.dim_in:
        raise DimensionMismatchError(
            f"factor {site} has dimension {dims[site]}, map expects {channel.dim_in}"
        )
    total = int(np.prod(dims))
    if m.shape != (total, total):
        raise DimensionMismatchError(f"operator of shape {m.shape} does not match dims {dims}")
    r = np.moveaxis(m.reshape(dims + dims), [site, n + site], [-2, -1])
    out = np.tensordot(r, channel.tensor, axes=([-2, -1], [0, 1]))
    out = np.moveaxis(out, [-2, -1], [site, n + site])
    new_dims = list(dims)
    new_dims[site] = channel.dim_out
    new_total = int(np.prod(new_dims))
    out = out.reshape(new_total, new_total)
    return DensityMatrix(hermitian_part(out)) if wrap else out


def tensor_with_identity(channel, ancilla_dim, side="right"):
    """Λ ⊗ I_k (side="right") or I_k ⊗ Λ (side="left")."""
    k = int(ancilla_dim)
    eye = np.eye(k, dtype=complex)
    t = channel.tensor
    d_in, d_out = channel.dim_in, channel.dim_out
    if side == "right":
        big = np.einsum("ijmn,ac,bd->iajbmcnd", t, eye, eye)
        kraus = [np.kron(op, eye) for op in channel.kraus] if channel.kraus else None
    elif side == "left":
        big = np.einsum("ijmn,ac,bd->aibjcmdn", t, eye, eye)
        kraus = [np.kron(eye, op) for op in channel.kraus] if channel.kraus else None
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    big = big.reshape(d_in * k, d_in * k, d_out * k, d_out * k)
    label = f"{channel.label}⊗I{k}" if side == "right" else f"I{k}⊗{channel.label}"
    return _from_tensor(big, kraus=kraus, label=label)


def compose(later, earlier):
    """later ∘ earlier."""
    if earlier.dim_out != later.dim_in:
        raise DimensionMismatchError(
            f"cannot compose {earlier.dim_in}->{earlier.dim_out} with {later.dim_in}->{later.dim_out}"
        )
    superop = later.superop @ earlier.superop
    kraus = None
    if later.kraus and earlier.kraus:
        kraus = [a @ b for a in later.kraus for b in earlier.kraus]
    ch = channel_from_superop(superop, earlier.dim_in, later.dim_out, label=f"{later.label}∘{earlier.label}")
    return QuantumChannel(ch.dim_in, ch.dim_out, ch.superop, ch.choi, tuple(kraus) if kraus else None, ch.label)


def adjoint_channel(channel):
    """Heisenberg-picture dual map Λ* with Tr[Λ(X) Y] = Tr[X Λ*(Y)]."""
    t = channel.tensor
    # Λ*(|a><b|)[c, d] = Λ(|d><c|)[b, a]
    dual = t.transpose(3, 2, 1, 0)
    kraus = [k.conj().T for k in channel.kraus] if channel.kraus else None
    return _from_tensor(dual, kraus=kraus, label=f"{channel.label}*")


def pullback_povm(channel, povm):
    """Effects Λ*(P_i): measuring Λ(ρ) with P equals measuring ρ with Λ*(P)."""
    if povm.dim != channel.dim_out:
        raise DimensionMismatchError(
            f"POVM on dimension {povm.dim}, channel output has {channel.dim_out}"
        )
    dual = adjoint_channel(channel)
    return Povm(tuple(hermitian_part(apply_channel(dual, e)) for e in povm.effects))


def random_channel(dim_in, dim_out=None, n_kraus=None, seed=None):
    """Random CPTP map from a Ginibre isometry (Stinespring form)."""
    rng = make_rng(seed)
    dim_out = dim_in if dim_out is None else dim_out
    n_kraus = dim_in * dim_out if n_kraus is None else n_kraus
    rows = dim_out * n_kraus
    g = rng.standard_normal((rows, dim_in)) + 1j * rng.standard_normal((rows, dim_in))
    q, _ = np.linalg.qr(g)
    kraus = [q[k * dim_out:(k + 1) * dim_out, :] for k in range(n_kraus)]
    return channel_from_kraus(kraus, label="random")


@dataclass(frozen=True, eq=False)
class IntermediateMap:
    """V with Λ(t_late) = V ∘ Λ(t_early); possibly not CP."""

    map: QuantumChannel
    t_early: float
    t_late: float
    min_choi_eig: float
    tp_defect: float
    inversion_condition: float

    @property
    def cp_flag(self):
        return self.min_choi_eig >= -CP_TOL


def intermediate_map(trajectory, t_early, t_late):
    """Solve V Λ(t_early) = Λ(t_late) on the superoperator level.

    Raises NonInvertibleError when Λ(t_early) has condition number at or
    above COND_LIMIT.
    """
    if t_late < t_early:
        raise ValueError(f"t_late={t_late} precedes t_early={t_early}")
    early = trajectory.channel_at(t_early)
    late = trajectory.channel_at(t_late)
    condition = float(np.linalg.cond(early.superop))
    if not np.isfinite(condition) or condition >= COND_LIMIT:
        raise NonInvertibleError(
            f"Λ({t_early:.6g}) has condition number {condition:.3e}", condition=condition
        )
    # V S_e = S_l  <=>  S_e^T V^T = S_l^T
    lu = linalg.lu_factor(early.superop.T)
    v = linalg.lu_solve(lu, late.superop.T).T
    vmap = channel_from_superop(v, early.dim_out, late.dim_out, label=f"V({t_late:.6g},{t_early:.6g})")
    return IntermediateMap(
        map=vmap,
        t_early=float(t_early),
        t_late=float(t_late),
        min_choi_eig=vmap.min_choi_eig,
        tp_defect=vmap.tp_defect,
        inversion_condition=condition,
    )


@dataclass(frozen=True)
class StepVerdict:
    """CP-divisibility verdict for one grid step.

    cp_flag is None when the earlier channel could not be inverted.
    """

    t_early: float
    t_late: float
    cp_flag: Optional[bool]
    min_choi_eig: Optional[float]
    tp_defect: Optional[float]
    inversion_condition: float
    p_positive: Optional[bool] = None
    min_output_eig: Optional[float] = None

    @property
    def indeterminate(self):
        return self.cp_flag is None


def cp_divisibility_scan(trajectory, p_samples=0, seed=0):
    """Verdict for every consecutive pair of grid times.

    With p_samples > 0 each invertible step also carries the advisory
    positivity check of p_divisibility_heuristic.
    """
    verdicts = []
    grid = trajectory.grid
    for k in range(len(grid) - 1):
        try:
            vm = intermediate_map(trajectory, grid[k], grid[k + 1])
        except NonInvertibleError as e:
            verdicts.append(StepVerdict(grid[k], grid[k + 1], None, None, None, e.condition))
            continue
        positive, lowest = (None, None)
        if p_samples:
            positive, lowest = p_divisibility_heuristic(vm, n_samples=p_samples, seed=seed + k)
        verdicts.append(
            StepVerdict(
                grid[k], grid[k + 1], vm.cp_flag, vm.min_choi_eig, vm.tp_defect,
                vm.inversion_condition, positive, lowest,
            )
        )
    return verdicts


def p_divisibility_heuristic(imap, n_samples=P_DIVISIBILITY_SAMPLES, seed=0):
    """Sampled positivity of V on random pure states.

    Returns (positive, smallest output eigenvalue). This is an advisory
    check only: passing it does not prove positivity.
    """
    rng = make_rng(seed)
    vmap = imap.map if isinstance(imap, IntermediateMap) else imap
    lowest = np.inf
    for _ in range(n_samples):
        psi = random_pure_vector(vmap.dim_in, rng)
        out = apply_channel(vmap, np.outer(psi, psi.conj()))
        lowest = min(lowest, float(eigvalsh(out)[0]))
    return bool(lowest >= -CP_TOL), float(lowest)


def check_cptp(channel, tol=CPTP_TOL):
    """(min Choi eigenvalue, trace-preservation defect, verdict)."""
    lowest = channel.min_choi_eig
    defect = channel.tp_defect
    return lowest, defect, bool(lowest >= -tol and defect <= tol)
