"""CPTP maps in Kraus form with a declared support region.

Channels store local Kraus matrices; embedding into the full space happens
lazily at application time, which keeps memory at the local dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hilbert
from ._linalg import DEFAULT_TOL, dagger, rank_cutoff, trace_distance
from .hilbert import MultipartiteSpace, NeighborhoodStructure


class ChannelError(ValueError):
    pass


class CapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Channel:
    kraus: tuple[np.ndarray, ...]
    support: tuple[int, ...]
    label: str = ""

    @property
    def local_dim(self) -> int:
        return self.kraus[0].shape[0]

    def tp_defect(self) -> float:
        m = self.local_dim
        s = sum(dagger(k) @ k for k in self.kraus)
        return float(np.max(np.abs(s - np.eye(m))))

    def adjoint_kraus(self) -> tuple[np.ndarray, ...]:
        return tuple(dagger(k) for k in self.kraus)


def make_channel(kraus, support, label: str = "", tp_tol: float = DEFAULT_TOL.trace_preserving) -> Channel:
    kraus = tuple(np.asarray(k, dtype=complex) for k in kraus)
    if not kraus:
        raise ChannelError("no Kraus operators")
    m = kraus[0].shape[0]
    for k in kraus:
        if k.ndim != 2 or k.shape != (m, m):
            raise ChannelError("Kraus operators must be square and equally sized")
    ch = Channel(kraus=kraus, support=tuple(sorted(int(i) for i in support)), label=label)
    defect = ch.tp_defect()
    if defect > tp_tol:
        raise ChannelError(f"trace preservation violated, defect {defect:.3e}")
    return ch


def unitary_channel(u, support, label: str = "") -> Channel:
    return make_channel([u], support, label=label)


def reset_channel(state, support, label: str = "") -> Channel:
    """Channel rho -> state * Tr(rho) on the support region.

    `state` is a vector (pure reset) or a density matrix (mixed reset).
    """
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        m = state.shape[0]
        kraus = [np.outer(state, e) for e in np.eye(m)]
    else:
        m = state.shape[0]
        ev, vecs = np.linalg.eigh(state)
        kraus = [
            np.sqrt(max(p, 0.0)) * np.outer(vecs[:, a], e)
            for a, p in enumerate(ev)
            if p > 1e-14
            for e in np.eye(m)
        ]
    return make_channel(kraus, support, label=label)


def compose(second: Channel, first: Channel, space: MultipartiteSpace, label: str = "") -> Channel:
    """Channel applying `first` then `second`, on the union support."""
    union = tuple(sorted(set(second.support) | set(first.support)))
    du = space.dim_of(union)

    def lift(ch: Channel) -> list[np.ndarray]:
        if tuple(ch.support) == union:
            return list(ch.kraus)
        sub_space = MultipartiteSpace([space.dims[i] for i in union])
        pos = {g: p for p, g in enumerate(union)}
        sub_support = [pos[g] for g in ch.support]
        return [
            hilbert.embed(hilbert.RegionOperator(k, sub_support), sub_space)
            for k in ch.kraus
        ]

    ka = lift(first)
    kb = lift(second)
    prod = [b @ a for b in kb for a in ka]
    return make_channel(prod, union, label=label or f"{second.label}*{first.label}")


def _apply_local(rho: np.ndarray, kraus, support, space: MultipartiteSpace) -> np.ndarray:
    """Apply a channel given by local Kraus matrices; one permutation round trip."""
    n = space.n_subsystems
    dest = hilbert.front_permutation(support, space)
    perm_space = MultipartiteSpace(hilbert.permuted_dims(dest, space))
    rp = hilbert.permute_subsystems(rho, dest, space)
    m = space.dim_of(support)
    r = space.total_dim // m
    rp = rp.reshape(m, r, m, r)
    out = np.zeros_like(rp)
    for k in kraus:
        tmp = np.einsum("ab,bqcr->aqcr", k, rp, optimize=True)
        out += np.einsum("aqcr,dc->aqdr", tmp, k.conj(), optimize=True)
    out = out.reshape(space.total_dim, space.total_dim)
    order = [0] * n
    for i, p in enumerate(dest):
        order[p] = i
    return hilbert.permute_subsystems(out, order, perm_space)


def apply(ch: Channel, rho: np.ndarray, space: MultipartiteSpace) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (space.total_dim, space.total_dim):
        raise ChannelError("density matrix does not match the space")
    if space.dim_of(ch.support) != ch.local_dim:
        raise ChannelError("channel support does not match the space")
    if len(ch.support) == space.n_subsystems:
        out = np.zeros_like(rho)
        for k in ch.kraus:
            out += k @ rho @ dagger(k)
        return out
    return _apply_local(rho, ch.kraus, ch.support, space)


def apply_to_pure(ch: Channel, psi: np.ndarray, space: MultipartiteSpace) -> list[np.ndarray]:
    """Images K_i |psi>; the output state is sum_i |v_i><v_i|."""
    psi = np.asarray(psi, dtype=complex)
    if len(ch.support) == space.n_subsystems:
        return [k @ psi for k in ch.kraus]
    dest = hilbert.front_permutation(ch.support, space)
    perm_space = MultipartiteSpace(hilbert.permuted_dims(dest, space))
    pp = hilbert.permute_subsystems(psi, dest, space).reshape(ch.local_dim, -1)
    order = [0] * space.n_subsystems
    for i, p in enumerate(dest):
        order[p] = i
    return [
        hilbert.permute_subsystems((k @ pp).reshape(-1), order, perm_space)
        for k in ch.kraus
    ]


@dataclass(frozen=True)
class Circuit:
    steps: tuple[Channel, ...]
    space: MultipartiteSpace

    def __len__(self) -> int:
        return len(self.steps)

    def quasi_local_in(self, nstruct: NeighborhoodStructure) -> bool:
        return all(
            any(set(ch.support) <= set(nk) for nk in nstruct) for ch in self.steps
        )


@dataclass(frozen=True)
class TrajectoryPoint:
    step: int
    rank: int
    trace_distance: float | None


def state_rank(rho: np.ndarray, rtol: float = DEFAULT_TOL.rank_rtol) -> int:
    ev = np.linalg.eigvalsh(rho)
    return rank_cutoff(np.abs(ev[::-1]), rho.shape, rtol)


def run(
    circuit: Circuit,
    rho0: np.ndarray,
    target: np.ndarray | None = None,
    record: bool = True,
) -> tuple[np.ndarray, list[TrajectoryPoint]]:
    """Apply the circuit steps in order; returns final state and trajectory."""
    rho = np.asarray(rho0, dtype=complex)
    space = circuit.space

    def dist(r):
        if target is None:
            return None
        return trace_distance(r, np.outer(target, target.conj()))

    traj = []
    if record:
        traj.append(TrajectoryPoint(0, state_rank(rho), dist(rho)))
    for t, ch in enumerate(circuit.steps, start=1):
        rho = apply(ch, rho, space)
        if record:
            traj.append(TrajectoryPoint(t, state_rank(rho), dist(rho)))
    return rho, traj


@dataclass(frozen=True)
class InvarianceReport:
    ok: bool
    defect: float


def check_invariance(
    ch: Channel,
    psi: np.ndarray,
    space: MultipartiteSpace,
    tol: float = DEFAULT_TOL.invariance,
) -> InvarianceReport:
    """Trace distance between E(|psi><psi|) and |psi><psi|.

    Computed inside the low-dimensional span of {psi, K_i psi}, so it stays
    cheap even for large total dimension.
    """
    psi = np.asarray(psi, dtype=complex)
    images = apply_to_pure(ch, psi, space)
    vecs = [psi] + images
    gram_basis = np.stack(vecs, axis=1)
    q, r = np.linalg.qr(gram_basis)
    # coordinates of psi and images in the span
    coords = r
    rho_out = sum(
        np.outer(coords[:, i + 1], coords[:, i + 1].conj()) for i in range(len(images))
    )
    rho_in = np.outer(coords[:, 0], coords[:, 0].conj())
    defect = trace_distance(rho_out, rho_in)
    return InvarianceReport(ok=defect < tol, defect=defect)


def kraus_support(
    ch: Channel,
    space: MultipartiteSpace,
    tol: float = 1e-9,
) -> tuple[int, ...]:
    """Smallest region R such that every Kraus operator is (M on R) tensor I."""
    sup = list(ch.support)
    sub_space = MultipartiteSpace([space.dims[i] for i in sup])
    keep: list[int] = []
    for pos, g in enumerate(sup):
        d_i = space.dims[g]
        trivially = True
        for k in ch.kraus:
            dest = hilbert.front_permutation([pos], sub_space)
            kp = hilbert.permute_subsystems(k, dest, sub_space)
            rest = kp.shape[0] // d_i
            kt = kp.reshape(d_i, rest, d_i, rest)
            t = np.einsum("aras->rs", kt) / d_i
            recon = np.einsum("ab,rs->arbs", np.eye(d_i), t).reshape(kp.shape)
            if np.max(np.abs(kp - recon)) > tol * max(1.0, np.max(np.abs(k))):
                trivially = False
                break
        if not trivially:
            keep.append(g)
    return tuple(keep)


def restrict_to_support(ch: Channel, space: MultipartiteSpace, tol: float = 1e-9) -> Channel:
    """Shrink the declared support to the actual Kraus support."""
    actual = kraus_support(ch, space, tol)
    if actual == tuple(ch.support):
        return ch
    if not actual:
        # proportional to identity on everything; keep one site for bookkeeping
        actual = (ch.support[0],)
    sup = list(ch.support)
    sub_space = MultipartiteSpace([space.dims[i] for i in sup])
    pos_keep = [sup.index(g) for g in actual]
    dest = hilbert.front_permutation(pos_keep, sub_space)
    dk = int(np.prod([space.dims[g] for g in actual]))
    rest = sub_space.total_dim // dk
    new_kraus = []
    for k in ch.kraus:
        kp = hilbert.permute_subsystems(k, dest, sub_space).reshape(dk, rest, dk, rest)
        new_kraus.append(kp[:, 0, :, 0].copy())
    return make_channel(new_kraus, actual, label=ch.label)


def superoperator(ch: Channel, space: MultipartiteSpace, max_side: int = 4096) -> np.ndarray:
    """Dense matrix of the map in the row-major vectorized basis."""
    d = space.total_dim
    if d * d > max_side * max_side:
        raise CapExceeded(f"superoperator side {d * d} exceeds cap {max_side * max_side}")
    s = np.zeros((d * d, d * d), dtype=complex)
    for k in ch.kraus:
        kg = k if len(ch.support) == space.n_subsystems else hilbert.embed(
            hilbert.RegionOperator(k, ch.support), space
        )
        s += np.kron(kg, kg.conj())
    return s


def channels_equal(a: Channel, b: Channel, space: MultipartiteSpace, rng=None, probes: int = 8, tol: float = 1e-9) -> bool:
    """Equality as superoperators, tested on random density-matrix probes."""
    from ._linalg import random_density

    rng = rng or np.random.default_rng(7)
    d = space.total_dim
    for _ in range(probes):
        rho = random_density(d, rng)
        if trace_distance(apply(a, rho, space), apply(b, rho, space)) > tol:
            return False
    return True
