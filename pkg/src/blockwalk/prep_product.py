"""Analytic seeding and local optimization of (tau0, tau1) for single-target runs.

The walk generator is split by the complement-mask pi-phasor of the target
string into a part that preserves the phasor's +1 eigenspace and a part that
couples out of it.  Norms of the two parts acting on the all-zeros state give
an effective two-parameter chain model whose closed-form optimum seeds a
Nelder-Mead refinement of the exact success probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .ctqw import (
    AnsatzSchedule,
    WalkGenerator,
    run_ansatz,
    success_probability,
)
from .subspace import SubspaceBasis, popcount

__all__ = [
    "SubspaceSplit",
    "ChainModel",
    "ProductResult",
    "split_generator",
    "chain_parameters",
    "analytic_seed",
    "product_schedule",
    "optimize_product",
    "product_csv_row",
]

MAX_EVALS = 500
SIMPLEX_SCALE = 0.05
CONVERGENCE_TOL = 1e-6


@dataclass(frozen=True)
class SubspaceSplit:
    """Generator split G = G_plus + G_minus induced by a diagonal sign operator.

    ``signs`` is the +-1 spectrum of the complement-mask pi-phasor of
    ``target``; ``g_plus`` commutes with it (maps the +1 eigenspace to
    itself) while ``g_minus`` anticommutes (couples +1 to -1).
    """

    basis: SubspaceBasis
    target: int
    signs: np.ndarray
    g_plus: sp.csr_matrix
    g_minus: sp.csr_matrix


@dataclass(frozen=True)
class ChainModel:
    """Effective transfer-chain parameters for a weight-k target.

    Couplings follow the closed form J_{j,j+1} = sqrt((k-j)(j+1)); ``j0z``
    is their geometric mean, the end-to-end effective coupling.  ``beta_plus``
    and ``beta_minus`` are the norms of the retained and leaking generator
    parts applied to the all-zeros state; ``kappa`` weighs leakage against
    retention when seeding tau0.
    """

    k: int
    couplings: tuple[float, ...]
    j0z: float
    beta_plus: float
    beta_minus: float
    kappa: float


@dataclass(frozen=True)
class ProductResult:
    tau0: float
    tau1: float
    success: float
    depth: int
    t_eff: float
    j_eff: float
    evaluations: int
    converged: bool


def split_generator(gen: WalkGenerator, z_star: int) -> SubspaceSplit:
    """Split ``gen`` into sign-preserving and sign-flipping parts.

    ``z_star`` must be a member of the basis.  The sign operator is the
    complement-mask pi-phasor, which leaves both the all-zeros state and
    ``z_star`` in its +1 eigenspace.
    """
    basis = gen.basis
    if z_star not in basis:
        raise ValueError(f"target state {z_star:b} not in subspace")
    mask = (~z_star) & ((1 << basis.n_bits) - 1)
    signs = np.array(
        [1.0 if popcount(int(a) & mask) % 2 == 0 else -1.0 for a in basis.states]
    )
    g = gen.matrix.tocsr()
    u = sp.diags(signs)
    conj = (u @ g @ u).tocsr()
    g_plus = ((g + conj) * 0.5).tocsr()
    g_minus = ((g - conj) * 0.5).tocsr()
    return SubspaceSplit(
        basis=basis, target=z_star, signs=signs, g_plus=g_plus, g_minus=g_minus
    )


def _estimate_kappa(split: SubspaceSplit) -> float:
    """Ratio of leaking to retained strength of the split commutator.

    Probes [G+, G-] on the first chain state (normalized G+|0>) and compares
    the component staying in the +1 sector against the component leaking out.
    Falls back to 1.0 when the estimate is degenerate.
    """
    basis = split.basis
    v0 = np.zeros(len(basis))
    v0[basis.index_of(0)] = 1.0
    w1 = split.g_plus @ v0
    nw1 = np.linalg.norm(w1)
    if nw1 < 1e-12:
        return 1.0
    w1 /= nw1
    comm = split.g_plus @ (split.g_minus @ w1) - split.g_minus @ (split.g_plus @ w1)
    plus_sel = split.signs > 0
    kappa_ret = np.linalg.norm(comm[plus_sel])
    kappa_leak = np.linalg.norm(comm[~plus_sel])
    if kappa_ret < 1e-12 or kappa_leak < 1e-12:
        return 1.0
    kappa = kappa_leak / kappa_ret
    if not np.isfinite(kappa) or kappa <= 0:
        return 1.0
    return float(kappa)


def chain_parameters(split: SubspaceSplit) -> ChainModel:
    """Closed-form chain couplings plus measured beta norms for the split."""
    k = popcount(split.target)
    if k < 1:
        raise ValueError("target must have Hamming weight >= 1")
    couplings = tuple(
        float(np.sqrt((k - j) * (j + 1))) for j in range(k)
    )
    j0z = float(np.prod(couplings) ** (1.0 / k))
    basis = split.basis
    v0 = np.zeros(len(basis))
    v0[basis.index_of(0)] = 1.0
    beta_plus = float(np.linalg.norm(split.g_plus @ v0))
    beta_minus = float(np.linalg.norm(split.g_minus @ v0))
    kappa = _estimate_kappa(split)
    return ChainModel(
        k=k,
        couplings=couplings,
        j0z=j0z,
        beta_plus=beta_plus,
        beta_minus=beta_minus,
        kappa=kappa,
    )


def _p_prime(p: int) -> int:
    """Layer count entering the effective transfer time: ceil(p/2)."""
    return (p + 1) // 2


def effective_coupling(model: ChainModel, tau0: float) -> float:
    """End-to-end coupling attenuated by the leakage-angle cosine at tau0."""
    if model.beta_plus <= 0:
        return model.j0z
    ratio = model.beta_minus**2 * tau0 / model.beta_plus**2
    return model.j0z / np.sqrt(1.0 + ratio * ratio)


def analytic_seed(model: ChainModel, p: int) -> tuple[float, float]:
    """Closed-form (tau0, tau1) starting point for a depth-p schedule.

    tau0 balances leakage against retention via kappa; tau1 fills the
    remaining effective transfer time pi/(2 J_eff).  When the kappa balance
    is undefined (beta_minus <= kappa^2 beta_plus) a small-tau0 fallback
    seed is used instead.
    """
    if p < 1:
        raise ValueError("depth must be >= 1")
    kappa = model.kappa
    denom = model.beta_minus**2 - kappa * kappa * model.beta_plus**2
    if denom > 1e-12:
        tau0 = float(kappa / np.sqrt(denom))
    else:
        tau0 = 0.1
    j_eff = effective_coupling(model, tau0)
    pp = _p_prime(p)
    tau1 = float((np.pi / (2.0 * j_eff) - tau0) / pp)
    if tau1 <= 0:
        tau1 = float(np.pi / (2.0 * model.j0z * pp))
    return tau0, tau1


def _schedule(tau0: float, tau1: float, p: int, n_bits: int, z_star: int) -> AnsatzSchedule:
    mask = (~z_star) & ((1 << n_bits) - 1)
    return AnsatzSchedule(
        tau0=tau0,
        layers=tuple((np.pi, tau1) for _ in range(p)),
        phasor_kind="local",
        target_mask=mask,
    )


def product_schedule(
    tau0: float, tau1: float, p: int, n_bits: int, z_star: int
) -> AnsatzSchedule:
    """Depth-p schedule: walk tau0, then p layers of (pi-phasor, walk tau1).

    The phasor puts phase pi on every site outside the target string, so the
    target is the unique +1 eigenstate reachable from the all-zeros start.
    """
    return _schedule(tau0, tau1, p, n_bits, z_star)


def evaluate_product(
    basis: SubspaceBasis,
    gen: WalkGenerator,
    z_star: int,
    p: int,
    tau0: float,
    tau1: float,
) -> float:
    """Success probability of the depth-p pi-phasor schedule at (tau0, tau1)."""
    sched = _schedule(tau0, tau1, p, basis.n_bits, z_star)
    final = run_ansatz(sched, gen)
    return success_probability(final, [basis.index_of(z_star)])


def optimize_product(
    basis: SubspaceBasis,
    gen: WalkGenerator,
    z_star: int,
    p: int,
    seed: Optional[tuple[float, float]] = None,
) -> ProductResult:
    """Locally optimize (tau0, tau1) from the analytic seed with Nelder-Mead."""
    if not 1 <= p <= 5:
        raise ValueError("supported depths are 1..5")
    if seed is None:
        split = split_generator(gen, z_star)
        model = chain_parameters(split)
        seed = analytic_seed(model, p)

    def objective(x: np.ndarray) -> float:
        t0, t1 = abs(x[0]), abs(x[1])
        return 1.0 - evaluate_product(basis, gen, z_star, p, t0, t1)

    x0 = np.array(seed, dtype=float)
    simplex = np.array([x0, x0 + [SIMPLEX_SCALE, 0.0], x0 + [0.0, SIMPLEX_SCALE]])
    res = scipy.optimize.minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": CONVERGENCE_TOL,
            "fatol": CONVERGENCE_TOL,
            "maxfev": MAX_EVALS,
        },
    )
    tau0, tau1 = float(abs(res.x[0])), float(abs(res.x[1]))
    success = 1.0 - float(res.fun)
    t_eff = tau0 + p * tau1
    j_eff = float(np.pi / (2.0 * t_eff))
    return ProductResult(
        tau0=tau0,
        tau1=tau1,
        success=success,
        depth=p,
        t_eff=t_eff,
        j_eff=j_eff,
        evaluations=int(res.nfev),
        converged=bool(res.success),
    )


def product_csv_row(
    n: int, basis_size: int, z_star_str: str, result: ProductResult
) -> str:
    """One CSV line: N, |V|, state, p, tau0, tau1, J_eff, P."""
    return (
        f"{n},{basis_size},{z_star_str},{result.depth},"
        f"{result.tau0:.3f},{result.tau1:.3f},{result.j_eff:.3f},{result.success:.3f}"
    )
