"""Reconstruct pre-measurement distributions from noisy shots.

The model mixes a full probability vector over the blockaded subspace with a
per-bit Bernoulli background for everything outside it, convolved with an
asymmetric per-bit readout channel.  Expectation-maximization recovers the
maximum-likelihood parameters; a nonparametric bootstrap gives confidence
intervals on target probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import json
import numpy as np

from .rydberg import ShotSet
from .subspace import SubspaceBasis, bits_to_str

__all__ = [
    "ReadoutChannel",
    "EMModel",
    "ReconstructionResult",
    "channel_likelihood",
    "em_reconstruct",
    "bootstrap_ci",
    "reconstruct_with_ci",
    "result_to_json",
]

PROB_FLOOR = 1e-300
PARAM_CLIP = 1e-12
DEFAULT_EPS = 1e-8
DEFAULT_MAX_ITER = 10_000
DEFAULT_RESAMPLES = 1000


@dataclass(frozen=True)
class ReadoutChannel:
    """Independent per-bit flips: p00 = P(read 0 | true 0), p11 = P(read 1 | true 1)."""

    p00: float = 0.99
    p11: float = 0.93

    def __post_init__(self):
        if not (0.0 <= self.p00 <= 1.0 and 0.0 <= self.p11 <= 1.0):
            raise ValueError("channel probabilities must lie in [0, 1]")


STANDARD_CHANNEL = ReadoutChannel(0.99, 0.93)
LOCAL_DETUNING_CHANNEL = ReadoutChannel(0.90, 0.93)


def _popcount_array(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(x).astype(np.int64)
    out = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        out += (x & np.uint64(1)).astype(np.int64)
        x = x >> np.uint64(1)
    return out


def channel_likelihood(z: int, s: int, n_bits: int, channel: ReadoutChannel) -> float:
    """K(z|s) = prod_j P(z_j | s_j)."""
    mask = (1 << n_bits) - 1
    n11 = bin(z & s).count("1")
    n10 = bin(s & ~z & mask).count("1")          # true 1 read 0
    n01 = bin(z & ~s & mask).count("1")          # true 0 read 1
    n00 = n_bits - n11 - n10 - n01
    return (
        channel.p00 ** n00
        * (1.0 - channel.p00) ** n01
        * (1.0 - channel.p11) ** n10
        * channel.p11 ** n11
    )


def _likelihood_matrix(
    z: np.ndarray, s: np.ndarray, n_bits: int, channel: ReadoutChannel
) -> np.ndarray:
    """L[k, i] = K(z_i | s_k), vectorized over bit-counting of masked overlaps."""
    mask = np.uint64((1 << n_bits) - 1)
    zz = z.astype(np.uint64)[None, :]
    sk = s.astype(np.uint64)[:, None]
    n11 = _popcount_array(zz & sk)
    n10 = _popcount_array(sk & ~zz & mask)
    n01 = _popcount_array(zz & ~sk & mask)
    n00 = n_bits - n11 - n10 - n01
    with np.errstate(divide="ignore"):
        logs = (
            n00 * np.log(max(channel.p00, PROB_FLOOR))
            + n01 * np.log(max(1.0 - channel.p00, PROB_FLOOR))
            + n10 * np.log(max(1.0 - channel.p11, PROB_FLOOR))
            + n11 * np.log(max(channel.p11, PROB_FLOOR))
        )
    return np.exp(logs)


def _background_likelihood(
    z: np.ndarray,
    phi_perp: np.ndarray,
    subspace_states: np.ndarray,
    L_sub: np.ndarray,
    channel: ReadoutChannel,
    n_bits: int,
) -> tuple:
    """(unnormalized complement likelihoods, Bernoulli mass on the subspace).

    The full-space convolution factorizes per bit; subtracting the |V| terms
    that belong to the subspace leaves the complement sum exactly.  Dividing
    by 1 - mass(V) normalizes the background into a proper component density.
    """
    # per-bit values of z
    zbits = ((z.astype(np.uint64)[:, None] >> np.arange(n_bits, dtype=np.uint64)[None, :])
             & np.uint64(1)).astype(np.float64)   # (U, N)
    # P(z_j | s_j=1) and P(z_j | s_j=0)
    p_given1 = np.where(zbits == 1.0, channel.p11, 1.0 - channel.p11)
    p_given0 = np.where(zbits == 1.0, 1.0 - channel.p00, channel.p00)
    full = np.prod(phi_perp[None, :] * p_given1 + (1.0 - phi_perp)[None, :] * p_given0,
                   axis=1)                        # (U,)
    # in-subspace correction: sum_k P_out(s_k) K(z_i|s_k)
    sbits = ((subspace_states.astype(np.uint64)[:, None]
              >> np.arange(n_bits, dtype=np.uint64)[None, :]) & np.uint64(1)).astype(float)
    p_out = np.prod(np.where(sbits == 1.0, phi_perp[None, :], (1.0 - phi_perp)[None, :]),
                    axis=1)                       # (|V|,)
    corr = p_out @ L_sub                          # (U,)
    return np.maximum(full - corr, 0.0), float(p_out.sum())


@dataclass
class EMModel:
    basis: SubspaceBasis
    channel: ReadoutChannel
    phi_v: np.ndarray               # (|V|,)
    phi_perp: np.ndarray            # (N,)
    prior: tuple = (1.0, 1.0)
    log_likelihood: list = field(default_factory=list)
    objective: list = field(default_factory=list)   # likelihood + Beta penalty
    iterations: int = 0
    converged: bool = False

    @property
    def out_of_subspace_mass(self) -> float:
        return float(max(0.0, 1.0 - self.phi_v.sum()))

    def target_probability(self, target: Union[int, Sequence[int]]) -> float:
        if isinstance(target, (int, np.integer)):
            target = [int(target)]
        return float(sum(self.phi_v[self.basis.index_of(t)] for t in target))


def em_reconstruct(
    shots: ShotSet,
    basis: SubspaceBasis,
    channel: ReadoutChannel,
    prior: tuple = (1.0, 1.0),
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
) -> EMModel:
    """Expectation-maximization over subspace weights + Bernoulli background.

    The model is the proper mixture m = sum_k phi_k L_k + (1 - sum phi) B,
    where B is the Bernoulli background convolved with the channel and
    normalized over the complement of the subspace.  The phi_perp update is
    the exact M-step of the Beta-penalized objective for the unnormalized
    background; the complement renormalization makes it approximate, so each
    update is damped (step halving) until the penalized `objective` does not
    decrease.  `objective` is therefore non-decreasing by construction; the
    raw likelihood trace can still dip by the penalty's pull toward 1/2.
    """
    if len(shots) == 0:
        raise ValueError("no shots")
    if shots.n_bits != basis.n_bits:
        raise ValueError("shot width does not match basis")
    n = basis.n_bits
    alpha, beta = prior
    uniq, counts = np.unique(np.asarray(shots.shots, dtype=np.uint64),
                             return_counts=True)
    weights = counts.astype(float)
    total = weights.sum()
    states = np.asarray(basis.states, dtype=np.uint64)
    L = _likelihood_matrix(uniq, states, n, channel)    # (|V|, U)
    zbits = ((uniq[:, None] >> np.arange(n, dtype=np.uint64)[None, :])
             & np.uint64(1)).astype(np.float64)          # (U, N)
    p1z = np.where(zbits == 1.0, channel.p11, 1.0 - channel.p11)   # P(z_j | T=1)
    p0z = np.where(zbits == 1.0, 1.0 - channel.p00, channel.p00)   # P(z_j | T=0)

    def _evaluate(pv: np.ndarray, pp: np.ndarray) -> tuple:
        l_perp, mass_v = _background_likelihood(uniq, pp, states, L,
                                                channel, n)
        bg_ = l_perp / max(1.0 - mass_v, PROB_FLOOR)
        pi_ = max(1.0 - pv.sum(), PROB_FLOOR)
        m_ = np.maximum(pv @ L + pi_ * bg_, PROB_FLOOR)
        ll_ = float(weights @ np.log(m_))
        obj_ = ll_ + float(np.sum(alpha * np.log(pp) + beta * np.log1p(-pp)))
        return ll_, obj_, m_, bg_, pi_

    phi_v = np.full(len(basis), 1.0 / (len(basis) + 1))
    phi_perp = np.full(n, 0.5)
    ll_trace, obj_trace = [], []
    converged = False
    it = 0
    ll, obj, m, bg, pi_perp = _evaluate(phi_v, phi_perp)
    for it in range(1, max_iter + 1):
        ll_trace.append(ll)
        obj_trace.append(obj)
        rho = (phi_v[:, None] * L) / m[None, :]          # (|V|, U)
        rho_perp = pi_perp * bg / m                      # (U,)
        new_phi_v = (rho @ weights) / total
        # posterior bit expectation by channel inversion, then penalized mean
        post1 = (phi_perp[None, :] * p1z) / np.maximum(
            phi_perp[None, :] * p1z + (1.0 - phi_perp)[None, :] * p0z, PROB_FLOOR)
        w_perp = rho_perp * weights
        denom = w_perp.sum() + alpha + beta
        new_phi_perp = (w_perp @ post1 + alpha) / denom
        new_phi_v = np.clip(new_phi_v, PARAM_CLIP, 1.0 - PARAM_CLIP)
        new_phi_perp = np.clip(new_phi_perp, PARAM_CLIP, 1.0 - PARAM_CLIP)
        # damped acceptance: halve the step until the objective is not
        # reduced (the complement renormalization spoils the exact M-step)
        lam = 1.0
        accepted = None
        for _ in range(40):
            cand_v = phi_v + lam * (new_phi_v - phi_v)
            cand_p = phi_perp + lam * (new_phi_perp - phi_perp)
            cand = _evaluate(cand_v, cand_p)
            if cand[1] >= obj - 1e-12:
                accepted = (cand_v, cand_p, cand)
                break
            lam *= 0.5
        if accepted is None:  # no improving direction: at a stationary point
            converged = True
            break
        cand_v, cand_p, cand = accepted
        delta = (np.abs(cand_v - phi_v).sum()
                 + np.abs(cand_p - phi_perp).sum() / n)
        phi_v, phi_perp = cand_v, cand_p
        ll, obj, m, bg, pi_perp = cand
        if delta < eps:
            converged = True
            break
    return EMModel(
        basis=basis, channel=channel, phi_v=phi_v, phi_perp=phi_perp,
        prior=prior, log_likelihood=ll_trace, objective=obj_trace,
        iterations=it, converged=converged,
    )


def background_likelihood_bruteforce(
    z: int, phi_perp: np.ndarray, basis: SubspaceBasis, channel: ReadoutChannel
) -> float:
    """Oracle: explicit sum over the complement of the subspace (2^N work)."""
    n = basis.n_bits
    total = 0.0
    for s in range(1 << n):
        if s in basis:
            continue
        p_out = 1.0
        for j in range(n):
            bit = (s >> j) & 1
            p_out *= phi_perp[j] if bit else (1.0 - phi_perp[j])
        total += channel_likelihood(z, s, n, channel) * p_out
    return total


@dataclass(frozen=True)
class ReconstructionResult:
    model: EMModel
    target: tuple
    point: float
    ci_low: float
    ci_high: float
    resamples: int

    def __post_init__(self):
        if not (self.ci_low <= self.point + 1e-12
                and self.point <= self.ci_high + 1e-12):
            raise ValueError("confidence interval does not bracket the point")


def bootstrap_ci(
    shots: ShotSet,
    basis: SubspaceBasis,
    channel: ReadoutChannel,
    target: Union[int, Sequence[int]],
    resamples: int = DEFAULT_RESAMPLES,
    level: float = 0.95,
    seed: Optional[int] = None,
    prior: tuple = (1.0, 1.0),
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple:
    """Percentile bootstrap over with-replacement shot resamples."""
    rng = np.random.default_rng(seed)
    point_model = em_reconstruct(shots, basis, channel, prior, eps, max_iter)
    point = point_model.target_probability(target)
    arr = np.asarray(shots.shots, dtype=np.uint64)
    estimates = np.empty(resamples)
    for r in range(resamples):
        sample = rng.choice(arr, size=len(arr), replace=True)
        res = ShotSet(n_bits=shots.n_bits, shots=sample,
                      p00=shots.p00, p11=shots.p11, seed=None)
        estimates[r] = em_reconstruct(res, basis, channel, prior, eps,
                                      max_iter).target_probability(target)
    tail = (1.0 - level) / 2.0
    low = float(np.quantile(estimates, tail))
    high = float(np.quantile(estimates, 1.0 - tail))
    # percentile intervals from finite resamples may not bracket the full-data
    # point estimate; widen to include it
    return min(low, point), point, max(high, point)


def reconstruct_with_ci(
    shots: ShotSet,
    basis: SubspaceBasis,
    channel: ReadoutChannel,
    target: Union[int, Sequence[int]],
    resamples: int = DEFAULT_RESAMPLES,
    level: float = 0.95,
    seed: Optional[int] = None,
) -> ReconstructionResult:
    model = em_reconstruct(shots, basis, channel)
    low, point, high = bootstrap_ci(shots, basis, channel, target,
                                    resamples, level, seed)
    tgt = (target,) if isinstance(target, (int, np.integer)) else tuple(target)
    return ReconstructionResult(model=model, target=tgt, point=point,
                                ci_low=low, ci_high=high, resamples=resamples)


def result_to_json(result: ReconstructionResult) -> str:
    basis = result.model.basis
    doc = {
        "states": {
            bits_to_str(int(s), basis.n_bits): float(p)
            for s, p in zip(basis.states, result.model.phi_v)
        },
        "target": [bits_to_str(int(t), basis.n_bits) for t in result.target],
        "target_probability": result.point,
        "ci": [result.ci_low, result.ci_high],
        "out_of_subspace_mass": result.model.out_of_subspace_mass,
        "iterations": result.model.iterations,
        "converged": result.model.converged,
    }
    return json.dumps(doc, indent=2, sort_keys=True)
