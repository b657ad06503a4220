"""Compile abstract walk schedules into analog Rydberg programs and emulate them.

A walk segment of unitless time tau becomes a Rabi pulse of integrated area
2*tau; Hamming phasors become instantaneous drive-phase jumps; local-mask
phasors become gated-off triangles on the local detuning channel.  Atoms sit
on a circle sized so the van der Waals blockade enforces the ring's
independent-set constraint, with the perturbative prefactor eta shrinking the
blockade radius to balance first-order corrections against long-range tails.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import json
import numpy as np

from . import kernels
from .ctqw import AnsatzSchedule, StateVector
from .subspace import SubspaceBasis, popcount

__all__ = [
    "PhysicalConstants",
    "AtomLayout",
    "Waveform",
    "RydbergProgram",
    "ShotSet",
    "ring_eta",
    "compute_eta",
    "ring_layout",
    "synthesize_walk_pulse",
    "synthesize_phase_fragment",
    "compile_program",
    "emulate",
    "embed_subspace_state",
    "project_to_subspace",
    "state_fidelity",
    "sample_shots",
    "write_shot_file",
    "read_shot_file",
    "program_to_json",
]

# documented reference constants for non-ring geometries
CHAIN_N_B, CHAIN_N_U = 2.0, 2.220
KINGS_N_B, KINGS_N_U = 2.25, 7.791


@dataclass(frozen=True)
class PhysicalConstants:
    c6: float = 5420503.0            # um^6 rad/us
    omega_max: float = 15.8          # rad/us
    rise_time: float = 0.05          # us
    local_detuning_cap: float = 62.0  # rad/us

    def dynamic_radius(self, omega: float) -> float:
        """Distance where the interaction equals the drive strength."""
        return (self.c6 / omega) ** (1.0 / 6.0)


@dataclass(frozen=True)
class AtomLayout:
    positions: np.ndarray   # (n, 2) um
    r_max: float            # largest blockaded (edge) distance
    r_min: float            # smallest unblockaded (non-edge) distance
    eta: float
    r_b: float              # blockade radius eta*sqrt(r_min*r_max)
    diameter: float         # circumradius D for ring layouts (0 otherwise)

    @property
    def n_atoms(self) -> int:
        return len(self.positions)

    def pair_distances(self) -> np.ndarray:
        p = self.positions
        return np.linalg.norm(p[:, None, :] - p[None, :, :], axis=2)


def ring_eta(n: int) -> tuple[float, float]:
    """Blockade prefactor and per-vertex error norm for an n-ring.

    n_b = 2 nearest neighbors; unblockaded pairs are weighted by the
    twelfth-power interaction ratio relative to twice the neighbor distance,
    so the sum reduces to the infinite-chain convention as n grows.
    """
    if n < 5:
        raise ValueError("ring eta defined for n >= 5")
    d = lambda k: 2.0 * np.sin(k * np.pi / n)
    n_b = 2.0
    n_u = 0.0
    for k in range(2, n // 2 + 1):
        mult = 1.0 if (n % 2 == 0 and k == n // 2) else 2.0
        n_u += mult * (2.0 * d(1) / d(k)) ** 12
    eta = (n_b / (4.0 * n_u)) ** (1.0 / 24.0)
    return eta, n_u


def compute_eta(
    kind: str = "ring",
    n: Optional[int] = None,
    constants: PhysicalConstants = PhysicalConstants(),
    omega: Optional[float] = None,
    r_max_over_r_min: Optional[float] = None,
) -> tuple[float, float]:
    """(eta, ||H_err||/N) for a supported geometry.

    ``ring`` computes the finite-ring sums; ``chain`` and ``kings`` use the
    documented reference edge counts.  The error norm uses the minimized form
    sqrt(n_b*n_u) * Omega^2 * (r_max/r_min)^6.
    """
    if kind == "ring":
        if n is None:
            raise ValueError("ring eta needs n")
        eta, n_u = ring_eta(n)
        n_b = 2.0
        ratio = np.sin(np.pi / n) / np.sin(2.0 * np.pi / n)
    elif kind == "chain":
        n_b, n_u, ratio = CHAIN_N_B, CHAIN_N_U, 0.5
        eta = (n_b / (4.0 * n_u)) ** (1.0 / 24.0)
    elif kind == "kings":
        n_b, n_u, ratio = KINGS_N_B, KINGS_N_U, 1.0 / np.sqrt(2.0)
        eta = (n_b / (4.0 * n_u)) ** (1.0 / 24.0)
    else:
        raise ValueError(f"unknown geometry kind {kind!r}")
    om = constants.omega_max if omega is None else omega
    err = np.sqrt(n_b * n_u) * om**2 * ratio**6
    return float(eta), float(err)


def ring_layout(
    n: int,
    constants: PhysicalConstants = PhysicalConstants(),
    omega_avg: Optional[float] = None,
    eta: Optional[float] = None,
    scale: float = 1.0,
    row_snap: bool = False,
) -> AtomLayout:
    """n atoms equally spaced on a circle sized for nearest-neighbor blockade.

    D = r_d / (2 eta sqrt(sin(pi/n) sin(2pi/n))) with r_d the dynamic blockade
    radius at the average drive strength; ``scale`` is an optional variational
    factor on D.  ``row_snap`` quantizes coordinates to 0.1 um after flattening
    onto 2 um rows, mirroring hardware placement constraints.
    """
    if n < 3:
        raise ValueError("need at least 3 atoms")
    om = constants.omega_max if omega_avg is None else omega_avg
    if eta is None:
        eta = ring_eta(n)[0] if n >= 5 else 1.0
    r_d = constants.dynamic_radius(om)
    diam = scale * r_d / (2.0 * eta * np.sqrt(np.sin(np.pi / n) * np.sin(2.0 * np.pi / n)))
    theta = np.linspace(0.0, 2.0 * np.pi, n + 1)[:n]
    pos = np.stack([diam * np.sin(theta), diam * np.cos(theta)], axis=1)
    if row_snap:
        pos[:, 1] = np.round(pos[:, 1] / 2.0) * 2.0
        pos = np.round(pos * 10.0) / 10.0
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    edge_d, nonedge_d = [], []
    for i in range(n):
        for j in range(i + 1, n):
            if j - i == 1 or (i == 0 and j == n - 1):
                edge_d.append(dist[i, j])
            else:
                nonedge_d.append(dist[i, j])
    r_max = float(max(edge_d))
    r_min = float(min(nonedge_d)) if nonedge_d else float("inf")
    return AtomLayout(
        positions=pos,
        r_max=r_max,
        r_min=r_min,
        eta=float(eta),
        r_b=float(eta * np.sqrt(r_min * r_max)) if nonedge_d else float(r_max),
        diameter=float(diam),
    )


# ---------------------------------------------------------------------------
# waveform synthesis


@dataclass
class Waveform:
    """Time-aligned piecewise-linear channels.

    Each channel is a list of (time_us, value) breakpoints; ``local_weights``
    scales the shared local-detuning trace per site.  ``phase`` changes are
    zero-duration steps.  The local-detuning value multiplies +n_i in the
    Hamiltonian, so a positive-area triangle accumulates exp(-i*area*n).
    """

    amplitude: list = field(default_factory=list)      # Omega(t)
    phase: list = field(default_factory=list)          # phi(t), stepwise
    global_detuning: list = field(default_factory=list)
    local_detuning: list = field(default_factory=list)
    local_weights: Optional[np.ndarray] = None
    warnings: list = field(default_factory=list)

    @property
    def duration(self) -> float:
        ts = [t for t, _ in self.amplitude + self.local_detuning]
        return max(ts) if ts else 0.0


# pulse regimes: boundary where the fixed 0.10 us triangle hits the cap
_TRIANGLE_DUR = 0.10
_REGIME_TRAP_LOW, _REGIME_TRAP_HIGH = 0.59, 0.79


def synthesize_walk_pulse(
    tau: float, constants: PhysicalConstants = PhysicalConstants()
) -> tuple[list, list]:
    """Rabi fragment of integrated area exactly 2*tau.

    Returns (breakpoints, warnings); breakpoints are (t, Omega) starting at 0.
    Short pulses are triangles (fixed 0.10 us, then stretched once the peak
    hits the cap); longer ones are trapezoids, first at reduced amplitude over
    0.15 us, then at full amplitude with a growing plateau.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    om = constants.omega_max
    area = 2.0 * tau
    tri_dur = max(_TRIANGLE_DUR, 2.0 * area / om)
    if tau < _REGIME_TRAP_LOW:
        # triangle: area = dur*peak/2
        peak = 2.0 * area / tri_dur
        pts = [(0.0, 0.0), (tri_dur / 2.0, peak), (tri_dur, 0.0)]
    elif tau <= _REGIME_TRAP_HIGH:
        # reduced-amplitude trapezoid over 0.15 us: 0.05 ramps, 0.05 plateau
        peak = area / 0.10
        pts = [(0.0, 0.0), (0.05, peak), (0.10, peak), (0.15, 0.0)]
    else:
        # full-amplitude trapezoid, plateau stretches with tau
        plateau = area / om - constants.rise_time
        pts = [
            (0.0, 0.0),
            (constants.rise_time, om),
            (constants.rise_time + plateau, om),
            (2.0 * constants.rise_time + plateau, 0.0),
        ]
    peak_val = max(v for _, v in pts)
    if peak_val > om * (1.0 + 1e-12):
        raise ValueError(f"pulse for tau={tau} exceeds amplitude cap")
    return pts, []


_LOCAL_PULSE_DUR = 0.10


def synthesize_phase_fragment(
    kind: str,
    value,
    constants: PhysicalConstants = PhysicalConstants(),
) -> dict:
    """Phase fragment: a drive-phase step, or gated-off local triangles.

    ``global-jump``: zero-duration step of the Rabi phase by -gamma.
    ``local-pulse``: ``value`` is the per-site phase vector; the shared
    triangle carries the maximum phase as area and per-site weights scale it.
    Areas beyond cap*0.025 us split into repeated triangles (flagged).
    """
    if kind == "global-jump":
        gamma = float(value)
        if abs(gamma) > 2.0 * np.pi:
            raise ValueError("phase jump exceeds 2*pi")
        if gamma == 0.0:
            return {"kind": "global-jump", "step": 0.0, "duration": 0.0,
                    "triangles": [], "weights": None, "warnings": []}
        return {"kind": "global-jump", "step": -gamma, "duration": 0.0,
                "triangles": [], "weights": None, "warnings": []}
    if kind != "local-pulse":
        raise ValueError(f"unknown phase fragment kind {kind!r}")
    phi = np.asarray(value, dtype=float)
    phi_max = float(np.max(np.abs(phi)))
    warnings = []
    if phi_max == 0.0:
        return {"kind": "local-pulse", "step": 0.0, "duration": 0.0,
                "triangles": [], "weights": None, "warnings": []}
    weights = np.abs(phi) / phi_max
    sign = 1.0 if phi.flat[np.argmax(np.abs(phi))] >= 0 else -1.0
    if np.any(np.sign(phi[np.abs(phi) > 0]) != sign):
        raise ValueError("local phases must share a sign (weights in [0,1])")
    # triangle of duration 0.1 us: peak = 2*area/0.1; cap limits area per pulse
    max_area = constants.local_detuning_cap * _LOCAL_PULSE_DUR / 2.0
    n_pulses = int(np.ceil(phi_max / max_area - 1e-12))
    if n_pulses > 1:
        warnings.append(
            f"local phase {phi_max:.3f} exceeds single-pulse area "
            f"{max_area:.3f}; split into {n_pulses} triangles"
        )
    area_each = sign * phi_max / n_pulses
    peak = 2.0 * area_each / _LOCAL_PULSE_DUR
    tri = [(0.0, 0.0), (_LOCAL_PULSE_DUR / 2.0, peak), (_LOCAL_PULSE_DUR, 0.0)]
    return {
        "kind": "local-pulse",
        "step": 0.0,
        "duration": n_pulses * _LOCAL_PULSE_DUR,
        "triangles": [tri] * n_pulses,
        "weights": weights,
        "warnings": warnings,
    }


@dataclass
class RydbergProgram:
    layout: AtomLayout
    waveform: Waveform
    duration: float
    schedule: Optional[AnsatzSchedule] = None
    constants: PhysicalConstants = PhysicalConstants()


def _append_shifted(channel: list, pts: Sequence, t0: float) -> None:
    for t, v in pts:
        channel.append((t0 + t, v))


def compile_program(
    schedule: AnsatzSchedule,
    n: int,
    constants: PhysicalConstants = PhysicalConstants(),
    eta: Optional[float] = None,
    scale: float = 1.0,
    row_snap: bool = False,
    layout: Optional[AtomLayout] = None,
) -> RydbergProgram:
    """Concatenate pulse fragments in ansatz order over a ring layout.

    Geometry uses the time-average of Omega(t) over drive-on intervals,
    recomputed once after the waveform is known (single fixed-point pass).
    Global detuning stays identically zero.
    """
    schedule.validate()
    wf = Waveform()
    wf.phase.append((0.0, 0.0))
    wf.global_detuning.append((0.0, 0.0))
    t, phase_now = 0.0, 0.0
    segments = [("walk", schedule.tau0)]
    for gamma, tau in schedule.layers:
        segments.append(("phase", gamma))
        segments.append(("walk", tau))
    for kind, val in segments:
        if kind == "walk":
            if val == 0.0:
                continue
            pts, _ = synthesize_walk_pulse(val, constants)
            _append_shifted(wf.amplitude, pts, t)
            t += pts[-1][0]
        else:
            if schedule.phasor_kind == "hamming":
                frag = synthesize_phase_fragment("global-jump", val, constants)
                phase_now += frag["step"]
                wf.phase.append((t, phase_now))
            else:
                mask = schedule.target_mask
                phi = np.array([val if (mask >> i) & 1 else 0.0 for i in range(n)])
                frag = synthesize_phase_fragment("local-pulse", phi, constants)
                wf.warnings.extend(frag["warnings"])
                if wf.local_weights is None:
                    wf.local_weights = frag["weights"]
                for tri in frag["triangles"]:
                    wf.local_detuning.append((t, 0.0))
                    _append_shifted(wf.local_detuning, tri[1:], t)
                    t += tri[-1][0]
    duration = t
    # single fixed-point pass: recompute geometry at the drive-on average of Omega
    omega_avg = _drive_on_average(wf.amplitude)
    if layout is None:
        layout = ring_layout(n, constants, omega_avg=omega_avg, eta=eta,
                             scale=scale, row_snap=row_snap)
    return RydbergProgram(
        layout=layout, waveform=wf, duration=duration,
        schedule=schedule, constants=constants,
    )


def _drive_on_average(amplitude: list) -> float:
    """Time-average of Omega(t) over the intervals where the drive is on."""
    if len(amplitude) < 2:
        return PhysicalConstants().omega_max
    area = on_time = 0.0
    for (t0, v0), (t1, v1) in zip(amplitude[:-1], amplitude[1:]):
        if t1 <= t0:
            continue
        if v0 > 0 or v1 > 0:
            area += 0.5 * (v0 + v1) * (t1 - t0)
            on_time += t1 - t0
    return area / on_time if on_time > 0 else PhysicalConstants().omega_max


# ---------------------------------------------------------------------------
# emulation


def _sample_channel(channel: list, t: float, default: float = 0.0) -> float:
    """Linear interpolation within fragments; 0 between them."""
    if not channel:
        return default
    val = default
    prev_t, prev_v = None, None
    for ct, cv in channel:
        if ct > t:
            if prev_t is not None and prev_t <= t:
                if ct == prev_t:
                    return prev_v
                return prev_v + (cv - prev_v) * (t - prev_t) / (ct - prev_t)
            return default
        prev_t, prev_v = ct, cv
    return prev_v if prev_t is not None and prev_t <= t else default


def _phase_at(phase: list, t: float) -> float:
    val = 0.0
    for ct, cv in phase:
        if ct <= t:
            val = cv
        else:
            break
    return val


def _lanczos_expm(apply_h, psi: np.ndarray, dt: float, m: int = 24) -> np.ndarray:
    """exp(-i dt H) psi for Hermitian H given as a matvec."""
    dim = psi.shape[0]
    m = min(m, dim)
    V = np.zeros((m, dim), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        return psi
    V[0] = psi / nrm
    k = m
    for j in range(m):
        w = apply_h(V[j])
        if j > 0:
            w -= beta[j - 1] * V[j - 1]
        alpha[j] = np.real(np.vdot(V[j], w))
        w -= alpha[j] * V[j]
        proj = V[: j + 1].conj() @ w
        w -= V[: j + 1].T @ proj
        b = np.linalg.norm(w)
        if j < m - 1:
            beta[j] = b
            if b < 1e-14:
                k = j + 1
                break
            V[j + 1] = w / b
    T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
    ew, ev = np.linalg.eigh(T)
    small = ev @ (np.exp(-1j * dt * ew) * ev[0].conj())
    return nrm * (V[:k].T @ small)


def emulate(
    program: RydbergProgram,
    max_step: float = 1e-3,
    initial: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Dense 2^n integration of the time-dependent Rydberg Hamiltonian.

    H(t) = sum_i Omega(t)/2 (e^{i phi}|g><r|_i + h.c.) + delta(t) w_i n_i
         + sum_{i<j} C6/r_ij^6 n_i n_j, integrated with a second-order
    midpoint exponential rule at steps of at most ``max_step`` (1 ns default).
    """
    n = program.layout.n_atoms
    if n > 14:
        raise ValueError("dense emulation supported for n <= 14")
    dim = 1 << n
    psi = np.zeros(dim, dtype=complex)
    if initial is None:
        psi[0] = 1.0
    else:
        psi[:] = initial
    dist = program.layout.pair_distances()
    c6 = program.constants.c6
    idx = np.arange(dim)
    bits = ((idx[:, None] >> np.arange(n)[None, :]) & 1).astype(np.float64)
    vdw = np.zeros(dim)
    for i in range(n):
        for j in range(i + 1, n):
            vdw += (c6 / dist[i, j] ** 6) * bits[:, i] * bits[:, j]
    weights = program.waveform.local_weights
    local_n = bits @ weights if weights is not None else None

    # integration breakpoints: all channel knots, then sub-divide to max_step
    knots = sorted({0.0, program.duration}
                   | {t for t, _ in program.waveform.amplitude}
                   | {t for t, _ in program.waveform.local_detuning}
                   | {t for t, _ in program.waveform.phase})
    amp_ch = program.waveform.amplitude
    loc_ch = program.waveform.local_detuning
    ph_ch = program.waveform.phase
    out = np.empty(dim, dtype=complex)

    for a, b in zip(knots[:-1], knots[1:]):
        if b <= a:
            continue
        steps = max(1, int(np.ceil((b - a) / max_step)))
        dt = (b - a) / steps
        for s in range(steps):
            tm = a + (s + 0.5) * dt
            om = _sample_channel(amp_ch, tm)
            dl = _sample_channel(loc_ch, tm)
            phi = _phase_at(ph_ch, tm)
            diag = vdw.copy()
            if local_n is not None and dl != 0.0:
                diag += dl * local_n
            if om == 0.0 and dl == 0.0:
                psi *= np.exp(-1j * dt * vdw)
                continue
            if om == 0.0:
                psi *= np.exp(-1j * dt * diag)
                continue

            def apply_h(v, om=om, phi=phi, diag=diag):
                return kernels.rydberg_apply(v, diag, om, phi, n, np.empty_like(v))

            psi = _lanczos_expm(apply_h, psi, dt)
    return psi


def embed_subspace_state(state: StateVector) -> np.ndarray:
    """Lift a subspace state into the full 2^n register (bit i = atom i)."""
    full = np.zeros(1 << state.basis.n_bits, dtype=complex)
    full[state.basis.states] = state.amplitudes
    return full


def project_to_subspace(full: np.ndarray, basis: SubspaceBasis) -> np.ndarray:
    """Amplitudes on the blockade subspace (not renormalized)."""
    return full[basis.states]


def state_fidelity(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) ** 2)


# ---------------------------------------------------------------------------
# shots


@dataclass(frozen=True)
class ShotSet:
    n_bits: int
    shots: np.ndarray     # uint64 bitmasks
    p00: float
    p11: float
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.shots)

    def bitstrings(self) -> list:
        return [format(int(s), f"0{self.n_bits}b") for s in self.shots]


def sample_shots(
    full_state: np.ndarray,
    n_bits: int,
    shots: int,
    p00: float = 1.0,
    p11: float = 1.0,
    seed: Optional[int] = None,
) -> ShotSet:
    """Z-basis samples with independent per-bit asymmetric readout flips."""
    if shots < 1:
        raise ValueError("need at least one shot")
    rng = np.random.default_rng(seed)
    probs = np.abs(full_state) ** 2
    probs = probs / probs.sum()
    raw = rng.choice(len(probs), size=shots, p=probs).astype(np.uint64)
    if p00 < 1.0 or p11 < 1.0:
        out = np.zeros(shots, dtype=np.uint64)
        for i in range(n_bits):
            bit = (raw >> np.uint64(i)) & np.uint64(1)
            u = rng.random(shots)
            keep1 = u < p11
            keep0 = u < p00
            new_bit = np.where(bit == 1, keep1.astype(np.uint64),
                               (~keep0).astype(np.uint64))
            out |= new_bit << np.uint64(i)
        raw = out
    return ShotSet(n_bits=n_bits, shots=raw, p00=p00, p11=p11, seed=seed)


def write_shot_file(path: str, shot_set: ShotSet) -> None:
    with open(path, "w") as f:
        f.write(
            f"# n={shot_set.n_bits} shots={len(shot_set)} "
            f"p00={shot_set.p00} p11={shot_set.p11} seed={shot_set.seed}\n"
        )
        for s in shot_set.bitstrings():
            f.write(s + "\n")


def read_shot_file(path: str) -> ShotSet:
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith("#"):
            raise ValueError("shot file missing header")
        meta = dict(kv.split("=") for kv in header[1:].split())
        masks = [int(line.strip(), 2) for line in f if line.strip()]
    seed = None if meta.get("seed") in (None, "None") else int(meta["seed"])
    return ShotSet(
        n_bits=int(meta["n"]),
        shots=np.array(masks, dtype=np.uint64),
        p00=float(meta["p00"]),
        p11=float(meta["p11"]),
        seed=seed,
    )


def program_to_json(program: RydbergProgram) -> str:
    """Stable JSON export: positions plus channel breakpoint lists."""
    pos = np.round(program.layout.positions * 10.0) / 10.0
    doc = {
        "version": 1,
        "n_atoms": program.layout.n_atoms,
        "positions_um": pos.tolist(),
        "duration_us": program.duration,
        "channels": {
            "rabi_amplitude": program.waveform.amplitude,
            "rabi_phase": program.waveform.phase,
            "global_detuning": program.waveform.global_detuning,
            "local_detuning": program.waveform.local_detuning,
            "local_weights": (
                program.waveform.local_weights.tolist()
                if program.waveform.local_weights is not None else None
            ),
        },
        "warnings": program.waveform.warnings,
    }
    return json.dumps(doc, indent=2, sort_keys=True)
