"""Orbit-superposition planning and golden-row checks."""

import numpy as np
import pytest

from blockwalk import ctqw, prep_bracelet as pb, subspace as ss
from golden import BRACELET_ROWS


def _setup(n):
    basis = ss.enumerate_subspace(ss.ring_graph(n))
    return basis, ctqw.build_generator(basis)


def _plan_from_row(row):
    n, _, target, depth, tau_eff, gamma, _, _ = row
    tau = tau_eff / (depth + 1)
    return pb.BraceletPlan(tau_tot=tau_eff, p=depth, tau=tau,
                           gamma=np.asarray(gamma, dtype=float),
                           success=0.0, converged=True)


def test_reduced_walk_matches_full_simulation():
    n = 7
    basis, gen = _setup(n)
    orbit = ss.dihedral_orbit(ss.str_to_bits("0000101"), n)
    rw = pb.reduced_walk(gen)
    plan = pb.BraceletPlan(tau_tot=2.4, p=2, tau=0.8,
                           gamma=np.array([0.3, -0.5]), success=0.0,
                           converged=True)
    reduced_p = pb.evaluate_bracelet(plan, gen, orbit, reduced=rw)
    # full-space reference through the generic ansatz runner
    sched = pb.bracelet_schedule(plan)
    final = ctqw.run_ansatz(sched, gen)
    target_vec = ss.bracelet_vector(orbit, basis)
    full_p = abs(np.vdot(target_vec, final.amplitudes)) ** 2
    assert reduced_p == pytest.approx(full_p, abs=1e-10)


def test_reduced_walk_dimension_is_orbit_count():
    basis, gen = _setup(9)
    rw = pb.reduced_walk(gen)
    assert rw.dim == len(ss.all_orbits(basis))


@pytest.mark.parametrize(
    "row", [r for r in BRACELET_ROWS if r[0] <= 9],
    ids=lambda r: f"n{r[0]}-{r[2]}")
def test_tabulated_gamma_vectors_reproduce_success(row):
    n = row[0]
    basis, gen = _setup(n)
    orbit = ss.dihedral_orbit(ss.str_to_bits(row[2]), n)
    plan = _plan_from_row(row)
    got = pb.evaluate_bracelet(plan, gen, orbit)
    assert got == pytest.approx(row[6], abs=0.02)


def test_plan_rule_depth_and_segments():
    # p = floor(tau_tot / 0.4) - 2, with p+1 equal walk segments
    plan = pb.plan_from_peak(4.0)
    assert plan.p == 8
    assert plan.tau == pytest.approx(4.0 / 9)
    assert len(plan.gamma) == plan.p
    with pytest.raises(pb.PlanInfeasibleError):
        pb.plan_from_peak(1.2)  # too short for depth >= 2


def test_peak_scan_finds_target_revival():
    n = 6
    basis, gen = _setup(n)
    orbit = ss.dihedral_orbit(ss.str_to_bits("000101"), n)
    scan = pb.peak_scan(gen, orbit, tau_max=12.0, dtau=0.02)
    assert len(scan.peaks) >= 1
    # populations at reported peaks exceed the scan threshold
    for tau_pk, pop in scan.peaks:
        assert pop >= scan.threshold


def test_optimize_improves_or_holds():
    n = 6
    basis, gen = _setup(n)
    orbit = ss.dihedral_orbit(ss.str_to_bits("000101"), n)
    scan = pb.peak_scan(gen, orbit, tau_max=12.0, dtau=0.02)
    tau_pk = next(t for t, _ in scan.peaks if t >= 2.0)
    plan0 = pb.plan_from_peak(tau_pk)
    base = pb.evaluate_bracelet(plan0, gen, orbit)
    plan = pb.optimize_bracelet(plan0, gen, orbit)
    assert plan.success >= base - 1e-9


def test_prepare_bracelet_end_to_end_small():
    n = 6
    basis, gen = _setup(n)
    orbit = ss.dihedral_orbit(ss.str_to_bits("000101"), n)
    plan = pb.prepare_bracelet(gen, orbit)
    assert plan.success > 0.7
    sched = pb.bracelet_schedule(plan)
    assert sched.phasor_kind == "hamming"
    assert sched.depth == plan.p
    assert sched.total_walk_time() == pytest.approx(plan.tau_tot)


def test_gamma_sign_irrelevant_for_ideal_walk():
    n = 7
    basis, gen = _setup(n)
    orbit = ss.dihedral_orbit(ss.str_to_bits("0000101"), n)
    row = next(r for r in BRACELET_ROWS if r[0] == 7)
    plan = _plan_from_row(row)
    flipped = pb.BraceletPlan(tau_tot=plan.tau_tot, p=plan.p, tau=plan.tau,
                              gamma=-plan.gamma, success=0.0, converged=True)
    a = pb.evaluate_bracelet(plan, gen, orbit)
    b = pb.evaluate_bracelet(flipped, gen, orbit)
    assert a == pytest.approx(b, abs=1e-4)
