from dataclasses import replace

import numpy as np
import pytest

from npc.harness import (REGISTRY, SUITES, manufacture_problem, reference_config, run_suite, smooth_field,
                         write_reports)
from npc.nonlocal_ops import CallableOperator, KernelSpec, NonlocalOperator
from npc.physics import PotentialSpec

from conftest import make_st


def test_operators_suite_passes(tmp_path):
    reports = run_suite("operators", reference_config())
    assert reports and all(r.passed for r in reports)
    assert [r.name for r in reports] == sorted(r.name for r in reports)
    for r in reports:
        assert r.measured and r.thresholds
    csv_path, txt_path = write_reports(reports, tmp_path)
    assert len(csv_path.read_text().splitlines()) == len(reports) + 1
    assert "checks passed" in txt_path.read_text()


def test_suite_size_and_unique_names():
    fns = [f for s in SUITES for f in REGISTRY[s]]
    assert len(fns) >= 20
    assert len({f.__name__ for f in fns}) == len(fns)


def test_deterministic_across_threads():
    a = run_suite("sensitivity", reference_config(), seed=11)
    b = run_suite("sensitivity", reference_config(), seed=11, threads=3)
    assert [(r.name, r.measured, r.passed) for r in a] == [(r.name, r.measured, r.passed) for r in b]
    assert all(r.seed == 11 for r in a)


def _wrong_adjoint(kernel, st):
    B = NonlocalOperator(kernel, st)
    # the causal map in place of its anticausal transpose
    return CallableOperator(st, B.apply, B.apply_DB, lambda base, q: B.apply(q))


def test_fault_injection_breaks_duality():
    cfg = replace(reference_config(), kernel=KernelSpec(kind="time_history"))
    reports = {r.name: r for r in run_suite("adjoint", cfg, make_operator=_wrong_adjoint)}
    assert not reports["adjoint.duality"].passed
    healthy = {r.name: r for r in run_suite("adjoint", cfg)}
    assert healthy["adjoint.duality"].passed


def test_operator_construction_errors_abort():
    def broken(kernel, st):
        raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        run_suite("operators", reference_config(), make_operator=broken)


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_suite("everything")


def test_manufactured_kinds():
    st = make_st(7, 16)
    B = NonlocalOperator(KernelSpec(), st)
    for kind in ("steady", "tracking", "ball_active"):
        man = manufacture_problem(kind, st, PotentialSpec(), B, seed=0)
        assert man.problem.cost(man.u_star)[0] == pytest.approx(0.0, abs=1e-20)
        assert man.problem.cons.feasible(man.u_star) or kind == "ball_active"
    with pytest.raises(ValueError):
        manufacture_problem("periodic", st, PotentialSpec(), B)


def test_smooth_field_normalized(rng):
    st = make_st(7, 16)
    f = smooth_field(st, rng)
    assert np.abs(f).max() == pytest.approx(1.0)
