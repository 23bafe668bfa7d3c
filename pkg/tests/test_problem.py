import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from indefconc.mesh import ScalarField, ball_mask, balls_mask, build_grid
from indefconc.problem import (STATUS_INFEASIBLE, STATUS_OK, STATUS_UNRESOLVED, FamilySpec, KSpec,
                               expand_sequence, make_family_level_shift, make_family_shrinking_ball, make_instance,
                               make_two_point_family, potential_from_spec, validate_assumptions)


@pytest.fixture
def line():
    return build_grid(1, -1.0, 1.0, 399)


def test_shrinking_ball_positivity_set(line):
    fam = make_family_shrinking_ball(line, [0.5, 0.25], 1.0, -1.0, line.constant(0.0))
    x = line.points[:, 0]
    assert np.array_equal(fam[0].Q.values > 0, np.abs(x) < 0.5)
    assert np.array_equal(fam[1].Q.values > 0, np.abs(x) < 0.25)
    assert [f.n for f in fam] == [1, 2]
    assert all(f.is_kerr for f in fam)


def test_shrinking_ball_preconditions(line):
    V = line.constant(0.0)
    with pytest.raises(ValueError):
        make_family_shrinking_ball(line, [0.5, 0.25], 1.0, 1.0, V)
    with pytest.raises(ValueError):
        make_family_shrinking_ball(line, [0.25, 0.5], 1.0, -1.0, V)
    with pytest.raises(ValueError):
        make_family_shrinking_ball(line, [0.5], 1.0, -1.0, V, center=2.0)
    with pytest.raises(ValueError):
        make_family_shrinking_ball(line, [1.5], 1.0, -1.0, V)


def test_zero_K_keeps_V(line):
    V = line.sample(lambda x: x**2)
    for inst in make_family_shrinking_ball(line, [0.5, 0.25, 0.125], 1.0, -1.0, V):
        assert np.array_equal(inst.V_n.values, V.values)


def test_K_supported_in_ball(line):
    fam = make_family_shrinking_ball(line, [0.5, 0.25], 1.0, -1.0, line.constant(0.0), KSpec(3.0, 0.5))
    for inst in fam:
        outside = ball_mask(line, 0.0, inst.scale * 0.5, complement=True).member
        assert np.all(inst.K.values[outside] == 0)
        assert inst.K.values.max() == 3.0


def test_level_shift_positivity_sets(line):
    Q = line.sample(lambda x: 1 - x**2)
    fam = make_family_level_shift(line, Q, [0.5, 0.75], line.constant(0.0))
    x = line.points[:, 0]
    assert np.array_equal(fam[0].Q.values > 0, np.abs(x) < math.sqrt(0.5))
    assert np.array_equal(fam[1].Q.values > 0, np.abs(x) < 0.5)


def test_level_shift_preconditions(line):
    Q = line.sample(lambda x: 1 - x**2)
    V = line.constant(0.0)
    with pytest.raises(ValueError):
        make_family_level_shift(line, Q, [1.5], V)
    with pytest.raises(ValueError):
        make_family_level_shift(line, Q, [0.75, 0.5], V)
    twin = line.sample(lambda x: 1 - (x**2 - 0.25) ** 2)
    with pytest.raises(ValueError):
        make_family_level_shift(line, twin, [0.5], V)


def test_two_point_islands(line):
    fam = make_two_point_family(line, [0.2, 0.1], 1.0, -1.0, line.constant(0.0), 4.0, -0.5, 0.5)
    pos = fam[0].Q.values > 0
    assert np.array_equal(pos, balls_mask(line, [(-0.5,), (0.5,)], 0.2).member)
    assert fam[0].centers == ((-0.5,), (0.5,))


def test_two_point_preconditions(line):
    V = line.constant(0.0)
    with pytest.raises(ValueError):
        make_two_point_family(line, [0.2], 1.0, -1.0, V, 4.0, 0.3, 0.3)
    with pytest.raises(ValueError):
        make_two_point_family(line, [0.6], 1.0, -1.0, V, 4.0, -0.5, 0.5)


def test_two_point_per_ball_amplitudes(line):
    fam = make_two_point_family(line, [0.2], [1.0, 1.5], -1.0, line.constant(0.0), 4.0, -0.5, 0.5)
    assert fam[0].amplitudes == (1.0, 1.5)
    assert fam[0].Q.values.max() == 1.5


def test_instance_status_flags():
    g = build_grid(1, -1.0, 1.0, 9)  # h = 0.2
    x = g.points[:, 0]
    ok = make_instance(g, g.constant(0.0), ScalarField(g, np.where(np.abs(x) < 0.3, 1.0, -1.0)), 4.0, [0.0])
    assert ok.status == STATUS_OK
    bad = make_instance(g, g.constant(0.0), g.constant(-1.0), 4.0, [0.0])
    assert bad.status == STATUS_INFEASIBLE and not bad.feasible
    fam = make_family_shrinking_ball(g, [0.5, 0.1, 0.05], 1.0, -1.0, g.constant(0.0), center=0.1)
    assert fam[-1].status == STATUS_UNRESOLVED


def test_p_must_exceed_two():
    g = build_grid(1, -1.0, 1.0, 9)
    with pytest.raises(ValueError):
        make_instance(g, g.constant(0.0), g.constant(1.0), 2.0, [0.0])


def test_validate_example_family(line):
    fam = make_family_shrinking_ball(line, [2.0**-n for n in range(1, 5)], 1.0, -1.0, line.constant(0.0))
    rep = validate_assumptions(fam, [0.5, 0.25, 0.125])
    assert rep.passed
    assert rep.uniform_delta == 1.0
    assert all(p.delta == 1.0 for p in rep.probes)
    assert rep.B == 0.0 and rep.C == 1.0
    assert rep.min_eig == pytest.approx(math.pi**2 / 4, rel=1e-3)


def test_validate_level_shift_delta():
    g = build_grid(1, -1.0, 1.0, 399)
    Q = g.sample(lambda x: 1 - x**2)
    lams = [0.5, 0.8, 0.9, 0.95]
    fam = make_family_level_shift(g, Q, lams, g.constant(0.0))
    rep = validate_assumptions(fam, [0.5])
    probe = rep.probes[0]
    outside = np.abs(g.points[:, 0]) >= 0.5
    # direct scan: members with lambda > 0.75 are negative outside |x| < 0.5
    expect = min(-(Q.values[outside] - lam).max() for lam in lams if lam > 0.75)
    assert probe.N_eps == 2
    assert probe.delta == pytest.approx(expect)
    assert rep.positive_diameters[4] < rep.positive_diameters[1]


def test_validate_flags_negative_V(line):
    V = line.constant(-0.5)
    fam = make_family_shrinking_ball(line, [0.5], 1.0, -1.0, V)
    rep = validate_assumptions(fam, [0.5])
    assert not rep.flags["V_nonnegative"]
    assert not rep.passed


def test_validate_flags_nonpositive_member():
    g = build_grid(1, -1.0, 1.0, 99)
    fam = [make_instance(g, g.constant(0.0), g.constant(-1.0), 4.0, [0.0], n=1)]
    rep = validate_assumptions(fam, [0.5])
    assert not rep.flags["Q_positive_somewhere"]
    assert rep.statuses[1] == STATUS_INFEASIBLE


@given(st.lists(st.floats(0.02, 0.9), min_size=1, max_size=5, unique=True),
       st.floats(0.1, 3.0), st.floats(-3.0, -0.1))
def test_report_is_self_consistent(eps, q_plus, q_minus):
    g = build_grid(1, -1.0, 1.0, 199)
    eps = sorted(eps, reverse=True)
    fam = make_family_shrinking_ball(g, eps, q_plus, q_minus, g.constant(1.0))
    rep = validate_assumptions(fam, [0.5, 0.1])
    assert rep.uniform_delta == pytest.approx(-q_minus)
    for inst in fam:
        assert np.max(np.abs(inst.Q.values)) <= rep.C
        assert np.max(np.abs(inst.K.values)) <= rep.B
    for probe in rep.probes:
        if probe.N_eps is None:
            continue
        outside = ball_mask(g, 0.0, probe.eps, complement=True).member
        for inst in fam:
            if inst.n >= probe.N_eps and outside.any():
                assert inst.Q.values[outside].max() <= -probe.delta
    # unreached probes (None) sit at the end of the ordering
    n_eps = [math.inf if p.N_eps is None else p.N_eps for p in sorted(rep.probes, key=lambda p: -p.eps)]
    assert all(b >= a for a, b in zip(n_eps, n_eps[1:]))


def test_lambda_R_scan():
    g = build_grid(1, -5.0, 5.0, 500, unbounded_truncation=True)
    V = ScalarField(g, np.where(np.abs(g.points[:, 0]) < 0.5, 0.0, 1.0))
    fam = make_family_shrinking_ball(g, [0.25], 1.0, -1.0, V)
    rep = validate_assumptions(fam, [0.25])
    lam, R = rep.lambda_R
    assert lam == 1.0 and 0.5 <= R < 0.5 + g.h[0]
    assert rep.flags["V_bounded_below_far_out"]


def test_expand_sequence():
    assert expand_sequence([0.5, 0.25]) == [0.5, 0.25]
    assert expand_sequence({"start": 0.5, "ratio": 0.5, "count": 3}) == [0.5, 0.25, 0.125]


def test_family_spec_round_trip_and_build(tmp_path):
    d = {"kind": "shrinking_ball", "p": 4.0, "V": {"kind": "well", "params": {"radius": 0.5, "outer": 2.0}},
         "eps": {"start": 0.5, "ratio": 0.5, "count": 3}, "q_plus": 1.0, "q_minus": -1.0, "n_start": 2}
    spec = FamilySpec.from_dict(d)
    assert FamilySpec.from_dict(spec.to_dict()) == spec
    g = build_grid(1, -1.0, 1.0, 99)
    fam = spec.build(g)
    assert [f.n for f in fam] == [2, 3, 4]
    assert fam[0].V.values.max() == 2.0


def test_family_spec_custom_dump(tmp_path):
    from indefconc.fieldio import save_field
    g = build_grid(1, -1.0, 1.0, 49)
    save_field(g.sample(lambda x: np.where(np.abs(x) < 0.2, 1.0, -1.0)), tmp_path / "q1", name="Q")
    spec = FamilySpec.from_dict({"kind": "custom", "p": 3.0, "V": {"kind": "constant", "params": {"value": 1.0}},
                                 "centers": [[0.0]], "members": [{"Q": "q1.json"}]})
    fam = spec.build(g, tmp_path)
    assert len(fam) == 1 and fam[0].p == 3.0


def test_unknown_potential_kind():
    g = build_grid(1, -1.0, 1.0, 9)
    with pytest.raises(ValueError):
        potential_from_spec(g, {"kind": "bogus"})
