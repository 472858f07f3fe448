import math

import numpy as np
import pytest

from owc.errors import DimensionMismatch
from owc.model import (
    BoundaryState,
    DomainLayout,
    FieldState,
    InitialSpec,
    PhysicalParams,
    check_initial_data,
    validate_params,
)


class TestParams:
    def test_defaults_valid(self, p):
        rep = validate_params(p)
        assert rep.ok, str(rep)
        assert p.s == pytest.approx(0.5)
        assert p.h_w == pytest.approx(0.5)
        assert p.alpha == pytest.approx(2.0)
        assert p.chamber_len == pytest.approx(3.5)

    def test_gamma_1_example(self):
        p = PhysicalParams(gamma=1.4, P_atm=101325.0, h_ch=1.0, K=10.0)
        assert p.gamma_1 == pytest.approx(1.4 * 101325 / 10, rel=1e-15)
        assert p.gamma_1 == pytest.approx(14185.5)

    def test_default_rates(self, p):
        assert p.gamma_1 == pytest.approx(5.0, rel=1e-14)
        assert p.gamma_2 == pytest.approx(1.4 * 101325 / 7.0, rel=1e-14)
        assert p.gamma_2 == pytest.approx(20265.0)

    @pytest.mark.parametrize("h_ch,K,l0,r,l1", [(2, 14185.5, 3, 0.5, 7), (1, 10, 2, 0.25, 9), (0.5, 3, 1, 0.1, 2)])
    def test_rate_identity(self, h_ch, K, l0, r, l1):
        p = PhysicalParams(h_ch=h_ch, K=K, l_0=l0, r=r, l_1=l1)
        assert p.gamma_2 * p.chamber_len == pytest.approx(p.gamma_1 * p.K, rel=1e-14)

    def test_inverted_step_rejected(self):
        rep = validate_params(PhysicalParams(h_s=1.0, h_0=2.0, zeta_w=-1.0))
        assert not rep.ok
        assert any("h_s" in v and "s = h_s - h_0" in v for v in rep.violations)

    @pytest.mark.parametrize(
        "changes,key",
        [
            (dict(zeta_w=-1.5), "zeta_w > -h_0"),
            (dict(zeta_w=0.1), "zeta_w < 0"),
            (dict(r=3.0), "l_0 - r"),
            (dict(l_1=3.2), "l_0 + r < l_1"),
            (dict(gamma=1.0), "gamma > 1"),
            (dict(K=0.0), "K > 0"),
            (dict(g=math.nan), "g finite"),
        ],
    )
    def test_each_violation_named(self, p, changes, key):
        rep = validate_params(p.with_(**changes))
        assert any(key in v for v in rep.violations), rep.violations

    def test_report_str(self, p):
        assert str(validate_params(p)).startswith("validate_params: PASS")


class TestLayout:
    def test_geometry(self, p):
        lay = DomainLayout(p, 4.0, 8, 5, 7)
        assert lay.n_total == 20
        assert lay.bounds["plus_l"] == (0.0, 2.5)
        assert lay.bounds["plus_r"] == (3.5, 7.0)
        assert lay.dx("minus") == pytest.approx(0.5)
        assert np.all(np.diff(lay.x) > 0)
        assert lay.h_rest[0] == p.h_s and lay.h_rest[-1] == p.h_0

    def test_refined(self, p):
        lay = DomainLayout(p, 4.0, 8, 5, 7).refined(3)
        assert lay.counts == {"minus": 24, "plus_l": 15, "plus_r": 21}

    def test_state_shape_checked(self, layout):
        with pytest.raises(DimensionMismatch):
            FieldState(layout, np.zeros(3), np.zeros(3))


class TestInitialData:
    def test_rest_margins(self, p, layout):
        rep = check_initial_data(p, FieldState.rest(layout))
        assert rep.ok
        assert rep.values["c_0"] == pytest.approx(1.0)
        assert rep.values["c_1"] == pytest.approx(9.81)

    def test_near_dry_flagged(self, p, layout):
        u = FieldState.rest(layout)
        u.zeta[layout.slices["plus_r"]][3] = -1.0 + 1e-6
        rep = check_initial_data(p, u)
        assert not rep.ok
        assert rep.values["c_0"] == pytest.approx(1e-6, rel=1e-6)
        assert any("h>=c_0" in v for v in rep.violations)

    def test_critical_flagged(self, p, layout):
        u = FieldState.rest(layout)
        u.q[layout.slices["plus_l"]][2] = math.sqrt(9.81)
        rep = check_initial_data(p, u)
        assert not rep.ok
        assert abs(rep.values["c_1"]) < 1e-12

    def test_nan_flagged(self, p, layout):
        u = FieldState.rest(layout)
        u.q[0] = math.nan
        assert not check_initial_data(p, u).ok

    def test_gaussian_initial(self, layout):
        u, G = InitialSpec("gaussian", 0.02, -1.0, 0.5, q_i0=0.1).build(layout)
        x = layout.x
        assert np.allclose(u.zeta, 0.02 * np.exp(-(((x + 1.0) / 0.5) ** 2)), rtol=0, atol=1e-16)
        assert np.all(u.q == 0)
        assert G == BoundaryState(0.1, 0.0)

    def test_file_initial(self, layout, tmp_path):
        f = tmp_path / "init.csv"
        xs = np.linspace(-4.0, 7.0, 111)
        np.savetxt(f, np.column_stack([xs[::-1], 0.01 * xs[::-1], -0.002 * xs[::-1]]), delimiter=",",
                   header="x,zeta,q", comments="")
        u, _ = InitialSpec("file", path=str(f)).build(layout)
        assert np.allclose(u.zeta, 0.01 * layout.x, atol=1e-15)
        assert np.allclose(u.q, -0.002 * layout.x, atol=1e-15)

    @pytest.mark.parametrize("kw", [dict(kind="blob"), dict(kind="gaussian", width=0.0), dict(kind="file")])
    def test_bad_initial(self, kw):
        with pytest.raises(ValueError):
            InitialSpec(**kw)

    def test_mass_and_chamber_mean(self, layout):
        u = FieldState.from_functions(layout, lambda x: np.where(x > 3.5, 0.2, 0.0))
        assert u.chamber_mean() == pytest.approx(0.2)
        assert u.mass() == pytest.approx(0.2 * 3.5)
