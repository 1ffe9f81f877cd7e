"""Latent-model diagnostics: decomposition against loop summation, field
antisymmetry and undefined-cell handling, and the constrained maximization
against a fine simplex grid."""

from itertools import combinations_with_replacement

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mirrorwyner import divergence as dv
from mirrorwyner.errors import ValidationError


def random_model(seed, dims=(2, 3, 4, 2)):
    rng = np.random.default_rng(seed)
    return dv.LatentModel(rng.dirichlet(np.ones(int(np.prod(dims)))).reshape(dims))


def cmi_loops(xyz):
    """I(X;Y|Z) by plain triple summation."""
    p_z = xyz.sum(axis=(0, 1))
    p_xz = xyz.sum(axis=1)
    p_yz = xyz.sum(axis=0)
    total = 0.0
    for x in range(xyz.shape[0]):
        for y in range(xyz.shape[1]):
            for z in range(xyz.shape[2]):
                p = xyz[x, y, z]
                if p > 0:
                    total += p * np.log2(p * p_z[z] / (p_xz[x, z] * p_yz[y, z]))
    return total


class TestDecomposition:
    @pytest.mark.parametrize("seed", range(5))
    def test_sums_to_cmi(self, seed):
        m = random_model(seed)
        rep = dv.cmi_decomposition_report(m)
        assert rep.total == pytest.approx(cmi_loops(m.xyz_margin()), abs=1e-10)
        assert rep.total == pytest.approx(rep.per_z.sum(), abs=1e-12)

    def test_contributions_nonnegative(self):
        for seed in range(5):
            rep = dv.cmi_decomposition_report(random_model(seed))
            assert np.all(rep.per_z >= -1e-12)

    def test_independent_slices_give_zero(self):
        # P(x,y|z) product form for every z => CMI = 0
        px = np.array([0.3, 0.7])
        py = np.array([0.2, 0.5, 0.3])
        pz = np.array([0.6, 0.4])
        xyz = px[:, None, None] * py[None, :, None] * pz[None, None, :]
        joint = xyz[:, :, :, None] * np.array([0.5, 0.5])[None, None, None, :]
        rep = dv.cmi_decomposition_report(dv.LatentModel(joint))
        assert rep.total == pytest.approx(0.0, abs=1e-12)

    def test_csv_lines(self):
        lines = list(dv.cmi_decomposition_report(random_model(0)).csv_lines())
        assert lines[0] == "z,contribution_bits"
        assert lines[-1].startswith("total,")


class TestLogRatioField:
    def test_antisymmetry_under_role_swap(self):
        m = random_model(1)
        f1 = dv.log_ratio_field(m)
        m_swapped = dv.LatentModel(np.transpose(m.joint, (1, 0, 2, 3)))
        f2 = dv.log_ratio_field(m_swapped)
        err = np.nanmax(np.abs(f1.log_ratio + np.transpose(f2.log_ratio, (1, 0, 2))))
        assert err < 1e-12

    def test_proxy_nonnegative_where_defined(self):
        f = dv.log_ratio_field(random_model(2))
        defined = ~f.undefined
        assert np.all(f.proxy[defined] >= 0)
        assert np.all(np.isfinite(f.log_ratio[defined]))

    def test_undefined_cells_flagged(self):
        # x=1 carries the same P(M|x) as the whole z=0 slice, so the proxy
        # denominator vanishes there and the cell must be excluded
        joint = np.zeros((2, 2, 1, 2))
        joint[0, 0, 0] = [0.2, 0.1]
        joint[0, 1, 0] = [0.1, 0.2]
        joint[1, 0, 0] = [0.1, 0.1]
        joint[1, 1, 0] = [0.1, 0.1]
        f = dv.log_ratio_field(dv.LatentModel(joint))
        assert f.undefined[:, 1, 0].all()

    def test_intervals_well_formed(self):
        for seed in range(4):
            f = dv.log_ratio_field(random_model(seed))
            n_cells = f.log_ratio.shape[0] * f.log_ratio.shape[1]
            for runs in f.intervals:
                for start, end, direction in runs:
                    assert 0 <= start <= end < n_cells
                    assert direction in (-1, 1)

    def test_run_directions_hold(self):
        f = dv.log_ratio_field(random_model(3))
        for z, runs in enumerate(f.intervals):
            lr = f.log_ratio[:, :, z].ravel()
            pr = f.proxy[:, :, z].ravel()
            for start, end, direction in runs:
                d_lr = direction * np.diff(lr[start:end + 1])
                d_pr = direction * np.diff(pr[start:end + 1])
                assert np.all(d_lr >= -1e-12)
                assert np.all(d_pr >= -1e-12)


class TestConstrainedMax:
    def grid_oracle(self, m, mask, resolution=64):
        p_z = m.p_z()
        acc = list(mask.accessible)
        acc_mass = p_z[acc].sum()
        mi_z = dv._cmi_per_slice(m)
        inacc = sum(p_z[z] * mi_z[z] for z in mask.inaccessible)
        best = -np.inf
        for combo in combinations_with_replacement(range(len(acc)), resolution):
            w = np.bincount(np.asarray(combo), minlength=len(acc)) / resolution
            best = max(best, inacc + acc_mass * float(w @ mi_z[acc]))
        return best

    @pytest.mark.parametrize("seed", range(4))
    def test_vacuous_band_matches_grid(self, seed):
        m = random_model(seed)
        mask = dv.AccessMask((0, 1, 2), (3,))
        res = dv.constrained_cmi_max(m, mask, 0.0, np.log2(2))
        assert res.feasible
        assert res.cmi == pytest.approx(self.grid_oracle(m, mask), abs=1e-9)
        assert res.weights.sum() == pytest.approx(1.0, abs=1e-9)
        # frozen inaccessible mass
        assert res.weights[3] == pytest.approx(m.p_z()[3], abs=1e-12)

    def test_infeasible_band_typed(self):
        m = random_model(5)
        res = dv.constrained_cmi_max(m, dv.AccessMask((0, 1, 2), (3,)), 5.0, 6.0)
        assert not res.feasible
        assert np.isnan(res.cmi)
        np.testing.assert_allclose(res.weights, m.p_z(), atol=1e-12)

    def test_single_accessible_slice(self):
        m = random_model(6)
        res = dv.constrained_cmi_max(m, dv.AccessMask((2,), (0, 1, 3)), 0.0, 1.0)
        assert res.feasible
        assert res.cmi == pytest.approx(dv.cmi_decomposition_report(m).total, abs=1e-10)

    def test_deterministic_equivocation(self):
        # M a function of Z: every inaccessible slice has H(M|z) = 0
        joint = np.zeros((2, 2, 2, 2))
        joint[:, :, 0, 0] = 0.125
        joint[:, :, 1, 1] = 0.125
        m = dv.LatentModel(joint)
        res = dv.constrained_cmi_max(m, dv.AccessMask((0,), (1,)), 0.0, 0.5)
        assert res.equivocation == pytest.approx(0.0, abs=1e-12)
        assert res.feasible

    def test_band_validation(self):
        m = random_model(7)
        with pytest.raises(ValidationError):
            dv.constrained_cmi_max(m, dv.AccessMask((0, 1, 2), (3,)), 1.0, 0.5)
        with pytest.raises(ValidationError):
            dv.constrained_cmi_max(m, dv.AccessMask((0, 1), (3,)), 0.0, 1.0)


class TestMaskAndModel:
    def test_mask_validation(self):
        with pytest.raises(ValidationError):
            dv.AccessMask((0, 1), (1, 2))
        with pytest.raises(ValidationError):
            dv.AccessMask((), (0, 1))

    def test_model_validation(self):
        with pytest.raises(ValidationError):
            dv.LatentModel(np.ones((2, 2, 2)) / 8)
        with pytest.raises(ValidationError):
            dv.LatentModel(np.full((2, 2, 2, 2), 1 / 16), theta1=-1.0)
