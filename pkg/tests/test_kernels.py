import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiverse.errors import ValidationError
from multiverse.kernels import (
    CoregionalBlock,
    KernelSpec,
    additive_cov,
    cov_diag,
    cov_matrix,
    default_spec,
    icm_cov,
    kernel_matrix,
    matern52,
    rbf,
)

# Closed forms at unit scaled distance, evaluated to full precision:
#   matern52: (1 + sqrt(5) + 5/3) * exp(-sqrt(5))
#   rbf:      exp(-1/2)
MATERN52_UNIT = 0.52399410883182031059
RBF_UNIT = 0.60653065971263342360


def shared_spec(base="matern52", ls=(1.0,), var=1.0):
    n = len(ls)
    return KernelSpec(
        base=base,
        ard=True,
        groups=(tuple(range(n)),),
        signal_variance=(var,),
        lengthscales=(tuple(ls),),
    )


class TestBaseForms:
    def test_matern52_unit_distance(self):
        spec = shared_spec("matern52")
        val = matern52(np.array([0.0]), np.array([1.0]), spec)
        assert abs(val - MATERN52_UNIT) < 1e-12
        assert round(val, 6) == 0.523994

    def test_rbf_unit_distance(self):
        spec = shared_spec("rbf")
        val = rbf(np.array([0.0]), np.array([1.0]), spec)
        assert abs(val - RBF_UNIT) < 1e-12
        assert round(val, 6) == 0.606531

    def test_same_point_returns_signal_variance(self):
        spec = shared_spec("matern52", ls=(0.3, 0.7), var=2.5)
        u = np.array([0.2, 0.9])
        assert matern52(u, u, spec) == pytest.approx(2.5, abs=1e-14)

    def test_ard_scaling(self):
        # with per-input lengthscales, distance is scaled per coordinate:
        # ls=(0.5, 2.0) and offsets (0.5, 2.0) give scaled distance sqrt(2)
        spec = shared_spec("rbf", ls=(0.5, 2.0))
        val = rbf(np.zeros(2), np.array([0.5, 2.0]), spec)
        assert val == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_rbf_monotone_decay(self):
        spec = shared_spec("rbf")
        dists = np.linspace(0.0, 3.0, 40)
        vals = [rbf(np.array([0.0]), np.array([d]), spec) for d in dists]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_matern_monotone_decay(self):
        spec = shared_spec("matern52")
        dists = np.linspace(0.0, 3.0, 40)
        vals = [matern52(np.array([0.0]), np.array([d]), spec) for d in dists]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_dimension_mismatch(self):
        spec = shared_spec("matern52", ls=(1.0, 1.0))
        with pytest.raises(ValidationError):
            matern52(np.array([0.0]), np.array([0.0, 1.0]), spec)

    def test_huge_lengthscale_removes_coordinate(self):
        # an input with lengthscale 1e6 contributes nothing measurable
        spec = shared_spec("matern52", ls=(0.3, 1e6))
        base = matern52(np.array([0.1, 0.0]), np.array([0.4, 0.0]), spec)
        moved = matern52(np.array([0.1, 0.0]), np.array([0.4, 1.0]), spec)
        assert abs(base - moved) < 1e-6


@given(
    st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2),
    st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2),
    st.sampled_from(["matern52", "rbf"]),
)
def test_symmetry(u, v, base):
    spec = shared_spec(base, ls=(0.4, 0.8), var=1.7)
    u, v = np.array(u), np.array(v)
    fn = matern52 if base == "matern52" else rbf
    assert fn(u, v, spec) == pytest.approx(fn(v, u, spec), abs=1e-15)


class TestAdditive:
    def test_single_group_equals_shared(self):
        shared = shared_spec("matern52", ls=(0.3, 0.5), var=1.3)
        u, v = np.array([0.1, 0.9]), np.array([0.7, 0.2])
        assert additive_cov(u, v, shared) == matern52(u, v, shared)

    def test_two_group_sum(self):
        spec = KernelSpec(
            base="rbf",
            ard=True,
            groups=((0,), (1,)),
            signal_variance=(1.0, 2.0),
            lengthscales=((0.5,), (0.25,)),
        )
        u, v = np.array([0.0, 0.0]), np.array([0.5, 0.5])
        want = 1.0 * np.exp(-0.5 * (0.5 / 0.5) ** 2) + 2.0 * np.exp(
            -0.5 * (0.5 / 0.25) ** 2
        )
        assert additive_cov(u, v, spec) == pytest.approx(want, rel=1e-14)

    def test_additive_splits_far_coordinates(self):
        # when inputs agree on group 1 but are far apart on group 2, the
        # additive kernel keeps group 1's full contribution while the shared
        # kernel decays everything together
        additive = KernelSpec(
            base="rbf",
            ard=True,
            groups=((0,), (1,)),
            signal_variance=(1.0, 1.0),
            lengthscales=((0.2,), (0.2,)),
        )
        shared = shared_spec("rbf", ls=(0.2, 0.2), var=1.0)
        u, v = np.array([0.5, 0.0]), np.array([0.5, 1.0])
        assert additive_cov(u, v, additive) == pytest.approx(
            1.0 + np.exp(-12.5), rel=1e-12
        )
        assert additive_cov(u, v, shared) < 1e-5


class TestCoregional:
    def test_block_matrix_form(self):
        block = CoregionalBlock("prep", w=(1.0, 2.0), kappa=(0.5, 0.1))
        want = np.array([[1.5, 2.0], [2.0, 4.1]])
        np.testing.assert_allclose(block.matrix(), want, atol=1e-15)

    def test_all_ones_block_recovers_base(self):
        spec = default_spec(
            "matern52", True, 2, level_counts=(3,), coregional_names=("prep",)
        )
        block = CoregionalBlock("prep", w=(1.0, 1.0, 1.0), kappa=(0.0, 0.0, 0.0))
        spec = KernelSpec(
            base=spec.base,
            ard=spec.ard,
            groups=spec.groups,
            signal_variance=spec.signal_variance,
            lengthscales=spec.lengthscales,
            coregional=(block,),
        )
        u, v = np.array([0.1, 0.2]), np.array([0.6, 0.9])
        for lp in range(3):
            for lq in range(3):
                assert icm_cov((u, [lp]), (v, [lq]), spec) == pytest.approx(
                    additive_cov(u, v, spec), rel=1e-14
                )

    def test_identity_block_gates_on_level(self):
        block = CoregionalBlock("prep", w=(0.0, 0.0), kappa=(1.0, 1.0))
        spec = KernelSpec(
            base="rbf",
            ard=True,
            groups=((0,),),
            signal_variance=(1.0,),
            lengthscales=((0.5,),),
            coregional=(block,),
        )
        u, v = np.array([0.3]), np.array([0.4])
        assert icm_cov((u, [0]), (v, [0]), spec) == pytest.approx(
            rbf(u, v, spec), rel=1e-14
        )
        assert icm_cov((u, [0]), (v, [1]), spec) == 0.0

    def test_matches_materialized_kronecker(self):
        # materialize B_1 (x) B_2 over the level grid and compare entrywise
        b1 = CoregionalBlock("a", w=(0.5, -0.3, 1.1), kappa=(0.2, 0.4, 0.05))
        b2 = CoregionalBlock("b", w=(1.0, 0.25), kappa=(0.3, 0.9))
        spec = KernelSpec(
            base="matern52",
            ard=True,
            groups=((0, 1),),
            signal_variance=(1.4,),
            lengthscales=((0.3, 0.6),),
            coregional=(b1, b2),
        )
        kron = np.kron(b1.matrix(), b2.matrix())
        u, v = np.array([0.15, 0.85]), np.array([0.4, 0.3])
        base = additive_cov(u, v, spec)
        for lp1 in range(3):
            for lp2 in range(2):
                for lq1 in range(3):
                    for lq2 in range(2):
                        row, col = lp1 * 2 + lp2, lq1 * 2 + lq2
                        assert icm_cov(
                            (u, [lp1, lp2]), (v, [lq1, lq2]), spec
                        ) == pytest.approx(base * kron[row, col], rel=1e-12)

    def test_level_out_of_range(self):
        spec = default_spec(
            "rbf", True, 1, level_counts=(2,), coregional_names=("prep",)
        )
        with pytest.raises(ValidationError):
            icm_cov((np.array([0.1]), [2]), (np.array([0.2]), [0]), spec)

    def test_wrong_level_count(self):
        spec = default_spec(
            "rbf", True, 1, level_counts=(2,), coregional_names=("prep",)
        )
        with pytest.raises(ValidationError):
            icm_cov((np.array([0.1]), []), (np.array([0.2]), [0]), spec)


class TestGramMatrix:
    def test_single_point_value(self):
        block = CoregionalBlock("prep", w=(0.5, 2.0), kappa=(0.1, 0.2))
        spec = KernelSpec(
            base="matern52",
            ard=True,
            groups=((0,),),
            signal_variance=(1.7,),
            lengthscales=((0.4,),),
            coregional=(block,),
        )
        K = kernel_matrix([(np.array([0.3]), [1])], spec)
        assert K.shape == (1, 1)
        assert K[0, 0] == pytest.approx(1.7 * (2.0**2 + 0.2), rel=1e-14)

    def test_duplicate_rows(self):
        spec = shared_spec("rbf", ls=(0.3, 0.3))
        U = np.array([[0.2, 0.4], [0.2, 0.4], [0.9, 0.1]])
        K = kernel_matrix((U, None), spec)
        np.testing.assert_array_equal(K[0], K[1])
        np.testing.assert_allclose(K, K.T, atol=0)

    def test_cov_matrix_cross(self):
        spec = shared_spec("matern52", ls=(0.5,))
        U1 = np.array([[0.1], [0.5]])
        U2 = np.array([[0.3], [0.7], [0.9]])
        K = cov_matrix(spec, U1, None, U2, None)
        assert K.shape == (2, 3)
        for i in range(2):
            for j in range(3):
                assert K[i, j] == pytest.approx(
                    matern52(U1[i], U2[j], spec), rel=1e-14
                )

    def test_cov_diag_matches_matrix_diagonal(self):
        spec = KernelSpec(
            base="rbf",
            ard=True,
            groups=((0,), (1,)),
            signal_variance=(1.0, 0.5),
            lengthscales=((0.3,), (0.7,)),
        )
        U = np.random.default_rng(3).random((6, 2))
        np.testing.assert_allclose(
            cov_diag(spec, U), np.diag(cov_matrix(spec, U)), atol=1e-14
        )


@given(st.integers(0, 2**31 - 1), st.sampled_from(["matern52", "rbf"]))
def test_gram_positive_semidefinite(seed, base):
    rng = np.random.default_rng(seed)
    n, d = 8, 3
    ls = tuple(float(x) for x in rng.uniform(0.05, 2.0, d))
    spec = KernelSpec(
        base=base,
        ard=True,
        groups=(tuple(range(d)),),
        signal_variance=(float(rng.uniform(0.1, 3.0)),),
        lengthscales=(ls,),
    )
    K = kernel_matrix((rng.random((n, d)), None), spec)
    eigs = np.linalg.eigvalsh(K)
    assert eigs.min() >= -1e-8 * np.trace(K)


def test_coregional_gram_positive_semidefinite():
    rng = np.random.default_rng(7)
    block = CoregionalBlock("prep", w=(0.4, -0.8, 1.2), kappa=(0.3, 0.2, 0.6))
    spec = KernelSpec(
        base="matern52",
        ard=True,
        groups=((0, 1),),
        signal_variance=(1.0,),
        lengthscales=((0.4, 0.4),),
        coregional=(block,),
    )
    U = rng.random((12, 2))
    L = rng.integers(0, 3, size=(12, 1))
    K = cov_matrix(spec, U, L)
    eigs = np.linalg.eigvalsh(K)
    assert eigs.min() >= -1e-8 * np.trace(K)


class TestSpecValidation:
    def test_unknown_base(self):
        with pytest.raises(ValidationError):
            shared_spec("cubic")

    def test_nonpositive_hyperparameters(self):
        with pytest.raises(ValidationError):
            shared_spec("rbf", ls=(0.0,))
        with pytest.raises(ValidationError):
            shared_spec("rbf", var=-1.0)

    def test_groups_must_partition_inputs(self):
        with pytest.raises(ValidationError):
            KernelSpec(
                base="rbf",
                ard=True,
                groups=((0,), (0,)),
                signal_variance=(1.0, 1.0),
                lengthscales=((0.3,), (0.3,)),
            )
        with pytest.raises(ValidationError):
            KernelSpec(
                base="rbf",
                ard=True,
                groups=((0,), (2,)),
                signal_variance=(1.0, 1.0),
                lengthscales=((0.3,), (0.3,)),
            )

    def test_lengthscale_count_matches_group(self):
        with pytest.raises(ValidationError):
            KernelSpec(
                base="rbf",
                ard=True,
                groups=((0, 1),),
                signal_variance=(1.0,),
                lengthscales=((0.3,),),
            )

    def test_isotropic_uses_one_lengthscale_per_group(self):
        spec = KernelSpec(
            base="rbf",
            ard=False,
            groups=((0, 1),),
            signal_variance=(1.0,),
            lengthscales=((0.4,),),
        )
        # the single lengthscale applies to both coordinates
        val = rbf(np.zeros(2), np.array([0.4, 0.4]), spec)
        assert val == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_coregional_block_validation(self):
        with pytest.raises(ValidationError):
            CoregionalBlock("p", w=(1.0, 2.0), kappa=(0.1,))
        with pytest.raises(ValidationError):
            CoregionalBlock("p", w=(1.0,), kappa=(-0.5,))

    def test_default_spec_shapes(self):
        spec = default_spec(
            "matern52",
            True,
            3,
            groups=((0, 2), (1,)),
            level_counts=(2, 4),
            coregional_names=("a", "b"),
        )
        assert spec.n_inputs == 3
        assert spec.n_groups == 2
        assert [b.n_levels for b in spec.coregional] == [2, 4]
        assert len(spec.group_lengthscales(0)) == 2
