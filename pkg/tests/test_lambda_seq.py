import numpy as np
import pytest

from slope_recovery.src.errors import DomainError, InvalidTuning
from slope_recovery.src.lambda_seq import (LambdaRecipe, constant_lambda,
                                           expected_order_stat,
                                           gaussian_order_stat_lambda,
                                           oscar_lambda)


def test_expected_order_stat_examples():
    assert expected_order_stat(1, 1) == pytest.approx(0.0, abs=1e-12)
    assert expected_order_stat(1, 3) == pytest.approx(0.8694, abs=1e-4)
    assert expected_order_stat(2, 3) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        expected_order_stat(0, 3)
    with pytest.raises(DomainError):
        expected_order_stat(4, 3)


def test_expected_order_stat_symmetry_and_order():
    for p in (2, 5, 17, 100):
        E = expected_order_stat(np.arange(1, p + 1), p)
        np.testing.assert_allclose(E, -E[::-1], atol=1e-12)
        assert np.all(np.diff(E) < 0)


def test_gaussian_order_stat_lambda():
    lam = gaussian_order_stat_lambda(2)
    np.testing.assert_allclose(lam.lambdas, [2.358, 1.179], atol=1e-3)
    assert lam.name == "gauss-os"
    big = gaussian_order_stat_lambda(100)
    assert big.strictly_decreasing
    assert np.all(big.lambdas > 0)
    with pytest.raises(DomainError):
        gaussian_order_stat_lambda(1)


def test_oscar_lambda():
    np.testing.assert_allclose(oscar_lambda(3, 3.0, 1.0).lambdas, [3.0, 2.0, 1.0])
    np.testing.assert_allclose(oscar_lambda(2, 4.0, 2.0).lambdas, [4.0, 2.0])
    with pytest.raises(InvalidTuning):
        oscar_lambda(3, 2.0, 1.0)
    np.testing.assert_allclose(oscar_lambda(3, 2.0, 1.0, strict=False).lambdas, [2.0, 1.0, 0.0])
    with pytest.raises(InvalidTuning):
        oscar_lambda(3, 0.0, 1.0)


def test_constant_lambda():
    lam = constant_lambda(4, 1.5)
    np.testing.assert_array_equal(lam.lambdas, np.full(4, 1.5))
    assert not lam.strictly_decreasing
    with pytest.raises(InvalidTuning):
        constant_lambda(4, 0.0)


def test_recipe_parse_and_build():
    assert LambdaRecipe.parse("gauss-os", 5).build().p == 5
    recipe = LambdaRecipe.parse("oscar:4,2", 2)
    assert str(recipe) == "oscar:4,2"
    np.testing.assert_allclose(recipe.build().lambdas, [4.0, 2.0])
    assert str(LambdaRecipe.parse("const:2", 3)) == "const:2"
    explicit = LambdaRecipe.parse("4, 2", 2)
    assert explicit.kind == "explicit"
    assert str(explicit) == "4,2"
    np.testing.assert_allclose(explicit.build().lambdas, [4.0, 2.0])


def test_recipe_errors():
    with pytest.raises(InvalidTuning):
        LambdaRecipe.parse("oscar:4", 2)
    with pytest.raises(InvalidTuning):
        LambdaRecipe.parse("4,two", 2)
    with pytest.raises(InvalidTuning):
        LambdaRecipe.parse("4,2,1", 2).build()
    with pytest.raises(InvalidTuning):
        LambdaRecipe("bh", 3)


def test_recipe_from_file(tmp_path, data_dir):
    path = tmp_path / "lam.csv"
    path.write_text("# descending\n3\n2\n1\n")
    lam = LambdaRecipe.parse(f"file:{path}", 3).build()
    np.testing.assert_allclose(lam.lambdas, [3.0, 2.0, 1.0])
    assert lam.name == "file:lam.csv"

    shipped = LambdaRecipe.parse(f"file:{data_dir / 'lambda_4_2.csv'}", 2).build()
    np.testing.assert_allclose(shipped.lambdas, [4.0, 2.0])
