import numpy as np
import pytest

from fairopt.data import (
    DecisionRule,
    FeatureMapSpec,
    affine_map,
    dataset_from_arrays,
    eval_feature_map,
    feature_matrix,
    load_csv,
    load_schema,
    parse_schema,
    polynomial_map,
    standardize,
)
from fairopt.errors import DataError, DegenerateColumnError, ParseError, SchemaError, ShapeError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


SCHEMA = {"y": "target:continuous", "x1": "predictor:continuous", "z": "protected:binary"}


def test_load_small_file(tmp_path):
    path = write(tmp_path, "d.csv", "y,x1,z\n1.0,2,0\n2.0,3,1\n0.5,1,1\n3,4,0\n")
    ds = load_csv(path, SCHEMA)
    assert (ds.n, ds.p_x, ds.r) == (4, 1, 1)
    assert ds.z_kind == "binary"
    assert ds.column_roles == {"x1": "predictor", "y": "target", "z": "protected"}


def test_categorical_protected_one_hot(tmp_path):
    path = write(tmp_path, "d.csv", "y,x1,g\n1,0,a\n2,1,b\n3,2,c\n4,3,b\n5,1,a\n")
    schema = {"columns": {"y": "target:continuous", "x1": "predictor:continuous",
                          "g": {"role": "protected", "type": "categorical", "reference": "a"}}}
    ds = load_csv(path, schema)
    assert ds.r == 2
    assert ds.z_kind == "categorical"
    assert set(ds.z.sum(axis=1)) <= {0.0, 1.0}
    np.testing.assert_array_equal(ds.z[0], [0, 0])
    np.testing.assert_array_equal(ds.z[2], [0, 1])


def test_single_row_rejected(tmp_path):
    path = write(tmp_path, "d.csv", "y,x1,z\n1,2,0\n")
    with pytest.raises(DataError):
        load_csv(path, SCHEMA)


def test_missing_rows_dropped_and_counted(tmp_path):
    path = write(tmp_path, "d.csv", "y,x1,z\n1,2,0\nNA,3,1\n2,,1\n3,4,0\n5,1,1\n")
    ds = load_csv(path, SCHEMA)
    assert ds.n == 3 and ds.dropped_rows == 2


def test_parse_error_reports_row(tmp_path):
    path = write(tmp_path, "d.csv", "y,x1,z\n1,2,0\n2,abc,1\n3,4,0\n")
    with pytest.raises(ParseError) as info:
        load_csv(path, SCHEMA)
    assert info.value.row == 1
    assert info.value.column == "x1"


def test_schema_column_missing(tmp_path):
    path = write(tmp_path, "d.csv", "y,x1\n1,2\n2,3\n")
    with pytest.raises(SchemaError):
        load_csv(path, SCHEMA)


def test_schema_needs_all_roles():
    with pytest.raises(SchemaError):
        parse_schema({"y": "target:continuous", "x1": "predictor:continuous"})


def test_toml_schema_and_semicolons(tmp_path):
    sp = write(tmp_path, "s.toml", '[columns]\ny = "target:binary"\nx1 = "predictor:continuous"\n'
                                    'z = "protected:binary"\n')
    path = write(tmp_path, "d.csv", "y;x1;z\nno;1;0\nyes;2;1\nyes;3;0\nno;0;1\n")
    ds = load_csv(path, load_schema(sp))
    np.testing.assert_array_equal(ds.y, [-1, 1, 1, -1])
    assert ds.y_kind == "binary"


def test_standardize_continuous_only():
    x = np.c_[[1.0, 2.0, 3.0, 4.0], [0.0, 1.0, 1.0, 0.0]]
    ds = dataset_from_arrays(x, [1, 2, 3, 4], [0, 1, 0, 1], x_kinds=["continuous", "binary"])
    out, params = standardize(ds)
    assert abs(out.x[:, 0].mean()) < 1e-15
    assert abs(out.x[:, 0].var() - 1) < 1e-12
    np.testing.assert_array_equal(out.x[:, 1], x[:, 1])
    assert params.alpha == pytest.approx(max(1.0, np.max(np.abs(out.x))))


def test_standardize_three_values():
    ds = dataset_from_arrays([[1.0], [2.0], [3.0]], [0, 1, 2], [0, 1, 0], x_kinds=["continuous"])
    out, _ = standardize(ds)
    assert abs(out.x.mean()) < 1e-15 and abs(out.x.var() - 1) < 1e-12


def test_alpha_is_max_abs_entry():
    # mean 0, variance 1 column whose largest |entry| is 2.4:
    # one -2.4, six copies of t, one u = 2.4 - 6t, with 42t^2 - 28.8t + 3.52 = 0
    t = (28.8 - np.sqrt(28.8**2 - 4 * 42 * 3.52)) / 84
    x = np.array([-2.4] + [t] * 6 + [2.4 - 6 * t])
    ds = dataset_from_arrays(x[:, None], np.arange(8.0), [0, 1] * 4, x_kinds=["continuous"])
    _, params = standardize(ds)
    assert params.alpha == pytest.approx(2.4, abs=1e-12)


def test_degenerate_column_named():
    ds = dataset_from_arrays(np.c_[[1.0, 1, 1], [1.0, 2, 3]], [0, 1, 2], [0, 1, 0],
                             x_kinds=["continuous", "continuous"], x_names=("flat", "ok"))
    with pytest.raises(DegenerateColumnError) as info:
        standardize(ds)
    assert info.value.column == "flat"


def test_standardize_round_trip():
    rng = np.random.default_rng(3)
    ds = dataset_from_arrays(rng.normal(5, 3, (50, 3)), rng.normal(size=50), rng.normal(2, 4, 50),
                             x_kinds=["continuous"] * 3, z_kinds=["continuous"])
    out, params = standardize(ds)
    back = params.invert(out)
    np.testing.assert_allclose(back.x, ds.x, rtol=1e-12)
    np.testing.assert_allclose(back.z, ds.z, rtol=1e-12)


def test_feature_map_examples():
    assert list(eval_feature_map(affine_map(2), np.array([2.0, 3.0]))) == [1, 2, 3]
    spec = polynomial_map(2, degree=2)
    vals = dict(zip(spec.names(), eval_feature_map(spec, np.array([2.0, 5.0]))))
    assert vals["x1^2"] == 4
    zx = FeatureMapSpec(((0, 1),), 1, 1)
    assert eval_feature_map(zx, np.array([3.0]), np.array([2.0]))[0] == 6


def test_feature_map_ordering_and_degree():
    spec = polynomial_map(2, 1, degree=2, include_z=True)
    assert spec.rho == 2 and spec.uses_z and spec.has_constant
    degs = [len(m) for m in spec.monomials]
    assert degs == sorted(degs)
    assert spec.p == 1 + 3 + 6


def test_feature_map_shape_error():
    with pytest.raises(ShapeError):
        eval_feature_map(affine_map(2), np.array([1.0, 2.0, 3.0]))


def test_feature_rows_permute_with_data():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(10, 2))
    spec = polynomial_map(2, degree=2)
    perm = rng.permutation(10)
    np.testing.assert_array_equal(feature_matrix(spec, x)[perm], feature_matrix(spec, x[perm]))


def test_decision_rule_round_trip():
    rule = DecisionRule(np.array([[0.5, -1.0, 2.0]]), affine_map(2), lam=9.0)
    again = DecisionRule.from_dict(rule.to_dict())
    x = np.array([[1.0, 2.0], [0.0, -1.0]])
    np.testing.assert_array_equal(rule.scores(x), again.scores(x))
    assert rule.norm == pytest.approx(np.sqrt(5.25))
