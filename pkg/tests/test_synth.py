import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dprfs.errors import FormatError, InputError
from dprfs.rfs import PointPattern
from dprfs.synth import StarConfig, generate_star, read_dataset, write_dataset


class TestStarConfig:
    def test_defaults(self):
        cfg = StarConfig()
        assert cfg.num_observations == 200 and cfg.dim == 2
        assert cfg.component_rates == [100.0, 0.5, 0.5, 0.5, 0.5]
        assert cfg.component_weights == [0.2] * 5
        corners = {tuple(m) for m in cfg.component_means[1:]}
        assert corners == {(10.0, 10.0), (-10.0, 10.0), (-10.0, -10.0), (10.0, -10.0)}
        assert cfg.component_means[0] == [0.0, 0.0]
        for cov in cfg.component_covariances[1:]:
            np.testing.assert_array_equal(cov, np.eye(2))

    @pytest.mark.parametrize("kwargs", [
        {"component_weights": [0.5, 0.5, 0.5, 0.0, 0.0]},
        {"component_rates": [100.0, 0.0, 0.5, 0.5, 0.5]},
        {"component_rates": [1.0]},
        {"num_observations": -1},
        {"component_covariances": [np.eye(2).tolist()] * 4 + [[[1.0, 2.0], [2.0, 1.0]]]},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises((InputError, ValueError)):
            StarConfig(**kwargs)

    def test_to_dict_round_trip(self):
        cfg = StarConfig(num_observations=17, seed=4)
        assert StarConfig(**cfg.to_dict()) == cfg
        json.dumps(cfg.to_dict())


class TestGenerate:
    def test_sizes_and_labels(self):
        data, labels = generate_star(StarConfig(num_observations=50, seed=1))
        assert len(data) == len(labels) == 50
        assert set(labels) <= set(range(5))
        assert all(x.dim == 2 for x in data)

    def test_seed_determinism(self):
        a, la = generate_star(StarConfig(seed=3))
        b, lb = generate_star(StarConfig(seed=3))
        assert la == lb and all(np.array_equal(x.points, y.points) for x, y in zip(a, b))

    def test_low_rate_empty_fraction(self):
        cfg = StarConfig(num_observations=20_000, component_weights=[0.0, 1.0, 0.0, 0.0, 0.0], seed=2)
        data, _ = generate_star(cfg)
        frac = np.mean([len(x) == 0 for x in data])
        p = math.exp(-0.5)
        assert abs(frac - p) < 3 * math.sqrt(p * (1 - p) / len(data))

    def test_per_component_cardinality_within_poisson_bounds(self):
        cfg = StarConfig(num_observations=50_000, seed=5)
        data, labels = generate_star(cfg)
        labels = np.asarray(labels)
        sizes = np.array([len(x) for x in data])
        for k, rate in enumerate(cfg.component_rates):
            mk = sizes[labels == k]
            assert len(mk) >= 9000
            assert abs(mk.mean() - rate) < 3 * math.sqrt(rate / len(mk))

    def test_point_locations(self):
        cfg = StarConfig(num_observations=3000, seed=6)
        data, labels = generate_star(cfg)
        for k in range(1, 5):
            pts = np.concatenate([data[i].points for i in range(len(data)) if labels[i] == k])
            np.testing.assert_allclose(pts.mean(axis=0), cfg.component_means[k], atol=4 / math.sqrt(len(pts)))


coord = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


class TestDatasetIO:
    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.lists(st.tuples(coord, coord, coord), max_size=4), max_size=6))
    def test_round_trip_exact(self, tmp_path_factory, raw):
        data = [PointPattern(p, dim=3) for p in raw]
        labels = list(range(len(data)))
        path = tmp_path_factory.mktemp("io") / "d.jsonl"
        write_dataset(path, data, labels, meta={"dim": 3})
        back, back_labels = read_dataset(path)
        assert back_labels == (labels if data else None)
        assert len(back) == len(data)
        for x, y in zip(data, back):
            assert np.array_equal(x.points, y.points)

    def test_empty_patterns_round_trip(self, tmp_path):
        data = [PointPattern.empty(2), PointPattern([[1.0, 2.0]]), PointPattern.empty(2)]
        write_dataset(tmp_path / "d.jsonl", data, [0, 1, 0])
        back, labels = read_dataset(tmp_path / "d.jsonl")
        assert [len(x) for x in back] == [0, 1, 0] and all(x.dim == 2 for x in back)
        assert labels == [0, 1, 0]

    def test_all_empty_needs_meta(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"label": 0, "points": []}\n')
        with pytest.raises(FormatError):
            read_dataset(path)

    def test_unlabeled(self, tmp_path):
        write_dataset(tmp_path / "d.jsonl", [PointPattern([[1.0, 2.0]])])
        data, labels = read_dataset(tmp_path / "d.jsonl")
        assert labels is None and len(data) == 1

    def test_meta_first_line(self, tmp_path):
        cfg = StarConfig(num_observations=5, seed=0)
        data, labels = generate_star(cfg)
        write_dataset(tmp_path / "d.jsonl", data, labels, meta=cfg.to_dict())
        first = json.loads((tmp_path / "d.jsonl").read_text().splitlines()[0])
        assert first["meta"]["component_rates"] == cfg.component_rates
        _, _, meta = read_dataset(tmp_path / "d.jsonl", with_meta=True)
        assert meta["dim"] == 2 and meta["num_observations"] == 5

    def test_same_seed_same_bytes(self, tmp_path):
        for name in ("a", "b"):
            data, labels = generate_star(StarConfig(seed=11))
            write_dataset(tmp_path / name, data, labels, meta=StarConfig(seed=11).to_dict())
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    @pytest.mark.parametrize("body,line", [
        ('{"meta": {"dim": 2}}\n{"label": 0, "points": [[1, 2]]}\nnot json\n', 3),
        ('{"meta": {"dim": 2}}\n{"label": 0, "points": [[1, 2, 3]]}\n', 2),
        ('{"meta": {"dim": 2}}\n{"label": 0}\n', 2),
        ('{"meta": {"dim": 2}}\n{"label": "a", "points": []}\n', 2),
        ('{"meta": {"dim": 2}}\n{"label": 0, "points": [[1, 2], [3]]}\n', 2),
        ('{"label": 0, "points": [[1, 2]]}\n{"meta": {"dim": 2}}\n', 2),
    ])
    def test_malformed_reports_line(self, tmp_path, body, line):
        path = tmp_path / "bad.jsonl"
        path.write_text(body)
        with pytest.raises(FormatError) as err:
            read_dataset(path)
        assert err.value.line == line
        assert str(err.value).startswith(f"line {line}:")

    def test_mixed_labels_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"label": 0, "points": [[1.0]]}\n{"label": null, "points": [[2.0]]}\n')
        with pytest.raises(FormatError):
            read_dataset(path)

    def test_write_dimension_mismatch(self, tmp_path):
        with pytest.raises(InputError):
            write_dataset(tmp_path / "d", [PointPattern([[1.0]]), PointPattern([[1.0, 2.0]])])

    def test_write_label_count(self, tmp_path):
        with pytest.raises(InputError):
            write_dataset(tmp_path / "d", [PointPattern([[1.0]])], [0, 1])
