import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddosynth.codec import encode_packet
from ddosynth.metrics import (
    MetricReport,
    ScopeMismatchError,
    evaluate,
    export_distribution_csv,
    feature_distribution,
    hellinger,
    jsd,
    tvd,
)


def point_mass_vectors(value: int, n: int = 16) -> list[np.ndarray]:
    return [np.full(1088, value, dtype=np.int8) for _ in range(n)]


class TestFeatureDistribution:
    def test_identical_rows_are_point_masses(self):
        dist = feature_distribution(point_mass_vectors(1), unit="column")
        assert (dist.column_probs[:, 2] == 1.0).all()

    def test_two_rows_differing_in_one_column(self):
        a = np.zeros(1088, dtype=np.int8)
        b = a.copy()
        b[17] = 1
        dist = feature_distribution([a, b], unit="column")
        assert dist.column_probs[17].tolist() == [0.0, 0.5, 0.5]
        mask = np.ones(1088, dtype=bool)
        mask[17] = False
        assert (dist.column_probs[mask, 1] == 1.0).all()

    def test_matches_brute_force_counts(self):
        rng = np.random.default_rng(0)
        vectors = [rng.integers(-1, 2, 1088).astype(np.int8)
                   for _ in range(50)]
        dist = feature_distribution(vectors, unit="column")
        stack = np.stack(vectors)
        for col in rng.integers(0, 1088, size=30):
            for vi, value in enumerate((-1, 0, 1)):
                expected = (stack[:, col] == value).sum() / 50
                assert dist.column_probs[col, vi] == pytest.approx(expected)

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            feature_distribution([], unit="column")

    def test_protocol_scope_restricts_columns(self):
        dist = feature_distribution(point_mass_vectors(0),
                                    scope="protocol:udp", unit="column")
        assert dist.column_ids.tolist() == list(range(640, 704))

    def test_field_unit_covers_named_fields(self):
        dist = feature_distribution(point_mass_vectors(0), unit="field")
        assert "ip_src" in dist.field_probs
        assert "tcp_flags" in dist.field_probs


class TestMetricAxioms:
    def test_identical_distributions_give_zero(self):
        rng = np.random.default_rng(1)
        vectors = [rng.integers(-1, 2, 1088).astype(np.int8)
                   for _ in range(20)]
        for unit in ("column", "field"):
            p = feature_distribution(vectors, unit=unit)
            q = feature_distribution(vectors, unit=unit)
            assert jsd(p, q) == pytest.approx(0.0, abs=1e-12)
            assert tvd(p, q) == pytest.approx(0.0, abs=1e-12)
            assert hellinger(p, q) == pytest.approx(0.0, abs=1e-12)

    def test_disjoint_point_masses_give_one(self):
        for unit in ("column", "field"):
            p = feature_distribution(point_mass_vectors(0), unit=unit)
            q = feature_distribution(point_mass_vectors(1), unit=unit)
            assert jsd(p, q) == pytest.approx(1.0, abs=1e-9)
            assert tvd(p, q) == pytest.approx(1.0, abs=1e-9)
            assert hellinger(p, q) == pytest.approx(1.0, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = [rng.integers(-1, 2, 1088).astype(np.int8) for _ in range(12)]
        b = [rng.integers(-1, 2, 1088).astype(np.int8) for _ in range(12)]
        for unit in ("column", "field"):
            p = feature_distribution(a, unit=unit)
            q = feature_distribution(b, unit=unit)
            for metric in (jsd, tvd, hellinger):
                assert metric(p, q) == pytest.approx(metric(q, p))

    def test_scope_mismatch_rejected(self):
        p = feature_distribution(point_mass_vectors(0), scope="all_features",
                                 unit="column")
        q = feature_distribution(point_mass_vectors(0), scope="protocol:tcp",
                                 unit="column")
        with pytest.raises(ScopeMismatchError):
            jsd(p, q)


@st.composite
def prob_pairs(draw):
    raw_p = draw(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3))
    raw_q = draw(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3))
    p = np.array(raw_p) / sum(raw_p)
    q = np.array(raw_q) / sum(raw_q)
    return p, q


class TestPerColumnProperties:
    @given(prob_pairs())
    @settings(max_examples=100, deadline=None)
    def test_bounds_and_standard_inequality(self, pq):
        from ddosynth.metrics import _jsd_one
        p, q = pq
        j = _jsd_one(p, q)
        t = 0.5 * float(np.abs(p - q).sum())
        h = float(np.linalg.norm(np.sqrt(p) - np.sqrt(q)) / math.sqrt(2.0))
        assert -1e-12 <= j <= 1.0 + 1e-12
        assert -1e-12 <= t <= 1.0 + 1e-12
        assert -1e-12 <= h <= 1.0 + 1e-12
        # standard sandwich: HD^2 <= TVD <= HD * sqrt(2)
        assert h ** 2 <= t + 1e-9
        assert t <= h * math.sqrt(2.0) + 1e-9


class TestEvaluate:
    def test_real_vs_real_is_zero_everywhere(self, fixture_dataset):
        report = evaluate(fixture_dataset, fixture_dataset)
        for scope_metrics in report.scopes.values():
            for value in scope_metrics.values():
                assert value == pytest.approx(0.0, abs=1e-12)
        assert report.validity == fixture_dataset.validity_rate()

    def test_random_vs_real_direction(self, fixture_dataset):
        rng = np.random.default_rng(3)
        random_vectors = [rng.integers(-1, 2, 1088).astype(np.int8)
                          for _ in range(1024)]
        report = evaluate(fixture_dataset, random_vectors)
        allf = report.scopes["all_features"]
        assert allf["jsd"] >= 0.6
        assert allf["tvd"] >= 0.9
        assert report.validity <= 0.01

    def test_report_serialization_round_trip(self, fixture_dataset):
        report = evaluate(fixture_dataset, fixture_dataset)
        back = MetricReport.from_json(report.to_json())
        assert back.scopes == report.scopes
        assert "validity" in report.to_text()

    def test_values_recomputable_from_exported_csv(self, fixture_dataset):
        """Recompute-from-CSV oracle for the column convention."""
        vectors = [encode_packet(p) for p in fixture_dataset.packets[:200]]
        rng = np.random.default_rng(4)
        others = [rng.integers(-1, 2, 1088).astype(np.int8)
                  for _ in range(200)]
        p = feature_distribution(vectors, unit="column")
        q = feature_distribution(others, unit="column")
        got = {"jsd": jsd(p, q), "tvd": tvd(p, q), "hd": hellinger(p, q)}
        import tempfile, pathlib
        with tempfile.TemporaryDirectory() as td:
            pa, qa = pathlib.Path(td) / "p.csv", pathlib.Path(td) / "q.csv"
            export_distribution_csv(p, pa)
            export_distribution_csv(q, qa)
            def load(path):
                with open(path) as fh:
                    rows = list(csv.DictReader(fh))
                return np.array([[float(r["p_neg"]), float(r["p_zero"]),
                                  float(r["p_pos"])] for r in rows])
            P, Q = load(pa), load(qa)
        # independent recomputation with plain formulas
        jsd_cols, tvd_cols, hd_cols = [], [], []
        for a, b in zip(P, Q):
            m = 0.5 * (a + b)
            def kl(x, y):
                keep = x > 0
                return float(np.sum(x[keep] * np.log2(x[keep] / y[keep])))
            jsd_cols.append(0.5 * kl(a, m) + 0.5 * kl(b, m))
            tvd_cols.append(0.5 * np.abs(a - b).sum())
            hd_cols.append(np.sqrt(np.sum((np.sqrt(a) - np.sqrt(b)) ** 2) / 2))
        assert got["jsd"] == pytest.approx(np.mean(jsd_cols), abs=1e-12)
        assert got["tvd"] == pytest.approx(np.mean(tvd_cols), abs=1e-12)
        assert got["hd"] == pytest.approx(np.mean(hd_cols), abs=1e-12)

    def test_per_column_random_ceiling_motivates_field_unit(self,
                                                            fixture_dataset):
        """Column-mean TVD against uniform ternary cannot exceed 2/3, which
        is why the field convention is the default."""
        rng = np.random.default_rng(5)
        random_vectors = [rng.integers(-1, 2, 1088).astype(np.int8)
                          for _ in range(512)]
        report = evaluate(fixture_dataset, random_vectors, unit="column")
        assert report.scopes["all_features"]["tvd"] <= 2 / 3 + 0.02
