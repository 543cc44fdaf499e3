import numpy as np
import pytest

from ddosynth.codec import LAYOUT_V1, decode_vector, encode_packet
from ddosynth.packets import ProtocolKind, TraceDataset, validate_packet
from ddosynth.surrogate import FieldSurrogate, fit_surrogate, structural_mask


@pytest.fixture(scope="module")
def fitted(fixture_dataset):
    return fit_surrogate(fixture_dataset, LAYOUT_V1)


class TestMask:
    def test_absent_spans_are_masked(self):
        mask = structural_mask(ProtocolKind.TCP)
        assert mask[640:704].all()  # udp span
        assert mask[704:768].all()  # icmp span
        assert mask[768:1088].all()  # pad region

    def test_rule_fields_are_masked(self):
        mask = structural_mask(ProtocolKind.TCP)
        assert mask[0:8].all()  # version + ihl
        assert mask[16:32].all()  # total length
        assert mask[72:80].all()  # proto number
        assert not mask[96:160].any()  # addresses stay free


class TestSampling:
    def test_tcp_samples_pin_other_spans_to_absent(self, fitted):
        for vec in fitted.sample_vectors(("TCP", "SYN-flood"), 40, seed=0):
            assert (vec[640:704] == -1).all()
            assert (vec[704:768] == -1).all()

    def test_zero_samples(self, fitted):
        assert fitted.sample_vectors("SYN-flood", 0) == []

    def test_same_seed_identical_batch(self, fitted):
        a = fitted.sample_vectors("UDP-flood", 16, seed=3)
        b = fitted.sample_vectors("UDP-flood", 16, seed=3)
        assert all((x == y).all() for x, y in zip(a, b))

    def test_unknown_category_rejected(self, fitted):
        with pytest.raises(KeyError, match="nosuch"):
            fitted.sample_vectors("nosuch", 4)

    def test_decoded_protocol_matches_the_category(self, fitted):
        for vec in fitted.sample_vectors("ICMP-flood", 30, seed=1):
            record = decode_vector(vec).record
            assert record.protocol is ProtocolKind.ICMP

    def test_identical_packets_reproduce_masked_columns(self, fixture_dataset):
        tcp = [p for p in fixture_dataset
               if p.attack_label == "SYN-flood"][0]
        ds = TraceDataset((tcp,))
        model = fit_surrogate(ds, LAYOUT_V1)
        reference = encode_packet(tcp)
        mask = structural_mask(ProtocolKind.TCP)
        for vec in model.sample_vectors("SYN-flood", 25, seed=2):
            assert (vec[mask] == reference[mask]).all()

    def test_column_frequencies_match_fitted_probabilities(self, fitted):
        key = ("TCP", "SYN-flood")
        cat = fitted.categories_[key]
        n = 10_000
        vectors = np.stack(fitted.sample_vectors(key, n, seed=4))
        free = ~cat["mask"]
        free_cols = np.flatnonzero(free)
        rng = np.random.default_rng(5)
        for col in rng.choice(free_cols, size=40, replace=False):
            for vi, value in enumerate((-1, 0, 1)):
                p = cat["probs"][col, vi]
                observed = (vectors[:, col] == value).sum()
                sigma = np.sqrt(n * p * (1 - p))
                assert abs(observed - n * p) <= 3 * sigma + 1

    def test_validity_of_decoded_samples(self, fitted):
        """Masked structural columns keep conformance high by construction."""
        for proto in ("TCP", "UDP", "ICMP"):
            ok = 0
            packets = fitted.sample_packets(proto, 200, seed=6)
            for record in packets:
                if validate_packet(record).ok:
                    ok += 1
            assert ok / len(packets) >= 0.95, proto


class TestPersistence:
    def test_save_load_round_trip(self, fitted, tmp_path):
        path = tmp_path / "surrogate.json"
        fitted.save(path, config_hash="ffff")
        back = FieldSurrogate.load(path)
        assert back.config_hash == "ffff"
        a = fitted.sample_vectors("SYN-flood", 8, seed=9)
        b = back.sample_vectors("SYN-flood", 8, seed=9)
        assert all((x == y).all() for x, y in zip(a, b))

    def test_empty_dataset_category_warns_and_skips(self, fixture_dataset):
        model = FieldSurrogate()
        model.fit(fixture_dataset, LAYOUT_V1)
        assert all(cat["count"] > 0 for cat in model.categories_.values())
