import numpy as np
import pytest

from ddosynth.clustering import Metadata, make_chain
from ddosynth.combine import (
    AssemblyError,
    CombinationConfig,
    assemble_trace,
    combine_imitative,
    combine_markov,
    combine_random,
    read_chain_jsonl,
    series_to_timestamps,
    write_chain_jsonl,
)
from ddosynth.packets import IPv4Header, PacketRecord, ProtocolKind, UdpFields
from ddosynth.timeseries import TimeSeries, bin_timestamps


@pytest.fixture
def chain():
    return make_chain([
        Metadata("SYN-flood", 0, start=0.0, duration=30.0),
        Metadata("UDP-flood", 1, start=50.0, duration=20.0),
        Metadata("SYN-flood", 0, start=90.0, duration=25.0),
        Metadata("ICMP-flood", 2, start=130.0, duration=10.0),
    ])


class TestRandom:
    def test_starts_stay_inside_the_interval(self, chain):
        cfg = CombinationConfig(method="random", total_time=200.0, seed=0,
                                counts=500)
        out = combine_random(chain, cfg)
        for m in out:
            assert 0.0 <= m.start <= 200.0 - m.duration

    def test_sorted_by_start(self, chain):
        cfg = CombinationConfig(method="random", total_time=200.0, seed=1,
                                counts=50)
        starts = [m.start for m in combine_random(chain, cfg)]
        assert starts == sorted(starts)

    def test_attack_frequencies_within_multinomial_bound(self, chain):
        n = 10_000
        cfg = CombinationConfig(method="random", total_time=200.0, seed=2,
                                counts=n)
        out = combine_random(chain, cfg)
        attacks = sorted({m.attack for m in chain})
        sigma = np.sqrt(n * (1 / 3) * (2 / 3))
        for attack in attacks:
            count = sum(1 for m in out if m.attack == attack)
            assert abs(count - n / 3) <= 3 * sigma

    def test_same_seed_is_identical(self, chain):
        cfg = CombinationConfig(method="random", total_time=200.0, seed=3,
                                counts=20)
        assert combine_random(chain, cfg) == combine_random(chain, cfg)

    def test_total_time_must_exceed_longest_duration(self, chain):
        cfg = CombinationConfig(method="random", total_time=30.0, seed=0)
        with pytest.raises(ValueError, match="exceed"):
            combine_random(chain, cfg)


class TestMarkov:
    def test_output_length_matches_counts(self, chain):
        cfg = CombinationConfig(method="markov", total_time=0.0, seed=0,
                                counts=37)
        assert len(combine_markov(chain, cfg)) == 37

    def test_alternating_source_keeps_alternating(self):
        source = make_chain([
            Metadata("A" if i % 2 == 0 else "B", i % 2, start=float(i * 10),
                     duration=5.0)
            for i in range(100)
        ])
        cfg = CombinationConfig(method="markov", total_time=0.0, seed=1,
                                counts=400)
        out = combine_markov(source, cfg)
        follows = sum(1 for cur, nxt in zip(out, out[1:])
                      if cur.attack != nxt.attack)
        assert follows / (len(out) - 1) >= 0.97

    def test_transition_frequencies_converge(self, chain):
        from ddosynth.combine import fit_joint_transitions
        states, matrix, _, _ = fit_joint_transitions(chain)
        cfg = CombinationConfig(method="markov", total_time=0.0, seed=2,
                                counts=10_000)
        out = combine_markov(chain, cfg)
        index = {s: i for i, s in enumerate(states)}
        counts = np.zeros_like(matrix)
        for cur, nxt in zip(out, out[1:]):
            counts[index[(cur.attack, cur.cluster)],
                   index[(nxt.attack, nxt.cluster)]] += 1
        rows = counts.sum(axis=1, keepdims=True)
        rows[rows == 0] = 1
        empirical = counts / rows
        visited = counts.sum(axis=1) > 100
        assert np.abs(empirical[visited] - matrix[visited]).max() <= 0.05

    def test_needs_two_tuples(self):
        single = make_chain([Metadata("A", 0, 0.0, 5.0)])
        cfg = CombinationConfig(method="markov", counts=3)
        with pytest.raises(ValueError, match="at least 2"):
            combine_markov(single, cfg)

    def test_sorted_by_construction(self, chain):
        cfg = CombinationConfig(method="markov", total_time=0.0, seed=4,
                                counts=200)
        starts = [m.start for m in combine_markov(chain, cfg)]
        assert starts == sorted(starts)


class TestImitative:
    def test_identity(self, chain):
        assert combine_imitative(chain) == chain

    def test_empty_chain(self):
        assert combine_imitative(()) == ()

    def test_seed_independent(self, chain):
        assert combine_imitative(chain) == combine_imitative(chain)


class TestSeriesToTimestamps:
    def test_bin_placement(self):
        s = TimeSeries(values=np.array([2.0, 0.0]), bin_width=1.0, origin=0.0)
        ts = series_to_timestamps(s, start=10.0, duration=2.0, seed=0)
        assert len(ts) == 2
        assert all(10.0 <= t < 11.0 for t in ts)

    def test_count_conservation(self):
        rng = np.random.default_rng(0)
        values = rng.uniform(0, 9, size=40)
        s = TimeSeries(values=values, bin_width=1.0, origin=0.0)
        ts = series_to_timestamps(s, start=0.0, duration=40.0, seed=1)
        assert len(ts) == int(np.rint(values).sum())

    def test_rebinning_recovers_rounded_counts(self):
        rng = np.random.default_rng(1)
        values = rng.uniform(0, 9, size=25)
        values[-1] = 5.0  # keep the last bin busy so bin count survives
        s = TimeSeries(values=values, bin_width=1.0, origin=0.0)
        duration = 50.0
        ts = series_to_timestamps(s, start=7.0, duration=duration, seed=2)
        width = duration / len(values)
        rebinned = bin_timestamps(ts, width, origin=7.0, n_bins=len(values))
        assert rebinned.values.tolist() == np.rint(values).tolist()

    def test_sorted_output(self):
        s = TimeSeries(values=np.array([3.0, 1.0, 4.0]), bin_width=1.0,
                       origin=0.0)
        ts = series_to_timestamps(s, start=0.0, duration=3.0, seed=3)
        assert ts == sorted(ts)


def _mk_packet(label):
    return PacketRecord(
        timestamp=0.0, protocol=ProtocolKind.UDP, src_ip=1, dst_ip=2,
        src_port=9, dst_port=53, ip_header=IPv4Header(proto_number=17),
        l4_fields=UdpFields(), attack_label=label)


def _series_source(cluster, target_len, seed):
    rng = np.random.default_rng(seed)
    values = rng.uniform(1, 5, size=target_len)
    return TimeSeries(values=values, bin_width=1.0, origin=0.0)


def _field_source(label, n, seed):
    return [_mk_packet(label) for _ in range(n)]


class TestAssemble:
    def test_single_tuple_timestamps_stay_inside_window(self):
        chain = make_chain([Metadata("A", 0, start=100.0, duration=20.0)])
        ds = assemble_trace(chain, _series_source, _field_source, seed=0)
        for p in ds:
            assert 100.0 <= p.timestamp <= 120.0
            assert p.attack_label == "A"

    def test_two_disjoint_tuples_conserve_counts(self):
        chain = make_chain([Metadata("A", 0, 0.0, 10.0),
                            Metadata("B", 1, 50.0, 10.0)])
        ds = assemble_trace(chain, _series_source, _field_source, seed=1)
        a = [p for p in ds if p.attack_label == "A"]
        b = [p for p in ds if p.attack_label == "B"]
        assert all(p.timestamp < 11 for p in a)
        assert all(49 < p.timestamp < 61 for p in b)
        assert len(a) + len(b) == len(ds)

    def test_overlapping_tuples_merge_sorted_and_conserve(self):
        chain = make_chain([Metadata("A", 0, 0.0, 30.0),
                            Metadata("B", 1, 10.0, 30.0)])
        per_tuple = []
        for m in chain:
            # independent per-tuple rerun with the same sub-seeds
            sub = assemble_trace(make_chain([m]), _series_source,
                                 _field_source, seed=2)
            per_tuple.append(sub)
        merged = assemble_trace(chain, _series_source, _field_source, seed=2)
        ts = [p.timestamp for p in merged]
        assert ts == sorted(ts)
        by_label = {
            label: sum(1 for p in merged if p.attack_label == label)
            for label in ("A", "B")
        }
        assert by_label["A"] > 0 and by_label["B"] > 0
        assert by_label["A"] + by_label["B"] == len(merged)

    def test_missing_generator_is_named(self):
        chain = make_chain([Metadata("A", 7, 0.0, 10.0)])

        def no_series(cluster, target_len, seed):
            raise KeyError(cluster)

        with pytest.raises(AssemblyError, match="cluster 7"):
            assemble_trace(chain, no_series, _field_source, seed=0)


class TestChainIO:
    def test_jsonl_round_trip(self, tmp_path, chain):
        path = tmp_path / "chain.jsonl"
        write_chain_jsonl(chain, path, config_hash="abc123")
        back, found = read_chain_jsonl(path)
        assert back == chain
        assert found == "abc123"
