import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pcapfix import LABEL_RULES_TEXT, build_records, write_pcap  # noqa: E402

from ddosynth.colors import load_color_table  # noqa: E402
from ddosynth.ingest import ingest_pcap, parse_label_rules  # noqa: E402


@pytest.fixture(scope="session")
def fixture_records():
    return build_records(seed=7)


@pytest.fixture(scope="session")
def fixture_paths(tmp_path_factory, fixture_records):
    root = tmp_path_factory.mktemp("fixture")
    pcap = root / "fixture.pcap"
    rules = root / "rules.txt"
    write_pcap(pcap, fixture_records, arp_count=3)
    rules.write_text(LABEL_RULES_TEXT, encoding="utf-8")
    return {"pcap": pcap, "rules": rules}


@pytest.fixture(scope="session")
def fixture_dataset(fixture_paths):
    rules = parse_label_rules(LABEL_RULES_TEXT.splitlines())
    return ingest_pcap(fixture_paths["pcap"], rules)


@pytest.fixture(scope="session")
def color_table():
    return load_color_table()
