import json

import numpy as np
import pytest

from ddosynth.codec import LAYOUT_V1, encode_packet, write_png, pack_image
from ddosynth.fieldgen import (
    export_surrogate_images,
    export_training_pairs,
    import_generated_images,
    read_manifest,
)
from ddosynth.prompts import ViewCatalog


@pytest.fixture(scope="module")
def exported(tmp_path_factory, fixture_dataset, color_table):
    out = tmp_path_factory.mktemp("pairs")
    catalog = ViewCatalog.from_dataset(fixture_dataset)
    entries = export_training_pairs(fixture_dataset, LAYOUT_V1, catalog,
                                    color_table, out)
    return out, entries


class TestExport:
    def test_each_protocol_gets_a_training_pair(self, exported):
        _, entries = exported
        protocol_entries = [e for e in entries
                            if "protocol" in e["view_categories"]]
        protocols = {e["view_categories"]["protocol"]
                     for e in protocol_entries}
        assert protocols == {"TCP", "UDP", "ICMP"}

    def test_every_manifest_prompt_is_single_view(self, exported):
        _, entries = exported
        for entry in entries:
            assert entry["phase"] == "train"
            assert len(entry["view_categories"]) == 1

    def test_sidecars_carry_layout_and_rows(self, exported):
        out, entries = exported
        for entry in entries[:3]:
            sidecar = json.loads(
                (out / (entry["image_path"].rsplit("/", 1)[-1]
                        .replace(".png", ".json"))).read_text())
            assert sidecar["layout_id"] == "nprint-1088-v1"
            assert sidecar["row_count"] == entry["row_count"]
            assert len(sidecar["row_protocols"]) == entry["row_count"]

    def test_manifest_file_matches_returned_entries(self, exported):
        out, entries = exported
        assert read_manifest(out / "manifest.jsonl") == entries


class TestImport:
    def test_reimport_is_lossless(self, exported, fixture_dataset):
        _, entries = exported
        protocol_entries = [e for e in entries
                            if e["view_categories"] == {"protocol": "TCP"}]
        records, report = import_generated_images(protocol_entries, LAYOUT_V1,
                                                   base_dir=exported[0])
        assert report.total_rows == sum(e["row_count"]
                                        for e in protocol_entries)
        assert all(q.undecodable == 0 for q in report.images)
        tcp = [p for p in fixture_dataset if p.protocol.name == "TCP"]
        assert len(records) == len(tcp)
        for (got, cats), want in zip(records, tcp):
            assert got == want.with_timestamp(0.0).with_label("benign")
            assert cats == {"protocol": "TCP"}
        # round trip keeps the source's validity
        assert report.validity_rate == pytest.approx(1.0)

    def test_uniform_noise_image_has_no_validity(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = [rng.integers(-1, 2, size=1088).astype(np.int8)
                for _ in range(256)]
        path = tmp_path / "noise.png"
        write_png(pack_image(rows), path)
        manifest = [{"image_path": str(path), "prompt": "", "phase": "generate",
                     "view_categories": {}, "layout_id": "nprint-1088-v1",
                     "row_count": 256}]
        _, report = import_generated_images(manifest, LAYOUT_V1)
        assert report.validity_rate <= 0.01

    def test_corrupted_pixels_within_tolerance_decode_clean(self, tmp_path,
                                                            fixture_dataset):
        packets = list(fixture_dataset)[:64]
        vectors = [encode_packet(p) for p in packets]
        img = pack_image(vectors)
        raster = img.raster.astype(int)
        rng = np.random.default_rng(1)
        # corrupt 10% of pixels by up to +-60 per channel: still nearest-color safe
        h, w, _ = raster.shape
        n_corrupt = int(0.1 * h * w)
        ys = rng.integers(0, h, n_corrupt)
        xs = rng.integers(0, w, n_corrupt)
        raster[ys, xs] += rng.integers(-60, 61, size=(n_corrupt, 3))
        path = tmp_path / "corrupt.png"
        write_png(pack_image(vectors), path)  # clean reference
        noisy_path = tmp_path / "noisy.png"
        from PIL import Image
        Image.fromarray(np.clip(raster, 0, 255).astype(np.uint8)).save(
            noisy_path)
        clean = [{"image_path": str(path), "prompt": "", "phase": "generate",
                  "view_categories": {}, "layout_id": "nprint-1088-v1",
                  "row_count": 64}]
        noisy = [{"image_path": str(noisy_path), "prompt": "",
                  "phase": "generate", "view_categories": {},
                  "layout_id": "nprint-1088-v1", "row_count": 64}]
        clean_records, _ = import_generated_images(clean, LAYOUT_V1)
        noisy_records, _ = import_generated_images(noisy, LAYOUT_V1)
        assert [r for r, _ in clean_records] == [r for r, _ in noisy_records]

    def test_wrong_width_is_a_per_file_error(self, tmp_path):
        from PIL import Image
        bad = tmp_path / "narrow.png"
        Image.fromarray(np.zeros((4, 100, 3), dtype=np.uint8)).save(bad)
        manifest = [{"image_path": str(bad), "prompt": "", "phase": "generate",
                     "view_categories": {}, "layout_id": "nprint-1088-v1",
                     "row_count": 4}]
        records, report = import_generated_images(manifest, LAYOUT_V1)
        assert records == []
        assert report.images[0].error is not None


class TestSurrogateBridge:
    def test_generated_images_flow_through_the_same_contract(
            self, tmp_path, fixture_dataset):
        from ddosynth.surrogate import fit_surrogate
        model = fit_surrogate(fixture_dataset, LAYOUT_V1)
        vectors = {"SYN-flood": model.sample_vectors("SYN-flood", 128, seed=0)}
        entries = export_surrogate_images(vectors, LAYOUT_V1, tmp_path)
        assert all(e["phase"] == "generate" for e in entries)
        records, report = import_generated_images(entries, LAYOUT_V1,
                                                  base_dir=tmp_path)
        assert report.total_rows == 128
        assert report.validity_rate >= 0.95
