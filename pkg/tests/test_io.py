import numpy as np
import pytest

from aesynth import (
    AcquisitionSpec,
    ArrayGeometry,
    Medium,
    PressureModel,
    PulseSpec,
    SFieldGrid,
    simulate_dataset,
    single_element_sequence,
    focused_sequence,
)
from aesynth.errors import FileFormatError
from aesynth.io import (
    channel_file_bytes,
    format_metric,
    read_channel_file,
    read_sidecar,
    read_values_csv,
    sha256_file,
    write_channel_file,
    write_envelope_pgm,
    write_linear_pgm,
    write_sidecar,
    write_values_csv,
)


@pytest.fixture
def dataset():
    g = ArrayGeometry(num_elements=6, pitch=0.4e-3)
    medium = Medium(sos=1480.0)
    pulse = PulseSpec(center_frequency=2e6, num_cycles=1, sample_rate=16e6)
    values = np.zeros((4, 4))
    values[2, 1] = 1.0
    s = SFieldGrid(origin=(-1e-3, 6e-3), dx=5e-4, dz=5e-4, values=values)
    events = single_element_sequence(g) + focused_sequence(g, medium, 8e-3, [0.0])
    return simulate_dataset(
        s, events, g, medium, pulse, PressureModel(),
        AcquisitionSpec(k=2, noise_power=0.01), seed=5, max_depth=12e-3,
    )


class TestChannelFile:
    def test_round_trip_bit_exact(self, tmp_path, dataset):
        path = tmp_path / "data.aecd"
        digest = write_channel_file(path, dataset)
        assert sha256_file(path) == digest
        loaded = read_channel_file(path)
        rewritten = channel_file_bytes(loaded)
        assert rewritten == path.read_bytes()

    def test_fields_survive(self, tmp_path, dataset):
        path = tmp_path / "data.aecd"
        write_channel_file(path, dataset)
        loaded = read_channel_file(path)
        assert loaded.num_events == dataset.num_events
        assert loaded.num_samples == dataset.num_samples
        assert loaded.sample_rate == dataset.sample_rate
        assert loaded.t0 == dataset.t0
        assert loaded.geometry.num_elements == 6
        assert loaded.geometry.pitch == dataset.geometry.pitch
        assert loaded.medium.sos == dataset.medium.sos
        np.testing.assert_allclose(
            loaded.channels, dataset.channels.astype(np.float32), rtol=0
        )
        for a, b in zip(loaded.events, dataset.events):
            np.testing.assert_array_equal(a.delays, b.delays)
            np.testing.assert_array_equal(a.active, b.active)

    def test_header_layout(self, tmp_path, dataset):
        path = tmp_path / "data.aecd"
        write_channel_file(path, dataset)
        blob = path.read_bytes()
        assert blob[:4] == b"AECD"
        assert int.from_bytes(blob[4:6], "little") == 1
        assert int.from_bytes(blob[6:8], "little") == dataset.num_events
        assert int.from_bytes(blob[8:12], "little") == dataset.num_samples
        assert np.frombuffer(blob[12:20], "<f8")[0] == dataset.sample_rate

    def test_bad_magic_rejected(self, tmp_path, dataset):
        path = tmp_path / "data.aecd"
        write_channel_file(path, dataset)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(FileFormatError):
            read_channel_file(path)

    def test_truncated_rejected(self, tmp_path, dataset):
        path = tmp_path / "data.aecd"
        write_channel_file(path, dataset)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 7])
        with pytest.raises(FileFormatError):
            read_channel_file(path)

    def test_no_partial_file_left_behind(self, tmp_path, dataset):
        path = tmp_path / "sub" / "data.aecd"
        with pytest.raises(FileNotFoundError):
            write_channel_file(path, dataset)
        assert not path.exists()


class TestImageFiles:
    def test_values_csv_round_trip(self, tmp_path, rng):
        values = rng.normal(size=(12, 7))
        path = tmp_path / "img.csv"
        write_values_csv(path, values)
        loaded = read_values_csv(path, 12, 7)
        np.testing.assert_allclose(loaded, values, rtol=1e-9)
        # one row per depth sample
        assert len(path.read_text().strip().splitlines()) == 12

    def test_envelope_pgm_format_and_scaling(self, tmp_path):
        env = np.zeros((3, 4))
        env[1, 2] = 1.0
        env[0, 0] = 0.1  # -20 dB -> mid scale
        path = tmp_path / "img.pgm"
        write_envelope_pgm(path, env)
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n4 3\n255\n")
        pixels = np.frombuffer(blob[len(b"P5\n4 3\n255\n"):], dtype=np.uint8).reshape(3, 4)
        assert pixels[1, 2] == 255
        assert pixels[0, 0] == round(255 * (1 - 20 / 40))
        assert pixels[2, 2] == 0  # zero envelope clips to black

    def test_envelope_pgm_all_zero(self, tmp_path):
        path = tmp_path / "zero.pgm"
        write_envelope_pgm(path, np.zeros((2, 2)))
        pixels = np.frombuffer(path.read_bytes()[-4:], dtype=np.uint8)
        np.testing.assert_array_equal(pixels, 0)

    def test_linear_pgm_maps_unit_scale(self, tmp_path):
        vals = np.array([[0.0, 0.5, 1.0]])
        path = tmp_path / "map.pgm"
        write_linear_pgm(path, vals, peak=1.0)
        pixels = np.frombuffer(path.read_bytes()[-3:], dtype=np.uint8)
        np.testing.assert_array_equal(pixels, [0, 128, 255])


class TestSidecarAndCsv:
    def test_sidecar_round_trip(self, tmp_path):
        entries = {"method": "sa", "f_number": "1.5", "nx": "64"}
        path = tmp_path / "meta.txt"
        write_sidecar(path, entries)
        assert read_sidecar(path) == entries

    def test_format_metric(self):
        assert format_metric(None) == ""
        assert format_metric(float("-inf")) == "-inf"
        assert format_metric(1.25) == "1.250000"
        assert format_metric("bm") == "bm"
