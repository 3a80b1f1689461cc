import numpy as np
import pytest

from clonecraft.audio import MelSpectrogram, encoder_mel_config, synthesizer_mel_config
from clonecraft.checkpoints import load_archive, save_archive
from clonecraft.errors import FormatError
from clonecraft.formats import read_dvec, read_melf, write_dvec, write_melf


def random_mel(n_frames=50, config=None, seed=0):
    cfg = config or synthesizer_mel_config()
    rng = np.random.default_rng(seed)
    frames = rng.uniform(cfg.log_floor, 3.0, size=(n_frames, cfg.n_mels)).astype(np.float32)
    return MelSpectrogram(frames, cfg)


class TestMelf:
    def test_round_trip_bit_identical(self, tmp_path):
        mel = random_mel()
        path = tmp_path / "a.melf"
        write_melf(path, mel)
        back = read_melf(path, mel.config)
        assert np.array_equal(back.frames, mel.frames)
        assert back.frames.dtype == np.float32

    def test_header_fields(self, tmp_path):
        mel = random_mel()
        path = tmp_path / "a.melf"
        write_melf(path, mel)
        raw = path.read_bytes()
        assert raw[:4] == b"MELF"
        n_mels = int.from_bytes(raw[6:8], "little")
        n_frames = int.from_bytes(raw[8:12], "little")
        hop_ms = np.frombuffer(raw[12:16], dtype="<f4")[0]
        assert n_mels == 80 and n_frames == 50 and hop_ms == np.float32(12.5)

    def test_default_config_by_channels(self, tmp_path):
        enc = random_mel(30, config=encoder_mel_config())
        path = tmp_path / "enc.melf"
        write_melf(path, enc)
        back = read_melf(path)
        assert back.config == encoder_mel_config()

    def test_corrupted_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.melf"
        write_melf(path, random_mel())
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_melf(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "short.melf"
        write_melf(path, random_mel())
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 8])
        with pytest.raises(FormatError):
            read_melf(path)

    def test_config_mismatch_rejected(self, tmp_path):
        path = tmp_path / "a.melf"
        write_melf(path, random_mel())
        with pytest.raises(FormatError):
            read_melf(path, encoder_mel_config())


class TestDvec:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        vec = rng.normal(size=256).astype(np.float32)
        vec /= np.linalg.norm(vec)
        path = tmp_path / "e.dvec"
        write_dvec(path, vec)
        assert np.array_equal(read_dvec(path), vec)
        assert path.read_bytes()[:4] == b"DVEC"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "e.dvec"
        path.write_bytes(b"NOPE" + b"\x00" * 10)
        with pytest.raises(FormatError):
            read_dvec(path)


class TestCheckpointArchive:
    def test_save_load_save_byte_identical(self, tmp_path):
        rng = np.random.default_rng(2)
        config = {"kind": "encoder", "step": 17, "nested": {"lr": 0.001}}
        tensors = {
            "model.weight": rng.normal(size=(8, 4)).astype(np.float32),
            "model.bias": rng.normal(size=8).astype(np.float32),
            "rng.torch": rng.integers(0, 255, size=64).astype(np.uint8),
            "optim.step": np.array(17, dtype=np.int64),
        }
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_archive(p1, config, tensors)
        cfg, loaded = load_archive(p1)
        save_archive(p2, cfg, loaded)
        assert p1.read_bytes() == p2.read_bytes()
        assert cfg == config
        for name, arr in tensors.items():
            assert np.array_equal(loaded[name], arr)
            assert loaded[name].dtype == arr.dtype

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "a.ckpt"
        path.write_bytes(b"JUNKDATA")
        with pytest.raises(FormatError):
            load_archive(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "a.ckpt"
        save_archive(path, {}, {"w": np.ones(10, dtype=np.float32)})
        raw = path.read_bytes()
        path.write_bytes(raw[:-12])
        with pytest.raises(FormatError):
            load_archive(path)
