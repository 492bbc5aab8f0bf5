import json
import struct

import numpy as np
import pytest

from lfgan.checkpoint import (MAGIC, VERSION, load_checkpoint,
                              save_checkpoint, snap_f32)


def _sample_arrays(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "gen.const": rng.normal(size=(1, 16)),
        "disc.body0.W": rng.normal(size=(16, 8)),
        "scalar.like": np.array(3.5),
    }


def _save(tmp_path, name="a.ckpt", **kw):
    path = tmp_path / name
    defaults = dict(iteration=7, kappa=0.25, config={"run.seed": 1},
                    arrays=_sample_arrays(),
                    rng_state={"bit_generator": "PCG64",
                               "state": {"state": 2 ** 100 + 3, "inc": 11},
                               "has_uint32": 0, "uinteger": 0},
                    scalars={"cp.final_loss": 0.125})
    defaults.update(kw)
    save_checkpoint(path, **defaults)
    return path


class TestSnap:
    def test_snap_is_idempotent(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(50,))
        once = snap_f32(a)
        assert not np.array_equal(once, a)  # f64 noise really gets rounded
        assert np.array_equal(snap_f32(once), once)

    def test_snap_round_trips_through_f32(self):
        a = np.array([1.0, np.pi, -2 ** 20 + 0.1])
        assert np.array_equal(snap_f32(a),
                              a.astype(np.float32).astype(np.float64))


class TestSaveLoad:
    def test_round_trip_fields(self, tmp_path):
        path = _save(tmp_path)
        data = load_checkpoint(path)
        assert data.version == VERSION
        assert data.iteration == 7
        assert data.kappa == 0.25
        assert data.config == {"run.seed": 1}
        assert data.scalars == {"cp.final_loss": 0.125}
        # arbitrary-precision ints in the rng state survive the json hop
        assert data.rng_state["state"]["state"] == 2 ** 100 + 3

    def test_arrays_round_trip_at_f32_resolution(self, tmp_path):
        arrays = _sample_arrays(seed=1)
        path = _save(tmp_path, arrays=arrays)
        loaded = load_checkpoint(path).arrays
        assert set(loaded) == set(arrays)
        for name, arr in arrays.items():
            assert loaded[name].shape == arr.shape
            assert loaded[name].dtype == np.float64
            assert np.array_equal(loaded[name], snap_f32(arr))

    def test_save_load_save_is_byte_identical(self, tmp_path):
        p1 = _save(tmp_path, "a.ckpt")
        data = load_checkpoint(p1)
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(p2, iteration=data.iteration, kappa=data.kappa,
                        config=data.config, arrays=data.arrays,
                        rng_state=data.rng_state, scalars=data.scalars)
        assert p1.read_bytes() == p2.read_bytes()

    def test_layout_magic_version_header(self, tmp_path):
        path = _save(tmp_path)
        blob = path.read_bytes()
        assert blob[:4] == MAGIC == b"LFCK"
        assert struct.unpack("<H", blob[4:6])[0] == VERSION
        head_len = struct.unpack("<I", blob[6:10])[0]
        header = json.loads(blob[10:10 + head_len])
        assert header["iteration"] == 7
        assert [e["name"] for e in header["arrays"]] == list(_sample_arrays())

    def test_blobs_are_little_endian_f32_in_header_order(self, tmp_path):
        arrays = {"x": np.arange(4.0), "y": np.array([[1.0, 2.0]])}
        path = _save(tmp_path, arrays=arrays)
        blob = path.read_bytes()
        head_len = struct.unpack("<I", blob[6:10])[0]
        raw = blob[10 + head_len:]
        x = np.frombuffer(raw[:16], dtype="<f4")
        y = np.frombuffer(raw[16:24], dtype="<f4")
        assert np.array_equal(x, np.arange(4.0, dtype=np.float32))
        assert np.array_equal(y, np.array([1.0, 2.0], dtype=np.float32))

    def test_snap_live_snaps_values_in_place(self, tmp_path):
        class Box:
            def __init__(self, v):
                self.value = v

        rng = np.random.default_rng(5)
        var = Box(rng.normal(size=(6,)))
        plain = rng.normal(size=(3,))
        _save(tmp_path, arrays={"v": var.value, "p": plain},
              snap_live={"v": var, "p": plain})
        assert np.array_equal(var.value, snap_f32(var.value))
        assert np.array_equal(plain, snap_f32(plain))

    def test_returns_byte_count(self, tmp_path):
        path = tmp_path / "n.ckpt"
        n = save_checkpoint(path, iteration=0, kappa=0.0, config={},
                            arrays={"a": np.zeros(3)})
        assert n == path.stat().st_size


class TestCorruption:
    def test_bad_magic_rejected(self, tmp_path):
        path = _save(tmp_path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"ZZZZ"
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)

    def test_unsupported_version_rejected(self, tmp_path):
        path = _save(tmp_path)
        blob = bytearray(path.read_bytes())
        blob[4:6] = struct.pack("<H", 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)

    def test_truncated_blob_rejected(self, tmp_path):
        path = _save(tmp_path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = _save(tmp_path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(ValueError, match="trailing"):
            load_checkpoint(path)

    def test_garbled_header_rejected(self, tmp_path):
        path = _save(tmp_path)
        blob = bytearray(path.read_bytes())
        blob[12] = 0xFF  # stomp inside the json header
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="corrupt|truncated"):
            load_checkpoint(path)
