import json
import os

import numpy as np
import pytest

import helpers
import oracles
from asgfit import asg, hdr_io, losses, optimizer
from asgfit.geometry import SampleGrid

DATA = os.path.join(os.path.dirname(__file__), "data")

HDR_HEADER = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n"


def golden(name):
    with open(os.path.join(DATA, name), "rb") as f:
        return f.read()


# ---------------------------------------------------------------------------
# RGBE pixel codec

def test_decode_worked_examples():
    np.testing.assert_array_equal(
        hdr_io.rgbe_decode(np.array([128, 128, 128, 128], np.uint8)),
        [0.5, 0.5, 0.5])
    np.testing.assert_array_equal(
        hdr_io.rgbe_decode(np.array([0, 0, 0, 0], np.uint8)), [0, 0, 0])
    # Zero exponent is black no matter the mantissas.
    np.testing.assert_array_equal(
        hdr_io.rgbe_decode(np.array([200, 10, 99, 0], np.uint8)), [0, 0, 0])


def test_decode_matches_reference(rng):
    quads = rng.integers(0, 256, (200, 4), dtype=np.uint8)
    got = hdr_io.rgbe_decode(quads)
    for q, row in zip(quads, got):
        np.testing.assert_array_equal(row, oracles.reference_rgbe_decode(q))


def test_encode_worked_examples():
    np.testing.assert_array_equal(
        hdr_io.rgbe_encode(np.zeros(3)), np.zeros(4, np.uint8))
    np.testing.assert_array_equal(
        hdr_io.rgbe_encode(np.ones(3)), [128, 128, 128, 129])


def test_encode_matches_reference_on_tricky_values(rng):
    tricky = [
        (1.0, 1.0, 1.0), (0.5, 0.25, 0.125), (2.0, 4.0, 8.0),
        (0.9999999, 0.1, 0.1),          # mantissa rounds up to 256
        (255.9 / 256.0, 0.0, 0.0),      # rounds to 256 at the boundary
        (1e38, 2e38, 3e38),             # saturates the exponent
        (1e-40, 1e-40, 1e-40),          # below the smallest exponent
        (1e-38, 0.0, 0.0),
        (3.14159, 2.71828, 1.41421),
        (0.0, 0.0, 7.5),
    ]
    cases = np.concatenate([np.array(tricky),
                            rng.uniform(0, 100, (200, 3)),
                            np.exp(rng.uniform(-90, 85, (200, 3)))])
    got = hdr_io.rgbe_encode(cases)
    for rgb, quad in zip(cases, got):
        assert tuple(quad) == oracles.reference_rgbe_encode(rgb), rgb


def test_round_trip_dominant_channel_error_bound(rng):
    rgb = np.exp(rng.uniform(np.log(1e-6), np.log(1e4), (500, 3)))
    back = hdr_io.rgbe_decode(hdr_io.rgbe_encode(rgb))
    dom = rgb.max(axis=1)
    err = np.abs(back - rgb).max(axis=1) / dom
    assert err.max() <= 1.0 / 256.0 * (1 + 1e-9)


def test_decode_encode_idempotent(rng):
    quads = rng.integers(0, 256, (300, 4), dtype=np.uint8)
    # Canonicalize: zero-exponent quads decode to black which re-encodes
    # to all zeros, and dominant mantissas below 128 gain precision.
    once = hdr_io.rgbe_encode(hdr_io.rgbe_decode(quads))
    twice = hdr_io.rgbe_encode(hdr_io.rgbe_decode(once))
    np.testing.assert_array_equal(twice, once)


# ---------------------------------------------------------------------------
# Radiance container: golden file

def test_golden_decodes_to_snapshot():
    env = hdr_io.read_hdr(golden("golden_rgbe.hdr"))
    want = np.load(os.path.join(DATA, "golden_rgbe.npz"))["pixels"]
    np.testing.assert_array_equal(env.pixels, want)
    assert (env.height, env.width) == (24, 48)


def test_golden_reencodes_byte_exact():
    data = golden("golden_rgbe.hdr")
    env = hdr_io.read_hdr(data)
    assert hdr_io.write_hdr(env) == data


def test_write_read_round_trip_is_stable(rng, grid16):
    env = hdr_io.EnvMap(
        helpers.sky_with_sun(grid16, helpers.unit((0.2, 0.9, 0.3))))
    decoded = hdr_io.read_hdr(hdr_io.write_hdr(env))
    again = hdr_io.read_hdr(hdr_io.write_hdr(decoded))
    np.testing.assert_array_equal(again.pixels, decoded.pixels)


# ---------------------------------------------------------------------------
# Radiance container: scanline formats

def test_old_style_repeat_markers_with_doubling():
    # 520 = 1 explicit + repeat 255 + repeat (1 << 8) + 8 explicit; the
    # second consecutive repeat's count is shifted up by 8 bits.
    first = bytes([10, 20, 30, 130])
    tail = [bytes([40 + i, 50, 60, 131]) for i in range(8)]
    body = first + bytes([1, 1, 1, 255]) + bytes([1, 1, 1, 1]) + b"".join(tail)
    data = HDR_HEADER + b"-Y 1 +X 520\n" + body
    env = hdr_io.read_hdr(data)
    assert env.pixels.shape == (1, 520, 3)
    want_first = hdr_io.rgbe_decode(np.frombuffer(first, np.uint8))
    np.testing.assert_array_equal(
        env.pixels[0, :512], np.broadcast_to(want_first, (512, 3)))
    for i, quad in enumerate(tail):
        np.testing.assert_array_equal(
            env.pixels[0, 512 + i],
            hdr_io.rgbe_decode(np.frombuffer(quad, np.uint8)))


def test_old_style_repeat_at_row_start_rejected():
    data = HDR_HEADER + b"-Y 1 +X 520\n" + bytes([1, 1, 1, 5])
    with pytest.raises(hdr_io.HdrParseError, match="no previous pixel"):
        hdr_io.read_hdr(data)


def test_old_style_repeat_crossing_row_end_rejected():
    body = bytes([10, 20, 30, 130]) + bytes([1, 1, 1, 200])
    data = HDR_HEADER + b"-Y 1 +X 4\n" + body
    with pytest.raises(hdr_io.HdrParseError, match="crosses scanline end"):
        hdr_io.read_hdr(data)


def test_new_style_header_width_mismatch_rejected():
    data = HDR_HEADER + b"-Y 1 +X 8\n" + bytes([2, 2, 0, 9])
    with pytest.raises(hdr_io.HdrParseError, match="does not match image width"):
        hdr_io.read_hdr(data)


def test_new_style_zero_length_packet_rejected():
    data = HDR_HEADER + b"-Y 1 +X 8\n" + bytes([2, 2, 0, 8, 0])
    with pytest.raises(hdr_io.HdrParseError, match="zero-length packet"):
        hdr_io.read_hdr(data)


def test_new_style_run_overflow_rejected():
    data = HDR_HEADER + b"-Y 1 +X 8\n" + bytes([2, 2, 0, 8, 255, 7])
    with pytest.raises(hdr_io.HdrParseError, match="run overflows"):
        hdr_io.read_hdr(data)


def test_new_style_literal_overflow_rejected():
    data = HDR_HEADER + b"-Y 1 +X 8\n" + bytes([2, 2, 0, 8, 20]) + bytes(20)
    with pytest.raises(hdr_io.HdrParseError, match="literal overflows"):
        hdr_io.read_hdr(data)


def test_new_style_truncation_rejected():
    data = HDR_HEADER + b"-Y 1 +X 8\n" + bytes([2, 2, 0, 8, 130, 5])
    with pytest.raises(hdr_io.HdrParseError, match="truncated scanline"):
        hdr_io.read_hdr(data)


def test_header_validation():
    with pytest.raises(hdr_io.HdrParseError, match="signature"):
        hdr_io.read_hdr(b"RADIANCE\n\n-Y 1 +X 8\n")
    with pytest.raises(hdr_io.HdrParseError, match="missing FORMAT"):
        hdr_io.read_hdr(b"#?RADIANCE\n\n-Y 1 +X 8\n")
    with pytest.raises(hdr_io.HdrParseError, match="unsupported format"):
        hdr_io.read_hdr(b"#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 8\n")
    with pytest.raises(hdr_io.HdrParseError, match="resolution line"):
        hdr_io.read_hdr(HDR_HEADER + b"+Y 1 +X 8\n")
    with pytest.raises(hdr_io.HdrParseError, match="degenerate resolution"):
        hdr_io.read_hdr(HDR_HEADER + b"-Y 0 +X 8\n")
    with pytest.raises(hdr_io.HdrParseError, match="truncated header"):
        hdr_io.read_hdr(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe")


def test_header_metadata_ignored():
    extra = (b"#?RADIANCE\n# made by hand\nEXPOSURE=2.0\n"
             b"FORMAT=32-bit_rle_rgbe\nGAMMA=1.0\n\n-Y 1 +X 4\n")
    quad = bytes([128, 64, 32, 128])
    env = hdr_io.read_hdr(extra + quad * 4)
    np.testing.assert_array_equal(
        env.pixels[0, 0], hdr_io.rgbe_decode(np.frombuffer(quad, np.uint8)))


def test_narrow_image_writes_flat_quads():
    pixels = np.full((2, 4, 3), 0.5)
    data = hdr_io.write_hdr(hdr_io.EnvMap(pixels))
    header_len = data.index(b"-Y 2 +X 4\n") + len(b"-Y 2 +X 4\n")
    assert len(data) == header_len + 2 * 4 * 4
    np.testing.assert_array_equal(hdr_io.read_hdr(data).pixels, pixels)


def test_rle_component_packet_structure():
    # A constant 300-wide component: runs cap at 127, so 127 + 127 + 46.
    comp = np.full(300, 9, np.uint8)
    assert hdr_io._rle_encode_component(comp) == bytes(
        [255, 9, 255, 9, 128 + 46, 9])
    # Short repeats ride inside literals; only runs >= 4 use run packets.
    comp = np.array([5, 5, 5, 5, 1, 2, 3, 4, 4, 4, 4, 4], np.uint8)
    assert hdr_io._rle_encode_component(comp) == bytes(
        [128 + 4, 5, 3, 1, 2, 3, 128 + 5, 4])


def test_long_literal_splits_at_128():
    comp = np.arange(200, dtype=np.uint8) % 251
    encoded = hdr_io._rle_encode_component(comp)
    assert encoded[0] == 128
    assert encoded[1:129] == comp[:128].tobytes()
    assert encoded[129] == 72
    assert encoded[130:] == comp[128:].tobytes()


# ---------------------------------------------------------------------------
# PFM

def test_pfm_round_trip_bitwise(rng):
    pixels = rng.uniform(0, 50, (6, 9, 3)).astype("<f4").astype(float)
    env = hdr_io.read_pfm(hdr_io.write_pfm(hdr_io.EnvMap(pixels)))
    np.testing.assert_array_equal(env.pixels, pixels)


def test_pfm_golden_big_endian():
    env = hdr_io.read_pfm(golden("golden_be.pfm"))
    want = np.load(os.path.join(DATA, "golden_be.npz"))["pixels"]
    np.testing.assert_array_equal(env.pixels, want)


def test_pfm_negative_scale_magnitude_applied():
    sample = np.array([1.5, 2.5, 3.5], "<f4").tobytes()
    env = hdr_io.read_pfm(b"PF\n1 1\n-4.0\n" + sample)
    np.testing.assert_array_equal(env.pixels[0, 0], [6.0, 10.0, 14.0])


def test_pfm_gray_broadcasts():
    body = np.array([0.25, 0.75], "<f4").tobytes()
    env = hdr_io.read_pfm(b"Pf\n2 1\n-1.0\n" + body)
    np.testing.assert_array_equal(env.pixels,
                                  [[[0.25] * 3, [0.75] * 3]])


def test_pfm_rows_are_bottom_up():
    # Height 2: the first stored row is the bottom of the image.
    body = np.array([[1, 1, 1], [9, 9, 9]], "<f4").tobytes()
    env = hdr_io.read_pfm(b"PF\n1 2\n-1.0\n" + body)
    np.testing.assert_array_equal(env.pixels[:, 0, 0], [9.0, 1.0])


def test_pfm_errors():
    with pytest.raises(hdr_io.HdrParseError, match="not a PFM"):
        hdr_io.read_pfm(b"P5\n1 1\n-1.0\n" + bytes(4))
    with pytest.raises(hdr_io.HdrParseError, match="truncated PFM header"):
        hdr_io.read_pfm(b"PF\n3 4")
    with pytest.raises(hdr_io.HdrParseError, match="truncated PFM samples"):
        hdr_io.read_pfm(b"PF\n2 2\n-1.0\n" + bytes(8))
    with pytest.raises(hdr_io.HdrParseError, match="bad PFM header field"):
        hdr_io.read_pfm(b"PF\nX 5\n-1.0\n")
    with pytest.raises(hdr_io.HdrParseError, match="degenerate PFM header"):
        hdr_io.read_pfm(b"PF\n0 5\n-1.0\n")
    with pytest.raises(hdr_io.HdrParseError, match="degenerate PFM header"):
        hdr_io.read_pfm(b"PF\n2 2\n0.0\n" + bytes(48))


# ---------------------------------------------------------------------------
# File dispatch and validation

def test_save_load_dispatch(tmp_path, grid8):
    env = hdr_io.EnvMap(
        helpers.gradient_sky(grid8, (0.2, 0.3, 0.5), (0.6, 0.7, 1.0)))
    for name in ("env.hdr", "env.pic", "env.pfm"):
        path = str(tmp_path / name)
        hdr_io.save_env(path, env)
        back = hdr_io.load_env(path)
        assert back.source == path
        assert back.pixels.shape == env.pixels.shape
        # Lossy codecs still keep within their quantization budget.
        np.testing.assert_allclose(back.pixels, env.pixels, rtol=1 / 128)


def test_unknown_extension_rejected(tmp_path, grid8):
    env = hdr_io.EnvMap(np.ones((grid8.height, grid8.width, 3)))
    with pytest.raises(ValueError, match="unsupported image format"):
        hdr_io.save_env(str(tmp_path / "env.png"), env)
    bad = tmp_path / "env.exr"
    bad.write_bytes(b"whatever")
    with pytest.raises(hdr_io.HdrParseError, match="unsupported image format"):
        hdr_io.load_env(str(bad))


def test_load_validates_pixels(tmp_path):
    pixels = np.ones((2, 4, 3), "<f4")
    pixels[1, 2, 0] = -3.0
    path = tmp_path / "bad.pfm"
    path.write_bytes(b"PF\n4 2\n-1.0\n" + pixels[::-1].tobytes())
    with pytest.raises(hdr_io.HdrParseError, match=r"x=2 y=1 channel=0"):
        hdr_io.load_env(str(path))


def test_atomic_write(tmp_path):
    path = tmp_path / "out.bin"
    hdr_io.atomic_write_bytes(str(path), b"payload")
    assert path.read_bytes() == b"payload"
    assert not (tmp_path / "out.bin.tmp").exists()


def test_envmap_sample_at_pixel_centers(rng, grid8):
    pixels = rng.uniform(0, 3, (grid8.height, grid8.width, 3))
    env = hdr_io.EnvMap(pixels)
    got = env.sample(grid8.dirs_flat).reshape(pixels.shape)
    np.testing.assert_allclose(got, pixels, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------------------
# Resampling

def test_resample_identity_returns_copy(grid8):
    env = hdr_io.EnvMap(np.ones((grid8.height, grid8.width, 3)))
    out = hdr_io.resample(env, grid8.height, grid8.width)
    out.pixels[0, 0, 0] = 99.0
    assert env.pixels[0, 0, 0] == 1.0


def test_resample_preserves_constants():
    env = hdr_io.EnvMap(np.full((32, 64, 3), 1.75))
    down = hdr_io.resample(env, 8)
    np.testing.assert_allclose(down.pixels, 1.75, rtol=1e-12)
    up = hdr_io.resample(env, 64)
    np.testing.assert_allclose(up.pixels, 1.75, rtol=1e-12)


def test_downsample_conserves_energy(rng):
    grid_src = SampleGrid.make(64)
    env = hdr_io.EnvMap(
        helpers.sky_with_sun(grid_src, helpers.unit((0.5, 0.4, 0.3))))
    down = hdr_io.resample(env, 16)
    grid_dst = SampleGrid.make(16)
    src_energy = grid_src.weights_flat @ env.pixels.reshape(-1, 3)
    dst_energy = grid_dst.weights_flat @ down.pixels.reshape(-1, 3)
    np.testing.assert_allclose(dst_energy, src_energy, rtol=1e-10)


def test_upsample_and_mixed_paths(rng):
    src = hdr_io.EnvMap(rng.uniform(0, 2, (16, 32, 3)))
    up = hdr_io.resample(src, 64)
    assert up.pixels.shape == (64, 128, 3)
    assert np.isfinite(up.pixels).all()
    square = hdr_io.EnvMap(rng.uniform(0, 2, (100, 100, 3)))
    mixed = hdr_io.resample(square, 64, 128)  # width grows: bilinear
    assert mixed.pixels.shape == (64, 128, 3)


def test_resample_rejects_tiny_sources():
    with pytest.raises(ValueError, match="too small"):
        hdr_io.resample(hdr_io.EnvMap(np.ones((3, 64, 3))), 8)
    with pytest.raises(ValueError, match="too small"):
        hdr_io.resample(hdr_io.EnvMap(np.ones((16, 6, 3))), 8)


# ---------------------------------------------------------------------------
# Params files

def test_params_round_trip(tmp_path, rng):
    cfg = optimizer.FitConfig(num_asgs=3, grid_height=8, epochs_first=10,
                              epochs_rest=5, weights=losses.LossWeights(
                                  alpha=0.9, beta=1.1, gamma=0.3),
                              isotropic=True, recon_loss="l2", seed=7)
    frames = [helpers.random_params(rng, 3) for _ in range(2)]
    path = str(tmp_path / "fit.json")
    hdr_io.save_params(path, frames, cfg)
    mixtures, cfg_back = hdr_io.load_params(path)
    assert cfg_back == cfg
    assert len(mixtures) == 2
    for params, loaded in zip(frames, mixtures):
        want = losses.realized_vector(asg.realize(params))
        got = losses.realized_vector(loaded)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-15)


def test_params_accept_realized_mixtures(tmp_path, rng):
    cfg = optimizer.FitConfig(num_asgs=2, grid_height=8)
    realized = [asg.realize(helpers.random_params(rng, 2))]
    path = str(tmp_path / "fit.json")
    hdr_io.save_params(path, realized, cfg)
    mixtures, _ = hdr_io.load_params(path)
    np.testing.assert_allclose(losses.realized_vector(mixtures[0]),
                               losses.realized_vector(realized[0]),
                               rtol=1e-12, atol=1e-15)


def test_params_file_errors(tmp_path, rng):
    cfg = optimizer.FitConfig(num_asgs=1, grid_height=8)
    path = str(tmp_path / "fit.json")

    (tmp_path / "fit.json").write_text("{not json")
    with pytest.raises(hdr_io.HdrParseError, match="invalid params JSON"):
        hdr_io.load_params(path)

    hdr_io.save_params(path, [helpers.random_params(rng, 1)], cfg)
    doc = json.loads((tmp_path / "fit.json").read_text())

    bad = dict(doc, format="something/9")
    (tmp_path / "fit.json").write_text(json.dumps(bad))
    with pytest.raises(hdr_io.HdrParseError, match="unsupported params format"):
        hdr_io.load_params(path)

    bad = dict(doc, frames=[])
    (tmp_path / "fit.json").write_text(json.dumps(bad))
    with pytest.raises(hdr_io.HdrParseError, match="no frames"):
        hdr_io.load_params(path)

    lobe = doc["frames"][0]["lobes"][0]
    bad = dict(doc, frames=[{"lobes": [lobe]}, {"lobes": [lobe, lobe]}])
    (tmp_path / "fit.json").write_text(json.dumps(bad))
    with pytest.raises(hdr_io.HdrParseError, match="lobe counts differ"):
        hdr_io.load_params(path)

    broken = {k: v for k, v in lobe.items() if k != "mu"}
    bad = dict(doc, frames=[{"lobes": [broken]}])
    (tmp_path / "fit.json").write_text(json.dumps(bad))
    with pytest.raises(hdr_io.HdrParseError, match="malformed params file"):
        hdr_io.load_params(path)
