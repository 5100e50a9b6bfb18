import numpy as np
import pytest

from nucv.errors import InvalidCameraError, ParseError, StructuralError
from nucv.scene import SceneBundle, read_scene, write_scene
from nucv.synthetic import SyntheticScene, generate_synthetic


@pytest.fixture
def dump(tmp_path):
    b = generate_synthetic(SyntheticScene(kind="sphere"), 5, (16, 24))
    write_scene(b, tmp_path / "s")
    return b, tmp_path / "s"


def test_roundtrip(dump):
    b, path = dump
    r = read_scene(path)
    assert len(r.views) == 5 and r.pairs == b.pairs
    for v, w in zip(b.views, r.views):
        assert np.array_equal(v.intrinsics, w.intrinsics)
        assert np.allclose(v.extrinsics, w.extrinsics, atol=1e-12)
        assert v.depth_range == w.depth_range
        assert np.abs(v.image - w.image).max() <= 0.5 / 65535 + 1e-12
    for g, h in zip(b.ground_truth, r.ground_truth):
        assert np.array_equal(g.astype(np.float32), h.astype(np.float32))


def test_missing_intrinsic_block(dump):
    _, path = dump
    cam = path / "cams" / "00000002_cam.txt"
    cam.write_text(cam.read_text().replace("intrinsic", "intrinsics"))
    with pytest.raises(ParseError, match="intrinsic"):
        read_scene(path)


def test_count_mismatch(dump):
    _, path = dump
    (path / "cams" / "00000004_cam.txt").unlink()
    with pytest.raises(StructuralError):
        read_scene(path)


def test_pair_out_of_range(dump):
    _, path = dump
    text = (path / "pair.txt").read_text().splitlines()
    text[2] = "1 99 1.0"
    (path / "pair.txt").write_text("\n".join(text) + "\n")
    with pytest.raises(StructuralError):
        read_scene(path)


def test_missing_directory(tmp_path):
    with pytest.raises(StructuralError):
        read_scene(tmp_path / "nope")


def test_rotation_snapping(dump):
    _, path = dump
    cam = path / "cams" / "00000001_cam.txt"
    lines = cam.read_text().splitlines()
    # print the rotation with six decimals, as many exporters do
    for i in range(1, 4):
        vals = [float(x) for x in lines[i].split()]
        lines[i] = " ".join(f"{x:.6f}" for x in vals[:3]) + " " + repr(vals[3])
    cam.write_text("\n".join(lines) + "\n")
    R = read_scene(path).views[1].rotation
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-12
    # gross errors are still rejected
    lines[1] = "2 0 0 0"
    cam.write_text("\n".join(lines) + "\n")
    with pytest.raises(InvalidCameraError):
        read_scene(path)


def test_bundle_invariants():
    b = generate_synthetic(SyntheticScene(), 3, (8, 8))
    small = generate_synthetic(SyntheticScene(), 1, (16, 8))
    with pytest.raises(StructuralError):
        SceneBundle(b.views + small.views)
    with pytest.raises(StructuralError):
        SceneBundle(b.views, {0: [(5, 1.0)]})
    with pytest.raises(StructuralError):
        SceneBundle([])
    assert [v.name for v in b.sources(0, 1)] == [b.views[b.pairs[0][0][0]].name]
