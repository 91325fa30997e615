import numpy as np

from floorgraph.graph import RoomType
from floorgraph.layout import Rect, extract_bubble_diagram, rasterize, save_raster


def test_adjacency_rules():
    a = Rect(0, 0, 10, 10)
    shared = Rect(10, 0, 20, 10)
    wall = Rect(11, 2, 20, 8)
    far = Rect(13, 0, 20, 10)
    corner = Rect(10, 10, 20, 20)
    corner_gap = Rect(11, 11, 20, 20)
    t = [0, 1]
    assert extract_bubble_diagram([a, shared], t).edges == ((0, 1),)
    assert extract_bubble_diagram([a, wall], t).edges == ((0, 1),)
    assert extract_bubble_diagram([a, far], t).edges == ()
    assert extract_bubble_diagram([a, corner], t).edges == ()
    assert extract_bubble_diagram([a, corner_gap], t).edges == ()
    assert extract_bubble_diagram([a, Rect(5, 5, 15, 15)], t).edges == ((0, 1),)
    assert extract_bubble_diagram([a, None], t).edges == ()


def test_rasterize_single_room():
    img = rasterize([Rect(0, 0, 32, 32)], [RoomType.KITCHEN])
    assert (img == int(RoomType.KITCHEN) + 1).all()


def test_smaller_room_painted_on_top():
    big, small = Rect(0, 0, 3, 3), Rect(1, 1, 3, 3)
    for rects, types in (([big, small], [1, 2]), ([small, big], [2, 1])):
        img = rasterize(rects, types)
        assert img[2, 2] == 3
        assert img[0, 0] == 2
        assert img[31, 31] == 0


def test_equal_area_tie_keeps_index_order():
    a, b = Rect(0, 0, 4, 4), Rect(2, 2, 6, 6)
    img = rasterize([a, b], [1, 2])
    assert img[3, 3] == 3  # room 1 (type 2) painted last
    img = rasterize([b, a], [2, 1])
    assert img[3, 3] == 2


def test_rasterize_is_deterministic_and_scalable(tmp_path):
    rects, types = [Rect(0, 0, 16, 32), Rect(17, 0, 32, 32)], [0, 3]
    a, b = rasterize(rects, types), rasterize(rects, types)
    np.testing.assert_array_equal(a, b)
    big = rasterize(rects, types, scale=4)
    assert big.shape == (128, 128)
    np.testing.assert_array_equal(big[::4, ::4], a)
    save_raster(big, tmp_path / "x.png")
    from PIL import Image

    loaded = np.asarray(Image.open(tmp_path / "x.png"))
    np.testing.assert_array_equal(loaded, big)
