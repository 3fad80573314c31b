from .cubemap import build_cubemap
from .grid import build_grid, build_masked_graph, build_panorama
from .superpixel import SuperpixelSet, build_superpixel_graph, slic
from .texture import build_texture_graph, parse_obj, read_obj

__all__ = [
    "SuperpixelSet",
    "build_cubemap",
    "build_grid",
    "build_masked_graph",
    "build_panorama",
    "build_superpixel_graph",
    "build_texture_graph",
    "parse_obj",
    "read_obj",
    "slic",
]
