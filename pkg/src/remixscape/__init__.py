"""Shape-descriptor analysis of remix corpora of 3D-printable designs."""
from .corpus import Corpus, DesignRecord, compute_descriptors, fetch_meshes, load_config, load_manifest
from .descriptor import DescriptorConfig, DesignDescriptor, ShapeDescriptor, describe, voxelize
from .graph import build_graph, descendant_count, graph_summary, remix_depth, remix_interest_stat
from .landscape import Embedding2D, classical_mds, emit_landscape, smacof_refine
from .mesh_io import TriangleMesh, connected_components, parse_stl, read_stl, write_stl
from .similarity import NO_PREDECESSOR, distance, distance_matrix, k_nearest, novelty

__all__ = [
    "Corpus", "DesignRecord", "compute_descriptors", "fetch_meshes", "load_config", "load_manifest",
    "DescriptorConfig", "DesignDescriptor", "ShapeDescriptor", "describe", "voxelize",
    "build_graph", "descendant_count", "graph_summary", "remix_depth", "remix_interest_stat",
    "Embedding2D", "classical_mds", "emit_landscape", "smacof_refine",
    "TriangleMesh", "connected_components", "parse_stl", "read_stl", "write_stl",
    "NO_PREDECESSOR", "distance", "distance_matrix", "k_nearest", "novelty",
]
__version__ = "0.1.0"
