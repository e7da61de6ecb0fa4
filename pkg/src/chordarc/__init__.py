"""Quantitative geometry of domains: flatness, corkscrews, chains and verdicts."""
__version__ = "0.1.0"

from ._accel import backend  # noqa: E402
from .accessibility import (CorkscrewCert, GoodCurve, HarnackChain, c0_exterior_test,  # noqa: E402
                            chain_to_curve, exterior_corkscrew, good_curve, harnack_chain,
                            interior_corkscrew)
from .cloud import SampledBoundary, load_cloud, sample_boundary, save_cloud  # noqa: E402
from .domains import CorpusSpec, make_domain, parse_spec  # noqa: E402
from .dyadic import build_grid, cube_window, verify_grid  # noqa: E402
from .flatness import bad_set, bbeta, carleson_norm, low_beta_window  # noqa: E402
from .geometry import (Ball, Hyperplane, Polyline, fit_plane, inscribed_halfball,  # noqa: E402
                       plane_offset)
from .theorem import (adr_estimate, exterior_corkscrew_via_flatness, layer_energy,  # noqa: E402
                      packing_ratio, side_classify)

__all__ = [
    "Ball", "CorkscrewCert", "CorpusSpec", "GoodCurve", "HarnackChain", "Hyperplane",
    "Polyline", "SampledBoundary", "adr_estimate", "backend", "bad_set", "bbeta",
    "build_grid", "c0_exterior_test", "carleson_norm", "chain_to_curve", "cube_window",
    "exterior_corkscrew", "exterior_corkscrew_via_flatness", "fit_plane", "good_curve",
    "harnack_chain", "inscribed_halfball", "interior_corkscrew", "layer_energy", "load_cloud",
    "low_beta_window", "make_domain", "packing_ratio", "parse_spec", "plane_offset",
    "sample_boundary", "save_cloud", "side_classify", "verify_grid",
]
