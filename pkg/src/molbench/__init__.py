"""Chemically accurate evaluation tooling for 3D molecular generative models."""

__version__ = "0.1.0"

from molbench.model import (  # noqa: E402
    Atom,
    Bond,
    BondOrder,
    Element,
    Molecule,
    connected_components,
    enumerate_angles,
    enumerate_torsions,
)

__all__ = [
    "Atom", "Bond", "BondOrder", "Element", "Molecule",
    "connected_components", "enumerate_angles", "enumerate_torsions",
]
