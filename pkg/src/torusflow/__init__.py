"""Spinor (Weierstrass) representation of tori in R^4, DSII flows and spectral curves."""
from .torus_field import (PeriodicField, QuasiPeriodicField, TorusGrid, derivative,
                          make_lattice, moments, product)
from .dirac import (GaussMapComponent, SpinorPair, WeierstrassData, apply_dirac,
                    apply_dirac_vee, decompose_gauss_map, gauge_transform, lift_to_dirac)
from .weierstrass import (closure_report, forms_from_spinors, integrate_surface,
                          metric_and_curvature, willmore)

__version__ = "0.1.0"
