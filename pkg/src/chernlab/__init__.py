"""Numerical engine for Chern and Chern-Simons forms of stabilized operator
fields on grid-sampled tori, with the Bott map, holonomy, and the eta
correction form."""

from ._backend import backend_name
from .grid_forms import (Axis, Grid, MatrixForm, exterior_d, fiber_integrate,
                         integrate, is_exact_on_torus, periods, torus, trace,
                         wedge)
from .fields import (ConnectionField, PathChain, PathField, ProjectionField,
                     UnitaryField, Window, bloch_projection, grassmann_connection,
                     paper_example_connection, paper_example_grid,
                     random_smooth_field, rank, seeded_phase_unitary,
                     su2_bump_unitary, validate, winding_unitary)
from .chern import (connection_chern, even_chern, even_cs, maurer_cartan,
                    odd_chern, odd_cs, stokes_residual)
from .stable_ops import (annihilate_homotopy, based_loop, boxplus,
                         boxplus_to_oplus_permutation, commute_homotopy,
                         conjugate_by_permutation, equalize_windows,
                         extend_window, gamma_g, oplus, orthocomplement,
                         shift, transposition_homotopy)
from .bott_holonomy import (TransportResult, bott_map, deta_residual, eta_form,
                            holonomy_map, mapping_torus_connection,
                            parallel_transport, reversal_check, reverse_loop)

__version__ = "0.1.0"
