"""Mixed/discontinuous finite-volume-element solver for optimal control of
two-phase immiscible flow in porous media.

The package couples a mixed FVE discretization of the Darcy velocity/pressure
pair (lowest-order Raviart-Thomas trial functions tested on a diamond dual
grid) with a discontinuous FVE scheme for the saturation (discontinuous P1
trial functions tested on barycentric dual cells), advances both in time by
backward Euler on a coarse pressure grid and a fine saturation grid, solves
the adjoint system backward in time, and optimizes the injection rate with an
active-set iteration on the box-constrained control.
"""

__version__ = "0.1.0"
