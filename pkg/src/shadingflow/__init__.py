"""Light-source-invariant shading analysis on local surface patches.

Renders Lambertian Monge patches, extracts isophote flow frames, verifies
the second-order shading relations that hold regardless of the light
sources, and inverts them: the full 0/2/4-fold family of quadratic patches
(with emergent lights) behind a shading flow, plus 1D boundary-value
reconstruction and the critical-point reduction.
"""

from .exceptions import (BadInputError, BorderPixel, BoxBoundaryRootWarning,
                         DegenerateGradient, Inconsistent, NoBracket,
                         NonCriticalPoint, RankDeficient, ShadingFlowError,
                         ShadowedPoint, SingularFxx, SingularHessian,
                         SingularityEncountered)
from .geometry import (LightSource, MongePatch2, MongePatch3, SurfaceFrame,
                       brightness_gradient_from_surface, christoffel,
                       project_light, surface_frame, tangent_ambient,
                       verify_light_transport)
from .imaging import (ImageJet2, RasterImage, analytic_jet, fd_jet, read_pgm,
                      render_intensity, render_raster, write_pgm)
from .flow import (FlowField, FlowFrame, find_critical_points,
                   flow_field_from_raster, frame_from_jet, write_flow_csv,
                   write_flow_svg)
from .shading_eqs import (Jet1D, ShadingResiduals, critical_frame_from_jet,
                          render_curve_1d, residual_1d,
                          residuals_critical_point, residuals_geometric,
                          residuals_pde, residuals_second_order)
from .solvers import (Curve1DSolution, IntensityCurve, PatchSolution,
                      PatchSolutionSet, QuadricTriple, Solve1DOptions,
                      SolveOptions, classify_patch, emergent_light_from_frame,
                      frontal_solutions_to_image, recover_light,
                      solve_1d, solve_critical_point, solve_frontal_parallel,
                      solve_second_order, sweep_tangent_planes)

__version__ = "0.1.0"
