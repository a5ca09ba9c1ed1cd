"""dissiplab: numerical laboratory for strongly dissipative planar
diffeomorphisms (Henon maps and 2D extensions of interval/circle maps):
hyperbolicity certificates, certified local stable curves, strong
dissipation verification, periodic-point closing, and the quotient tree.
"""

__version__ = "0.1.0"

from .maps import (ArnoldMap, Extension2D, HenonMap, LinearMap, QuadraticMap,
                   TrappingRegion, conjugacy_check, jacobian, trapping_check)
from .orbits import (EmpiricalMeasure, LyapunovEstimate, OrbitSegment,
                     birkhoff_measure, classify_orbit, find_recurrent_return,
                     iterate, lyapunov)
from .pliss import (HyperbolicityCertificate, P1Constants, PlissParams,
                    RateConstants, block_fraction, certify,
                    constants_from_exponents, critical_fraction, estimate_E,
                    min_slope, p1_constants, pliss_times)
from .charts import ChartSequence, chart_sequence, choose_lambdas
from .manifold import (StableBranchPair, StableCurve, f_of_S_membership,
                       grow_branches, local_stable_curve)
from .dissipation import (DissipationReport, SDVerdict, check_dissipation2,
                          estimate_Xg, verify_strong_dissipation)
from .closing import (ClosingRegion, PeriodicOrbit, PeriodicOrbitRegistry,
                      build_region, close_orbit_near, first_exit_k,
                      interval_periodic_near, newton_multiple_shooting,
                      periodic_density_report, retract_fixed_point)
from .tree import (ArcFamily, RealTree, TreeMap, build_tree, collect_arcs,
                   induced_map, tree_entropy, tree_periodic_points)
