"""High-precision laboratory for the principal nest of real quadratic maps."""
from .capacity import (CapacityEstimate, FamilyViolatesK, MonotonePairs, PowerFamily,
                       capacity_lower_bound, qs_constant, tree_subadditivity_check)
from .estimators import CriticalOrbitFeatures
from .labcli import ExclusionModel, ScanRecord, exclusion_simulation, render, scan
from .maps import DomainError, ParameterError, QuadraticMap, conjugate_parameter
from .nest import (Branch, CriticalEscape, NestError, NestLevel, NestPrecisionExhausted,
                   SinkDetected, branch_hyperbolicity, build_nest, expansion_outside,
                   gape_interval, landing_components, nest_report, nest_statistics_check)
from .numerics import (PrecisionContext, PrecisionExhausted, RealInterval, bisect_root,
                       monotone_preimage)
from .orbitstats import (acim_histogram, autocorrelation, birkhoff_average, ce_exponent,
                         recurrence_exponent)
from .parameter import (CombinatoricsMismatch, CombinatoricsUnstable, KneadingWord,
                        NotMonotoneObserved, find_parameter_by_combinatorics,
                        holonomy_sample, itinerary, kneading, mt_compare, window, xi_sample)
from .renorm import (NotInDelta, classify, detect_renormalizations,
                     orientation_reversing_fixed_point, periodic_points)

__version__ = "0.1.0"
