"""Finite universal coalgebras over the stochastic functor grammar."""

from .functor import (DEFAULT_CAP, Carrier, EnumerationCapExceeded, FiniteDist,
                      NotTotalError, apply_functor_map, apply_functor_set, contains)
from .signature import (ONE, Compose, Const, Coproduct, Dist, Exp, FunctorSignature,
                        Identity, Power, Product, SignatureError, depth, equivalent,
                        normalize, parse_functor_signature, pretty)
from .systems import (Coalgebra, CoalgebraError, HomomorphismResult, Lts,
                      bisimilarity_partition, check_homomorphism, is_bisimulation, quotient)
