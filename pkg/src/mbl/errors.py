"""Exception hierarchy.

Every error carries a stable ``kind`` string so that the command line layer can
emit machine-readable error records without inspecting class names.
"""


class MBLError(Exception):
    kind = "MBLError"


class DegenerateLattice(MBLError):
    kind = "DegenerateLattice"


class CutoffTooSmall(MBLError):
    kind = "CutoffTooSmall"


class MinimumOnGridBoundaryUnresolved(MBLError):
    kind = "MinimumOnGridBoundaryUnresolved"


class NonPositiveHessian(MBLError):
    kind = "NonPositiveHessian"


class SignChangeInGroundState(MBLError):
    kind = "SignChangeInGroundState"


class GaugeReferenceDegenerate(MBLError):
    kind = "GaugeReferenceDegenerate"


class NormLoss(MBLError):
    kind = "NormLoss"


class QuadratureOverlapTruncated(MBLError):
    kind = "QuadratureOverlapTruncated"


class NearSingularGramian(MBLError):
    kind = "NearSingularGramian"


class GridTooCoarse(MBLError):
    kind = "GridTooCoarse"


class IrrationalFluxOnTorus(MBLError):
    kind = "IrrationalFluxOnTorus"


class KappaOnTorus(MBLError):
    kind = "KappaOnTorus"


class ComplexQuasiBloch(MBLError):
    kind = "ComplexQuasiBloch"


class ConvergenceFailure(MBLError):
    kind = "ConvergenceFailure"


class EmptyWindow(MBLError):
    kind = "EmptyWindow"


class IslandCountMismatch(MBLError):
    kind = "IslandCountMismatch"


class ClustersUnresolvable(MBLError):
    kind = "ClustersUnresolvable"


class CrossingBandRefused(MBLError):
    kind = "CrossingBandRefused"


class ConfigInvalid(MBLError):
    kind = "ConfigInvalid"


class StageFailure(MBLError):
    kind = "StageFailure"
