"""Exception hierarchy.

Every error class carries a fixed process exit code used by the CLI.
"""


class SadfError(Exception):
    exit_code = 1


class DegeneratePoint(SadfError, ValueError):
    exit_code = 10


class ParseError(SadfError, ValueError):
    exit_code = 20


class NotWatertight(SadfError, ValueError):
    exit_code = 21


class InvertedOrientation(SadfError, ValueError):
    exit_code = 22


class DegenerateTriangle(SadfError, ValueError):
    exit_code = 23


class OriginOutsideObject(SadfError, ValueError):
    exit_code = 24


class BoundaryMismatch(SadfError, ValueError):
    exit_code = 30


class NegativeVolumeTet(SadfError, ValueError):
    exit_code = 31


class MissingOriginVertex(SadfError, ValueError):
    exit_code = 32


class NotStarShaped(SadfError, ValueError):
    exit_code = 33


class SizingTooCoarse(SadfError, ValueError):
    exit_code = 34


class DegenerateTet(SadfError, ValueError):
    exit_code = 40


class SingularSystem(SadfError, RuntimeError):
    exit_code = 50


class NonPositiveBoundary(SadfError, ValueError):
    exit_code = 51


class ResidualTooLarge(SadfError, RuntimeError):
    exit_code = 52


class DegenerateBoundaryVertex(SadfError, ValueError):
    exit_code = 53


class InvalidSemantics(SadfError, ValueError):
    exit_code = 54


class OutsideDomain(SadfError, LookupError):
    exit_code = 60


class OutsideMeshCoverage(SadfError, LookupError):
    exit_code = 61


class QueryAtOrigin(SadfError, ValueError):
    exit_code = 62


class InsideObject(SadfError, LookupError):
    exit_code = 63


class BundleError(SadfError, IOError):
    exit_code = 70


class BadMagic(BundleError):
    exit_code = 71


class VersionMismatch(BundleError):
    exit_code = 72


class TruncatedBundle(BundleError):
    exit_code = 73


class CountMismatch(BundleError):
    exit_code = 74


class NotFactorized(SadfError, RuntimeError):
    exit_code = 80


EXIT_CODES = {
    cls.__name__: cls.exit_code
    for cls in [
        SadfError, DegeneratePoint, ParseError, NotWatertight, InvertedOrientation,
        DegenerateTriangle, OriginOutsideObject, BoundaryMismatch, NegativeVolumeTet,
        MissingOriginVertex, NotStarShaped, SizingTooCoarse, DegenerateTet,
        SingularSystem, NonPositiveBoundary, ResidualTooLarge, DegenerateBoundaryVertex,
        InvalidSemantics, OutsideDomain, OutsideMeshCoverage, QueryAtOrigin, InsideObject,
        BundleError, BadMagic, VersionMismatch, TruncatedBundle, CountMismatch,
        NotFactorized,
    ]
}
