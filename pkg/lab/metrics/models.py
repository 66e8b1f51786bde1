import attrs

from .services import harmonic

REPORT_FIELDS = ("mca_s", "mca_u", "h", "r_s", "r_u", "h_r")


@attrs.frozen
class MetricsReport:
    """GZSL scores in percent."""
    mca_s: float
    mca_u: float
    h: float
    r_s: float
    r_u: float
    h_r: float

    @classmethod
    def build(cls, mca_s: float, mca_u: float, r_s: float, r_u: float) -> "MetricsReport":
        return cls(
            mca_s=float(mca_s),
            mca_u=float(mca_u),
            h=harmonic(mca_s, mca_u),
            r_s=float(r_s),
            r_u=float(r_u),
            h_r=harmonic(r_s, r_u),
        )

    def as_dict(self) -> dict:
        return attrs.asdict(self)

    def describe(self) -> str:
        return " ".join(f"{name}={getattr(self, name):.2f}" for name in REPORT_FIELDS)
