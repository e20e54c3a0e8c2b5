from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field


@dataclass
class Trajectory:
    """Per-generation record of one run.

    ``Z`` is the untreated population and is ``None`` when the engine does
    not track it.  ``weight`` exceeds 1 once the cluster engine has started
    subsampling, in which case ``ZCT`` and ``R0`` are unbiased estimates.
    """

    ZCT: list = field(default_factory=list)
    R0: list = field(default_factory=list)
    Z: list | None = None
    weight: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.ZCT) - 1

    @property
    def extinction_time(self) -> int | None:
        for n, z in enumerate(self.ZCT):
            if z == 0:
                return n
        return None

    @property
    def extinct(self) -> bool:
        return self.extinction_time is not None

    def rows(self):
        for n in range(len(self.ZCT)):
            z = "" if self.Z is None else self.Z[n]
            yield n, z, self.ZCT[n], self.R0[n]

    def to_csv(self, fh=None) -> str:
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "Z", "ZCT", "R0"])
        for n, z, zct, r0 in self.rows():
            w.writerow([n, _fmt(z), _fmt(zct), _fmt(r0)])
        return buf.getvalue() if fh is None else ""


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)
