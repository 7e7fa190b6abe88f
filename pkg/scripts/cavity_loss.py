"""Largest propagator-comparison witness for a cavity-damped atom versus quality factor."""

import numpy as np
from _shared import line_plot, run_scenario, write_csv

from qwitness.models import jc_cavity


def main():
    qualities = [7e4, 2e5, 4e5, 7e5, 2e6, 7e6, 7e7]
    peaks, ratios = [], []
    for q in qualities:
        table = run_scenario("jc-hiq", output={"stem": f"jc-quality-{q:.0e}"}, parameters={"quality": q})
        meta = jc_cavity(quality=q).meta
        peaks.append(table.column("value").max())
        ratios.append(meta["kappa"] / (2 * meta["omega_R"]))
    path = write_csv("cavity-quality", ["quality", "kappa_over_2omegaR", "max_womega"],
                     zip(qualities, ratios, peaks))
    line_plot("cavity-quality", np.log10(qualities), {"max W_Omega": peaks},
              "log10 quality factor", "max W_Omega", logy=True)
    print(f"summary -> {path}")


if __name__ == "__main__":
    main()
