"""HEOM population witness and its single-term partial sum for FMO.

Each temperature takes a few minutes on one core; pass ``77`` or ``300`` to
run only one of them.
"""

import sys

from _shared import run_scenario


def main(argv):
    temperatures = argv or ["77", "300"]
    for temp in temperatures:
        for witness in ("wq", "wq-partial"):
            run_scenario(f"fmo{temp}-{witness}")


if __name__ == "__main__":
    main(sys.argv[1:])
