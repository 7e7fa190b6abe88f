"""Witness value of a noisy Hadamard gate as a function of its process fidelity.

The noise model is depolarizing; for it the witness has the closed form
(1 - q)^2 / 2 with depolarizing weight q = 4 (1 - F) / 3.
"""

import numpy as np
from _shared import line_plot, write_csv

from qwitness.models import hadamard_process, transmon_hadamard_witness


def main():
    fidelities = np.linspace(0.5, 1.0, 51)
    measured = [transmon_hadamard_witness(hadamard_process(f)).value for f in fidelities]
    closed = [0.5 * (1 - 4 * (1 - f) / 3) ** 2 for f in fidelities]
    path = write_csv("transmon-fidelity", ["fidelity", "wq", "closed_form"], zip(fidelities, measured, closed))
    line_plot("transmon-fidelity", fidelities, {"numerical": measured, "closed form": closed},
              "process fidelity", "W_Q")
    at94 = transmon_hadamard_witness(hadamard_process(0.94)).value
    print(f"W_Q at fidelity 0.94: {at94:.4f} -> {path}")


if __name__ == "__main__":
    main()
