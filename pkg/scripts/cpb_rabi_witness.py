"""Population witness and propagator comparison for the Cooper-pair box.

Prints the Rabi period and the largest witness values over two Rabi periods.
"""

from _shared import run_scenario

from qwitness.models import cooper_pair_box, rabi_period


def main():
    print(f"Rabi period: {rabi_period(cooper_pair_box()):.2f} ps")
    run_scenario("cpb")
    run_scenario("cpb-womega")


if __name__ == "__main__":
    main()
