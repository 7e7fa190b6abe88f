"""Double quantum dot: population witness, scaled propagator witness, and the
no-tunnelling control in which both must vanish."""

from _shared import run_scenario


def main():
    run_scenario("dqd-wq")
    run_scenario("dqd-womega")
    run_scenario("dqd-wq", output={"stem": "dqd-wq-no-tunnelling"}, parameters={"tunnelling": 0.0})
    # with no tunnelling the stationary state has empty dots, so fixed offsets replace the settling rule
    run_scenario("dqd-womega", output={"stem": "dqd-womega-no-tunnelling"}, parameters={"tunnelling": 0.0},
                 time_sets={"offsets": [0, 40]})


if __name__ == "__main__":
    main()
