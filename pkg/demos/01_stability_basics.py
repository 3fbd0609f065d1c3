"""Quasi-static stability of block towers, step by step.

Builds a few towers by hand and inspects the per-interface checks: where
the combined center of mass above each interface sits, the contact
rectangle it must stay inside, and the signed clearance.
"""

from causalblocks import NullAction, PlaceAction, is_stable, transition
from causalblocks.scenarios import cube, column


def show(name, tower):
    result = is_stable(tower)
    verdict = "stable" if result.stable else "UNSTABLE"
    print(f"{name}: {verdict}")
    for check in result.checks:
        com = check.com_above
        print(f"  interface {check.interface_index}: com=({com[0]:+.3f}, {com[1]:+.3f})"
              f"  margin={check.margin:+.4f} m")
    print()


def main():
    # A centered pair of 0.1 m cubes: comfortable margins everywhere.
    show("centered pair", column([cube("a"), cube("b")], [(0, 0), (0, 0)]))

    # Push the top cube sideways. At 3 cm it still stands with 2 cm to
    # spare at the block interface; at 6 cm the COM leaves the contact
    # patch and the tower falls.
    show("top at +3 cm", column([cube("a"), cube("b")], [(0, 0), (0.03, 0)]))
    show("top at +6 cm", column([cube("a"), cube("b")], [(0, 0), (0.06, 0)]))

    # A staircase of three cubes. Each neighboring pair overlaps nicely,
    # but the combined mass of the upper two hangs too far out over the
    # base block: the failure is a group effect, not a local one.
    show("staircase", column([cube("a"), cube("b"), cube("c")],
                             [(0, 0), (0.04, 0), (0.08, 0)]))

    # The same machinery drives state transitions. A Null action just
    # re-checks the current tower; a Place appends a block at the intended
    # spot plus actuation error.
    tower = column([cube("base")], [(0, 0)])
    result = transition(tower, PlaceAction(cube("new"), 0.04, 0.0), wa=(0.02, 0.0))
    print(f"place at +4 cm with +2 cm actuation error -> "
          f"{'stable' if result.outcome else 'collapsed'} "
          f"(failed interface: {result.failed_interface})")
    result = transition(tower, NullAction(), wa=(0.0, 0.0))
    print(f"null action on the bare base -> {'stable' if result.outcome else 'collapsed'}")


if __name__ == "__main__":
    main()
