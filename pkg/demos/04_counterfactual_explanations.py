"""Twin-world counterfactual explanations of a failed stacking attempt.

Simulates episodes until one collapses, then asks: which single variable,
had it been different, would have saved the tower? Abduction keeps only
the noise draws consistent with the observed collapse; each candidate
setting is replayed in those worlds and scored by how often the outcome
flips.
"""

from causalblocks import PlaceAction, explain_with_abduction, sample_episode
from causalblocks.scenarios import two_cube_scenario


def first_failure(scenario, action, max_seeds=2000):
    for seed in range(max_seeds):
        trace = sample_episode(scenario.tower, action, scenario.noise, seed,
                               scenario_id=scenario.scenario_id)
        if not trace.outcome:
            return trace, seed
    raise RuntimeError("no failure found; raise the noise")


def report(title, trace, noise):
    explanations, abduction = explain_with_abduction(trace, noise,
                                                     n_samples=3000, seed=99)
    print(title)
    wa = trace.ground_truth.exo.wa
    print(f"  factual actuation error: ({wa[0] * 100:+.2f} cm, {wa[1] * 100:+.2f} cm)")
    print(f"  abduction kept {abduction.accepted} of {abduction.attempts} draws "
          f"(rate {abduction.acceptance_rate:.3f})")
    for rank, e in enumerate(explanations, start=1):
        print(f"  {rank}. [PNS={e.pns:.2f}] {e.text}")
    print()


def main():
    # Case 1: clean sensing, sloppy actuation. The only thing that can go
    # wrong is the placement error, and the ranking says exactly that.
    scenario = two_cube_scenario(sigma_s=0.0, sigma_a=0.03)
    action = PlaceAction(scenario.pending_blocks[0], 0.0, 0.0)
    trace, seed = first_failure(scenario, action)
    report(f"collapse under pure actuation noise (episode seed {seed}):",
           trace, scenario.noise)

    # Case 2: both noise sources active and a deliberately off-center
    # placement. Several candidate causes now compete; the scores separate
    # how much each one alone would have helped.
    scenario = two_cube_scenario(sigma_s=0.015, sigma_a=0.015)
    action = PlaceAction(scenario.pending_blocks[0], 0.035, 0.0)
    trace, seed = first_failure(scenario, action)
    report(f"collapse with an off-center aim point (episode seed {seed}):",
           trace, scenario.noise)


if __name__ == "__main__":
    main()
