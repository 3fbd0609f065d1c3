"""Next-best placement: stability heatmap plus threshold-centroid selection.

Sweeps a 9x9 grid of candidate offsets over the top block, estimates the
stability probability per cell, renders the map as ASCII shading, then
picks the placement as the centroid of all cells above the threshold.
Also writes the CSV and PGM forms next to this script.
"""

from pathlib import Path

from causalblocks import (
    candidate_grid,
    select_action,
    stability_heatmap,
    write_heatmap_csv,
    write_heatmap_pgm,
)
from causalblocks.scenarios import two_cube_scenario

SHADES = " .:-=+*#%@"


def ascii_map(heatmap):
    nx, ny = heatmap.dims
    rows = []
    for iy in reversed(range(ny)):  # print +y upward
        row = ""
        for ix in range(nx):
            p = heatmap.probabilities[ix * ny + iy]
            row += SHADES[min(int(p * (len(SHADES) - 1) + 0.5), len(SHADES) - 1)] * 2
        rows.append(row)
    return "\n".join(rows)


def main():
    scenario = two_cube_scenario(sigma_s=0.015, sigma_a=0.02)
    block = scenario.pending_blocks[0]
    grid = candidate_grid(scenario.tower, block, 9, 9)

    heatmap = stability_heatmap(scenario.tower, block, grid, scenario.noise,
                                n_per_cell=2000, seed=42, dims=(9, 9))
    print("stability probability over candidate offsets (darker = safer):\n")
    print(ascii_map(heatmap))
    print()

    result = select_action(heatmap, scenario.tower, block, scenario.noise,
                           threshold=0.8, n_samples=4000, seed=43)
    ox, oy = result.action.offset
    print(f"admissible cells (p >= 0.8): {result.admissible_count} of {len(grid)}")
    print(f"chosen offset: ({ox:+.4f}, {oy:+.4f}) m")
    print(f"re-estimated stability there: {result.expected_p:.4f}")

    out_dir = Path(__file__).parent
    write_heatmap_csv(heatmap, out_dir / "heatmap.csv")
    write_heatmap_pgm(heatmap, out_dir / "heatmap.pgm")
    print(f"\nwrote {out_dir / 'heatmap.csv'} and {out_dir / 'heatmap.pgm'}")


if __name__ == "__main__":
    main()
