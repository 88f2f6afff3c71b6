"""Edge-preserving smoothing of a noisy 1D step, bilateral grid vs box filter.

    python3 scripts/bilateral_1d.py
"""

import numpy as np

from incam.bssa import bilateral_filter_1d, moving_average


def main():
    rng = np.random.default_rng(0)
    step = np.r_[np.zeros(32), np.full(32, 10.0)]
    noisy = step + rng.uniform(-1, 1, step.size)
    grid = bilateral_filter_1d(noisy, 4, 2)
    box = moving_average(noisy, 9)
    print(f"{'i':>3} {'noisy':>7} {'grid':>7} {'box':>7}")
    for i in range(24, 40):
        print(f"{i:>3} {noisy[i]:7.2f} {grid[i]:7.2f} {box[i]:7.2f}")
    for name, y in (("grid", grid), ("box", box)):
        rmse = np.sqrt(np.mean((y - step) ** 2))
        print(f"{name}: rmse vs clean step {rmse:.3f}, edge jump {y[32] - y[31]:.2f}")


if __name__ == "__main__":
    main()
