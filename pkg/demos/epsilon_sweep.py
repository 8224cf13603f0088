"""Train the 10 x 10 flip-noise denoiser for several epsilons on shared data
and print test error, relative duality gap and wall time for each.

Run with ``python demos/epsilon_sweep.py``.
"""

from approxsp.experiment import build_config, run_experiment

common = dict(base="checker-blocks", height=10, width=10, n_train=10, n_test=10,
              flip_prob=0.2, C=1.0, seed=0, max_iter=300)
first = build_config(common)
train_data, test_data = first.train_set(), first.test_set()

print(f"{'eps':>6} {'test err %':>10} {'wrong':>6} {'rel gap':>10} {'iters':>6} {'secs':>6}")
for eps in (1.0, 0.5, 0.01, 0.0):
    r = run_experiment(build_config(dict(common, epsilon=eps)), train_data, test_data).report
    print(f"{eps:>6} {r.test_error:>10.3f} {r.test_wrong:>6} {r.relative_gap:>10.2e} "
          f"{r.iterations:>6} {r.seconds:>6.2f}")

# The same grid with the 4 shared parameters is a much harder fit.
shared = run_experiment(build_config(dict(common, mode="shared")), train_data, test_data).report
print(f"\nshared parameters, eps=1: test error {shared.test_error:.3f} %")
