"""
Supervised fit under dictionary size and corruption
====================================================

A linear map fitted by least squares on gold pairs tolerates a surprising
share of wrong pairs, since random wrong targets mostly average out.
"""

from wordmap import dictionary_sensitivity, generate, gold_dictionary

inst = generate(1500, 50, "general-linear", noise_level=0.1, seed=0)
gold = gold_dictionary(inst)

grid = dictionary_sensitivity(
    inst.X, inst.Y, gold,
    sizes=[100, 500, 1000],
    noise_levels=[0.0, 0.25, 0.5, 0.75],
    seed=0, test_size=300, k_values=[1, 10],
)

print("size  noise  P@1    P@10")
for cell in grid.cells:
    p = cell.report.precision
    print(f"{cell.size:4d}  {cell.noise:5.2f}  {p[1]:.3f}  {p[10]:.3f}")
