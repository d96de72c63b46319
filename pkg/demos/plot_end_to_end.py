"""
Unsupervised pipeline on a synthetic pair of spaces
===================================================

Generate a rotated, shuffled copy of a point cloud, write it in word2vec
text format, and let the pipeline recover the correspondence without gold
data. The gold dictionary is used only for the final score.
"""

import json
import os
import tempfile

from wordmap import ImConfig, PipelineConfig, generate, gold_dictionary, run_pipeline, save_instance

workdir = tempfile.mkdtemp(prefix="wordmap-demo-")
inst = generate(400, 30, "orthogonal", noise_level=0.01, seed=0)
paths = save_instance(inst, workdir)
gold_path = os.path.join(workdir, "gold.tsv")
gold_dictionary(inst).save_tsv(gold_path)

config = PipelineConfig(
    source_path=paths["source"],
    target_path=paths["target"],
    gold_path=gold_path,
    output_dir=os.path.join(workdir, "run"),
    working_set_size=400,
    knn_grid=[10, 20],
    im=ImConfig(restarts=3),
    k_values=[1, 5, 10],
)
result = run_pipeline(config)

sel = result.alignment.selected
print(f"selected k={sel.k}, restart {sel.restart}, loss {sel.final_loss:.3f}")
for k, p in result.report.precision.items():
    print(f"P@{k} = {p:.3f}")

# Every artifact is listed in the run manifest
with open(result.files["manifest"]) as fh:
    print(sorted(json.load(fh)["files"]))
