"""End-to-end mini dataset: render, filter, rebalance, undersample, split.

A scaled-down pass over the full data pipeline, printing the record counts
and positivity rates after every stage.
"""

import numpy as np

from vgq.dataset import (
    BalanceConfig,
    RenderConfig,
    balance_positivity,
    filter_psi,
    records_of,
    render_dataset,
    split_objects,
    uniform_bin_undersample,
)
from vgq.meshes import generate_primitive_set
from vgq.quality import QualityConfig
from vgq.seeding import substream

SEED = 7
meshes = generate_primitive_set(6, seed=1)
cfg = RenderConfig(cameras_per_pose=5, grasps_per_object=60, quality=QualityConfig(samples=8))

print("rendering", len(meshes), "objects ...")
shards = render_dataset(meshes, cfg, seed=SEED)
records = records_of(shards)


def describe(stage, recs):
    pos = np.mean([r.positive for r in recs]) if recs else float("nan")
    print(f"{stage:>18}: {len(recs):6d} records, {100 * pos:5.1f}% positive")


describe("rendered", records)
balance = BalanceConfig()
kept = filter_psi(records, balance.psi_max)
describe("psi filter", kept)
balanced = balance_positivity(kept, balance, substream(SEED, "balance"))
describe("rebalanced", balanced)
uniform = uniform_bin_undersample(balanced, balance, substream(SEED, "uniform"))
describe("uniform bins", uniform)

manifest = split_objects(sorted({r.object_id for r in records}), (0.5, 0.25, 0.25), substream(SEED, "split"))
print("\nobject split:")
for name in ("train", "val", "test"):
    ids = getattr(manifest, name)
    n = sum(1 for r in uniform if r.object_id in set(ids))
    print(f"  {name:5}: {ids} ({n} records)")

beta = np.array([r.beta for r in uniform])
pos = np.array([r.positive for r in uniform])
print("\nper-bin positivity after balancing:")
for lo in range(0, 90, 15):
    m = (beta >= lo) & (beta < lo + 15)
    if m.any():
        print(f"  beta {lo:2d}-{lo + 15:2d}: {100 * pos[m].mean():5.1f}% of {m.sum()}")
