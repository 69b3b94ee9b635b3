"""
A synthetic city and the two evaluation splits
==============================================

Generates a reproducible check-in dataset (users wander a small city
following per-category transition preferences), builds next-location
sequences, then demonstrates the two splitting protocols used in the
experiments: a conventional 6:2:2 time split and an inductive split
that additionally hides 10 percent of locations from training.
Run it with:  python3 demos/04_synthetic_city_splits.py
"""

import collections
import tempfile
from pathlib import Path

from nextloc.mobdata import (
    build_sequences,
    filter_min_counts,
    generate_synthetic_city,
    load_checkins,
    split_conventional,
    split_inductive,
)

out = Path(tempfile.mkdtemp(prefix="city_demo_")) / "city"
city = generate_synthetic_city(
    seed=7, n_users=15, n_locations=24, n_categories=4, days=60, out_dir=out
)
print(f"wrote {city.n_visits} check-ins to {city.checkins_path}")
print(f"categories: {city.categories}")

records, index = load_checkins(city.checkins_path)
print(f"\nloaded {len(records)} visit records across {len(index.ids())} locations")

# Drop rarely seen users and locations, then cut the visit stream into
# (context window, next visit) training examples.
records = filter_min_counts(records, min_loc_visits=10, min_user_records=10)
sequences = build_sequences(records)
lengths = collections.Counter(len(s.visits) for s in sequences)
print(f"sequences: {len(sequences)}, context lengths {dict(sorted(lengths.items())[:5])} ...")

# Conventional split: each user's tracking period is divided 6:2:2 by
# day, so the model trains on the past and is tested on the future.
conv = split_conventional(sequences, (0.6, 0.2, 0.2), records=records)
print(
    f"\nconventional: train {len(conv.train)}, "
    f"validation {len(conv.validation)}, test {len(conv.test)}"
)

# Inductive split: on top of the time split, 10 percent of locations are
# held out. Any train or validation sequence touching them is removed,
# while the test set stays exactly the same, so some test targets are
# locations the model never saw during training.
ind = split_inductive(conv, fraction=0.1, seed=0)
print(f"inductive:    train {len(ind.train)}, validation {len(ind.validation)}, test {len(ind.test)}")
print(f"held-out locations: {sorted(ind.l_new)}")

touched = set()
for s in list(ind.train) + list(ind.validation):
    touched |= s.location_ids()
assert not (touched & ind.l_new), "training data must not touch held-out locations"
assert [s.id for s in ind.test] == [s.id for s in conv.test], "test set must stay fixed"

new_targets = sum(1 for s in ind.test if s.target_location in ind.l_new)
print(f"test sequences whose target is a held-out location: {new_targets}/{len(ind.test)}")

# Different seeds hold out different locations, giving five runs with
# disjoint difficulty profiles rather than one arbitrary choice.
for seed in range(5):
    resampled = split_inductive(conv, fraction=0.1, seed=seed)
    print(f"  seed {seed}: l_new = {sorted(resampled.l_new)}")
