"""
Scoring a session with interestingness measures
===============================================

Five per-step scores describe what each operation contributed: an
operation-conditioned interest score, diversity against everything seen,
rule-based coherence, compactness gain, and peculiarity against the first
display. Raw values are min-max normalized within the session; the dominant
measure at a chosen quantile labels the whole session.
"""

from autoeda import synth
from autoeda.measures import (MEASURE_NAMES, classify_session,
                              normalize_session, score_session)
from autoeda.train import derive_rng

rng = derive_rng(3, 4, 1)
patterns = synth.generate_patterns(synth.DEFAULT_SCHEMA, 2, rng)
dag = synth.generate_correlations(synth.DEFAULT_SCHEMA, patterns, rng,
                                  cap=2, n_edges=3)
dataset = synth.populate_rows(synth.DEFAULT_SCHEMA, patterns, dag, 1000, 5.0, rng)
session = synth.generate_expert_trajectories(dataset, patterns, dag,
                                             derive_rng(3, 5, 1),
                                             n_trajectories=1,
                                             group_prob=0.6)[0]

raw = score_session(dataset, session.actions)
normalized = normalize_session(raw)

labels = {"a_int": "A-INT", "diversity": "Diversity", "coherence": "Coherence",
          "readability": "Readability", "peculiarity": "Peculiarity"}
header = f"{'#':>2}  {'action':44}" + "".join(f"{labels[m]:>13}" for m in MEASURE_NAMES)
print(header)
print("-" * len(header))
for t, (action, scores) in enumerate(zip(session.actions, normalized), start=1):
    cells = "".join(
        f"{scores.get(m):>12.2f}" + ("*" if scores.get(m) > 0.7 else " ")
        for m in MEASURE_NAMES)
    print(f"{t:>2}  {str(action):44}{cells}")
print("(* marks normalized scores above 0.7)")

label = classify_session(normalized, quantile=0.75)
print(f"\nthis session leans on: {labels[label]} "
      f"(75th percentile comparison over A-INT/Diversity/Readability)")
