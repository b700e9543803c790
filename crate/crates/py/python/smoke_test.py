"""Builds a toy audit through the Python bindings and checks a few numbers."""

import json
import os
import sys
import tempfile

import schema_audit as sa

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "..", ".."))
PVE = os.path.join(ROOT, "data", "pve_schema.json")

schema = sa.Schema.from_json(json.dumps({
    "categories": [
        {"id": "c0", "name": "none", "non_target": True},
        {"id": "c1", "name": "one"},
        {"id": "c2", "name": "two"},
    ],
    "criteria": [
        {"id": "q1", "text": "first?", "category": "c1"},
        {"id": "q2", "text": "second?", "category": "c2"},
    ],
}))
assert schema.criterion_ids == ["q1", "q2"]

rows = [
    ("s1", "a1", "q1", 1), ("s1", "a1", "q2", 1), ("s1", "a2", "q1", 1), ("s1", "a2", "q2", 0),
    ("s2", "a1", "q1", 1), ("s2", "a1", "q2", 0), ("s2", "a2", "q1", 0), ("s2", "a2", "q2", 1),
    ("s3", "a1", "q1", 0), ("s3", "a1", "q2", 1), ("s3", "a2", "q1", 0), ("s3", "a2", "q2", 1),
]
tensor = sa.Tensor.from_records(rows, schema)
assert tensor.shape == (3, 2, 2)
assert tensor.vote_counts() == [[2, 1], [1, 1], [0, 2]]

q1 = sa.stability(tensor, schema, 1)[0]
assert q1["focus_size"] == 2 and q1["nt"] == 0.5 and q1["uy"] == 0.5

summary = sa.overlap(tensor, schema, 1)
assert summary["covered_count"] == 3
assert abs(sa.conditional_overlap(tensor, "q2", "q1", 1) - 2 / 3) < 1e-12
assert sa.conditional_overlap(tensor, "q1", "q2", 2) == 0.0

assert sa.normalize("**Oui**") == 1
assert sa.normalize("Non.") == 0
assert sa.normalize("peut-être") is None

pve = sa.Schema.load(PVE)
synth = sa.synth(pve, [0.7, 0.06, 0.06, 0.06, 0.06, 0.06], 300, seed=3)
again = sa.synth(pve, [0.7, 0.06, 0.06, 0.06, 0.06, 0.06], 300, seed=3)
assert synth.vote_counts() == again.vote_counts()
assert [e["threshold"] for e in sa.sweep(synth, pve)] == [1, 2, 3]

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "tensor.csv")
    synth.write_csv(path)
    report = sa.run_audit(PVE, path, out_dir=os.path.join(tmp, "bundle"),
                          loo_pool=["a1", "a2", "a3", "a4", "a5"])
    assert len(report["robustness"]["loo"]["variants"]) == 5
    assert os.path.exists(os.path.join(tmp, "bundle", "report.json"))

try:
    sa.stability(tensor, schema, 3)
except sa.AuditError as e:
    assert "threshold" in str(e)
else:
    sys.exit("threshold above panel size was accepted")

print("smoke test passed")
