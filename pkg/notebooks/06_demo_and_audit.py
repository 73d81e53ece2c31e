"""
Four-phase demo and offline metrics
===================================

Negotiate, enforce, renegotiate on an SLA violation, switch off and
renegotiate again, then compare PRB use against a static 55 Mbps slice.
Every number in the report can be recomputed from the audit file alone.
"""

import tempfile
from pathlib import Path

from symbiotic_ran.audit import read_audit
from symbiotic_ran.harness import run
from symbiotic_ran.metrics import report_from_audit
from symbiotic_ran.scenario import preset

out = Path(tempfile.mkdtemp())
art = run(preset("demo"), out)
for row in art.phases:
    print(row)
print(art.report.table())

records = read_audit(art.audit_path)
kinds = {}
for r in records:
    kinds[r.kind] = kinds.get(r.kind, 0) + 1
print("audit records by kind:", kinds)

offline = report_from_audit(records)
print("offline savings %.2f%% (live %.2f%%)" % (offline.prb_savings_percent, art.report.prb_savings_percent))
print("files:", sorted(p.name for p in out.iterdir()))
