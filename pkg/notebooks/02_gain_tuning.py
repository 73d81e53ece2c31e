"""
Retuning the gain when the channel shifts
=========================================

The gain-step preset plays MCS 28 for 16 s, then MCS 14. Intents alternate
between 10 and 50 Mbps every second. The Type I agent averages iterations
over clusters of four enforcements and retunes Kp whenever that mean
exceeds 2.
"""

from symbiotic_ran.harness import run, summary
from symbiotic_ran.scenario import preset

art = run(preset("gain-step"))
print("KPI per cluster:", art.agent.kpis)
print("Kp sequence:   ", summary(art)["kp_sequence"])
for rt in art.agent.retunes:
    print(f"  t={rt.t_ms:6d} ms  KPI {rt.kpi:4.2f}  Kp {rt.old_kp} -> {rt.new_kp}")

# every decision is in the audit stream, including the raw backend reply
for rec in art.audit.records:
    if rec.kind == "kp_decision":
        print(rec.t_ms, rec.payload["raw_response"])

# the same run with the gain frozen, for contrast
fixed = preset("gain-step")
fixed.controller["design"] = "p-only"
print("frozen Kp=0.3, mean iterations:", round(run(fixed).report.iterations_mean, 2),
      "| retuned:", round(art.report.iterations_mean, 2))
