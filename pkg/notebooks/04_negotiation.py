"""
Negotiating an SLA with and without the guard-rail
==================================================

Scripted tenants stand in for language models. Greedy tenants hold their
demand and concede 20% per round; compliant ones also keep every bid inside
the optimizer's interval.
"""

from symbiotic_ran.harness import run
from symbiotic_ran.negotiation import AgentSpec, NegotiationConfig, run_negotiation
from symbiotic_ran.consensus import JitterSpec
from symbiotic_ran.scenario import preset

for name in ("negotiate-standalone", "negotiate-guardrail"):
    art = run(preset(name))
    tr = art.transcripts[0]
    print(f"\n{name}: outcome {tr.outcome}, consensus {tr.consensus}, MAE {art.report.mae:.2f}")
    for r in tr.rounds:
        bids = [round(b, 1) for b in r.bids()]
        print(f"  round {r.index}: bids {bids}  mediator {r.mediator.throughput}  spread {r.spread:.1f}")

# a free-form game: two tenants state their needs in prose
agents = [AgentSpec("video", "Our video service needs about 40 Mbps.", "cooperative"),
          AgentSpec("backup", "Nightly backups want 90 Mbps.", "cooperative")]
tr = run_negotiation(NegotiationConfig(agents, jitter=JitterSpec(seed=1)))
print("\nprose intents ->", tr.demands, "-> consensus", tr.consensus, "in", len(tr.rounds), "rounds")
