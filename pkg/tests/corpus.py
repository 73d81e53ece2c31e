"""Model-response corpus for the JSON field extractor.

Each case is ``(text, key, expected)`` where ``expected`` is a float or the
ExtractionError subclass that must be raised.
"""

from symbiotic_ran.llm import MissingKeyError, NoJsonObjectError, NonNumericValueError

AGENT1 = ('- "Reasoning: I need roughly 50 Mbps for my video service, and the other tenant wants '
          'far more, so I hold at my own need for now. {"throughput": 50}"\n'
          '- Prompt tokens: 980, Completion tokens: 41, Total tokens: 1021, Time: 0.97 secs')
AGENT2 = ('#[Agent 2]\n- "Reasoning: my bulk transfer would like 100 Mbps, but I can move part of '
          'the way down. {"throughput": 75}"')
MEDIATOR = ('#[Network Mediator]\nOptimizer SLA confidence interval: 62-70\n'
            '- "Reasoning: the bids are 50 and 75, and the optimizer range sits in between. {"throughput": 65}"\n'
            '- Prompt tokens: 1110, Completion tokens: 38, Total tokens: 1148, Time: 1.31 secs')
KP_LOG = ('----------- Iteration\n| [Target KPI]: 2.0,   [Current KPI]: 4.5\n'
          '| [Current Kp]: 0.3,  *[ LLM new Kp]: 0.7\n-----------')

VALID = [
    (AGENT1, "throughput", 50.0),
    (AGENT2, "throughput", 75.0),
    (MEDIATOR, "throughput", 65.0),
    ('"Reasoning: a fair middle. {\\"throughput\\": 54}"', "throughput", 54.0),
    ('{"Kp": 0.9}', "Kp", 0.9),
    ('Reasoning: the KPI fell, so I keep going up. {"Kp": 0.5}', "Kp", 0.5),
    ('Give me a Kp as a json object with this template: {{"Kp": 0.7}}', "Kp", 0.7),
    ('```json\n{"Kp": 1.2}\n```', "Kp", 1.2),
    ('{"kp": 1.1}', "Kp", 1.1),
    ('{"action": {"Kp": 0.8}}', "Kp", 0.8),
    ('{"note": "first"} then {"Kp": 0.6}', "Kp", 0.6),
    ('{"Kp": 0.6} and later {"Kp": 0.9}', "Kp", 0.6),
    ('{"throughput": 40}', "throughput", 40.0),
    ('{"throughput": -5}', "throughput", -5.0),
    ('{"Kp": 1e-1}', "Kp", 0.1),
    ('{\n  "Kp":\n    1.3\n}', "Kp", 1.3),
    ('Final answer {"throughput": 20} and {curly} noise', "throughput", 20.0),
    ('Reasoning: I set {x} high first. {"throughput": 40}', "throughput", 40.0),
    ('{"reasoning": "balance the tenants", "throughput": 33}', "throughput", 33.0),
    ('Réflexion : compromis équitable → {"throughput": 61}', "throughput", 61.0),
    ('{ "Kp" : 1.5 }', "Kp", 1.5),
    ('[{"Kp": 0.4}]', "Kp", 0.4),
    ('{"throughput": 0}', "throughput", 0.0),
    ('Reasoning: (Your reasoning in 1-2 sentences) {\\"throughput\\": 0}', "throughput", 0.0),
    ('{"THROUGHPUT": 12.5}', "throughput", 12.5),
    ('Reasoning: agree with mediator.\n\n{"throughput": 55.0}\n', "throughput", 55.0),
    ('{"sla": {"throughput": 70, "latency": 10}}', "throughput", 70.0),
]

INVALID = [
    (KP_LOG, "Kp", NoJsonObjectError),
    ('{"kp": "high"}', "Kp", NonNumericValueError),
    ('{"Kp": null}', "Kp", NonNumericValueError),
    ('{"Kp": true}', "Kp", NonNumericValueError),
    ('{"Kp": NaN}', "Kp", NoJsonObjectError),
    ('{"Kp": Infinity}', "Kp", NoJsonObjectError),
    ('{"Kp": [0.5]}', "Kp", NonNumericValueError),
    ('{"throughput": 50}', "Kp", MissingKeyError),
    ('{"Kp": 0.5', "Kp", NoJsonObjectError),
    ("{'Kp': 0.5}", "Kp", NoJsonObjectError),
    ('{"Kp": 1e999}', "Kp", NonNumericValueError),
    ("{}", "Kp", MissingKeyError),
    ('{"Kp": {"value": 0.5}}', "Kp", NonNumericValueError),
]

ADVERSARIAL = [
    ("", "Kp", NoJsonObjectError),
    ("   \n\t", "Kp", NoJsonObjectError),
    ("I'm sorry, I cannot help with that.", "Kp", NoJsonObjectError),
    ("Kp = 0.9", "Kp", NoJsonObjectError),
    ("<html><body><h1>502 Bad Gateway</h1></body></html>", "throughput", NoJsonObjectError),
    ("}{", "Kp", NoJsonObjectError),
    ("{{{{", "Kp", NoJsonObjectError),
    ("null", "Kp", NoJsonObjectError),
    ("[1, 2, 3]", "Kp", NoJsonObjectError),
    (None, "Kp", NoJsonObjectError),
]

CASES = VALID + INVALID + ADVERSARIAL
