"""Record REST payload fixtures for the UI component tests.

Drives the backend in-process through its HTTP interface with a deterministic
stub model, then snapshots the results and group-by responses. The stub grades
each counterfactual by its text so the outcome distribution has two clear
low-end outliers: every row the boxplot flags lies in [0, 0.5) and vice versa,
which the brushing test relies on.

Usage: python3 scripts/record_fixtures.py  (from the frontend/ directory)
"""

import json
import os
import threading
from pathlib import Path

from fastapi.testclient import TestClient

from segshap.engine import enumerate_valid, realize_text
from segshap.gateway import Gateway, GatewayConfig, stub_transport
from segshap.rules import default_rules
from segshap.segmenter import Removability, build_forest
from segshap.conllu import parse_conllu
from segshap.service import create_app

HERE = Path(__file__).resolve().parent
FIXTURES = HERE.parent / "fixtures"
CONLLU = (HERE.parent.parent / "fixtures" / "medqa_01.conllu").read_text()
TEMPLATE = "Q: {input}"

# yes-votes out of 5 per counterfactual, assigned by text length rank:
# the two shortest become outliers (0.0, 0.2), the rest split 0.8 / 1.0
(parse,), _ = parse_conllu(CONLLU)
forest = build_forest(parse, default_rules())
texts = sorted((realize_text(forest, v).text for v in enumerate_valid(forest)),
               key=lambda t: (len(t), t))
votes = {}
for rank, text in enumerate(texts):
    votes[text] = 0 if rank == 0 else 1 if rank == 1 else 4 if rank < 13 else 5

counters: dict[str, int] = {}
lock = threading.Lock()


def reply(prompt: str, _payload: dict) -> str:
    text = prompt[len("Q: "):]
    with lock:
        seen = counters.get(prompt, 0)
        counters[prompt] = seen + 1
    return "yes" if seen < votes[text] else "no"


def main() -> None:
    os.environ.setdefault("OPENAI_API_KEY", "recorded")
    import tempfile

    with tempfile.TemporaryDirectory() as storage:
        gateway = Gateway(GatewayConfig(base_url="http://stub", model="recorded"),
                          transport=stub_transport(reply))
        client = TestClient(create_app(storage, gateway))

        task = client.post("/api/v1/tasks", json={
            "conllu": CONLLU,
            "template": TEMPLATE,
            "evaluators": [{"operator": "CONTAIN", "argument": "yes",
                            "name": "answers yes"}],
        })
        task.raise_for_status()
        task_id = task.json()["task_id"]

        run = client.post(f"/api/v1/tasks/{task_id}/runs", json={"n": 5, "seed": 0})
        run.raise_for_status()
        run_id = run.json()["run_id"]
        while client.get(f"/api/v1/runs/{run_id}").json()["status"]["state"] \
                not in ("done", "failed"):
            pass

        results = client.get(f"/api/v1/runs/{run_id}/results")
        results.raise_for_status()
        payload = results.json()
        low = sorted(r["cf_id"] for r in payload["rows"] if r["outcome"] < 0.5)
        assert low == sorted(payload["stats"]["outlier_ids"]), (
            "fixture must make the low-outcome rows exactly the flagged outliers")

        # two removable segments from different branches give all 4 patterns
        removable = [s["id"] for s in payload["segments"]
                     if s["removability"] == Removability.REMOVABLE.value
                     and not s["children"]]
        selection = removable[:2]
        grouped = client.post(f"/api/v1/runs/{run_id}/groupby",
                              json={"selection": selection})
        grouped.raise_for_status()

        FIXTURES.mkdir(exist_ok=True)
        (FIXTURES / "results.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n")
        (FIXTURES / "groupby.json").write_text(
            json.dumps(grouped.json(), indent=2, sort_keys=True) + "\n")
        print(f"recorded results.json ({len(payload['rows'])} rows, "
              f"m={len(payload['segment_ids'])}) and groupby.json "
              f"({len(grouped.json()['groups'])} groups on {selection})")


if __name__ == "__main__":
    main()
