"""Record real service payloads for the UI snapshot tests.

Run from the repo root after installing the Python package:

    python3 frontend/tests/record_fixtures.py

Rewrites frontend/tests/fixtures/*.json. The dataset is seeded, so
entry order and scores are reproducible; session ids are not, which is
fine because the tests treat the files as opaque recorded truth.
"""

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from rankloop.data import save_dataset
from rankloop.server import create_app
from rankloop.synthetic import SyntheticSpec, gen_synthetic

FIXTURES = Path(__file__).parent / "fixtures"


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        store_root = Path(tmp)
        spec = SyntheticSpec(
            n_identities=40, dim=16, sigma_min=0.1, sigma_max=0.6,
            view_skew=2.0, skew_rank=4,
        )
        dataset = gen_synthetic(spec, seed=7)
        save_dataset(dataset, store_root / "datasets" / "fixture")
        person_of = {g.item_id: g.person_id for g in dataset.gallery.items}

        client = TestClient(create_app(store_root))

        opened = client.post("/sessions", json={
            "dataset_id": "fixture", "window_k": 10,
            "max_rounds_per_probe": 3, "seed": 11,
        }).json()
        sid = opened["session_id"]
        probe_person = opened["probe"]["person_id"]

        ranking = client.get(f"/sessions/{sid}/ranking", params={"top_k": 12}).json()

        # highest-ranked wrong-person item inside the window
        wrong = next(
            e for e in ranking["entries"]
            if e["position"] < ranking["window_k"]
            and person_of[e["item_id"]] != probe_person
        )
        feedback = client.post(f"/sessions/{sid}/feedback", json={
            "probe_id": ranking["probe_id"], "item_id": wrong["item_id"],
            "label": "strong_negative", "token": ranking["token"], "top_k": 12,
        }).json()

        # verify the true match if it surfaced, then move on
        match = next(
            (e for e in feedback["entries"]
             if e["position"] < feedback["window_k"]
             and person_of[e["item_id"]] == probe_person),
            None,
        )
        if match is not None:
            client.post(f"/sessions/{sid}/feedback", json={
                "probe_id": feedback["probe_id"], "item_id": match["item_id"],
                "label": "true_match", "token": feedback["token"],
            })
        client.post(f"/sessions/{sid}/advance")
        report = client.get(f"/reports/{sid}").json()

        for name, payload in [
            ("opened", opened), ("ranking", ranking),
            ("feedback", feedback), ("report", report),
        ]:
            path = FIXTURES / f"{name}.json"
            path.write_text(json.dumps(payload, indent=2) + "\n")
            print(f"wrote {path}")


if __name__ == "__main__":
    main()
