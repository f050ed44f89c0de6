"""
Driving the session service over HTTP
=====================================

The interactive loop is exposed as a small JSON API so a browser UI (or
this script) can run sessions against a shared store. The protocol has
one rule worth seeing in action: feedback must quote the token of the
ranking it was looking at. If the model changed since that ranking was
served, the request is rejected with 409 stale_ranking and the client
re-fetches; no judgment is ever applied against a list the user was not
actually shown.

Here the app is exercised in-process. Against a real deployment
(``rankloop serve --store STORE``) the requests are identical.
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from rankloop import SyntheticSpec, gen_synthetic, save_dataset
from rankloop.server import create_app

store = Path(tempfile.mkdtemp(prefix="rankloop-store-"))
spec = SyntheticSpec(n_identities=80, dim=16, sigma_min=0.1, sigma_max=1.2,
                     view_skew=2.0, skew_rank=8)
save_dataset(gen_synthetic(spec, seed=2), store / "datasets" / "demo")

client = TestClient(create_app(store))

sess = client.post("/sessions", json={"dataset_id": "demo", "eta": 0.1}).json()
sid = sess["session_id"]
print(f"opened {sid}: {sess['probe']['probes_total']} probes, budget "
      f"{sess['probe']['rounds_budget']} judgments each")

probe = client.get(f"/sessions/{sid}/probe").json()
ranking = client.get(f"/sessions/{sid}/ranking", params={"top_k": 5}).json()
print(f"\nprobe {probe['probe_id']}, top of the list:")
for e in ranking["entries"]:
    print(f"  {e['position']:2d}  {e['item_id']}  {e['score']:+.3f}")

# Flag the top item as wrong, quoting the ranking token.
resp = client.post(f"/sessions/{sid}/feedback", json={
    "probe_id": probe["probe_id"],
    "item_id": ranking["entries"][0]["item_id"],
    "label": "strong_negative",
    "token": ranking["token"],
})
print(f"\nflagged {ranking['entries'][0]['item_id']}: "
      f"applied={resp.json()['update']['applied']}, probe closed={resp.json()['closed']}")

# The model moved, so the old token is now worthless. Reusing it is the
# race a second screen or a slow network would produce.
stale = client.post(f"/sessions/{sid}/feedback", json={
    "probe_id": probe["probe_id"],
    "item_id": ranking["entries"][1]["item_id"],
    "label": "strong_negative",
    "token": ranking["token"],
})
print(f"reused the old token: HTTP {stale.status_code} {stale.json()['error']}")

# Recover the way a client should: re-fetch, then act on what you see.
fresh = client.get(f"/sessions/{sid}/ranking", params={"top_k": 5}).json()
resp = client.post(f"/sessions/{sid}/feedback", json={
    "probe_id": probe["probe_id"],
    "item_id": fresh["entries"][0]["item_id"],
    "label": "strong_negative",
    "token": fresh["token"],
})
print(f"after re-fetch: applied={resp.json()['update']['applied']}")

# Budget spent (3 judgments): the probe closes on its own and the next
# probe comes up via advance.
third = client.get(f"/sessions/{sid}/ranking").json()
done = client.post(f"/sessions/{sid}/feedback", json={
    "probe_id": probe["probe_id"],
    "item_id": third["entries"][0]["item_id"],
    "label": "strong_negative",
    "token": third["token"],
}).json()
print(f"third judgment: closed={done['closed']} ({done['close_reason']})")
nxt = client.post(f"/sessions/{sid}/advance").json()
print(f"advanced to probe {nxt['probe_id']}")

report = client.get(f"/reports/{sid}").json()
print(f"\nlive report: kind={report['kind']}, probes closed "
      f"{report['probes_closed']}/{report['probes_total']}, "
      f"updates applied {report['updates_applied']}")
