"""
Anatomy of one feedback update
==============================

What actually happens when a judgment arrives: the selected item's
tie-aware rank turns into a scalar loss, the loss scales a rank-one
correction of the metric, and the corrected score lands exactly where
a closed-form target says it must. Everything here is printable on a
gallery small enough to inspect by eye.
"""

import numpy as np

from rankloop import (
    FeedbackEvent,
    FeedbackLabel,
    Gallery,
    GalleryItem,
    HvilConfig,
    MetricModel,
    Probe,
    hvil_update,
    pair_scores,
    rank_loss,
)

rng = np.random.default_rng(3)
d = 6

probe = Probe("p", "idA", "c0", rng.normal(size=d))
items = [
    GalleryItem(f"g{k}", "idA" if k == 0 else f"id{k}", "c1", rng.normal(size=d))
    for k in range(8)
]
gallery = Gallery(items)
model = MetricModel.identity(d)

features = np.stack([it.feature for it in items])
scores = pair_scores(probe.feature, features, model)
order = np.argsort(-scores)
print("initial scores (higher is closer):")
for pos, idx in enumerate(order):
    print(f"  rank {pos}: {items[idx].item_id}  score {scores[idx]:+.4f}")

# The two judgments weight a mistake very differently. Confirming a
# match buried at rank r costs the harmonic sum 1 + 1/2 + ... + 1/r,
# steep at the top of the list and nearly flat far down. Flagging a
# wrong item costs linearly in how far it still has to fall.
n_g = len(items)
print("\nloss by rank of the selected item:")
print("  rank   confirmed-match   flagged-wrong")
for r in (0, 1, 3, 7):
    tm = rank_loss(r, n_g, FeedbackLabel.TRUE_MATCH)
    sn = rank_loss(r, n_g, FeedbackLabel.STRONG_NEGATIVE)
    print(f"  {r:4d}   {tm:15.4f}   {sn:13.4f}")

# Flag the current top item as wrong and apply the update.
flagged = items[int(order[0])].item_id
event = FeedbackEvent("p", flagged, FeedbackLabel.STRONG_NEGATIVE, 0, 0.0)
config = HvilConfig(eta=0.5)
new_model, ctx = hvil_update(model, probe, gallery, event, config)

print(f"\nflagged {flagged}: rank {ctx.rank}, loss {ctx.loss:.4f}")
print(f"  score before {ctx.f_hat:+.4f} -> after {ctx.f_t:+.4f} (target side b={ctx.b:+.0f})")

# The post-update score is not a heuristic nudge. It solves
#   f_t = f_hat * (1 + eta * loss * (f_t - f_v - b) * f_hat)
# whose positive root the update computes in closed form.
k = config.eta * ctx.loss
residual = ctx.f_t * (1.0 + k * (ctx.f_t - ctx.f_v - ctx.b) * ctx.f_hat) - ctx.f_hat
print(f"  fixed-point residual: {abs(residual):.2e}")

# The same step, written against the inverse metric, is a textbook
# rank-one correction. Working in the forward space just avoids ever
# forming an inverse.
z = ctx.z
inv = np.linalg.inv(model.matrix)
inv_updated = inv - k * (ctx.f_t - ctx.f_v - ctx.b) * np.outer(z, z)
explicit = np.linalg.inv(inv_updated)
print(f"  agreement with the explicit inverse-space step: "
      f"{np.linalg.norm(new_model.matrix - explicit):.2e} (Frobenius)")

# Positive definiteness survives by construction: the update scales one
# direction by f_t / f_hat > 0 inside a congruence, so no eigenvalue can
# cross zero.
print(f"  smallest eigenvalue after update: {np.linalg.eigvalsh(new_model.matrix)[0]:.6f}")

scores_after = pair_scores(probe.feature, features, new_model)
dropped = int(np.sum(scores_after > scores_after[int(order[0])]))
print(f"\n{flagged} fell from rank 0 to rank {dropped}; only its direction was stretched.")
