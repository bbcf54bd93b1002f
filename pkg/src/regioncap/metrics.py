"""Evaluation metrics: IoU, a deterministic METEOR variant, CIDEr-D,
dense-captioning mAP over an IoU x METEOR threshold grid, control accuracy,
and caption-degeneration statistics.

The METEOR variant uses exact-match unigrams with a greedy in-order
alignment (no stemming or synonyms), so absolute values are not comparable
to the reference METEOR tool; every consumer of these scores treats them as
internal or directional quantities.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .world import Box, classify_template

IOU_THRESHOLDS = (0.3, 0.4, 0.5, 0.6, 0.7)
METEOR_THRESHOLDS = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25)

METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5

CIDER_N = 4
CIDER_SIGMA = 6.0


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; symmetric, in [0, 1]."""
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def _greedy_alignment(cand: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    """Greedy in-order unigram matching.

    Scans the candidate left to right; each token matches the earliest
    reference occurrence strictly after the previously matched one.
    """
    pairs: list[tuple[int, int]] = []
    j_prev = -1
    for i, tok in enumerate(cand):
        for j in range(j_prev + 1, len(ref)):
            if ref[j] == tok:
                pairs.append((i, j))
                j_prev = j
                break
    return pairs


def _chunk_count(pairs: Sequence[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_lite(candidate: Sequence[str], references: Sequence[Sequence[str]]) -> float:
    """Exact-match METEOR variant; max over references."""
    if not references:
        raise ValueError("need at least one reference")
    cand = list(candidate)
    if not cand:
        return 0.0
    best = 0.0
    for ref in references:
        ref = list(ref)
        if not ref:
            continue
        pairs = _greedy_alignment(cand, ref)
        m = len(pairs)
        if m == 0:
            continue
        ch = _chunk_count(pairs)
        p = m / len(cand)
        r = m / len(ref)
        f = (p * r) / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r)
        penalty = METEOR_GAMMA * (ch / m) ** METEOR_BETA
        best = max(best, f * (1.0 - penalty))
    return best


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


class CiderScorer:
    """CIDEr-D: clipped TF-IDF n-gram cosine with a Gaussian length penalty.

    IDF comes from the reference corpus, one document per reference set.
    Scores are on the raw 0..10 scale (identical pair with informative
    n-grams up to n=4 scores 10); reports multiply by 100 for "points".
    """

    def __init__(self, corpus: Sequence[Sequence[Sequence[str]]]):
        if not corpus:
            raise ValueError("reference corpus is empty")
        self.num_docs = len(corpus)
        self.doc_freq: list[Counter] = [Counter() for _ in range(CIDER_N)]
        for refs in corpus:
            seen: list[set] = [set() for _ in range(CIDER_N)]
            for ref in refs:
                for n in range(CIDER_N):
                    seen[n].update(_ngrams(ref, n + 1).keys())
            for n in range(CIDER_N):
                for gram in seen[n]:
                    self.doc_freq[n][gram] += 1
        self.log_docs = math.log(float(self.num_docs))

    def _vector(self, tokens: Sequence[str]):
        vecs = []
        norms = []
        for n in range(CIDER_N):
            counts = _ngrams(tokens, n + 1)
            vec = {}
            norm_sq = 0.0
            for gram, tf in counts.items():
                idf = self.log_docs - math.log(max(1.0, self.doc_freq[n][gram]))
                val = float(tf) * idf
                vec[gram] = val
                norm_sq += val * val
            vecs.append(vec)
            norms.append(math.sqrt(norm_sq))
        return vecs, norms, len(tokens)

    def score(self, candidate: Sequence[str], references: Sequence[Sequence[str]]) -> float:
        if not references:
            raise ValueError("need at least one reference")
        cvec, cnorm, clen = self._vector(candidate)
        total = np.zeros(CIDER_N)
        for ref in references:
            rvec, rnorm, rlen = self._vector(ref)
            delta = float(clen - rlen)
            for n in range(CIDER_N):
                val = 0.0
                for gram, cv in cvec[n].items():
                    rv = rvec[n].get(gram, 0.0)
                    val += min(cv, rv) * rv
                if cnorm[n] > 0 and rnorm[n] > 0:
                    val /= cnorm[n] * rnorm[n]
                val *= math.exp(-(delta**2) / (2.0 * CIDER_SIGMA**2))
                total[n] += val
        return float(total.mean() / len(references) * 10.0)


def cider_d(
    candidates: Sequence[Sequence[str]],
    references: Sequence[Sequence[Sequence[str]]],
    corpus: Optional[Sequence[Sequence[Sequence[str]]]] = None,
) -> np.ndarray:
    """Per-sample CIDEr-D scores; IDF from `corpus` (defaults to references)."""
    if len(candidates) != len(references):
        raise ValueError("candidates and references must align")
    scorer = CiderScorer(corpus if corpus is not None else references)
    return np.array([scorer.score(c, r) for c, r in zip(candidates, references)])


@dataclass(frozen=True)
class Prediction:
    image_id: int
    box: Box
    caption: tuple[str, ...]
    confidence: float = 1.0

    def to_record(self) -> dict:
        return {
            "image_id": self.image_id,
            "box": self.box.as_list(),
            "caption": " ".join(self.caption),
            "confidence": self.confidence,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Prediction":
        cap = rec["caption"]
        tokens = tuple(cap.split()) if isinstance(cap, str) else tuple(cap)
        return cls(
            image_id=rec["image_id"],
            box=Box(*rec["box"]),
            caption=tokens,
            confidence=float(rec.get("confidence", 1.0)),
        )


@dataclass(frozen=True)
class GroundTruth:
    image_id: int
    box: Box
    caption: tuple[str, ...]


def _interpolated_ap(tp_flags: Sequence[bool], num_gt: int) -> float:
    """Area under the precision-recall curve, all-points interpolation."""
    if num_gt == 0:
        return 0.0
    tp = 0
    precisions = []
    recalls = []
    for rank, flag in enumerate(tp_flags, start=1):
        tp += 1 if flag else 0
        precisions.append(tp / rank)
        recalls.append(tp / num_gt)
    # Precision envelope from the right.
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for prec, rec in zip(precisions, recalls):
        if rec > prev_recall:
            ap += (rec - prev_recall) * prec
            prev_recall = rec
    return ap


def dense_caption_map(
    predictions: Sequence[Prediction],
    ground_truths: Sequence[GroundTruth],
    return_grid: bool = False,
):
    """Mean AP over the IoU x METEOR threshold grid.

    Predictions are ranked by descending confidence (stable order on ties);
    a prediction is a true positive when it matches an unmatched ground
    truth in its image at iou >= t_iou and meteor_lite >= t_m, taking the
    best-IoU ground truth first (ties broken by ground-truth index).
    """
    gts_by_image: dict[int, list[tuple[int, GroundTruth]]] = defaultdict(list)
    for gi, gt in enumerate(ground_truths):
        gts_by_image[gt.image_id].append((gi, gt))
    num_gt = len(ground_truths)

    order = sorted(range(len(predictions)), key=lambda i: (-predictions[i].confidence, i))
    # Pairwise IoU / METEOR computed once per (prediction, candidate gt).
    pair_cache: list[list[tuple[int, float, float]]] = []
    for pi in order:
        pred = predictions[pi]
        entries = []
        for gi, gt in gts_by_image.get(pred.image_id, []):
            entries.append(
                (gi, iou(pred.box, gt.box), meteor_lite(pred.caption, [gt.caption]))
            )
        pair_cache.append(entries)

    grid = np.zeros((len(IOU_THRESHOLDS), len(METEOR_THRESHOLDS)))
    for ti, t_iou in enumerate(IOU_THRESHOLDS):
        for tm, t_m in enumerate(METEOR_THRESHOLDS):
            matched: set[int] = set()
            tp_flags = []
            for entries in pair_cache:
                candidates = [
                    (gi, ov)
                    for gi, ov, met in entries
                    if gi not in matched and ov >= t_iou and met >= t_m
                ]
                if candidates:
                    best = max(candidates, key=lambda c: (c[1], -c[0]))
                    matched.add(best[0])
                    tp_flags.append(True)
                else:
                    tp_flags.append(False)
            grid[ti, tm] = _interpolated_ap(tp_flags, num_gt)
    mean_ap = float(grid.mean())
    if return_grid:
        return mean_ap, grid
    return mean_ap


def control_accuracy(
    captions: Sequence[Sequence[str]], control_word_lists: Sequence[Sequence[str]]
) -> float:
    """Fraction of captions containing every one of their control words.

    Verbatim token match; an empty control list counts as successful.
    """
    if len(captions) != len(control_word_lists):
        raise ValueError("captions and control lists must align")
    if not captions:
        return 0.0
    ok = 0
    for caption, controls in zip(captions, control_word_lists):
        tokens = set(caption)
        if all(word in tokens for word in controls):
            ok += 1
    return ok / len(captions)


@dataclass
class DegenerationStats:
    distinct_predictions: int
    distinct_references: int
    template_recovery: dict[str, float]
    rare_recovery: float
    frequent_recovery: float
    rare_cider: float
    frequent_cider: float
    length_histogram: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "distinct_predictions": self.distinct_predictions,
            "distinct_references": self.distinct_references,
            "template_recovery": self.template_recovery,
            "rare_recovery": self.rare_recovery,
            "frequent_recovery": self.frequent_recovery,
            "rare_cider": self.rare_cider,
            "frequent_cider": self.frequent_cider,
            "length_histogram": {str(k): v for k, v in sorted(self.length_histogram.items())},
        }


def degeneration_report(
    predictions: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    templates: Sequence[str],
    rarities: Sequence[str],
) -> DegenerationStats:
    """Template recovery rates, distinct-caption counts, and per-rarity
    CIDEr-D (IDF over all references)."""
    if not (len(predictions) == len(references) == len(templates) == len(rarities)):
        raise ValueError("all inputs must align")
    pred_families = [classify_template(p) for p in predictions]

    recovered: dict[str, list[bool]] = defaultdict(list)
    for fam_pred, fam_gt in zip(pred_families, templates):
        recovered[fam_gt].append(fam_pred == fam_gt)
    template_recovery = {
        fam: sum(hits) / len(hits) for fam, hits in sorted(recovered.items())
    }

    def subset_rate(rarity: str) -> float:
        hits = [
            fam_pred == fam_gt
            for fam_pred, fam_gt, r in zip(pred_families, templates, rarities)
            if r == rarity
        ]
        return sum(hits) / len(hits) if hits else 0.0

    scores = cider_d(predictions, [[r] for r in references])
    rare_mask = np.array([r == "rare" for r in rarities])

    lengths = Counter(len(p) for p in predictions)
    return DegenerationStats(
        distinct_predictions=len({tuple(p) for p in predictions}),
        distinct_references=len({tuple(r) for r in references}),
        template_recovery=template_recovery,
        rare_recovery=subset_rate("rare"),
        frequent_recovery=subset_rate("frequent"),
        rare_cider=float(scores[rare_mask].mean()) if rare_mask.any() else 0.0,
        frequent_cider=float(scores[~rare_mask].mean()) if (~rare_mask).any() else 0.0,
        length_histogram=dict(lengths),
    )


@dataclass
class EvalReport:
    mode: str
    num_samples: int
    dense_map: float
    meteor_mean: float
    cider_mean: float
    control_acc: float
    degeneration: DegenerationStats
    skipped: int = 0
    mean_controls_per_region: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "num_samples": self.num_samples,
            "dense_map": self.dense_map,
            "meteor_mean": self.meteor_mean,
            "cider_mean": self.cider_mean,
            "control_accuracy": self.control_acc,
            "skipped": self.skipped,
            "mean_controls_per_region": self.mean_controls_per_region,
            "degeneration": self.degeneration.to_dict(),
            **self.extras,
        }
