"""Goal-reconstruction metrics and the no-gaze baseline question harness.

Five measures per generated question: question-word identity, UIUC
semantic category agreement (through an external classifier client),
sentence BLEU, embedding-based semantic similarity (greedy token matching,
precision/recall harmonic mean, no idf weighting), and downstream QA
validity (a multiple-choice QA client must still pick the true question's
correct answer when shown the generated question).

``question_word_of`` and ``bleu`` are fully offline; the classifier and
QA clients sit behind contracts, with labels cached by question text hash
so reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import string
from collections import Counter
from dataclasses import dataclass
from math import exp, log
from pathlib import Path

import numpy as np
import pandas as pd

from .bootstrap import cluster_bootstrap_ci
from .corpus.types import Corpus, Question, Trial
from .embeddings import EmbeddingProvider

QUESTION_WORDS = ("What", "When", "Where", "Who", "Whom", "Which", "Whose", "Why", "How")

# recorded with every reconstruction report (manifest config)
BLEU_CONFIG = ("sentence-level, orders up to 4 capped at candidate length, "
               "brevity penalty, +1 additive smoothing on zero counts of "
               "orders >= 2")
SEMANTIC_CONFIG = ("greedy token-level cosine matching, precision/recall "
                   "harmonic mean, no idf weighting")

UIUC_LABELS = ("ABBR", "ENTITY", "DESCRIPTION", "MANNER", "REASON",
               "DEFINITION", "HUMAN", "LOCATION", "NUMERIC")

SOURCES = ("gaze_model", "human_diff_span", "human_same_span",
           "llm_arbitrary", "llm_text_only")

UIUC_PROMPT = '''You are an expert at classifying questions into the standard UIUC
**main question categories**.

The main categories include:

- ABBR: Abbreviation
For example:
  - What does the abbreviation AIDS stand for?
  - What is the abbreviation for micro?
  - What is the abbreviation of the company name 'General Motors'?
  - What does G.M.T. stand for?

- ENTITY: Entity
For example:
  - What kind of animal is Babar?
  - What killed Bob Marley?
  - What is a fear of weakness?
  - Where does your hair grow the fastest?

- DESCRIPTION: Description
For example:
  - What do Mormons believe?
  - What is the history of skateboarding?
  - What is the difference between a generator and an alternator?
  - Where do rocks come from?

- MANNER: Manner
For example:
  - How do I get another city's newspaper?
  - How do you solve "Rubik's Cube"?
  - How do you look up criminal records on the Internet?
  - How do you find oxidation numbers?

- REASON: Reason
For example:
  - What is the purpose of a car bra?
  - What makes a tornado turn?
  - What causes the redness in your cheeks when you blush?
  - Why do horseshoes bring luck?

- DEFINITION: Definition
For example:
  - What is a dental root canal?
  - What is the contents of proposition 98?
  - Hazmat stands for what?
  - What does the name Billie mean?

- HUMAN: People or groups
For example:
  - Who invented baseball?
  - What stereo manufacturer is 'Slightly ahead of its time'?
  - Who played the original Charlie's Angels?
  - What company's logo is a 'W' in a circle?

- LOCATION: Geographic locations
For example:
  - Where is the highest point in Japan?
  - What European city do Nicois live in?
  - What is Answers.com 's address?
  - What U.S. state borders Illinois to the north?

- NUMERIC: Numbers, quantities, and dates
For example:
  - What is the temperature for baking Peachy Oat Muffins?
  - How many colleges are in Wyoming?
  - What is the average temperature in the Arctic?
  - What is the speed of light?

---
Return an array of tuples in the format:
```
[ (0, "HUMAN"), (1, "DESCRIPTION"), (2, "NUMERIC"), (3, "DESCRIPTION"), ]
```
If unsure, choose the closest matching category.
'''


def question_word_of(question: str) -> tuple[str, bool]:
    """Classify the question's first token into the question-word set.

    Returns (label, flagged); non-matching first tokens map to "Other"
    ("Hazmat stands for what?" -> Other), empty input is flagged.
    """
    if not question or not question.strip():
        return "Other", True
    first = question.strip().split()[0].strip(string.punctuation + "“”‘’")
    for w in QUESTION_WORDS:
        if first.lower() == w.lower():
            return w, False
    return "Other", False


# --- UIUC categorization through a classifier client ---


class CategorizationClient:
    """Contract: takes the categorization prompt plus a numbered question
    list, returns the raw model output containing (index, "LABEL") tuples."""

    name = "abstract"

    def classify(self, prompt: str) -> str:
        raise NotImplementedError


_TUPLE_RE = re.compile(r'\(\s*(\d+)\s*,\s*"([A-Z]+)"\s*\)')


def _parse_label_tuples(raw: str, n: int) -> dict[int, str] | None:
    out = {}
    for m in _TUPLE_RE.finditer(raw):
        idx, label = int(m.group(1)), m.group(2)
        if label in UIUC_LABELS and 0 <= idx < n:
            out[idx] = label
    return out if len(out) == n else None


def _cache_dir(explicit=None) -> Path:
    base = explicit or os.environ.get("GAZEGOAL_CACHE_DIR") or ".gazegoal_cache"
    p = Path(base)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _qhash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:24]


def uiuc_category(
    questions: list[str],
    client: CategorizationClient,
    cache_dir=None,
    batch_size: int = 20,
) -> list[str | None]:
    """Classify questions into UIUC main categories, with caching.

    Unparseable client output is retried once per batch and then flagged
    (None labels for that batch).
    """
    cache_path = _cache_dir(cache_dir) / "uiuc_labels.json"
    cache: dict[str, str] = {}
    if cache_path.exists():
        cache = json.loads(cache_path.read_text())

    labels: list[str | None] = [cache.get(_qhash(q)) for q in questions]
    todo = [i for i, lab in enumerate(labels) if lab is None]
    for start in range(0, len(todo), batch_size):
        chunk = todo[start : start + batch_size]
        numbered = "\n".join(f"{j}. {questions[i]}" for j, i in enumerate(chunk))
        prompt = UIUC_PROMPT + "\nQuestions:\n" + numbered
        parsed = None
        for _ in range(2):  # one retry on unparseable output
            raw = client.classify(prompt)
            parsed = _parse_label_tuples(raw, len(chunk))
            if parsed is not None:
                break
        if parsed is None:
            continue
        for j, i in enumerate(chunk):
            labels[i] = parsed[j]
            cache[_qhash(questions[i])] = parsed[j]

    tmp = cache_path.with_suffix(".tmp")
    tmp.write_text(json.dumps(cache, indent=0, sort_keys=True))
    tmp.replace(cache_path)
    return labels


# --- BLEU ---

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def bleu_tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def bleu(candidate: str, reference: str, max_n: int = 4) -> float:
    """Sentence BLEU with brevity penalty and additive smoothing.

    Modified n-gram precisions up to ``max_n`` (capped at the candidate
    length) combine with uniform weights; zero match counts at orders >= 2
    are smoothed as (0+1)/(total+1). A zero unigram precision or an empty
    candidate yields 0.
    """
    cand = bleu_tokenize(candidate)
    ref = bleu_tokenize(reference)
    if not cand or not ref:
        return 0.0
    orders = min(max_n, len(cand))
    log_sum = 0.0
    for n in range(1, orders + 1):
        cand_ngrams = Counter(tuple(cand[i : i + n]) for i in range(len(cand) - n + 1))
        ref_ngrams = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
        total = sum(cand_ngrams.values())
        matched = sum(min(c, ref_ngrams[g]) for g, c in cand_ngrams.items())
        if matched == 0:
            if n == 1:
                return 0.0
            p = 1.0 / (total + 1.0)
        else:
            p = matched / total
        log_sum += log(p) / orders
    bp = 1.0 if len(cand) > len(ref) else exp(1.0 - len(ref) / len(cand))
    return bp * exp(log_sum)


# --- embedding-based semantic similarity ---


def semantic_similarity(
    candidate: str, reference: str, provider: EmbeddingProvider
) -> float:
    """Greedy token-matching cosine similarity, harmonic-mean combined.

    Precision matches each candidate token to its closest reference token,
    recall the converse; no idf weighting. Symmetric in its two inputs.
    """
    if not candidate.strip() or not reference.strip():
        return 0.0
    cv = np.asarray(provider.token_vectors(candidate), dtype=np.float64)
    rv = np.asarray(provider.token_vectors(reference), dtype=np.float64)
    if cv.size == 0 or rv.size == 0:
        return 0.0
    cn = np.linalg.norm(cv, axis=1, keepdims=True)
    rn = np.linalg.norm(rv, axis=1, keepdims=True)
    cn[cn == 0] = 1.0
    rn[rn == 0] = 1.0
    sim = (cv / cn) @ (rv / rn).T
    precision = float(sim.max(axis=1).mean())
    recall = float(sim.max(axis=0).mean())
    if precision + recall <= 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


# --- downstream QA validity ---


class QAClient:
    """Contract: pick one of four answers given (question, text, answers)."""

    name = "abstract"

    def select_answer(self, question: str, text: str, answers: tuple[str, ...]) -> int:
        raise NotImplementedError


def qa_validity(
    generated_question: str,
    paragraph_text: str,
    true_question: Question,
    qa_client: QAClient,
) -> bool | None:
    """True/False validity, or None when the trial is outside the subset the
    client answers correctly given the true question."""
    if true_question.answers is None or true_question.correct_answer is None:
        raise ValueError(
            f"question {true_question.question_id} has no answer options"
        )
    answers = true_question.answers
    correct = true_question.correct_answer
    baseline = qa_client.select_answer(true_question.text, paragraph_text, answers)
    if baseline != correct:
        return None  # not applicable: client fails even on the true question
    picked = qa_client.select_answer(generated_question, paragraph_text, answers)
    return picked == correct


# --- records, baseline harness, report ---


@dataclass(frozen=True)
class ReconstructionRecord:
    trial_key: tuple[str, ...]
    participant_id: str
    paragraph_key: tuple[str, str, str]
    generated: str
    true_question: Question
    source: str
    regime: str | None = None
    flagged: bool = False


def baseline_question_records(
    corpus: Corpus, trials: list[Trial] | None = None,
    regimes: dict[tuple, str] | None = None,
) -> list[ReconstructionRecord]:
    """Human incorrect-question baselines drawn from each trial's own set.

    Every trial yields one different-span record; trials whose true
    question shares the second span also yield one same-span record (a
    same-span sibling does not exist when the true question is the
    distinct-span one).
    """
    records = []
    for t in trials if trials is not None else corpus.trials:
        qs = corpus.question_sets[t.paragraph.key]
        others = [q for q in qs.questions if q.question_id != t.question.question_id]
        regime = (regimes or {}).get(t.key)
        diff = [q for q in others if q.critical_span != t.question.critical_span]
        same = [q for q in others if q.critical_span == t.question.critical_span]
        if diff:
            pick = min(diff, key=lambda q: q.type_index)
            records.append(ReconstructionRecord(
                t.key, t.participant_id, t.paragraph.key, pick.text,
                t.question, "human_diff_span", regime,
            ))
        if same:
            pick = min(same, key=lambda q: q.type_index)
            records.append(ReconstructionRecord(
                t.key, t.participant_id, t.paragraph.key, pick.text,
                t.question, "human_same_span", regime,
            ))
    return records


def compute_metric_rows(
    records: list[ReconstructionRecord],
    provider: EmbeddingProvider,
    paragraph_texts: dict[tuple[str, str, str], str],
    qa_client: QAClient | None = None,
    uiuc_client: CategorizationClient | None = None,
    cache_dir=None,
) -> pd.DataFrame:
    """Per-record metric table (the raw export for external model fitting)."""
    gen_labels = true_labels = None
    if uiuc_client is not None:
        gen_labels = uiuc_category([r.generated for r in records], uiuc_client, cache_dir)
        true_labels = uiuc_category(
            [r.true_question.text for r in records], uiuc_client, cache_dir
        )
    rows = []
    for i, r in enumerate(records):
        gen_word, _ = question_word_of(r.generated)
        true_word, _ = question_word_of(r.true_question.text)
        row = {
            "trial_key": "|".join(r.trial_key),
            "participant_id": r.participant_id,
            "paragraph_key": "|".join(r.paragraph_key),
            "source": r.source,
            "regime": r.regime or "",
            "generated": r.generated,
            "question_word_match": float(gen_word == true_word),
            "bleu": bleu(r.generated, r.true_question.text),
            "semantic_similarity": semantic_similarity(
                r.generated, r.true_question.text, provider
            ),
        }
        if gen_labels is not None:
            g, t = gen_labels[i], true_labels[i]
            row["uiuc_match"] = float(g == t) if g and t else float("nan")
        if qa_client is not None:
            v = qa_validity(
                r.generated, paragraph_texts[r.paragraph_key], r.true_question,
                qa_client,
            )
            row["qa_valid"] = float("nan") if v is None else float(v)
        rows.append(row)
    return pd.DataFrame(rows)


def reconstruction_report(
    metric_rows: pd.DataFrame,
    n_boot: int = 1000,
    seed: int = 0,
) -> pd.DataFrame:
    """Per source x regime means with cluster-bootstrap CIs.

    Empty cells are emitted with n=0 and NaN intervals.
    """
    metrics = [c for c in ("question_word_match", "uiuc_match", "bleu",
                           "semantic_similarity", "qa_valid")
               if c in metric_rows.columns]
    sources = sorted(metric_rows["source"].unique())
    regimes = sorted(metric_rows["regime"].unique())
    rows = []
    for source in sources:
        for regime in regimes + ["pooled"]:
            if regime == "pooled":
                cell = metric_rows[metric_rows["source"] == source]
            else:
                cell = metric_rows[
                    (metric_rows["source"] == source)
                    & (metric_rows["regime"] == regime)
                ]
            for metric in metrics:
                vals = cell[metric].to_numpy(dtype=float)
                ok = np.isfinite(vals)
                if ok.sum() == 0:
                    rows.append({"source": source, "regime": regime,
                                 "metric": metric, "n": 0,
                                 "mean": float("nan"),
                                 "ci_low": float("nan"), "ci_high": float("nan")})
                    continue
                lo, hi = cluster_bootstrap_ci(
                    cell["participant_id"].to_numpy()[ok],
                    cell["paragraph_key"].to_numpy()[ok],
                    vals[ok], n_boot=n_boot, seed=seed,
                )
                rows.append({"source": source, "regime": regime, "metric": metric,
                             "n": int(ok.sum()), "mean": float(vals[ok].mean()),
                             "ci_low": lo, "ci_high": hi})
    return pd.DataFrame(rows)


def load_generated_jsonl(path) -> list[dict]:
    """Read generated-question interchange records {trial_key, source, question}."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
