"""Textual scanpath encodings and prompt construction for generative decoding.

Three scanpath text formats are supported:

* ``fixation_level``: one tuple per on-text fixation:
  ``[word index, "word", duration ms, direction of next saccade]``; the
  trial's last on-text fixation has no outgoing saccade and is emitted as
  a 3-tuple.
* ``word_level``: one tuple per fixated word in paragraph order:
  ``[word index, "word", total duration ms, in_fwd, in_bwd, out_fwd, out_bwd]``.
* ``combined``: the fixation list followed by the word list.

Durations are rounded half-up to integers. Off-text fixations are dropped
from the encodings; saccade directions are computed between consecutive
on-text fixations. Every encoding parses back to its structured records.

Prompt templates are versioned, byte-stable resources; building the same
bundle twice yields identical bytes.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .corpus.types import (
    OFF_TEXT,
    REGIME_NEW_BOTH,
    REGIME_NEW_PARTICIPANT,
    REGIME_NEW_TEXT,
    Fixation,
    Trial,
    trial_key_str,
)

TEMPLATE_VERSION = "v1"

FORMATS = ("fixation_level", "word_level", "combined")
KINDS = ("main", "alternative", "text_only", "arbitrary", "fewshot")

BACKWARD, WITHIN, FORWARD = "backward", "within", "forward"


class CodecError(ValueError):
    pass


def saccade_direction(fix_a: Fixation, fix_b: Fixation) -> str:
    """Direction of the saccade from ``fix_a`` to ``fix_b`` in word order."""
    if not (fix_a.on_text and fix_b.on_text):
        raise CodecError("saccade direction requires two on-text fixations")
    if fix_b.word_index < fix_a.word_index:
        return BACKWARD
    if fix_b.word_index == fix_a.word_index:
        return WITHIN
    return FORWARD


@dataclass
class ScanpathText:
    format: str
    body: str
    trial_key: tuple[str, ...]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _quote(word: str) -> str:
    return '"' + word.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _fixation_entries(trial: Trial) -> list[list]:
    on = [f for f in trial.fixations if f.on_text]
    entries = []
    for i, f in enumerate(on):
        word = trial.paragraph.words[f.word_index].text
        row = [f.word_index, word, _round_half_up(f.duration_ms)]
        if i + 1 < len(on):
            row.append(saccade_direction(f, on[i + 1]))
        entries.append(row)
    return entries


def _word_entries(trial: Trial) -> list[list]:
    words = trial.word_indices
    durs = trial.durations
    on = words != OFF_TEXT
    words, durs = words[on], durs[on]
    n = trial.paragraph.n_words
    totals = np.bincount(words, weights=durs, minlength=n) if words.size else np.zeros(n)
    in_fwd, in_bwd, out_fwd, out_bwd = kernels.saccade_counts(words, n)
    entries = []
    for w in np.nonzero(np.bincount(words, minlength=n))[0] if words.size else []:
        entries.append([
            int(w), trial.paragraph.words[w].text, _round_half_up(totals[w]),
            int(in_fwd[w]), int(in_bwd[w]), int(out_fwd[w]), int(out_bwd[w]),
        ])
    return entries


def _render(entries: list[list]) -> str:
    parts = []
    for row in entries:
        items = []
        for j, v in enumerate(row):
            if j == 1:
                items.append(_quote(v))
            else:
                items.append(str(v))
        parts.append("[" + ", ".join(items) + "]")
    return "[" + ", ".join(parts) + "]"


def encode_scanpath(trial: Trial, fmt: str) -> ScanpathText:
    if fmt not in FORMATS:
        raise CodecError(f"unknown scanpath format {fmt!r}")
    if fmt == "fixation_level":
        body = _render(_fixation_entries(trial))
    elif fmt == "word_level":
        body = _render(_word_entries(trial))
    else:
        body = _render(_fixation_entries(trial)) + " " + _render(_word_entries(trial))
    return ScanpathText(format=fmt, body=body, trial_key=trial.key)


def _parse_list(body: str, pos: int) -> tuple[list, int]:
    if pos >= len(body) or body[pos] != "[":
        raise CodecError(f"expected '[' at offset {pos}")
    pos += 1
    out: list = []
    while True:
        while pos < len(body) and body[pos] in " \t\n":
            pos += 1
        if pos >= len(body):
            raise CodecError("unterminated list")
        c = body[pos]
        if c == "]":
            return out, pos + 1
        if c == ",":
            pos += 1
            continue
        if c == "[":
            item, pos = _parse_list(body, pos)
            out.append(item)
        elif c == '"':
            chars = []
            pos += 1
            while pos < len(body) and body[pos] != '"':
                if body[pos] == "\\" and pos + 1 < len(body):
                    pos += 1
                chars.append(body[pos])
                pos += 1
            if pos >= len(body):
                raise CodecError("unterminated string")
            out.append("".join(chars))
            pos += 1
        else:
            m = re.match(r"-?\d+|\w+", body[pos:])
            if not m:
                raise CodecError(f"bad token at offset {pos}: {body[pos:pos+10]!r}")
            tok = m.group(0)
            out.append(int(tok) if re.fullmatch(r"-?\d+", tok) else tok)
            pos += len(tok)


def parse_scanpath(body: str, fmt: str):
    """Parse an encoded scanpath body back to its record lists.

    Returns a list of records for the single-list formats, and a
    ``(fixation_records, word_records)`` pair for ``combined``.
    """
    if fmt not in FORMATS:
        raise CodecError(f"unknown scanpath format {fmt!r}")
    body = body.strip()
    first, pos = _parse_list(body, 0)
    if fmt == "combined":
        while pos < len(body) and body[pos] in " \t\n":
            pos += 1
        second, pos = _parse_list(body, pos)
        rest = body[pos:].strip()
        if rest:
            raise CodecError(f"trailing content after scanpath: {rest[:20]!r}")
        return first, second
    if body[pos:].strip():
        raise CodecError("trailing content after scanpath")
    return first


# --- prompt templates (byte-stable, versioned) ---

# trailing spaces after the first two sentences are part of the template
MAIN_TEMPLATE = (
    "You will be given data from an eye-tracking for reading experiment in "
    "which participants first read a question about a paragraph, then read "
    "the paragraph, and finally answered the question. \n"
    "\n"
    "Input: You will be provided with a paragraph and eye movements of a "
    "single participant over that paragraph. \n"
    "Output: Your task is to generate the question that was presented to the "
    "participant prior to reading the paragraph.\n"
    "\n"
    "Eye Movements Representation:\n"
    "You will receive the eye movements data for the paragraph formatted as "
    "{FORMAT}\n"
    "\n"
    "\n"
    "Instructions:\n"
    "Output only the original question presented to the reader, matching it "
    "as best as you can. DO NOT include any additional commentary or "
    "explanation.\n"
    "\n"
    "{PARAGRAPH}\n"
    "{SCANPATH}"
)

ALTERNATIVE_TEMPLATE = """Task Description:
Your task is to generate the exact original question a reader had in mind before reading a given paragraph. The input data is {SERIES} composed of {LEVELS} features.

Input Format:
You will receive the paragraph and eye movement data formatted as {FORMAT}

Expected Output:
Generate the exact original question provided to the reader, accurately inferred from the fixation patterns.

Instructions:
Your output must precisely match the original question presented to the reader.
Produce only the exact original question as your output.

{PARAGRAPH}
{SCANPATH}"""

TEXT_ONLY_TEMPLATE = """Task Description:
Your task is to generate a question a reader had in mind before reading a given paragraph. The input data is the paragraph itself in a standard textual format.

Input Format:
You will receive a paragraph in plain text format:

{PARAGRAPH}

Expected Output:
Generate the exact original question provided to the reader, accurately inferred from the paragraph content. Identify key themes, concepts, or statements in the paragraph that strongly indicate the question that initially motivated the reading.

Instructions:

Your output must precisely match the original question presented to the reader.

Focus specifically on central concepts, themes, or statements within the paragraph.

Produce only the exact original question as your output."""

FORMAT_DESCRIPTIONS = {
    "fixation_level": (
        "a list of fixation-level features: [fixated word index, fixated word, "
        "fixation duration in ms, direction of next saccade (backward to earlier "
        "word / within word / forward to later word)]"
    ),
    "word_level": (
        "a list of word-level features: [word index, word, total fixation "
        "duration in ms, incoming forward saccades (from earlier word), incoming "
        "backward saccades (from later word), outgoing forward saccades (to "
        "later word), outgoing backward saccades (to earlier word)]"
    ),
    "combined": (
        "two lists of word-level and fixation-level features: [fixated word "
        "index, fixated word, fixation duration in ms, direction of next saccade "
        "(backward / within / forward)] [word index, word, total fixation "
        "duration in ms, incoming forward saccades, incoming backward saccades, "
        "outgoing forward saccades, outgoing backward saccades]"
    ),
}

_SERIES = {
    "fixation_level": ("a time series", "fixation-level"),
    "word_level": ("a time series", "word-level"),
    "combined": ("two time series", "word-level and fixation-level"),
}

FEWSHOT_EXAMPLE_TEMPLATE = """<Example>
    <INPUT>
        Paragraph:
        {PARAGRAPH}
        Fixations_data:
        {SCANPATH}
    </INPUT>

    <OUTPUT>
        {QUESTION}
    </OUTPUT>
</Example>"""

FEWSHOT_TEST_TEMPLATE = """    Paragraph:
    {PARAGRAPH}
    Fixations_data:
    {SCANPATH}"""

FEWSHOT_N_EXAMPLES = 10


@dataclass
class PromptBundle:
    kind: str
    format: str | None
    prompt: str
    paragraph_text: str
    trial_key: tuple[str, ...]
    scanpath: ScanpathText | None = None
    examples: list[tuple[str, str, str]] = field(default_factory=list)
    target: str | None = None
    template_version: str = TEMPLATE_VERSION


def build_prompt(
    trial: Trial, kind: str, fmt: str = "fixation_level",
    include_target: bool = False,
) -> PromptBundle:
    """Build a single-trial prompt bundle of the given kind.

    ``text_only`` and ``arbitrary`` bundles carry no scanpath and ignore
    ``fmt``; ``fewshot`` bundles are built by :func:`build_fewshot_prompt`.
    """
    if kind not in KINDS:
        raise CodecError(f"unknown prompt kind {kind!r}")
    if kind == "fewshot":
        raise CodecError("use build_fewshot_prompt for few-shot bundles")
    paragraph_text = trial.paragraph.text
    if not paragraph_text.strip():
        raise CodecError("empty stimulus paragraph")
    target = trial.question.text if include_target else None

    if kind in ("text_only", "arbitrary"):
        prompt = TEXT_ONLY_TEMPLATE.replace("{PARAGRAPH}", paragraph_text)
        return PromptBundle(kind, None, prompt, paragraph_text, trial.key,
                            target=target)

    scanpath = encode_scanpath(trial, fmt)
    if kind == "main":
        prompt = (
            MAIN_TEMPLATE
            .replace("{FORMAT}", FORMAT_DESCRIPTIONS[fmt])
            .replace("{PARAGRAPH}", paragraph_text)
            .replace("{SCANPATH}", scanpath.body)
        )
    else:
        series, levels = _SERIES[fmt]
        prompt = (
            ALTERNATIVE_TEMPLATE
            .replace("{SERIES}", series)
            .replace("{LEVELS}", levels)
            .replace("{FORMAT}", FORMAT_DESCRIPTIONS[fmt])
            .replace("{PARAGRAPH}", paragraph_text)
            .replace("{SCANPATH}", scanpath.body)
        )
    return PromptBundle(kind, fmt, prompt, paragraph_text, trial.key,
                        scanpath=scanpath, target=target)


def eligible_fewshot_pool(trial: Trial, regime: str, pool: list[Trial]) -> list[Trial]:
    """Filter a candidate pool by the regime's leakage rule."""
    if regime == REGIME_NEW_TEXT:
        return [t for t in pool
                if t.participant_id == trial.participant_id
                and t.paragraph.article_id != trial.paragraph.article_id]
    if regime == REGIME_NEW_PARTICIPANT:
        return [t for t in pool
                if t.paragraph.key == trial.paragraph.key
                and t.participant_id != trial.participant_id]
    if regime == REGIME_NEW_BOTH:
        return [t for t in pool
                if t.participant_id != trial.participant_id
                and t.paragraph.article_id != trial.paragraph.article_id]
    raise CodecError(f"unknown regime {regime!r}")


def build_fewshot_prompt(
    trial: Trial, regime: str, pool: list[Trial], seed: int,
    fmt: str = "fixation_level",
) -> PromptBundle:
    """Few-shot bundle: ten seeded examples obeying the regime leakage rule.

    The example outputs are the pool trials' true questions; the pool must
    not contain evaluation targets.
    """
    eligible = eligible_fewshot_pool(trial, regime, pool)
    if len(eligible) < FEWSHOT_N_EXAMPLES:
        raise CodecError(
            f"few-shot for regime {regime}: need {FEWSHOT_N_EXAMPLES} eligible "
            f"examples, found {len(eligible)} (short by "
            f"{FEWSHOT_N_EXAMPLES - len(eligible)})"
        )
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(eligible), size=FEWSHOT_N_EXAMPLES, replace=False)
    chosen = [eligible[i] for i in picks]

    system = (
        MAIN_TEMPLATE
        .replace("{FORMAT}", FORMAT_DESCRIPTIONS[fmt])
        .replace("\n{PARAGRAPH}\n{SCANPATH}", "")
    )
    blocks = [system, ""]
    examples = []
    for ex in chosen:
        sp = encode_scanpath(ex, fmt)
        examples.append((trial_key_str(ex.key), ex.paragraph.text, ex.question.text))
        blocks.append(
            FEWSHOT_EXAMPLE_TEMPLATE
            .replace("{PARAGRAPH}", ex.paragraph.text)
            .replace("{SCANPATH}", sp.body)
            .replace("{QUESTION}", ex.question.text)
        )
    scanpath = encode_scanpath(trial, fmt)
    blocks.append("")
    blocks.append(
        FEWSHOT_TEST_TEMPLATE
        .replace("{PARAGRAPH}", trial.paragraph.text)
        .replace("{SCANPATH}", scanpath.body)
    )
    return PromptBundle(
        kind="fewshot", format=fmt, prompt="\n".join(blocks),
        paragraph_text=trial.paragraph.text, trial_key=trial.key,
        scanpath=scanpath, examples=examples,
    )


_LABEL_PREFIX = re.compile(r"^(answer|question|output|response|q|a)\s*:\s*", re.I)
_FENCE = re.compile(r"^```[a-zA-Z]*\s*$")


def parse_generated_question(raw: str) -> tuple[str, bool]:
    """Normalize a model's raw output to a bare question string.

    Strips fencing, surrounding quotes, and label prefixes; prefers the
    first line ending in '?'. Returns (question, flagged) where ``flagged``
    marks empty input.
    """
    if raw is None or not raw.strip():
        return "", True
    lines = [ln for ln in raw.strip().splitlines() if not _FENCE.match(ln)]

    def clean(line: str) -> str:
        line = line.strip().strip('"“”‘’\'`')
        return _LABEL_PREFIX.sub("", line).strip()

    for line in lines:
        c = clean(line)
        if c.endswith("?"):
            return c, False
    whole = clean(" ".join(ln.strip() for ln in lines if ln.strip()))
    return whole, whole == ""


def bundle_to_json(bundle: PromptBundle) -> str:
    rec = {
        "trial_key": trial_key_str(bundle.trial_key),
        "kind": bundle.kind,
        "format": bundle.format,
        "prompt": bundle.prompt,
        "template_version": bundle.template_version,
    }
    if bundle.scanpath is not None:
        # scanpaths are emitted in full; clients decide on truncation, so
        # the record carries the length for their budgeting
        rec["scanpath_chars"] = len(bundle.scanpath.body)
    if bundle.target is not None:
        rec["target"] = bundle.target
    return json.dumps(rec, ensure_ascii=False)


def write_bundles_jsonl(bundles: list[PromptBundle], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for b in bundles:
            fh.write(bundle_to_json(b) + "\n")
