"""Log-likelihood question selection through a generative-model client.

Clients wrap hosted or local generative models. For selection, a client
must expose the log-likelihood it assigns to a candidate question given
the reconstruction prompt; clients that cannot (most hosted APIs) declare
themselves unsupported.
"""

from __future__ import annotations

from ..codec import PromptBundle, build_prompt
from ..corpus.types import Question, QuestionSet, Trial


class UnsupportedClientError(RuntimeError):
    """The client cannot expose candidate log-likelihoods."""


class GenerativeClient:
    """Contract for reconstruction and selection clients."""

    name = "abstract"

    def generate(self, bundle: PromptBundle) -> str:
        raise NotImplementedError

    def candidate_loglik(self, bundle: PromptBundle, candidate: str) -> float:
        raise UnsupportedClientError(
            f"client {self.name!r} does not expose candidate log-likelihoods"
        )


def generative_loglik_select(
    client: GenerativeClient,
    trial: Trial,
    question_set: QuestionSet,
    fmt: str = "fixation_level",
    kind: str = "main",
) -> tuple[Question, dict[int, float]]:
    """Pick the candidate with the highest client log-likelihood.

    Ties break toward the lowest type index. Raises
    :class:`UnsupportedClientError` when the client cannot provide
    log-likelihoods.
    """
    bundle = build_prompt(trial, kind, fmt)
    logliks: dict[int, float] = {}
    for q in question_set.questions:
        logliks[q.type_index] = float(client.candidate_loglik(bundle, q.text))
    best = max(sorted(logliks), key=lambda t: (logliks[t], -t))
    return question_set.by_type(best), logliks
