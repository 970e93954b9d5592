"""Synthetic score corpora with known ground truth.

Two generators back the validation loop without any real recordings:

  * `generate_model_corpus` draws a corpus directly from the hierarchical
    score model, so inference can be checked against the exact
    hyper-parameters that produced the data.

  * `generate_toy_asv_corpus` builds a miniature verification pipeline:
    speaker identities are isotropic Gaussians in an embedding space,
    utterances are noisy observations of the identity, and the score of an
    utterance pair is a distance-based similarity.  This produces both a
    non-target corpus and labelled target/non-target scores for threshold
    calibration, with approximately Gaussian per-pair score distributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Hyperparameters, sample_target
from .score_data import ImpostorGroup, LabeledScoreSet, TargetGroup, TrialCorpus
from .streams import RngStream


@dataclass(frozen=True)
class SyntheticSpec:
    """Counts and ground-truth parameters for a model-generated corpus."""

    theta: Hyperparameters
    t_targets: int
    n_impostors_per_target: int
    l_scores_per_pair: int
    seed: int

    def __post_init__(self):
        for name in ("t_targets", "n_impostors_per_target", "l_scores_per_pair"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass(frozen=True)
class ToyAsvSpec:
    """Embedding-space pipeline parameters for the toy verification system."""

    embedding_dim: int
    speaker_spread: float
    utterance_noise: float
    n_speakers: int
    n_utts_per_speaker: int
    seed: int

    def __post_init__(self):
        if self.embedding_dim < 1 or self.n_speakers < 1 or self.n_utts_per_speaker < 1:
            raise ValueError("dimensions and counts must be >= 1")
        if not (self.speaker_spread > 0 and self.utterance_noise > 0):
            raise ValueError("spread parameters must be positive")


def _target_id(i: int) -> str:
    return f"t{i + 1:04d}"


def _impostor_id(i: int, j: int) -> str:
    return f"i{i + 1:04d}_{j + 1:04d}"


def generate_model_corpus(spec: SyntheticSpec) -> TrialCorpus:
    """Sample a corpus from the hierarchical model, one stream per target.

    Per target the draw order is (m, lam, sigma_sq), then all pair means,
    then all scores, so corpora are reproducible and per-target generation
    is order-independent.
    """
    n, l = spec.n_impostors_per_target, spec.l_scores_per_pair
    root = RngStream(spec.seed)
    targets = []
    for i in range(spec.t_targets):
        g = root.child(i).generator()
        draw = sample_target(spec.theta, g)
        mus = g.normal(draw.m, math.sqrt(draw.sigma_sq / draw.lam), size=n)
        scores = g.normal(mus[:, None], math.sqrt(draw.sigma_sq), size=(n, l))
        impostors = tuple(
            ImpostorGroup(impostor_id=_impostor_id(i, j), scores=scores[j]) for j in range(n)
        )
        targets.append(TargetGroup(target_id=_target_id(i), impostors=impostors))
    return TrialCorpus(targets=tuple(targets))


def generate_toy_asv_corpus(spec: ToyAsvSpec) -> tuple[TrialCorpus, LabeledScoreSet]:
    """Generate non-target trials plus labelled scores from the toy pipeline.

    Scores are 1 - ||x_e - x_t||^2 / (2 d): a monotone similarity that
    equals the constant 1 at zero distance.  Every speaker serves as a
    target with all other speakers as impostors; target trials take every
    unordered pair of a speaker's own utterances.
    """
    if spec.n_utts_per_speaker < 2:
        raise ValueError("need at least 2 utterances per speaker to form target trials")
    if spec.n_speakers < 2:
        raise ValueError("need at least 2 speakers to form non-target trials")
    d, k, u = spec.embedding_dim, spec.n_speakers, spec.n_utts_per_speaker
    root = RngStream(spec.seed)
    embeddings = np.empty((k, u, d))
    for s in range(k):
        g = root.child(s).generator()
        identity = g.normal(0.0, spec.speaker_spread, size=d)
        embeddings[s] = identity + g.normal(0.0, spec.utterance_noise, size=(u, d))

    flat = embeddings.reshape(k * u, d)
    sq_norm = np.einsum("ij,ij->i", flat, flat)
    gram = flat @ flat.T
    dist_sq = np.maximum(sq_norm[:, None] + sq_norm[None, :] - 2.0 * gram, 0.0)
    sim = 1.0 - dist_sq / (2.0 * d)

    speaker_ids = [f"s{s + 1:04d}" for s in range(k)]
    targets = []
    nontarget_scores = []
    for i in range(k):
        impostors = []
        for j in range(k):
            if j == i:
                continue
            block = sim[i * u : (i + 1) * u, j * u : (j + 1) * u].reshape(-1)
            impostors.append(ImpostorGroup(impostor_id=speaker_ids[j], scores=block))
            if j > i:
                nontarget_scores.append(block)
        targets.append(TargetGroup(target_id=speaker_ids[i], impostors=tuple(impostors)))

    upper = np.triu_indices(u, k=1)
    target_scores = [sim[i * u : (i + 1) * u, i * u : (i + 1) * u][upper] for i in range(k)]
    labeled = LabeledScoreSet(
        target_scores=np.concatenate(target_scores),
        nontarget_scores=np.concatenate(nontarget_scores),
    )
    return TrialCorpus(targets=tuple(targets)), labeled
