"""End-to-end orchestration: corpus generation, training, extraction, evaluation.

Documents are split 60/20/20 (network-train / fusion-train / test) at the
document level. The network trains on consistency-thresholded labels from the
store; the fusion classifier then trains on the held-out split scored by the
trained network, so it never sees the network's training artifacts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import encoder as encoder_mod
from . import evaluate as evaluate_mod
from . import fusion as fusion_mod
from . import tsdb as tsdb_mod
from .network import (
    TrainConfig,
    baseline_forward,
    baseline_train,
    init_network,
    load_baseline,
    load_network,
    network_score,
    save_baseline,
    save_network,
    train,
)
from .parser import (
    ConstraintSet,
    Document,
    ExtractionCandidate,
    annotate_entities,
    candidate_to_json,
    generate_candidates,
)

_TAG_SPLIT = 2
MAX_TOKEN_SPAN = 40  # longest alias + value token the corpus can produce


@dataclass
class PipelineConfig:
    # corpus
    num_documents: int = 5000
    distractor_rate: float = 0.5
    db_noise_rate: float = 0.05
    ambiguity_rate: float = 0.3
    value_jitter: float = 0.2
    seed: int = 42
    # artifact paths
    workdir: str = "artifacts"
    documents_path: str = ""
    store_path: str = ""
    symbols_path: str = ""
    constraints_path: str = ""
    checkpoint_path: str = ""
    baseline_checkpoint_path: str = ""
    fusion_path: str = ""
    extractions_path: str = ""
    report_path: str = ""
    encoded_path: str = ""  # optional dump of the encoded training set
    # parser / encoder
    max_pair_distance: int = 160
    section_width: int = 200
    global_dim: int = 512
    global_hash_seed: int = 2016
    baseline_ngram_dim: int = 1024
    baseline_hash_seed: int = 77
    # consistency
    tau: float = tsdb_mod.DEFAULT_TAU
    # network
    hidden_size: int = 64
    global_fc_dim: int = 32
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 6
    train_seed: int = 42
    clip_norm: float = 5.0
    validation_fraction: float = 0.1
    init_scale: float = 0.08
    train_baseline: bool = True
    baseline_hidden: int = 64
    # fusion
    fusion_learning_rate: float = fusion_mod.DEFAULT_FUSION_LEARNING_RATE
    fusion_epochs: int = fusion_mod.DEFAULT_FUSION_EPOCHS
    fusion_l2: float = fusion_mod.DEFAULT_FUSION_L2
    threshold: float = fusion_mod.DEFAULT_THRESHOLD
    # document-level split fractions
    split_train: float = 0.6
    split_fusion: float = 0.2
    split_test: float = 0.2

    def __post_init__(self):
        root = Path(self.workdir)
        defaults = {
            "documents_path": root / "documents.jsonl",
            "store_path": root / "store.csv",
            "symbols_path": root / "symbols.json",
            "constraints_path": root / "constraints.json",
            "checkpoint_path": root / "network.ckpt",
            "baseline_checkpoint_path": root / "baseline.ckpt",
            "fusion_path": root / "fusion.json",
            "extractions_path": root / "extractions.jsonl",
            "report_path": root / "report.json",
        }
        for name, value in defaults.items():
            if not getattr(self, name):
                setattr(self, name, str(value))

    def validate(self) -> None:
        self.corpus_config().validate()
        self.train_config().validate()
        splits = (self.split_train, self.split_fusion, self.split_test)
        if any(f <= 0 for f in splits) or abs(sum(splits) - 1.0) > 1e-9:
            raise ValueError("split fractions must be positive and sum to 1")
        if self.section_width < self.max_pair_distance + MAX_TOKEN_SPAN:
            raise ValueError(
                f"section_width must be >= max_pair_distance + {MAX_TOKEN_SPAN} "
                "so every candidate fits its section")
        if self.global_dim & (self.global_dim - 1):
            raise ValueError("global_dim must be a power of two")
        if self.baseline_ngram_dim & (self.baseline_ngram_dim - 1):
            raise ValueError("baseline_ngram_dim must be a power of two")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")

    def corpus_config(self) -> corpus_mod.CorpusConfig:
        return corpus_mod.CorpusConfig(
            num_documents=self.num_documents,
            distractor_rate=self.distractor_rate,
            db_noise_rate=self.db_noise_rate,
            ambiguity_rate=self.ambiguity_rate,
            value_jitter=self.value_jitter,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.train_seed,
            clip_norm=self.clip_norm,
            validation_fraction=self.validation_fraction,
            init_scale=self.init_scale,
        )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def load_config(path: str | Path, seed_override: int | None = None) -> PipelineConfig:
    """Parse a flat ``key = value`` config file (``#`` starts a comment)."""
    values: dict[str, object] = {}
    types = {f.name: type(f.default) for f in fields(PipelineConfig)}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in types:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        kind = types[key]
        if kind is bool:
            if raw.lower() not in ("true", "false"):
                raise ValueError(f"{path}:{lineno}: boolean key {key!r} needs true/false")
            values[key] = raw.lower() == "true"
        elif kind is int:
            values[key] = int(raw)
        elif kind is float:
            values[key] = float(raw)
        else:
            values[key] = raw
    config = PipelineConfig(**values)
    if seed_override is not None:
        config.seed = seed_override
        config.train_seed = seed_override
    config.validate()
    return config


def split_documents(
    doc_ids: list[str], fractions: tuple[float, float, float], seed: int
) -> dict[str, str]:
    """Deterministic document-level split; every id lands in exactly one part."""
    rng = np.random.default_rng([seed, _TAG_SPLIT])
    ordered = sorted(doc_ids)
    perm = rng.permutation(len(ordered))
    n = len(ordered)
    n_train = int(fractions[0] * n)
    n_fusion = int(fractions[1] * n)
    assignment: dict[str, str] = {}
    for rank, idx in enumerate(perm):
        if rank < n_train:
            part = "train"
        elif rank < n_train + n_fusion:
            part = "fusion"
        else:
            part = "test"
        assignment[ordered[idx]] = part
    return assignment


@dataclass
class ParsedDocument:
    document: Document
    entities: list
    candidates: list[ExtractionCandidate]


def parse_document(doc, symbols, constraints: ConstraintSet,
                   section_width: int) -> ParsedDocument:
    document = doc if isinstance(doc, Document) else Document(
        doc_id=doc.doc_id, text=doc.text, timestamp=doc.timestamp)
    entities = annotate_entities(document, symbols)
    candidates = generate_candidates(document, entities, constraints, section_width)
    return ParsedDocument(document=document, entities=entities, candidates=candidates)


def score_candidate(candidate: ExtractionCandidate,
                    store: tsdb_mod.TimeSeriesStore) -> tsdb_mod.ConsistencyScore | None:
    try:
        return tsdb_mod.consistency_score(candidate, store)
    except (tsdb_mod.UnknownSymbol, tsdb_mod.NoHistory):
        return None


def cmd_generate(config: PipelineConfig) -> dict:
    """Write the corpus artifacts and return the generation summary."""
    config.validate()
    Path(config.workdir).mkdir(parents=True, exist_ok=True)
    documents, store, symbols, ledger = corpus_mod.generate_corpus(config.corpus_config())
    corpus_mod.save_documents(documents, config.documents_path)
    store.save_csv(config.store_path)
    symbols.save_json(config.symbols_path)
    ConstraintSet.from_symbol_table(symbols, config.max_pair_distance).save_json(
        config.constraints_path)
    stats = corpus_mod.corpus_stats(documents, store, ledger)
    return {
        "documents": stats.num_documents,
        "relations_by_kind": stats.relations_by_kind,
        "ambiguous_documents": stats.ambiguous_documents,
        "distractor_documents": stats.distractor_documents,
        "store_points": stats.total_points,
        "perturbed_points": stats.perturbed_points,
        "noise_fraction": stats.noise_fraction,
    }


def _load_artifacts(config: PipelineConfig):
    documents = corpus_mod.load_documents(config.documents_path)
    store = tsdb_mod.TimeSeriesStore.load_csv(config.store_path)
    symbols = corpus_mod.SymbolTable.load_json(config.symbols_path)
    constraints = ConstraintSet.load_json(config.constraints_path, config.max_pair_distance)
    return documents, store, symbols, constraints


def _require_files(config: PipelineConfig, names: list[str]) -> None:
    for name in names:
        path = getattr(config, name)
        if not Path(path).exists():
            raise FileNotFoundError(f"{name} not found at {path}")


def _encode_parsed(parsed: ParsedDocument, candidate, config: PipelineConfig,
                   g: np.ndarray, label: int | None = None):
    return encoder_mod.encode_candidate(
        parsed.document, parsed.entities, candidate,
        global_dim=config.global_dim, global_hash_seed=config.global_hash_seed,
        label=label, g=g)


def cmd_train(config: PipelineConfig) -> dict:
    """Train the network on the train split and fusion on the held-out split."""
    config.validate()
    _require_files(config, ["documents_path", "store_path", "symbols_path",
                            "constraints_path"])
    documents, store, symbols, constraints = _load_artifacts(config)
    assignment = split_documents(
        [d.doc_id for d in documents],
        (config.split_train, config.split_fusion, config.split_test), config.seed)

    train_docs = [d for d in documents if assignment[d.doc_id] == "train"]
    fusion_docs = [d for d in documents if assignment[d.doc_id] == "fusion"]

    encoded = []
    baseline_rows = []
    baseline_labels = []
    excluded = 0
    for doc in train_docs:
        parsed = parse_document(doc, symbols, constraints, config.section_width)
        if not parsed.candidates:
            continue
        g = encoder_mod.encode_global(parsed.document, config.global_dim,
                                      config.global_hash_seed)
        for candidate in parsed.candidates:
            score = score_candidate(candidate, store)
            if score is None:
                excluded += 1
                continue
            label = tsdb_mod.label_from_score(score, config.tau).y
            encoded.append(_encode_parsed(parsed, candidate, config, g, label))
            if config.train_baseline:
                ngrams = encoder_mod.encode_baseline_ngrams(
                    parsed.document, parsed.entities, candidate,
                    config.baseline_ngram_dim, config.baseline_hash_seed)
                baseline_rows.append(np.concatenate([g, ngrams]).astype(np.float64))
                baseline_labels.append(label)

    params = init_network(encoder_mod.CHAR_DIM, config.global_dim,
                          config.hidden_size, config.global_fc_dim,
                          seed=config.train_seed, init_scale=config.init_scale)
    trained, history = train(params, encoded, config.train_config())

    label_counts = {
        "positive": sum(1 for e in encoded if e.label == 1),
        "negative": sum(1 for e in encoded if e.label == 0),
        "excluded_lookup_errors": excluded,
    }
    manifest = {
        "config": config.to_dict(),
        "history": [
            {"epoch": h.epoch, "train_loss": h.train_loss, "val_loss": h.val_loss}
            for h in history
        ],
        "label_counts": label_counts,
    }
    Path(config.workdir).mkdir(parents=True, exist_ok=True)
    save_network(config.checkpoint_path, trained, manifest)

    baseline_history = []
    if config.train_baseline:
        features = np.stack(baseline_rows)
        baseline_params, baseline_history = baseline_train(
            features, np.array(baseline_labels, dtype=np.float64),
            config.train_config(), config.baseline_hidden)
        save_baseline(config.baseline_checkpoint_path, baseline_params, {
            "config": config.to_dict(),
            "history": [
                {"epoch": h.epoch, "train_loss": h.train_loss, "val_loss": h.val_loss}
                for h in baseline_history
            ],
        })

    # fusion training on the held-out split, scored by the trained network
    fusion_rows = []
    fusion_labels = []
    fusion_excluded = 0
    for doc in fusion_docs:
        parsed = parse_document(doc, symbols, constraints, config.section_width)
        if not parsed.candidates:
            continue
        g = encoder_mod.encode_global(parsed.document, config.global_dim,
                                      config.global_hash_seed)
        encs = [_encode_parsed(parsed, c, config, g) for c in parsed.candidates]
        scores = network_score(trained, encs, config.batch_size)
        for candidate, net in zip(parsed.candidates, scores):
            score = score_candidate(candidate, store)
            if score is None:
                fusion_excluded += 1
                continue
            fusion_rows.append(fusion_mod.raw_features(
                candidate, score, net.s_tilde, config.max_pair_distance))
            fusion_labels.append(tsdb_mod.label_from_score(score, config.tau).y)

    fusion_params = fusion_mod.train_fusion(
        fusion_rows, fusion_labels, config.fusion_learning_rate,
        config.fusion_epochs, config.fusion_l2, config.threshold)
    fusion_params.save_json(config.fusion_path)

    if config.encoded_path:
        encoder_mod.save_encoded(config.encoded_path, encoded,
                                 config.global_dim, config.global_hash_seed)

    return {
        "train_candidates": len(encoded),
        "label_counts": label_counts,
        "final_train_loss": history[-1].train_loss,
        "final_val_loss": history[-1].val_loss,
        "baseline_final_train_loss": (
            baseline_history[-1].train_loss if baseline_history else None),
        "fusion_rows": len(fusion_rows),
        "fusion_excluded_lookup_errors": fusion_excluded,
        "fusion_final_loss": fusion_params.final_loss,
    }


def run_extraction(
    config: PipelineConfig,
    documents,
    store: tsdb_mod.TimeSeriesStore,
    symbols,
    constraints: ConstraintSet,
    network_params,
    fusion_params: fusion_mod.FusionParams,
) -> list[dict]:
    """Parse, score, and classify; returns JSON rows for accepted candidates."""
    accepted: list[dict] = []
    for doc in documents:
        parsed = parse_document(doc, symbols, constraints, config.section_width)
        if not parsed.candidates:
            continue
        g = encoder_mod.encode_global(parsed.document, config.global_dim,
                                      config.global_hash_seed)
        encs = [_encode_parsed(parsed, c, config, g) for c in parsed.candidates]
        scores = network_score(network_params, encs, config.batch_size)
        for candidate, net in zip(parsed.candidates, scores):
            score = score_candidate(candidate, store)
            feats = fusion_mod.fuse_features(candidate, score, net.s_tilde,
                                             fusion_params, config.max_pair_distance)
            decision = fusion_mod.classify(fusion_params, feats)
            if decision.accept:
                accepted.append(candidate_to_json(
                    candidate,
                    s=None if score is None else score.s,
                    y_tilde=net.y_tilde,
                    s_tilde=net.s_tilde,
                    p=decision.p,
                ))
    return accepted


def cmd_extract(config: PipelineConfig, documents_path: str | None = None) -> dict:
    config.validate()
    _require_files(config, ["store_path", "symbols_path", "constraints_path",
                            "checkpoint_path", "fusion_path"])
    source = documents_path or config.documents_path
    if not Path(source).exists():
        raise FileNotFoundError(f"documents not found at {source}")
    documents = corpus_mod.load_documents(source)
    store = tsdb_mod.TimeSeriesStore.load_csv(config.store_path)
    symbols = corpus_mod.SymbolTable.load_json(config.symbols_path)
    constraints = ConstraintSet.load_json(config.constraints_path, config.max_pair_distance)
    network_params = load_network(config.checkpoint_path)
    fusion_params = fusion_mod.FusionParams.load_json(config.fusion_path)
    rows = run_extraction(config, documents, store, symbols, constraints,
                          network_params, fusion_params)
    with open(config.extractions_path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return {"documents": len(documents), "accepted": len(rows)}


def cmd_evaluate(config: PipelineConfig) -> dict:
    """Evaluate baseline and full pipeline on the test split; write the report."""
    config.validate()
    _require_files(config, ["documents_path", "store_path", "symbols_path",
                            "constraints_path", "checkpoint_path", "fusion_path"])
    documents, store, symbols, constraints = _load_artifacts(config)
    assignment = split_documents(
        [d.doc_id for d in documents],
        (config.split_train, config.split_fusion, config.split_test), config.seed)
    test_docs = [d for d in documents if assignment[d.doc_id] == "test"]

    network_params = load_network(config.checkpoint_path)
    fusion_params = fusion_mod.FusionParams.load_json(config.fusion_path)
    baseline_params = None
    if config.train_baseline and Path(config.baseline_checkpoint_path).exists():
        baseline_params = load_baseline(config.baseline_checkpoint_path)

    baseline_accepted: list[ExtractionCandidate] = []
    pipeline_accepted: list[ExtractionCandidate] = []
    truth_labels: list[int] = []
    net_scores: list[float] = []
    fc_scores: list[float] = []

    for doc in test_docs:
        parsed = parse_document(doc, symbols, constraints, config.section_width)
        if not parsed.candidates:
            continue
        g = encoder_mod.encode_global(parsed.document, config.global_dim,
                                      config.global_hash_seed)
        encs = [_encode_parsed(parsed, c, config, g) for c in parsed.candidates]
        scores = network_score(network_params, encs, config.batch_size)
        for candidate, net in zip(parsed.candidates, scores):
            score = score_candidate(candidate, store)
            if score is not None and score.s >= config.tau:
                baseline_accepted.append(candidate)
            feats = fusion_mod.fuse_features(candidate, score, net.s_tilde,
                                             fusion_params, config.max_pair_distance)
            if fusion_mod.classify(fusion_params, feats).accept:
                pipeline_accepted.append(candidate)
            truth_labels.append(1 if evaluate_mod.is_correct_extraction(candidate, doc) else 0)
            net_scores.append(net.y_tilde)
        if baseline_params is not None:
            features = np.stack([
                np.concatenate([
                    g,
                    encoder_mod.encode_baseline_ngrams(
                        parsed.document, parsed.entities, candidate,
                        config.baseline_ngram_dim, config.baseline_hash_seed),
                ]).astype(np.float64)
                for candidate in parsed.candidates
            ])
            fc_scores.extend(float(v) for v in baseline_forward(baseline_params, features))

    baseline_counts = evaluate_mod.match_extractions(baseline_accepted, test_docs)
    pipeline_counts = evaluate_mod.match_extractions(pipeline_accepted, test_docs)

    metadata: dict = {
        "test_documents": len(test_docs),
        "test_candidates": len(truth_labels),
        "tau": config.tau,
        "threshold": config.threshold,
    }
    if truth_labels and 0 < sum(truth_labels) < len(truth_labels):
        metadata["auc_network"] = evaluate_mod.auc_score(net_scores, truth_labels)
        if fc_scores:
            metadata["auc_fc_baseline"] = evaluate_mod.auc_score(fc_scores, truth_labels)

    report = evaluate_mod.build_report(baseline_counts, pipeline_counts, metadata)
    Path(config.report_path).parent.mkdir(parents=True, exist_ok=True)
    Path(config.report_path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report
