"""Command-line pipeline orchestration.

Every run resolves one configuration (defaults, then config file, then
command-line flags, flags winning), derives all stage seeds from the
single configured seed, and writes a ``manifest.json`` next to its
outputs recording the resolved configuration, its hash, input digests
and library versions. No output file embeds a timestamp, so reruns with
identical inputs and seed are byte-identical.

Exit codes: 0 success, 1 usage, 2 configuration, 3 data, 4 internal.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import emrkg
from emrkg.corpus import (
    AnnotatedDocument,
    BioSentence,
    DatasetSplit,
    ValidationReport,
    from_bio,
    load_corpus_dir,
    read_bio_file,
    segment,
    split_dataset,
    to_bio,
    write_bio_file,
)
from emrkg.derm import (
    DermConfig,
    EntityDictionary,
    augment_epoch,
    read_dictionary_file,
    write_dictionary_file,
)
from emrkg.errors import ConfigError, DataError, EmrkgError
from emrkg.fusion import Alignment, align, build_index, fuse
from emrkg.graph import (
    KnowledgeGraph,
    add_patient_record,
    export_csv,
    export_cypher,
    load_graph,
    save_graph,
)
from emrkg.kb import kb_into_graph, load_kb
from emrkg.metrics import count_matches, precision_recall_f1, report_dict, report_table
from emrkg.schema import EntitySchema
from emrkg.tagger import TrainConfig, load_model, predict, save_model, train

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

ENTITIES_SCHEMA_TAG = "entities/1"

_TRAIN_KEYS = {
    "batch_size", "epochs", "learning_rate", "hidden", "d_emb",
    "derm_enabled", "gradient_clip", "momentum",
}
_DERM_KEYS = {"p_replace", "p_mask", "p_noop", "short_threshold", "mask_fraction", "mask_symbol"}
_TOP_KEYS = {
    "seed", "corpus_dir", "kb_file", "output_dir", "model_file", "max_len",
    "entity_types", "derm", "train", "fusion",
}
_FUSION_KEYS = {"threshold", "ngram_orders"}


def derive_seed(seed: int, stage: str) -> int:
    """Per-stage seed: first eight bytes of sha256 over ``seed:stage``.
    Stages stay independent and reproducible from the one configured seed."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2**32)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    output_dir: Path
    corpus_dir: Path | None = None
    kb_file: Path | None = None
    model_file: Path | None = None
    max_len: int = 50
    entity_types: tuple[str, ...] | None = None
    derm: DermConfig = field(default_factory=DermConfig)
    train_params: dict = field(default_factory=dict)
    threshold: float = 0.8
    ngram_orders: tuple[int, ...] = (1, 2)

    def schema(self) -> EntitySchema:
        if self.entity_types is None:
            return EntitySchema()
        return EntitySchema(tuple(self.entity_types))

    def resolved_model_file(self) -> Path:
        return self.model_file if self.model_file else self.output_dir / "model.bin"

    def require_corpus_dir(self) -> Path:
        if self.corpus_dir is None:
            raise ConfigError("corpus_dir is required (config key or --corpus-dir)")
        if not self.corpus_dir.is_dir():
            raise ConfigError(f"corpus_dir {self.corpus_dir} is not a directory")
        return self.corpus_dir

    def require_kb_file(self) -> Path:
        if self.kb_file is None:
            raise ConfigError("kb_file is required (config key or --kb-file)")
        if not self.kb_file.is_file():
            raise ConfigError(f"kb_file {self.kb_file} does not exist")
        return self.kb_file

    def train_config(self) -> TrainConfig:
        params = dict(self.train_params)
        try:
            return TrainConfig(seed=derive_seed(self.seed, "train"), derm=self.derm, **params)
        except TypeError as exc:
            raise ConfigError(f"bad train parameters: {exc}") from exc

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "corpus_dir": str(self.corpus_dir) if self.corpus_dir else None,
            "kb_file": str(self.kb_file) if self.kb_file else None,
            "model_file": str(self.resolved_model_file()),
            "max_len": self.max_len,
            "entity_types": list(self.entity_types) if self.entity_types else None,
            "derm": {
                "p_replace": self.derm.p_replace,
                "p_mask": self.derm.p_mask,
                "p_noop": self.derm.p_noop,
                "short_threshold": self.derm.short_threshold,
                "mask_fraction": self.derm.mask_fraction,
                "mask_symbol": self.derm.mask_symbol,
            },
            "train": dict(sorted(self.train_params.items())),
            "fusion": {"threshold": self.threshold, "ngram_orders": list(self.ngram_orders)},
        }


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def load_config(args: argparse.Namespace) -> PipelineConfig:
    """Merge defaults, config file and flags (flags win); validate keys."""
    raw: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path}: expected a JSON object")
        _check_keys(raw, _TOP_KEYS, "config")

    def pick(flag: str, key: str, default=None):
        value = getattr(args, flag, None)
        if value is not None:
            return value
        return raw.get(key, default)

    seed = pick("seed", "seed")
    if seed is None:
        raise ConfigError("seed is mandatory (config key 'seed' or --seed)")
    output_dir = pick("output_dir", "output_dir")
    if output_dir is None:
        raise ConfigError("output_dir is required (config key or --output-dir)")

    derm_raw = raw.get("derm", {})
    _check_keys(derm_raw, _DERM_KEYS, "derm")
    try:
        derm = DermConfig(**derm_raw)
    except TypeError as exc:
        raise ConfigError(f"bad derm parameters: {exc}") from exc

    train_raw = dict(raw.get("train", {}))
    _check_keys(train_raw, _TRAIN_KEYS, "train")

    fusion_raw = raw.get("fusion", {})
    _check_keys(fusion_raw, _FUSION_KEYS, "fusion")

    entity_types = raw.get("entity_types")
    corpus_dir = pick("corpus_dir", "corpus_dir")
    kb_file = pick("kb_file", "kb_file")
    model_file = pick("model_file", "model_file")

    try:
        return PipelineConfig(
            seed=int(seed),
            output_dir=Path(output_dir),
            corpus_dir=Path(corpus_dir) if corpus_dir else None,
            kb_file=Path(kb_file) if kb_file else None,
            model_file=Path(model_file) if model_file else None,
            max_len=int(pick("max_len", "max_len", 50)),
            entity_types=tuple(entity_types) if entity_types else None,
            derm=derm,
            train_params=train_raw,
            threshold=float(fusion_raw.get("threshold", 0.8)),
            ngram_orders=tuple(int(n) for n in fusion_raw.get("ngram_orders", (1, 2))),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad configuration value: {exc}") from exc


# -- manifest --------------------------------------------------------------


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(cfg: PipelineConfig, subcommand: str, inputs: list[Path]) -> Path:
    resolved = cfg.as_dict()
    manifest = {
        "subcommand": subcommand,
        "config": resolved,
        "config_sha256": hashlib.sha256(
            json.dumps(resolved, sort_keys=True, ensure_ascii=False).encode("utf-8")
        ).hexdigest(),
        "inputs": {str(p): _sha256_file(p) for p in sorted(set(inputs))},
        "versions": {
            "emrkg": emrkg.__version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    path = cfg.output_dir / "manifest.json"
    path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return path


def _write_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _corpus_inputs(corpus_dir: Path) -> list[Path]:
    return sorted(corpus_dir.glob("*.txt")) + sorted(corpus_dir.glob("*.ann"))


# -- stage implementations ---------------------------------------------


def run_convert(cfg: PipelineConfig) -> Path:
    """Standoff corpus to one BIO file plus a conversion report."""
    corpus_dir = cfg.require_corpus_dir()
    schema = cfg.schema()
    report = ValidationReport()
    docs = load_corpus_dir(corpus_dir, schema, report)
    sentences: list[BioSentence] = []
    for doc in docs:
        sentences.extend(to_bio(segment(doc, cfg.max_len)))
    bio_path = cfg.output_dir / "corpus.bio"
    write_bio_file(sentences, bio_path)
    _write_json(cfg.output_dir / "conversion_report.json", {
        "documents": len(docs),
        "sentences": len(sentences),
        "dropped_spans": [
            {"doc_id": doc_id, "span_id": span.id, "start": span.start,
             "end": span.end, "label": span.label, "reason": reason}
            for doc_id, span, reason in report.dropped
        ],
    })
    log.info("converted %d documents to %d sentences", len(docs), len(sentences))
    return bio_path


def run_split(cfg: PipelineConfig, bio_path: Path) -> dict[str, Path]:
    sentences = read_bio_file(bio_path)
    parts = split_dataset(sentences, derive_seed(cfg.seed, "split"))
    paths = {}
    for name, part in (("train", parts.train), ("validation", parts.validation), ("test", parts.test)):
        path = cfg.output_dir / f"{name}.bio"
        write_bio_file(list(part), path)
        paths[name] = path
    log.info(
        "split %d sentences into %d/%d/%d",
        len(sentences), len(parts.train), len(parts.validation), len(parts.test),
    )
    return paths


def _dictionary_for(cfg: PipelineConfig, train_sentences: list[BioSentence]) -> EntityDictionary:
    """Dictionary from training-set entity surfaces plus the KB disease and
    symptom catalogs (the two KB types that are also span types)."""
    by_type: dict[str, set[str]] = {}
    for sentence in train_sentences:
        for label, start, end in from_bio(sentence):
            by_type.setdefault(label, set()).add(sentence.chars[start:end])
    if cfg.kb_file is not None and cfg.kb_file.is_file():
        _, catalogs = load_kb(cfg.kb_file)
        by_type.setdefault("Disease", set()).update(catalogs.disease)
        by_type.setdefault("Symptom", set()).update(catalogs.symptom)
    return EntityDictionary({t: tuple(s) for t, s in by_type.items()})


def run_train(
    cfg: PipelineConfig,
    train_path: Path,
    validation_path: Path,
    dict_path: Path | None = None,
) -> Path:
    train_sentences = read_bio_file(train_path)
    validation_sentences = read_bio_file(validation_path)
    if dict_path is not None:
        dictionary = read_dictionary_file(dict_path)
    else:
        dictionary = _dictionary_for(cfg, train_sentences)
        write_dictionary_file(dictionary, cfg.output_dir / "dictionary.tsv")
    split = DatasetSplit(tuple(train_sentences), tuple(validation_sentences), ())
    result = train(split, dictionary, cfg.train_config(), cfg.schema())

    model_path = cfg.resolved_model_file()
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(result.model, model_path)
    log_lines = ["epoch,loss,precision,recall,f1"]
    log_lines += [
        f"{r.epoch},{r.loss:.10g},{r.precision:.10g},{r.recall:.10g},{r.f1:.10g}"
        for r in result.log
    ]
    (cfg.output_dir / "train_log.csv").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    _write_json(cfg.output_dir / "train_summary.json", {
        "best_epoch": result.best_epoch,
        "epochs": len(result.log),
        "best_f1": result.log[result.best_epoch - 1].f1,
        "final_loss": result.log[-1].loss,
    })
    log.info("trained %d epochs; best validation F1 %.4f at epoch %d",
             len(result.log), result.log[result.best_epoch - 1].f1, result.best_epoch)
    return model_path


def run_tag_corpus(cfg: PipelineConfig, model_path: Path) -> tuple[Path, Path]:
    """Tag every corpus document with the trained model; emit the predicted
    BIO file and a per-document extracted-entities file."""
    corpus_dir = cfg.require_corpus_dir()
    model = load_model(model_path)
    schema = cfg.schema()
    docs = load_corpus_dir(corpus_dir, schema)
    predicted_path = cfg.output_dir / "predicted.bio"
    entities_path = cfg.output_dir / "entities.jsonl"
    all_predicted: list[BioSentence] = []
    lines = [json.dumps({"schema": ENTITIES_SCHEMA_TAG})]
    for doc in docs:
        gold = to_bio(segment(doc, cfg.max_len))
        predicted = predict(model, gold)
        all_predicted.extend(predicted)
        entities = []
        for sentence in predicted:
            entities.extend(
                [label, sentence.chars[start:end]]
                for label, start, end in from_bio(sentence)
            )
        lines.append(json.dumps(
            {"doc_id": doc.doc_id, "entities": entities}, ensure_ascii=False
        ))
    write_bio_file(all_predicted, predicted_path)
    entities_path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    log.info("tagged %d documents", len(docs))
    return predicted_path, entities_path


def run_tag_text(cfg: PipelineConfig, model_path: Path, text_path: Path) -> Path:
    """Tag plain text, one sentence per line; wraps at max_len."""
    model = load_model(model_path)
    out_path = cfg.output_dir / "predicted.bio"
    sentences: list[BioSentence] = []
    text = Path(text_path).read_text(encoding="utf-8")
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        doc = AnnotatedDocument(doc_id=f"line{i + 1}", text=line, spans=[])
        sentences.extend(to_bio(segment(doc, cfg.max_len)))
    if not sentences:
        raise DataError(f"{text_path} contains no sentences")
    write_bio_file(predict(model, sentences), out_path)
    return out_path


def run_evaluate(cfg: PipelineConfig, model_path: Path, gold_path: Path) -> Path:
    model = load_model(model_path)
    gold = read_bio_file(gold_path)
    predicted = predict(model, gold)
    report = precision_recall_f1(count_matches(gold, predicted))
    _write_json(cfg.output_dir / "eval.json", {
        "dataset": str(gold_path),
        "sentences": len(gold),
        **report_dict(report),
    })
    (cfg.output_dir / "eval.txt").write_text(report_table(report) + "\n", encoding="utf-8")
    log.info("evaluated %s: micro F1 %.4f", gold_path, report.micro.f1)
    return cfg.output_dir / "eval.json"


def run_kb_load(cfg: PipelineConfig) -> Path:
    kb_file = cfg.require_kb_file()
    entries, catalogs = load_kb(kb_file)
    graph = KnowledgeGraph()
    triples = kb_into_graph(graph, entries)
    kb_graph_path = cfg.output_dir / "kb_graph.jsonl"
    save_graph(graph, kb_graph_path)
    _write_json(cfg.output_dir / "catalogs.json", {
        label.lower(): list(names) for label, names in catalogs.by_label().items()
    })
    log.info("loaded %d diseases, %d triples, %d nodes",
             len(entries), triples, len(graph.nodes))
    return kb_graph_path


def _read_entities_file(path: Path) -> list[tuple[str, list[tuple[str, str]]]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"{path}: empty entities file")
    header = json.loads(lines[0])
    if not isinstance(header, dict) or header.get("schema") != ENTITIES_SCHEMA_TAG:
        raise DataError(f"{path}: expected schema header {ENTITIES_SCHEMA_TAG!r}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append(
                (obj["doc_id"], [(label, surface) for label, surface in obj["entities"]])
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: line {lineno}: malformed record: {exc}") from exc
    return records


def run_align(cfg: PipelineConfig, sources: list[str]) -> Path:
    """Align source names against the KB disease catalog; write a TSV
    report of source, matched target (empty if none) and similarity."""
    kb_file = cfg.require_kb_file()
    _, catalogs = load_kb(kb_file)
    if not catalogs.disease:
        raise DataError(f"{kb_file}: KB has no disease names to align against")
    index = build_index(list(catalogs.disease), cfg.ngram_orders)
    rows = ["source\ttarget\tsimilarity"]
    for source in sources:
        result = align(source, index, cfg.threshold)
        rows.append(f"{result.source}\t{result.target or ''}\t{result.similarity:.12g}")
    path = cfg.output_dir / "alignments.tsv"
    path.write_text("".join(row + "\n" for row in rows), encoding="utf-8")
    log.info("aligned %d names against %d KB diseases", len(sources), len(catalogs.disease))
    return path


def read_alignment_file(path: Path, threshold: float) -> list[Alignment]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "source\ttarget\tsimilarity":
        raise DataError(f"{path}: missing alignment header row")
    alignments = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}: line {lineno}: expected 3 tab-separated fields")
        source, target, similarity = parts
        try:
            alignments.append(
                Alignment(source, target or None, float(similarity), threshold)
            )
        except (ValueError, DataError) as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from exc
    return alignments


def run_fuse(
    cfg: PipelineConfig, graph_path: Path, entities_path: Path | None, alignments_path: Path
) -> Path:
    """Insert extracted patient records into the KB graph, then merge
    aligned disease nodes into their canonical KB nodes."""
    graph = load_graph(graph_path)
    if entities_path is not None:
        for doc_id, entities in _read_entities_file(entities_path):
            add_patient_record(graph, doc_id, entities)
    alignments = read_alignment_file(alignments_path, cfg.threshold)
    report = fuse(graph, alignments)
    fused_path = cfg.output_dir / "graph.jsonl"
    save_graph(graph, fused_path)
    _write_json(cfg.output_dir / "fusion_report.json", {
        "merged": [list(row) for row in report.merged],
        "unmatched": list(report.unmatched),
        "skipped": list(report.skipped),
    })
    log.info("fused graph: %d merged, %d unmatched, %d skipped",
             len(report.merged), len(report.unmatched), len(report.skipped))
    return fused_path


def run_export(cfg: PipelineConfig, graph_path: Path) -> int:
    graph = load_graph(graph_path)
    count = export_cypher(graph, cfg.output_dir / "graph.cypher")
    export_csv(graph, cfg.output_dir / "nodes.csv", cfg.output_dir / "rels.csv")
    log.info("exported %d statements", count)
    return count


# -- subcommand wrappers -------------------------------------------------


def _prepare(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg


def cmd_convert(args: argparse.Namespace) -> int:
    cfg = _prepare(args)
    run_convert(cfg)
    write_manifest(cfg, "convert", _corpus_inputs(cfg.require_corpus_dir()))
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    cfg = _prepare(args)
    bio_path = Path(args.bio) if args.bio else cfg.output_dir / "corpus.bio"
    run_split(cfg, bio_path)
    write_manifest(cfg, "split", [bio_path])
    return EXIT_OK


def cmd_augment(args: argparse.Namespace) -> int:
    cfg = _prepare(args)
    sentences = read_bio_file(args.bio)
    dictionary = read_dictionary_file(args.dictionary)
    rng = np.random.default_rng(derive_seed(cfg.seed, "augment"))
    outcomes = augment_epoch(sentences, dictionary, cfg.derm, rng)
    out = Path(args.out) if args.out else cfg.output_dir / "augmented.bio"
    write_bio_file([o.sentence for o in outcomes], out)
    actions: dict[str, int] = {}
    for outcome in outcomes:
        actions[outcome.action] = actions.get(outcome.action, 0) + 1
    _write_json(cfg.output_dir / "augment_report.json", {"actions": actions})
    write_manifest(cfg, "augment", [Path(args.bio), Path(args.dictionary)])
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _prepare(args)
    train_path = Path(args.train) if args.train else cfg.output_dir / "train.bio"
    validation_path = Path(args.validation) if args.validation else cfg.output_dir / "validation.bio"
    dict_path = Path(args.dictionary) if args.dictionary else None
    run_train(cfg, train_path, validation_path, dict_path)
    inputs = [train_path, validation_path] + ([dict_path] if dict_path else [])
    write_manifest(cfg, "train", inputs)
    return EXIT_OK


def cmd_tag(args: argparse.Namespace) -> int:
    cfg = _prepare(args)
    model_path = cfg.resolved_model_file()
    if args.text:
        run_tag_text(cfg, model_path, Path(args.text))
        write_manifest(cfg, "tag", [model_path, Path(args.text)])
    else:
        run_tag_corpus(cfg, model_path)
        write_manifest(cfg, "tag", [model_path] + _corpus_inputs(cfg.require_corpus_dir()))
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _prepare(args)
    model_path = cfg.resolved_model_file()
    gold_path = Path(args.gold) if args.gold else cfg.output_dir / "test.bio"
    run_evaluate(cfg, model_path, gold_path)
    write_manifest(cfg, "evaluate", [model_path, gold_path])
    return EXIT_OK


def cmd_kb_load(args: argparse.Namespace) -> int:
    cfg = _prepare(args)
    run_kb_load(cfg)
    write_manifest(cfg, "kb-load", [cfg.require_kb_file()])
    return EXIT_OK


def cmd_align(args: argparse.Namespace) -> int:
    cfg = _prepare(args)
    if args.names:
        text = Path(args.names).read_text(encoding="utf-8")
        sources = [line.strip() for line in text.splitlines() if line.strip()]
        inputs = [Path(args.names)]
    elif args.entities:
        records = _read_entities_file(Path(args.entities))
        sources = sorted({
            surface
            for _, entities in records
            for label, surface in entities
            if label == "Disease"
        })
        inputs = [Path(args.entities)]
    else:
        raise ConfigError("align requires --names or --entities")
    run_align(cfg, sources)
    write_manifest(cfg, "align", inputs + [cfg.require_kb_file()])
    return EXIT_OK


def cmd_fuse(args: argparse.Namespace) -> int:
    cfg = _prepare(args)
    graph_path = Path(args.graph) if args.graph else cfg.output_dir / "kb_graph.jsonl"
    entities_path = Path(args.entities) if args.entities else None
    alignments_path = Path(args.alignments) if args.alignments else cfg.output_dir / "alignments.tsv"
    run_fuse(cfg, graph_path, entities_path, alignments_path)
    inputs = [graph_path, alignments_path] + ([entities_path] if entities_path else [])
    write_manifest(cfg, "fuse", inputs)
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    cfg = _prepare(args)
    graph_path = Path(args.graph) if args.graph else cfg.output_dir / "graph.jsonl"
    run_export(cfg, graph_path)
    write_manifest(cfg, "export", [graph_path])
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    cfg = _prepare(args)
    graph_path = Path(args.graph) if args.graph else cfg.output_dir / "graph.jsonl"
    graph = load_graph(graph_path)
    nodes = graph.pattern_query(args.label, args.name, args.relation)
    output = "".join(node.name + "\n" for node in nodes)
    if args.out:
        Path(args.out).write_text(output, encoding="utf-8")
    else:
        sys.stdout.write(output)
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _prepare(args)
    bio_path = run_convert(cfg)
    split_paths = run_split(cfg, bio_path)
    model_path = run_train(cfg, split_paths["train"], split_paths["validation"])
    _, entities_path = run_tag_corpus(cfg, model_path)
    run_evaluate(cfg, model_path, split_paths["test"])
    kb_graph_path = run_kb_load(cfg)
    records = _read_entities_file(entities_path)
    sources = sorted({
        surface for _, entities in records for label, surface in entities if label == "Disease"
    })
    alignments_path = run_align(cfg, sources)
    fused_path = run_fuse(cfg, kb_graph_path, entities_path, alignments_path)
    run_export(cfg, fused_path)
    write_manifest(
        cfg, "pipeline",
        _corpus_inputs(cfg.require_corpus_dir()) + [cfg.require_kb_file()],
    )
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emrkg",
        description="Clinical-text knowledge-graph pipeline: annotation "
        "conversion, tagger training, entity alignment, graph fusion and export.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="master random seed (overrides config)")
    common.add_argument("--corpus-dir", dest="corpus_dir", help="directory of .txt/.ann pairs")
    common.add_argument("--kb-file", dest="kb_file", help="knowledge base JSONL file")
    common.add_argument("--output-dir", dest="output_dir", help="directory for all outputs")
    common.add_argument("--model-file", dest="model_file", help="tagger model path")
    common.add_argument("--max-len", dest="max_len", type=int, help="sentence wrap length")

    sub = parser.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("convert", parents=[common],
                   help="standoff corpus to BIO sentences").set_defaults(func=cmd_convert)

    p = sub.add_parser("split", parents=[common], help="8:1:1 dataset split")
    p.add_argument("--bio", help="input BIO file (default: <output-dir>/corpus.bio)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", parents=[common],
                       help="one replace/mask augmentation pass over a BIO file")
    p.add_argument("--bio", required=True, help="input BIO file")
    p.add_argument("--dictionary", required=True, help="entity dictionary TSV")
    p.add_argument("--out", help="output BIO file")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", parents=[common], help="train the sequence tagger")
    p.add_argument("--train", help="training BIO file (default: <output-dir>/train.bio)")
    p.add_argument("--validation", help="validation BIO file (default: <output-dir>/validation.bio)")
    p.add_argument("--dictionary", help="entity dictionary TSV (default: built from data)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", parents=[common], help="tag a corpus or plain text")
    p.add_argument("--text", help="plain text file, one sentence per line")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("evaluate", parents=[common], help="entity-level P/R/F1")
    p.add_argument("--gold", help="gold BIO file (default: <output-dir>/test.bio)")
    p.set_defaults(func=cmd_evaluate)

    sub.add_parser("kb-load", parents=[common],
                   help="load the KB into a graph file").set_defaults(func=cmd_kb_load)

    p = sub.add_parser("align", parents=[common],
                       help="TF-IDF-align entity names to KB diseases")
    p.add_argument("--names", help="file of names, one per line")
    p.add_argument("--entities", help="extracted-entities JSONL from the tag step")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("fuse", parents=[common],
                       help="insert patient records and merge aligned nodes")
    p.add_argument("--graph", help="input graph file (default: <output-dir>/kb_graph.jsonl)")
    p.add_argument("--entities", help="extracted-entities JSONL to insert")
    p.add_argument("--alignments", help="alignment TSV (default: <output-dir>/alignments.tsv)")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("export", parents=[common], help="Cypher and CSV export")
    p.add_argument("--graph", help="input graph file (default: <output-dir>/graph.jsonl)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("query", parents=[common], help="pattern query over a graph file")
    p.add_argument("--graph", help="graph file (default: <output-dir>/graph.jsonl)")
    p.add_argument("--label", required=True, help="head node label")
    p.add_argument("--name", required=True, help="head node name")
    p.add_argument("--relation", required=True, help="relation type")
    p.add_argument("--out", help="write results here instead of stdout")
    p.set_defaults(func=cmd_query)

    sub.add_parser("pipeline", parents=[common],
                   help="run every stage end to end").set_defaults(func=cmd_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems and 0 for --help
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s: %s", args.subcommand, exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("%s: %s", args.subcommand, exc)
        return EXIT_DATA
    except EmrkgError as exc:
        log.error("%s: internal error: %s", args.subcommand, exc)
        return EXIT_INTERNAL
    except Exception as exc:  # final safety net so scripts always get a code
        log.exception("%s: unexpected error: %s", args.subcommand, exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
