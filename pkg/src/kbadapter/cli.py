"""Command-line entry point tying the pipeline together.

Subcommands cover the full workflow: generate a synthetic world, ingest
KBs, verbalize them into statement corpora, memorize corpora into
adapters, utilize adapters on a downstream task, train baselines, generate
the contrastive benchmark, and evaluate. Every command writes a manifest
next to its outputs and derives
all randomness from --seed, so identical invocations produce identical
bytes.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
from pathlib import Path

import torch

from . import kprs, metrics, synth, training, verbalize
from .errors import KbAdapterError
from .kb import KnowledgeBase, load_kb, save_kb, validate_kb
from .manifest import RunManifest
from .model import (
    ADA_HIDDEN,
    ADA_LOGITS,
    AdapterConfig,
    AugmentedModel,
    ModelConfig,
    Seq2SeqTransformer,
    generate,
    load_checkpoint,
    save_checkpoint,
)
from .seeding import substream
from .tokenizer import BOS_ID, EOS_ID, PAD_ID, WordTokenizer

CACHE_ENV = "KBADAPTER_CACHE"

_FUSION_FLAGS = {"ada-hidden": ADA_HIDDEN, "ada-logits": ADA_LOGITS}


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return raw


def _resolve_seed(args, config: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return int(config.get("train", {}).get("seed", 0))


def _train_config(config: dict, seed: int) -> training.TrainConfig:
    section = dict(config.get("train", {}))
    section["seed"] = seed
    return training.TrainConfig.from_json(section)


def _load_kbs(path: str | Path) -> dict[str, KnowledgeBase]:
    """One KB per *.json file in a directory (or a single file)."""
    p = Path(path)
    files = sorted(p.glob("*.json")) if p.is_dir() else [p]
    if not files:
        raise FileNotFoundError(f"no KB files under {path}")
    kbs = {}
    for f in files:
        kb = load_kb(f, domain=None if _is_self_describing(f) else f.stem)
        kbs[kb.domain] = kb
    return kbs


def _is_self_describing(path: Path) -> bool:
    with open(path, encoding="utf-8") as fh:
        head = fh.read(64).lstrip()
    return head.startswith("{")


def _load_templates(path: str | Path) -> dict[str, verbalize.TemplateSet]:
    p = Path(path)
    files = sorted(p.glob("*.json")) if p.is_dir() else [p]
    sets = {}
    for f in files:
        ts = verbalize.TemplateSet.from_json(f)
        sets[ts.domain] = ts
    return sets


def _load_task_data(path: str | Path) -> list[tuple[str, str]]:
    """Task pairs from a pairs JSONL or from dialogue files."""
    p = Path(path)
    if p.suffix == ".jsonl":
        pairs = []
        with open(p, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                pairs.append((row["context"], row["response"]))
        return pairs
    return kprs.task_pairs(kprs.load_dialogues(p))


def _model_config(config: dict, vocab_size: int) -> ModelConfig:
    section = dict(config.get("model", {}))
    section["vocab_size"] = vocab_size
    return ModelConfig.from_json(section)


def _adapter_config(config: dict) -> AdapterConfig:
    return AdapterConfig.from_json(dict(config.get("adapter", {})))


def _new_model(
    config: dict,
    tokenizer: WordTokenizer,
    domains: tuple[str, ...],
    fusion_mode: str,
    seed: int,
) -> AugmentedModel:
    mcfg = _model_config(config, len(tokenizer.tokens))
    plm = Seq2SeqTransformer(mcfg, seed=substream(seed, "plm-init"))
    return AugmentedModel(
        plm,
        _adapter_config(config),
        domains=domains,
        fusion_mode=fusion_mode,
        seed=substream(seed, "augment-init"),
    )


def _cached_new_model(
    config: dict,
    tokenizer: WordTokenizer,
    domains: tuple[str, ...],
    fusion_mode: str,
    seed: int,
) -> AugmentedModel:
    """Build a fresh model, memoized in KBADAPTER_CACHE when it is set.

    Initialization is deterministic in (config, vocab, domains, seed), so
    the cache is a pure speedup: a hit loads the same bytes a rebuild
    would produce.
    """
    cache_root = os.environ.get(CACHE_ENV, "")
    if not cache_root:
        return _new_model(config, tokenizer, domains, fusion_mode, seed)
    key_src = json.dumps(
        {
            "model": config.get("model", {}),
            "adapter": config.get("adapter", {}),
            "vocab": tokenizer.tokens,
            "domains": list(domains),
            "fusion": fusion_mode,
            "seed": seed,
        },
        sort_keys=True,
    )
    key = hashlib.sha256(key_src.encode("utf-8")).hexdigest()[:24]
    cache_dir = Path(cache_root) / "init" / key
    if (cache_dir / "config.json").exists():
        model, _ = load_checkpoint(cache_dir)
        return model
    model = _new_model(config, tokenizer, domains, fusion_mode, seed)
    cache_dir.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(cache_dir, model, tokenizer)
    return model


def _with_domains(
    model: AugmentedModel,
    domains: tuple[str, ...],
    fusion_mode: str,
    seed: int,
) -> AugmentedModel:
    """Rebuild around the same backbone with a new domain set.

    Adapter weights for domains present in both models carry over; new
    domains start at identity, and the gate is re-initialized for the new
    stream count.
    """
    rebuilt = AugmentedModel(
        model.plm,
        model.adapter_cfg,
        domains=domains,
        fusion_mode=fusion_mode,
        seed=substream(seed, "augment-init"),
    )
    for dom in domains:
        if dom in model.domains:
            for side in ("enc", "dec"):
                rebuilt.adapters[dom][side].load_state_dict(
                    model.adapters[dom][side].state_dict()
                )
    return rebuilt


def _same_vocab(a: WordTokenizer, b: WordTokenizer) -> bool:
    return a.tokens == b.tokens


def _manifest_for(command: str, config: dict, seed: int) -> RunManifest:
    return RunManifest(command=command, config=config, seed=seed)


def _write_checkpoint_outputs(
    out: str,
    model: AugmentedModel,
    tokenizer: WordTokenizer,
    report: training.StageReport,
    manifest: RunManifest,
) -> None:
    out_path = Path(out)
    save_checkpoint(out_path, model, tokenizer)
    with open(out_path / "stage_report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    manifest.outputs = [str(out_path)]
    manifest.write(out_path / "manifest.json")
    sys.stdout.write(json.dumps(report.to_json(), sort_keys=True) + "\n")


def cmd_gen_world(args) -> int:
    config = _load_config_file(args.config)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    world = synth.build_world(seed=seed, **dict(config.get("world", {})))
    out = Path(args.out)
    synth.write_world(world, out)
    tokenizer = WordTokenizer.build(synth.world_texts(world))
    tokenizer.save(out / "vocab.txt")
    manifest = _manifest_for("gen-world", config, seed)
    manifest.outputs = [str(out)]
    manifest.write(out / "manifest.json")
    _emit(
        {
            "domains": world.domains,
            "facts": {d: len(world.kbs[d]) for d in world.domains},
            "train_dialogues": len(world.train_dialogues),
            "eval_dialogues": len(world.eval_dialogues),
            "vocab": len(tokenizer.tokens),
            "out": str(out),
        },
        None,
    )
    return 0


def cmd_ingest(args) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    kb = load_kb(args.kb, domain=args.domain)
    kb, report = validate_kb(kb)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_file = out_dir / f"{kb.domain}.json"
    save_kb(kb, out_file)
    manifest = _manifest_for("ingest", config, seed)
    manifest.add_input("kb", args.kb)
    manifest.outputs = [str(out_file)]
    manifest.write(out_dir / f"{kb.domain}.manifest.json")
    _emit(
        {
            "domain": kb.domain,
            "kept": report.kept,
            "dropped": len(report.dropped),
            "drop_reasons": [[name, why] for name, why in report.dropped],
            "out": str(out_file),
        },
        None,
    )
    return 0


def cmd_verbalize(args) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    kbs = _load_kbs(args.kb)
    templates = _load_templates(args.templates)
    statements = []
    for domain in sorted(kbs):
        if domain not in templates:
            raise ValueError(f"no templates for domain '{domain}'")
        ts = templates[domain]
        ts.validate(kbs[domain].spec)
        statements.extend(verbalize.build_corpus(kbs[domain], ts, args.mode))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    verbalize.write_statements(args.out, statements)
    manifest = _manifest_for("verbalize", config, seed)
    manifest.add_input("kb", args.kb)
    manifest.add_input("templates", args.templates)
    manifest.config = {"mode": args.mode}
    manifest.outputs = [args.out]
    manifest.write(args.out + ".manifest.json")
    _emit({"statements": len(statements), "out": args.out}, None)
    return 0


def cmd_pretrain(args) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    torch.set_num_threads(max(1, args.jobs))
    corpus = verbalize.read_statements(args.corpus)
    if not corpus:
        raise ValueError("pretraining corpus is empty")

    if args.model == "new":
        if args.vocab:
            tokenizer = WordTokenizer.load(args.vocab)
        else:
            tokenizer = WordTokenizer.build([s.text for s in corpus])
        model = _cached_new_model(config, tokenizer, (), _FUSION_FLAGS["ada-hidden"], seed)
    else:
        model, tokenizer = load_checkpoint(args.model)

    report = training.sequential_finetune(
        model,
        [("pretrain", corpus)],
        tokenizer,
        _train_config(config, seed),
        stage=training.PRETRAIN,
    )
    manifest = _manifest_for("pretrain", config, seed)
    manifest.add_input("corpus", args.corpus)
    if args.model != "new":
        manifest.add_input("model", args.model)
    _write_checkpoint_outputs(args.out, model, tokenizer, report, manifest)
    return 0


def cmd_memorize(args) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    torch.set_num_threads(max(1, args.jobs))
    corpus = [s for s in verbalize.read_statements(args.corpus) if s.domain == args.domain]
    if not corpus:
        raise ValueError(f"corpus has no statements for domain '{args.domain}'")

    fusion_mode = _FUSION_FLAGS[args.fusion]
    if args.model == "new":
        if args.vocab:
            tokenizer = WordTokenizer.load(args.vocab)
        else:
            tokenizer = WordTokenizer.build([s.text for s in corpus])
        model = _cached_new_model(config, tokenizer, (args.domain,), fusion_mode, seed)
    else:
        model, tokenizer = load_checkpoint(args.model)
        if args.domain not in model.domains:
            model = _with_domains(
                model, model.domains + (args.domain,), model.fusion_mode, seed
            )

    report = training.memorize(model, corpus, tokenizer, _train_config(config, seed))
    manifest = _manifest_for("memorize", config, seed)
    manifest.add_input("corpus", args.corpus)
    if args.model != "new":
        manifest.add_input("model", args.model)
    _write_checkpoint_outputs(args.out, model, tokenizer, report, manifest)
    return 0


def cmd_utilize(args) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    torch.set_num_threads(max(1, args.jobs))
    task_data = _load_task_data(args.data)
    fusion_mode = _FUSION_FLAGS[args.fusion]

    base, tokenizer = load_checkpoint(args.model)
    adapter_sources: dict[str, AugmentedModel] = {}
    for ckpt in args.adapters:
        src, src_tok = load_checkpoint(ckpt)
        if not _same_vocab(tokenizer, src_tok):
            raise ValueError(f"adapter checkpoint {ckpt} uses a different vocabulary")
        for dom in src.domains:
            if dom in adapter_sources:
                raise ValueError(f"domain '{dom}' appears in more than one adapter checkpoint")
            adapter_sources[dom] = src

    domains = tuple(sorted(adapter_sources))
    model = AugmentedModel(
        base.plm,
        adapter_sources[domains[0]].adapter_cfg if domains else base.adapter_cfg,
        domains=domains,
        fusion_mode=fusion_mode,
        seed=substream(seed, "augment-init"),
    )
    for dom in domains:
        src = adapter_sources[dom]
        for side in ("enc", "dec"):
            model.adapters[dom][side].load_state_dict(src.adapters[dom][side].state_dict())

    report = training.utilize(model, task_data, tokenizer, _train_config(config, seed))
    manifest = _manifest_for("utilize", config, seed)
    manifest.config = dict(config, task=args.task, fusion=args.fusion)
    manifest.add_input("model", args.model)
    for i, ckpt in enumerate(args.adapters):
        manifest.add_input(f"adapters[{i}]", ckpt)
    manifest.add_input("data", args.data)
    _write_checkpoint_outputs(args.out, model, tokenizer, report, manifest)
    return 0


def cmd_baseline(args) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    torch.set_num_threads(max(1, args.jobs))
    fusion_mode = _FUSION_FLAGS[args.fusion]
    tcfg = _train_config(config, seed)

    if args.mode == "seq":
        statements = verbalize.read_statements(args.data)
        order: list[str] = []
        grouped: dict[str, list] = {}
        for s in statements:
            if s.domain not in grouped:
                grouped[s.domain] = []
                order.append(s.domain)
            grouped[s.domain].append(s)
        if args.model == "new":
            if args.vocab:
                tokenizer = WordTokenizer.load(args.vocab)
            else:
                tokenizer = WordTokenizer.build([s.text for s in statements])
            model = _cached_new_model(config, tokenizer, (), fusion_mode, seed)
        else:
            model, tokenizer = load_checkpoint(args.model)
        report = training.sequential_finetune(
            model, [(d, grouped[d]) for d in order], tokenizer, tcfg
        )
    elif args.mode == "plain":
        model, tokenizer = load_checkpoint(args.model)
        model = AugmentedModel(
            model.plm, model.adapter_cfg, domains=(), fusion_mode=fusion_mode,
            seed=substream(seed, "augment-init"),
        )
        report = training.utilize(model, _load_task_data(args.data), tokenizer, tcfg)
    elif args.mode == "rand":
        if not args.domains:
            raise ValueError("--domains is required for --mode rand")
        model, tokenizer = load_checkpoint(args.model)
        domains = tuple(sorted(args.domains.split(",")))
        model = AugmentedModel(
            model.plm, _adapter_config(config), domains=domains,
            fusion_mode=fusion_mode, seed=substream(seed, "rand-adapters"),
        )
        report = training.utilize(
            model, _load_task_data(args.data), tokenizer, tcfg,
            stage=training.RAND_INIT,
        )
    else:
        raise ValueError(f"unknown baseline mode '{args.mode}'")

    manifest = _manifest_for("baseline", config, seed)
    manifest.config = dict(config, mode=args.mode)
    if args.model != "new":
        manifest.add_input("model", args.model)
    manifest.add_input("data", args.data)
    _write_checkpoint_outputs(args.out, model, tokenizer, report, manifest)
    return 0


def _gen_chunk(payload: tuple) -> tuple[list[dict], int, int]:
    """Worker for parallel benchmark generation (no filter model)."""
    dialogues, kbs, seed, budget = payload
    samples, _ = kprs.build_benchmark(
        dialogues, kbs, filter_lm=None, cfg=kprs.KprsConfig(seed=seed, budget=budget)
    )
    singles = sum(1 for s in samples if not s.is_multi_domain)
    return [s.to_json() for s in samples], singles, len(samples) - singles


def cmd_gen_kprs(args) -> int:
    config = _load_config_file(args.config)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    dialogues = kprs.load_dialogues(args.dialogues)
    kbs = _load_kbs(args.kbs)

    filter_lm = None
    if args.filter_lm and args.filter_lm != "none":
        model, tokenizer = load_checkpoint(args.filter_lm)
        filter_lm = kprs.pair_filter(model, tokenizer)

    cfg = kprs.KprsConfig(seed=seed)
    if filter_lm is None and args.jobs > 1 and len(dialogues) > 1:
        # Per-mention seed substreams make output independent of chunking.
        chunks = [dialogues[i :: args.jobs] for i in range(args.jobs)]
        payloads = [(c, kbs, seed, cfg.budget) for c in chunks if c]
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            parts = list(pool.map(_gen_chunk, payloads))
        by_id: dict[str, dict] = {}
        single = multi = 0
        for rows, s, m in parts:
            for row in rows:
                by_id[row["sample_id"]] = row
            single += s
            multi += m
        index = {dlg.dialogue_id: i for i, dlg in enumerate(dialogues)}

        def sort_key(sid: str) -> tuple[int, int, int]:
            did, ti, k = sid.rsplit("-", 2)
            return (index.get(did, len(index)), int(ti), int(k))

        samples = [kprs.KprsSample.from_json(by_id[sid]) for sid in sorted(by_id, key=sort_key)]
        stats = kprs.BenchmarkStats(
            total=len(samples),
            single_domain=single,
            multi_domain=multi,
            unique_dialogues=len({s.sample_id.rsplit("-", 2)[0] for s in samples}),
            unique_contexts=len({s.sample_id.rsplit("-", 1)[0] for s in samples}),
        )
    else:
        samples, stats = kprs.build_benchmark(dialogues, kbs, filter_lm=filter_lm, cfg=cfg)

    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    kprs.write_samples(args.out, samples)
    manifest = _manifest_for("gen-kprs", config, seed)
    manifest.add_input("dialogues", args.dialogues)
    manifest.add_input("kbs", args.kbs)
    if filter_lm is not None:
        manifest.add_input("filter_lm", args.filter_lm)
    manifest.outputs = [args.out]
    manifest.write(args.out + ".manifest.json")
    _emit(stats.to_json(), None)
    return 0


def _generate_responses(model, tokenizer, contexts: list[str], max_new: int = 48) -> list[str]:
    max_len = model.plm.cfg.max_len
    src = [training._encode_pair(tokenizer, ctx, "", max_len)[0] for ctx in contexts]
    outputs = generate(model, src, BOS_ID, EOS_ID, PAD_ID, max_new_tokens=max_new)
    return [tokenizer.detokenize(ids) for ids in outputs]


def cmd_eval(args) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    model, tokenizer = load_checkpoint(args.model)

    if args.task == "kprs":
        samples = kprs.read_samples(args.data)
        scorer = kprs.model_pair_scorer(model, tokenizer)
        payload = kprs.evaluate_kprs(scorer, samples)
    elif args.task == "memorization":
        corpus = verbalize.read_statements(args.data)
        per_domain = training.memorization_accuracy_by_domain(model, corpus, tokenizer, seed)
        overall = training.memorization_accuracy(model, corpus, tokenizer, seed)
        payload = {"overall": overall, "per_domain": per_domain, "n": len(corpus)}
    elif args.task == "rg":
        if not args.kbs:
            raise ValueError("--kbs is required for --task rg")
        kbs = _load_kbs(args.kbs)
        rows = []
        with open(args.data, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rows.append(json.loads(line))
        contexts = [
            [kprs.DialogueTurn.from_json(t) for t in row["context"]] for row in rows
        ]
        generated = [row.get("generated_response", "") for row in rows]
        missing = [i for i, g in enumerate(generated) if not g]
        if missing:
            texts = [kprs.serialize_context(contexts[i]) for i in missing]
            for i, resp in zip(missing, _generate_responses(model, tokenizer, texts)):
                generated[i] = resp
        examples = []
        for row, ctx, gen in zip(rows, contexts, generated):
            requested = row.get("requested_slots")
            if requested is None:
                requested = metrics.requested_slots_from_context(ctx)
            examples.append(
                metrics.RGExample(
                    context=ctx,
                    gold_response=row["gold_response"],
                    generated_response=gen,
                    requested_slots=list(requested),
                    domains=list(row.get("domains", [])),
                )
            )
        payload = metrics.inform_success(examples, kbs).to_json()
    else:
        raise ValueError(f"unknown eval task '{args.task}'")

    _emit(payload, args.out)
    if args.out:
        manifest = _manifest_for("eval", config, seed)
        manifest.config = dict(config, task=args.task)
        manifest.add_input("model", args.model)
        manifest.add_input("data", args.data)
        manifest.outputs = [args.out]
        manifest.write(args.out + ".manifest.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbadapter",
        description="KB memorization adapters for seq2seq models: train, probe, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=False):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master random seed")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="worker parallelism")

    p = sub.add_parser("gen-world", help="generate a synthetic evaluation world")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("ingest", help="validate a KB file")
    p.add_argument("--kb", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("verbalize", help="render KB facts as statements")
    p.add_argument("--kb", required=True, help="KB file or directory")
    p.add_argument("--templates", required=True, help="template file or directory")
    p.add_argument("--mode", choices=[verbalize.ATOMIC, verbalize.COMPOSITE, verbalize.BOTH],
                   default=verbalize.BOTH)
    p.add_argument("--out", required=True, help="output JSONL")
    common(p)
    p.set_defaults(func=cmd_verbalize)

    p = sub.add_parser("pretrain", help="denoising-pretrain the backbone on a mixed corpus")
    p.add_argument("--model", required=True, help="checkpoint directory or 'new'")
    p.add_argument("--corpus", required=True, help="statement JSONL")
    p.add_argument("--vocab", default=None, help="vocab file for --model new")
    p.add_argument("--out", required=True, help="output checkpoint directory")
    common(p, jobs=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("memorize", help="train domain adapters on a statement corpus")
    p.add_argument("--model", required=True, help="checkpoint directory or 'new'")
    p.add_argument("--corpus", required=True, help="statement JSONL")
    p.add_argument("--domain", required=True)
    p.add_argument("--fusion", choices=sorted(_FUSION_FLAGS), default="ada-hidden")
    p.add_argument("--vocab", default=None, help="vocab file for --model new")
    p.add_argument("--out", required=True, help="output checkpoint directory")
    common(p, jobs=True)
    p.set_defaults(func=cmd_memorize)

    p = sub.add_parser("utilize", help="fine-tune backbone plus frozen adapters on a task")
    p.add_argument("--model", required=True, help="backbone checkpoint")
    p.add_argument("--adapters", nargs="*", default=[], help="adapter checkpoints")
    p.add_argument("--task", choices=["rg", "kprs"], default="rg")
    p.add_argument("--data", required=True, help="pairs JSONL or dialogue file/dir")
    p.add_argument("--fusion", choices=sorted(_FUSION_FLAGS), default="ada-hidden")
    p.add_argument("--out", required=True, help="output checkpoint directory")
    common(p, jobs=True)
    p.set_defaults(func=cmd_utilize)

    p = sub.add_parser("baseline", help="train a comparison model")
    p.add_argument("--mode", choices=["plain", "seq", "rand"], required=True)
    p.add_argument("--model", required=True, help="checkpoint directory or 'new'")
    p.add_argument("--data", required=True, help="statement JSONL (seq) or task data")
    p.add_argument("--domains", default="", help="comma-separated domains for --mode rand")
    p.add_argument("--fusion", choices=sorted(_FUSION_FLAGS), default="ada-hidden")
    p.add_argument("--vocab", default=None, help="vocab file for --model new")
    p.add_argument("--out", required=True, help="output checkpoint directory")
    common(p, jobs=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("gen-kprs", help="generate the contrastive benchmark")
    p.add_argument("--dialogues", required=True, help="dialogue file or directory")
    p.add_argument("--kbs", required=True, help="KB file or directory")
    p.add_argument("--filter-lm", default="none", help="checkpoint directory or 'none'")
    p.add_argument("--out", required=True, help="output JSONL")
    common(p, jobs=True)
    p.set_defaults(func=cmd_gen_kprs)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--task", choices=["kprs", "rg", "memorization"], required=True)
    p.add_argument("--model", required=True, help="checkpoint directory")
    p.add_argument("--data", required=True)
    p.add_argument("--kbs", default=None, help="KB directory (rg task)")
    p.add_argument("--out", default=None, help="report JSON path (default stdout)")
    common(p)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KbAdapterError, ValueError, OSError, KeyError) as exc:
        sys.stderr.write(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
