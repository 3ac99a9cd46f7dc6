"""Command-line pipeline: ingest, generate, probe, evaluate, report, sweep.

Every output gets a sidecar manifest and a header record naming it, so any
artifact is reproducible from its manifest.  Seeds are explicit flags; no
command consults the clock.  Exit codes: 0 success, 2 validation failure,
3 backend failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ontocloze import (
    backend as backend_mod,
    evaluation,
    figures,
    ingestion,
    memorize,
    ontology,
    prompting,
    pseudowords,
    reasoning,
    runio,
    scoring,
)

EXIT_VALIDATION = 2
EXIT_BACKEND = 3

METRIC_COLUMNS = ("R@1", "R@5", "MRR", "MRR_a")


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _load_config(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    overrides = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{line_no}: expected key=value")
        key, value = line.split("=", 1)
        overrides[key.strip().replace("-", "_")] = value.strip()
    return overrides


def _manifest(out_path: Path, **fields) -> str:
    digest = runio.write_manifest(runio.manifest_path(out_path), fields)
    return digest


def _open_backend(spec: str, window: int, oracle_spec=None) -> backend_mod.Backend:
    if spec == "mock-oracle":
        return backend_mod.MockOracleBackend(spec=oracle_spec)
    if spec.startswith("cmd:"):
        return backend_mod.WireBackend.from_command(spec[4:].split(), window=window)
    if spec.startswith("tcp:"):
        host, _, port = spec[4:].rpartition(":")
        return backend_mod.WireBackend.from_tcp(host, int(port), window=window)
    raise CliError(f"unknown backend {spec!r}; use mock-oracle, cmd:..., or tcp:host:port")


def _require_same_graph(headers: list[dict]) -> str:
    hashes = {h.get("graph_hash") for h in headers if h.get("graph_hash")}
    if len(hashes) > 1:
        raise CliError(f"inputs were produced from different graphs: {sorted(hashes)}")
    return next(iter(hashes), "")


def _mem_template(registry, sample, kind, variant, mask_count=1, lowercase=False):
    relation = prompting.relation_of_subtask(sample.subtask)
    template = registry.get(relation, kind, variant, clamp=True)
    return prompting.render_memorizing(sample, template, mask_count=mask_count,
                                       lowercase=lowercase)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_build_graph(args) -> int:
    graph = ontology.load_graph(args.triples)
    ontology.save_graph(graph, args.out)
    digest = _manifest(Path(args.out), command="build-graph", source=str(args.triples),
                       graph_hash=ontology.graph_hash(graph))
    print(f"graph ok: {len(graph.classes)} classes, {len(graph.properties)} properties, "
          f"{len(graph.instances)} instances (manifest {digest})")
    return 0


def cmd_ingest(args) -> int:
    class_lines = Path(args.classes).read_text(encoding="utf-8").splitlines()
    class_graph = ontology.build_graph(ontology.parse_triple_lines(class_lines))
    if class_graph.properties or class_graph.instances:
        raise CliError("--classes file must contain only class edges and labels")
    vocab = list(class_graph.classes)
    depth = {c: ontology.class_depth(class_graph, c) for c in vocab}

    members: dict[str, list[str]] = {}
    for subject, predicate, obj, line_no in ontology.parse_triple_lines(
            Path(args.members).read_text(encoding="utf-8").splitlines()):
        if predicate != "type":
            raise CliError(f"{args.members}:{line_no}: members file takes only type lines")
        if obj not in class_graph.classes:
            raise CliError(f"{args.members}:{line_no}: unknown class {obj!r}")
        members.setdefault(obj, []).append(subject)
    sampled = ingestion.sample_instances(members, args.k, args.seed)

    records = ingestion.load_property_dumps(args.properties)
    properties, report = ingestion.align_and_cleanse(records, vocab, depth)
    if args.patch:
        patch_lines = Path(args.patch).read_text(encoding="utf-8").splitlines()
        properties = ingestion.apply_patch(properties, patch_lines, vocab)
    report.instances_sampled = sum(len(v) for v in sampled.values())

    lines = [line for line in class_lines if line.strip() and not line.startswith("#")]
    lines += ingestion.property_lines(properties)
    for class_id, instances in sampled.items():
        lines += [f"{inst}\ttype\t{class_id}" for inst in instances]
    graph = ontology.build_graph(ontology.parse_triple_lines(lines))
    ontology.save_graph(graph, args.out)
    runio.write_tsv(args.report, ["kind", "key", "value"], report.rows(),
                    comments=[f"ingest report; seed={args.seed} k={args.k}"])
    _manifest(Path(args.out), command="ingest", seed=args.seed, k=args.k,
              classes=str(args.classes), members=str(args.members),
              properties=[str(p) for p in args.properties],
              patch=str(args.patch) if args.patch else None,
              graph_hash=ontology.graph_hash(graph))
    print(f"ingested {report.properties_kept}/{report.properties_total} properties, "
          f"{report.instances_sampled} instances, {report.classes} classes")
    return 0


def cmd_gen_mem(args) -> int:
    graph = ontology.load_graph(args.graph)
    dataset = memorize.generate_memorizing(graph, seed=args.seed,
                                           transitive_types=not args.direct_types)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    digest = ontology.graph_hash(graph)
    for subtask, samples in dataset.samples.items():
        path = out_dir / f"mem_{subtask}.jsonl"
        manifest_hash = _manifest(path, command="gen-mem", seed=args.seed,
                                  graph_hash=digest, subtask=subtask,
                                  candidate_policy=dataset.candidate_policy,
                                  transitive_types=dataset.transitive_types)
        header = {
            "graph_hash": digest, "seed": args.seed, "subtask": subtask,
            "candidate_policy": dataset.candidate_policy,
            "transitive_types": dataset.transitive_types,
            "warnings": [w for w in dataset.warnings if w.startswith(subtask)],
            "manifest_hash": manifest_hash,
        }
        runio.write_jsonl(path, header, (memorize.sample_to_record(s) for s in samples))
        if args.multiple_choice:
            questions = [
                memorize.to_multiple_choice(s, args.multiple_choice, args.seed)
                for s in samples if s.split == "test"
            ]
            mc_path = out_dir / f"mc_{subtask}.jsonl"
            mc_manifest = _manifest(mc_path, command="gen-mem", seed=args.seed,
                                    graph_hash=digest, subtask=subtask,
                                    n_choices=args.multiple_choice)
            runio.write_jsonl(mc_path, {"graph_hash": digest, "seed": args.seed,
                                        "subtask": subtask,
                                        "n_choices": args.multiple_choice,
                                        "manifest_hash": mc_manifest},
                              (memorize.question_to_record(q) for q in questions))
    for warning in dataset.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {len(dataset.samples)} subtasks to {out_dir}")
    return 0


def cmd_gen_reason(args) -> int:
    graph = ontology.load_graph(args.graph)
    if args.grid == "all":
        grid = reasoning.FULL_GRID
    else:
        grid = []
        for chunk in args.grid.split(","):
            m1, _, m2 = chunk.strip().partition("-")
            grid.append((m1, m2))
    registry = prompting.TemplateRegistry()
    if args.templates:
        registry.load_file(args.templates)
    dataset = reasoning.generate_reasoning(
        graph, grid=grid, seed=args.seed, template_kind=args.template_kind,
        template_variant=args.template_variant, max_pairs_per_rule=args.max_pairs,
        registry=registry,
    )
    digest = ontology.graph_hash(graph)
    path = Path(args.out)
    manifest_hash = _manifest(path, command="gen-reason", seed=args.seed, graph_hash=digest,
                              grid=[f"{a}-{b}" for a, b in grid],
                              template_kind=args.template_kind,
                              template_variant=args.template_variant,
                              max_pairs=args.max_pairs,
                              candidate_policy=dataset.candidate_policy)
    header = {"graph_hash": digest, "seed": args.seed,
              "grid": [f"{a}-{b}" for a, b in grid],
              "template_kind": args.template_kind,
              "template_variant": args.template_variant,
              "candidate_policy": dataset.candidate_policy,
              "warnings": dataset.warnings, "manifest_hash": manifest_hash}
    runio.write_jsonl(path, header,
                      (reasoning.instance_to_record(i) for i in dataset.instances))
    if args.provenance:
        derived = reasoning.materialize_closure(graph)
        rows = [
            (*triple, d.rule, "|".join(d.p1), "|".join(d.p2))
            for triple, d in sorted(derived.items())
        ]
        runio.write_tsv(args.provenance,
                        ["subject", "predicate", "object", "rule", "premise1", "premise2"],
                        rows, comments=[f"graph_hash={digest}"])
    for warning in dataset.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {len(dataset.instances)} instances to {path}")
    return 0


def cmd_pseudowords(args) -> int:
    if args.table:
        table = pseudowords.load_embedding_table(args.table)
    elif args.synthetic_dim:
        if not args.graph:
            raise CliError("--synthetic-dim needs --graph for the vocabulary")
        graph = ontology.load_graph(args.graph)
        vocab = []
        for label in graph.class_labels() + graph.property_labels():
            vocab.extend(label.split())
        vocab = list(dict.fromkeys(vocab))
        table = pseudowords.synthetic_table(vocab, dim=args.synthetic_dim, seed=args.seed)
    else:
        raise CliError("pseudowords needs --table FILE or --synthetic-dim D")
    pwset = pseudowords.sample_pseudowords(table, count=args.count, alpha=args.alpha,
                                           seed=args.seed, mode=args.mode)
    pseudowords.save_pseudowords(pwset, args.out)
    _manifest(Path(args.out), command="pseudowords", seed=args.seed, alpha=args.alpha,
              count=args.count, mode=args.mode, distance=pwset.distance,
              table=str(args.table) if args.table else f"synthetic:{args.synthetic_dim}")
    print(f"sampled {pwset.count} pseudowords at distance {pwset.distance:.6g} "
          f"({pwset.pair_count} pairs)")
    return 0


def _mem_probe_inputs(records, registry, args, lowercase):
    inputs = []
    for record in records:
        sample = memorize.record_to_sample(record)
        if args.split != "all" and sample.split != args.split:
            continue
        prompt = _mem_template(registry, sample, args.template_kind, args.template_variant,
                               lowercase=lowercase)
        inputs.append(scoring.ProbeInput(
            input_id=sample.sample_id, prompt=prompt,
            candidates=sample.candidates, golds=sample.golds,
        ))
    return inputs


def _reason_probe_inputs(records, args, pwset, pairs, lowercase):
    conj = prompting.Conjunction(args.conjunction)
    inputs = []
    seen_p2 = set()
    for record in records:
        instance = reasoning.record_to_instance(record)
        for pair in range(pairs):
            bindings = {slot: vec for slot, vec in pwset.pair(pair).items()
                        if slot in instance.pseudoword_slots}
            prompt = prompting.render_reasoning(instance, conj, lowercase=lowercase)
            inputs.append(scoring.ProbeInput(
                input_id=f"{instance.instance_id}#p{pair}", prompt=prompt,
                candidates=instance.candidates, golds=instance.golds, bindings=bindings,
            ))
            p2_key = (instance.rule, instance.p2.premise_id, pair)
            if instance.p2.probe is not None and p2_key not in seen_p2:
                seen_p2.add(p2_key)
                probe = instance.p2.probe
                probe_bindings = {slot: vec for slot, vec in pwset.pair(pair).items()}
                inputs.append(scoring.ProbeInput(
                    input_id=f"p2:{instance.rule}:{instance.p2.premise_id}#p{pair}",
                    prompt=prompting.parse_prompt(probe.template, lowercase=lowercase),
                    candidates=probe.candidates, golds=probe.golds,
                    bindings=probe_bindings,
                ))
    return inputs


def cmd_probe(args) -> int:
    header, records = runio.read_jsonl(args.inputs)
    config = scoring.ScoringConfig(mask_mode=args.mask_mode, pooling=args.pooling)
    registry = prompting.TemplateRegistry()
    if args.templates:
        registry.load_file(args.templates)

    pairs = 0
    if args.task == "mem":
        probe_builder = lambda lowercase: _mem_probe_inputs(records, registry, args, lowercase)
    elif args.task == "reason":
        if not args.pseudowords:
            raise CliError("probe --task reason needs --pseudowords")
        pwset = pseudowords.load_pseudowords(args.pseudowords)
        pairs = args.pairs if args.pairs else pwset.pair_count
        if pairs > pwset.pair_count:
            raise CliError(f"--pairs {pairs} exceeds sampled pair count {pwset.pair_count}")
        probe_builder = lambda lowercase: _reason_probe_inputs(records, args, pwset, pairs,
                                                               lowercase)
    else:
        return _probe_multiple_choice(args, header, records)

    oracle_spec = None
    if args.backend == "mock-oracle":
        oracle_spec = {}
        for probe in probe_builder(False):
            fp = backend_mod.prompt_fingerprint(probe.prompt.segments, probe.bindings)
            oracle_spec.update(backend_mod.favoring_entries(fp, probe.golds))
    backend = _open_backend(args.backend, args.in_flight, oracle_spec)
    try:
        lowercase = backend.handshake().casing == "uncased"
        inputs = probe_builder(lowercase)
        journal = args.journal or f"{args.out}.journal"
        results = scoring.batch_probe(inputs, config, backend, journal_path=journal,
                                      lowercase=lowercase)
    finally:
        backend.close()
    results.sort(key=lambda r: r["input_id"])
    manifest_hash = _manifest(Path(args.out), command="probe", task=args.task,
                              inputs=str(args.inputs), backend=args.backend,
                              mask_mode=args.mask_mode, pooling=args.pooling,
                              template_kind=args.template_kind,
                              template_variant=args.template_variant,
                              conjunction=args.conjunction, split=args.split,
                              pairs=pairs, graph_hash=header.get("graph_hash", ""))
    out_header = {
        "graph_hash": header.get("graph_hash", ""), "task": args.task,
        "backend": backend.handshake().name if hasattr(backend, "handshake") else args.backend,
        "mask_mode": args.mask_mode, "pooling": args.pooling,
        "template_kind": args.template_kind, "template_variant": args.template_variant,
        "split": args.split, "pairs": pairs, "manifest_hash": manifest_hash,
    }
    runio.write_jsonl(args.out, out_header, results)
    failed = sum(1 for r in results if "error" in r)
    print(f"probed {len(results)} inputs ({failed} failed) -> {args.out}")
    return 0


def _probe_multiple_choice(args, header, records) -> int:
    if args.task != "mem-mc":
        raise CliError(f"unknown probe task {args.task!r}")
    questions = [memorize.record_to_question(r) for r in records]
    oracle_spec = None
    if args.backend == "mock-oracle":
        oracle_spec = {}
        for question in questions:
            prompt = prompting.render_multiple_choice(question)
            oracle_spec.update(backend_mod.favoring_entries(
                f"t:{prompt}", [question.choices[question.answer_index]]))
    backend = _open_backend(args.backend, args.in_flight, oracle_spec)
    try:
        if not backend.handshake().supports_complete:
            raise CliError("backend does not advertise the complete capability")
        results = []
        for question in questions:
            prompt = prompting.render_multiple_choice(question)
            try:
                completion = backend.complete(prompt)
            except backend_mod.BackendError as exc:
                results.append({"input_id": f"{question.subtask}:{question.subject_id}",
                                "error": str(exc)})
                continue
            letter = evaluation.grade_answer(completion, len(question.choices))
            results.append({
                "input_id": f"{question.subtask}:{question.subject_id}",
                "completion": completion, "letter": letter,
                "answer_letter": question.answer_letter,
                "correct": letter == question.answer_letter,
                "unparsed": letter is None,
            })
    finally:
        backend.close()
    results.sort(key=lambda r: r["input_id"])
    manifest_hash = _manifest(Path(args.out), command="probe", task="mem-mc",
                              inputs=str(args.inputs), backend=args.backend,
                              graph_hash=header.get("graph_hash", ""))
    runio.write_jsonl(args.out, {"graph_hash": header.get("graph_hash", ""),
                                 "task": "mem-mc", "manifest_hash": manifest_hash}, results)
    print(f"asked {len(results)} questions -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    ks = tuple(int(k) for k in args.ks.split(","))
    if args.task == "mem":
        return _eval_mem(args, ks)
    if args.task == "mem-mc":
        return _eval_mem_mc(args)
    if args.task == "reason":
        return _eval_reason(args, ks)
    raise CliError(f"unknown eval task {args.task!r}")


def _metric_row(report: evaluation.MetricReport, ks) -> list[str]:
    values = report.as_dict()
    return [f"{values[f'R@{k}']:.4f}" for k in ks] + [
        f"{report.mrr:.4f}", f"{report.mrr_a:.4f}", str(report.n)]


def _eval_mem(args, ks) -> int:
    headers = []
    rows = []
    fig_rows = []
    for path in args.results:
        header, records = runio.read_jsonl(path)
        headers.append(header)
        valid = [r for r in records if "error" not in r]
        subtasks = sorted({r["input_id"].split(":", 1)[0] for r in valid})
        for subtask in subtasks:
            subset = [r for r in valid if r["input_id"].startswith(subtask + ":")]
            report = evaluation.compute_metrics(subset, ks)
            rows.append([subtask] + _metric_row(report, ks))
            fig_rows.append({"subtask": subtask, **report.as_dict()})
    graph_hash = _require_same_graph(headers)
    columns = ["subtask"] + [f"R@{k}" for k in ks] + ["MRR", "MRR_a", "n"]
    runio.write_tsv(args.out, columns, rows,
                    comments=[f"graph_hash={graph_hash}",
                              f"config={headers[0].get('mask_mode')}/"
                              f"{headers[0].get('pooling')}/"
                              f"{headers[0].get('template_kind')}"
                              f"v{headers[0].get('template_variant')}"])
    if args.figures:
        figures.memorizing_figure(fig_rows, Path(args.out).with_suffix(".png"))
    print(f"wrote {args.out}")
    return 0


def _eval_mem_mc(args) -> int:
    rows = []
    headers = []
    for path in args.results:
        header, records = runio.read_jsonl(path)
        headers.append(header)
        by_subtask: dict[str, list[dict]] = {}
        for record in records:
            if "error" in record:
                continue
            by_subtask.setdefault(record["input_id"].split(":", 1)[0], []).append(record)
        for subtask, subset in sorted(by_subtask.items()):
            correct = sum(1 for r in subset if r["correct"])
            unparsed = sum(1 for r in subset if r.get("unparsed"))
            rows.append([subtask, f"{correct / len(subset):.4f}", str(unparsed),
                         str(len(subset))])
    graph_hash = _require_same_graph(headers)
    runio.write_tsv(args.out, ["subtask", "accuracy", "unparsed", "n"], rows,
                    comments=[f"graph_hash={graph_hash}"])
    print(f"wrote {args.out}")
    return 0


def _eval_reason(args, ks) -> int:
    if not args.instances or not args.mem_results:
        raise CliError("eval --task reason needs --instances and --mem-results")
    instances_header, instance_records = runio.read_jsonl(args.instances)
    result_records = []
    results_header: dict = {}
    headers = [instances_header]
    for path in args.results:
        results_header, records = runio.read_jsonl(path)
        headers.append(results_header)
        result_records.extend(records)
    mem_header, mem_records = runio.read_jsonl(args.mem_results)
    headers.append(mem_header)
    _require_same_graph(headers)

    instances = [reasoning.record_to_instance(r) for r in instance_records]
    reasoning_results = {r["input_id"]: r for r in result_records
                         if not r["input_id"].startswith("p2:")}
    p2_results = {r["input_id"]: r for r in result_records
                  if r["input_id"].startswith("p2:")}
    memorizing_results = {r["input_id"]: r for r in mem_records if "error" not in r}
    pair_count = int(results_header.get("pairs") or 1)

    report = evaluation.reasoning_report(instances, reasoning_results, p2_results,
                                         memorizing_results, pair_count, ks)
    columns = (["rule", "p1_mode", "p2_mode"] + [f"R@{k}" for k in ks]
               + ["MRR", "MRR_a", "n", "pairs"])
    rows = []
    for rule, cells in report.cells.items():
        for (m1, m2), metrics in cells.items():
            if metrics is None:
                rows.append([rule, m1, m2] + ["-"] * (len(ks) + 4))
            else:
                rows.append([rule, m1, m2]
                            + [f"{metrics[f'R@{k}']:.4f}" for k in ks]
                            + [f"{metrics['MRR']:.4f}", f"{metrics['MRR_a']:.4f}",
                               f"{metrics['n']:.1f}", str(metrics['pairs'])])
    for (m1, m2), metrics in report.macro.items():
        if metrics is None:
            rows.append(["macro", m1, m2] + ["-"] * (len(ks) + 4))
        else:
            rows.append(["macro", m1, m2]
                        + [f"{metrics[f'R@{k}']:.4f}" for k in ks]
                        + [f"{metrics['MRR']:.4f}", f"{metrics['MRR_a']:.4f}",
                           f"{metrics['n']:.1f}", str(metrics['pairs'])])
    runio.write_tsv(args.out, columns, rows,
                    comments=[f"pairs={pair_count}"])
    if args.figures:
        panels = dict(report.cells)
        panels["macro"] = report.macro
        figures.reasoning_grid_figure(panels, Path(args.out).with_suffix(".png"))
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {args.out}")
    return 0


def cmd_report(args) -> int:
    """Merge per-config memorizing eval TSVs into one wide table plus a figure."""
    merged: dict[str, dict[str, str]] = {}
    config_names = []
    for path in args.evals:
        columns, rows = runio.read_tsv(path)
        name = Path(path).stem
        config_names.append(name)
        for row in rows:
            record = dict(zip(columns, row))
            for metric in METRIC_COLUMNS:
                if metric in record:
                    merged.setdefault(row[0], {})[f"{name}:{metric}"] = record[metric]
    subtasks = sorted(merged)
    columns = ["subtask"] + [f"{name}:{m}" for name in config_names for m in METRIC_COLUMNS]
    rows = [[subtask] + [merged[subtask].get(col, "-") for col in columns[1:]]
            for subtask in subtasks]
    runio.write_tsv(args.out, columns, rows)
    if args.figures and config_names:
        first = config_names[0]
        fig_rows = [
            {"subtask": subtask,
             **{m: float(merged[subtask].get(f"{first}:{m}", 0) or 0)
                for m in METRIC_COLUMNS}}
            for subtask in subtasks
        ]
        figures.memorizing_figure(fig_rows, Path(args.out).with_suffix(".png"))
    print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    """Probe + eval over the mask-mode x pooling x template-variant grid."""
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ks = tuple(int(k) for k in args.ks.split(","))
    summary_rows = []
    best: dict[tuple[str, str], tuple[float, str]] = {}
    variants = [int(v) for v in args.variants.split(",")]
    for mask_mode in ("multiple", "single"):
        for pooling in ("mean", "max", "first"):
            for variant in variants:
                label = f"{mask_mode}-{pooling}-v{variant}"
                config_dir = out_dir / label
                config_dir.mkdir(exist_ok=True)
                for inputs in args.inputs:
                    probe_args = argparse.Namespace(
                        task="mem", inputs=inputs, backend=args.backend,
                        mask_mode=mask_mode, pooling=pooling,
                        template_kind=args.template_kind, template_variant=variant,
                        conjunction="manual", split=args.split, templates=None,
                        pseudowords=None, pairs=0, in_flight=args.in_flight,
                        journal=None,
                        out=str(config_dir / (Path(inputs).stem + ".results.jsonl")),
                    )
                    cmd_probe(probe_args)
                for results_path in sorted(config_dir.glob("*.results.jsonl")):
                    _, records = runio.read_jsonl(results_path)
                    valid = [r for r in records if "error" not in r]
                    if not valid:
                        continue
                    subtask = valid[0]["input_id"].split(":", 1)[0]
                    report = evaluation.compute_metrics(valid, ks)
                    values = report.as_dict()
                    summary_rows.append([subtask, label]
                                        + [f"{values[f'R@{k}']:.4f}" for k in ks]
                                        + [f"{report.mrr:.4f}", f"{report.mrr_a:.4f}",
                                           str(report.n)])
                    for metric in [f"R@{k}" for k in ks] + ["MRR", "MRR_a"]:
                        key = (subtask, metric)
                        if key not in best or values[metric] > best[key][0]:
                            best[key] = (values[metric], label)
    columns = ["subtask", "config"] + [f"R@{k}" for k in ks] + ["MRR", "MRR_a", "n"]
    runio.write_tsv(out_dir / "sweep.tsv", columns, summary_rows)
    best_rows = [[subtask, metric, f"{value:.4f}", label]
                 for (subtask, metric), (value, label) in sorted(best.items())]
    runio.write_tsv(out_dir / "best.tsv", ["subtask", "metric", "value", "config"], best_rows)
    print(f"swept {len(summary_rows)} config/subtask cells -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ontocloze",
                                     description="Ontology cloze probing toolkit")
    parser.add_argument("--config", help="key=value file overriding flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="validate a triple TSV and emit canonical form")
    p.add_argument("--triples", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("ingest", help="build a graph from dump files")
    p.add_argument("--classes", required=True)
    p.add_argument("--members", required=True)
    p.add_argument("--properties", nargs="+", required=True)
    p.add_argument("--patch")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen-mem", help="generate memorizing subtasks")
    p.add_argument("--graph", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--direct-types", action="store_true",
                   help="TP golds use declared types only")
    p.add_argument("--multiple-choice", type=int, default=0,
                   help="also emit N-way multiple-choice questions")
    p.set_defaults(func=cmd_gen_mem)

    p = sub.add_parser("gen-reason", help="generate reasoning instances")
    p.add_argument("--graph", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--grid", default="all", help='"all" or cells like "EX-IM,NO-NO"')
    p.add_argument("--template-kind", choices=("manual", "soft"), default="manual")
    p.add_argument("--template-variant", type=int, default=3)
    p.add_argument("--templates", help="extra template TSV")
    p.add_argument("--max-pairs", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--provenance", help="also emit closure provenance TSV")
    p.set_defaults(func=cmd_gen_reason)

    p = sub.add_parser("pseudowords", help="sample pseudoword vectors")
    p.add_argument("--table", help="embedding table exported by a backend")
    p.add_argument("--synthetic-dim", type=int,
                   help="use a synthetic table of this dimension")
    p.add_argument("--graph", help="vocabulary source for --synthetic-dim")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mode", choices=("sphere", "ball"), default="sphere")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pseudowords)

    p = sub.add_parser("probe", help="score candidates through a backend")
    p.add_argument("--task", choices=("mem", "reason", "mem-mc"), required=True)
    p.add_argument("--inputs", required=True)
    p.add_argument("--backend", default="mock-oracle")
    p.add_argument("--mask-mode", choices=scoring.MASK_MODES, default="multiple")
    p.add_argument("--pooling", choices=scoring.POOLINGS, default="mean")
    p.add_argument("--template-kind", choices=("manual", "soft"), default="manual")
    p.add_argument("--template-variant", type=int, default=3)
    p.add_argument("--templates", help="extra template TSV")
    p.add_argument("--conjunction", choices=("manual", "soft"), default="manual")
    p.add_argument("--split", choices=("train", "dev", "test", "all"), default="test")
    p.add_argument("--pseudowords", help="pseudoword set file (reasoning)")
    p.add_argument("--pairs", type=int, default=0,
                   help="pseudoword pairs to probe (default: all sampled pairs)")
    p.add_argument("--in-flight", type=int, default=8)
    p.add_argument("--journal", help="progress journal path (default <out>.journal)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("eval", help="compute metrics from probe results")
    p.add_argument("--task", choices=("mem", "reason", "mem-mc"), required=True)
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--instances", help="reasoning instances file (reason)")
    p.add_argument("--mem-results", help="memorizing results for premise verdicts (reason)")
    p.add_argument("--ks", default="1,5")
    p.add_argument("--figures", action="store_true", help="render PNG next to the TSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="merge eval TSVs into a wide table")
    p.add_argument("--evals", nargs="+", required=True)
    p.add_argument("--figures", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="probe + eval over the scoring-config grid")
    p.add_argument("--inputs", nargs="+", required=True, help="memorizing sample files")
    p.add_argument("--backend", default="mock-oracle")
    p.add_argument("--template-kind", choices=("manual", "soft"), default="manual")
    p.add_argument("--variants", default="1,2,3")
    p.add_argument("--split", choices=("train", "dev", "test", "all"), default="test")
    p.add_argument("--ks", default="1,5")
    p.add_argument("--in-flight", type=int, default=8)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    return parser


def _inject_config(argv: list[str]) -> list[str]:
    """Expand --config into flags placed before explicit ones, which then win."""
    if not argv:
        return argv
    rest = list(argv)
    config_path = None
    if rest[0] == "--config" and len(rest) >= 2:
        config_path, rest = rest[1], rest[2:]
    elif rest[0].startswith("--config="):
        config_path, rest = rest[0].split("=", 1)[1], rest[1:]
    if not config_path or not rest:
        return rest
    command, tail = rest[0], rest[1:]
    injected: list[str] = []
    for key, value in _load_config(config_path).items():
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                injected.append(flag)
        else:
            injected.extend([flag, value])
    return [command] + injected + tail


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _inject_config(argv)
    except (CliError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ontology.OntologyError, scoring.ScoringError,
            evaluation.EvaluationError, prompting.TemplateError,
            pseudowords.PseudowordError, reasoning.RuleMatchError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except backend_mod.BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
