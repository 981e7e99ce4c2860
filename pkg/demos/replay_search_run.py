"""Run a short evolutionary search against a scripted (replay) backend.

The replay file stands in for a live chat-completions endpoint, so the whole
loop — seed evaluation, prompt selection, response parsing, candidate scoring,
elite-archive merging — runs hermetically and deterministically.
"""

import json
import tempfile
from pathlib import Path

from specsearch import bridge, dsl, graphs, search, training


def scripted_responses(generations):
    """A complete replay script that proposes mild variations of the seeds."""
    records = []
    for gen in range(1, generations + 1):
        for op in ("E1", "E2", "C1"):
            for slot in range(4):
                alpha = f"0.{gen}{slot + 1}"
                program = dsl.builtin("appnp").replace("alpha = 0.1",
                                                       f"alpha = {alpha}")
                text = (f"Personalized-propagation variant with alpha={alpha}.\n"
                        f"```\n{program}\n```")
                records.append({"gen": gen, "op": op, "slot": slot, "text": text})
    return records


def main():
    graph = graphs.gen_synthetic(200, 3, 0.85, 8.0, 10, 1.0, seed=5)
    split = graphs.make_split(graph.num_nodes, (0.2, 0.2, 0.6),
                              labels=graph.labels, seed=0, stratified=True)

    with tempfile.TemporaryDirectory() as tmp:
        replay_path = Path(tmp) / "replay.jsonl"
        with open(replay_path, "w", encoding="utf-8") as fh:
            for rec in scripted_responses(3):
                fh.write(json.dumps(rec) + "\n")

        report = search.run_search(
            graph, split,
            search.SearchConfig(generations=3, pool_size=4, seed=0),
            training.TrainConfig(max_epochs=30, patience=30, hidden=16, seed=0),
            bridge.ReplayBackend(replay_path),
            out_dir=Path(tmp) / "run",
            log=print)

        print("\nconvergence:")
        print((Path(tmp) / "run" / "convergence.csv").read_text())
        print("best mechanism (fitness "
              f"{report.best.fitness:.3f}, origin {report.best.origin}):\n")
        print(report.best.program_text)


if __name__ == "__main__":
    main()
