"""Writes the mini-study corpora, annotations and run config.

Labels are spelled out per cell below; texts are placeholders. Re-running
this script reproduces the committed files byte for byte.
"""

import json
from pathlib import Path

HERE = Path(__file__).resolve().parent

STANCE = "llm:gpt-3.5-turbo"
EMOTION = "neural:emotion"
MORAL = "neural:moral"

# (stance, emotions, moral foundations) per instance.
# Cells: dataset -> topic -> side -> ideology -> instances.
CELLS = {
    "COVID-19": {
        "masking": {
            "real": {
                "liberal": [
                    ("negative", "anger fear", "care"),
                    ("neutral", "", "care fairness"),
                    ("positive", "trust optimism", "care"),
                    ("positive", "joy trust", "authority"),
                ],
                "conservative": [
                    ("negative", "anger disgust", "subversion"),
                    ("negative", "anger", "harm"),
                    ("negative", "fear pessimism", "betrayal"),
                    ("positive", "trust", "authority loyalty"),
                ],
            },
            "pretrained": {
                "liberal": [
                    ("negative", "fear", "care"),
                    ("positive", "trust", "care"),
                    ("positive", "optimism", "fairness"),
                ],
                "conservative": [
                    ("negative", "anger", "harm"),
                    ("negative", "disgust", "subversion"),
                    ("positive", "trust", "loyalty"),
                ],
            },
            "finetuned": {
                "liberal": [
                    ("neutral", "trust", "care"),
                    ("positive", "joy", "care"),
                    ("negative", "anger", "authority"),
                ],
                "conservative": [
                    ("negative", "anger", "harm"),
                    ("negative", "anger disgust", "subversion"),
                    ("neutral", "pessimism", "betrayal"),
                ],
            },
        },
        "vaccine": {
            "real": {
                "liberal": [
                    ("positive", "trust optimism", "care"),
                    ("positive", "joy", "care"),
                    ("neutral", "anticipation", "fairness"),
                    ("negative", "anger", "harm"),
                ],
                "conservative": [
                    ("negative", "fear", "degradation"),
                    ("negative", "anger disgust", "subversion"),
                    ("neutral", "surprise", "authority"),
                    ("negative", "fear", "harm"),
                ],
            },
            "pretrained": {
                "liberal": [
                    ("positive", "trust", "care"),
                    ("positive", "optimism", "care"),
                    ("neutral", "", "fairness"),
                ],
                "conservative": [
                    ("negative", "fear", "harm"),
                    ("neutral", "surprise", "purity"),
                    ("negative", "anger", "subversion"),
                ],
            },
            "finetuned": {
                "liberal": [
                    ("positive", "trust joy", "care"),
                    ("negative", "anger", "harm"),
                    ("positive", "love", "care"),
                ],
                "conservative": [
                    ("negative", "fear disgust", "degradation"),
                    ("negative", "anger", "subversion"),
                    ("negative", "sadness", "harm"),
                ],
            },
        },
    },
    "Abortion": {
        "autonomy": {
            "real": {
                "liberal": [
                    ("positive", "anger", "fairness"),
                    ("positive", "love", "care"),
                    ("neutral", "sadness", "fairness cheating"),
                ],
                "conservative": [
                    ("negative", "sadness", "purity"),
                    ("negative", "disgust", "degradation"),
                    ("positive", "love", "care"),
                ],
            },
            "pretrained": {
                "liberal": [
                    ("positive", "trust", "fairness"),
                    ("neutral", "", "care"),
                ],
                "conservative": [
                    ("negative", "disgust", "purity"),
                    ("negative", "sadness", "degradation"),
                ],
            },
            # No conservative generations: the cell is reported as missing.
            "finetuned": {
                "liberal": [
                    ("positive", "anger", "fairness"),
                    ("positive", "love", "care"),
                ],
                "conservative": [],
            },
        },
    },
}

METHODS = ["pretrained", "finetuned"]
FILE_STEM = {"COVID-19": "covid", "Abortion": "abortion"}


def dump(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def build():
    datasets = []
    for dataset, topics in CELLS.items():
        stem = FILE_STEM[dataset]
        sides = {"real": ([], [])}
        for m in METHODS:
            sides[m] = ([], [])
        for topic, by_side in topics.items():
            for side, by_ideology in by_side.items():
                corpus, annotations = sides[side]
                source = "real" if side == "real" else "generated"
                for ideology, rows in by_ideology.items():
                    for k, (stance, emotions, moral) in enumerate(rows, 1):
                        iid = f"{stem}-{side}-{topic}-{ideology[:3]}-{k}"
                        corpus.append({
                            "id": iid,
                            "text": f"{ideology} {side} text {k} about {topic}",
                            "ideology": ideology,
                            "source": source,
                            "topic": topic,
                        })
                        annotations.append({"instance_id": iid, "feature": "stance",
                                            "labels": [stance], "annotator": STANCE})
                        annotations.append({"instance_id": iid, "feature": "emotion",
                                            "labels": emotions.split(), "annotator": EMOTION})
                        annotations.append({"instance_id": iid, "feature": "moral_foundation",
                                            "labels": moral.split(), "annotator": MORAL})

        real_corpus, real_ann = sides["real"]
        # Noise the evaluation must ignore: an untagged tweet without
        # annotations, and a second stance annotator on one instance.
        real_corpus.append({"id": f"{stem}-real-untagged", "text": "untagged chatter",
                            "ideology": "liberal", "source": "real"})
        first = real_corpus[0]["id"]
        real_ann.append({"instance_id": first, "feature": "stance",
                         "labels": ["neutral"], "annotator": "human"})

        entry = {"name": dataset, "topics": list(topics),
                 "real": {"corpus": f"{stem}_real.jsonl",
                          "annotations": [f"{stem}_real.ann.jsonl"]},
                 "methods": []}
        dump(HERE / f"{stem}_real.jsonl", real_corpus)
        dump(HERE / f"{stem}_real.ann.jsonl", real_ann)
        for m in METHODS:
            corpus, annotations = sides[m]
            dump(HERE / f"{stem}_{m}.jsonl", corpus)
            dump(HERE / f"{stem}_{m}.ann.jsonl", annotations)
            entry["methods"].append({"name": m, "corpus": f"{stem}_{m}.jsonl",
                                     "annotations": [f"{stem}_{m}.ann.jsonl"]})
        datasets.append(entry)

    config = {
        "output_dir": "out",
        "seed": 42,
        "metrics": {"epsilon": 1e-6, "tie_tolerance": 0.0,
                    "kld_direction": "gen-vs-real", "log_base": "e"},
        "study": {
            "datasets": datasets,
            "features": ["stance", "emotion", "moral_foundation"],
            "annotators": {"stance": STANCE},
        },
        "report": {"formats": ["markdown", "csv", "json"],
                   "generated_at": "2024-01-01T00:00:00Z"},
    }
    with open(HERE / "config.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump(config, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    build()
