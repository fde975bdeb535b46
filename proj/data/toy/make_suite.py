#!/usr/bin/env python3
"""Regenerates the toy suite: tasks.jsonl, demos.jsonl and script.json.

Each task carries a line "spec: NAME = EXPR". Ground truths are computed here
by evaluating the helper definitions, independently of the C++ engine.

  L1  count_<f>  = fetch_<f>() + c          helper from a semantic demo
  L2  parse_<f>  = fetch_<f>() % m + c      helper from a semantic demo
  L3  solve_<a>  = parse_<a>() * 2 + parse_<b>()
  L4  report_<a> = solve_<a>() + parse_<b>() * 3   (a, b) as in L3

L3 and L4 reference helpers that only exist once an earlier task's tool has
been committed to episodic memory.
"""

import json
import pathlib

HERE = pathlib.Path(__file__).resolve().parent

FAMILIES = {
    # family: (fetch value, topic sentence for the fetch helper)
    "wayback": (137, "archived snapshots listed by the wayback index"),
    "pdf": (58, "pages in the scanned pdf report"),
    "chess": (24, "legal moves in the chess endgame position"),
    "csv": (311, "rows in the csv export of the ledger"),
    "audio": (96, "seconds of speech in the audio clip"),
    "wiki": (45, "revisions of the wiki article"),
    "orbit": (203, "minutes in one orbit of the station"),
    "zip": (17, "files inside the zip archive"),
}
ORDER = list(FAMILIES)

L1_OFFSET = {f: 10 + i for i, f in enumerate(ORDER)}
L2_MOD = {f: 7 + 2 * i for i, f in enumerate(ORDER)}
L2_OFFSET = {f: 3 + i for i, f in enumerate(ORDER)}
L3_PAIRS = [("wayback", "pdf"), ("chess", "csv"), ("audio", "wiki"), ("orbit", "zip")]

# Human-annotated levels (1..3), deliberately coarser than the re-estimated 1..4.
HUMAN = {
    1: [1, 1, 2, 1, 1, 2, 1, 1],
    2: [1, 2, 2, 1, 2, 3, 2, 1],
    3: [2, 3, 2, 3],
    4: [3, 3, 2, 3],
}

# Proxy step counts per intended level: (react steps, plan-execute steps); 0 never succeeds.
PROXY_STEPS = {1: (2, 3), 2: (4, 4), 3: (6, 5), 4: (0, 0)}


def fetch(f):
    return FAMILIES[f][0]


def parse(f):
    return fetch(f) % L2_MOD[f] + L2_OFFSET[f]


def solve(a, b):
    return parse(a) * 2 + parse(b)


def build_tasks():
    tasks = []

    def add(level, idx, name, expr, truth, question):
        tasks.append({
            "task_id": f"toy-l{level}-{name.replace('_', '-')}",
            "question": f"{question}\nspec: {name} = {expr}",
            "level": HUMAN[level][idx],
            "final_answer": str(truth),
            "_name": name,
            "_level": level,
        })

    for i, f in enumerate(ORDER):
        c = L1_OFFSET[f]
        add(1, i, f"count_{f}", f"fetch_{f}() + {c}", fetch(f) + c,
            f"Count the {FAMILIES[f][1]} and add the {c} entries kept offline.")
    for i, f in enumerate(ORDER):
        m, c = L2_MOD[f], L2_OFFSET[f]
        add(2, i, f"parse_{f}", f"fetch_{f}() % {m} + {c}", parse(f),
            f"Parse the {f} source: take the {FAMILIES[f][1]} modulo {m}, then add {c}.")
    for i, (a, b) in enumerate(L3_PAIRS):
        add(3, i, f"solve_{a}", f"parse_{a}() * 2 + parse_{b}()", solve(a, b),
            f"Combine the parsed {a} value twice with the parsed {b} value.")
    for i, (a, b) in enumerate(L3_PAIRS):
        add(4, i, f"report_{a}", f"solve_{a}() + parse_{b}() * 3", solve(a, b) + parse(b) * 3,
            f"Report the solved {a} figure plus three times the parsed {b} value.")
    return tasks


def build_demos():
    demos = []
    for f in ORDER:
        value, topic = FAMILIES[f]
        demos.append({
            "title": f"fetch_{f}: read the {f} source",
            "description": f"Returns the number of {topic}. Call it instead of re-reading the {f} source.",
            "code": f"def fetch_{f}():\n    # {topic}\n    return {value}",
            "tags": [f, "fetch"],
            "target_agent": "developer",
        })
    planner_demos = [
        ("Decompose a spec into one implementation step",
         "When the task states spec: NAME = EXPR, plan a single step that implements NAME as EXPR."),
        ("Answer from the tool output",
         "After a sub-plan succeeds, the printed value of the implemented function is the final answer."),
        ("Reuse helpers before writing new ones",
         "Helpers named in EXPR usually exist already as tools from earlier tasks."),
        ("Retry a failed step",
         "If a sub-plan failed, re-issue it; the developer sees the previous traceback."),
    ]
    for title, desc in planner_demos:
        demos.append({
            "title": title,
            "description": desc,
            "code": "# - implement NAME = EXPR\n# FINAL ANSWER: <printed value>",
            "tags": ["planning"],
            "target_agent": "planner",
        })
    return demos


def build_script(tasks):
    proxies = {}
    for t in tasks:
        react, plan = PROXY_STEPS[t["_level"]]
        proxies[t["_name"]] = {
            "react": {"steps": react, "answer": t["final_answer"]},
            "plan-execute": {"steps": plan, "answer": t["final_answer"]},
        }
    return {"kind": "toy", "hasty_models": ["toy-path-b"], "hasty_answer": "42", "proxies": proxies}


def main():
    tasks = build_tasks()
    with open(HERE / "tasks.jsonl", "w") as out:
        for t in tasks:
            out.write(json.dumps({k: v for k, v in t.items() if not k.startswith("_")}) + "\n")
    with open(HERE / "demos.jsonl", "w") as out:
        for d in build_demos():
            out.write(json.dumps(d) + "\n")
    with open(HERE / "script.json", "w") as out:
        json.dump(build_script(tasks), out, indent=2, sort_keys=True)
        out.write("\n")


if __name__ == "__main__":
    main()
