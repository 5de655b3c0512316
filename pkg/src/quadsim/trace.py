"""Flight trace files: one delimited-text row per environment per step.

Columns: env, t, px..pz, qw..qz, vx..vz, wx..wz, a0..a{k}, one rew_<name>
column per reward term, reward, done, outcome.  Floats are written with
17 significant digits so parsing a written file reproduces the records
exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

STATE_COLS = ["px", "py", "pz", "qw", "qx", "qy", "qz",
              "vx", "vy", "vz", "wx", "wy", "wz"]


@dataclass(frozen=True)
class TraceRecord:
    env: int
    t: float
    pos: tuple
    quat: tuple
    vel: tuple
    omega: tuple
    action: tuple
    terms: tuple          # ((name, value), ...) in column order
    reward: float
    done: bool
    outcome: str


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trace(path, records) -> None:
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    act_dim = len(records[0].action)
    term_names = [name for name, _ in records[0].terms]
    header = (
        ["env", "t"]
        + STATE_COLS
        + [f"a{i}" for i in range(act_dim)]
        + [f"rew_{name}" for name in term_names]
        + ["reward", "done", "outcome"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in records:
            row = (
                [str(r.env), _fmt(r.t)]
                + [_fmt(v) for v in (*r.pos, *r.quat, *r.vel, *r.omega)]
                + [_fmt(v) for v in r.action]
                + [_fmt(v) for _, v in r.terms]
                + [_fmt(r.reward), str(int(r.done)), r.outcome]
            )
            writer.writerow(row)


def read_trace(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        act_dim = sum(1 for h in header if h.startswith("a") and h[1:].isdigit())
        term_names = [h[len("rew_"):] for h in header if h.startswith("rew_")]
        records = []
        for row in reader:
            vals = dict(zip(header, row))
            records.append(
                TraceRecord(
                    env=int(vals["env"]),
                    t=float(vals["t"]),
                    pos=tuple(float(vals[c]) for c in ("px", "py", "pz")),
                    quat=tuple(float(vals[c]) for c in ("qw", "qx", "qy", "qz")),
                    vel=tuple(float(vals[c]) for c in ("vx", "vy", "vz")),
                    omega=tuple(float(vals[c]) for c in ("wx", "wy", "wz")),
                    action=tuple(float(vals[f"a{i}"]) for i in range(act_dim)),
                    terms=tuple(
                        (name, float(vals[f"rew_{name}"])) for name in term_names
                    ),
                    reward=float(vals["reward"]),
                    done=bool(int(vals["done"])),
                    outcome=vals["outcome"],
                )
            )
    return records


def records_from_step(env, actions, result):
    """One TraceRecord per environment from a StepResult (post-step state).

    For auto-reset environments the recorded state is the post-reset one;
    the outcome column still carries the terminal outcome for that step.
    """
    t = result.info["episode_step"] * env.dt
    terms = result.info["reward_terms"]
    names = list(terms.keys())
    out = []
    for i in range(env.n):
        out.append(
            TraceRecord(
                env=i,
                t=float(t[i]),
                pos=tuple(float(x) for x in env.state.pos_w[i]),
                quat=tuple(float(x) for x in env.state.quat_wb[i]),
                vel=tuple(float(x) for x in env.state.vel_w[i]),
                omega=tuple(float(x) for x in env.state.omega_b[i]),
                action=tuple(float(x) for x in actions[i]),
                terms=tuple((name, float(terms[name][i])) for name in names),
                reward=float(result.reward[i]),
                done=bool(result.done[i]),
                outcome=result.info["outcome"][i].name,
            )
        )
    return out
