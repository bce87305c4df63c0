"""Synthetic OpTC-style audit logs with planted attack behaviour.

Every task instance is drawn from a behaviour template: a small process
tree whose branches are optional, whose leaf spawns repeat a random number
of times and whose file accesses repeat (edge weight). Each instance starts
under a fresh, never-seen parent pid, so it becomes its own task tree.

Attack instances come in two flavours: *overt* trees built from an attack
template, and *stealthy* ones where a short malicious branch is injected into
an otherwise benign instance. Only the malicious branch's events carry
``label = 1``.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import IO, Iterable, Sequence

from .ingest import batch_events, event_from_record
from .tree import TaskTree


@dataclass
class Spawn:
    """Template node. ``kind`` is 'proc' or 'file'."""

    label: str
    p: float = 1.0
    count: tuple[int, int] = (1, 1)
    children: list["Spawn"] = field(default_factory=list)
    kind: str = "proc"


def P(label, *children, p=1.0, count=(1, 1)):
    return Spawn(label, p, count, list(children))


def F(path, p=1.0, count=(1, 1)):
    return Spawn(path, p, count, [], "file")


_SYS = "C:\\Windows\\System32\\"

BENIGN_TEMPLATES: list[Spawn] = [
    P(_SYS + "services.exe",
      P(_SYS + "svchost.exe",
        P(_SYS + "conhost.exe", count=(1, 3)),
        P(_SYS + "wbem\\WmiPrvSE.exe", P(_SYS + "conhost.exe"), p=0.5),
        P(_SYS + "taskhostw.exe", p=0.3),
        F(_SYS + "winevt\\Logs\\Security.evtx", count=(1, 4)))),
    P(_SYS + "explorer.exe",
      P("C:\\Program Files\\Google\\Chrome\\chrome.exe",
        P("C:\\Program Files\\Google\\Chrome\\chrome.exe", count=(1, 4)),
        F("C:\\Users\\u\\AppData\\Local\\Google\\Chrome\\Cookies", p=0.7, count=(1, 3)))),
    P(_SYS + "explorer.exe",
      P("C:\\Program Files\\Microsoft Office\\OUTLOOK.EXE",
        P("C:\\Program Files\\Microsoft Office\\WINWORD.EXE",
          F("C:\\Users\\u\\Documents\\report.docx", count=(1, 2)), p=0.4),
        P("C:\\Program Files\\Microsoft Office\\EXCEL.EXE", p=0.2),
        F("C:\\Users\\u\\AppData\\Local\\Microsoft\\Outlook\\u.ost", count=(1, 5)))),
    P(_SYS + "services.exe",
      P("C:\\ProgramData\\Microsoft\\Windows Defender\\MsMpEng.exe",
        P("C:\\ProgramData\\Microsoft\\Windows Defender\\MpCmdRun.exe",
          P(_SYS + "conhost.exe"), p=0.5),
        F("C:\\ProgramData\\Microsoft\\Windows Defender\\mpcache.bin", p=0.6))),
    P(_SYS + "svchost.exe",
      P(_SYS + "taskeng.exe",
        P("C:\\Program Files\\Google\\Update\\GoogleUpdate.exe",
          P("C:\\Program Files\\Google\\Update\\GoogleUpdate.exe", count=(1, 2))))),
    P(_SYS + "userinit.exe",
      P(_SYS + "explorer.exe",
        P("C:\\Program Files\\Microsoft OneDrive\\OneDrive.exe", p=0.6),
        P(_SYS + "SecurityHealthSystray.exe", p=0.5),
        P(_SYS + "ctfmon.exe"))),
    P(_SYS + "cmd.exe",
      P(_SYS + "conhost.exe"),
      P(_SYS + "ipconfig.exe", p=0.3),
      P(_SYS + "net.exe", P(_SYS + "net1.exe"), p=0.2)),
    P(_SYS + "svchost.exe",
      P(_SYS + "wuauclt.exe",
        P(_SYS + "TiWorker.exe", p=0.5),
        F("C:\\Windows\\SoftwareDistribution\\DataStore\\DataStore.edb", count=(1, 3)))),
    P(_SYS + "winlogon.exe",
      P(_SYS + "userinit.exe", P(_SYS + "explorer.exe")),
      P(_SYS + "dwm.exe"),
      P(_SYS + "fontdrvhost.exe", p=0.7)),
]

ATTACK_TEMPLATES: list[Spawn] = [
    P(_SYS + "explorer.exe",
      P("C:\\Program Files\\Microsoft Office\\OUTLOOK.EXE",
        P("C:\\Program Files\\Microsoft Office\\WINWORD.EXE",
          P(_SYS + "WindowsPowerShell\\v1.0\\powershell.exe",
            P(_SYS + "cmd.exe", P(_SYS + "whoami.exe"), P(_SYS + "net.exe")),
            P(_SYS + "rundll32.exe", F("C:\\Users\\u\\AppData\\Local\\Temp\\lsass.dmp")))))),
    P(_SYS + "services.exe",
      P(_SYS + "svchost.exe",
        P(_SYS + "rundll32.exe",
          P(_SYS + "WindowsPowerShell\\v1.0\\powershell.exe",
            P("C:\\Users\\u\\AppData\\Local\\Temp\\mimikatz.exe")),
          P(_SYS + "conhost.exe")))),
    P(_SYS + "explorer.exe",
      P("C:\\Program Files\\Notepad++\\notepad++.exe",
        P("C:\\Program Files\\Notepad++\\updater\\gup.exe",
          P(_SYS + "cmd.exe", P(_SYS + "PING.EXE", count=(2, 3)), P(_SYS + "ARP.EXE")),
          P(_SYS + "WindowsPowerShell\\v1.0\\powershell.exe")))),
    P(_SYS + "wbem\\WmiPrvSE.exe",
      P(_SYS + "WindowsPowerShell\\v1.0\\powershell.exe",
        P(_SYS + "net.exe"), P(_SYS + "schtasks.exe"), P(_SYS + "reg.exe"))),
]

INJECTED_BRANCHES: list[Spawn] = [
    P(_SYS + "rundll32.exe", P(_SYS + "WindowsPowerShell\\v1.0\\powershell.exe")),
    P(_SYS + "WindowsPowerShell\\v1.0\\powershell.exe"),
    P(_SYS + "rundll32.exe", F("C:\\Users\\u\\AppData\\Local\\Temp\\beacon.dll")),
    P(_SYS + "cmd.exe", P(_SYS + "whoami.exe"), P(_SYS + "net.exe")),
]

_FLOW_RATE = 0.4
_BASE = datetime(2019, 9, 23)


class _Emitter:
    def __init__(self, rng: random.Random, host: str):
        self.rng = rng
        self.host = host
        self.pid = 1000 + rng.randrange(1000)
        self.eid = 0
        self.events: list[dict] = []

    def next_pid(self) -> int:
        self.pid += self.rng.randint(4, 40)
        return self.pid

    def emit(self, ts, **fields) -> None:
        self.eid += 1
        rec = {
            "id": f"{self.host}-{self.eid:08x}",
            "principal": "NT AUTHORITY\\SYSTEM",
            "timestamp": ts.strftime("%Y-%m-%dT%H:%M:%S.%f"),
            "hostname": self.host,
        }
        rec.update(fields)
        self.events.append(rec)


def _instantiate(node: Spawn, rng: random.Random, swap: float) -> list[tuple[Spawn, list]]:
    """Expand a template node's children into concrete (spawn, grandchildren) lists."""
    out = []
    for child in node.children:
        if rng.random() >= child.p:
            continue
        for _ in range(rng.randint(*child.count)):
            out.append((child, _instantiate(child, rng, swap) if child.kind == "proc" else []))
    if len(out) > 1 and rng.random() < swap:
        i = rng.randrange(len(out) - 1)
        out[i], out[i + 1] = out[i + 1], out[i]
    return out


def _emit_task(
    em: _Emitter,
    root: Spawn,
    instance: list,
    start: datetime,
    malicious: set[int],
) -> datetime:
    """Emit events for one instance; nodes whose ``id()`` is in ``malicious`` get label 1."""
    rng = em.rng
    ts = start
    root_pid = em.next_pid()
    root_obj = f"o{root_pid:x}{em.eid:x}"

    def walk(label, pid, obj, ppid, kids, bad):
        nonlocal ts
        for spawn, grand in kids:
            ts += timedelta(milliseconds=rng.randint(5, 900))
            lab = 1 if (bad or id(spawn) in malicious) else 0
            if spawn.kind == "file":
                em.emit(ts, object="FILE", action=rng.choice(("READ", "WRITE")), pid=pid, ppid=ppid,
                        actorid=obj, objectid=f"f{em.eid:x}", file_path=spawn.label,
                        image_path=label, parent_image_path=None, label=lab)
                continue
            cpid = em.next_pid()
            cobj = f"o{cpid:x}{em.eid:x}"
            em.emit(ts, object="PROCESS", action="START", pid=cpid, ppid=pid, actorid=obj,
                    objectid=cobj, file_path=None, image_path=spawn.label,
                    parent_image_path=label, label=lab)
            if rng.random() < _FLOW_RATE:
                ts += timedelta(milliseconds=rng.randint(1, 200))
                em.emit(ts, object="FLOW", action="MESSAGE", pid=cpid, ppid=pid, actorid=cobj,
                        objectid=f"n{em.eid:x}", file_path=None, image_path=spawn.label,
                        parent_image_path=label, label=lab)
            walk(spawn.label, cpid, cobj, pid, grand, bool(lab))

    walk(root.label, root_pid, root_obj, root_pid + 1, instance, id(root) in malicious)
    return ts


@dataclass
class SyntheticLog:
    events: list[dict]
    n_tasks: int
    n_attacks: int

    def write_jsonl(self, fh: IO[str]) -> None:
        for rec in self.events:
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")


def generate_events(
    n_tasks: int | None = None,
    *,
    n_events: int | None = None,
    n_attacks: int = 0,
    hosts: Sequence[str] = ("h201", "h402", "h651"),
    days: int = 1,
    stealth_fraction: float = 0.5,
    swap: float = 0.05,
    variant_rate: float = 0.0,
    seed: int = 0,
    templates: Sequence[Spawn] = BENIGN_TEMPLATES,
) -> SyntheticLog:
    """Generate an interleaved, time-sorted event log.

    Either ``n_tasks`` (benign task instances) or ``n_events`` (approximate
    total event count) must be given. ``n_attacks`` attack trees are planted
    on top, ``stealth_fraction`` of them as branches injected into benign
    instances. A ``variant_rate`` fraction of benign instances also touches a
    one-off scratch file, which makes their structure unique.
    """
    if (n_tasks is None) == (n_events is None):
        raise ValueError("give exactly one of n_tasks or n_events")
    rng = random.Random(seed)
    emitters = {h: _Emitter(random.Random(rng.random()), h) for h in hosts}
    tasks = 0
    total = lambda: sum(len(e.events) for e in emitters.values())  # noqa: E731
    while True:
        if n_tasks is not None and tasks >= n_tasks:
            break
        if n_events is not None and total() >= n_events:
            break
        extra = None
        if variant_rate and rng.random() < variant_rate:
            extra = F(f"C:\\Users\\u\\AppData\\Local\\Temp\\~tmp{tasks:06d}.tmp")
        _one_task(rng, emitters, days, rng.choice(templates), set(), swap, inject=extra)
        tasks += 1
    n_stealth = round(n_attacks * stealth_fraction)
    for k in range(n_attacks):
        if k < n_stealth:
            base = rng.choice(templates)
            injected = rng.choice(INJECTED_BRANCHES)
            _one_task(rng, emitters, days, base, {id(injected)}, swap, inject=injected)
        else:
            atk = ATTACK_TEMPLATES[k % len(ATTACK_TEMPLATES)]
            _one_task(rng, emitters, days, atk, {id(atk)}, swap)
    events = [ev for h in hosts for ev in emitters[h].events]
    events.sort(key=lambda r: (r["timestamp"], r["hostname"], r["id"]))
    return SyntheticLog(events, tasks, n_attacks)


def _one_task(rng, emitters, days, template, malicious, swap, inject=None):
    host = rng.choice(sorted(emitters))
    em = emitters[host]
    day = rng.randrange(days)
    start = _BASE + timedelta(days=day, seconds=rng.uniform(60, 80_000))
    instance = _instantiate(template, rng, swap)
    if inject is not None:
        _inject(instance, inject, rng, swap)
    if not instance:
        # degenerate draw: keep at least one child so the task has an event
        first = template.children[0]
        instance = [(first, _instantiate(first, rng, swap))]
    _emit_task(em, template, instance, start, malicious)


def _inject(instance: list, branch: Spawn, rng: random.Random, swap: float) -> None:
    """Append ``branch`` under a random process node of an instance."""
    slots = [instance]
    stack = list(instance)
    while stack:
        spawn, kids = stack.pop()
        if spawn.kind == "proc":
            slots.append(kids)
            stack.extend(kids)
    target = rng.choice(slots)
    target.insert(rng.randint(0, len(target)), (branch, _instantiate(branch, rng, swap)))


def generate_forest(n_tasks: int, *, n_attacks: int = 0, seed: int = 0, **kw) -> list[TaskTree]:
    """Trees of a synthetic log, through the regular parse and build path."""
    from .treebuild import build_trees

    log = generate_events(n_tasks, n_attacks=n_attacks, seed=seed, **kw)
    batches = batch_events(event_from_record(r) for r in log.events)
    trees: list[TaskTree] = []
    for b in batches:
        trees.extend(build_trees(b))
    return trees


def split_by_label(trees: Iterable[TaskTree]) -> tuple[list[TaskTree], list[TaskTree]]:
    trees = list(trees)
    return [t for t in trees if t.label == 0], [t for t in trees if t.label == 1]


PLANTED_PATTERNS: list[tuple[str, ...]] = [
    (_SYS + "rundll32.exe", "C:\\Users\\u\\AppData\\Local\\Temp\\beacon.dll"),
    (_SYS + "whoami.exe", _SYS + "net.exe", _SYS + "schtasks.exe"),
    ("C:\\Users\\u\\AppData\\Local\\Temp\\mimikatz.exe", "C:\\Users\\u\\AppData\\Local\\Temp\\lsass.dmp"),
]


def generate_traces(
    n_benign: int,
    n_malicious: int,
    *,
    planted: Sequence[Sequence[str]] = PLANTED_PATTERNS,
    seed: int = 0,
) -> list:
    """Labeled traces where malicious ones hide a planted sequence in benign activity.

    Benign traces are root-to-leaf paths of synthetic benign trees. Each
    malicious trace is another benign-looking path with the items of one
    planted sequence spliced in, in order, at random positions; the planted
    sequence cycles through ``planted``.
    """
    from .seqmine import Trace, extract_traces

    rng = random.Random(seed)
    pool = []
    n_tasks = max(16, (n_benign + n_malicious) // 2)
    while len(pool) < n_benign + n_malicious:
        for t in generate_forest(n_tasks, seed=rng.randrange(2**31)):
            pool.extend(extract_traces(t))
    rng.shuffle(pool)
    out = [Trace(f"b{i:06d}", t.tree_id, t.items, 0) for i, t in enumerate(pool[:n_benign])]
    for j, t in enumerate(pool[n_benign:n_benign + n_malicious]):
        items = list(t.items)
        pat = planted[j % len(planted)]
        slots = sorted(rng.randint(0, len(items)) for _ in pat)
        for k, (pos, item) in enumerate(zip(slots, pat)):
            items.insert(pos + k, (item,))
        out.append(Trace(f"m{j:06d}", f"{t.tree_id}#m{j}", tuple(items), 1))
    return out
