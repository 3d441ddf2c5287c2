#!/usr/bin/env python3
"""Convert compact dialogue notation into DML JSON Lines.

Notation (one event per line):

    === dialogue-id
    A: nlg welcome()
    U: how long is [la la land|Movie->mt1] {request(GetDuration) inform(Movie)}
    A: api GetDuration(movieTitle=$mt1) -> d1 = "2 hours 8 minutes"
    A: nlg inform_movie_duration(duration=$d1, movieTitle=$mt1)
    U: exit {bye}
    A: nlg stop()

End-of-turn markers are inserted before each user line, and an
end-of-dialogue marker closes each dialogue. `-> !fail` marks a failed API
call. Lines starting with '#' are comments.
"""
import json
import re
import sys

TOKEN = re.compile(r"[A-Za-z0-9\x80-￿]+(?:'[A-Za-z0-9\x80-￿]+)*|\S")
SPAN = re.compile(r"\[([^\]|]+)\|([A-Za-z_][A-Za-z0-9_]*)->([A-Za-z_][A-Za-z0-9_]*)\]")
CALL = re.compile(r"^(api|nlg)\s+([A-Za-z_][A-Za-z0-9_]*)\((.*)\)\s*(?:->\s*(.*))?$")


def tokens(text):
    return TOKEN.findall(text)


def parse_args(src):
    args = {}
    src = src.strip()
    if not src:
        return args
    parts, depth, cur = [], 0, ""
    for ch in src:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    parts.append(cur)
    for p in parts:
        name, val = p.split("=", 1)
        name, val = name.strip(), val.strip()
        if val.startswith("["):
            args[name] = [v.strip() for v in val[1:-1].split(",")]
        elif val.startswith('"'):
            args[name] = {"literal": json.loads(val)}
        else:
            args[name] = val
    return args


class Builder:
    def __init__(self, schema):
        self.schema = schema
        self.api_returns = {a["name"]: a.get("return_type") for a in schema["apis"]}
        self.out = []
        self.cur = None

    def start(self, did):
        self.finish()
        self.cur = {"dml_version": 1, "id": did, "events": [], "variables": {}}
        self.seen_user = False

    def finish(self):
        if self.cur is None:
            return
        ev = self.cur["events"]
        if not ev or ev[-1]["kind"] != "end_dialogue":
            ev.append({"kind": "end_dialogue"})
        self.out.append(self.cur)
        self.cur = None

    def user(self, line):
        ev = self.cur["events"]
        if self.seen_user and ev and ev[-1]["kind"] not in ("end_turn", "end_dialogue"):
            ev.append({"kind": "end_turn"})
        self.seen_user = True
        acts = []
        m = re.search(r"\{([^}]*)\}\s*$", line)
        if m:
            acts = re.findall(r"[a-z_]+(?:\([^)]*\))?", m.group(1))
            line = line[: m.start()].rstrip()
        text, ents, pos = "", [], 0
        for sm in SPAN.finditer(line):
            text += line[pos : sm.start()]
            start = len(tokens(text))
            value, etype, var = sm.group(1).strip(), sm.group(2), sm.group(3)
            text += value
            end = len(tokens(text))
            ents.append({"start": start, "end": end, "type": etype, "var": var})
            known = self.cur["variables"].get(var)
            if known is None:
                self.cur["variables"][var] = {"type": etype, "value": value}
            pos = sm.end()
        text += line[pos:]
        e = {"kind": "user", "text": text, "entities": ents}
        if acts:
            e["acts"] = acts
        ev.append(e)

    def agent(self, line):
        ev = self.cur["events"]
        if line in ("end_turn", "end_dialogue"):
            ev.append({"kind": line})
            return
        m = CALL.match(line)
        if not m:
            raise SystemExit("cannot parse agent line: " + line)
        kind, name, args, ret = m.groups()
        e = {"kind": kind, "name": name, "args": parse_args(args)}
        if ret:
            ret = ret.strip()
            if ret == "!fail":
                e["failed"] = True
            else:
                var, value = [x.strip() for x in ret.split("=", 1)]
                e["return"] = var
                self.cur["variables"][var] = {
                    "type": self.api_returns[name],
                    "value": json.loads(value),
                }
        ev.append(e)


def main():
    if len(sys.argv) != 4:
        raise SystemExit("usage: dml_author.py SCHEMA.json INPUT.dlg OUTPUT.jsonl")
    with open(sys.argv[1]) as f:
        schema = json.load(f)
    b = Builder(schema)
    with open(sys.argv[2]) as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("==="):
                b.start(line[3:].strip())
            elif line.startswith("U:"):
                b.user(line[2:].strip())
            elif line.startswith("A:"):
                b.agent(line[2:].strip())
            else:
                raise SystemExit("unrecognized line: " + line)
    b.finish()
    with open(sys.argv[3], "w") as f:
        for d in b.out:
            f.write(json.dumps(d, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
