"""Session-oriented HTTP API with crash-recoverable persistence.

Every session is backed by a meta file plus an append-only JSONL event
log; replaying the log reconstructs the session exactly, so a restarted
server resumes mid-session with identical state, partitions, and charged
seconds. Datasets are stored by content hash.

Endpoints (JSON bodies):

- ``POST /datasets``                      upload values (+ optional gold)
- ``POST /sessions``                      create calibrate / clean / team session
- ``GET  /sessions/{sid}/task``           next task for a slot (idempotent)
- ``POST /sessions/{sid}/actions``        submit an action (+ elapsed seconds)
- ``GET  /sessions/{sid}/result``         partition export and metrics
- ``GET  /sessions/{sid}/calibration``    fitted params of a finished calibration
- ``POST /plan-report``                   ranked cap estimates for a dataset
- ``GET  /health``
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import uuid
from dataclasses import asdict
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import calibration as cal
from . import files
from .core import GoldPartition, Partition, ValueTable, is_gold_sequence, precision_recall
from .costmodel import GlobalParams, UserParams, default_caps, rank_plans
from .hac import SimilarityConfig, run_joint
from .multiuser import STATUS_DONE, STATUS_WAITING, TeamMergeCoordinator
from .procedures import Action, ActionMismatch, Session, StaleTask, Task
from .procedures import _make_unit  # team stage wiring

log = logging.getLogger(__name__)

MAX_TASK_SECONDS = 600.0


class UploadDataset(BaseModel):
    values: list[str]
    gold: dict[str, str] | None = None
    name: str | None = None


class CreateSession(BaseModel):
    dataset_id: str
    mode: str  # calibrate | clean | team
    params: dict | None = None
    calibration_session_id: str | None = None
    cap: int | str | None = None  # int or "auto"
    k: int = 1
    seed: int = 0
    linkage: str = "average"
    threshold: float = 0.3


class SubmitAction(BaseModel):
    task_id: str
    slot: int = 0
    yes: bool | None = None
    examined: int | None = None
    button: str | None = None
    marked: list[int] | None = None
    links: list[list[int]] | None = None
    checks: list[list[Any]] | None = None
    scanned_rows: int | None = None
    elapsed_seconds: float | None = None
    answer_yes: bool | None = None
    marked_ids: list[int] | None = None
    selected_id: int | None = None


class PlanReportRequest(BaseModel):
    dataset_id: str
    params: dict | None = None
    calibration_session_id: str | None = None
    caps: list[int] | None = None
    linkage: str = "average"
    threshold: float = 0.3


def _task_view(task: Task, slot: int, status: str = "task") -> dict:
    return {"status": status, "slot": slot, "task": task.to_dict()}


class _CalibrationState:
    """Serves the fixed calibration task sequence and collects observations."""

    def __init__(self, table: ValueTable, cfg: SimilarityConfig, seed: int):
        self.plan = cal.build_plan(table, cfg, seed=seed)
        self.observations: list[cal.Observation] = []
        self._result: cal.CalibrationResult | None = None

    @property
    def done(self) -> bool:
        return len(self.observations) >= len(self.plan.tasks)

    def current_task(self) -> cal.CalibrationTask | None:
        if self.done:
            return None
        return self.plan.tasks[len(self.observations)]

    def task_view(self, slot: int) -> dict:
        task = self.current_task()
        if task is None:
            return {"status": "done", "slot": slot}
        return {
            "status": "task",
            "slot": slot,
            "task": {
                "id": task.id,
                "kind": task.kind,
                "phase": "calibration",
                "value_ids": list(task.value_ids),
                "values": list(task.values),
                "cap": task.cap,
                "allowed_buttons": ["yes", "no"] if task.kind in
                (cal.KIND_MATCH_PAIR, cal.KIND_IS_PURE) else ["submit"],
                "progress": {"task_index": len(self.observations),
                             "task_count": len(self.plan.tasks)},
            },
        }

    def submit(self, payload: SubmitAction) -> None:
        task = self.current_task()
        if task is None:
            raise StaleTask("calibration already complete")
        if payload.task_id != task.id:
            raise StaleTask(f"expected {task.id}, got {payload.task_id}")
        if payload.elapsed_seconds is None or not 0.0 < payload.elapsed_seconds < MAX_TASK_SECONDS:
            raise ActionMismatch("calibration actions need elapsed_seconds in (0, 600)")
        answer_yes = payload.answer_yes if payload.answer_yes is not None else payload.yes
        self.observations.append(cal.Observation(
            task_id=task.id,
            elapsed_seconds=payload.elapsed_seconds,
            answer_yes=answer_yes,
            marked_ids=tuple(payload.marked_ids or payload.marked or ()),
            selected_id=payload.selected_id,
        ))
        self._result = None

    def result(self) -> cal.CalibrationResult:
        if not self.done:
            raise ActionMismatch("calibration is not finished")
        if self._result is None:
            self._result = cal.run_fits(self.plan, self.observations)
        return self._result


class _TeamState:
    """Stage machine for a collaborative session: per-slot calibration,
    shared plan + assignment, per-slot cleaning, barrier merge rounds."""

    def __init__(self, table: ValueTable, gold: GoldPartition | None, k: int,
                 cfg: SimilarityConfig, g: GlobalParams, seed: int,
                 params_doc: dict | None):
        self.table = table
        self.gold = gold
        self.k = k
        self.cfg = cfg
        self.globals = g
        self.seed = seed
        self.params_doc = params_doc
        self.stage = "calibrate" if params_doc is None else "assign"
        self.calibrations = [
            _CalibrationState(table, cfg, seed=seed * 1000 + slot) for slot in range(k)
        ] if params_doc is None else []
        self.sessions: list[Session] = []
        self.coordinator: TeamMergeCoordinator | None = None
        self.selected_cap: int | None = None
        self.fitted: list[cal.CalibrationResult] = []
        self.user_params: list[UserParams] = []
        if self.stage == "assign":
            self._assign()

    def _assign(self) -> None:
        from .costmodel import average_purity_models, average_user_params

        if self.params_doc is not None:
            user, model, _ = files.params_from_dict(self.params_doc)
            params = [user] * self.k
            models = [model] * self.k
        else:
            results = [c.result() for c in self.calibrations]
            params = [r.user_params for r in results]
            models = [r.purity_model for r in results]
        self.user_params = params
        avg_u = average_user_params(params)
        avg_m = average_purity_models(models)
        caps = default_caps(len(self.table))
        joint = run_joint(self.table, self.cfg, caps)
        sizes = {c: joint[c].partition.sizes() for c in caps}
        self.selected_cap = rank_plans(sizes, avg_m, avg_u, self.globals)[0].cap
        machine = joint[self.selected_cap].partition
        from .multiuser import assign_clusters

        shares = assign_clusters(machine.sizes(), self.k)
        self.sessions = []
        for slot in range(self.k):
            clusters = [sorted(machine.clusters[i].members) for i in shares[slot]]
            self.sessions.append(Session(
                self.table, clusters, params[slot], self.globals,
                session_id=f"slot-{slot}", mode="live",
            ))
        self.stage = "clean"

    def _maybe_advance(self) -> None:
        if self.stage == "calibrate" and all(c.done for c in self.calibrations):
            self._assign()
        if self.stage == "clean" and all(s.next_task() is None for s in self.sessions):
            if self.k == 1:
                self.stage = "done"
            else:
                unit_lists = [
                    [_make_unit(self.table, c) for c in s.finalize().clusters]
                    for s in self.sessions
                ]
                self.coordinator = TeamMergeCoordinator(
                    self.table, unit_lists, self.user_params, self.globals, self.cfg)
                self.stage = "merge"
        if self.stage == "merge" and self.coordinator is not None and self.coordinator.done:
            self.stage = "done"

    def task_view(self, slot: int) -> dict:
        if not 0 <= slot < self.k:
            raise ActionMismatch(f"slot {slot} outside 0..{self.k - 1}")
        self._maybe_advance()
        if self.stage == "calibrate":
            view = self.calibrations[slot].task_view(slot)
            if view["status"] == "done":
                return {"status": STATUS_WAITING, "slot": slot, "stage": self.stage}
            return view
        if self.stage == "clean":
            task = self.sessions[slot].next_task()
            if task is None:
                return {"status": STATUS_WAITING, "slot": slot, "stage": self.stage}
            return _task_view(task, slot)
        if self.stage == "merge":
            task = self.coordinator.next_task(slot)
            if task == STATUS_WAITING:
                return {"status": STATUS_WAITING, "slot": slot, "stage": self.stage}
            if task == STATUS_DONE:
                self._maybe_advance()
                return {"status": "done", "slot": slot}
            return _task_view(task, slot)
        return {"status": "done", "slot": slot}

    def submit(self, payload: SubmitAction) -> None:
        slot = payload.slot
        self._maybe_advance()
        if self.stage == "calibrate":
            self.calibrations[slot].submit(payload)
        elif self.stage == "clean":
            self.sessions[slot].apply(_payload_to_action(payload))
        elif self.stage == "merge":
            self.coordinator.apply(slot, _payload_to_action(payload))
        else:
            raise StaleTask("session is done")
        self._maybe_advance()

    @property
    def done(self) -> bool:
        self._maybe_advance()
        return self.stage == "done"

    def final_clusters(self) -> list[frozenset[int]]:
        if self.k == 1:
            return self.sessions[0].finalize().clusters
        return self.coordinator.result()

    def total_seconds(self) -> float:
        total = sum(s.total_seconds for s in self.sessions)
        if self.coordinator is not None:
            total += sum(self.coordinator.busy_seconds)
        for c in self.calibrations:
            total += sum(o.elapsed_seconds for o in c.observations)
        return total

    def verification(self):
        from .core import VerificationSet

        vs = VerificationSet()
        for s in self.sessions:
            vs.update(s.verification)
        if self.coordinator is not None:
            vs.update(self.coordinator.verification)
        return vs


def _payload_to_action(payload: SubmitAction) -> Action:
    if payload.elapsed_seconds is not None and not 0.0 < payload.elapsed_seconds < MAX_TASK_SECONDS:
        raise ActionMismatch("elapsed_seconds must lie in (0, 600)")
    return Action(
        task_id=payload.task_id,
        yes=payload.yes,
        examined=payload.examined,
        button=payload.button,
        marked=tuple(payload.marked) if payload.marked is not None else None,
        links=tuple((a, b) for a, b in payload.links) if payload.links is not None else None,
        checks=tuple((int(c), tuple(t)) for c, t in payload.checks)
        if payload.checks is not None else None,
        scanned_rows=payload.scanned_rows,
        observed_seconds=payload.elapsed_seconds,
    )


class StoredSession:
    """One persisted session: meta + append-only action log."""

    def __init__(self, store: "SessionStore", sid: str, meta: dict):
        self.store = store
        self.sid = sid
        self.meta = meta
        self.lock = threading.Lock()
        table, gold = store.dataset(meta["dataset_id"])
        self.table = table
        self.gold = gold
        mode = meta["mode"]
        cfg = SimilarityConfig(linkage=meta.get("linkage", "average"),
                               stop_threshold=meta.get("threshold", 0.3))
        g = GlobalParams()
        if mode == "calibrate":
            self.state: Any = _CalibrationState(table, cfg, seed=meta.get("seed", 0))
        elif mode == "clean":
            user, _, g = files.params_from_dict(meta["params"])
            self.state = Session(table, meta["clusters"], user, g,
                                 session_id=sid, mode="live")
        elif mode == "team":
            self.state = _TeamState(table, gold, meta["k"], cfg, g,
                                    meta.get("seed", 0), meta.get("params"))
        else:
            raise ValueError(f"unknown mode {mode}")

    # -- log plumbing ----------------------------------------------------------

    def log_path(self) -> Path:
        return self.store.session_dir(self.sid) / "events.jsonl"

    def replay_log(self) -> None:
        path = self.log_path()
        if not path.exists():
            return
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    self._apply(SubmitAction(**json.loads(line)))

    def _apply(self, payload: SubmitAction) -> None:
        mode = self.meta["mode"]
        if mode == "calibrate":
            self.state.submit(payload)
        elif mode == "clean":
            self.state.apply(_payload_to_action(payload))
        else:
            self.state.submit(payload)

    def submit(self, payload: SubmitAction) -> None:
        with self.lock:
            self._apply(payload)
            with open(self.log_path(), "a", encoding="utf-8") as fh:
                fh.write(json.dumps(payload.model_dump(exclude_none=True)) + "\n")
                fh.flush()

    # -- views -----------------------------------------------------------------

    def task_view(self, slot: int) -> dict:
        mode = self.meta["mode"]
        with self.lock:
            if mode == "calibrate":
                return self.state.task_view(slot)
            if mode == "clean":
                task = self.state.next_task()
                if task is None:
                    return {"status": "done", "slot": slot}
                return _task_view(task, slot)
            return self.state.task_view(slot)

    def is_done(self) -> bool:
        mode = self.meta["mode"]
        if mode == "calibrate":
            return self.state.done
        if mode == "clean":
            return self.state.next_task() is None
        return self.state.done

    def result(self) -> dict:
        if not self.is_done():
            raise HTTPException(409, "SessionNotDone: session has pending tasks")
        mode = self.meta["mode"]
        if mode == "calibrate":
            res = self.state.result()
            return {
                "params": files.params_to_dict(res.user_params, res.purity_model),
                "total_seconds": res.total_elapsed_seconds,
                "diagnostics": {"alpha_samples": res.diagnostics["alpha_samples"],
                                "notes": res.diagnostics["notes"]},
            }
        if mode == "clean":
            session: Session = self.state
            rows = session.export_rows()
            result = session.finalize()
            out = {
                "rows": [list(r) for r in rows],
                "total_seconds": result.total_seconds,
                "phase_seconds": result.phase_seconds,
            }
            if self.gold is not None and result.partition is not None:
                p, r = precision_recall(result.partition, self.gold)
                out.update(precision=p, recall=r,
                           gold_sequence=is_gold_sequence(result.verification, self.gold))
            return out
        state: _TeamState = self.state
        clusters = state.final_clusters()
        partition = None
        covered = sum(len(c) for c in clusters)
        if covered == len(self.table):
            partition = Partition.from_member_sets(clusters, len(self.table))
        rows = []
        if partition is not None:
            rows = files.partition_rows(self.table, partition)
        out = {
            "rows": [list(r) for r in rows],
            "total_seconds": state.total_seconds(),
            "selected_cap": state.selected_cap,
        }
        if self.gold is not None and partition is not None:
            p, r = precision_recall(partition, self.gold)
            out.update(precision=p, recall=r,
                       gold_sequence=is_gold_sequence(state.verification(), self.gold))
        return out


class SessionStore:
    """Datasets by content hash; sessions by id, rebuilt from logs on demand."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        (self.data_dir / "datasets").mkdir(parents=True, exist_ok=True)
        (self.data_dir / "sessions").mkdir(parents=True, exist_ok=True)
        self._datasets: dict[str, tuple[ValueTable, GoldPartition | None]] = {}
        self._sessions: dict[str, StoredSession] = {}
        self._lock = threading.Lock()

    def session_dir(self, sid: str) -> Path:
        return self.data_dir / "sessions" / sid

    def add_dataset(self, values: list[str], gold: dict[str, str] | None,
                    name: str | None) -> str:
        canon = json.dumps({"values": values, "gold": gold}, sort_keys=True)
        dataset_id = hashlib.sha256(canon.encode()).hexdigest()[:16]
        path = self.data_dir / "datasets" / f"{dataset_id}.json"
        if not path.exists():
            path.write_text(json.dumps({"values": values, "gold": gold, "name": name}),
                            encoding="utf-8")
        return dataset_id

    def dataset(self, dataset_id: str) -> tuple[ValueTable, GoldPartition | None]:
        if dataset_id in self._datasets:
            return self._datasets[dataset_id]
        path = self.data_dir / "datasets" / f"{dataset_id}.json"
        if not path.exists():
            raise HTTPException(404, f"UnknownDataset: {dataset_id}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        table = ValueTable(doc["values"])
        gold = None
        if doc.get("gold"):
            dense: dict[str, int] = {}
            entity_of = []
            for v in table:
                label = doc["gold"].get(v)
                if label is None:
                    raise HTTPException(400, f"gold does not cover value {v!r}")
                entity_of.append(dense.setdefault(label, len(dense)))
            gold = GoldPartition.from_entity_map(entity_of, len(table))
        self._datasets[dataset_id] = (table, gold)
        return self._datasets[dataset_id]

    def create_session(self, req: CreateSession) -> str:
        table, _ = self.dataset(req.dataset_id)
        sid = uuid.uuid4().hex[:12]
        meta: dict = {
            "session_id": sid,
            "mode": req.mode,
            "dataset_id": req.dataset_id,
            "seed": req.seed,
            "linkage": req.linkage,
            "threshold": req.threshold,
        }
        if req.mode == "calibrate":
            pass
        elif req.mode == "clean":
            params_doc = self._resolve_params(req)
            if params_doc is None:
                raise HTTPException(400, "MissingCalibration: clean sessions need "
                                         "params or calibration_session_id")
            user, model, g = files.params_from_dict(params_doc)
            cap = req.cap if req.cap not in (None, "auto") else None
            caps = default_caps(len(table))
            cfg = SimilarityConfig(linkage=req.linkage, stop_threshold=req.threshold)
            joint = run_joint(table, cfg, caps if cap is None else [cap])
            if cap is None:
                sizes = {c: joint[c].partition.sizes() for c in joint}
                cap = rank_plans(sizes, model, user, g)[0].cap
            machine = joint[cap].partition
            meta["params"] = params_doc
            meta["cap"] = cap
            meta["clusters"] = [sorted(c.members) for c in machine.clusters]
        elif req.mode == "team":
            if req.k < 1:
                raise HTTPException(400, "team sessions need k >= 1")
            meta["k"] = req.k
            meta["params"] = self._resolve_params(req)
        else:
            raise HTTPException(400, f"unknown mode {req.mode!r}")
        sdir = self.session_dir(sid)
        sdir.mkdir(parents=True)
        (sdir / "meta.json").write_text(json.dumps(meta), encoding="utf-8")
        return sid

    def _resolve_params(self, req: CreateSession) -> dict | None:
        if req.params is not None:
            return req.params
        if req.calibration_session_id:
            calib = self.session(req.calibration_session_id)
            if calib.meta["mode"] != "calibrate":
                raise HTTPException(400, "calibration_session_id is not a calibrate session")
            return calib.result()["params"]
        return None

    def session(self, sid: str) -> StoredSession:
        with self._lock:
            if sid in self._sessions:
                return self._sessions[sid]
            meta_path = self.session_dir(sid) / "meta.json"
            if not meta_path.exists():
                raise HTTPException(404, f"unknown session {sid}")
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            stored = StoredSession(self, sid, meta)
            stored.replay_log()
            self._sessions[sid] = stored
            return stored


def create_app(data_dir: Path | str) -> FastAPI:
    store = SessionStore(Path(data_dir))
    app = FastAPI(title="valnorm service")
    app.state.store = store

    @app.get("/health")
    def health():
        return {"ok": True}

    @app.post("/datasets")
    def upload(req: UploadDataset):
        if not req.values:
            raise HTTPException(400, "values must be nonempty")
        dataset_id = store.add_dataset(req.values, req.gold, req.name)
        table, _ = store.dataset(dataset_id)
        return {"dataset_id": dataset_id, "n_values": len(table)}

    @app.post("/sessions")
    def create_session(req: CreateSession):
        sid = store.create_session(req)
        return {"session_id": sid}

    @app.get("/sessions/{sid}/task")
    def get_task(sid: str, slot: int = 0):
        stored = store.session(sid)
        try:
            return stored.task_view(slot)
        except (ActionMismatch, StaleTask) as exc:
            raise HTTPException(409, str(exc)) from exc

    @app.post("/sessions/{sid}/actions")
    def submit_action(sid: str, payload: SubmitAction):
        stored = store.session(sid)
        try:
            stored.submit(payload)
        except StaleTask as exc:
            raise HTTPException(409, f"StaleTask: {exc}") from exc
        except ActionMismatch as exc:
            raise HTTPException(400, f"ActionMismatch: {exc}") from exc
        return {"ok": True, "next": stored.task_view(payload.slot)}

    @app.get("/sessions/{sid}/result")
    def get_result(sid: str):
        return store.session(sid).result()

    @app.get("/sessions/{sid}/calibration")
    def get_calibration(sid: str):
        stored = store.session(sid)
        if stored.meta["mode"] != "calibrate":
            raise HTTPException(400, "not a calibration session")
        return stored.result()

    @app.post("/plan-report")
    def plan_report(req: PlanReportRequest):
        table, _ = store.dataset(req.dataset_id)
        params_doc = None
        if req.params is not None:
            params_doc = req.params
        elif req.calibration_session_id:
            calib = store.session(req.calibration_session_id)
            params_doc = calib.result()["params"]
        if params_doc is None:
            raise HTTPException(400, "MissingCalibration: supply params or a calibration session")
        user, model, g = files.params_from_dict(params_doc)
        caps = req.caps or default_caps(len(table))
        cfg = SimilarityConfig(linkage=req.linkage, stop_threshold=req.threshold)
        joint = run_joint(table, cfg, caps)
        sizes = {c: joint[c].partition.sizes() for c in joint}
        estimates = rank_plans(sizes, model, user, g)
        return {
            "selected_cap": estimates[0].cap,
            "plans": [asdict(e) for e in estimates],
        }

    return app
