/** End-to-end conformance against the real service: a full clean session
 * driven through the client stack must certify an exact partition, and a
 * second identically-driven session must produce the same rows. Requires
 * python3 with the backend package installed (skipped otherwise). */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionController, type Presenter } from "../src/controller.js";
import { TaskTimer } from "../src/timer.js";
import { TruthfulPolicy } from "../src/policy.js";
import type { SessionResult, TaskView } from "../src/types.js";

const ENTITIES: Array<[string, string[]]> = [
  ["harbor", ["Harbor Light Co", "harbor light co", "Harbour Light Co"]],
  ["harbor-n", ["Harbor Night Co", "HARBOR NIGHT CO", "Harbr Night Co"]],
  ["quarry", ["Quarry Stone Ltd", "Quarry Stone", "quarry stone ltd"]],
  ["quarry-d", ["Quarry Stoned Ltd", "Quary Stoned Ltd", "QUARRY STONED"]],
  ["cafe", ["Midnight Cafe", "Mid-night Cafe", "MIDNIGHT CAFE"]],
  ["pine", ["Pinewood Labs", "Pine wood Labs", "pinewood labs"]],
  ["moon", ["Crescent Moon Inc", "Crescent Moon", "CRESCENT MOON INC"]],
  ["iron", ["Iron Gate Systems", "Iron Gate System", "irongate systems"]],
  ["river", ["Blue River Group", "Blue Rivr Group", "BLUE RIVER GROUP"]],
  ["air", ["Zephyr Air", "Zephyr Airr", "ZEPHYR AIR"]],
];
const VALUES = ENTITIES.flatMap(([, vs]) => vs);
const LABELS = ENTITIES.flatMap(([label, vs]) => vs.map(() => label));
const GOLD = Object.fromEntries(VALUES.map((v, i) => [v, LABELS[i]]));

const PARAMS = {
  user: {},
  purity_model: { scale: 1.0, exponent: -0.3 },
};

const pythonOk = spawnSync("python3", ["-c", "import valnorm, uvicorn"]).status === 0;
const suite = pythonOk ? describe : describe.skip;

class SilentPresenter implements Presenter {
  lastResult: SessionResult | undefined;
  showTask(): void {}
  showWaiting(): void {}
  showDone(result: SessionResult | undefined): void { this.lastResult = result; }
  showError(): void {}
}

suite("conformance against the live service", () => {
  let child: ChildProcess;
  let api: ApiClient;
  const port = 8900 + Math.floor(Math.random() * 800);

  beforeAll(async () => {
    const dataDir = mkdtempSync(join(tmpdir(), "valnorm-ui-"));
    child = spawn("python3", ["-c", `
import sys, uvicorn
from valnorm.service import create_app
uvicorn.run(create_app(sys.argv[1]), host="127.0.0.1", port=int(sys.argv[2]), log_level="warning")
`, dataDir, String(port)], { stdio: "ignore" });
    api = new ApiClient(`http://127.0.0.1:${port}`);
    for (let attempt = 0; attempt < 100; attempt += 1) {
      try {
        await api.health();
        return;
      } catch {
        await new Promise((r) => setTimeout(r, 200));
      }
    }
    throw new Error("service did not come up");
  });

  afterAll(() => {
    child?.kill();
  });

  async function driveCleanSession(): Promise<SessionResult> {
    const { dataset_id } = await api.uploadDataset(VALUES, GOLD);
    const { session_id } = await api.createSession({
      dataset_id, mode: "clean", params: PARAMS, cap: "auto",
    });
    const presenter = new SilentPresenter();
    let now = 0;
    const timer = new TaskTimer(() => (now += 1500));
    const controller = new SessionController(
      api, session_id, presenter, { sleep: async () => {} }, timer);
    const policy = new TruthfulPolicy((id) => LABELS[id]);
    let view = await controller.refresh();
    let guard = 0;
    while (view.status === "task" && controller.currentTask && guard < 500) {
      const task = controller.currentTask as TaskView;
      view = await controller.commit(policy.act(task, 1.5));
      guard += 1;
    }
    expect(presenter.lastResult).toBeDefined();
    return presenter.lastResult as SessionResult;
  }

  it("drives a 30-value clean session to an exact certified partition", async () => {
    const result = await driveCleanSession();
    expect(result.precision).toBe(1.0);
    expect(result.recall).toBe(1.0);
    expect(result.gold_sequence).toBe(true);
    expect(result.rows).toHaveLength(VALUES.length);
  });

  it("an identically driven session reproduces the same partition", async () => {
    const first = await driveCleanSession();
    const second = await driveCleanSession();
    expect(second.rows).toEqual(first.rows);
  });

  it("captured elapsed times feed the calibration fits", async () => {
    const { dataset_id } = await api.uploadDataset(VALUES, GOLD);
    const { session_id } = await api.createSession({ dataset_id, mode: "calibrate", seed: 3 });
    const policy = new TruthfulPolicy((id) => LABELS[id]);
    let taskIndex = 0;
    for (;;) {
      const view = await api.getTask(session_id);
      if (view.status !== "task" || !view.task) break;
      const elapsed = 1.5 + 0.25 * (taskIndex % 4);
      const body = policy.act(view.task, elapsed);
      body.slot = 0;
      await api.submitAction(session_id, body);
      taskIndex += 1;
    }
    expect(taskIndex).toBe(18);
    const calibration = await api.getCalibration(session_id);
    expect(calibration.params).toBeDefined();
    const { session_id: cleanSid } = await api.createSession({
      dataset_id, mode: "clean", calibration_session_id: session_id,
    });
    expect(cleanSid).toBeTruthy();
  });
});
