import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionController, type Presenter } from "../src/controller.js";
import { TaskTimer } from "../src/timer.js";
import type { TaskResponse, TaskView } from "../src/types.js";

function makeTask(id: string): TaskView {
  return {
    id,
    kind: "isPureQuestion",
    value_ids: [0, 1],
    values: ["x", "y"],
    allowed_buttons: ["yes", "no"],
  };
}

/** In-memory stand-in for the HTTP service. */
class FakeService {
  script: TaskResponse[];
  submissions: Array<Record<string, unknown>> = [];
  rejectNextWith409 = false;

  constructor(script: TaskResponse[]) {
    this.script = script;
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    if (url.endsWith("/result")) {
      return json({ rows: [], total_seconds: 1.0 });
    }
    if (url.includes("/task")) {
      return json(this.script[0]);
    }
    if (url.includes("/actions")) {
      if (this.rejectNextWith409) {
        this.rejectNextWith409 = false;
        return json({ detail: "StaleTask" }, 409);
      }
      this.submissions.push(JSON.parse(String(init?.body)));
      this.script.shift();
      return json({ ok: true });
    }
    return json({ detail: "no route" }, 404);
  };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

class RecordingPresenter implements Presenter {
  tasks: string[] = [];
  waits = 0;
  done = false;
  errors: string[] = [];

  showTask(task: TaskView): void { this.tasks.push(task.id); }
  showWaiting(): void { this.waits += 1; }
  showDone(): void { this.done = true; }
  showError(message: string): void { this.errors.push(message); }
}

function controllerWith(service: FakeService, presenter: Presenter) {
  const api = new ApiClient("http://fake", service.fetch);
  let now = 0;
  const timer = new TaskTimer(() => (now += 1000));
  return new SessionController(api, "s1", presenter, { sleep: async () => {} }, timer);
}

describe("SessionController", () => {
  it("serves tasks, stamps elapsed seconds, and finishes", async () => {
    const service = new FakeService([
      { status: "task", slot: 0, task: makeTask("t1") },
      { status: "task", slot: 0, task: makeTask("t2") },
      { status: "done", slot: 0 },
    ]);
    const presenter = new RecordingPresenter();
    const controller = controllerWith(service, presenter);
    await controller.refresh();
    await controller.commit({ task_id: "t1", yes: true });
    await controller.commit({ task_id: "t2", yes: false });
    expect(presenter.tasks).toEqual(["t1", "t2"]);
    expect(presenter.done).toBe(true);
    expect(service.submissions).toHaveLength(2);
    for (const submitted of service.submissions) {
      expect(submitted.elapsed_seconds).toBeGreaterThan(0);
      expect(submitted.slot).toBe(0);
    }
  });

  it("rejects actions for a different task id", async () => {
    const service = new FakeService([
      { status: "task", slot: 0, task: makeTask("t1") },
    ]);
    const controller = controllerWith(service, new RecordingPresenter());
    await controller.refresh();
    await expect(controller.commit({ task_id: "other" })).rejects.toThrow(/active task/);
  });

  it("polls through waiting states", async () => {
    const service = new FakeService([
      { status: "waiting", slot: 0 },
      { status: "task", slot: 0, task: makeTask("t1") },
    ]);
    const presenter = new RecordingPresenter();
    const original = service.fetch;
    let calls = 0;
    service.fetch = async (url, init) => {
      if (url.includes("/task")) {
        calls += 1;
        if (calls > 1) service.script = service.script.slice(-1);
      }
      return original(url, init);
    };
    const controller = controllerWith(service, presenter);
    await controller.refresh();
    expect(presenter.waits).toBeGreaterThan(0);
    expect(presenter.tasks).toEqual(["t1"]);
  });

  it("recovers from a stale 409 by refreshing", async () => {
    const service = new FakeService([
      { status: "task", slot: 0, task: makeTask("t1") },
      { status: "done", slot: 0 },
    ]);
    const presenter = new RecordingPresenter();
    const controller = controllerWith(service, presenter);
    await controller.refresh();
    service.rejectNextWith409 = true;
    service.script = [{ status: "done", slot: 0 }];
    await controller.commit({ task_id: "t1", yes: true });
    expect(presenter.errors.some((e) => e.includes("stale"))).toBe(true);
    expect(presenter.done).toBe(true);
  });
});
