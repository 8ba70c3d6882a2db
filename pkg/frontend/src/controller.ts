/** Session flow: poll for the slot's task, hand it to the presenter,
 * submit the committed action, repeat until done. Stale responses from
 * the server surface as a refresh rather than an error. */

import { ApiClient, ApiError } from "./api.js";
import { TaskTimer } from "./timer.js";
import type { ActionBody, SessionResult, TaskResponse, TaskView } from "./types.js";

export interface Presenter {
  showTask(task: TaskView, slot: number): void;
  showWaiting(stage: string | undefined, slot: number): void;
  showDone(result: SessionResult | undefined, slot: number): void;
  showError(message: string): void;
}

export interface ControllerOptions {
  slot?: number;
  waitingPollMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class SessionController {
  readonly timer: TaskTimer;
  private current: TaskView | null = null;
  private stopped = false;
  readonly slot: number;
  private waitingPollMs: number;
  private sleep: (ms: number) => Promise<void>;

  constructor(
    private api: ApiClient,
    private sessionId: string,
    private presenter: Presenter,
    options: ControllerOptions = {},
    timer?: TaskTimer,
  ) {
    this.slot = options.slot ?? 0;
    this.waitingPollMs = options.waitingPollMs ?? 750;
    this.sleep = options.sleep ?? defaultSleep;
    this.timer = timer ?? new TaskTimer();
  }

  get currentTask(): TaskView | null {
    return this.current;
  }

  stop(): void {
    this.stopped = true;
  }

  /** Poll until a task is served or the session finishes. */
  async refresh(): Promise<TaskResponse> {
    while (!this.stopped) {
      const view = await this.api.getTask(this.sessionId, this.slot);
      if (view.status === "task" && view.task) {
        this.current = view.task;
        this.presenter.showTask(view.task, this.slot);
        this.timer.start(view.task.id);
        return view;
      }
      if (view.status === "done") {
        this.current = null;
        let result: SessionResult | undefined;
        try {
          result = await this.api.getResult(this.sessionId);
        } catch {
          result = undefined;
        }
        this.presenter.showDone(result, this.slot);
        return view;
      }
      this.presenter.showWaiting(view.stage, this.slot);
      await this.sleep(this.waitingPollMs);
    }
    return { status: "done", slot: this.slot };
  }

  /** Submit the committed action for the current task. The elapsed time
   * is stamped here unless the builder already set one. */
  async commit(action: ActionBody): Promise<TaskResponse> {
    if (!this.current) {
      throw new Error("no task is active");
    }
    if (action.task_id !== this.current.id) {
      throw new Error(
        `action targets ${action.task_id} but the active task is ${this.current.id}`);
    }
    if (action.elapsed_seconds === undefined) {
      action.elapsed_seconds = this.timer.stop(this.current.id);
    } else if (this.timer.runningTask === this.current.id) {
      this.timer.stop(this.current.id);
    }
    action.slot = this.slot;
    try {
      await this.api.submitAction(this.sessionId, action);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // stale task: someone else advanced the session; just re-sync
        this.presenter.showError("task was stale; refreshing");
        this.current = null;
        return this.refresh();
      }
      throw err;
    }
    this.current = null;
    return this.refresh();
  }
}
