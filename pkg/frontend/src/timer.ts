/** Per-task elapsed-time capture: starts at first paint of the task,
 * stops at the committing click. The clock is injectable for tests. */

export type Clock = () => number; // milliseconds

export class TaskTimer {
  private startedAt: number | null = null;
  private taskId: string | null = null;

  constructor(private clock: Clock = () => performance.now()) {}

  /** Call when the task's view has been rendered. Re-rendering the same
   * task (pagination, toggles) must not restart the clock. */
  start(taskId: string): void {
    if (this.taskId === taskId && this.startedAt !== null) {
      return;
    }
    this.taskId = taskId;
    this.startedAt = this.clock();
  }

  /** Seconds from first paint to now; clears the timer. */
  stop(taskId: string): number {
    if (this.taskId !== taskId || this.startedAt === null) {
      throw new Error(`timer was never started for task ${taskId}`);
    }
    const elapsed = (this.clock() - this.startedAt) / 1000;
    this.taskId = null;
    this.startedAt = null;
    return elapsed;
  }

  get runningTask(): string | null {
    return this.taskId;
  }
}
