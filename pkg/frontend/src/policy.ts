/** A scripted answer policy that knows the gold clustering. Used by the
 * conformance tests (and the demo autopilot) to drive a session the way
 * a careful human would. Deterministic: ties pick the smallest entity. */

import * as actions from "./actions.js";
import type { ActionBody, TaskView } from "./types.js";
import {
  BTN_CLEAN_MIXED,
  BTN_MARK_VALUES,
  BTN_NEW_CLUSTER,
  BTN_OLD_CLUSTER,
} from "./types.js";

export class TruthfulPolicy {
  private domCache = new Map<string, number>();

  constructor(
    private entityOf: (valueId: number) => string,
    private mixedThreshold = 0.1,
    private majorityThreshold = 0.5,
  ) {}

  act(task: TaskView, elapsed: number): ActionBody {
    switch (task.kind) {
      case "isPureQuestion":
        return this.isPure(task, elapsed);
      case "findDomAndMark":
        return this.findDom(task, elapsed);
      case "markValues":
        return this.mark(task, elapsed);
      case "localMergeScan":
        return this.local(task, elapsed);
      case "globalMergeGrid":
      case "setMergeScan":
        return this.grid(task, elapsed);
      case "matchPair":
        return actions.calibrationAnswer(task, elapsed, {
          answerYes:
            task.value_ids.length < 2 ||
            this.entityOf(task.value_ids[0]) === this.entityOf(task.value_ids[1]),
        });
      case "purityMark": {
        const { entity } = this.dominating(task.value_ids, task.id);
        return actions.calibrationAnswer(task, elapsed, {
          markedIds: task.value_ids.filter((v) => this.entityOf(v) === entity),
        });
      }
      case "isPureCluster":
        return actions.calibrationAnswer(task, elapsed, {
          answerYes: new Set(task.value_ids.map(this.entityOf)).size === 1,
        });
      case "findDomSmall":
      case "findDomLarge": {
        const { entity } = this.dominating(task.value_ids, task.id);
        return actions.calibrationAnswer(task, elapsed, {
          selectedId: task.value_ids.find((v) => this.entityOf(v) === entity),
        });
      }
      default:
        throw new Error(`no policy for task kind ${task.kind}`);
    }
  }

  private dominating(ids: number[], cacheKey: string): { entity: string; purity: number } {
    const counts = new Map<string, number>();
    for (const id of ids) {
      const e = this.entityOf(id);
      counts.set(e, (counts.get(e) ?? 0) + 1);
    }
    const best = Math.max(...counts.values());
    const candidates = [...counts.entries()]
      .filter(([, c]) => c === best)
      .map(([e]) => e)
      .sort();
    const entity = candidates[0];
    return { entity, purity: best / ids.length };
  }

  private isPure(task: TaskView, elapsed: number): ActionBody {
    const first = this.entityOf(task.value_ids[0]);
    let examined = task.value_ids.length;
    let pure = true;
    for (let i = 1; i < task.value_ids.length; i += 1) {
      if (this.entityOf(task.value_ids[i]) !== first) {
        examined = i + 1;
        pure = false;
        break;
      }
    }
    const body = actions.pureAnswer(task, pure, elapsed);
    body.examined = examined;
    return body;
  }

  private findDom(task: TaskView, elapsed: number): ActionBody {
    const { purity } = this.dominating(task.value_ids, task.cluster_ref ?? task.id);
    const button = purity < this.mixedThreshold ? BTN_CLEAN_MIXED : BTN_MARK_VALUES;
    return actions.splitChoice(task, button, elapsed);
  }

  private mark(task: TaskView, elapsed: number): ActionBody {
    const { entity, purity } = this.dominating(task.value_ids, task.cluster_ref ?? task.id);
    if (purity >= this.majorityThreshold) {
      const marked = task.value_ids.filter((v) => this.entityOf(v) !== entity);
      return actions.markSubmission(task, marked, BTN_NEW_CLUSTER, elapsed);
    }
    const marked = task.value_ids.filter((v) => this.entityOf(v) === entity);
    return actions.markSubmission(task, marked, BTN_OLD_CLUSTER, elapsed);
  }

  private local(task: TaskView, elapsed: number): ActionBody {
    const capacity = 7;
    const slots: Array<{ entity: string; value: number }> = [];
    const links: Array<[number, number]> = [];
    for (const id of task.value_ids) {
      const entity = this.entityOf(id);
      const hit = slots.find((s) => s.entity === entity);
      if (hit) {
        links.push([id, hit.value]);
        hit.value = id;
      } else {
        if (slots.length === capacity) {
          slots.shift();
        }
        slots.push({ entity, value: id });
      }
    }
    return actions.linkSubmission(task, links, elapsed);
  }

  private grid(task: TaskView, elapsed: number): ActionBody {
    const columns = task.columns ?? [];
    const rows = task.rows ?? [];
    const checks = new Map<number, number[]>();
    const owners = new Map<string, number>();
    for (const column of columns) {
      const entity = this.entityOf(column);
      const owner = owners.get(entity);
      if (owner !== undefined) {
        checks.set(column, [...(checks.get(column) ?? []), owner]);
      } else {
        owners.set(entity, column);
      }
    }
    let scanned = 0;
    const pending = new Map(owners);
    for (const row of rows) {
      if (task.kind === "setMergeScan" && pending.size === 0) {
        break;
      }
      scanned += 1;
      const entity = this.entityOf(row);
      const owner = owners.get(entity);
      if (owner !== undefined) {
        checks.set(owner, [...(checks.get(owner) ?? []), row]);
        pending.delete(entity);
      }
    }
    const body = actions.gridSubmission(task, checks, elapsed);
    if (task.kind === "setMergeScan") {
      body.scanned_rows = scanned;
    }
    return body;
  }
}
