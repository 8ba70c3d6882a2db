/** Builders that turn view state into submittable actions.
 * Every builder echoes the task id and refuses anything the task's
 * allowed buttons or displayed values do not cover. */

import type { ActionBody, TaskView } from "./types.js";
import {
  BTN_CLEAN_MIXED,
  BTN_MARK_VALUES,
  BTN_NEW_CLUSTER,
  BTN_OLD_CLUSTER,
  BTN_NO,
  BTN_YES,
} from "./types.js";

export class DisallowedAction extends Error {}

function requireButton(task: TaskView, button: string): void {
  if (!task.allowed_buttons.includes(button)) {
    throw new DisallowedAction(
      `button ${JSON.stringify(button)} is not allowed for task ${task.id}`);
  }
}

function requireShown(task: TaskView, ids: number[]): void {
  const shown = new Set<number>([
    ...task.value_ids,
    ...(task.columns ?? []),
    ...(task.rows ?? []),
  ]);
  for (const id of ids) {
    if (!shown.has(id)) {
      throw new DisallowedAction(`value ${id} is not shown by task ${task.id}`);
    }
  }
}

export function pureAnswer(task: TaskView, yes: boolean, elapsed?: number): ActionBody {
  requireButton(task, yes ? BTN_YES : BTN_NO);
  return { task_id: task.id, yes, elapsed_seconds: elapsed };
}

export function splitChoice(task: TaskView, button: string, elapsed?: number): ActionBody {
  if (button !== BTN_MARK_VALUES && button !== BTN_CLEAN_MIXED) {
    throw new DisallowedAction(`unexpected split choice ${button}`);
  }
  requireButton(task, button);
  return { task_id: task.id, button, elapsed_seconds: elapsed };
}

export function markSubmission(
  task: TaskView, marked: number[], button: string, elapsed?: number,
): ActionBody {
  if (button !== BTN_NEW_CLUSTER && button !== BTN_OLD_CLUSTER) {
    throw new DisallowedAction(`unexpected mark button ${button}`);
  }
  requireButton(task, button);
  requireShown(task, marked);
  if (marked.length === 0 || marked.length >= task.value_ids.length) {
    throw new DisallowedAction("marked values must be a nonempty proper subset");
  }
  return { task_id: task.id, marked, button, elapsed_seconds: elapsed };
}

export function linkSubmission(
  task: TaskView, links: Array<[number, number]>, elapsed?: number,
): ActionBody {
  requireShown(task, links.flat());
  const position = new Map(task.value_ids.map((id, i) => [id, i]));
  for (const [current, earlier] of links) {
    if ((position.get(earlier) ?? -1) >= (position.get(current) ?? -1)) {
      throw new DisallowedAction(`link target ${earlier} is not earlier than ${current}`);
    }
  }
  return { task_id: task.id, links, elapsed_seconds: elapsed };
}

export function gridSubmission(
  task: TaskView, checks: Map<number, number[]>, elapsed?: number,
): ActionBody {
  const columns = task.columns ?? [];
  const rows = new Set(task.rows ?? []);
  const seenRows = new Map<number, number>();
  const body: Array<[number, number[]]> = [];
  for (const [column, targets] of checks) {
    if (!columns.includes(column)) {
      throw new DisallowedAction(`${column} is not a column of task ${task.id}`);
    }
    for (const target of targets) {
      const earlierColumns = columns.slice(0, columns.indexOf(column));
      if (!rows.has(target) && !earlierColumns.includes(target)) {
        throw new DisallowedAction(`value ${target} cannot be checked under ${column}`);
      }
      if (rows.has(target)) {
        const owner = seenRows.get(target);
        if (owner !== undefined && owner !== column) {
          throw new DisallowedAction(`row ${target} is checked under two columns`);
        }
        seenRows.set(target, column);
      }
    }
    body.push([column, targets]);
  }
  return { task_id: task.id, checks: body, elapsed_seconds: elapsed };
}

export function calibrationAnswer(
  task: TaskView,
  elapsed: number,
  fields: { answerYes?: boolean; markedIds?: number[]; selectedId?: number },
): ActionBody {
  if (fields.markedIds) {
    requireShown(task, fields.markedIds);
  }
  if (fields.selectedId !== undefined) {
    requireShown(task, [fields.selectedId]);
  }
  return {
    task_id: task.id,
    elapsed_seconds: elapsed,
    answer_yes: fields.answerYes,
    marked_ids: fields.markedIds,
    selected_id: fields.selectedId,
  };
}
