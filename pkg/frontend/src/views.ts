/** DOM rendering for each task kind.
 *
 * Layout follows the procedure's operation sequences: a value list with
 * yes/no for the purity question, checkboxes plus the three named split
 * buttons, the click-click-link local merge list, and the checkbox grid
 * for global merge. Long lists paginate at 50 values; checkbox state
 * survives page flips. Shortcuts: y/n answer, space toggles, enter commits.
 */

import * as actions from "./actions.js";
import type { SessionController } from "./controller.js";
import type { SessionResult, TaskView } from "./types.js";
import {
  BTN_CLEAN_MIXED,
  BTN_DONE_LOCAL,
  BTN_GLOBAL_MERGE,
  BTN_LINK,
  BTN_MARK_VALUES,
  BTN_NEW_CLUSTER,
  BTN_NO,
  BTN_OLD_CLUSTER,
  BTN_YES,
} from "./types.js";

const PAGE_SIZE = 50;

interface ViewState {
  page: number;
  checked: Set<number>;
  links: Array<[number, number]>;
  pendingClick: number | null;
  gridChecks: Map<number, number[]>;
  activeColumn: number | null;
  scannedRows: number;
}

export class TaskRenderer {
  private state: ViewState = freshState();
  private taskId: string | null = null;
  private keyHandler: ((ev: KeyboardEvent) => void) | null = null;

  constructor(private root: HTMLElement, private controller: SessionController) {}

  showWaiting(stage: string | undefined): void {
    this.detachKeys();
    this.root.innerHTML = "";
    const box = el("div", "waiting");
    box.append(el("h2", "", "Waiting for your teammates"), el(
      "p", "", stage ? `stage: ${stage}` : "the next task will appear automatically"));
    this.root.append(box);
  }

  showDone(result: SessionResult | undefined): void {
    this.detachKeys();
    this.root.innerHTML = "";
    const box = el("div", "done");
    box.append(el("h2", "", "Session complete"));
    if (result?.precision !== undefined) {
      box.append(el("p", "", `precision ${result.precision} · recall ${result.recall}`));
    }
    if (result?.rows) {
      const csv = ["value,cluster_id,canonical",
        ...result.rows.map((r) => r.map(csvCell).join(","))].join("\n");
      const link = el("a", "download", "Download partition CSV") as HTMLAnchorElement;
      link.href = URL.createObjectURL(new Blob([csv], { type: "text/csv" }));
      link.download = "partition.csv";
      box.append(link);
    }
    this.root.append(box);
  }

  showError(message: string): void {
    const note = el("p", "error", message);
    this.root.prepend(note);
    setTimeout(() => note.remove(), 4000);
  }

  showTask(task: TaskView): void {
    if (task.id !== this.taskId) {
      this.state = freshState();
      this.taskId = task.id;
    }
    this.detachKeys();
    this.root.innerHTML = "";
    this.root.append(this.header(task));
    switch (task.kind) {
      case "isPureQuestion":
      case "isPureCluster":
      case "matchPair":
        this.renderYesNo(task);
        break;
      case "findDomAndMark":
        this.renderFindDom(task);
        break;
      case "markValues":
      case "purityMark":
        this.renderMark(task);
        break;
      case "findDomSmall":
      case "findDomLarge":
        this.renderSelectOne(task);
        break;
      case "localMergeScan":
        this.renderLocalMerge(task);
        break;
      case "globalMergeGrid":
      case "setMergeScan":
        this.renderGrid(task);
        break;
      default:
        this.root.append(el("p", "error", `unknown task kind ${task.kind}`));
    }
  }

  private header(task: TaskView): HTMLElement {
    const head = el("div", "task-header");
    const progress = task.progress ?? {};
    head.append(el("h2", "", taskTitle(task.kind)));
    const bits: string[] = [];
    if (progress["phase"]) bits.push(`phase ${progress["phase"]}`);
    if (progress["clusters_remaining"] !== undefined) {
      bits.push(`${progress["clusters_remaining"]} clusters left`);
    }
    if (progress["task_index"] !== undefined) {
      bits.push(`task ${Number(progress["task_index"]) + 1} of ${progress["task_count"]}`);
    }
    if (bits.length) head.append(el("p", "progress", bits.join(" · ")));
    return head;
  }

  // -- simple yes/no displays -------------------------------------------------

  private renderYesNo(task: TaskView): void {
    this.root.append(this.valueList(task, { checkboxes: false }));
    const yes = this.button(BTN_YES, () => this.commitYesNo(task, true));
    const no = this.button(BTN_NO, () => this.commitYesNo(task, false));
    this.root.append(buttonRow([yes, no]));
    this.attachKeys((ev) => {
      if (ev.key === "y") this.commitYesNo(task, true);
      if (ev.key === "n") this.commitYesNo(task, false);
    });
  }

  private commitYesNo(task: TaskView, yes: boolean): void {
    if (task.kind === "isPureQuestion") {
      void this.controller.commit(actions.pureAnswer(task, yes));
    } else {
      void this.controller.commit(
        actions.calibrationAnswer(task, this.elapsed(task), { answerYes: yes }));
    }
  }

  private renderFindDom(task: TaskView): void {
    this.root.append(el(
      "p", "hint",
      "Find the entity that dominates this cluster, then choose how to clean it."));
    this.root.append(this.valueList(task, { checkboxes: false }));
    this.root.append(buttonRow([
      this.button(BTN_MARK_VALUES, () =>
        void this.controller.commit(actions.splitChoice(task, BTN_MARK_VALUES))),
      this.button(BTN_CLEAN_MIXED, () =>
        void this.controller.commit(actions.splitChoice(task, BTN_CLEAN_MIXED))),
    ]));
  }

  private renderMark(task: TaskView): void {
    this.root.append(this.valueList(task, { checkboxes: true }));
    if (task.kind === "markValues") {
      this.root.append(buttonRow([
        this.button(BTN_NEW_CLUSTER, () => this.commitMark(task, BTN_NEW_CLUSTER)),
        this.button(BTN_OLD_CLUSTER, () => this.commitMark(task, BTN_OLD_CLUSTER)),
      ]));
    } else {
      this.root.append(buttonRow([this.button("submit", () =>
        void this.controller.commit(actions.calibrationAnswer(
          task, this.elapsed(task), { markedIds: [...this.state.checked] })))]));
    }
    this.attachKeys((ev) => {
      if (ev.key === "Enter" && task.kind === "markValues") {
        this.commitMark(task, BTN_NEW_CLUSTER);
      }
    });
  }

  private commitMark(task: TaskView, button: string): void {
    void this.controller.commit(
      actions.markSubmission(task, [...this.state.checked].sort((a, b) => a - b), button));
  }

  private renderSelectOne(task: TaskView): void {
    this.root.append(el("p", "hint", "Select one value of the dominating entity."));
    const list = this.valueList(task, { checkboxes: false, selectable: true });
    this.root.append(list);
  }

  // -- local merge -------------------------------------------------------------

  private renderLocalMerge(task: TaskView): void {
    this.root.append(el(
      "p", "hint",
      "Click a value, then the earlier matching value, then the link button."));
    const list = this.valueList(task, { checkboxes: false, clickable: true });
    this.root.append(list);
    const linkButton = this.button(BTN_LINK, () => this.tryLink(task));
    const doneButton = this.button(BTN_DONE_LOCAL, () =>
      void this.controller.commit(actions.linkSubmission(task, this.state.links)));
    this.root.append(el("p", "links",
      `${this.state.links.length} link(s) so far`));
    this.root.append(buttonRow([linkButton, doneButton]));
    this.attachKeys((ev) => {
      if (ev.key === "Enter") {
        void this.controller.commit(actions.linkSubmission(task, this.state.links));
      }
    });
  }

  private tryLink(task: TaskView): void {
    const selected = [...this.state.checked];
    if (selected.length !== 2 || this.state.pendingClick === null) {
      this.showError("click the current value, then the earlier one, then link");
      return;
    }
    const current = this.state.pendingClick === selected[0] ? selected[1] : selected[0];
    const earlier = this.state.pendingClick;
    const pos = new Map(task.value_ids.map((id, i) => [id, i]));
    const pair: [number, number] =
      (pos.get(current) ?? 0) > (pos.get(earlier) ?? 0) ? [current, earlier] : [earlier, current];
    this.state.links.push(pair);
    this.state.checked.clear();
    this.state.pendingClick = null;
    this.showTask(task);
  }

  // -- global merge grid ---------------------------------------------------------

  private renderGrid(task: TaskView): void {
    const columns = task.columns ?? [];
    const columnValues = task.column_values ?? [];
    const rows = task.rows ?? [];
    const rowValues = task.row_values ?? [];
    const table = el("table", "grid") as HTMLTableElement;
    const head = table.createTHead().insertRow();
    head.append(el("th", "", "value"));
    columns.forEach((c, i) => head.append(el("th", "", columnValues[i] ?? String(c))));
    const body = table.createTBody();
    const page = this.state.page;
    const pageRows = rows.slice(page * PAGE_SIZE, (page + 1) * PAGE_SIZE);
    pageRows.forEach((rowId, i) => {
      const tr = body.insertRow();
      tr.append(el("td", "", rowValues[page * PAGE_SIZE + i] ?? String(rowId)));
      for (const column of columns) {
        const cell = tr.insertCell();
        const box = document.createElement("input");
        box.type = "checkbox";
        box.checked = (this.state.gridChecks.get(column) ?? []).includes(rowId);
        box.addEventListener("change", () => {
          const current = this.state.gridChecks.get(column) ?? [];
          this.state.gridChecks.set(
            column,
            box.checked ? [...current, rowId] : current.filter((r) => r !== rowId));
        });
        cell.append(box);
      }
    });
    this.root.append(table);
    this.root.append(this.pager(rows.length, task));
    this.root.append(buttonRow([
      this.button(BTN_GLOBAL_MERGE, () =>
        void this.controller.commit(
          actions.gridSubmission(task, this.state.gridChecks))),
    ]));
    this.attachKeys((ev) => {
      if (ev.key === "Enter") {
        void this.controller.commit(actions.gridSubmission(task, this.state.gridChecks));
      }
    });
  }

  // -- shared widgets -----------------------------------------------------------

  private valueList(
    task: TaskView,
    opts: { checkboxes: boolean; clickable?: boolean; selectable?: boolean },
  ): HTMLElement {
    const wrapper = el("div", "values");
    const page = this.state.page;
    const ids = task.value_ids.slice(page * PAGE_SIZE, (page + 1) * PAGE_SIZE);
    const list = el("ul", "value-list");
    ids.forEach((id, i) => {
      const label = task.values[page * PAGE_SIZE + i] ?? String(id);
      const item = el("li");
      if (opts.checkboxes) {
        const box = document.createElement("input");
        box.type = "checkbox";
        box.checked = this.state.checked.has(id);
        box.addEventListener("change", () => {
          if (box.checked) this.state.checked.add(id);
          else this.state.checked.delete(id);
        });
        item.append(box);
      }
      item.append(el("span", "value", label));
      if (opts.clickable) {
        item.classList.add("clickable");
        item.addEventListener("click", () => {
          if (this.state.checked.has(id)) {
            this.state.checked.delete(id);
            if (this.state.pendingClick === id) this.state.pendingClick = null;
          } else if (this.state.checked.size < 2) {
            this.state.checked.add(id);
            if (this.state.checked.size === 2) this.state.pendingClick = id;
          }
          item.classList.toggle("selected", this.state.checked.has(id));
        });
      }
      if (opts.selectable) {
        item.classList.add("clickable");
        item.addEventListener("click", () =>
          void this.controller.commit(actions.calibrationAnswer(
            task, this.elapsed(task), { selectedId: id })));
      }
      list.append(item);
    });
    wrapper.append(list);
    wrapper.append(this.pager(task.value_ids.length, task));
    return wrapper;
  }

  private pager(total: number, task: TaskView): HTMLElement {
    const pages = Math.max(1, Math.ceil(total / PAGE_SIZE));
    const nav = el("div", "pager");
    if (pages <= 1) return nav;
    const label = el("span", "", `page ${this.state.page + 1} / ${pages}`);
    const prev = this.button("prev", () => {
      this.state.page = Math.max(0, this.state.page - 1);
      this.showTask(task);
    });
    const next = this.button("next", () => {
      this.state.page = Math.min(pages - 1, this.state.page + 1);
      this.showTask(task);
    });
    nav.append(prev, label, next);
    return nav;
  }

  private button(label: string, onClick: () => void): HTMLButtonElement {
    const b = document.createElement("button");
    b.textContent = label;
    b.addEventListener("click", onClick);
    return b;
  }

  private elapsed(task: TaskView): number {
    return this.controller.timer.stop(task.id);
  }

  private attachKeys(handler: (ev: KeyboardEvent) => void): void {
    this.detachKeys();
    this.keyHandler = handler;
    document.addEventListener("keydown", handler);
  }

  private detachKeys(): void {
    if (this.keyHandler) {
      document.removeEventListener("keydown", this.keyHandler);
      this.keyHandler = null;
    }
  }
}

function freshState(): ViewState {
  return {
    page: 0,
    checked: new Set(),
    links: [],
    pendingClick: null,
    gridChecks: new Map(),
    activeColumn: null,
    scannedRows: 0,
  };
}

function taskTitle(kind: string): string {
  const titles: Record<string, string> = {
    isPureQuestion: "Is this cluster pure?",
    findDomAndMark: "Inspect the cluster",
    markValues: "Mark values to move",
    localMergeScan: "Local merge: link matching neighbours",
    globalMergeGrid: "Global merge: check matching rows",
    setMergeScan: "Team merge: check matching rows",
    matchPair: "Do these two values match?",
    purityMark: "Mark every value of the dominating entity",
    isPureCluster: "Is this cluster pure?",
    findDomSmall: "Pick a value of the dominating entity",
    findDomLarge: "Pick a value of the dominating entity",
  };
  return titles[kind] ?? kind;
}

function buttonRow(buttons: HTMLElement[]): HTMLElement {
  const row = el("div", "buttons");
  row.append(...buttons);
  return row;
}

function el(tag: string, className = "", text = ""): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function csvCell(cell: string | number): string {
  const s = String(cell);
  return /[",\n]/.test(s) ? `"${s.replace(/"/g, '""')}"` : s;
}
