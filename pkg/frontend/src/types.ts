/** JSON shapes served by the session API. */

export type TaskKind =
  | "isPureQuestion"
  | "findDomAndMark"
  | "markValues"
  | "localMergeScan"
  | "globalMergeGrid"
  | "setMergeScan"
  | "matchPair"
  | "purityMark"
  | "isPureCluster"
  | "findDomSmall"
  | "findDomLarge";

export interface TaskView {
  id: string;
  kind: TaskKind | string;
  phase?: string;
  value_ids: number[];
  values: string[];
  allowed_buttons: string[];
  cluster_ref?: string | null;
  columns?: number[];
  column_values?: string[];
  rows?: number[];
  row_values?: string[];
  progress?: Record<string, unknown>;
  cap?: number | null;
}

export type SessionStatus = "task" | "waiting" | "done";

export interface TaskResponse {
  status: SessionStatus;
  slot: number;
  stage?: string;
  task?: TaskView;
}

export interface ActionBody {
  task_id: string;
  slot?: number;
  yes?: boolean;
  examined?: number;
  button?: string;
  marked?: number[];
  links?: Array<[number, number]>;
  checks?: Array<[number, number[]]>;
  scanned_rows?: number;
  elapsed_seconds?: number;
  answer_yes?: boolean;
  marked_ids?: number[];
  selected_id?: number;
}

export interface SessionResult {
  rows?: Array<[string, number, string]>;
  total_seconds?: number;
  precision?: number;
  recall?: number;
  gold_sequence?: boolean;
  params?: unknown;
  selected_cap?: number;
}

export interface CreateSessionRequest {
  dataset_id: string;
  mode: "calibrate" | "clean" | "team";
  params?: unknown;
  calibration_session_id?: string;
  cap?: number | "auto";
  k?: number;
  seed?: number;
}

// Button captions, exactly as the procedure defines them.
export const BTN_YES = "yes";
export const BTN_NO = "no";
export const BTN_MARK_VALUES = "mark values";
export const BTN_CLEAN_MIXED = "clean mixed cluster";
export const BTN_NEW_CLUSTER = "create/clean new cluster";
export const BTN_OLD_CLUSTER = "create new cluster / clean old cluster";
export const BTN_LINK = "link";
export const BTN_DONE_LOCAL = "done local merging";
export const BTN_GLOBAL_MERGE = "global merge";
