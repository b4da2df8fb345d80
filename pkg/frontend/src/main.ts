/** Browser bootstrap: wires the flow, task pane, and dashboard. */

import { ApiClient } from "./api.js";
import { buildDashboard } from "./dashboard.js";
import {
  buildSubmission,
  chooseStageOne,
  chooseStageTwo,
  startFlow,
  type FlowState,
} from "./flow.js";
import { renderDashboard, renderTask } from "./render.js";
import type { LabelRecord, Task } from "./types.js";

const api = new ApiClient("");

let rater = localStorage.getItem("jitlab-rater") ?? "";
let task: Task = { done: true };
let flow: FlowState = startFlow();
let inlineError: string | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function selectedRule(name: string): string | null {
  const checked = document.querySelector<HTMLInputElement>(
    `input[name="${name}"]:checked`,
  );
  return checked ? checked.value : null;
}

async function refreshTask(): Promise<void> {
  const result = await api.nextTask(rater);
  task = result.body;
  flow = startFlow();
  inlineError = null;
  drawTask();
}

function drawTask(): void {
  el("task-root").innerHTML = renderTask(task, flow, inlineError);
}

async function submit(expectedToken?: string): Promise<void> {
  const rationale = (document.getElementById("rationale") as HTMLTextAreaElement | null)
    ?.value ?? "";
  let submission;
  try {
    submission = buildSubmission(
      flow,
      task.rules ?? { rules: [] },
      task.issue_id ?? "",
      rater,
      rationale,
      expectedToken,
    );
  } catch (err) {
    inlineError = String(err);
    drawTask();
    return;
  }
  const result = await api.postLabel(submission);
  if (result.status === 201) {
    await refreshTask();
    await refreshDashboard();
    return;
  }
  if (result.status === 409 && task.prior_label) {
    // overwrite needs the audit token; confirm and retry once
    const record = task.prior_label as LabelRecord;
    if (confirm("You already labeled this issue. Overwrite your previous verdict?")) {
      await submit(record.token);
      return;
    }
  }
  const body = result.body as { error?: string };
  inlineError = `${result.status}: ${body.error ?? "request failed"}`;
  drawTask(); // selections and rationale stay in the DOM
}

async function refreshDashboard(): Promise<void> {
  try {
    const [raw, agreement, disagreements, progress] = await Promise.all([
      api.agreementRaw(),
      api.agreement(),
      api.disagreements(),
      api.progress(),
    ]);
    el("dashboard-root").innerHTML = renderDashboard(
      buildDashboard(
        raw.text,
        agreement.body,
        disagreements.body.disagreements,
        progress.body,
      ),
    );
  } catch {
    const previous = el("dashboard-root").querySelector(".dashboard");
    el("dashboard-root").innerHTML =
      `<div class="stale">API unreachable — showing last known data</div>` +
      (previous?.outerHTML ?? "");
  }
}

function wireEvents(): void {
  el("task-root").addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const catalog = task.rules ?? { rules: [] };
    try {
      if (target.id === "confirm-stage1") {
        const rule = selectedRule("stage1");
        if (!rule) {
          inlineError = "pick a step-1 rule first";
        } else {
          flow = chooseStageOne(flow, catalog, rule);
          inlineError = null;
        }
        drawTask();
      } else if (target.id === "restart-flow") {
        flow = startFlow();
        inlineError = null;
        drawTask();
      } else if (target.id === "submit-intrinsic") {
        flow = chooseStageTwo(flow, catalog, null);
        void submit();
      } else if (target.id === "submit-extrinsic") {
        const rule = selectedRule("stage2");
        if (!rule) {
          inlineError = "pick an extrinsic rule or use the intrinsic default";
          drawTask();
        } else {
          flow = chooseStageTwo(flow, catalog, rule);
          void submit();
        }
      } else if (target.id === "submit-mislabeled") {
        void submit();
      }
    } catch (err) {
      inlineError = String(err);
      drawTask();
    }
  });

  el("rater-form").addEventListener("submit", (event) => {
    event.preventDefault();
    rater = (el("rater-name") as HTMLInputElement).value.trim();
    localStorage.setItem("jitlab-rater", rater);
    void refreshTask();
  });

  el("dashboard-refresh").addEventListener("click", () => void refreshDashboard());
}

export function start(): void {
  wireEvents();
  (el("rater-name") as HTMLInputElement).value = rater;
  if (rater) {
    void refreshTask();
  }
  void refreshDashboard();
  setInterval(() => void refreshDashboard(), 15_000);
}

start();
