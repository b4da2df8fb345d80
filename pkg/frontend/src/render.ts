/** HTML string renderers for the workbench (framework-free). */

import type { DashboardView } from "./dashboard.js";
import { parseDiff } from "./diff.js";
import { rulesInSection, type FlowState } from "./flow.js";
import type { RuleCatalog, Task } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function renderDiff(text: string): string {
  const rows = parseDiff(text)
    .map((line) => `<div class="diff-${line.kind}">${escapeHtml(line.text) || "&nbsp;"}</div>`)
    .join("");
  return `<pre class="diff">${rows}</pre>`;
}

function ruleChecklist(
  catalog: RuleCatalog,
  sections: string[],
  name: string,
  checked: string | null,
): string {
  const blocks = sections.map((section) => {
    const items = rulesInSection(catalog, section)
      .map(
        (rule) => `
      <label class="rule">
        <input type="radio" name="${name}" value="${rule.rule_id}"
               ${rule.rule_id === checked ? "checked" : ""}>
        <b>${rule.rule_id}</b> ${escapeHtml(rule.text)}
      </label>`,
      )
      .join("");
    return `<fieldset class="section-${section}"><legend>${section}</legend>${items}</fieldset>`;
  });
  return blocks.join("");
}

export function renderTask(task: Task, state: FlowState, error: string | null): string {
  if (task.done) {
    return `<section class="done"><h2>All caught up</h2>
      <p>No unlabeled or disputed issues remain for you.</p></section>`;
  }
  const catalog = task.rules ?? { rules: [] };
  const diffs = (task.bfc_diffs ?? [])
    .map((d) => renderDiff(d))
    .join("<hr>") || "<p class='muted'>no fixing-change diff available</p>";
  const prior = task.prior_label
    ? `<p class="prior">your previous verdict: <b>${task.prior_label.verdict}</b>
       (${task.prior_label.rule_id}) — submitting again overwrites it</p>`
    : "";
  const disputedBanner = task.disputed
    ? `<div class="disputed">Disputed issue — current labels:
        ${(task.labels ?? [])
          .map((l) => `<div><b>${escapeHtml(l.rater)}</b>: ${l.verdict} (${l.rule_id}) — ${escapeHtml(l.rationale)}</div>`)
          .join("")}
       </div>`
    : "";
  const stageTwo =
    state.stage === "cause" || (state.stage === "ready" && state.verdict !== "mislabeled")
      ? `<div id="stage2">
          <h3>Step 2 — external cause?</h3>
          ${ruleChecklist(catalog, ["extrinsic"], "stage2", state.verdict === "extrinsic" ? state.ruleId : null)}
          <p class="muted">no selection means: no evidence of an external cause (intrinsic)</p>
          <button id="submit-intrinsic">No external evidence — intrinsic</button>
          <button id="submit-extrinsic">Submit extrinsic verdict</button>
        </div>`
      : "";
  const stageOneDone = state.stage !== "bug_or_not";
  return `<section class="task" data-issue="${escapeHtml(task.issue_id ?? "")}">
    ${disputedBanner}
    <div class="columns">
      <div class="issue-pane">
        <h2>Issue ${escapeHtml(task.issue_id ?? "")}: ${escapeHtml(task.title ?? "")}</h2>
        <p>${escapeHtml(task.description ?? "")}</p>
        ${prior}
      </div>
      <div class="diff-pane"><h3>Fixing change(s)</h3>${diffs}</div>
    </div>
    <div id="stage1" ${stageOneDone ? 'class="locked"' : ""}>
      <h3>Step 1 — bug report or not?</h3>
      ${ruleChecklist(catalog, ["mislabeled", "bug"], "stage1", state.stageOneRule)}
      <button id="confirm-stage1" ${stageOneDone ? "disabled" : ""}>Confirm step 1</button>
      <button id="restart-flow" ${stageOneDone ? "" : "disabled"}>Restart</button>
    </div>
    ${stageTwo}
    ${state.stage === "ready" && state.verdict === "mislabeled"
      ? `<button id="submit-mislabeled">Submit mislabeled verdict</button>`
      : ""}
    <textarea id="rationale" placeholder="rationale (kept with your verdict)"></textarea>
    ${error ? `<div class="error">${escapeHtml(error)}</div>` : ""}
  </section>`;
}

export function renderDashboard(view: DashboardView): string {
  const staleBanner = view.stale
    ? `<div class="stale">API unreachable — showing last known data</div>`
    : "";
  const raters = Object.entries(view.perRater)
    .map(([rater, n]) => `<li><b>${escapeHtml(rater)}</b>: ${n} labeled</li>`)
    .join("");
  const queue = view.disagreements
    .map(
      (d) => `<details class="disagreement" data-issue="${escapeHtml(d.issue_id)}">
        <summary>issue ${escapeHtml(d.issue_id)}</summary>
        <div class="side-by-side">
          ${d.labels
            .map(
              (l) => `<div class="rationale-card">
                <h4>${escapeHtml(l.rater)} — ${l.verdict} (${l.rule_id})</h4>
                <p>${escapeHtml(l.rationale) || "<i>no rationale</i>"}</p>
              </div>`,
            )
            .join("")}
        </div>
      </details>`,
    )
    .join("");
  return `<section class="dashboard">
    ${staleBanner}
    <h2>Agreement</h2>
    <dl>
      <dt>&alpha; bug vs not</dt><dd class="alpha">${view.alphaBugVsNot}</dd>
      <dt>&alpha; intrinsic vs extrinsic</dt><dd class="alpha">${view.alphaIntrinsicVsExtrinsic}</dd>
      <dt>double-rated coverage</dt><dd>${view.coverage}</dd>
      <dt>double-rated issues</dt><dd>${view.nDoubleRated}</dd>
    </dl>
    <h2>Progress (${view.issuesLabeled}/${view.issuesTotal} issues labeled)</h2>
    <ul>${raters}</ul>
    <h2>Disagreement queue (${view.disagreements.length})</h2>
    ${queue || "<p class='muted'>none — raters agree everywhere</p>"}
  </section>`;
}
