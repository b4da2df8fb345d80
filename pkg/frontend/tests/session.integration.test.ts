/**
 * Full labeling session against the real backend.
 *
 * Spawns `python3 -m jitlab.cli label serve` on a loopback port, drives
 * two simulated raters through the two-stage flow over HTTP, and checks
 * that the server's agreement report reproduces the known coincidence
 * fixture (alpha = 16/30 on bug-vs-not) and that the dashboard shows
 * the server's bytes verbatim.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { buildDashboard } from "../src/dashboard.js";
import {
  buildSubmission,
  chooseStageOne,
  chooseStageTwo,
  startFlow,
  type FlowState,
} from "../src/flow.js";
import type { LabelRecord, RuleCatalog, Task, Verdict } from "../src/types.js";

let server: ChildProcess;
let api: ApiClient;

function issueLines(): string {
  const rows = [];
  for (let i = 0; i < 4; i += 1) {
    rows.push(
      JSON.stringify({
        issue_id: String(i),
        reported_time: 1000 + i,
        title: `fixture issue ${i}`,
        description: `symptom report ${i}`,
        reporter: "qa",
      }),
    );
  }
  return rows.join("\n") + "\n";
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "curation-ui-"));
  const issues = join(dir, "issues.ndjson");
  writeFileSync(issues, issueLines());
  server = spawn(
    "python3",
    ["-m", "jitlab.cli", "label", "serve",
     "--store", join(dir, "store.ndjson"), "--issues", issues],
    { stdio: ["ignore", "pipe", "inherit"] },
  );
  const url = await new Promise<string>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server did not start")), 20_000);
    server.stdout!.on("data", (chunk: Buffer) => {
      const match = chunk.toString().match(/listening on (http:\/\/[^\s]+)/);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]!);
      }
    });
    server.on("exit", (code) => reject(new Error(`server exited early: ${code}`)));
  });
  api = new ApiClient(url);
}, 30_000);

afterAll(() => {
  server?.kill();
});

/** Drive the two-stage flow to a verdict the way the UI would. */
function flowFor(catalog: RuleCatalog, verdict: Verdict): FlowState {
  if (verdict === "mislabeled") {
    return chooseStageOne(startFlow(), catalog, "M2");
  }
  const staged = chooseStageOne(startFlow(), catalog, "B2");
  return verdict === "extrinsic"
    ? chooseStageTwo(staged, catalog, "E1")
    : chooseStageTwo(staged, catalog, null);
}

async function labelThrough(
  rater: string,
  issueId: string,
  verdict: Verdict,
  catalog: RuleCatalog,
): Promise<LabelRecord> {
  const state = flowFor(catalog, verdict);
  const submission = buildSubmission(state, catalog, issueId, rater, `${rater} on ${issueId}`);
  const result = await api.postLabel(submission);
  expect(result.status).toBe(201);
  return result.body as LabelRecord;
}

describe("two-rater session over the live API", () => {
  // bug/not pattern (A,A),(A,A),(B,B),(A,B): alpha = 1 - 0.25/(30/56) = 16/30
  const verdictsAlice: Verdict[] = ["intrinsic", "intrinsic", "mislabeled", "intrinsic"];
  const verdictsBob: Verdict[] = ["intrinsic", "intrinsic", "mislabeled", "mislabeled"];

  it("labels every issue through the flow and reproduces the agreement report", async () => {
    const first = await api.nextTask("alice");
    expect(first.status).toBe(200);
    expect(first.body.done).toBe(false);
    expect(first.body.issue_id).toBe("0");
    const catalog = first.body.rules!;
    expect(catalog.rules.length).toBeGreaterThan(0);

    for (let i = 0; i < 4; i += 1) {
      await labelThrough("alice", String(i), verdictsAlice[i]!, catalog);
      await labelThrough("bob", String(i), verdictsBob[i]!, catalog);
    }

    const agreement = await api.agreement();
    expect(agreement.status).toBe(200);
    expect(agreement.body.alpha_bug_vs_not).toBeCloseTo(16 / 30, 9);
    expect(agreement.body.alpha_intrinsic_vs_extrinsic).toBe(1.0);
    expect(agreement.body.disagreements).toEqual(["3"]);
    expect(agreement.body.n_double_rated).toBe(4);
    expect(agreement.body.coverage).toBe(1.0);
  }, 30_000);

  it("dashboard alpha equals the server bytes exactly", async () => {
    const raw = await api.agreementRaw();
    const agreement = await api.agreement();
    const disagreements = await api.disagreements();
    const progress = await api.progress();
    const view = buildDashboard(
      raw.text,
      agreement.body,
      disagreements.body.disagreements,
      progress.body,
    );
    const literal = raw.text.match(/"alpha_bug_vs_not":\s*([^,}]+)/)![1]!.trim();
    expect(view.alphaBugVsNot).toBe(literal);
    expect(view.alphaBugVsNot).toBe("0.5333333333333333");
    expect(view.disagreements.map((d) => d.issue_id)).toEqual(["3"]);
  });

  it("server rejects a section mismatch the client guard already blocks", async () => {
    const task = await api.nextTask("alice");
    const catalog = (task.body.rules ?? { rules: [] }) as RuleCatalog;
    // client side: unrepresentable through the flow
    expect(() =>
      buildSubmission(
        { stage: "ready", stageOneRule: "B1", verdict: "intrinsic", ruleId: "E1" },
        catalog,
        "0",
        "mallory",
      ),
    ).toThrow();
    // bypassing the guard still dies at the server with 400
    const direct = await api.postLabel({
      issue_id: "0",
      rater: "mallory",
      verdict: "intrinsic",
      rule_id: "E1",
    });
    expect(direct.status).toBe(400);
  });

  it("overwrite after dispute resolution needs the audit token and clears the queue", async () => {
    const task = await api.nextTask("alice");
    expect(task.body.done).toBe(false);
    expect(task.body.disputed).toBe(true);
    expect(task.body.issue_id).toBe("3");
    expect(task.body.labels!.length).toBe(2);
    const catalog = task.body.rules!;

    const resolved = flowFor(catalog, "mislabeled");
    const withoutToken = buildSubmission(resolved, catalog, "3", "alice", "agreed in meeting");
    const conflicted = await api.postLabel(withoutToken);
    expect(conflicted.status).toBe(409);

    const token = task.body.prior_label!.token;
    const withToken = buildSubmission(
      resolved, catalog, "3", "alice", "agreed in meeting", token,
    );
    const accepted = await api.postLabel(withToken);
    expect(accepted.status).toBe(201);

    const queue = await api.disagreements();
    expect(queue.body.disagreements).toEqual([]);
    const done = await api.nextTask("alice");
    expect(done.body.done).toBe(true);
  }, 30_000);
});
