/** Two-stage classification flow.
 *
 * Stage 1 decides bug vs not-a-bug against the stage-1 rule sections:
 * picking a mislabeled-section rule settles the verdict as mislabeled
 * and skips stage 2; picking a bug-section rule advances to stage 2.
 * Stage 2 offers the extrinsic rules; choosing one settles the verdict
 * as extrinsic, while confirming with none selected defaults to
 * intrinsic under the catalog's single default rule.
 *
 * The submission builder enforces the same verdict/rule-section pairing
 * the server checks, so a mismatched submission is unrepresentable on
 * the happy path and rejected with SectionMismatchError otherwise.
 */

import type {
  LabelSubmission,
  Rule,
  RuleCatalog,
  Verdict,
} from "./types.js";

export class SectionMismatchError extends Error {}

export class FlowError extends Error {}

export type Stage = "bug_or_not" | "cause" | "ready";

export interface FlowState {
  stage: Stage;
  stageOneRule: string | null;
  verdict: Verdict | null;
  ruleId: string | null;
}

const SECTION_FOR_VERDICT: Record<Verdict, string> = {
  mislabeled: "mislabeled",
  extrinsic: "extrinsic",
  intrinsic: "intrinsic",
};

export function ruleById(catalog: RuleCatalog, ruleId: string): Rule {
  const rule = catalog.rules.find((r) => r.rule_id === ruleId);
  if (!rule) {
    throw new FlowError(`unknown rule ${ruleId}`);
  }
  return rule;
}

export function rulesInSection(catalog: RuleCatalog, section: string): Rule[] {
  return catalog.rules.filter((r) => r.section === section);
}

export function defaultIntrinsicRule(catalog: RuleCatalog): Rule {
  const rules = rulesInSection(catalog, "intrinsic");
  if (rules.length !== 1 || !rules[0]) {
    throw new FlowError("catalog must hold exactly one default intrinsic rule");
  }
  return rules[0];
}

export function startFlow(): FlowState {
  return { stage: "bug_or_not", stageOneRule: null, verdict: null, ruleId: null };
}

/** Stage 1: cite a mislabeled-section or bug-section rule. */
export function chooseStageOne(
  state: FlowState,
  catalog: RuleCatalog,
  ruleId: string,
): FlowState {
  if (state.stage !== "bug_or_not") {
    throw new FlowError("stage 1 already decided; restart the flow to change it");
  }
  const rule = ruleById(catalog, ruleId);
  if (rule.section === "mislabeled") {
    return { stage: "ready", stageOneRule: ruleId, verdict: "mislabeled", ruleId };
  }
  if (rule.section === "bug") {
    return { stage: "cause", stageOneRule: ruleId, verdict: null, ruleId: null };
  }
  throw new SectionMismatchError(
    `stage 1 takes bug/mislabeled rules, not section '${rule.section}'`,
  );
}

/** Stage 2: cite an extrinsic rule, or pass null for the intrinsic default. */
export function chooseStageTwo(
  state: FlowState,
  catalog: RuleCatalog,
  ruleId: string | null,
): FlowState {
  if (state.stage !== "cause") {
    throw new FlowError("stage 2 is only reachable after a bug-section stage-1 pick");
  }
  if (ruleId === null) {
    const fallback = defaultIntrinsicRule(catalog);
    return { ...state, stage: "ready", verdict: "intrinsic", ruleId: fallback.rule_id };
  }
  const rule = ruleById(catalog, ruleId);
  if (rule.section !== "extrinsic") {
    throw new SectionMismatchError(
      `stage 2 takes extrinsic rules, not section '${rule.section}'`,
    );
  }
  return { ...state, stage: "ready", verdict: "extrinsic", ruleId };
}

/** Mirror of the server's section check. */
export function ruleMatchesVerdict(
  catalog: RuleCatalog,
  verdict: Verdict,
  ruleId: string,
): boolean {
  return ruleById(catalog, ruleId).section === SECTION_FOR_VERDICT[verdict];
}

export function buildSubmission(
  state: FlowState,
  catalog: RuleCatalog,
  issueId: string,
  rater: string,
  rationale = "",
  expectedToken?: string,
): LabelSubmission {
  if (state.stage !== "ready" || state.verdict === null || state.ruleId === null) {
    throw new FlowError("flow not finished; nothing to submit");
  }
  if (!ruleMatchesVerdict(catalog, state.verdict, state.ruleId)) {
    throw new SectionMismatchError(
      `rule ${state.ruleId} cannot justify verdict ${state.verdict}`,
    );
  }
  const submission: LabelSubmission = {
    issue_id: issueId,
    rater,
    verdict: state.verdict,
    rule_id: state.ruleId,
    rationale,
  };
  if (expectedToken !== undefined) {
    submission.expected_token = expectedToken;
  }
  return submission;
}
