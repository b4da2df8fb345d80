/** Dashboard view-model.
 *
 * Statistics are never computed or re-serialized here: the alpha values
 * shown are the literal byte sequences from the server's JSON body
 * (re-stringifying a parsed double can change its spelling, e.g. 1.0
 * becoming "1"). Parsing is only used for structure (lists, counts).
 */

import type { AgreementReport, Disagreement, Progress } from "./types.js";

export interface DashboardView {
  alphaBugVsNot: string;
  alphaIntrinsicVsExtrinsic: string;
  coverage: string;
  nDoubleRated: number;
  disagreements: Disagreement[];
  perRater: Record<string, number>;
  issuesTotal: number;
  issuesLabeled: number;
  stale: boolean;
}

/** Literal value text of a top-level key inside a JSON object body. */
export function jsonLiteral(rawBody: string, key: string): string {
  const pattern = new RegExp(`"${key}"\\s*:\\s*("(?:[^"\\\\]|\\\\.)*"|[^,}\\]]+)`);
  const match = rawBody.match(pattern);
  if (!match || match[1] === undefined) {
    return "n/a";
  }
  return match[1].trim();
}

export function formatAlpha(rawBody: string, key: string): string {
  const literal = jsonLiteral(rawBody, key);
  return literal === "null" ? "not computable" : literal;
}

export function buildDashboard(
  agreementRaw: string,
  agreement: AgreementReport,
  disagreements: Disagreement[],
  progress: Progress,
  stale = false,
): DashboardView {
  return {
    alphaBugVsNot: formatAlpha(agreementRaw, "alpha_bug_vs_not"),
    alphaIntrinsicVsExtrinsic: formatAlpha(agreementRaw, "alpha_intrinsic_vs_extrinsic"),
    coverage: jsonLiteral(agreementRaw, "coverage"),
    nDoubleRated: agreement.n_double_rated,
    disagreements,
    perRater: progress.per_rater,
    issuesTotal: progress.issues_total,
    issuesLabeled: progress.issues_labeled,
    stale,
  };
}
