/** Payload shapes of the curation HTTP API. */

export type Verdict = "intrinsic" | "extrinsic" | "mislabeled";

export type RuleSection = "mislabeled" | "bug" | "extrinsic" | "intrinsic";

export interface Rule {
  rule_id: string;
  section: RuleSection;
  text: string;
}

export interface RuleCatalog {
  rules: Rule[];
}

export interface LabelRecord {
  issue_id: string;
  rater: string;
  verdict: Verdict;
  rule_id: string;
  rationale: string;
  labeled_time: number;
  token: string;
}

export interface Task {
  done: boolean;
  issue_id?: string;
  title?: string;
  description?: string;
  reported_time?: number | null;
  bfc_diffs?: string[];
  rules?: RuleCatalog;
  prior_label?: LabelRecord | null;
  disputed?: boolean;
  labels?: LabelRecord[];
}

export interface AgreementReport {
  alpha_bug_vs_not: number | null;
  alpha_intrinsic_vs_extrinsic: number | null;
  disagreements: string[];
  coverage: number;
  n_double_rated: number;
}

export interface Disagreement {
  issue_id: string;
  labels: LabelRecord[];
}

export interface Progress {
  issues_total: number;
  issues_labeled: number;
  per_rater: Record<string, number>;
  disagreements: number;
}

export interface LabelSubmission {
  issue_id: string;
  rater: string;
  verdict: Verdict;
  rule_id: string;
  rationale?: string;
  labeled_time?: number;
  expected_token?: string;
}
